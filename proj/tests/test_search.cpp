/**
 * Copyright 2026 The SplitForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <sys/stat.h>

#include "splitforge/search.hpp"
#include "test_support.hpp"

namespace splitforge {
namespace {

using testing::CodeOf;
using testing::ToyChain;

const std::string kConfigs = std::string(SPLITFORGE_SOURCE_DIR) + "/configs/";

TableMockEvaluator TrendTable() { return TableMockEvaluator::FromFile(kConfigs + "resnet18_trend.json"); }
Architecture Probe() {
  std::ifstream f(kConfigs + "trend_probe.json");
  return ParseArchitecture(nlohmann::json::parse(f));
}

// Five pooled blocks of `width` channels.
Architecture Chain5(int width) { return ToyChain(3, {{width}, {width}, {width}, {width}, {width}}, 32); }

class ConstantEvaluator : public Evaluator {
 public:
  Evaluation Evaluate(const Candidate&) override {
    ++calls;
    return {0.9, std::nullopt};
  }
  std::string Name() const override { return "constant"; }
  int calls = 0;
};

TEST(TableMock, Lookup) {
  const TableMockEvaluator t = TrendTable();
  EXPECT_DOUBLE_EQ(t.Lookup(0, 2), 93.64);
  EXPECT_DOUBLE_EQ(t.Lookup(0, 1), 93.57);
  EXPECT_DOUBLE_EQ(t.Lookup(4, 8), 93.14);
  EXPECT_EQ(CodeOf([&] { t.Lookup(0, 3); }), ErrorCode::kMissingCell);
  EXPECT_EQ(CodeOf([&] { t.Lookup(5, 1); }), ErrorCode::kMissingCell);
}

TEST(TableMock, NullCellsAreMissing) {
  const auto t = TableMockEvaluator::FromJson(nlohmann::json::parse(R"({"factors":[1,2],"rows":[[90,null]]})"));
  EXPECT_DOUBLE_EQ(t.Lookup(0, 1), 90);
  EXPECT_EQ(CodeOf([&] { t.Lookup(0, 2); }), ErrorCode::kMissingCell);
  EXPECT_EQ(CodeOf([] { TableMockEvaluator::FromJson(nlohmann::json::parse(R"({"rows":[[1]]})")); }),
            ErrorCode::kParse);
}

TEST(TableMock, EvaluateReturnsFractionAndRecordsQueries) {
  TableMockEvaluator t = TrendTable();
  const Architecture a = Probe();
  Candidate c{&a, {2, 1, 1, 1, 1}, 0, 2, false, nullptr, 5};
  EXPECT_DOUBLE_EQ(t.Evaluate(c).accuracy, 0.9364);
  EXPECT_EQ(t.queries(), (std::vector<std::pair<int, int>>{{0, 2}}));
}

TEST(GreedySearch, TrendTableDefaultPolicy) {
  TableMockEvaluator t = TrendTable();
  const SearchResult r = GreedySplitSearch(Probe(), SearchConfig{}, t);
  EXPECT_EQ(r.plan.mode, SplitMode::kProposed);
  EXPECT_EQ(r.plan.factors, (std::vector<int>{8, 8, 2, 6, 8}));
  EXPECT_EQ(r.trace.plan, r.plan.factors);
  EXPECT_EQ(r.trace.evaluations, 23);
  EXPECT_LE(r.trace.evaluations, 5 * (4 + 1));
  // Block 3, factor 4: 93.38 - 92.78 = 0.60 rejects.
  bool found = false;
  for (const auto& rec : r.trace.records)
    if (rec.block == 2 && rec.factor == 4) {
      found = true;
      EXPECT_NEAR(*rec.delta, 0.60, 1e-9);
      EXPECT_EQ(rec.decision, Decision::kReject);
    }
  EXPECT_TRUE(found);
  EXPECT_DOUBLE_EQ(r.trace.final_accuracy, 93.14);
}

TEST(GreedySearch, TrendTableMaxWithinThreshold) {
  TableMockEvaluator t = TrendTable();
  SearchConfig cfg;
  cfg.policy = SearchPolicy::kMaxWithinThreshold;
  const SearchResult r = GreedySplitSearch(Probe(), cfg, t);
  EXPECT_EQ(r.plan.factors, (std::vector<int>{8, 8, 6, 6, 8}));
  EXPECT_EQ(r.trace.evaluations, 25);
}

TEST(GreedySearch, TrendTableGlobalBaseline) {
  TableMockEvaluator t = TrendTable();
  SearchConfig cfg;
  cfg.per_block_baseline = false;
  const SearchResult r = GreedySplitSearch(Probe(), cfg, t);
  EXPECT_EQ(r.plan.factors, (std::vector<int>{8, 4, 1, 2, 8}));
  for (const auto& rec : r.trace.records) EXPECT_DOUBLE_EQ(rec.baseline, 93.57);
}

TEST(GreedySearch, InfiniteThreshold) {
  TableMockEvaluator t = TrendTable();
  SearchConfig cfg;
  cfg.threshold = 101;
  EXPECT_EQ(GreedySplitSearch(Probe(), cfg, t).plan.factors, (std::vector<int>(5, 8)));
}

TEST(GreedySearch, EqualityDoesNotPass) {
  auto t = TableMockEvaluator::FromJson(nlohmann::json::parse(R"({"factors":[1,2,4,6,8],"rows":[
    [90,89.5,89.5,89.5,89.5],[90,89.5,89.5,89.5,89.5],[90,89.5,89.5,89.5,89.5],
    [90,89.5,89.5,89.5,89.5],[90,89.5,89.5,89.5,89.5]]})"));
  for (SearchPolicy p : {SearchPolicy::kFirstViolationRevert, SearchPolicy::kMaxWithinThreshold}) {
    SearchConfig cfg;
    cfg.policy = p;
    EXPECT_EQ(GreedySplitSearch(Probe(), cfg, t).plan.factors, (std::vector<int>(5, 1)));
  }
}

TEST(GreedySearch, ZeroThresholdAcceptsOnlyImprovements) {
  TableMockEvaluator t = TrendTable();
  SearchConfig cfg;
  cfg.threshold = 0;
  // Block 1 improves at 2, then drops; block 4 improves at 2; block 5 never improves on 93.21 before 6.
  EXPECT_EQ(GreedySplitSearch(Probe(), cfg, t).plan.factors, (std::vector<int>{2, 1, 1, 2, 1}));
}

TEST(GreedySearch, ConstantEvaluatorPicksMaximalDivisibleFactor) {
  ConstantEvaluator c;
  EXPECT_EQ(GreedySplitSearch(Chain5(48), SearchConfig{}, c).plan.factors, (std::vector<int>(5, 8)));
  ConstantEvaluator c2;
  const SearchResult r = GreedySplitSearch(Chain5(16), SearchConfig{}, c2);
  EXPECT_EQ(r.plan.factors, (std::vector<int>(5, 8)));
  int skips = 0;
  for (const auto& rec : r.trace.records)
    if (rec.decision == Decision::kSkipNondivisible) {
      ++skips;
      EXPECT_EQ(rec.factor, 6);
      EXPECT_FALSE(rec.accuracy.has_value());
    }
  EXPECT_EQ(skips, 5);
  EXPECT_EQ(c2.calls, r.trace.evaluations);
  EXPECT_EQ(r.trace.evaluations, 5 * 4);
}

TEST(GreedySearch, TraceInvariants) {
  for (SearchPolicy p : {SearchPolicy::kFirstViolationRevert, SearchPolicy::kMaxWithinThreshold})
    for (double thr : {0.0, 0.25, 0.5, 1.0}) {
      TableMockEvaluator t = TrendTable();
      SearchConfig cfg;
      cfg.policy = p;
      cfg.threshold = thr;
      const SearchResult r = GreedySplitSearch(Probe(), cfg, t);
      int evaluated = 0, prev_block = 0;
      bool rejected = false;
      for (const auto& rec : r.trace.records) {
        EXPECT_GE(rec.block, prev_block);
        if (rec.block != prev_block) rejected = false;
        prev_block = rec.block;
        if (rec.accuracy) ++evaluated;
        if (rec.delta) EXPECT_NEAR(*rec.delta, rec.baseline - *rec.accuracy, 1e-8);
        if (p == SearchPolicy::kFirstViolationRevert) {
          EXPECT_FALSE(rejected) << "evaluation after a violation";
          if (rec.decision == Decision::kReject) rejected = true;
        }
      }
      EXPECT_EQ(evaluated, r.trace.evaluations);
      EXPECT_EQ(static_cast<size_t>(evaluated), t.queries().size());
      EXPECT_LE(r.trace.evaluations, 25);
      for (size_t b = 0; b < r.plan.factors.size(); ++b) {
        if (r.plan.factors[b] == 1) continue;
        bool ok = false;
        for (const auto& rec : r.trace.records)
          ok |= rec.block == int(b) && rec.factor == r.plan.factors[b] && rec.decision == Decision::kContinue;
        EXPECT_TRUE(ok) << "block " << b;
      }
      TableMockEvaluator t2 = TrendTable();
      const SearchResult again = GreedySplitSearch(Probe(), cfg, t2);
      EXPECT_EQ(TraceToJson(again.trace, cfg), TraceToJson(r.trace, cfg));
    }
}

TEST(GreedySearch, EvaluatorFailureCarriesContext) {
  auto t = TableMockEvaluator::FromJson(nlohmann::json::parse(R"({"factors":[1,2,4],"rows":[
    [90,90,90],[90,90,90],[90,90,null],[90,90,90],[90,90,90]]})"));
  SearchConfig cfg;
  cfg.ladder = {2, 4};
  try {
    GreedySplitSearch(Probe(), cfg, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEvaluatorFailure);
    EXPECT_NE(std::string(e.what()).find("block 3, factor 4"), std::string::npos) << e.what();
  }
}

TEST(SearchConfig, Validation) {
  SearchConfig cfg;
  EXPECT_NO_THROW(ValidateSearchConfig(cfg));
  cfg.threshold = -0.1;
  EXPECT_EQ(CodeOf([&] { ValidateSearchConfig(cfg); }), ErrorCode::kInvalidArgument);
  cfg = {};
  cfg.ladder = {4, 2};
  EXPECT_EQ(CodeOf([&] { ValidateSearchConfig(cfg); }), ErrorCode::kInvalidArgument);
  cfg.ladder = {2, 2};
  EXPECT_EQ(CodeOf([&] { ValidateSearchConfig(cfg); }), ErrorCode::kInvalidArgument);
  cfg.ladder = {};
  EXPECT_EQ(CodeOf([&] { ValidateSearchConfig(cfg); }), ErrorCode::kInvalidArgument);
  cfg.ladder = {1, 2};
  EXPECT_EQ(CodeOf([&] { ValidateSearchConfig(cfg); }), ErrorCode::kInvalidArgument);
  cfg = {};
  cfg.threshold = 0;
  EXPECT_NO_THROW(ValidateSearchConfig(cfg));
  EXPECT_EQ(ParseSearchPolicy("max_within_threshold"), SearchPolicy::kMaxWithinThreshold);
  EXPECT_EQ(ParseSearchPolicy(SearchPolicyName(SearchPolicy::kFirstViolationRevert)),
            SearchPolicy::kFirstViolationRevert);
  EXPECT_EQ(CodeOf([] { ParseSearchPolicy("best"); }), ErrorCode::kInvalidArgument);
}

TEST(TraceOutput, JsonAndCsv) {
  TableMockEvaluator t = TrendTable();
  const SearchConfig cfg;
  const SearchResult r = GreedySplitSearch(Probe(), cfg, t);
  const auto j = TraceToJson(r.trace, cfg);
  EXPECT_EQ(j["records"][0]["block"], 1);
  EXPECT_EQ(j["records"][0]["decision"], "baseline");
  EXPECT_EQ(j["plan"], nlohmann::json({8, 8, 2, 6, 8}));
  EXPECT_EQ(j["policy"], "first_violation_revert");
  const std::string csv = TraceTableCsv(r.trace, cfg, 5);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "block,1,2,4,6,8");
  EXPECT_NE(csv.find("Block1,93.57,93.64,93.55,93.41,93.46\n"), std::string::npos);
  EXPECT_NE(csv.find("Block3,93.38,93.06,92.78,,\n"), std::string::npos);
}

TEST(ParseAccuracyLine, Values) {
  EXPECT_DOUBLE_EQ(ParseAccuracyLine("0.5"), 0.5);
  EXPECT_DOUBLE_EQ(ParseAccuracyLine("  0.25 \n"), 0.25);
  EXPECT_DOUBLE_EQ(ParseAccuracyLine("1"), 1.0);
  EXPECT_DOUBLE_EQ(ParseAccuracyLine("0"), 0.0);
  for (const char* bad : {"1.5", "-0.1", "abc", "", "0.5x", "nan", "inf"})
    EXPECT_EQ(CodeOf([&] { ParseAccuracyLine(bad); }), ErrorCode::kUnparseableOutput) << bad;
}

class ExternalStub : public ::testing::Test {
 protected:
  std::string Script(const std::string& name, const std::string& body) {
    const auto dir = std::filesystem::temp_directory_path() / "sf_stubs";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream(path) << "#!/bin/sh\n" << body << "\n";
    ::chmod(path.c_str(), 0755);
    return path.string();
  }
  Evaluation Run(const std::string& cmd, double timeout = 30) {
    ExternalEvaluator ev = ExternalEvaluator::FromCommandLine(cmd, timeout);
    const Architecture a = Probe();
    Candidate c{&a, {1, 1, 1, 1, 1}, 0, 1, true, nullptr, 5};
    return ev.Evaluate(c);
  }
};

TEST_F(ExternalStub, PrintsAccuracy) {
  EXPECT_DOUBLE_EQ(Run(Script("half.sh", "echo 0.5")).accuracy, 0.5);
  EXPECT_DOUBLE_EQ(Run(Script("last.sh", "echo warming up\necho 0.75\necho")).accuracy, 0.75);
}

TEST_F(ExternalStub, ReceivesArchitectureFileAndBudget) {
  const std::string s = Script("args.sh", "grep -q trend_probe \"$1\" || exit 9\necho \"0.$2\"");
  EXPECT_DOUBLE_EQ(Run(s).accuracy, 0.5);
  EXPECT_DOUBLE_EQ(Run(s + " ").accuracy, 0.5);
}

TEST_F(ExternalStub, OutOfRange) {
  EXPECT_EQ(CodeOf([&] { Run(Script("big.sh", "echo 1.5")); }), ErrorCode::kUnparseableOutput);
}

TEST_F(ExternalStub, NonZeroExitCarriesStderr) {
  try {
    Run(Script("fail.sh", "echo boom-detail >&2\nexit 3"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonZeroExit);
    EXPECT_NE(std::string(e.what()).find("boom-detail"), std::string::npos);
  }
}

TEST_F(ExternalStub, Timeout) {
  EXPECT_EQ(CodeOf([&] { Run(Script("slow.sh", "sleep 10\necho 0.5"), 0.3); }), ErrorCode::kTimeout);
}

TEST_F(ExternalStub, MissingExecutable) {
  EXPECT_NE(CodeOf([&] { Run("/nonexistent/evaluator"); }), ErrorCode::kTimeout);
}

TEST(InternalEvaluator, SmallSearchCompletes) {
  const Dataset ds = SynthQuadrantDataset(1, 64, 8);
  TrainConfig tc;
  tc.batch_size = 16;
  InternalEvaluator ev(ds, std::nullopt, tc);
  SearchConfig cfg;
  cfg.ladder = {2, 4};
  cfg.initial_budget = 2;
  cfg.fine_tune_budget = 1;
  const Architecture a = ToyChain(3, {{8}, {8}}, 8, 4);
  const SearchResult r = GreedySplitSearch(a, cfg, ev);
  ASSERT_EQ(r.plan.factors.size(), 2u);
  ASSERT_TRUE(r.weights.has_value());
  const Architecture s = ApplyPlan(a, r.plan);
  EXPECT_TRUE(Validate(s).ok());
  EXPECT_NO_THROW(Forward(s, *r.weights, Tensor<float>({1, 3, 8, 8})));
  for (const auto& rec : r.trace.records)
    if (rec.accuracy) {
      EXPECT_GE(*rec.accuracy, 0.0);
      EXPECT_LE(*rec.accuracy, 100.0);
    }
  InternalEvaluator ev2(ds, std::nullopt, tc);
  EXPECT_EQ(TraceToJson(GreedySplitSearch(a, cfg, ev2).trace, cfg), TraceToJson(r.trace, cfg));
}

}  // namespace
}  // namespace splitforge
