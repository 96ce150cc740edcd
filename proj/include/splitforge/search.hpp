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

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "splitforge/arch.hpp"
#include "splitforge/data.hpp"
#include "splitforge/engine.hpp"
#include "splitforge/transform.hpp"

namespace splitforge {

// One architecture handed to an evaluator.
struct Candidate {
  const Architecture* arch = nullptr;
  std::vector<int> factors;             // full per-block plan of `arch`
  int block = 0;                        // block being decided (0-based)
  int factor = 1;                       // its factor in this candidate
  bool baseline = false;                // factor-1 measurement for `block`
  const WeightStore* warm = nullptr;    // weights to fine-tune from
  int budget = 0;                       // training epochs granted
};

struct Evaluation {
  double accuracy = 0;  // fraction in [0, 1]
  std::optional<WeightStore> weights;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual Evaluation Evaluate(const Candidate& c) = 0;
  virtual std::string Name() const = 0;
};

// Trains with the engine: from scratch when no warm weights are given,
// otherwise fine-tunes with the decided block re-initialized.
class InternalEvaluator : public Evaluator {
 public:
  InternalEvaluator(Dataset train, std::optional<Dataset> test, TrainConfig cfg);
  Evaluation Evaluate(const Candidate& c) override;
  std::string Name() const override { return "internal"; }

 private:
  Dataset train_;
  std::optional<Dataset> test_;
  TrainConfig cfg_;
};

// Replays an accuracy table keyed by (block, factor). Table cells are in
// percent; Evaluate returns fractions.
class TableMockEvaluator : public Evaluator {
 public:
  TableMockEvaluator(std::vector<int> factors, std::vector<std::vector<std::optional<double>>> rows);
  static TableMockEvaluator FromJson(const nlohmann::json& doc);
  static TableMockEvaluator FromFile(const std::string& path);

  // Stored percentage; throws Error(kMissingCell).
  double Lookup(int block, int factor) const;
  Evaluation Evaluate(const Candidate& c) override;
  std::string Name() const override { return "table"; }
  const std::vector<std::pair<int, int>>& queries() const { return queries_; }

 private:
  std::vector<int> factors_;
  std::vector<std::vector<std::optional<double>>> rows_;
  std::vector<std::pair<int, int>> queries_;
};

// Runs `command... <arch-file> <budget>` and reads the accuracy from the
// last non-empty stdout line.
class ExternalEvaluator : public Evaluator {
 public:
  explicit ExternalEvaluator(std::vector<std::string> command, double timeout_seconds = 3600);
  // Splits on whitespace; no shell quoting.
  static ExternalEvaluator FromCommandLine(const std::string& line, double timeout_seconds = 3600);
  Evaluation Evaluate(const Candidate& c) override;
  std::string Name() const override { return "external"; }

 private:
  std::vector<std::string> command_;
  double timeout_seconds_;
};

// Parses one accuracy line; throws Error(kUnparseableOutput).
double ParseAccuracyLine(const std::string& text);

enum class SearchPolicy { kMaxWithinThreshold, kFirstViolationRevert };

const char* SearchPolicyName(SearchPolicy p);
SearchPolicy ParseSearchPolicy(std::string_view name);

struct SearchConfig {
  std::vector<int> ladder{2, 4, 6, 8};
  double threshold = 0.5;  // percentage points
  SearchPolicy policy = SearchPolicy::kFirstViolationRevert;
  bool per_block_baseline = true;
  bool fusion_relu = false;
  int initial_budget = 30;    // epochs for the first baseline
  int fine_tune_budget = 5;   // epochs for every later evaluation
};

void ValidateSearchConfig(const SearchConfig& cfg);

enum class Decision { kBaseline, kContinue, kReject, kSkipNondivisible };

const char* DecisionName(Decision d);

struct TraceRecord {
  int block = 0;
  int factor = 1;
  std::optional<double> accuracy;  // percent
  double baseline = 0;             // percent
  std::optional<double> delta;     // baseline - accuracy
  Decision decision = Decision::kContinue;
};

struct SearchTrace {
  std::vector<TraceRecord> records;
  std::vector<int> plan;
  double final_accuracy = 0;  // percent
  int evaluations = 0;
};

struct SearchResult {
  SplitPlan plan;
  SearchTrace trace;
  std::optional<WeightStore> weights;
};

// Greedy block-by-block search. Throws Error(kEvaluatorFailure) with block
// and factor context when the evaluator fails.
SearchResult GreedySplitSearch(const Architecture& arch, const SearchConfig& cfg, Evaluator& ev);

nlohmann::json TraceToJson(const SearchTrace& trace, const SearchConfig& cfg);
// Rows are blocks, columns factor 1 then the ladder; cells are accuracies.
std::string TraceTableCsv(const SearchTrace& trace, const SearchConfig& cfg, int blocks);

}  // namespace splitforge
