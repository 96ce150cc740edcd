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

#include "splitforge/search.hpp"

#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "splitforge/error.hpp"

extern char** environ;

namespace splitforge {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Internal evaluator

InternalEvaluator::InternalEvaluator(Dataset train, std::optional<Dataset> test, TrainConfig cfg)
    : train_(std::move(train)), test_(std::move(test)), cfg_(cfg) {
  ValidateTrainConfig(cfg_);
}

Evaluation InternalEvaluator::Evaluate(const Candidate& c) {
  TrainOptions opts;
  opts.epochs = c.budget;
  opts.warm_start = c.warm;
  if (!c.baseline) opts.reinit_block = c.block;
  TrainResult tr = Train(*c.arch, train_, cfg_, opts);
  Evaluation e;
  e.accuracy = splitforge::Evaluate(*c.arch, tr.weights, test_ ? *test_ : train_);
  e.weights = std::move(tr.weights);
  return e;
}

// ---------------------------------------------------------------------------
// Table mock

TableMockEvaluator::TableMockEvaluator(std::vector<int> factors,
                                       std::vector<std::vector<std::optional<double>>> rows)
    : factors_(std::move(factors)), rows_(std::move(rows)) {
  for (size_t r = 0; r < rows_.size(); ++r)
    if (rows_[r].size() != factors_.size())
      throw Error(ErrorCode::kParse, "table row " + std::to_string(r) + " has " +
                                         std::to_string(rows_[r].size()) + " cells for " +
                                         std::to_string(factors_.size()) + " factors");
}

TableMockEvaluator TableMockEvaluator::FromJson(const json& doc) {
  try {
    if (!doc.is_object() || !doc.contains("factors") || !doc.contains("rows"))
      throw Error(ErrorCode::kParse, "table needs 'factors' and 'rows'");
    for (const auto& [key, _] : doc.items())
      if (key != "factors" && key != "rows" && key != "name")
        throw Error(ErrorCode::kParse, "unknown table field '" + key + "'");
    std::vector<int> factors = doc.at("factors").get<std::vector<int>>();
    std::vector<std::vector<std::optional<double>>> rows;
    for (const auto& row : doc.at("rows")) {
      if (!row.is_array()) throw Error(ErrorCode::kParse, "table rows must be arrays");
      auto& out = rows.emplace_back();
      for (const auto& cell : row) {
        if (cell.is_null())
          out.emplace_back();
        else if (cell.is_number())
          out.emplace_back(cell.get<double>());
        else
          throw Error(ErrorCode::kParse, "table cells must be numbers or null");
      }
    }
    return TableMockEvaluator(std::move(factors), std::move(rows));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("table: ") + e.what());
  }
}

TableMockEvaluator TableMockEvaluator::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open table file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json doc = json::parse(ss.str(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kParse, "table file '" + path + "' is not JSON");
  return FromJson(doc);
}

double TableMockEvaluator::Lookup(int block, int factor) const {
  const auto col = std::find(factors_.begin(), factors_.end(), factor);
  if (block < 0 || block >= static_cast<int>(rows_.size()) || col == factors_.end() ||
      !rows_[block][col - factors_.begin()])
    throw Error(ErrorCode::kMissingCell, "no table cell for block " + std::to_string(block + 1) +
                                             ", factor " + std::to_string(factor));
  return *rows_[block][col - factors_.begin()];
}

Evaluation TableMockEvaluator::Evaluate(const Candidate& c) {
  queries_.emplace_back(c.block, c.factor);
  Evaluation e;
  e.accuracy = Lookup(c.block, c.factor) / 100.0;
  return e;
}

// ---------------------------------------------------------------------------
// External evaluator

ExternalEvaluator::ExternalEvaluator(std::vector<std::string> command, double timeout_seconds)
    : command_(std::move(command)), timeout_seconds_(timeout_seconds) {
  if (command_.empty()) throw Error(ErrorCode::kInvalidArgument, "external evaluator needs a command");
}

ExternalEvaluator ExternalEvaluator::FromCommandLine(const std::string& line, double timeout_seconds) {
  std::istringstream in(line);
  std::vector<std::string> parts;
  for (std::string w; in >> w;) parts.push_back(w);
  return ExternalEvaluator(std::move(parts), timeout_seconds);
}

double ParseAccuracyLine(const std::string& text) {
  std::string line;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (l.find_first_not_of(" \t\r") != std::string::npos) line = l;
  const auto b = line.find_first_not_of(" \t\r");
  const auto e = line.find_last_not_of(" \t\r");
  if (b == std::string::npos)
    throw Error(ErrorCode::kUnparseableOutput, "evaluator printed nothing");
  const std::string tok = line.substr(b, e - b + 1);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || !std::isfinite(v))
    throw Error(ErrorCode::kUnparseableOutput, "cannot parse accuracy from '" + tok + "'");
  if (v < 0.0 || v > 1.0)
    throw Error(ErrorCode::kUnparseableOutput, "accuracy " + tok + " outside [0, 1]");
  return v;
}

namespace {

class TempFile {
 public:
  explicit TempFile(const std::string& content) {
    const char* dir = std::getenv("TMPDIR");
    std::string pattern = std::string(dir && *dir ? dir : "/tmp") + "/splitforge-XXXXXX.json";
    std::vector<char> buf(pattern.begin(), pattern.end());
    buf.push_back('\0');
    const int fd = mkstemps(buf.data(), 5);
    if (fd < 0) throw Error(ErrorCode::kIo, "cannot create temporary file");
    path_ = buf.data();
    size_t off = 0;
    while (off < content.size()) {
      const ssize_t n = write(fd, content.data() + off, content.size() - off);
      if (n <= 0) {
        close(fd);
        throw Error(ErrorCode::kIo, "cannot write temporary file");
      }
      off += static_cast<size_t>(n);
    }
    close(fd);
  }
  ~TempFile() { std::remove(path_.c_str()); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace

Evaluation ExternalEvaluator::Evaluate(const Candidate& c) {
  TempFile file(SerializeArchitectureText(*c.arch));
  std::vector<std::string> args = command_;
  args.push_back(file.path());
  args.push_back(std::to_string(c.budget));
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  int out_pipe[2], err_pipe[2];
  if (pipe(out_pipe) != 0) throw Error(ErrorCode::kIo, "pipe failed");
  if (pipe(err_pipe) != 0) {
    close(out_pipe[0]);
    close(out_pipe[1]);
    throw Error(ErrorCode::kIo, "pipe failed");
  }
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_adddup2(&fa, out_pipe[1], 1);
  posix_spawn_file_actions_adddup2(&fa, err_pipe[1], 2);
  posix_spawn_file_actions_addclose(&fa, out_pipe[0]);
  posix_spawn_file_actions_addclose(&fa, err_pipe[0]);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, argv[0], &fa, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&fa);
  close(out_pipe[1]);
  close(err_pipe[1]);
  if (rc != 0) {
    close(out_pipe[0]);
    close(err_pipe[0]);
    throw Error(ErrorCode::kNonZeroExit, "cannot start '" + command_[0] + "'");
  }

  std::string out, err;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_seconds_);
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  int open_fds = 2;
  bool timed_out = false;
  char buf[4096];
  while (open_fds > 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                          deadline - std::chrono::steady_clock::now())
                          .count();
    if (left <= 0) {
      timed_out = true;
      break;
    }
    if (poll(fds, 2, static_cast<int>(std::min<long long>(left, 1000))) < 0) break;
    for (int k = 0; k < 2; ++k) {
      if (fds[k].fd < 0 || !(fds[k].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const ssize_t n = read(fds[k].fd, buf, sizeof buf);
      if (n <= 0) {
        close(fds[k].fd);
        fds[k].fd = -1;
        --open_fds;
      } else {
        (k == 0 ? out : err).append(buf, static_cast<size_t>(n));
      }
    }
  }
  for (auto& f : fds)
    if (f.fd >= 0) close(f.fd);
  if (timed_out) kill(pid, SIGKILL);
  int status = 0;
  waitpid(pid, &status, 0);
  if (timed_out)
    throw Error(ErrorCode::kTimeout, "'" + command_[0] + "' exceeded " +
                                         std::to_string(timeout_seconds_) + " s");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const std::string excerpt = err.size() > 512 ? err.substr(err.size() - 512) : err;
    throw Error(ErrorCode::kNonZeroExit,
                "'" + command_[0] + "' exited with " +
                    (WIFEXITED(status) ? "status " + std::to_string(WEXITSTATUS(status))
                                       : std::string("a signal")) +
                    ": " + excerpt);
  }
  Evaluation e;
  e.accuracy = ParseAccuracyLine(out);
  return e;
}

// ---------------------------------------------------------------------------
// Search

const char* SearchPolicyName(SearchPolicy p) {
  return p == SearchPolicy::kMaxWithinThreshold ? "max_within_threshold" : "first_violation_revert";
}

SearchPolicy ParseSearchPolicy(std::string_view name) {
  if (name == "max_within_threshold") return SearchPolicy::kMaxWithinThreshold;
  if (name == "first_violation_revert") return SearchPolicy::kFirstViolationRevert;
  throw Error(ErrorCode::kInvalidArgument, "unknown policy '" + std::string(name) + "'");
}

const char* DecisionName(Decision d) {
  switch (d) {
    case Decision::kBaseline: return "baseline";
    case Decision::kContinue: return "continue";
    case Decision::kReject: return "reject";
    case Decision::kSkipNondivisible: return "skip_nondivisible";
  }
  return "?";
}

void ValidateSearchConfig(const SearchConfig& cfg) {
  if (!(cfg.threshold >= 0))
    throw Error(ErrorCode::kInvalidArgument, "threshold must be >= 0 percentage points");
  if (cfg.ladder.empty()) throw Error(ErrorCode::kInvalidArgument, "factor ladder is empty");
  for (size_t k = 0; k < cfg.ladder.size(); ++k) {
    if (cfg.ladder[k] < 2) throw Error(ErrorCode::kInvalidArgument, "ladder factors must be >= 2");
    if (k > 0 && cfg.ladder[k] <= cfg.ladder[k - 1])
      throw Error(ErrorCode::kInvalidArgument, "ladder must be strictly ascending");
  }
  if (cfg.initial_budget < 0 || cfg.fine_tune_budget < 0)
    throw Error(ErrorCode::kInvalidArgument, "budgets must be >= 0");
}

namespace {

// Percentages carry decimal table values; rounding keeps differences such
// as 93.46 - 93.03 from drifting across the threshold.
double Pct(double v) { return std::round(v * 1e8) / 1e8; }

}  // namespace

SearchResult GreedySplitSearch(const Architecture& arch, const SearchConfig& cfg, Evaluator& ev) {
  ValidateSearchConfig(cfg);
  const ValidationReport vr = Validate(arch);
  if (!vr.ok()) throw Error(ErrorCode::kValidation, vr.Summary());
  const int blocks = static_cast<int>(arch.blocks.size());

  SearchResult result;
  SearchTrace& trace = result.trace;
  std::vector<int> fixed(blocks, 1);
  std::optional<WeightStore> weights;
  std::optional<double> global_baseline;
  double current_acc = 0;

  auto run = [&](const Architecture& a, const std::vector<int>& factors, int block, int factor,
                 bool baseline) {
    Candidate c;
    c.arch = &a;
    c.factors = factors;
    c.block = block;
    c.factor = factor;
    c.baseline = baseline;
    c.warm = weights ? &*weights : nullptr;
    c.budget = weights ? cfg.fine_tune_budget : cfg.initial_budget;
    ++trace.evaluations;
    try {
      Evaluation e = ev.Evaluate(c);
      if (!(e.accuracy >= 0.0 && e.accuracy <= 1.0))
        throw Error(ErrorCode::kUnparseableOutput, "accuracy outside [0, 1]");
      return e;
    } catch (const Error& e) {
      throw Error(ErrorCode::kEvaluatorFailure, "block " + std::to_string(block + 1) + ", factor " +
                                                    std::to_string(factor) + ": " + e.what());
    }
  };

  for (int i = 0; i < blocks; ++i) {
    double baseline = 0;
    if (cfg.per_block_baseline || !global_baseline) {
      const Architecture a = SplitTransform(arch, fixed, cfg.fusion_relu);
      Evaluation e = run(a, fixed, i, 1, true);
      baseline = Pct(e.accuracy * 100);
      if (e.weights) weights = std::move(e.weights);
      global_baseline = baseline;
      current_acc = baseline;
      trace.records.push_back({i, 1, baseline, baseline, 0.0, Decision::kBaseline});
    } else {
      baseline = *global_baseline;
    }

    int selected = 1;
    std::optional<WeightStore> selected_weights;
    double selected_acc = current_acc;
    for (int f : cfg.ladder) {
      std::vector<int> factors = fixed;
      factors[i] = f;
      Architecture a;
      try {
        a = SplitTransform(arch, factors, cfg.fusion_relu);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonDivisible) throw;
        trace.records.push_back({i, f, std::nullopt, baseline, std::nullopt, Decision::kSkipNondivisible});
        continue;
      }
      Evaluation e = run(a, factors, i, f, false);
      const double acc = Pct(e.accuracy * 100);
      const double delta = Pct(baseline - acc);
      const bool pass = delta < cfg.threshold;
      trace.records.push_back({i, f, acc, baseline, delta, pass ? Decision::kContinue : Decision::kReject});
      if (pass) {
        selected = f;
        selected_acc = acc;
        selected_weights = std::move(e.weights);
      } else if (cfg.policy == SearchPolicy::kFirstViolationRevert) {
        break;
      }
    }
    fixed[i] = selected;
    if (selected != 1) {
      current_acc = selected_acc;
      if (selected_weights) weights = std::move(selected_weights);
    }
  }

  trace.plan = fixed;
  trace.final_accuracy = current_acc;
  result.plan.mode = SplitMode::kProposed;
  result.plan.factors = fixed;
  result.plan.fusion_relu = cfg.fusion_relu;
  result.weights = std::move(weights);
  return result;
}

json TraceToJson(const SearchTrace& trace, const SearchConfig& cfg) {
  json records = json::array();
  for (const auto& r : trace.records) {
    json j;
    j["block"] = r.block + 1;
    j["factor"] = r.factor;
    j["accuracy"] = r.accuracy ? json(*r.accuracy) : json(nullptr);
    j["baseline"] = r.baseline;
    j["delta"] = r.delta ? json(*r.delta) : json(nullptr);
    j["decision"] = DecisionName(r.decision);
    records.push_back(std::move(j));
  }
  json doc;
  doc["threshold"] = cfg.threshold;
  doc["policy"] = SearchPolicyName(cfg.policy);
  doc["per_block_baseline"] = cfg.per_block_baseline;
  doc["ladder"] = cfg.ladder;
  doc["records"] = std::move(records);
  doc["plan"] = trace.plan;
  doc["final_accuracy"] = trace.final_accuracy;
  doc["evaluations"] = trace.evaluations;
  return doc;
}

std::string TraceTableCsv(const SearchTrace& trace, const SearchConfig& cfg, int blocks) {
  std::vector<int> cols{1};
  cols.insert(cols.end(), cfg.ladder.begin(), cfg.ladder.end());
  std::vector<std::vector<std::string>> cells(blocks, std::vector<std::string>(cols.size()));
  for (const auto& r : trace.records) {
    const auto it = std::find(cols.begin(), cols.end(), r.factor);
    if (it == cols.end() || r.block >= blocks) continue;
    std::string& cell = cells[r.block][it - cols.begin()];
    if (r.decision == Decision::kSkipNondivisible) {
      cell = "nondivisible";
    } else if (r.accuracy) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.10g", *r.accuracy);
      cell = buf;
    }
  }
  std::string out = "block";
  for (int c : cols) out += "," + std::to_string(c);
  out += "\n";
  for (int b = 0; b < blocks; ++b) {
    out += "Block" + std::to_string(b + 1);
    for (const auto& c : cells[b]) out += "," + c;
    out += "\n";
  }
  return out;
}

}  // namespace splitforge
