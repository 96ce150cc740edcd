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

#include "splitforge/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "splitforge/arch.hpp"
#include "splitforge/cost.hpp"
#include "splitforge/data.hpp"
#include "splitforge/engine.hpp"
#include "splitforge/error.hpp"
#include "splitforge/oracle.hpp"
#include "splitforge/search.hpp"
#include "splitforge/tensor.hpp"
#include "splitforge/transform.hpp"

namespace splitforge {

using nlohmann::json;
namespace fs = std::filesystem;

std::string Sha256Hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Oracle failure carrying the report already printed.
struct OracleFailure {};

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& bytes) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  out << bytes;
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path + "'");
}

constexpr std::string_view kBuiltinPrefix = "builtin:";

bool IsBuiltin(const std::string& spec) { return spec.rfind(kBuiltinPrefix, 0) == 0; }

Architecture LoadArch(const std::string& spec) {
  if (IsBuiltin(spec)) return BuiltinByName(spec.substr(kBuiltinPrefix.size()));
  return ParseArchitectureText(ReadFile(spec));
}

std::string Iso8601Now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  explicit Manifest(std::string command)
      : command_(std::move(command)),
        started_(Iso8601Now()),
        t0_(std::chrono::steady_clock::now()) {}

  json& config() { return config_; }
  void set_seed(uint64_t s) { seed_ = s; }
  void AddInput(const std::string& spec) {
    if (spec.empty()) return;
    if (IsBuiltin(spec)) {
      inputs_.push_back({{"path", spec}, {"sha256", nullptr}});
    } else {
      inputs_.push_back({{"path", spec}, {"sha256", Sha256Hex(ReadFile(spec))}});
    }
  }
  void AddOutput(const std::string& path) { outputs_.push_back(path); }

  void Write(const std::string& path) const {
    json doc;
    doc["command"] = command_;
    doc["config"] = config_;
    doc["seed"] = seed_ ? json(*seed_) : json(nullptr);
    doc["tool_version"] = kToolVersion;
    doc["inputs"] = inputs_;
    json outs = json::array();
    for (const auto& p : outputs_) outs.push_back({{"path", p}, {"sha256", Sha256Hex(ReadFile(p))}});
    doc["outputs"] = outs;
    doc["started_at"] = started_;
    doc["duration_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    WriteFile(path, doc.dump(2) + "\n");
  }

 private:
  std::string command_;
  json config_ = json::object();
  std::optional<uint64_t> seed_;
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
  std::string started_;
  std::chrono::steady_clock::time_point t0_;
};

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonDivisible:
    case ErrorCode::kPlanLengthMismatch:
    case ErrorCode::kUnresolvableWiring:
    case ErrorCode::kSharedDepthTooLarge:
    case ErrorCode::kUnsupported:
    case ErrorCode::kAlreadyTransformed:
    case ErrorCode::kNotASplitArchitecture:
      return 2;
    case ErrorCode::kEvaluatorFailure:
    case ErrorCode::kMissingCell:
    case ErrorCode::kNonZeroExit:
    case ErrorCode::kUnparseableOutput:
    case ErrorCode::kTimeout:
      return 4;
    case ErrorCode::kDivergedLoss:
      return 5;
    default:
      return 1;
  }
}

// Dataset flags shared by train and search.
struct DataOptions {
  std::string dataset = "synth";
  size_t samples = 800;
  int image_size = 16;
  int classes = 4;
  uint64_t data_seed = 1;
  double train_fraction = 1.0;
  size_t limit = 0;

  void Register(CLI::App* cmd) {
    cmd->add_option("--dataset", dataset, "synth or cifar:<dir>")->capture_default_str();
    cmd->add_option("--samples", samples, "synthetic sample count")->capture_default_str();
    cmd->add_option("--image-size", image_size, "synthetic image side")->capture_default_str();
    cmd->add_option("--classes", classes, "synthetic class count (2-4)")->capture_default_str();
    cmd->add_option("--data-seed", data_seed, "synthetic dataset seed")->capture_default_str();
    cmd->add_option("--train-fraction", train_fraction,
                    "synthetic share used for training; the rest is the test set")
        ->capture_default_str();
    cmd->add_option("--limit", limit, "CIFAR-10 record limit per split (0 = all)");
  }

  json ToJson() const {
    return {{"dataset", dataset},       {"samples", samples},     {"image_size", image_size},
            {"classes", classes},       {"data_seed", data_seed}, {"train_fraction", train_fraction},
            {"limit", limit}};
  }

  std::pair<Dataset, std::optional<Dataset>> Load() const {
    if (dataset == "synth") {
      Dataset all = SynthQuadrantDataset(data_seed, samples, image_size, classes);
      if (train_fraction >= 1.0) return {std::move(all), std::nullopt};
      auto [tr, te] = SplitTrainTest(all, train_fraction, data_seed);
      return {std::move(tr), std::move(te)};
    }
    if (dataset.rfind("cifar:", 0) == 0 || dataset == "cifar") {
      const std::string dir = dataset == "cifar" ? DataDir() : dataset.substr(6);
      std::optional<size_t> lim;
      if (limit) lim = limit;
      return {LoadCifar10Dir(dir, true, lim), LoadCifar10Dir(dir, false, lim)};
    }
    throw UsageError("unknown dataset '" + dataset + "' (expected synth or cifar:<dir>)");
  }
};

json CostJson(const CostReport& r) {
  json layers = json::array();
  for (const auto& l : r.per_layer)
    layers.push_back({{"id", l.id},
                      {"kind", LayerKindName(l.kind)},
                      {"role", LayerRoleName(l.role)},
                      {"params", l.params},
                      {"macs", l.macs},
                      {"elem_ops", l.elem_ops}});
  return {{"params", r.totals.params},
          {"conv_params", r.totals.conv_params},
          {"dense_params", r.totals.dense_params},
          {"fusion_params", r.totals.params_fusion_only},
          {"macs", r.totals.macs},
          {"layers", layers}};
}

std::string CostCsv(const CostReport& r) {
  std::string out = "id,kind,role,params,macs,elem_ops\n";
  for (const auto& l : r.per_layer)
    out += l.id + "," + LayerKindName(l.kind) + "," + LayerRoleName(l.role) + "," +
           std::to_string(l.params) + "," + std::to_string(l.macs) + "," +
           std::to_string(l.elem_ops) + "\n";
  return out;
}

void CorruptFirstDense(WeightStore& w, const Architecture& arch) {
  for (const auto& l : arch.classifier.layers) {
    if (l.kind() != LayerKind::kDense) continue;
    auto& k = w.at(l.id).kernel;
    for (int64_t c = 0; c < k.dim(1); ++c) k.data[c] += 1.0f;
    return;
  }
  for (auto& [id, lw] : w) {
    for (auto& v : lw.kernel.data) v += 1.0f;
    return;
  }
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Split-network architecture toolkit", "splitforge"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::function<void()> action;

  // transform --------------------------------------------------------------
  struct {
    std::string arch, plan, out, manifest;
  } tr;
  auto* c_tr = app.add_subcommand("transform", "apply a split plan to an architecture");
  c_tr->add_option("arch", tr.arch, "architecture JSON file or builtin:NAME")->required();
  c_tr->add_option("plan", tr.plan, "split plan JSON file")->required();
  c_tr->add_option("out", tr.out, "output architecture file")->required();
  c_tr->add_option("--manifest", tr.manifest, "manifest path (default <out>.manifest.json)");
  c_tr->callback([&] {
    action = [&] {
      Manifest m("transform");
      const Architecture arch = LoadArch(tr.arch);
      const SplitPlan plan = ParseSplitPlanText(ReadFile(tr.plan));
      const Architecture split = ApplyPlan(arch, plan);
      WriteFile(tr.out, SerializeArchitectureText(split));
      m.config() = {{"arch", tr.arch}, {"plan", SerializeSplitPlan(plan)}, {"out", tr.out}};
      m.AddInput(tr.arch);
      m.AddInput(tr.plan);
      m.AddOutput(tr.out);
      m.Write(tr.manifest.empty() ? tr.out + ".manifest.json" : tr.manifest);
      out << json({{"architecture", split.name},
                   {"blocks", split.blocks.size()},
                   {"out", tr.out}})
                 .dump()
          << "\n";
    };
  });

  // analyze ----------------------------------------------------------------
  struct {
    std::string arch, schedule = "both", csv, memory_csv, manifest;
    std::vector<int> input_shape;
    int bytes = 4;
    bool concat_alias = false;
  } an;
  auto* c_an = app.add_subcommand("analyze", "parameter, MAC and peak-memory report");
  c_an->add_option("arch", an.arch, "architecture JSON file or builtin:NAME")->required();
  c_an->add_option("--input-shape", an.input_shape, "override input shape c,h,w")
      ->delimiter(',')
      ->expected(3);
  c_an->add_option("--schedule", an.schedule, "all_parallel, branch_sequential or both")
      ->capture_default_str();
  c_an->add_option("--bytes-per-element", an.bytes, "bytes per stored element")->capture_default_str();
  c_an->add_option("--csv", an.csv, "per-layer CSV output");
  c_an->add_option("--memory-csv", an.memory_csv, "per-schedule peak memory CSV output");
  c_an->add_flag("--concat-alias", an.concat_alias, "concat writes into a preallocated buffer");
  c_an->add_option("--manifest", an.manifest, "manifest path");
  c_an->callback([&] {
    action = [&] {
      Manifest m("analyze");
      Architecture arch = LoadArch(an.arch);
      if (!an.input_shape.empty()) {
        arch.input_shape = {an.input_shape[0], an.input_shape[1], an.input_shape[2]};
        const ValidationReport vr = Validate(arch);
        if (!vr.ok()) throw Error(ErrorCode::kValidation, vr.Summary());
      }
      if (an.bytes < 1) throw UsageError("--bytes-per-element must be >= 1");
      std::vector<Schedule> schedules;
      if (an.schedule == "both")
        schedules = {Schedule::kAllParallel, Schedule::kBranchSequential};
      else
        schedules = {ParseSchedule(an.schedule)};
      const CostReport cost = CountCosts(arch);
      json doc;
      doc["architecture"] = arch.name;
      doc["input_shape"] = {arch.input_shape.c, arch.input_shape.h, arch.input_shape.w};
      doc["bytes_per_element"] = an.bytes;
      doc["cost"] = CostJson(cost);
      json mem = json::array();
      std::string mem_csv = "schedule,peak_elements,peak_op\n";
      for (Schedule s : schedules) {
        const MemoryReport r = PeakMemory(arch, s, {an.concat_alias});
        mem_csv += std::string(ScheduleName(s)) + "," + std::to_string(r.peak_elements) + "," +
                   r.peak_op + "\n";
        mem.push_back({{"schedule", ScheduleName(s)},
                       {"peak_elements", r.peak_elements},
                       {"peak_bytes", r.peak_elements * an.bytes},
                       {"peak_op", r.peak_op},
                       {"weight_elements", r.weight_elements},
                       {"weight_bytes", r.weight_elements * an.bytes}});
      }
      doc["memory"] = mem;
      if (!an.csv.empty()) {
        WriteFile(an.csv, CostCsv(cost));
        m.AddOutput(an.csv);
      }
      if (!an.memory_csv.empty()) {
        WriteFile(an.memory_csv, mem_csv);
        m.AddOutput(an.memory_csv);
      }
      out << doc.dump(2) << "\n";
      m.config() = {{"arch", an.arch},        {"schedule", an.schedule}, {"csv", an.csv},
                    {"memory_csv", an.memory_csv},
                    {"bytes_per_element", an.bytes}, {"concat_alias", an.concat_alias},
                    {"input_shape", an.input_shape}};
      m.AddInput(an.arch);
      if (!an.manifest.empty()) m.Write(an.manifest);
    };
  });

  // sweep ------------------------------------------------------------------
  struct {
    int l0 = 3, l1 = 64, l2 = 64;
    std::vector<int> factors;
    std::string out, manifest;
  } sw;
  auto* c_sw = app.add_subcommand("sweep", "closed-form parameter grid over (k1, k2)");
  c_sw->add_option("--L0", sw.l0, "input channels")->capture_default_str();
  c_sw->add_option("--L1", sw.l1, "first conv channels")->capture_default_str();
  c_sw->add_option("--L2", sw.l2, "second conv channels")->capture_default_str();
  c_sw->add_option("--factors", sw.factors, "comma-separated factor list")->delimiter(',')->required();
  c_sw->add_option("--out", sw.out, "CSV output (default stdout)");
  c_sw->add_option("--manifest", sw.manifest, "manifest path (default <out>.manifest.json)");
  c_sw->callback([&] {
    action = [&] {
      if (sw.factors.empty()) throw UsageError("--factors must list at least one factor");
      for (int f : sw.factors)
        if (f < 1) throw UsageError("--factors entries must be positive integers");
      Manifest m("sweep");
      const std::string csv = SweepCsv(SweepParams(sw.l0, sw.l1, sw.l2, sw.factors));
      m.config() = {{"L0", sw.l0}, {"L1", sw.l1}, {"L2", sw.l2}, {"factors", sw.factors}};
      if (sw.out.empty()) {
        out << csv;
        if (!sw.manifest.empty()) m.Write(sw.manifest);
      } else {
        WriteFile(sw.out, csv);
        m.AddOutput(sw.out);
        m.Write(sw.manifest.empty() ? sw.out + ".manifest.json" : sw.manifest);
      }
    };
  });

  // verify -----------------------------------------------------------------
  struct {
    std::string arch, weights, manifest;
    int trials = 100;
    int inputs = 4;
    double tol = 1e-5;
    double tol64 = 1e-10;
    double grad_tol = 1e-4;
    double perturbation = 1e-5;
    uint64_t seed = 1;
    bool inject_fault = false;
    bool skip_grad = false;
  } vf;
  auto* c_vf = app.add_subcommand("verify", "embedding equivalence and gradient checks");
  c_vf->add_option("arch", vf.arch, "architecture JSON file or builtin:NAME")->required();
  c_vf->add_option("--weights", vf.weights, "weight file (default: random per trial)");
  c_vf->add_option("--trials", vf.trials, "randomized trials")->capture_default_str();
  c_vf->add_option("--inputs", vf.inputs, "inputs per trial")->capture_default_str();
  c_vf->add_option("--tol", vf.tol, "32-bit logit tolerance")->capture_default_str();
  c_vf->add_option("--tol64", vf.tol64, "64-bit logit tolerance")->capture_default_str();
  c_vf->add_option("--grad-tol", vf.grad_tol, "finite-difference relative tolerance")
      ->capture_default_str();
  c_vf->add_option("--perturbation", vf.perturbation, "finite-difference step")->capture_default_str();
  c_vf->add_option("--seed", vf.seed, "random seed")->capture_default_str();
  c_vf->add_flag("--inject-fault", vf.inject_fault, "corrupt the reference weights (harness test)");
  c_vf->add_flag("--skip-grad", vf.skip_grad, "skip the finite-difference check");
  c_vf->add_option("--manifest", vf.manifest, "manifest path");
  c_vf->callback([&] {
    action = [&] {
      Manifest m("verify");
      m.set_seed(vf.seed);
      const Architecture arch = LoadArch(vf.arch);
      if (vf.trials < 1 || vf.inputs < 1) throw UsageError("--trials and --inputs must be >= 1");
      std::optional<WeightStore> fixed;
      if (!vf.weights.empty()) fixed = LoadWeights(vf.weights);
      const bool split = arch.transform == TransformTag::kProposed ||
                         arch.transform == TransformTag::kIdeal;
      json doc;
      doc["architecture"] = arch.name;
      double max32 = 0, max64 = 0;
      bool eq_pass = true;
      for (int t = 0; t < vf.trials; ++t) {
        const uint64_t s = vf.seed + static_cast<uint64_t>(t);
        const WeightStore w = fixed ? *fixed : InitWeights(arch, s);
        Architecture ref_arch = arch;
        WeightStore ref_w = w;
        if (split) {
          Embedding e = EmbedBlockDiagonal(arch, w);
          ref_arch = std::move(e.baseline);
          ref_w = std::move(e.weights);
        }
        if (vf.inject_fault) CorruptFirstDense(ref_w, ref_arch);
        const auto r32 = CheckEquivalence<float>(arch, w, ref_arch, ref_w, vf.inputs, s, vf.tol);
        const auto r64 = CheckEquivalence<double>(arch, w, ref_arch, ref_w, vf.inputs, s, vf.tol64);
        max32 = std::max(max32, r32.max_abs_diff);
        max64 = std::max(max64, r64.max_abs_diff);
        eq_pass = eq_pass && r32.pass && r64.pass;
      }
      doc["equivalence"] = {{"reference", split ? "block_diagonal_embedding" : "self"},
                            {"trials", vf.trials},
                            {"max_abs_diff_32", max32},
                            {"max_abs_diff_64", max64},
                            {"tol_32", vf.tol},
                            {"tol_64", vf.tol64},
                            {"pass", eq_pass}};
      bool grad_pass = true;
      if (vf.skip_grad) {
        doc["gradient"] = {{"skipped", true}};
      } else {
        const auto w64 = CastWeights<double>(fixed ? *fixed : InitWeights(arch, vf.seed));
        const SmoothInput in = SampleSmoothInput(arch, w64, 2, vf.seed, 1e-3, 20);
        const Tensor<double>& x = in.x;
        const int classes = InferShapes(arch).classes;
        const std::vector<int> labels{0, 1 % classes};
        const GradCheckReport g = FiniteDiffCheck(arch, w64, x, labels, vf.perturbation, vf.grad_tol);
        grad_pass = g.pass;
        doc["gradient"] = {{"checked", g.checked},
                           {"worst_relative_error", g.worst_relative_error},
                           {"offending_weight", g.offending_weight},
                           {"kink_margin", in.margin},
                           {"max_abs_error", g.max_abs_error},
                           {"max_abs_gradient", g.max_abs_gradient},
                           {"tol", vf.grad_tol},
                           {"pass", g.pass}};
      }
      doc["pass"] = eq_pass && grad_pass;
      out << doc.dump(2) << "\n";
      m.config() = {{"arch", vf.arch},       {"weights", vf.weights}, {"trials", vf.trials},
                    {"inputs", vf.inputs},   {"tol", vf.tol},         {"tol64", vf.tol64},
                    {"grad_tol", vf.grad_tol}, {"inject_fault", vf.inject_fault},
                    {"skip_grad", vf.skip_grad}};
      m.AddInput(vf.arch);
      m.AddInput(vf.weights);
      if (!vf.manifest.empty()) m.Write(vf.manifest);
      if (!(eq_pass && grad_pass)) {
        err << "verify: oracle check failed\n";
        throw OracleFailure{};
      }
    };
  });

  // train ------------------------------------------------------------------
  struct {
    std::string arch, out, history, manifest;
    TrainConfig cfg;
    DataOptions data;
  } tn;
  auto* c_tn = app.add_subcommand("train", "train an architecture with plain SGD");
  c_tn->add_option("arch", tn.arch, "architecture JSON file or builtin:NAME")->required();
  c_tn->add_option("--out", tn.out, "weight file")->required();
  c_tn->add_option("--history", tn.history, "history CSV (default <out>.history.csv)");
  c_tn->add_option("--epochs", tn.cfg.epochs, "epochs")->capture_default_str();
  c_tn->add_option("--batch-size", tn.cfg.batch_size, "mini-batch size")->capture_default_str();
  c_tn->add_option("--lr", tn.cfg.learning_rate, "learning rate")->capture_default_str();
  c_tn->add_option("--seed", tn.cfg.seed, "init and shuffle seed")->capture_default_str();
  c_tn->add_option("--manifest", tn.manifest, "manifest path (default <out>.manifest.json)");
  tn.data.Register(c_tn);
  c_tn->callback([&] {
    action = [&] {
      Manifest m("train");
      m.set_seed(tn.cfg.seed);
      const Architecture arch = LoadArch(tn.arch);
      ValidateTrainConfig(tn.cfg);
      auto [train, test] = tn.data.Load();
      TrainOptions opts;
      if (test) opts.test = &*test;
      const TrainResult r = Train(arch, train, tn.cfg, opts);
      SaveWeights(r.weights, tn.out);
      std::string csv = "epoch,train_acc,test_acc,loss\n";
      char buf[128];
      for (const auto& e : r.history) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,", e.epoch, e.train_acc);
        csv += buf;
        if (e.test_acc) {
          std::snprintf(buf, sizeof buf, "%.6f", *e.test_acc);
          csv += buf;
        }
        std::snprintf(buf, sizeof buf, ",%.9g\n", e.loss);
        csv += buf;
      }
      const std::string history = tn.history.empty() ? tn.out + ".history.csv" : tn.history;
      WriteFile(history, csv);
      json summary = {{"architecture", arch.name}, {"epochs", r.history.size()}, {"weights", tn.out}};
      if (!r.history.empty()) {
        summary["final_train_acc"] = r.history.back().train_acc;
        summary["final_test_acc"] =
            r.history.back().test_acc ? json(*r.history.back().test_acc) : json(nullptr);
      }
      out << summary.dump(2) << "\n";
      m.config() = {{"arch", tn.arch},
                    {"epochs", tn.cfg.epochs},
                    {"batch_size", tn.cfg.batch_size},
                    {"learning_rate", tn.cfg.learning_rate},
                    {"data", tn.data.ToJson()}};
      m.AddInput(tn.arch);
      m.AddOutput(tn.out);
      m.AddOutput(history);
      m.Write(tn.manifest.empty() ? tn.out + ".manifest.json" : tn.manifest);
    };
  });

  // search -----------------------------------------------------------------
  struct {
    std::string arch, evaluator = "internal", policy = "first_violation_revert", out_dir;
    SearchConfig cfg;
    TrainConfig train;
    DataOptions data;
    double timeout = 3600;
    bool global_baseline = false;
  } sr;
  auto* c_sr = app.add_subcommand("search", "greedy per-block split-factor search");
  c_sr->add_option("arch", sr.arch, "architecture JSON file or builtin:NAME")->required();
  c_sr->add_option("--out-dir", sr.out_dir, "output directory")->required();
  c_sr->add_option("--threshold", sr.cfg.threshold, "allowed accuracy drop, percentage points")
      ->capture_default_str();
  c_sr->add_option("--policy", sr.policy, "first_violation_revert or max_within_threshold")
      ->capture_default_str();
  c_sr->add_option("--evaluator", sr.evaluator, "internal, table:<file> or external:<command>")
      ->capture_default_str();
  c_sr->add_option("--ladder", sr.cfg.ladder, "ascending factor ladder")->delimiter(',');
  c_sr->add_flag("--global-baseline", sr.global_baseline, "measure the baseline once");
  c_sr->add_flag("--fusion-relu", sr.cfg.fusion_relu, "relu after each fusion conv");
  c_sr->add_option("--timeout", sr.timeout, "external evaluator timeout, seconds")
      ->capture_default_str();
  c_sr->add_option("--epochs", sr.train.epochs, "epochs for the first baseline")->capture_default_str();
  c_sr->add_option("--fine-tune-epochs", sr.train.fine_tune_epochs, "epochs for later evaluations")
      ->capture_default_str();
  c_sr->add_option("--batch-size", sr.train.batch_size, "mini-batch size")->capture_default_str();
  c_sr->add_option("--lr", sr.train.learning_rate, "learning rate")->capture_default_str();
  c_sr->add_option("--seed", sr.train.seed, "training seed")->capture_default_str();
  sr.data.Register(c_sr);
  c_sr->callback([&] {
    action = [&] {
      Manifest m("search");
      m.set_seed(sr.train.seed);
      sr.cfg.policy = ParseSearchPolicy(sr.policy);
      sr.cfg.per_block_baseline = !sr.global_baseline;
      sr.cfg.initial_budget = sr.train.epochs;
      sr.cfg.fine_tune_budget = sr.train.fine_tune_epochs;
      try {
        ValidateSearchConfig(sr.cfg);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      const Architecture arch = LoadArch(sr.arch);
      std::unique_ptr<Evaluator> ev;
      std::string table_path;
      if (sr.evaluator == "internal") {
        auto [train, test] = sr.data.Load();
        ev = std::make_unique<InternalEvaluator>(std::move(train), std::move(test), sr.train);
      } else if (sr.evaluator.rfind("table:", 0) == 0) {
        table_path = sr.evaluator.substr(6);
        ev = std::make_unique<TableMockEvaluator>(TableMockEvaluator::FromFile(table_path));
      } else if (sr.evaluator.rfind("external:", 0) == 0) {
        ev = std::make_unique<ExternalEvaluator>(
            ExternalEvaluator::FromCommandLine(sr.evaluator.substr(9), sr.timeout));
      } else {
        throw UsageError("unknown evaluator '" + sr.evaluator + "'");
      }
      const SearchResult r = GreedySplitSearch(arch, sr.cfg, *ev);
      const fs::path dir(sr.out_dir);
      const std::string plan_path = (dir / "plan.json").string();
      const std::string trace_path = (dir / "trace.json").string();
      const std::string table_out = (dir / "trace_table.csv").string();
      WriteFile(plan_path, SerializeSplitPlan(r.plan).dump(2) + "\n");
      WriteFile(trace_path, TraceToJson(r.trace, sr.cfg).dump(2) + "\n");
      WriteFile(table_out, TraceTableCsv(r.trace, sr.cfg, static_cast<int>(arch.blocks.size())));
      out << SerializeSplitPlan(r.plan).dump() << "\n";
      m.config() = {{"arch", sr.arch},
                    {"evaluator", sr.evaluator},
                    {"threshold", sr.cfg.threshold},
                    {"policy", sr.policy},
                    {"ladder", sr.cfg.ladder},
                    {"per_block_baseline", sr.cfg.per_block_baseline},
                    {"fusion_relu", sr.cfg.fusion_relu},
                    {"epochs", sr.train.epochs},
                    {"fine_tune_epochs", sr.train.fine_tune_epochs},
                    {"batch_size", sr.train.batch_size},
                    {"learning_rate", sr.train.learning_rate}};
      if (sr.evaluator == "internal") m.config()["data"] = sr.data.ToJson();
      m.AddInput(sr.arch);
      m.AddInput(table_path);
      m.AddOutput(plan_path);
      m.AddOutput(trace_path);
      m.AddOutput(table_out);
      m.Write((dir / "manifest.json").string());
    };
  });

  // builtin ----------------------------------------------------------------
  struct {
    std::string name, out;
  } bi;
  auto* c_bi = app.add_subcommand("builtin", "list or print built-in architectures");
  c_bi->add_option("name", bi.name, "architecture name");
  c_bi->add_option("--out", bi.out, "write to file instead of stdout");
  c_bi->callback([&] {
    action = [&] {
      if (bi.name.empty()) {
        for (const auto& a : BuiltinArchitectures()) out << a.name << "\n";
        return;
      }
      const std::string text = SerializeArchitectureText(BuiltinByName(bi.name));
      if (bi.out.empty())
        out << text;
      else
        WriteFile(bi.out, text);
    };
  });

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("splitforge");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (action) action();
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const OracleFailure&) {
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace splitforge
