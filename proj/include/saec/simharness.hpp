#pragma once

/// End-to-end experiment harness: dataset folders, synthetic edge/cloud
/// classifier stubs, the routed run, and report/trace serialization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "saec/calibration.hpp"
#include "saec/complexity.hpp"
#include "saec/error.hpp"
#include "saec/format.hpp"
#include "saec/image.hpp"
#include "saec/parallel.hpp"
#include "saec/policy.hpp"
#include "saec/quant.hpp"
#include "saec/scheduler.hpp"

namespace saec::sim {

namespace fs = std::filesystem;
using quant::Label;
using quant::LogitPair;

struct Sample {
  fs::path path;     // absolute or as discovered
  std::string name;  // path relative to the dataset root, '/'-separated
  Label truth = Label::Good;
};

struct Dataset {
  fs::path root;
  std::vector<Sample> samples;
};

/// Reads `good/` and `defect/` under root (or under root/val). Samples are
/// ordered lexicographically by their root-relative path.
inline Dataset load_dataset(const fs::path& root) {
  fs::path base = root;
  if (fs::is_directory(root / "val" / "good") || fs::is_directory(root / "val" / "defect")) {
    base = root / "val";
  }
  Dataset ds{root, {}};
  for (const char* cls : {"good", "defect"}) {
    const fs::path dir = base / cls;
    if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingClassDir, dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || !has_image_extension(entry.path())) continue;
      ds.samples.push_back({entry.path(), fs::relative(entry.path(), root).generic_string(),
                            std::string_view(cls) == "defect" ? Label::Defect : Label::Good});
    }
  }
  if (ds.samples.empty()) throw Error(ErrorCode::EmptyDataset, root.string());
  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const Sample& a, const Sample& b) { return a.name < b.name; });
  return ds;
}

/// Stateless counter-based random stream: draw(k) depends only on the key
/// and k, so results do not depend on evaluation order.
class CounterStream {
 public:
  explicit CounterStream(std::uint64_t key) : key_(mix(key)) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// FNV-1a 64.
  static std::uint64_t digest(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
      h ^= c;
      h *= 0x100000001B3ull;
    }
    return h;
  }

  std::uint64_t bits(std::uint64_t counter) const { return mix(key_ ^ mix(counter + 1)); }

  /// Uniform in [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
};

enum class Role { Edge, Cloud };

/// Synthetic classifier: accuracy depends on which side of the complexity
/// knee the sample falls; confidence grows with sharpness.
struct StubModelSpec {
  Role role = Role::Edge;
  double acc_low_complexity = 1.0;
  double acc_high_complexity = 1.0;
  double complexity_knee = 0.0;
  double confidence_sharpness = 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(acc_low_complexity >= 0.0 && acc_low_complexity <= 1.0) ||
        !(acc_high_complexity >= 0.0 && acc_high_complexity <= 1.0)) {
      throw Error(ErrorCode::ConfigError, "stub accuracies must lie in [0,1]");
    }
    if (!(confidence_sharpness > 0.0) || !std::isfinite(confidence_sharpness)) {
      throw Error(ErrorCode::ConfigError, "confidence_sharpness must be > 0");
    }
    if (!std::isfinite(complexity_knee)) throw Error(ErrorCode::ConfigError, "complexity_knee must be finite");
  }

  /// Per-role seed derived from the single run seed.
  static std::uint64_t derive_seed(std::uint64_t run_seed, Role role) {
    return CounterStream::mix(run_seed ^ (role == Role::Edge ? 0x45444745ull : 0x434C4F55ull));
  }
};

struct StubOutput {
  LogitPair logits;
  Label predicted = Label::Good;
  double latency_s = 0.0;
  std::optional<sched::DefectReport> report;
};

inline StubOutput stub_predict(const StubModelSpec& spec, const std::string& sample_name, Label truth,
                               double s_c, const sched::CostModel& cost) {
  const CounterStream stream(spec.seed ^ CounterStream::digest(sample_name));
  const double acc = s_c < spec.complexity_knee ? spec.acc_low_complexity : spec.acc_high_complexity;
  const bool correct = stream.uniform(0) < acc;
  const Label predicted = correct ? truth : (truth == Label::Good ? Label::Defect : Label::Good);

  const double p_top =
      std::clamp(0.5 + 0.5 * std::tanh(spec.confidence_sharpness * stream.uniform(1)), 0.5, 1.0 - 1e-12);
  const double logit = std::log(p_top / (1.0 - p_top));

  StubOutput out;
  out.predicted = predicted;
  out.logits = predicted == Label::Defect ? LogitPair{0.0, logit} : LogitPair{logit, 0.0};
  out.latency_s = spec.role == Role::Edge ? cost.t_edge_per_image : cost.t_cloud_per_image;
  if (spec.role == Role::Cloud && predicted == Label::Defect) {
    const double w = 0.3 * stream.uniform(2);
    const double h = 0.3 * stream.uniform(3);
    sched::BoundingBox box{stream.uniform(4) * (1.0 - w), stream.uniform(5) * (1.0 - h), w, h};
    out.report = sched::DefectReport{{box}, "synthetic defect region"};
    out.report->validate();
  }
  return out;
}

enum class Mode { Hybrid, EdgeOnly, CloudOnly };

constexpr const char* to_string(Mode m) noexcept {
  switch (m) {
    case Mode::Hybrid: return "hybrid";
    case Mode::EdgeOnly: return "edge_only";
    case Mode::CloudOnly: return "cloud_only";
  }
  return "unknown";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "hybrid") return Mode::Hybrid;
  if (s == "edge_only") return Mode::EdgeOnly;
  if (s == "cloud_only") return Mode::CloudOnly;
  throw Error(ErrorCode::ConfigError, "mode must be hybrid, edge_only or cloud_only, got '" + s + "'");
}

struct TraceRow {
  std::string name;
  double s_c = 0.0;
  sched::Decision decision;
  Label truth = Label::Good;
  double t_contrib_s = 0.0;
  double energy_mwh = 0.0;
  std::optional<sched::DefectReport> report;  // set only for defect decisions
};

struct RunCounts {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t edge = 0;
  std::size_t cloud = 0;
  std::size_t complexity_route = 0;
  std::size_t edge_accept = 0;
  std::size_t edge_reject = 0;

  friend bool operator==(const RunCounts&, const RunCounts&) = default;
};

struct RunReport {
  double accuracy = 0.0;
  double total_time_s = 0.0;
  double avg_time_per_image_s = 0.0;
  double cloud_fraction = 0.0;
  double total_energy_mwh = 0.0;
  std::optional<double> energy_per_correct_mwh;
  RunCounts counts;
};

struct ExperimentConfig {
  fs::path dataset;
  complexity::ComplexityWeights weights;
  codec::QualityFactor quality{50};
  RoutingPolicy policy;
  StubModelSpec edge{Role::Edge};
  StubModelSpec cloud{Role::Cloud};
  sched::CostModel cost;
  std::uint64_t seed = 0;
  Mode mode = Mode::Hybrid;
  unsigned threads = 0;  // 0 = hardware concurrency; never affects results
};

struct ExperimentResult {
  RunReport report;
  std::vector<TraceRow> trace;
};

/// S_c for every sample, in dataset order.
inline std::vector<double> score_dataset(const Dataset& ds, const complexity::ComplexityWeights& weights,
                                         codec::QualityFactor q, unsigned threads = 0) {
  std::vector<double> scores(ds.samples.size());
  parallel_for(ds.samples.size(), threads, [&](std::size_t i) {
    scores[i] = complexity::complexity_score(load_grayscale(ds.samples[i].path), weights, q).s_c;
  });
  return scores;
}

/// Runs both stubs over a scored split to produce calibration records.
inline std::vector<calib::CalibrationRecord> stub_calibration_records(const Dataset& ds,
                                                                      std::span<const double> scores,
                                                                      const StubModelSpec& edge,
                                                                      const StubModelSpec& cloud,
                                                                      const sched::CostModel& cost) {
  std::vector<calib::CalibrationRecord> out;
  out.reserve(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    out.push_back({scores[i], stub_predict(edge, s.name, s.truth, scores[i], cost).logits,
                   stub_predict(cloud, s.name, s.truth, scores[i], cost).logits, s.truth});
  }
  return out;
}

/// Routes and evaluates every sample given precomputed complexity scores.
///
/// Run-scope accounting: T_total = N*t_cpx + max(edge busy, cloud busy), where
/// the complexity term is charged only in hybrid mode (the single-tier
/// baselines never run the estimator). Energy charges scoring to the edge.
inline ExperimentResult run_scored(const Dataset& ds, std::span<const double> scores, const ExperimentConfig& cfg) {
  cfg.policy.validate();
  cfg.edge.validate();
  cfg.cloud.validate();
  cfg.cost.validate();
  const std::size_t n = ds.samples.size();
  if (n == 0) throw Error(ErrorCode::EmptyDataset, ds.root.string());
  if (scores.size() != n) throw Error(ErrorCode::LengthMismatch, "one score per sample required");

  StubModelSpec edge = cfg.edge;
  StubModelSpec cloud = cfg.cloud;
  edge.role = Role::Edge;
  cloud.role = Role::Cloud;
  edge.seed = StubModelSpec::derive_seed(cfg.seed, Role::Edge);
  cloud.seed = StubModelSpec::derive_seed(cfg.seed, Role::Cloud);

  const double t_cpx = cfg.mode == Mode::Hybrid ? cfg.cost.t_cpx_per_image : 0.0;
  const RoutingPolicy& pol = cfg.policy;

  std::vector<TraceRow> trace(n);
  std::vector<std::uint8_t> used_edge(n, 0);
  std::vector<std::uint8_t> used_cloud(n, 0);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const Sample& s = ds.samples[i];
    TraceRow& row = trace[i];
    row.name = s.name;
    row.s_c = scores[i];
    row.truth = s.truth;

    auto run_edge = [&] {
      used_edge[i] = 1;
      return stub_predict(edge, s.name, s.truth, scores[i], cfg.cost);
    };
    auto finish_cloud = [&](sched::Reason reason) {
      used_cloud[i] = 1;
      const StubOutput out = stub_predict(cloud, s.name, s.truth, scores[i], cfg.cost);
      const auto pred = quant::decide(out.logits, {pol.tau, pol.T_cloud});
      row.decision = {sched::Site::Cloud, reason, pred.label, pred.p_defect};
      if (pred.label == Label::Defect) row.report = out.report.value_or(sched::DefectReport{});
    };
    auto finish_edge = [&](const StubOutput& out) {
      const auto pred = quant::decide(out.logits, {0.5, pol.T_edge});
      row.decision = {sched::Site::Edge, sched::Reason::EdgeAccept, pred.label, pred.p_defect};
      if (pred.label == Label::Defect) row.report = sched::DefectReport{};
    };

    switch (cfg.mode) {
      case Mode::EdgeOnly:
        finish_edge(run_edge());
        break;
      case Mode::CloudOnly:
        finish_cloud(sched::Reason::ComplexityRoute);
        break;
      case Mode::Hybrid: {
        if (scores[i] >= pol.tau_S) {
          finish_cloud(sched::Reason::ComplexityRoute);
          break;
        }
        const StubOutput out = run_edge();
        const auto r = sched::route(scores[i], sched::edge_confidence(out.logits, pol.T_edge), pol);
        if (r.site == sched::Site::Edge) {
          finish_edge(out);
        } else {
          finish_cloud(r.reason);
        }
        break;
      }
    }
    const double t_edge = used_edge[i] ? cfg.cost.t_edge_per_image : 0.0;
    const double t_cloud = used_cloud[i] ? cfg.cost.t_cloud_per_image : 0.0;
    row.t_contrib_s = t_cpx + t_edge + t_cloud;
    row.energy_mwh = cfg.cost.edge_energy_mwh(t_cpx + t_edge) + cfg.cost.cloud_energy_mwh(t_cloud);
  });

  RunCounts c;
  c.n = n;
  std::size_t edge_runs = 0;
  std::size_t cloud_runs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = trace[i].decision;
    c.correct += d.label == trace[i].truth;
    (d.site == sched::Site::Edge ? c.edge : c.cloud) += 1;
    switch (d.reason) {
      case sched::Reason::ComplexityRoute: ++c.complexity_route; break;
      case sched::Reason::EdgeAccept: ++c.edge_accept; break;
      case sched::Reason::EdgeReject: ++c.edge_reject; break;
    }
    edge_runs += used_edge[i];
    cloud_runs += used_cloud[i];
  }

  const double cpx_busy = static_cast<double>(n) * t_cpx;
  const double edge_busy = static_cast<double>(edge_runs) * cfg.cost.t_edge_per_image;
  const double cloud_busy = static_cast<double>(cloud_runs) * cfg.cost.t_cloud_per_image;

  RunReport rep;
  rep.counts = c;
  rep.accuracy = static_cast<double>(c.correct) / static_cast<double>(n);
  rep.total_time_s = sched::latency_total(cpx_busy, edge_busy, cloud_busy);
  rep.avg_time_per_image_s = rep.total_time_s / static_cast<double>(n);
  rep.cloud_fraction = static_cast<double>(c.cloud) / static_cast<double>(n);
  rep.total_energy_mwh = cfg.cost.edge_energy_mwh(cpx_busy + edge_busy) + cfg.cost.cloud_energy_mwh(cloud_busy);
  if (c.correct > 0) rep.energy_per_correct_mwh = sched::energy_per_correct(rep.total_energy_mwh, c.correct);
  return {rep, std::move(trace)};
}

inline ExperimentResult run_experiment(const Dataset& ds, const ExperimentConfig& cfg) {
  const auto scores = score_dataset(ds, cfg.weights, cfg.quality, cfg.threads);
  return run_scored(ds, scores, cfg);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json stub_to_json(const StubModelSpec& s) {
  nlohmann::ordered_json j;
  j["acc_low"] = s.acc_low_complexity;
  j["acc_high"] = s.acc_high_complexity;
  j["knee"] = s.complexity_knee;
  j["sharpness"] = s.confidence_sharpness;
  return j;
}

inline nlohmann::ordered_json cost_to_json(const sched::CostModel& c) {
  nlohmann::ordered_json j;
  j["t_cpx"] = c.t_cpx_per_image;
  j["t_edge"] = c.t_edge_per_image;
  j["t_cloud"] = c.t_cloud_per_image;
  j["p_edge"] = c.p_edge;
  j["p_cloud"] = c.p_cloud;
  return j;
}

/// Echo of every input that influences results (thread count excluded).
inline nlohmann::ordered_json config_echo(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["dataset"] = cfg.dataset.generic_string();
  j["weights"] = cfg.weights.values();
  j["quality"] = cfg.quality.value();
  j["policy"] = to_json(cfg.policy);
  j["edge"] = stub_to_json(cfg.edge);
  j["cloud"] = stub_to_json(cfg.cloud);
  j["cost"] = cost_to_json(cfg.cost);
  j["seed"] = cfg.seed;
  j["mode"] = to_string(cfg.mode);
  return j;
}

enum class ReportFormat { Json, Csv };

inline constexpr const char* kReportCsvHeader =
    "accuracy,total_time_s,avg_time_per_image_s,cloud_fraction,total_energy_mwh,energy_per_correct_mwh";

inline std::string emit_report(const RunReport& r, ReportFormat format,
                               const std::optional<nlohmann::ordered_json>& config = std::nullopt) {
  const std::string epc = r.energy_per_correct_mwh ? fixed6(*r.energy_per_correct_mwh) : "";
  std::ostringstream os;
  if (format == ReportFormat::Csv) {
    os << kReportCsvHeader << '\n'
       << fixed6(r.accuracy) << ',' << fixed6(r.total_time_s) << ',' << fixed6(r.avg_time_per_image_s) << ','
       << fixed6(r.cloud_fraction) << ',' << fixed6(r.total_energy_mwh) << ',' << (epc.empty() ? "NA" : epc)
       << '\n';
    return os.str();
  }
  const auto& c = r.counts;
  os << "{\n"
     << "  \"accuracy\": " << fixed6(r.accuracy) << ",\n"
     << "  \"total_time_s\": " << fixed6(r.total_time_s) << ",\n"
     << "  \"avg_time_per_image_s\": " << fixed6(r.avg_time_per_image_s) << ",\n"
     << "  \"cloud_fraction\": " << fixed6(r.cloud_fraction) << ",\n"
     << "  \"total_energy_mwh\": " << fixed6(r.total_energy_mwh) << ",\n"
     << "  \"energy_per_correct_mwh\": " << (epc.empty() ? "null" : epc) << ",\n"
     << "  \"counts\": {\"n\": " << c.n << ", \"correct\": " << c.correct << ", \"edge\": " << c.edge
     << ", \"cloud\": " << c.cloud << ", \"complexity_route\": " << c.complexity_route
     << ", \"edge_accept\": " << c.edge_accept << ", \"edge_reject\": " << c.edge_reject << "}";
  if (config) os << ",\n  \"config\": " << config->dump();
  os << "\n}\n";
  return os.str();
}

inline RunReport parse_report_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RunReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.total_time_s = j.at("total_time_s").get<double>();
    r.avg_time_per_image_s = j.at("avg_time_per_image_s").get<double>();
    r.cloud_fraction = j.at("cloud_fraction").get<double>();
    r.total_energy_mwh = j.at("total_energy_mwh").get<double>();
    if (!j.at("energy_per_correct_mwh").is_null()) r.energy_per_correct_mwh = j.at("energy_per_correct_mwh").get<double>();
    const auto& c = j.at("counts");
    r.counts = {c.at("n").get<std::size_t>(),          c.at("correct").get<std::size_t>(),
                c.at("edge").get<std::size_t>(),       c.at("cloud").get<std::size_t>(),
                c.at("complexity_route").get<std::size_t>(), c.at("edge_accept").get<std::size_t>(),
                c.at("edge_reject").get<std::size_t>()};
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed report: ") + e.what());
  }
}

inline constexpr const char* kTraceCsvHeader = "path,s_c,site,reason,label,truth,p_defect,t_contrib_s,energy_mwh";

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = std::string(kTraceCsvHeader) + "\n";
  for (const auto& r : trace) {
    out += r.name + "," + fixed6(r.s_c) + "," + sched::to_string(r.decision.site) + "," +
           sched::to_string(r.decision.reason) + "," + quant::to_string(r.decision.label) + "," +
           quant::to_string(r.truth) + "," + fixed6(r.decision.p_defect) + "," + fixed6(r.t_contrib_s) + "," +
           fixed6(r.energy_mwh) + "\n";
  }
  return out;
}

/// One {"bboxes":...,"desc":...} object per defect decision, in trace order.
inline std::string defects_jsonl(const std::vector<TraceRow>& trace) {
  std::string out;
  for (const auto& r : trace) {
    if (r.report) out += sched::to_json(*r.report).dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment config file

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key, const std::string& prefix = "") {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorCode::ConfigError, "missing required key '" + prefix + key + "'");
  }
  return j.at(key);
}

inline double require_number(const nlohmann::json& j, const std::string& key, const std::string& prefix = "") {
  const auto& v = require(j, key, prefix);
  if (!v.is_number()) throw Error(ErrorCode::ConfigError, "key '" + prefix + key + "' must be numeric");
  return v.get<double>();
}

inline StubModelSpec parse_stub(const nlohmann::json& j, Role role, const std::string& prefix) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "key '" + prefix + "' must be an object");
  StubModelSpec s;
  s.role = role;
  s.acc_low_complexity = require_number(j, "acc_low", prefix + ".");
  s.acc_high_complexity = require_number(j, "acc_high", prefix + ".");
  s.complexity_knee = require_number(j, "knee", prefix + ".");
  s.confidence_sharpness = require_number(j, "sharpness", prefix + ".");
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, "key '" + prefix + "': " + e.what());
  }
  return s;
}

}  // namespace detail

/// Parses and validates an experiment config. Relative paths resolve
/// against `base_dir`. `seed_override` replaces (or supplies) `seed`.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const fs::path& base_dir,
                                                std::optional<std::uint64_t> seed_override = std::nullopt) {
  using detail::require;
  using detail::require_number;
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  ExperimentConfig cfg;

  const auto& ds = require(j, "dataset");
  if (!ds.is_string()) throw Error(ErrorCode::ConfigError, "key 'dataset' must be a string");
  cfg.dataset = fs::path(ds.get<std::string>());
  if (cfg.dataset.is_relative()) cfg.dataset = base_dir / cfg.dataset;

  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    if (!w.is_array() || w.size() != 5) throw Error(ErrorCode::ConfigError, "key 'weights' must be 5 numbers");
    std::array<double, 5> arr{};
    for (std::size_t i = 0; i < 5; ++i) {
      if (!w[i].is_number()) throw Error(ErrorCode::ConfigError, "key 'weights' must be 5 numbers");
      arr[i] = w[i].get<double>();
    }
    try {
      cfg.weights = complexity::ComplexityWeights(arr);
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, std::string("key 'weights': ") + e.what());
    }
  }
  if (j.contains("quality")) {
    const auto& q = j.at("quality");
    if (!q.is_number_integer() || q.get<int>() < 1 || q.get<int>() > 100) {
      throw Error(ErrorCode::ConfigError, "key 'quality' must be an integer in [1,100]");
    }
    cfg.quality = codec::QualityFactor(q.get<int>());
  }

  const auto& pol = require(j, "policy");
  try {
    if (pol.is_string()) {
      fs::path p(pol.get<std::string>());
      if (p.is_relative()) p = base_dir / p;
      cfg.policy = load_policy(p);
    } else {
      cfg.policy = policy_from_json(pol);
    }
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("key 'policy': ") + e.what());
  }

  cfg.edge = detail::parse_stub(require(j, "edge"), Role::Edge, "edge");
  cfg.cloud = detail::parse_stub(require(j, "cloud"), Role::Cloud, "cloud");

  const auto& cost = require(j, "cost");
  cfg.cost = {require_number(cost, "t_cpx", "cost."), require_number(cost, "t_edge", "cost."),
              require_number(cost, "t_cloud", "cost."), require_number(cost, "p_edge", "cost."),
              require_number(cost, "p_cloud", "cost.")};
  try {
    cfg.cost.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("key 'cost': ") + e.what());
  }

  if (seed_override) {
    cfg.seed = *seed_override;
  } else {
    const auto& seed = require(j, "seed");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
      throw Error(ErrorCode::ConfigError, "key 'seed' must be a nonnegative integer");
    }
    cfg.seed = seed.get<std::uint64_t>();
  }

  const auto& mode = require(j, "mode");
  if (!mode.is_string()) throw Error(ErrorCode::ConfigError, "key 'mode' must be a string");
  cfg.mode = parse_mode(mode.get<std::string>());

  if (j.contains("threads")) {
    if (!j.at("threads").is_number_unsigned()) throw Error(ErrorCode::ConfigError, "key 'threads' must be >= 0");
    cfg.threads = j.at("threads").get<unsigned>();
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const fs::path& path,
                                               std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path(), seed_override);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

/// Writes report.json, trace.csv and defects.jsonl into `out_dir`.
inline void write_outputs(const ExperimentResult& result, const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "report.json", emit_report(result.report, ReportFormat::Json, config_echo(cfg)));
  write_text(out_dir / "trace.csv", trace_csv(result.trace));
  write_text(out_dir / "defects.jsonl", defects_jsonl(result.trace));
}

}  // namespace saec::sim
