// saec: command-line front end for complexity scoring, calibration, routing,
// simulation, the quantization demo and the codec debug cycle.
//
// Exit codes: 0 success, 2 input error, 3 calibration degeneracy,
// 4 config schema error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "saec/saec.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitCalibration = 3;
constexpr int kExitConfig = 4;

int exit_code_for(const saec::Error& e) {
  switch (e.code()) {
    case saec::ErrorCode::ConfigError: return kExitConfig;
    case saec::ErrorCode::DegenerateLabels:
    case saec::ErrorCode::InsufficientData: return kExitCalibration;
    default: return kExitInput;
  }
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs, std::vector<std::string>& errors) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    const fs::path p(in);
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::recursive_directory_iterator(p)) {
        if (entry.is_regular_file() && saec::has_image_extension(entry.path())) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(p, ec)) {
      files.push_back(p);
    } else {
      errors.push_back(in + ": file not found");
    }
  }
  return files;
}

/// Reads `path,l0,l1` rows keyed by path.
std::map<std::string, saec::quant::LogitPair> read_logits_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw saec::Error(saec::ErrorCode::FileNotFound, path.string());
  std::map<std::string, saec::quant::LogitPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (lineno == 1 && line.rfind("path,", 0) == 0)) continue;
    std::stringstream ss(line);
    std::string name, a, b;
    if (!std::getline(ss, name, ',') || !std::getline(ss, a, ',') || !std::getline(ss, b)) {
      throw saec::Error(saec::ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": expected path,l0,l1");
    }
    try {
      out[name] = {std::stod(a), std::stod(b)};
    } catch (const std::exception&) {
      throw saec::Error(saec::ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": bad logit");
    }
  }
  return out;
}

/// Exact match first, then the longest key that is a '/'-aligned suffix of
/// the path, so dataset-relative names like good/a.png match data/good/a.png.
const saec::quant::LogitPair* find_logits(const std::map<std::string, saec::quant::LogitPair>& logits,
                                          const std::string& path) {
  if (const auto it = logits.find(path); it != logits.end()) return &it->second;
  const saec::quant::LogitPair* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& [key, value] : logits) {
    if (key.size() < path.size() && key.size() > best_len && path.ends_with(key) &&
        path[path.size() - key.size() - 1] == '/') {
      best = &value;
      best_len = key.size();
    }
  }
  return best;
}

saec::quant::Matrix read_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw saec::Error(saec::ErrorCode::FileNotFound, path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw saec::Error(saec::ErrorCode::InvalidArgument, path.string() + ": cannot parse '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw saec::Error(saec::ErrorCode::InvalidArgument, path.string() + ": ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw saec::Error(saec::ErrorCode::EmptyInput, path.string() + ": no values");
  saec::quant::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

struct CommonOptions {
  std::string weights = "0.30,0.25,0.20,0.15,0.10";
  int quality = 50;
  unsigned threads = 0;
  int verbosity = 0;
};

int cmd_score(const std::vector<std::string>& inputs, const std::string& out_path, const CommonOptions& opt) {
  const auto weights = saec::complexity::ComplexityWeights::parse(opt.weights);
  const saec::codec::QualityFactor quality(opt.quality);
  std::vector<std::string> errors;
  const auto files = expand_inputs(inputs, errors);
  if (files.empty()) {
    for (const auto& e : errors) std::cerr << e << '\n';
    std::cerr << "no images found\n";
    return kExitInput;
  }
  std::vector<std::optional<saec::complexity::ComplexityScore>> scores(files.size());
  std::vector<std::string> file_errors(files.size());
  saec::parallel_for(files.size(), opt.threads, [&](std::size_t i) {
    try {
      scores[i] = saec::complexity::complexity_score(saec::load_grayscale(files[i]), weights, quality);
    } catch (const saec::Error& e) {
      file_errors[i] = e.what();
    }
  });

  std::ofstream file_out;
  if (!out_path.empty()) {
    file_out.open(out_path, std::ios::binary);
    if (!file_out) throw saec::Error(saec::ErrorCode::IoError, "cannot open " + out_path);
  }
  std::ostream& os = out_path.empty() ? std::cout : file_out;
  os << saec::complexity::kCsvHeader << '\n';
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (scores[i]) {
      os << saec::complexity::csv_row(files[i].generic_string(), *scores[i]) << '\n';
    } else {
      errors.push_back(file_errors[i]);
    }
  }
  for (const auto& e : errors) std::cerr << e << '\n';
  return errors.empty() ? kExitOk : kExitInput;
}

/// Stub-related keys of an experiment config, without requiring a policy.
struct StubSetup {
  saec::complexity::ComplexityWeights weights;
  saec::codec::QualityFactor quality{50};
  saec::sim::StubModelSpec edge;
  saec::sim::StubModelSpec cloud;
  saec::sched::CostModel cost;
  std::uint64_t seed = 0;
};

StubSetup load_stub_setup(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw saec::Error(saec::ErrorCode::FileNotFound, path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw saec::Error(saec::ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  // Reuse the full parser. The policy usually does not exist yet at this
  // stage, so it and the other unused keys are replaced with placeholders.
  if (j.is_object()) {
    j["dataset"] = ".";
    j["policy"] = saec::to_json(saec::RoutingPolicy{});
    j["mode"] = "hybrid";
  }
  const auto cfg = saec::sim::parse_experiment_config(j, path.parent_path(), seed_override);
  StubSetup s{cfg.weights, cfg.quality, cfg.edge, cfg.cloud, cfg.cost, cfg.seed};
  s.edge.seed = saec::sim::StubModelSpec::derive_seed(cfg.seed, saec::sim::Role::Edge);
  s.cloud.seed = saec::sim::StubModelSpec::derive_seed(cfg.seed, saec::sim::Role::Cloud);
  return s;
}

int cmd_logits(const std::string& config, const std::string& dataset_dir, const std::string& out_dir,
               std::optional<std::uint64_t> seed, const CommonOptions& opt) {
  const StubSetup setup = load_stub_setup(config, seed);
  const auto ds = saec::sim::load_dataset(dataset_dir);
  const auto scores = saec::sim::score_dataset(ds, setup.weights, setup.quality, opt.threads);
  const auto records = saec::sim::stub_calibration_records(ds, scores, setup.edge, setup.cloud, setup.cost);
  std::string edge = "path,l0,l1\n";
  std::string cloud = "path,l0,l1\n";
  char buf[128];
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", records[i].edge.good, records[i].edge.defect);
    edge += ds.samples[i].name + buf;
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", records[i].cloud.good, records[i].cloud.defect);
    cloud += ds.samples[i].name + buf;
  }
  fs::create_directories(out_dir);
  saec::sim::write_text(fs::path(out_dir) / "edge_logits.csv", edge);
  saec::sim::write_text(fs::path(out_dir) / "cloud_logits.csv", cloud);
  std::cout << "wrote logits for " << records.size() << " samples to " << out_dir << '\n';
  return kExitOk;
}

int cmd_calibrate(const std::string& heldout, const std::string& edge_logits, const std::string& cloud_logits,
                  double rho, double max_overflow, const std::string& out_dir, const CommonOptions& opt) {
  const auto weights = saec::complexity::ComplexityWeights::parse(opt.weights);
  const auto ds = saec::sim::load_dataset(heldout);
  const auto edge = read_logits_csv(edge_logits);
  const auto cloud = read_logits_csv(cloud_logits);
  const auto scores = saec::sim::score_dataset(ds, weights, saec::codec::QualityFactor(opt.quality), opt.threads);

  std::vector<saec::calib::CalibrationRecord> records;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto e = edge.find(s.name);
    const auto c = cloud.find(s.name);
    if (e == edge.end() || c == cloud.end()) {
      throw saec::Error(saec::ErrorCode::InvalidArgument, "no logits for held-out sample " + s.name);
    }
    records.push_back({scores[i], e->second, c->second, s.truth});
  }
  saec::calib::OperatingTargets targets;
  targets.max_overflow = max_overflow;
  const auto policy = saec::calib::calibrate_policy(records, rho, targets);
  fs::create_directories(out_dir);
  const fs::path out = fs::path(out_dir) / "policy.json";
  saec::save_policy(policy, out);
  std::cout << "tau_S=" << saec::fixed6(policy.tau_S) << " T_edge=" << saec::fixed6(policy.T_edge)
            << " T_cloud=" << saec::fixed6(policy.T_cloud) << '\n'
            << "wrote " << out.string() << '\n';
  return kExitOk;
}

int cmd_route(const std::vector<std::string>& inputs, const std::string& policy_path, const std::string& logits_path,
              const CommonOptions& opt) {
  const auto policy = saec::load_policy(policy_path);
  const auto weights = saec::complexity::ComplexityWeights::parse(opt.weights);
  const saec::codec::QualityFactor quality(opt.quality);
  std::map<std::string, saec::quant::LogitPair> logits;
  if (!logits_path.empty()) logits = read_logits_csv(logits_path);

  std::vector<std::string> errors;
  const auto files = expand_inputs(inputs, errors);
  if (files.empty()) {
    for (const auto& e : errors) std::cerr << e << '\n';
    std::cerr << "no images found\n";
    return kExitInput;
  }
  std::cout << "path,s_c,site,reason\n";
  for (const auto& f : files) {
    try {
      const double s_c = saec::complexity::complexity_score(saec::load_grayscale(f), weights, quality).s_c;
      std::optional<saec::sched::EdgeConfidence> conf;
      if (const auto* l = find_logits(logits, f.generic_string())) conf = saec::sched::edge_confidence(*l, policy.T_edge);
      const auto r = saec::sched::route(s_c, conf, policy);
      std::cout << f.generic_string() << ',' << saec::fixed6(s_c) << ',' << saec::sched::to_string(r.site) << ','
                << saec::sched::to_string(r.reason) << '\n';
    } catch (const saec::Error& e) {
      errors.push_back(f.generic_string() + ": " + e.what());
    }
  }
  for (const auto& e : errors) std::cerr << e << '\n';
  return errors.empty() ? kExitOk : kExitInput;
}

int cmd_simulate(const std::string& config, const std::string& out_dir, std::optional<std::uint64_t> seed,
                 const std::string& mode, std::optional<unsigned> threads, const CommonOptions& opt) {
  auto cfg = saec::sim::load_experiment_config(config, seed);
  if (!mode.empty()) cfg.mode = saec::sim::parse_mode(mode);
  if (threads) cfg.threads = *threads;
  const auto start = std::chrono::steady_clock::now();
  const auto ds = saec::sim::load_dataset(cfg.dataset);
  const auto result = saec::sim::run_experiment(ds, cfg);
  saec::sim::write_outputs(result, cfg, out_dir);
  const auto& r = result.report;
  std::cout << "mode=" << saec::sim::to_string(cfg.mode) << " n=" << r.counts.n
            << " accuracy=" << saec::fixed6(r.accuracy) << " total_time_s=" << saec::fixed6(r.total_time_s)
            << " avg_time_per_image_s=" << saec::fixed6(r.avg_time_per_image_s)
            << " cloud_fraction=" << saec::fixed6(r.cloud_fraction)
            << " total_energy_mwh=" << saec::fixed6(r.total_energy_mwh) << " energy_per_correct_mwh="
            << (r.energy_per_correct_mwh ? saec::fixed6(*r.energy_per_correct_mwh) : "NA") << '\n';
  if (opt.verbosity > 0) {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "wall-clock " << elapsed << " s (informational; reported times are modeled)\n";
  }
  return kExitOk;
}

int cmd_quant(const std::string& matrix_path, std::size_t group_size, const std::string& out_path) {
  const auto w = read_matrix_csv(matrix_path);
  const auto qt = saec::quant::quantize(w, group_size);
  const auto dq = saec::quant::dequantize(qt);
  const double* a = w.data();
  const double* b = dq.data();

  std::cout << "group,mu,sigma,max_abs_err,rms_err\n";
  double total_sq = 0.0;
  double total_max = 0.0;
  std::size_t offset = 0;
  char buf[256];
  for (std::size_t g = 0; g < qt.groups.size(); ++g) {
    const auto& grp = qt.groups[g];
    double sq = 0.0;
    double mx = 0.0;
    for (std::size_t i = 0; i < grp.codes.size(); ++i) {
      const double e = std::abs(a[offset + i] - b[offset + i]);
      sq += e * e;
      mx = std::max(mx, e);
    }
    offset += grp.codes.size();
    total_sq += sq;
    total_max = std::max(total_max, mx);
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", g, grp.mu, grp.sigma, mx,
                  std::sqrt(sq / static_cast<double>(grp.codes.size())));
    std::cout << buf;
  }
  std::snprintf(buf, sizeof buf, "overall max_abs_err=%.17g rms_err=%.17g\n", total_max,
                std::sqrt(total_sq / static_cast<double>(w.size())));
  std::cout << buf;
  if (!out_path.empty()) {
    saec::quant::save(qt, out_path);
    std::cout << "wrote " << out_path << '\n';
  }
  return kExitOk;
}

int cmd_codec_roundtrip(const std::string& in, const std::string& out, int quality) {
  const auto img = saec::load_grayscale(in);
  const auto recon = saec::codec::lossy_cycle(img, saec::codec::QualityFactor(quality));
  saec::save_pgm(recon, out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-aware edge-cloud inspection pipeline: complexity scoring, calibration, routing, simulation"};
  app.require_subcommand(1);
  CommonOptions opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--weights", opt.weights, "Complexity weights w1,w2,w3,w4,w5")->capture_default_str();
    sub->add_option("--quality", opt.quality, "JPEG quality for the residual metric")
        ->check(CLI::Range(1, 100))
        ->capture_default_str();
    sub->add_option("--threads", opt.threads, "Worker threads (0 = all cores)");
    sub->add_flag("-v,--verbose", opt.verbosity, "Verbose logging");
  };

  // score
  std::vector<std::string> score_inputs;
  std::string score_out;
  auto* score = app.add_subcommand("score", "Compute complexity features and S_c for images or folders");
  score->add_option("inputs", score_inputs, "Image files or directories")->required();
  score->add_option("--out", score_out, "Write CSV here instead of standard output");
  add_common(score);

  // logits
  std::string logits_config, logits_dataset, logits_out = ".";
  std::optional<std::uint64_t> logits_seed;
  auto* logits = app.add_subcommand("logits", "Run the stub backends over a dataset and write logit files");
  logits->add_option("config", logits_config, "Experiment config (stub specs, cost, seed)")->required();
  logits->add_option("dataset", logits_dataset, "Dataset root with good/ and defect/")->required();
  logits->add_option("--out", logits_out, "Output directory")->capture_default_str();
  logits->add_option("--seed", logits_seed, "Overrides the config seed");
  add_common(logits);

  // calibrate
  std::string cal_heldout, cal_edge, cal_cloud, cal_out = ".";
  double cal_rho = 0.5;
  double cal_overflow = 0.1;
  auto* calibrate = app.add_subcommand("calibrate", "Fit the routing policy on a held-out split");
  calibrate->add_option("heldout", cal_heldout, "Held-out dataset root")->required();
  calibrate->add_option("--edge-logits", cal_edge, "CSV path,l0,l1 for the edge head")->required();
  calibrate->add_option("--cloud-logits", cal_cloud, "CSV path,l0,l1 for the cloud head")->required();
  calibrate->add_option("--rho", cal_rho, "Cloud budget fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  calibrate->add_option("--max-overflow", cal_overflow, "Allowed cloud fraction above rho from edge rejections")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  calibrate->add_option("--out", cal_out, "Directory for policy.json")->capture_default_str();
  add_common(calibrate);

  // route
  std::vector<std::string> route_inputs;
  std::string route_policy, route_logits;
  auto* route = app.add_subcommand("route", "Route images with a calibrated policy");
  route->add_option("inputs", route_inputs, "Image files or directories")->required();
  route->add_option("--policy", route_policy, "Policy JSON")->required();
  route->add_option("--edge-logits", route_logits, "CSV path,l0,l1 with edge logits");
  add_common(route);

  // simulate
  std::string sim_config, sim_out = ".", sim_mode;
  std::optional<std::uint64_t> sim_seed;
  std::optional<unsigned> sim_threads;
  auto* simulate = app.add_subcommand("simulate", "Run an end-to-end experiment from a config file");
  simulate->add_option("config", sim_config, "Experiment config JSON")->required();
  simulate->add_option("--out", sim_out, "Output directory")->capture_default_str();
  simulate->add_option("--seed", sim_seed, "Overrides the config seed");
  simulate->add_option("--mode", sim_mode, "hybrid|edge_only|cloud_only (overrides config)")
      ->check(CLI::IsMember({"hybrid", "edge_only", "cloud_only"}));
  simulate->add_option("--threads", sim_threads, "Worker threads (0 = all cores)");
  simulate->add_flag("-v,--verbose", opt.verbosity, "Verbose logging");

  // quant
  std::string quant_matrix, quant_out;
  std::size_t quant_group = saec::quant::kDefaultGroupSize;
  auto* quant = app.add_subcommand("quant", "Blockwise NF4 quantization error report for a CSV matrix");
  quant->add_option("matrix", quant_matrix, "CSV of floats, one matrix row per line")->required();
  quant->add_option("--group-size", quant_group, "Values per quantization group")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  quant->add_option("--out", quant_out, "Write the serialized tensor here");

  // codec roundtrip
  std::string codec_in, codec_out;
  int codec_quality = 50;
  auto* codec = app.add_subcommand("codec", "Codec debugging");
  codec->require_subcommand(1);
  auto* roundtrip = codec->add_subcommand("roundtrip", "One lossy compression cycle, PGM output");
  roundtrip->add_option("--quality", codec_quality, "Quality factor")->check(CLI::Range(1, 100))->capture_default_str();
  roundtrip->add_option("input", codec_in, "Input image")->required();
  roundtrip->add_option("output", codec_out, "Output PGM")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*score) return cmd_score(score_inputs, score_out, opt);
    if (*logits) return cmd_logits(logits_config, logits_dataset, logits_out, logits_seed, opt);
    if (*calibrate) return cmd_calibrate(cal_heldout, cal_edge, cal_cloud, cal_rho, cal_overflow, cal_out, opt);
    if (*route) return cmd_route(route_inputs, route_policy, route_logits, opt);
    if (*simulate) return cmd_simulate(sim_config, sim_out, sim_seed, sim_mode, sim_threads, opt);
    if (*quant) return cmd_quant(quant_matrix, quant_group, quant_out);
    if (*roundtrip) return cmd_codec_roundtrip(codec_in, codec_out, codec_quality);
  } catch (const saec::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}
