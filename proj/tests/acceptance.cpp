// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <Eigen/SVD>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "saec/saec.hpp"

namespace {

namespace cx = saec::complexity;
namespace q = saec::quant;
namespace sim = saec::sim;
namespace fs = std::filesystem;

/// Collects failed checks for one criterion.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void near(double actual, double expected, double tol, const std::string& what) {
    if (!(std::abs(actual - expected) <= tol)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, " (got %.12g, want %.12g +- %.3g)", actual, expected, tol);
      failures_.push_back(what + buf);
    }
  }
  void note(const std::string& text) { notes_.push_back(text); }
  const std::vector<std::string>& failures() const { return failures_; }
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<void(Checker&)> body;
};

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

void complexity_suite(Checker& c) {
  const auto flat = saec::GrayImage::filled(saec::kCanvasSide, saec::kCanvasSide, 128);
  const auto s = cx::complexity_score(flat);
  const auto& f = s.features;
  for (double v : {f.h_i, f.e_d, f.lap_var, f.sobel_mean, f.r_j}) c.near(v, 0.0, 1e-6, "constant feature");
  c.near(s.s_c, 0.0, 1e-6, "constant S_c");

  std::vector<std::uint8_t> px(saec::kCanvasSide * saec::kCanvasSide);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(i % 256);
  c.near(cx::intensity_entropy(saec::GrayImage(saec::kCanvasSide, saec::kCanvasSide, std::move(px))), 1.0, 1e-6,
         "uniform-histogram entropy");
  c.near(cx::intensity_entropy(oracle::checkerboard()), 0.125, 1e-6, "two-value entropy");

  const auto step = oracle::vertical_step();
  c.near(cx::sobel_mean_magnitude(step), 10.625, 0.10625, "step Sobel mean");
  c.near(cx::edge_density(step), 1.0 / 192.0, 0.2 / 192.0, "step edge density");

  const auto noise = oracle::noise_image(saec::kCanvasSide, saec::kCanvasSide, 2024);
  const std::array<double, 5> w = {0.30, 0.25, 0.20, 0.15, 0.10};
  c.near(cx::complexity_score(noise).s_c, oracle::complexity_score(noise, w, 50), 1e-6, "golden S_c vs reference");
  c.near(cx::complexity_score(noise).s_c, 3.7253982577, 1e-6, "golden S_c frozen value");
}

void quantizer_equivalence(Checker& c) {
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> n(0.0, 1.0);
  q::Matrix w(100, 100);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
  const auto qt = q::quantize(w, 64);
  const auto dq = q::dequantize(qt);
  const auto& levels = qt.codebook.levels();
  const double half_gap = 0.5 * qt.codebook.largest_gap();

  std::size_t agree = 0;
  std::size_t bound_violations = 0;
  std::size_t in_range = 0;
  const std::size_t total = static_cast<std::size_t>(w.size());
  for (std::size_t g = 0; g < qt.groups.size(); ++g) {
    const std::size_t begin = g * 64;
    const std::size_t end = std::min(total, begin + 64);
    double mu = 0.0;
    for (std::size_t i = begin; i < end; ++i) mu += w.data()[i];
    mu /= static_cast<double>(end - begin);
    double var = 0.0;
    for (std::size_t i = begin; i < end; ++i) var += (w.data()[i] - mu) * (w.data()[i] - mu);
    const double sigma = std::sqrt(var / static_cast<double>(end - begin));
    for (std::size_t i = begin; i < end; ++i) {
      const double z = (w.data()[i] - mu) / sigma;
      agree += qt.groups[g].codes[i - begin] == oracle::nearest_level(z, levels);
      if (std::abs(z) <= 1.0) {
        ++in_range;
        bound_violations += std::abs(w.data()[i] - dq.data()[i]) > sigma * half_gap + 1e-12;
      }
    }
  }
  c.expect(agree == total, "codes agree with exhaustive search: " + std::to_string(agree) + "/" + std::to_string(total));
  c.expect(bound_violations == 0, "half-gap bound violated " + std::to_string(bound_violations) + " times");
  c.note(std::to_string(total) + " values, " + std::to_string(in_range) + " in range");

  q::Matrix constant = q::Matrix::Constant(8, 40, -0.8125);
  constant.block(4, 0, 4, 40).setConstant(3.0);
  c.expect(q::dequantize(q::quantize(constant, 64)) == constant, "constant groups reconstruct exactly");
}

void lora_rank(Checker& c) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  auto random = [&](int r, int k) {
    q::Matrix m(r, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
  };
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d_out = 8 + trial % 9;
    const int d_in = 6 + (trial * 5) % 11;
    const auto qt = q::quantize(random(d_out, d_in), 64);
    const q::LoraAdapter adapter(random(d_out, 2), random(2, d_in), 16.0);
    const Eigen::MatrixXd diff = q::effective_weight(qt, adapter) - q::dequantize(qt);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(diff);
    const auto& sv = svd.singularValues();
    for (Eigen::Index k = 2; k < sv.size(); ++k) worst = std::max(worst, sv(k));
    const q::LoraAdapter zero(q::Matrix::Zero(d_out, 2), q::Matrix::Zero(2, d_in), 16.0);
    c.expect(q::effective_weight(qt, zero) == q::dequantize(qt), "zero adapter gives exact equality");
  }
  c.expect(worst < 1e-9, "trailing singular values < 1e-9");
  char buf[64];
  std::snprintf(buf, sizeof buf, "max trailing singular value %.3g", worst);
  c.note(buf);
}

void codec_suite(Checker& c) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-255.0, 255.0);
  double worst_rt = 0.0;
  double worst_parseval = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    saec::codec::Block x{};
    for (double& v : x) v = u(rng);
    const auto y = saec::codec::dct8_forward(x);
    const auto back = saec::codec::dct8_inverse(y);
    double nx = 0.0, ny = 0.0;
    for (std::size_t k = 0; k < 64; ++k) {
      worst_rt = std::max(worst_rt, std::abs(back[k] - x[k]));
      nx += x[k] * x[k];
      ny += y[k] * y[k];
    }
    worst_parseval = std::max(worst_parseval, std::abs(std::sqrt(nx) - std::sqrt(ny)));
  }
  c.expect(worst_rt < 1e-10, "DCT round trip < 1e-10");
  c.expect(worst_parseval <= 1e-9, "Parseval within 1e-9");

  const auto img = oracle::noise_image(saec::kCanvasSide, saec::kCanvasSide, 77);
  const double r100 = cx::jpeg_residual(img, saec::codec::QualityFactor(100)) * 255.0;
  c.expect(r100 <= 1.0, "q=100 mean residual <= 1.0");
  const double r10 = cx::jpeg_residual(img, saec::codec::QualityFactor(10));
  const double r90 = cx::jpeg_residual(img, saec::codec::QualityFactor(90));
  c.expect(r10 >= r90, "residual at q=10 >= residual at q=90");
  char buf[128];
  std::snprintf(buf, sizeof buf, "rt %.2g, parseval %.2g, q100 %.4f, q10 %.4f, q90 %.4f", worst_rt, worst_parseval,
                r100, r10 * 255.0, r90 * 255.0);
  c.note(buf);
}

void calibration_recovery(Checker& c) {
  for (double t_true : {1.0, 3.0}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(t_true * 1000));
    std::normal_distribution<double> z(0.0, 4.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<saec::calib::LabeledLogits> samples;
    for (int i = 0; i < 10000; ++i) {
      const double l = z(rng);
      const double p = 1.0 / (1.0 + std::exp(-l / t_true));
      samples.push_back({{0.0, l}, u(rng) < p ? q::Label::Defect : q::Label::Good});
    }
    const double t = saec::calib::fit_temperature(samples);
    c.near(t, t_true, 0.1 * t_true, "recovered temperature");
    c.expect(saec::calib::mean_nll(samples, t) <= saec::calib::mean_nll(samples, 1.0), "calibrated NLL <= uncalibrated");
    char buf[64];
    std::snprintf(buf, sizeof buf, "T*=%.0f -> %.4f", t_true, t);
    c.note(buf);
  }
  const std::vector<double> s = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  c.near(saec::calib::percentile_threshold(s, 0.3), 0.7, 0.0, "percentile example");
}

void routing_exactness(Checker& c) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t leaks = 0;
  for (int i = 0; i < 10000; ++i) {
    saec::RoutingPolicy p;
    p.tau_S = u(rng);
    p.tau_s = 0.5 + 0.5 * u(rng);
    p.tau_m = u(rng);
    p.tau_h = 0.7 * u(rng);
    const double s_c = i % 7 == 0 ? p.tau_S : 2.0 * u(rng);
    const saec::sched::EdgeConfidence conf{1.0, 1.0, 0.0};
    const auto r = saec::sched::route(s_c, conf, p);
    leaks += s_c >= p.tau_S && r.site == saec::sched::Site::Edge;
  }
  c.expect(leaks == 0, "no sample with S_c >= tau_S runs on edge");

  saec::RoutingPolicy p;
  p.tau_S = 0.4;
  p.tau_s = 0.8;
  p.tau_m = 0.6;
  p.tau_h = 0.5;
  using saec::sched::Site;
  c.expect(saec::sched::route(0.4, saec::sched::EdgeConfidence{1.0, 1.0, 0.0}, p).site == Site::Cloud,
           "S_c == tau_S goes to cloud");
  c.expect(saec::sched::route(0.39, saec::sched::EdgeConfidence{0.8, 0.6, 0.5}, p).site == Site::Edge,
           "confidences exactly at thresholds are accepted");
  c.expect(saec::sched::route(0.39, saec::sched::EdgeConfidence{std::nextafter(0.8, 0.0), 0.6, 0.5}, p).site ==
               Site::Cloud,
           "s_max just below tau_s escalates");
  c.expect(saec::sched::route(0.39, saec::sched::EdgeConfidence{0.8, 0.6, std::nextafter(0.5, 1.0)}, p).site ==
               Site::Cloud,
           "entropy just above tau_h escalates");
  c.expect(saec::sched::latency_total(1.0, 5.0, 3.0) == 6.0, "latency identity (1,5,3) -> 6");
}

// ---------------------------------------------------------------------------
// End-to-end experiment shared by criteria 7, 8 and 9.

struct Experiment {
  oracle::TempDir dir{"acceptance"};
  sim::Dataset test;
  std::vector<double> test_scores;
  sim::ExperimentConfig base;
  saec::RoutingPolicy policy_full_budget;  // rho = 1
  bool ready = false;
};

Experiment& experiment() {
  static Experiment e;
  if (e.ready) return e;
  const auto t0 = std::chrono::steady_clock::now();
  fixture::write_dataset(e.dir.path() / "test", 500, 101);
  fixture::write_dataset(e.dir.path() / "heldout", 150, 202);
  e.test = sim::load_dataset(e.dir.path() / "test");
  const auto heldout = sim::load_dataset(e.dir.path() / "heldout");

  sim::ExperimentConfig& cfg = e.base;
  cfg.dataset = e.test.root;
  cfg.seed = 2025;
  cfg.cost = {0.002, 0.05, 0.2, 15.0, 300.0};
  e.test_scores = sim::score_dataset(e.test, cfg.weights, cfg.quality);
  const auto heldout_scores = sim::score_dataset(heldout, cfg.weights, cfg.quality);

  const double knee = saec::calib::percentile_threshold(heldout_scores, 0.5);
  cfg.edge = {sim::Role::Edge, 0.60, 0.40, knee, 3.0, 0};
  cfg.cloud = {sim::Role::Cloud, 0.90, 0.90, knee, 3.0, 0};

  auto edge = cfg.edge;
  auto cloud = cfg.cloud;
  edge.seed = sim::StubModelSpec::derive_seed(cfg.seed, sim::Role::Edge);
  cloud.seed = sim::StubModelSpec::derive_seed(cfg.seed, sim::Role::Cloud);
  const auto records = sim::stub_calibration_records(heldout, heldout_scores, edge, cloud, cfg.cost);
  cfg.policy = saec::calib::calibrate_policy(records, 0.5);
  e.policy_full_budget = saec::calib::calibrate_policy(records, 1.0);
  e.ready = true;
  std::printf("  setup: %zu test + %zu held-out images, knee %.4f, tau_S %.4f (%.1f s)\n", e.test.samples.size(),
              heldout.samples.size(), knee, cfg.policy.tau_S,
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return e;
}

sim::RunReport run_mode(const Experiment& e, sim::Mode mode, const saec::RoutingPolicy* policy = nullptr) {
  auto cfg = e.base;
  cfg.mode = mode;
  if (policy) cfg.policy = *policy;
  return sim::run_scored(e.test, e.test_scores, cfg).report;
}

std::string summary(const char* label, const sim::RunReport& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%s: acc %.4f, T_total %.3f s, energy %.3f mWh, mWh/correct %.5f, cloud %.3f",
                label, r.accuracy, r.total_time_s, r.total_energy_mwh, r.energy_per_correct_mwh.value_or(-1.0),
                r.cloud_fraction);
  return buf;
}

void simulation_orderings(Checker& c) {
  const auto& e = experiment();
  const auto hybrid = run_mode(e, sim::Mode::Hybrid);
  const auto edge = run_mode(e, sim::Mode::EdgeOnly);
  const auto cloud = run_mode(e, sim::Mode::CloudOnly);
  c.note(summary("hybrid", hybrid));
  c.note(summary("edge_only", edge));
  c.note(summary("cloud_only", cloud));

  c.expect(e.test.samples.size() == 1000, "N = 1000");
  c.expect(hybrid.accuracy > edge.accuracy, "hybrid accuracy > edge-only accuracy");
  c.expect(hybrid.total_time_s < cloud.total_time_s, "hybrid T_total < cloud-only T_total");
  c.expect(hybrid.energy_per_correct_mwh && cloud.energy_per_correct_mwh &&
               *hybrid.energy_per_correct_mwh < *cloud.energy_per_correct_mwh,
           "hybrid energy per correct < cloud-only");

  // Configured edge rate per sample from the knee; binomial spread of the sum.
  double mean = 0.0;
  double var = 0.0;
  for (double s : e.test_scores) {
    const double p = s < e.base.edge.complexity_knee ? e.base.edge.acc_low_complexity : e.base.edge.acc_high_complexity;
    mean += p;
    var += p * (1.0 - p);
  }
  const double n = static_cast<double>(e.test_scores.size());
  const double rate = mean / n;
  const double sigma = std::sqrt(var) / n;
  c.near(edge.accuracy, rate, 3.0 * sigma, "edge-only accuracy within 3 sigma of configured rate");
  char buf[96];
  std::snprintf(buf, sizeof buf, "edge configured rate %.4f, 3 sigma %.4f", rate, 3.0 * sigma);
  c.note(buf);
}

void ablation_shape(Checker& c) {
  const auto& e = experiment();
  const auto hybrid = run_mode(e, sim::Mode::Hybrid);
  const auto edge = run_mode(e, sim::Mode::EdgeOnly);
  const auto no_routing = run_mode(e, sim::Mode::Hybrid, &e.policy_full_budget);
  c.note(summary("rho=1", no_routing));
  c.expect(hybrid.accuracy - edge.accuracy >= 0.10, "edge-only drops accuracy by >= 10 points");
  c.expect(no_routing.total_time_s > hybrid.total_time_s, "rho=1 raises T_total");
  c.expect(no_routing.total_energy_mwh > hybrid.total_energy_mwh, "rho=1 raises total energy");
  char buf[128];
  std::snprintf(buf, sizeof buf, "accuracy drop %.1f points; rho=1 runtime %+.1f%%, energy %+.1f%%",
                100.0 * (hybrid.accuracy - edge.accuracy),
                100.0 * (no_routing.total_time_s / hybrid.total_time_s - 1.0),
                100.0 * (no_routing.total_energy_mwh / hybrid.total_energy_mwh - 1.0));
  c.note(buf);
}

void determinism(Checker& c) {
  const auto& e = experiment();
  const std::pair<sim::Mode, const saec::RoutingPolicy*> runs[] = {
      {sim::Mode::Hybrid, nullptr},
      {sim::Mode::EdgeOnly, nullptr},
      {sim::Mode::CloudOnly, nullptr},
      {sim::Mode::Hybrid, &e.policy_full_budget},
  };
  int idx = 0;
  for (const auto& [mode, policy] : runs) {
    std::string report[2];
    std::string trace[2];
    for (int rep = 0; rep < 2; ++rep) {
      auto cfg = e.base;
      cfg.mode = mode;
      if (policy) cfg.policy = *policy;
      cfg.threads = rep == 0 ? 1 : 0;
      const fs::path out = e.dir.path() / ("det_" + std::to_string(idx) + "_" + std::to_string(rep));
      // Full pipeline, including scoring, to cover every source of nondeterminism.
      sim::write_outputs(sim::run_experiment(e.test, cfg), cfg, out);
      report[rep] = read_all(out / "report.json");
      trace[rep] = read_all(out / "trace.csv");
    }
    const std::string tag = std::string(sim::to_string(mode)) + (policy ? " rho=1" : "");
    c.expect(!report[0].empty() && report[0] == report[1], "report.json identical for " + tag);
    c.expect(!trace[0].empty() && trace[0] == trace[1], "trace.csv identical for " + tag);
    ++idx;
  }
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "complexity metric suite", 5.0, complexity_suite},
      {2, "quantizer oracle equivalence", 10.0, quantizer_equivalence},
      {3, "LoRA rank property", 2.0, lora_rank},
      {4, "codec suite", 10.0, codec_suite},
      {5, "calibration recovery", 10.0, calibration_recovery},
      {6, "scheduler routing exactness", 2.0, routing_exactness},
      {7, "end-to-end simulation orderings", 60.0, simulation_orderings},
      {8, "ablation shape", 60.0, ablation_shape},
      {9, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Checker checker;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.body(checker);
    } catch (const std::exception& ex) {
      checker.expect(false, std::string("exception: ") + ex.what());
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.budget_s > 0.0 && elapsed > cr.budget_s) {
      char buf[80];
      std::snprintf(buf, sizeof buf, "time budget exceeded: %.2f s > %.0f s", elapsed, cr.budget_s);
      checker.expect(false, buf);
    }
    const bool ok = checker.failures().empty();
    failed += !ok;
    std::printf("[%s] criterion %d: %s (%.2f s)\n", ok ? "PASS" : "FAIL", cr.id, cr.title, elapsed);
    for (const auto& n : checker.notes()) std::printf("    %s\n", n.c_str());
    for (const auto& f : checker.failures()) std::printf("    failed: %s\n", f.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
