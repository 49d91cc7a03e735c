#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "saec/simharness.hpp"

namespace {

namespace sim = saec::sim;
using saec::quant::Label;

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

sim::ExperimentConfig base_config(const std::filesystem::path& dataset) {
  sim::ExperimentConfig cfg;
  cfg.dataset = dataset;
  cfg.edge = {sim::Role::Edge, 0.8, 0.4, 0.5, 3.0, 0};
  cfg.cloud = {sim::Role::Cloud, 0.9, 0.9, 0.5, 3.0, 0};
  cfg.cost = {0.002, 0.05, 0.2, 15.0, 300.0};
  cfg.policy.tau_S = 0.5;
  cfg.policy.tau_s = 0.7;
  cfg.seed = 7;
  return cfg;
}

class SimTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("sim");
    fixture::write_dataset(dir_->path() / "data", 20, 1);
    ds_ = new sim::Dataset(sim::load_dataset(dir_->path() / "data"));
    scores_ = new std::vector<double>(sim::score_dataset(*ds_, {}, saec::codec::QualityFactor(50)));
  }
  static void TearDownTestSuite() {
    delete scores_;
    delete ds_;
    delete dir_;
  }
  static oracle::TempDir* dir_;
  static sim::Dataset* ds_;
  static std::vector<double>* scores_;
};

oracle::TempDir* SimTest::dir_ = nullptr;
sim::Dataset* SimTest::ds_ = nullptr;
std::vector<double>* SimTest::scores_ = nullptr;

TEST(DatasetTest, OrderAndLabels) {
  oracle::TempDir dir("ds");
  fixture::write_dataset(dir.path(), 3, 2);
  std::ofstream(dir.path() / "good" / "notes.txt") << "ignored";
  const auto ds = sim::load_dataset(dir.path());
  ASSERT_EQ(ds.samples.size(), 6u);
  EXPECT_EQ(ds.samples.front().name, "defect/img_00000.pgm");
  EXPECT_EQ(ds.samples.back().name, "good/img_00002.pgm");
  EXPECT_TRUE(std::is_sorted(ds.samples.begin(), ds.samples.end(),
                             [](const auto& a, const auto& b) { return a.name < b.name; }));
  for (const auto& s : ds.samples) EXPECT_EQ(s.truth, s.name.starts_with("defect/") ? Label::Defect : Label::Good);
}

TEST(DatasetTest, ValidationLayout) {
  oracle::TempDir dir("dsval");
  fixture::write_dataset(dir.path() / "val", 2, 3);
  const auto ds = sim::load_dataset(dir.path());
  ASSERT_EQ(ds.samples.size(), 4u);
  EXPECT_EQ(ds.samples.front().name, "val/defect/img_00000.pgm");
}

TEST(DatasetTest, Errors) {
  oracle::TempDir dir("dserr");
  std::filesystem::create_directories(dir.path() / "good");
  try {
    sim::load_dataset(dir.path());
    FAIL() << "expected MissingClassDir";
  } catch (const saec::Error& e) {
    EXPECT_EQ(e.code(), saec::ErrorCode::MissingClassDir);
  }
  std::filesystem::create_directories(dir.path() / "defect");
  try {
    sim::load_dataset(dir.path());
    FAIL() << "expected EmptyDataset";
  } catch (const saec::Error& e) {
    EXPECT_EQ(e.code(), saec::ErrorCode::EmptyDataset);
  }
}

TEST(StubTest, DegenerateAccuracies) {
  const saec::sched::CostModel cost{0.0, 0.05, 0.2, 1.0, 1.0};
  const sim::StubModelSpec always{sim::Role::Cloud, 1.0, 1.0, 0.0, 3.0, 11};
  const sim::StubModelSpec never{sim::Role::Edge, 0.0, 0.0, 0.0, 3.0, 11};
  for (int i = 0; i < 200; ++i) {
    const std::string name = "good/" + std::to_string(i) + ".png";
    const Label truth = i % 2 ? Label::Defect : Label::Good;
    const auto a = sim::stub_predict(always, name, truth, 0.3, cost);
    const auto b = sim::stub_predict(never, name, truth, 0.3, cost);
    EXPECT_EQ(a.predicted, truth);
    EXPECT_NE(b.predicted, truth);
    EXPECT_EQ(saec::quant::decide(a.logits, {}).label, truth);
    EXPECT_EQ(a.latency_s, 0.2);
    EXPECT_EQ(b.latency_s, 0.05);
    EXPECT_EQ(a.report.has_value(), truth == Label::Defect);
    EXPECT_FALSE(b.report.has_value());
  }
}

TEST(StubTest, KneeSelectsAccuracy) {
  const saec::sched::CostModel cost{};
  const sim::StubModelSpec spec{sim::Role::Edge, 1.0, 0.0, 0.5, 3.0, 5};
  EXPECT_EQ(sim::stub_predict(spec, "x", Label::Good, 0.49, cost).predicted, Label::Good);
  EXPECT_EQ(sim::stub_predict(spec, "x", Label::Good, 0.5, cost).predicted, Label::Defect);
}

TEST(StubTest, CounterStreamIsStateless) {
  const sim::CounterStream a(42);
  const sim::CounterStream b(42);
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const double u = a.uniform(k);
    EXPECT_EQ(u, b.uniform(k));
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
  EXPECT_NE(sim::CounterStream(1).bits(0), sim::CounterStream(2).bits(0));
  EXPECT_EQ(sim::CounterStream::digest(""), 0xCBF29CE484222325ull);
  EXPECT_EQ(sim::CounterStream::digest("a"), 0xAF63DC4C8601EC8Cull);
}

TEST_F(SimTest, ThreadCountDoesNotChangeResults) {
  auto cfg = base_config(ds_->root);
  cfg.threads = 1;
  const auto one = sim::run_scored(*ds_, *scores_, cfg);
  cfg.threads = 8;
  const auto many = sim::run_scored(*ds_, *scores_, cfg);
  EXPECT_EQ(sim::trace_csv(one.trace), sim::trace_csv(many.trace));
  EXPECT_EQ(sim::emit_report(one.report, sim::ReportFormat::Json),
            sim::emit_report(many.report, sim::ReportFormat::Json));
  const auto many_scores = sim::score_dataset(*ds_, {}, saec::codec::QualityFactor(50), 8);
  EXPECT_EQ(many_scores, *scores_);
}

TEST_F(SimTest, CloudOnlyPerfectStub) {
  auto cfg = base_config(ds_->root);
  cfg.mode = sim::Mode::CloudOnly;
  cfg.cloud.acc_low_complexity = cfg.cloud.acc_high_complexity = 1.0;
  const auto r = sim::run_scored(*ds_, *scores_, cfg).report;
  const double n = static_cast<double>(ds_->samples.size());
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.counts.cloud, ds_->samples.size());
  EXPECT_EQ(r.cloud_fraction, 1.0);
  EXPECT_NEAR(r.total_time_s, n * 0.2, 1e-12);
  EXPECT_NEAR(r.total_energy_mwh, 300.0 * n * 0.2 / 3.6, 1e-9);
}

TEST_F(SimTest, EdgeOnlySkipsEstimator) {
  auto cfg = base_config(ds_->root);
  cfg.mode = sim::Mode::EdgeOnly;
  const auto r = sim::run_scored(*ds_, *scores_, cfg).report;
  const double n = static_cast<double>(ds_->samples.size());
  EXPECT_EQ(r.counts.edge, ds_->samples.size());
  EXPECT_NEAR(r.total_time_s, n * 0.05, 1e-12);
  EXPECT_NEAR(r.total_energy_mwh, 15.0 * n * 0.05 / 3.6, 1e-9);
}

TEST_F(SimTest, HybridAccountingIdentities) {
  const auto cfg = base_config(ds_->root);
  const auto res = sim::run_scored(*ds_, *scores_, cfg);
  const auto& r = res.report;
  const auto& c = r.counts;
  EXPECT_EQ(c.edge + c.cloud, c.n);
  EXPECT_EQ(c.complexity_route + c.edge_accept + c.edge_reject, c.n);
  EXPECT_EQ(c.edge, c.edge_accept);
  EXPECT_NEAR(r.avg_time_per_image_s * c.n, r.total_time_s, 1e-9);
  EXPECT_DOUBLE_EQ(r.cloud_fraction, static_cast<double>(c.cloud) / c.n);
  double energy = 0.0;
  std::size_t edge_runs = 0, cloud_runs = 0;
  for (const auto& row : res.trace) {
    energy += row.energy_mwh;
    if (row.s_c >= cfg.policy.tau_S) {
      EXPECT_EQ(row.decision.site, saec::sched::Site::Cloud);
      EXPECT_EQ(row.decision.reason, saec::sched::Reason::ComplexityRoute);
    } else {
      ++edge_runs;
    }
    cloud_runs += row.decision.site == saec::sched::Site::Cloud;
  }
  EXPECT_NEAR(energy, r.total_energy_mwh, 1e-9);
  const double expected_time = c.n * 0.002 + std::max(edge_runs * 0.05, cloud_runs * 0.2);
  EXPECT_NEAR(r.total_time_s, expected_time, 1e-9);
  ASSERT_TRUE(r.energy_per_correct_mwh.has_value());
  EXPECT_NEAR(*r.energy_per_correct_mwh, r.total_energy_mwh / c.correct, 1e-12);
}

TEST_F(SimTest, OutputsAndDefectRecords) {
  const auto cfg = base_config(ds_->root);
  const auto res = sim::run_scored(*ds_, *scores_, cfg);
  oracle::TempDir out("simout");
  sim::write_outputs(res, cfg, out.path());
  const std::string trace = read_all(out.path() / "trace.csv");
  EXPECT_TRUE(trace.starts_with(std::string(sim::kTraceCsvHeader) + "\n"));
  EXPECT_EQ(static_cast<std::size_t>(std::count(trace.begin(), trace.end(), '\n')), ds_->samples.size() + 1);

  std::size_t defects = 0;
  for (const auto& row : res.trace) defects += row.decision.label == Label::Defect;
  const std::string jsonl = read_all(out.path() / "defects.jsonl");
  EXPECT_EQ(static_cast<std::size_t>(std::count(jsonl.begin(), jsonl.end(), '\n')), defects);
  std::istringstream lines(jsonl);
  for (std::string line; std::getline(lines, line);) {
    EXPECT_NO_THROW(saec::sched::defect_report_from_json(nlohmann::json::parse(line)));
  }

  const auto report = nlohmann::json::parse(read_all(out.path() / "report.json"));
  EXPECT_EQ(report.at("config").at("seed").get<std::uint64_t>(), 7u);
  EXPECT_EQ(report.at("config").at("mode").get<std::string>(), "hybrid");
  EXPECT_FALSE(report.at("config").contains("threads"));
}

TEST(ReportTest, EmitParseEmitIsIdentical) {
  sim::RunReport r;
  r.accuracy = 0.8125;
  r.total_time_s = 123.456789;
  r.avg_time_per_image_s = 0.123457;
  r.cloud_fraction = 0.5;
  r.total_energy_mwh = 1000.0 / 3.0;
  r.energy_per_correct_mwh = 0.41;
  r.counts = {1000, 812, 500, 500, 450, 500, 50};
  const std::string first = sim::emit_report(r, sim::ReportFormat::Json);
  const std::string second = sim::emit_report(sim::parse_report_json(first), sim::ReportFormat::Json);
  EXPECT_EQ(first, second);

  r.energy_per_correct_mwh.reset();
  const std::string null_epc = sim::emit_report(r, sim::ReportFormat::Json);
  EXPECT_NE(null_epc.find("\"energy_per_correct_mwh\": null"), std::string::npos);
  EXPECT_EQ(sim::emit_report(sim::parse_report_json(null_epc), sim::ReportFormat::Json), null_epc);
}

TEST(ReportTest, CsvHeaderAndRow) {
  sim::RunReport r;
  r.accuracy = 0.5;
  const std::string csv = sim::emit_report(r, sim::ReportFormat::Csv);
  EXPECT_EQ(csv,
            "accuracy,total_time_s,avg_time_per_image_s,cloud_fraction,total_energy_mwh,energy_per_correct_mwh\n"
            "0.500000,0.000000,0.000000,0.000000,0.000000,NA\n");
}

nlohmann::json valid_config_json() {
  return nlohmann::json::parse(R"({
    "dataset": "data",
    "policy": {"rho": 0.5, "tau_S": 0.4, "tau_s": 0.6, "tau_m": 0.0, "tau_h": 0.7, "tau": 0.5,
               "T_edge": 1.0, "T_cloud": 1.0},
    "edge": {"acc_low": 0.6, "acc_high": 0.4, "knee": 0.4, "sharpness": 3.0},
    "cloud": {"acc_low": 0.9, "acc_high": 0.9, "knee": 0.4, "sharpness": 3.0},
    "cost": {"t_cpx": 0.002, "t_edge": 0.05, "t_cloud": 0.2, "p_edge": 15, "p_cloud": 300},
    "seed": 3,
    "mode": "hybrid"
  })");
}

void expect_config_error(const nlohmann::json& j, const std::string& needle) {
  try {
    sim::parse_experiment_config(j, "/base");
    FAIL() << "expected ConfigError mentioning " << needle;
  } catch (const saec::Error& e) {
    EXPECT_EQ(e.code(), saec::ErrorCode::ConfigError);
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(ConfigTest, ParsesValidConfig) {
  const auto cfg = sim::parse_experiment_config(valid_config_json(), "/base");
  EXPECT_EQ(cfg.dataset, std::filesystem::path("/base/data"));
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.mode, sim::Mode::Hybrid);
  EXPECT_EQ(cfg.edge.acc_low_complexity, 0.6);
  EXPECT_EQ(cfg.cost.p_cloud, 300.0);
  EXPECT_EQ(cfg.quality.value(), 50);
  EXPECT_EQ(sim::parse_experiment_config(valid_config_json(), "/base", 99).seed, 99u);
}

TEST(ConfigTest, ErrorsNameTheKey) {
  auto j = valid_config_json();
  j.erase("seed");
  expect_config_error(j, "seed");
  j = valid_config_json();
  j["cost"].erase("p_cloud");
  expect_config_error(j, "cost.p_cloud");
  j = valid_config_json();
  j["mode"] = "fog";
  expect_config_error(j, "mode");
  j = valid_config_json();
  j["edge"]["acc_low"] = 1.5;
  expect_config_error(j, "edge");
  j = valid_config_json();
  j["policy"].erase("tau");
  expect_config_error(j, "policy");
  j = valid_config_json();
  j["quality"] = 0;
  expect_config_error(j, "quality");
}

}  // namespace
