#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "safesparse/config.hpp"
#include "safesparse/io.hpp"
#include "safesparse/sweep.hpp"
#include "safesparse/verify.hpp"
#include "scenario.hpp"

using namespace safesparse;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  EXPECT_EQ(parse_experiment_text(""), ExperimentConfig{});
  EXPECT_EQ(parse_experiment_text("  \n"), ExperimentConfig{});
  EXPECT_EQ(parse_experiment_text("{}"), ExperimentConfig{});
  auto cf = parse_config_text("{}");
  EXPECT_FALSE(cf.sweep.has_value());
  EXPECT_EQ(cf.bound_trials, 1000u);
}

TEST(Config, ReadsNestedSections) {
  auto cf = parse_config_text(R"({
    // comments are allowed
    "n_clients": 12, "rounds": 3, "seed": 99,
    "task": {"kind": "logistic", "features": 6},
    "partition": {"mode": "iid"},
    "attack": {"kind": "ipm", "attacker_ratio": 0.25, "ipm_epsilon": 3.5, "collude": false},
    "aggregator": {"kind": "multikrum", "krum_n_attackers": 2, "beta": 0.7},
    "sparsify": {"pack_size": 4, "topk_ratio": 0.25},
    "local": {"optimizer": "sgd", "lr": 0.1},
    "export": {"round": 4},
    "verify_bound": {"trials": 10}
  })");
  const auto& e = cf.experiment;
  EXPECT_EQ(e.n_clients, 12u);
  EXPECT_EQ(e.seed, 99u);
  EXPECT_EQ(e.task.kind, TaskKind::Logistic);
  EXPECT_EQ(e.partition, PartitionMode::IID);
  EXPECT_EQ(e.attack.kind, AttackKind::IPM);
  EXPECT_FALSE(e.attack.collude);
  EXPECT_EQ(e.aggregator, AggregatorKind::MultiKrum);
  EXPECT_EQ(e.agg.krum_n_attackers, 2u);
  EXPECT_EQ(e.pack_size, 4u);
  EXPECT_EQ(e.optimizer.kind, OptimizerKind::SGD);
  EXPECT_EQ(cf.export_round, 4);
  EXPECT_EQ(cf.bound_trials, 10u);
}

TEST(Config, RejectsHonestMajorityViolation) {
  auto msg = error_of(R"({"attack": {"attacker_ratio": 0.6}})");
  EXPECT_NE(msg.find("attacker_ratio"), std::string::npos) << msg;
  EXPECT_NE(msg.find("honest majority"), std::string::npos) << msg;
}

TEST(Config, DiagnosticsNameTheProblem) {
  EXPECT_NE(error_of(R"({"atack": {}})").find("'atack'"), std::string::npos);
  EXPECT_NE(error_of(R"({"attack": {"kind": "zap"}})").find("attack.kind"), std::string::npos);
  EXPECT_NE(error_of(R"({"rounds": "ten"})").find("expected an integer"), std::string::npos);
  EXPECT_NE(error_of(R"({"n_clients": -3})").find("non-negative"), std::string::npos);
  auto msg = error_of("{\n  \"rounds\": 5,\n  \"seed\": ,\n}");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column"), std::string::npos) << msg;
  EXPECT_THROW(parse_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, SerializeRoundTrips) {
  ConfigFile cf;
  cf.experiment.seed = 123456789012345ull;
  cf.experiment.attack.kind = AttackKind::Scaling;
  cf.experiment.attack.mask_mode = MaskMode::Coordinated;
  cf.experiment.agg.krum_k_select = 5;
  cf.experiment.agg.beta = 0.1 + 0.2;
  cf.experiment.optimizer.schedule = Schedule::InverseTime;
  cf.experiment.task.kind = TaskKind::Quadratic;
  cf.sweep = SweepGrid{};
  cf.sweep->beta = {0.2, 0.4};
  cf.sweep->attack = {AttackKind::GNA};
  cf.export_round = 7;
  auto back = parse_config_text(serialize_config(cf));
  EXPECT_EQ(back.experiment, cf.experiment);
  EXPECT_EQ(back.sweep, cf.sweep);
  EXPECT_EQ(back.export_round, 7);
  EXPECT_EQ(parse_experiment_text(serialize_experiment(cf.experiment)), cf.experiment);
}

TEST(Sweep, GridExpansion) {
  auto base = scenario::small_config();
  SweepGrid g;
  g.beta = {0.2, 0.4, 0.6, 0.8, 1.0};
  g.gamma = {0.1, 0.2, 0.3, 0.4};
  auto cells = expand_grid(base, g);
  ASSERT_EQ(cells.size(), 20u);
  EXPECT_EQ(cells[0].config.agg.beta, 0.2);
  EXPECT_EQ(cells[0].config.agg.gamma, 0.1);
  EXPECT_EQ(cells[1].config.agg.gamma, 0.2);
  EXPECT_EQ(cells[4].config.agg.beta, 0.4);
  std::set<std::uint64_t> seeds;
  for (const auto& c : cells) seeds.insert(c.config.seed);
  EXPECT_EQ(seeds.size(), 20u);
  auto again = expand_grid(base, g);
  for (std::size_t i = 0; i < cells.size(); ++i) EXPECT_EQ(again[i].config, cells[i].config);
  EXPECT_THROW(expand_grid(base, SweepGrid{}), std::invalid_argument);
  SweepGrid bad;
  bad.attacker_ratio = {0.6};
  EXPECT_THROW(expand_grid(base, bad), std::invalid_argument);
}

TEST(Sweep, SingleCellMatchesRun) {
  auto base = scenario::small_config();
  base.rounds = 3;
  SweepGrid g;
  g.beta = {base.agg.beta};
  auto cells = run_sweep(base, g, 2);
  ASSERT_EQ(cells.size(), 1u);
  auto direct = run_experiment(base);
  EXPECT_EQ(cells[0].result.final_state.params, direct.final_state.params);
  EXPECT_EQ(rounds_jsonl(cells[0].result.records), rounds_jsonl(direct.records));
}

TEST(Sweep, ParallelMatchesSerial) {
  auto base = scenario::small_config();
  base.rounds = 2;
  SweepGrid g;
  g.attack = {AttackKind::LFA, AttackKind::GNA, AttackKind::IPM};
  g.aggregator = {AggregatorKind::SafeSparse, AggregatorKind::Median};
  auto a = run_sweep(base, g, 1);
  auto b = run_sweep(base, g, 4);
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(sweep_csv(a), sweep_csv(b));
  const std::string csv = sweep_csv(a);
  EXPECT_EQ(csv.rfind("cell,seed,beta,gamma,attacker_ratio,topk_ratio,attack,aggregator,metric,value\n", 0), 0u);
}

TEST(Io, NumberFormatting) {
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(format_number(2.0), "2");
  EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
}

TEST(Io, RoundRecordJson) {
  RoundRecord r;
  r.round = 3;
  r.eval.loss = 1.5;
  r.retained = {0, 2};
  r.fp = {0.0, 0.5};
  const std::string j = round_record_json(r);
  EXPECT_EQ(j.rfind("{\"round\":3,\"attack_active\":false,\"loss\":1.5,", 0), 0u) << j;
  EXPECT_NE(j.find("\"accuracy\":null"), std::string::npos);
  EXPECT_NE(j.find("\"retained\":[0,2]"), std::string::npos);
  EXPECT_NE(j.find("\"precision\":null"), std::string::npos);
  EXPECT_EQ(rounds_jsonl({r, r}), j + "\n" + j + "\n");
}

TEST(Io, CsvAndAtomicWrite) {
  Summary s;
  s.rounds = 2;
  const std::string csv = summary_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "rounds,final_loss,final_accuracy,final_dist_to_opt,mean_precision,mean_recall,peak_fp,"
            "mean_fp_attacker_packs,mean_rho,total_bytes,degenerate_rounds");
  Matrix<double> m(2, 2);
  m << 1, 0.5, 0.5, 1;
  EXPECT_EQ(matrix_csv(m), "client,0,1\n0,1,0.5\n1,0.5,1\n");

  auto dir = std::filesystem::temp_directory_path() / "safesparse_io_test";
  std::filesystem::create_directories(dir);
  auto file = dir / "out.txt";
  write_file_atomic(file, "first");
  write_file_atomic(file, "second");
  EXPECT_EQ(read_all(file), "second");
  EXPECT_FALSE(std::filesystem::exists(dir / "out.txt.tmp"));
  std::filesystem::remove_all(dir);
}

TEST(Verify, BoundHoldsOnSmallRun) {
  auto r = verify_theorem1(50, 3);
  EXPECT_EQ(r.instances.size(), 50u);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_TRUE(r.equality_ok);
  EXPECT_NEAR(r.equality_rho, r.equality_expected, 1e-12);
  const std::string csv = theorem1_csv(r);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 50u + 1u);
}

TEST(Verify, CheckBoundExample) {
  auto p = partition_packs(2, 1);
  std::vector<SparseUpdate> ups{
      restrict_to_mask(ParamVector::Constant(2, 4.0), SparseMask::from_indices(2, std::vector<std::size_t>{0}), p, 0, 1),
      restrict_to_mask(ParamVector::Constant(2, 1.0), SparseMask(2, true), p, 1, 1),
      restrict_to_mask(ParamVector::Constant(2, 1.0), SparseMask(2, true), p, 2, 1)};
  std::vector<char> flag{1, 0, 0};
  auto c = check_bound(ups, flag, p);
  // pack 0: (4 + 1 + 1) / 3 = 2 against benign 1; f = 1/3, eps = 3
  EXPECT_NEAR(c.rho, 1.0, 1e-12);
  EXPECT_NEAR(c.eps, 3.0, 1e-12);
  EXPECT_NEAR(c.sum_fp_sq, 1.0 / 9, 1e-12);
  EXPECT_NEAR(c.bound, 1.0, 1e-12);
  EXPECT_EQ(c.skipped_packs, 0u);
}

TEST(Verify, InverseTimeFitRecoversParameters) {
  std::vector<double> y;
  for (int t = 1; t <= 100; ++t) y.push_back(5.0 / (t + 3.0) + 0.25);
  auto f = fit_inverse_time(y, 3.0);
  EXPECT_NEAR(f.c, 5.0, 1e-9);
  EXPECT_NEAR(f.floor, 0.25, 1e-11);
  EXPECT_LT(f.rss, 1e-20);
}
