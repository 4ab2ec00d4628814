#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "safesparse/config.hpp"
#include "safesparse/io.hpp"
#include "safesparse/sim.hpp"
#include "safesparse/sweep.hpp"
#include "safesparse/verify.hpp"

namespace fs = std::filesystem;
using namespace safesparse;

namespace {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };
Level g_level = Level::Info;
std::mutex g_log_mutex;

void log(Level lvl, const std::string& msg) {
  if (lvl > g_level) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "[" << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string level = "info";
};

ConfigFile load(const Options& o) {
  ConfigFile cf = o.config.empty() ? parse_config_text("") : parse_config(o.config);
  if (o.seed) cf.experiment.seed = *o.seed;
  return cf;
}

fs::path out_dir(const Options& o) {
  fs::path p(o.out);
  fs::create_directories(p);
  return p;
}

int cmd_run(const Options& o) {
  const ConfigFile cf = load(o);
  const fs::path dir = out_dir(o);
  log(Level::Info, "running " + std::to_string(cf.experiment.rounds) + " rounds");
  const ExperimentResult res = run_experiment(
      cf.experiment, [](int round, const GlobalModelState&, const std::vector<SparseUpdate>&,
                        const RoundRecord& rec) {
        if (g_level >= Level::Debug)
          log(Level::Debug, "round " + std::to_string(round) + " loss " +
                                format_number(rec.eval.loss) + " retained " +
                                std::to_string(rec.retained.size()));
      });
  write_file_atomic(dir / "rounds.jsonl", rounds_jsonl(res.records));
  write_file_atomic(dir / "summary.csv", summary_csv(res.summary));
  if (res.summary.final_eval.accuracy)
    log(Level::Info, "final accuracy " + format_number(*res.summary.final_eval.accuracy));
  if (res.summary.degenerate_rounds)
    log(Level::Warn, std::to_string(res.summary.degenerate_rounds) + " degenerate filter rounds");
  return 0;
}

int cmd_sweep(const Options& o) {
  const ConfigFile cf = load(o);
  if (!cf.sweep || cf.sweep->empty()) throw ConfigError("sweep: the config declares no sweep axes");
  const fs::path dir = out_dir(o);
  const auto cells = run_sweep(cf.experiment, *cf.sweep, o.jobs, [&](const SweepCellResult& r) {
    char name[32];
    std::snprintf(name, sizeof name, "cell_%04zu", r.cell.index);
    const fs::path cdir = dir / "cells" / name;
    fs::create_directories(cdir);
    write_file_atomic(cdir / "rounds.jsonl", rounds_jsonl(r.result.records));
    write_file_atomic(cdir / "summary.csv", summary_csv(r.result.summary));
    write_file_atomic(cdir / "config.json", serialize_experiment(r.cell.config));
    log(Level::Info, std::string("finished ") + name);
  });
  write_file_atomic(dir / "sweep.csv", sweep_csv(cells));
  return 0;
}

int cmd_verify_bound(const Options& o) {
  const ConfigFile cf = load(o);
  const Theorem1Report rep = verify_theorem1(cf.bound_trials, cf.experiment.seed);
  write_file_atomic(out_dir(o) / "theorem1_report.csv", theorem1_csv(rep));
  std::cout << "trials " << rep.instances.size() << " violations " << rep.violations
            << " skipped_packs " << rep.skipped_packs << " mean_tightness "
            << format_number(rep.mean_tightness) << " equality_case "
            << (rep.equality_ok ? "ok" : "mismatch") << "\n";
  return rep.passed() ? 0 : 1;
}

int cmd_convergence(const Options& o) {
  ExperimentConfig cfg = theorem2_config();
  if (!o.config.empty()) cfg = parse_config(o.config).experiment;
  if (o.seed) cfg.seed = *o.seed;
  const Theorem2Report rep = verify_theorem2(cfg);
  write_file_atomic(out_dir(o) / "theorem2_report.csv", theorem2_csv(rep));
  for (const ConvergenceCase* c : {&rep.dense, &rep.sparse, &rep.defended, &rep.undefended})
    std::cout << c->name << " final " << format_number(c->final_dist) << " floor "
              << format_number(c->fit.floor) << "\n";
  std::cout << "full_topk_identical " << rep.full_topk_identical << " floor_ordered "
            << rep.floor_ordered << " defended_bounded " << rep.defended_bounded
            << " undefended_diverged " << rep.undefended_diverged << "\n";
  return rep.passed() ? 0 : 1;
}

int cmd_export_similarity(const Options& o) {
  const ConfigFile cf = load(o);
  const int round = cf.export_round > 0 ? cf.export_round : cf.experiment.attack.start_round;
  const SimilaritySnapshot snap = similarity_at_round(cf.experiment, round);
  const fs::path dir = out_dir(o);
  write_file_atomic(dir / "jaccard.csv", matrix_csv(snap.jaccard));
  write_file_atomic(dir / "signcos.csv", matrix_csv(snap.sign_cosine));
  log(Level::Info, "exported similarity matrices for round " + std::to_string(round));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SafeSparse federated learning simulator"};
  app.require_subcommand(1, 1);
  Options opt;
  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON config file");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--seed", opt.seed, "override the config seed");
    sub->add_option("--jobs", opt.jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);
    sub->add_option("--log", opt.level, "log level")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
  };
  auto* run = app.add_subcommand("run", "run one experiment");
  auto* sweep = app.add_subcommand("sweep", "run a parameter grid");
  auto* bound = app.add_subcommand("verify-bound", "check the pack-level attack bound");
  auto* conv = app.add_subcommand("convergence", "quadratic convergence check");
  auto* exp = app.add_subcommand("export-similarity", "write Jaccard and sign-cosine matrices");
  for (auto* s : {run, sweep, bound, conv, exp}) add_common(s);

  CLI11_PARSE(app, argc, argv);
  if (opt.level == "error") g_level = Level::Error;
  if (opt.level == "warn") g_level = Level::Warn;
  if (opt.level == "debug") g_level = Level::Debug;

  try {
    if (run->parsed()) return cmd_run(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
    if (bound->parsed()) return cmd_verify_bound(opt);
    if (conv->parsed()) return cmd_convergence(opt);
    if (exp->parsed()) return cmd_export_similarity(opt);
  } catch (const ConfigError& e) {
    log(Level::Error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::Error, e.what());
    return 1;
  }
  return 1;
}
