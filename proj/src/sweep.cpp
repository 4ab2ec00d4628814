#include "safesparse/sweep.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "safesparse/io.hpp"

namespace safesparse {

std::vector<SweepCell> expand_grid(const ExperimentConfig& base, const SweepGrid& grid) {
  if (grid.empty()) throw std::invalid_argument("sweep: the grid declares no axes");
  std::vector<ExperimentConfig> cells{base};
  auto expand = [&cells](const auto& values, auto apply) {
    if (values.empty()) return;
    std::vector<ExperimentConfig> next;
    for (const auto& c : cells)
      for (const auto& v : values) {
        ExperimentConfig e = c;
        apply(e, v);
        next.push_back(std::move(e));
      }
    cells = std::move(next);
  };
  expand(grid.beta, [](ExperimentConfig& e, double v) { e.agg.beta = v; });
  expand(grid.gamma, [](ExperimentConfig& e, double v) { e.agg.gamma = v; });
  expand(grid.attacker_ratio, [](ExperimentConfig& e, double v) { e.attack.attacker_ratio = v; });
  expand(grid.topk_ratio, [](ExperimentConfig& e, double v) { e.topk_ratio = v; });
  expand(grid.attack, [](ExperimentConfig& e, AttackKind v) { e.attack.kind = v; });
  expand(grid.aggregator, [](ExperimentConfig& e, AggregatorKind v) { e.aggregator = v; });

  std::vector<SweepCell> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    SweepCell c{i, cells[i]};
    if (cells.size() > 1) c.config.seed = mix_seed(base.seed, i, 0, 0x5EE9);
    validate(c.config);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<SweepCellResult> run_sweep(const ExperimentConfig& base, const SweepGrid& grid,
                                       std::size_t jobs, const CellCallback& on_cell) {
  const std::vector<SweepCell> cells = expand_grid(base, grid);
  std::vector<SweepCellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        results[i] = SweepCellResult{cells[i], run_experiment(cells[i].config)};
        if (on_cell) on_cell(results[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = cells.size();
      }
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

namespace {

void metric_row(std::ostringstream& o, const std::string& prefix, const char* name,
                const std::string& value) {
  o << prefix << name << ',' << value << '\n';
}

std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace

std::string sweep_csv(const std::vector<SweepCellResult>& cells) {
  std::ostringstream o;
  o << "cell,seed,beta,gamma,attacker_ratio,topk_ratio,attack,aggregator,metric,value\n";
  for (const auto& r : cells) {
    const ExperimentConfig& c = r.cell.config;
    std::ostringstream p;
    p << r.cell.index << ',' << c.seed << ',' << format_number(c.agg.beta) << ','
      << format_number(c.agg.gamma) << ',' << format_number(c.attack.attacker_ratio) << ','
      << format_number(c.topk_ratio) << ',' << to_string(c.attack.kind) << ','
      << to_string(c.aggregator) << ',';
    const std::string prefix = p.str();
    const Summary& s = r.result.summary;
    metric_row(o, prefix, "final_loss", format_number(s.final_eval.loss));
    metric_row(o, prefix, "final_accuracy", opt(s.final_eval.accuracy));
    metric_row(o, prefix, "final_dist_to_opt", opt(s.final_eval.dist_to_opt));
    metric_row(o, prefix, "mean_precision", opt(s.mean_precision));
    metric_row(o, prefix, "mean_recall", opt(s.mean_recall));
    metric_row(o, prefix, "peak_fp", format_number(s.peak_fp));
    metric_row(o, prefix, "mean_fp_attacker_packs", opt(s.mean_fp_attacker_packs));
    metric_row(o, prefix, "mean_rho", format_number(s.mean_rho));
    metric_row(o, prefix, "total_bytes", std::to_string(s.total_bytes));
    metric_row(o, prefix, "degenerate_rounds", std::to_string(s.degenerate_rounds));
  }
  return o.str();
}

}  // namespace safesparse
