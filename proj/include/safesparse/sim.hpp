#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "safesparse/aggregate.hpp"
#include "safesparse/attacks.hpp"
#include "safesparse/tasks.hpp"

namespace safesparse {

struct ExperimentConfig {
  std::size_t n_clients = 20;
  int rounds = 60;
  std::uint64_t seed = 1;
  TaskSpec task;
  PartitionMode partition = PartitionMode::Dirichlet;
  double alpha = 1.0;
  AttackPlan attack;
  AggregatorKind aggregator = AggregatorKind::SafeSparse;
  AggregatorParams agg;
  std::size_t pack_size = 8;
  double topk_ratio = 0.5;
  // false: clients upload full dense models with no mask at all.
  bool sparse = true;
  int local_epochs = 1;
  OptimizerConfig optimizer;

  bool operator==(const ExperimentConfig&) const = default;
};

// Throws std::invalid_argument naming the violated invariant.
void validate(const ExperimentConfig& cfg);
std::size_t model_dim(const TaskSpec& spec);

struct RoundRecord {
  int round = 0;
  bool attack_active = false;
  Evaluation eval;
  std::vector<int> retained;
  std::vector<int> excluded_jaccard;
  std::vector<int> excluded_cluster;
  std::optional<double> precision;
  std::optional<double> recall;
  std::vector<double> fp;            // per pack, over the retained set
  double fp_peak = 0.0;
  std::optional<double> fp_attacker_packs;  // mean unfiltered f_p on packs any attacker sent
  double rho = 0.0;
  std::size_t bytes_uplink = 0;
  bool degenerate = false;
  bool trim_fell_back = false;
  bool rfa_converged = true;
};

struct Summary {
  int rounds = 0;
  Evaluation final_eval;
  std::optional<double> mean_precision;
  std::optional<double> mean_recall;
  double peak_fp = 0.0;
  std::optional<double> mean_fp_attacker_packs;
  double mean_rho = 0.0;
  std::size_t total_bytes = 0;
  std::size_t degenerate_rounds = 0;
};

// Everything that stays fixed across rounds of one experiment.
class Simulation {
 public:
  explicit Simulation(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const Task& task() const { return task_; }
  const PackPartition& partition() const { return partition_; }
  const DataPartition& data_partition() const { return data_; }
  const std::vector<int>& attackers() const { return attackers_; }
  bool is_attacker(std::size_t client) const;

  GlobalModelState initial_state() const;

  // Client phase of one round: the submissions as the server receives them.
  std::vector<SparseUpdate> client_phase(const GlobalModelState& state, int round) const;

  // Full round: client phase, aggregation, shadow aggregation, metrics.
  RoundRecord run_round(GlobalModelState& state, int round,
                        std::vector<SparseUpdate>* submissions = nullptr) const;

 private:
  std::size_t dataset_size(std::size_t client) const;

  ExperimentConfig cfg_;
  Task task_;
  PackPartition partition_;
  DataPartition data_;
  std::vector<int> attackers_;
  std::vector<char> attacker_flag_;
};

struct ExperimentResult {
  std::vector<RoundRecord> records;
  Summary summary;
  GlobalModelState final_state;
};

using RoundObserver = std::function<void(int round, const GlobalModelState& prev,
                                         const std::vector<SparseUpdate>& submissions,
                                         const RoundRecord& record)>;

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer = {});

// Mask Jaccard and sign-cosine matrices of the submissions received in
// `round`, against the global state broadcast at its start.
struct SimilaritySnapshot {
  int round = 0;
  Matrix<double> jaccard;
  Matrix<double> sign_cosine;
};

SimilaritySnapshot similarity_at_round(const ExperimentConfig& cfg, int round);

// ---------------------------------------------------------------------------
// Metrics helpers.

double attack_effectiveness(const ParamVector& poisoned_global, const ParamVector& benign_ideal);

// f_p = attackers / contributors among `retained`, 0 where nobody contributed.
std::vector<double> fp_ratios(std::span<const SparseUpdate> updates,
                              std::span<const std::size_t> retained,
                              std::span<const char> attacker_flag, const PackPartition& partition);

Summary summarize(const std::vector<RoundRecord>& records, const Evaluation& initial);

}  // namespace safesparse
