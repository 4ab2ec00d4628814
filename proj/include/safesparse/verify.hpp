#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "safesparse/sim.hpp"

namespace safesparse {

// ---------------------------------------------------------------------------
// Pack-level attack-effectiveness bound.

struct BoundInstance {
  std::size_t trial = 0;
  std::size_t packs = 0;
  std::size_t clients = 0;
  std::size_t attackers = 0;
  std::size_t skipped_packs = 0;  // packs whose contributors are all attackers
  double rho = 0.0;
  double eps = 0.0;
  double sum_fp_sq = 0.0;
  double bound = 0.0;
  bool violated = false;
};

struct BoundCheck {
  double rho = 0.0;
  double eps = 0.0;
  double sum_fp_sq = 0.0;
  double bound = 0.0;
  std::size_t skipped_packs = 0;
};

// Uniform-weight instance: rho, eps and sum of f_p^2 computed through the
// library's pack aggregation.
BoundCheck check_bound(std::span<const SparseUpdate> updates, std::span<const char> attacker_flag,
                       const PackPartition& partition);

struct Theorem1Report {
  std::vector<BoundInstance> instances;
  std::size_t violations = 0;
  std::size_t skipped_packs = 0;
  double mean_tightness = 0.0;  // over instances with a positive bound
  double equality_rho = 0.0;
  double equality_bound = 0.0;
  double equality_expected = 0.0;
  bool equality_ok = false;

  bool passed() const { return violations == 0 && equality_ok; }
};

Theorem1Report verify_theorem1(std::size_t trials, std::uint64_t seed);
std::string theorem1_csv(const Theorem1Report& report);

// ---------------------------------------------------------------------------
// Convergence on the quadratic task.

struct CurveFit {
  double c = 0.0;
  double floor = 0.0;
  double rss = 0.0;
};

// Least squares of y = c/(t+a) + floor over the trailing half of `y`, with
// t = 1..y.size().
CurveFit fit_inverse_time(const std::vector<double>& y, double a);

struct ConvergenceCase {
  std::string name;
  std::vector<double> dist;  // dist_to_opt after each round
  CurveFit fit;
  double final_dist = 0.0;
};

struct Theorem2Report {
  ConvergenceCase dense;           // no attack, dense FedAvg
  ConvergenceCase sparse;          // no attack, sparse FedAvg
  ConvergenceCase defended;        // IPM, SafeSparse
  ConvergenceCase undefended;      // IPM, FedAvg
  bool full_topk_identical = false;  // topk 1: sparse and dense trajectories bit-equal

  bool floor_ordered = false;       // sparse floor >= dense floor
  bool defended_bounded = false;    // defended final <= 5x sparse floor
  bool undefended_diverged = false; // undefended final >= 10x sparse floor

  bool passed() const {
    return full_topk_identical && floor_ordered && defended_bounded && undefended_diverged;
  }
};

// Quadratic task with inverse-time SGD and IPM at 40% from round 10.
ExperimentConfig theorem2_config();

// Uses `base` for the task, schedule and seed; the four cases override the
// attack, aggregator and sparsity settings.
Theorem2Report verify_theorem2(const ExperimentConfig& base);
std::string theorem2_csv(const Theorem2Report& report);

}  // namespace safesparse
