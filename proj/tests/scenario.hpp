#pragma once

// 12 benign clients with independent random masks and signs, followed by 8
// attackers that share one mask and one sign pattern (clients 0..7).

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "safesparse/sim.hpp"
#include "safesparse/sparsify.hpp"

namespace scenario {

struct Coordinated {
  safesparse::PackPartition partition;
  safesparse::ParamVector prev_global;
  safesparse::SparseMask prev_coverage;
  std::vector<safesparse::SparseUpdate> updates;
  std::vector<char> attacker;
};

inline Coordinated make_coordinated(std::uint64_t seed, std::size_t n_benign = 12,
                                    std::size_t n_attackers = 8, std::size_t dim = 256,
                                    std::size_t pack_size = 8, double topk = 0.5) {
  using namespace safesparse;
  Coordinated s;
  s.partition = PackPartition(dim, pack_size);
  const std::size_t packs = s.partition.pack_count();
  const std::size_t k = topk_count(packs, topk);
  s.prev_global = ParamVector::Zero(static_cast<Eigen::Index>(dim));
  s.prev_coverage = SparseMask(packs, true);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_mask = [&] {
    std::vector<std::size_t> order(packs);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(k);
    return SparseMask::from_indices(packs, order);
  };
  auto random_model = [&] {
    ParamVector v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = normal(rng);
    return v;
  };

  const SparseMask shared_mask = random_mask();
  const ParamVector shared_model = random_model();
  const std::size_t m = n_benign + n_attackers;
  for (std::size_t i = 0; i < m; ++i) {
    const bool att = i < n_attackers;
    const SparseMask mask = att ? shared_mask : random_mask();
    const ParamVector model = att ? shared_model : random_model();
    s.updates.push_back(restrict_to_mask(model, mask, s.partition, static_cast<int>(i), 100));
    s.attacker.push_back(att ? 1 : 0);
  }
  return s;
}

// Small logistic-regression experiment that runs in milliseconds.
inline safesparse::ExperimentConfig small_config(std::uint64_t seed = 3) {
  safesparse::ExperimentConfig c;
  c.n_clients = 10;
  c.rounds = 6;
  c.seed = seed;
  c.task.kind = safesparse::TaskKind::Logistic;
  c.task.features = 8;
  c.task.num_classes = 4;
  c.task.train_samples = 400;
  c.task.test_samples = 100;
  c.pack_size = 4;
  c.attack.start_round = 3;
  c.optimizer.batch_size = 16;
  c.optimizer.lr = 0.05;
  return c;
}

}  // namespace scenario
