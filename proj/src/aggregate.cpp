#include "safesparse/aggregate.hpp"

#include <string>

namespace safesparse {

KrumNeighbors parse_krum_neighbors(std::string_view s) {
  if (s == "classic") return KrumNeighbors::Classic;
  if (s == "wide") return KrumNeighbors::Wide;
  throw std::invalid_argument("unknown krum_neighbor_count: " + std::string(s));
}

std::string_view to_string(KrumNeighbors k) {
  return k == KrumNeighbors::Classic ? "classic" : "wide";
}

std::vector<std::size_t> krum_select(std::span<const double> scores, std::size_t k_select) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  order.resize(std::min(k_select, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

GlobalModelState aggregate_packs(std::span<const SparseUpdate> updates,
                                 std::span<const std::size_t> contributors,
                                 const GlobalModelState& prev,
                                 const PackPartition& partition) {
  const std::size_t P = partition.pack_count();
  double total_size = 0.0;
  for (const auto& u : updates) {
    if (u.mask.size() != P) throw std::invalid_argument("aggregate: mask size != pack count");
    total_size += static_cast<double>(u.dataset_size);
  }
  if (!(total_size > 0.0)) throw std::invalid_argument("aggregate: dataset sizes sum to 0");

  // Running offset of each contributor's next selected pack in its values.
  std::vector<Eigen::Index> offset(contributors.size(), 0);
  GlobalModelState next;
  next.params = prev.params;
  next.coverage = SparseMask(P);
  next.round = prev.round + 1;

  ParamVector acc;
  for (std::size_t p = 0; p < P; ++p) {
    const auto r = partition.range(p);
    const auto len = static_cast<Eigen::Index>(r.size());
    double pack_weight = 0.0;
    for (auto j : contributors)
      if (updates[j].mask.test(p)) pack_weight += static_cast<double>(updates[j].dataset_size) / total_size;
    if (pack_weight == 0.0) {
      // No contributor: carry over, but still advance nobody's offset.
      continue;
    }
    acc.setZero(len);
    for (std::size_t k = 0; k < contributors.size(); ++k) {
      const auto& u = updates[contributors[k]];
      if (!u.mask.test(p)) continue;
      const double w = static_cast<double>(u.dataset_size) / total_size;
      acc += (w / pack_weight) * u.values.segment(offset[k], len);
      offset[k] += len;
    }
    next.params.segment(static_cast<Eigen::Index>(r.begin), len) = acc;
    next.coverage.set(p);
  }
  return next;
}

namespace {

std::vector<std::size_t> all_indices(std::size_t m) {
  std::vector<std::size_t> v(m);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

Matrix<double> densify_subset(std::span<const SparseUpdate> updates,
                              std::span<const std::size_t> subset,
                              const GlobalModelState& prev, const PackPartition& partition) {
  Matrix<double> dense(static_cast<Eigen::Index>(partition.dim()),
                       static_cast<Eigen::Index>(subset.size()));
  for (std::size_t k = 0; k < subset.size(); ++k)
    dense.col(static_cast<Eigen::Index>(k)) = densify(updates[subset[k]], partition, prev.params);
  return dense;
}

std::vector<double> subset_weights(std::span<const SparseUpdate> updates,
                                   std::span<const std::size_t> subset) {
  std::vector<double> w;
  w.reserve(subset.size());
  for (auto j : subset) w.push_back(static_cast<double>(updates[j].dataset_size));
  return w;
}

SparseMask union_of(std::span<const SparseUpdate> updates, std::span<const std::size_t> subset,
                    std::size_t pack_count) {
  SparseMask cov(pack_count);
  for (auto j : subset) cov |= updates[j].mask;
  return cov;
}

struct KrumShape {
  std::size_t n_attackers;
  std::size_t k_select;
};

KrumShape krum_shape(std::size_t m, const AggregatorParams& params) {
  std::size_t n = params.krum_n_attackers.value_or(
      static_cast<std::size_t>(std::floor(0.4 * static_cast<double>(m))));
  if (m >= 3 && n + 2 >= m) n = m - 3;
  const std::size_t k = params.krum_k_select.value_or(std::max<std::size_t>(1, m - n));
  return {n, std::min(k, m)};
}

// Baseline over `subset`; fills `retained` with the positions actually used.
RoundAggregation dense_baseline(AggregatorKind kind, std::span<const SparseUpdate> updates,
                                std::span<const std::size_t> subset,
                                const GlobalModelState& prev, const PackPartition& partition,
                                const AggregatorParams& params) {
  RoundAggregation out;
  const Matrix<double> dense = densify_subset(updates, subset, prev, partition);
  const auto weights = subset_weights(updates, subset);
  out.retained.assign(subset.begin(), subset.end());
  ParamVector result;
  switch (kind) {
    case AggregatorKind::FedAvg:
      result = fedavg(dense, weights);
      break;
    case AggregatorKind::Median:
      result = coord_median(dense);
      break;
    case AggregatorKind::TrimmedMean: {
      TrimmedMeanInfo info;
      result = trimmed_mean(dense, params.trim_pct, &info);
      out.trim_fell_back = info.fell_back;
      break;
    }
    case AggregatorKind::MultiKrum: {
      const auto m = subset.size();
      if (m < 3) {
        result = fedavg(dense, weights);
        break;
      }
      const auto shape = krum_shape(m, params);
      std::vector<std::size_t> sel;
      result = multi_krum(dense, weights, shape.n_attackers, shape.k_select,
                          params.krum_neighbors, &sel);
      out.retained.clear();
      for (auto s : sel) out.retained.push_back(subset[s]);
      break;
    }
    case AggregatorKind::RFA: {
      auto r = rfa_geomedian(dense, weights, params.rfa_tol, params.rfa_max_iters);
      out.rfa_converged = r.converged;
      result = std::move(r.point);
      break;
    }
    case AggregatorKind::SafeSparse:
      throw std::logic_error("dense_baseline called with SafeSparse");
  }
  out.state.params = std::move(result);
  out.state.coverage = union_of(updates, out.retained, partition.pack_count());
  out.state.round = prev.round + 1;
  return out;
}

}  // namespace

SafeSparseOutcome safesparse_aggregate(std::span<const SparseUpdate> updates,
                                       const GlobalModelState& prev,
                                       const PackPartition& partition, double beta,
                                       double gamma) {
  if (updates.empty()) throw std::invalid_argument("safesparse_aggregate: no updates");
  SafeSparseOutcome out;
  std::vector<std::size_t> benign;
  if (updates.size() >= 2) {
    out.filter = inspect_clients(updates, prev.params, prev.coverage, partition, beta, gamma);
    benign = out.filter.retained;
  } else {
    benign = {0};
    out.filter.retained = benign;
  }
  if (benign.empty()) {
    // Fail open: aggregate over everyone and flag the round.
    out.degenerate = true;
    benign = all_indices(updates.size());
  }
  out.state = aggregate_packs(updates, benign, prev, partition);
  return out;
}

AggregatorKind parse_aggregator(std::string_view s) {
  if (s == "safesparse") return AggregatorKind::SafeSparse;
  if (s == "fedavg") return AggregatorKind::FedAvg;
  if (s == "multikrum") return AggregatorKind::MultiKrum;
  if (s == "median") return AggregatorKind::Median;
  if (s == "trimmed_mean") return AggregatorKind::TrimmedMean;
  if (s == "rfa") return AggregatorKind::RFA;
  throw std::invalid_argument("unknown aggregator: " + std::string(s));
}

std::string_view to_string(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::SafeSparse: return "safesparse";
    case AggregatorKind::FedAvg: return "fedavg";
    case AggregatorKind::MultiKrum: return "multikrum";
    case AggregatorKind::Median: return "median";
    case AggregatorKind::TrimmedMean: return "trimmed_mean";
    case AggregatorKind::RFA: return "rfa";
  }
  return "?";
}

RoundAggregation aggregate_round(AggregatorKind kind, std::span<const SparseUpdate> updates,
                                 const GlobalModelState& prev, const PackPartition& partition,
                                 const AggregatorParams& params) {
  if (updates.empty()) throw std::invalid_argument("aggregate_round: no updates");
  if (kind == AggregatorKind::SafeSparse) {
    auto ss = safesparse_aggregate(updates, prev, partition, params.beta, params.gamma);
    RoundAggregation out;
    out.state = std::move(ss.state);
    out.degenerate = ss.degenerate;
    out.retained = ss.degenerate ? all_indices(updates.size()) : ss.filter.retained;
    out.filter = std::move(ss.filter);
    return out;
  }
  const auto everyone = all_indices(updates.size());
  return dense_baseline(kind, updates, everyone, prev, partition, params);
}

GlobalModelState aggregate_subset(AggregatorKind kind, std::span<const SparseUpdate> updates,
                                  std::span<const std::size_t> subset,
                                  const GlobalModelState& prev, const PackPartition& partition,
                                  const AggregatorParams& params) {
  if (subset.empty()) throw std::invalid_argument("aggregate_subset: empty subset");
  if (kind == AggregatorKind::SafeSparse) return aggregate_packs(updates, subset, prev, partition);
  return dense_baseline(kind, updates, subset, prev, partition, params).state;
}

}  // namespace safesparse
