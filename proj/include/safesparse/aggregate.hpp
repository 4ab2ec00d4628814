#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "safesparse/defense.hpp"
#include "safesparse/params.hpp"
#include "safesparse/sparsify.hpp"

namespace safesparse {

// Dense baselines take a d x m matrix whose columns are client models.

template <typename Derived>
Vector<typename Derived::Scalar> fedavg(const Eigen::MatrixBase<Derived>& updates,
                                        std::span<const double> weights) {
  using Scalar = typename Derived::Scalar;
  if (static_cast<std::size_t>(updates.cols()) != weights.size() || weights.empty())
    throw std::invalid_argument("fedavg: weight count != client count");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("fedavg: weights must sum > 0");
  Vector<Scalar> out = Vector<Scalar>::Zero(updates.rows());
  for (Eigen::Index j = 0; j < updates.cols(); ++j)
    out += static_cast<Scalar>(weights[static_cast<std::size_t>(j)] / total) * updates.col(j);
  return out;
}

template <typename Derived>
Vector<typename Derived::Scalar> coord_median(const Eigen::MatrixBase<Derived>& updates) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index m = updates.cols();
  if (m == 0) throw std::invalid_argument("coord_median: no updates");
  Vector<Scalar> out(updates.rows());
  std::vector<Scalar> col(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < updates.rows(); ++i) {
    for (Eigen::Index j = 0; j < m; ++j) col[static_cast<std::size_t>(j)] = updates(i, j);
    std::sort(col.begin(), col.end());
    const auto h = static_cast<std::size_t>(m / 2);
    out[i] = (m % 2) ? col[h] : (col[h - 1] + col[h]) / Scalar(2);
  }
  return out;
}

// Number trimmed from each end: floor(m * trim_pct / 100).
inline std::size_t trim_count(std::size_t m, double trim_pct) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(m) * trim_pct / 100.0 + 1e-9));
}

struct TrimmedMeanInfo {
  bool fell_back = false;  // trimming would have removed every value
};

template <typename Derived>
Vector<typename Derived::Scalar> trimmed_mean(const Eigen::MatrixBase<Derived>& updates,
                                              double trim_pct,
                                              TrimmedMeanInfo* info = nullptr) {
  using Scalar = typename Derived::Scalar;
  const auto m = static_cast<std::size_t>(updates.cols());
  if (m == 0) throw std::invalid_argument("trimmed_mean: no updates");
  if (trim_pct < 0.0) throw std::invalid_argument("trimmed_mean: negative trim");
  std::size_t t = trim_count(m, trim_pct);
  if (2 * t >= m) {
    t = 0;
    if (info) info->fell_back = true;
  }
  Vector<Scalar> out(updates.rows());
  std::vector<Scalar> col(m);
  for (Eigen::Index i = 0; i < updates.rows(); ++i) {
    for (std::size_t j = 0; j < m; ++j) col[j] = updates(i, static_cast<Eigen::Index>(j));
    std::sort(col.begin(), col.end());
    Scalar s(0);
    for (std::size_t j = t; j < m - t; ++j) s += col[j];
    out[i] = s / static_cast<Scalar>(m - 2 * t);
  }
  return out;
}

enum class KrumNeighbors {
  Classic,  // m - n - 2 nearest other updates
  Wide,     // m - n - 1 nearest other updates
};

KrumNeighbors parse_krum_neighbors(std::string_view s);
std::string_view to_string(KrumNeighbors k);

template <typename Derived>
std::vector<double> krum_scores(const Eigen::MatrixBase<Derived>& updates,
                                std::size_t n_attackers, KrumNeighbors rule) {
  const auto m = static_cast<std::size_t>(updates.cols());
  if (m <= n_attackers + 2)
    throw std::invalid_argument("multi_krum: need m > n_attackers + 2");
  const std::size_t keep = m - n_attackers - (rule == KrumNeighbors::Classic ? 2 : 1);
  std::vector<double> scores(m);
  std::vector<double> dists;
  for (std::size_t i = 0; i < m; ++i) {
    dists.clear();
    for (std::size_t j = 0; j < m; ++j)
      if (j != i)
        dists.push_back(static_cast<double>(
            (updates.col(static_cast<Eigen::Index>(i)) - updates.col(static_cast<Eigen::Index>(j)))
                .squaredNorm()));
    std::sort(dists.begin(), dists.end());
    scores[i] = std::accumulate(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(keep), 0.0);
  }
  return scores;
}

// Indices of the k_select lowest Krum scores, ties to the lower index,
// returned in ascending index order.
std::vector<std::size_t> krum_select(std::span<const double> scores, std::size_t k_select);

template <typename Derived>
Vector<typename Derived::Scalar> multi_krum(const Eigen::MatrixBase<Derived>& updates,
                                            std::span<const double> weights,
                                            std::size_t n_attackers, std::size_t k_select,
                                            KrumNeighbors rule = KrumNeighbors::Classic,
                                            std::vector<std::size_t>* selected_out = nullptr) {
  const auto m = static_cast<std::size_t>(updates.cols());
  if (k_select < 1 || k_select > m) throw std::invalid_argument("multi_krum: k_select out of range");
  if (weights.size() != m) throw std::invalid_argument("multi_krum: weight count != m");
  const auto scores = krum_scores(updates, n_attackers, rule);
  auto selected = krum_select(scores, k_select);
  Matrix<typename Derived::Scalar> chosen(updates.rows(), static_cast<Eigen::Index>(selected.size()));
  std::vector<double> w;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    chosen.col(static_cast<Eigen::Index>(k)) = updates.col(static_cast<Eigen::Index>(selected[k]));
    w.push_back(weights[selected[k]]);
  }
  if (selected_out) *selected_out = selected;
  return fedavg(chosen, w);
}

struct WeiszfeldResult {
  ParamVector point;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective;  // sum_j w_j ||x_j - z||, one entry per iterate
};

inline constexpr double kWeiszfeldSmoothing = 1e-8;

// Smoothed Weiszfeld iteration for the weighted geometric median, started
// from the weighted mean.
template <typename Derived>
WeiszfeldResult rfa_geomedian(const Eigen::MatrixBase<Derived>& updates,
                              std::span<const double> weights, double tol = 1e-6,
                              std::size_t max_iters = 100) {
  const Eigen::Index m = updates.cols();
  if (m == 0) throw std::invalid_argument("rfa: no updates");
  const Matrix<double> x = updates.template cast<double>();
  auto objective = [&](const ParamVector& z) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      s += weights[static_cast<std::size_t>(j)] * (x.col(j) - z).norm();
    return s;
  };
  WeiszfeldResult res;
  res.point = fedavg(x, weights);
  res.objective.push_back(objective(res.point));
  for (std::size_t it = 0; it < max_iters; ++it) {
    ParamVector num = ParamVector::Zero(x.rows());
    double den = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double c = weights[static_cast<std::size_t>(j)] /
                       std::max((x.col(j) - res.point).norm(), kWeiszfeldSmoothing);
      num += c * x.col(j);
      den += c;
    }
    ParamVector next = num / den;
    const double step = (next - res.point).norm();
    res.point = std::move(next);
    res.iterations = it + 1;
    res.objective.push_back(objective(res.point));
    if (step < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sparse, pack-level aggregation.

struct GlobalModelState {
  ParamVector params;
  SparseMask coverage;  // packs written by the most recent aggregation
  int round = 0;
};

// Pack-normalized weighted mean over `contributors` (positions into
// `updates`). Client weights are |D_j| / sum over all m participants; each
// pack divides by its own contributors' total weight. Packs no contributor
// selected keep prev.params bit-for-bit.
GlobalModelState aggregate_packs(std::span<const SparseUpdate> updates,
                                 std::span<const std::size_t> contributors,
                                 const GlobalModelState& prev,
                                 const PackPartition& partition);

struct SafeSparseOutcome {
  GlobalModelState state;
  FilterReport filter;
  bool degenerate = false;  // filter emptied the set; all clients were used
};

SafeSparseOutcome safesparse_aggregate(std::span<const SparseUpdate> updates,
                                       const GlobalModelState& prev,
                                       const PackPartition& partition, double beta,
                                       double gamma);

enum class AggregatorKind { SafeSparse, FedAvg, MultiKrum, Median, TrimmedMean, RFA };

AggregatorKind parse_aggregator(std::string_view s);
std::string_view to_string(AggregatorKind k);
inline constexpr AggregatorKind kAllAggregators[] = {
    AggregatorKind::SafeSparse, AggregatorKind::FedAvg, AggregatorKind::MultiKrum,
    AggregatorKind::Median, AggregatorKind::TrimmedMean, AggregatorKind::RFA};

struct AggregatorParams {
  double beta = 0.6;
  double gamma = 0.2;
  double trim_pct = 10.0;
  KrumNeighbors krum_neighbors = KrumNeighbors::Classic;
  std::optional<std::size_t> krum_n_attackers;  // default: floor(0.4 m)
  std::optional<std::size_t> krum_k_select;     // default: m - n
  double rfa_tol = 1e-6;
  std::size_t rfa_max_iters = 100;

  bool operator==(const AggregatorParams&) const = default;
};

struct RoundAggregation {
  GlobalModelState state;
  std::vector<std::size_t> retained;  // positions whose submissions were used
  std::optional<FilterReport> filter;
  bool degenerate = false;
  bool trim_fell_back = false;
  bool rfa_converged = true;
};

// Dispatch. Baselines see each update densified against prev.params; their
// coverage is the union of the masks they consumed.
RoundAggregation aggregate_round(AggregatorKind kind, std::span<const SparseUpdate> updates,
                                 const GlobalModelState& prev, const PackPartition& partition,
                                 const AggregatorParams& params);

// The same aggregator restricted to `subset`, with no defense run: used for
// the simulator's benign-only shadow model.
GlobalModelState aggregate_subset(AggregatorKind kind, std::span<const SparseUpdate> updates,
                                  std::span<const std::size_t> subset,
                                  const GlobalModelState& prev, const PackPartition& partition,
                                  const AggregatorParams& params);

}  // namespace safesparse
