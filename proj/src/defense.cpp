#include "safesparse/defense.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace safesparse {

double jaccard(const SparseMask& a, const SparseMask& b) {
  if (a.size() != b.size()) throw std::invalid_argument("jaccard: pack_count mismatch");
  const std::size_t uni = union_count(a, b);
  if (uni == 0) return 1.0;  // two empty masks agree trivially
  return static_cast<double>(intersection_count(a, b)) / static_cast<double>(uni);
}

Matrix<double> jaccard_matrix(std::span<const SparseMask> masks) {
  const auto m = static_cast<Eigen::Index>(masks.size());
  Matrix<double> out(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    out(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < m; ++j)
      out(i, j) = out(j, i) = jaccard(masks[i], masks[j]);
  }
  return out;
}

std::vector<double> jaccard_scores(std::span<const SparseMask> masks) {
  if (masks.size() < 2) throw std::invalid_argument("jaccard_scores: need m >= 2");
  const Matrix<double> jm = jaccard_matrix(masks);
  const double denom = static_cast<double>(masks.size() - 1);
  std::vector<double> scores(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < masks.size(); ++j)
      if (j != i) s += jm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    scores[i] = s / denom;
  }
  return scores;
}

double jaccard_threshold(std::span<const double> scores, double beta) {
  if (scores.empty()) throw std::invalid_argument("jaccard_threshold: no scores");
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  return (*hi + *lo) / 2.0 * beta;
}

std::vector<std::size_t> jaccard_filter(std::span<const SparseMask> masks,
                                        double beta) {
  const auto scores = jaccard_scores(masks);
  const double thr = jaccard_threshold(scores, beta);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= thr) keep.push_back(i);
  if (keep.empty()) throw DegenerateFilterError("jaccard filter excluded every client");
  return keep;
}

SignVector sign_delta(const SparseUpdate& update, const ParamVector& prev_global,
                      const SparseMask& prev_coverage,
                      const PackPartition& partition) {
  if (static_cast<std::size_t>(prev_global.size()) != partition.dim())
    throw std::invalid_argument("sign_delta: prev_global length != d");
  SignVector sv;
  sv.coverage = update.mask & prev_coverage;
  sv.signs.assign(partition.dim(), 0);
  Eigen::Index offset = 0;
  for (std::size_t p = 0; p < partition.pack_count(); ++p) {
    if (!update.mask.test(p)) continue;
    const auto r = partition.range(p);
    if (sv.coverage.test(p)) {
      for (std::size_t c = r.begin; c < r.end; ++c) {
        const double delta =
            update.values[offset + static_cast<Eigen::Index>(c - r.begin)] -
            prev_global[static_cast<Eigen::Index>(c)];
        sv.signs[c] = static_cast<std::int8_t>((delta > 0.0) - (delta < 0.0));
      }
    }
    offset += static_cast<Eigen::Index>(r.size());
  }
  return sv;
}

double sign_cosine(const SignVector& a, const SignVector& b,
                   const PackPartition& partition) {
  const SparseMask overlap = a.coverage & b.coverage;
  long dot = 0, na = 0, nb = 0;
  for (std::size_t p = 0; p < overlap.size(); ++p) {
    if (!overlap.test(p)) continue;
    const auto r = partition.range(p);
    for (std::size_t c = r.begin; c < r.end; ++c) {
      dot += a.signs[c] * b.signs[c];
      na += a.signs[c] * a.signs[c];
      nb += b.signs[c] * b.signs[c];
    }
  }
  if (na == 0 || nb == 0) return 0.0;
  const double c = static_cast<double>(dot) / std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
  return std::clamp(c, -1.0, 1.0);
}

Matrix<double> sign_cosine_matrix(std::span<const SignVector> signs,
                                  const PackPartition& partition) {
  const auto m = static_cast<Eigen::Index>(signs.size());
  Matrix<double> out(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    out(i, i) = sign_cosine(signs[i], signs[i], partition);
    for (Eigen::Index j = i + 1; j < m; ++j)
      out(i, j) = out(j, i) = sign_cosine(signs[i], signs[j], partition);
  }
  return out;
}

Matrix<double> distance_matrix(std::span<const SignVector> signs,
                               const PackPartition& partition) {
  Matrix<double> d = Matrix<double>::Ones(static_cast<Eigen::Index>(signs.size()),
                                          static_cast<Eigen::Index>(signs.size())) -
                     sign_cosine_matrix(signs, partition);
  d.diagonal().setZero();
  return d;
}

std::size_t neighbor_count(std::size_t population, double gamma) {
  // The epsilon absorbs representation error such as 20 * 0.45 = 8.99...
  const double n = std::floor(static_cast<double>(population) * gamma + 0.5 + 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::max(0.0, n)));
}

double dbscan_eps(const Matrix<double>& dist, std::size_t n) {
  const auto m = dist.rows();
  if (m < 2 || dist.cols() != m) throw std::invalid_argument("dbscan_eps: need square m >= 2");
  n = std::clamp<std::size_t>(n, 1, static_cast<std::size_t>(m - 1));
  double total = 0.0;
  std::vector<double> row;
  for (Eigen::Index i = 0; i < m; ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i) row.push_back(dist(i, j));
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(n - 1), row.end());
    total += row[n - 1];
  }
  return total / static_cast<double>(m);
}

double dbscan_eps(const Matrix<double>& dist, double gamma) {
  return dbscan_eps(dist, neighbor_count(static_cast<std::size_t>(dist.rows()), gamma));
}

std::vector<int> dbscan(const Matrix<double>& dist, double eps, std::size_t min_pts) {
  const auto m = static_cast<std::size_t>(dist.rows());
  constexpr int kUnvisited = -2;
  std::vector<int> label(m, kUnvisited);
  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < m; ++j)
      if (dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) <= eps)
        out.push_back(j);
    return out;
  };
  int next_id = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (label[i] != kUnvisited) continue;
    auto seeds = neighbours(i);
    if (seeds.size() < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int id = next_id++;
    label[i] = id;
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (label[q] == kNoise) label[q] = id;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = id;
      auto nq = neighbours(q);
      if (nq.size() >= min_pts) queue.insert(queue.end(), nq.begin(), nq.end());
    }
  }
  return label;
}

FilterReport inspect_clients(std::span<const SparseUpdate> updates,
                             const ParamVector& prev_global,
                             const SparseMask& prev_coverage,
                             const PackPartition& partition, double beta,
                             double gamma) {
  if (updates.size() < 2) throw std::invalid_argument("poison_filter: need m >= 2");
  FilterReport rep;
  std::vector<SparseMask> masks;
  masks.reserve(updates.size());
  for (const auto& u : updates) masks.push_back(u.mask);
  rep.jaccard_scores = jaccard_scores(masks);
  rep.jaccard_threshold = jaccard_threshold(rep.jaccard_scores, beta);

  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (rep.jaccard_scores[i] >= rep.jaccard_threshold)
      survivors.push_back(i);
    else
      rep.excluded_jaccard.push_back(i);
  }
  // n = m * gamma over the whole round; eps over the survivors only.
  rep.min_pts = neighbor_count(updates.size(), gamma);
  if (survivors.size() < 2) {
    rep.retained = survivors;
    return rep;
  }

  std::vector<SignVector> signs;
  signs.reserve(survivors.size());
  for (auto i : survivors)
    signs.push_back(sign_delta(updates[i], prev_global, prev_coverage, partition));
  const Matrix<double> dist = distance_matrix(signs, partition);
  rep.eps = dbscan_eps(dist, rep.min_pts);
  rep.labels = dbscan(dist, rep.eps, rep.min_pts);
  for (std::size_t k = 0; k < survivors.size(); ++k) {
    if (rep.labels[k] == kNoise)
      rep.retained.push_back(survivors[k]);
    else
      rep.excluded_cluster.push_back(survivors[k]);
  }
  return rep;
}

std::vector<std::size_t> poison_filter(std::span<const SparseUpdate> updates,
                                       const ParamVector& prev_global,
                                       const SparseMask& prev_coverage,
                                       const PackPartition& partition,
                                       double beta, double gamma) {
  auto rep = inspect_clients(updates, prev_global, prev_coverage, partition, beta, gamma);
  if (rep.retained.empty())
    throw DegenerateFilterError("poison filter retained no clients");
  return rep.retained;
}

}  // namespace safesparse
