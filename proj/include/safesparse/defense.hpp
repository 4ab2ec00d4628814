#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "safesparse/params.hpp"
#include "safesparse/sparsify.hpp"

namespace safesparse {

// Raised when the inspection pipeline would leave no client to aggregate.
class DegenerateFilterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Structural stage: mask overlap.

double jaccard(const SparseMask& a, const SparseMask& b);

// Mean Jaccard similarity of each client's mask with every other client's.
std::vector<double> jaccard_scores(std::span<const SparseMask> masks);

// ((max + min) / 2) * beta over the score list.
double jaccard_threshold(std::span<const double> scores, double beta);

// Indices i with score(i) >= threshold. Throws DegenerateFilterError when
// nothing survives.
std::vector<std::size_t> jaccard_filter(std::span<const SparseMask> masks,
                                        double beta);

Matrix<double> jaccard_matrix(std::span<const SparseMask> masks);

// ---------------------------------------------------------------------------
// Semantic stage: sign directions and density clustering.

// Ternary sign of w_i - w_G. Defined only on `coverage`, the packs that the
// client transmitted and the previous aggregation touched; entries outside
// it are stored as 0 and never read.
struct SignVector {
  SparseMask coverage;
  std::vector<std::int8_t> signs;
};

SignVector sign_delta(const SparseUpdate& update, const ParamVector& prev_global,
                      const SparseMask& prev_coverage,
                      const PackPartition& partition);

// Cosine over coverage(a) ∩ coverage(b); 0 when the overlap is empty or either
// side has zero norm there.
double sign_cosine(const SignVector& a, const SignVector& b,
                   const PackPartition& partition);

Matrix<double> sign_cosine_matrix(std::span<const SignVector> signs,
                                  const PackPartition& partition);

// D = 1 - cos with an exact zero diagonal.
Matrix<double> distance_matrix(std::span<const SignVector> signs,
                               const PackPartition& partition);

// n = max(1, round_half_up(population * gamma)); also used as min_pts.
std::size_t neighbor_count(std::size_t population, double gamma);

// Mean over rows of the distance to the n-th nearest other point. n is
// clamped to m - 1.
double dbscan_eps(const Matrix<double>& dist, std::size_t n);
double dbscan_eps(const Matrix<double>& dist, double gamma);

inline constexpr int kNoise = -1;

// DBSCAN over a precomputed metric. A point is core when at least `min_pts`
// points, itself included, lie within distance <= eps. Points are visited in
// index order and cluster ids are handed out in discovery order.
std::vector<int> dbscan(const Matrix<double>& dist, double eps,
                        std::size_t min_pts);

// ---------------------------------------------------------------------------
// Composition.

struct FilterReport {
  std::vector<std::size_t> retained;           // positions into the update list
  std::vector<std::size_t> excluded_jaccard;
  std::vector<std::size_t> excluded_cluster;
  std::vector<double> jaccard_scores;
  double jaccard_threshold = 0.0;
  std::vector<int> labels;                     // per Jaccard survivor
  double eps = 0.0;
  std::size_t min_pts = 0;
};

// Runs both stages and reports everything, including an empty retained set.
FilterReport inspect_clients(std::span<const SparseUpdate> updates,
                             const ParamVector& prev_global,
                             const SparseMask& prev_coverage,
                             const PackPartition& partition, double beta,
                             double gamma);

// Same pipeline, but an empty result throws DegenerateFilterError.
std::vector<std::size_t> poison_filter(std::span<const SparseUpdate> updates,
                                       const ParamVector& prev_global,
                                       const SparseMask& prev_coverage,
                                       const PackPartition& partition,
                                       double beta, double gamma);

}  // namespace safesparse
