#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace safesparse {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Flat model parameters. Every task, client and aggregator speaks this type.
using ParamVector = Vector<double>;

struct PackRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

// Contiguous split of [0, d) into ceil(d / pack_size) packs. Only the last
// pack may be shorter than pack_size.
class PackPartition {
 public:
  PackPartition() = default;
  PackPartition(std::size_t dim, std::size_t pack_size);

  std::size_t dim() const { return dim_; }
  std::size_t pack_size() const { return pack_size_; }
  std::size_t pack_count() const { return pack_count_; }

  PackRange range(std::size_t pack) const;
  std::size_t pack_of(std::size_t coord) const { return coord / pack_size_; }

  bool operator==(const PackPartition&) const = default;

 private:
  std::size_t dim_ = 0;
  std::size_t pack_size_ = 1;
  std::size_t pack_count_ = 0;
};

PackPartition partition_packs(std::size_t dim, std::size_t pack_size);

struct SparseUpdate;

// Expands a sparse submission to a dense vector. Unselected packs take the
// value of `fill`, normally the previous global model.
ParamVector densify(const SparseUpdate& update, const PackPartition& partition,
                    const ParamVector& fill);

bool all_finite(const ParamVector& v);

}  // namespace safesparse
