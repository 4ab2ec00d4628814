#include "safesparse/params.hpp"

#include <algorithm>
#include <stdexcept>

#include "safesparse/sparsify.hpp"

namespace safesparse {

PackPartition::PackPartition(std::size_t dim, std::size_t pack_size)
    : dim_(dim), pack_size_(pack_size) {
  if (dim == 0) throw std::invalid_argument("partition_packs: d must be >= 1");
  if (pack_size == 0 || pack_size > dim)
    throw std::invalid_argument("partition_packs: pack_size must be in [1, d]");
  pack_count_ = (dim + pack_size - 1) / pack_size;
}

PackRange PackPartition::range(std::size_t pack) const {
  if (pack >= pack_count_) throw std::out_of_range("pack index out of range");
  const std::size_t begin = pack * pack_size_;
  return {begin, std::min(begin + pack_size_, dim_)};
}

PackPartition partition_packs(std::size_t dim, std::size_t pack_size) {
  return PackPartition(dim, pack_size);
}

ParamVector densify(const SparseUpdate& update, const PackPartition& partition,
                    const ParamVector& fill) {
  if (update.mask.size() != partition.pack_count())
    throw std::invalid_argument("densify: mask size != pack count");
  if (static_cast<std::size_t>(fill.size()) != partition.dim())
    throw std::invalid_argument("densify: fill length != d");
  ParamVector out = fill;
  Eigen::Index offset = 0;
  for (std::size_t p = 0; p < partition.pack_count(); ++p) {
    if (!update.mask.test(p)) continue;
    const auto r = partition.range(p);
    const auto len = static_cast<Eigen::Index>(r.size());
    if (offset + len > update.values.size())
      throw std::invalid_argument("densify: values shorter than mask implies");
    out.segment(static_cast<Eigen::Index>(r.begin), len) =
        update.values.segment(offset, len);
    offset += len;
  }
  if (offset != update.values.size())
    throw std::invalid_argument("densify: values longer than mask implies");
  return out;
}

bool all_finite(const ParamVector& v) { return v.allFinite(); }

}  // namespace safesparse
