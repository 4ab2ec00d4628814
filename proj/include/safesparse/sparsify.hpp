#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "safesparse/params.hpp"

namespace safesparse {

// One bit per pack; bit set means the pack was transmitted.
class SparseMask {
 public:
  SparseMask() = default;
  explicit SparseMask(std::size_t pack_count, bool value = false);
  static SparseMask from_indices(std::size_t pack_count,
                                 std::span<const std::size_t> packs);

  std::size_t size() const { return size_; }
  bool test(std::size_t pack) const {
    return (words_[pack >> 6] >> (pack & 63)) & 1u;
  }
  void set(std::size_t pack, bool value = true);

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  std::vector<std::size_t> indices() const;

  SparseMask operator&(const SparseMask& other) const;
  SparseMask operator|(const SparseMask& other) const;
  SparseMask& operator|=(const SparseMask& other);

  bool operator==(const SparseMask&) const = default;

  std::span<const std::uint64_t> words() const { return words_; }

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

std::size_t intersection_count(const SparseMask& a, const SparseMask& b);
std::size_t union_count(const SparseMask& a, const SparseMask& b);

// A client's round submission. `values` holds the parameters of the selected
// packs concatenated in ascending pack order.
struct SparseUpdate {
  int client_id = 0;
  SparseMask mask;
  ParamVector values;
  std::size_t dataset_size = 1;

  // Values of one selected pack, located by its rank among selected packs.
  Eigen::Map<const ParamVector> pack_values(const PackPartition& partition,
                                            std::size_t pack) const;
};

std::vector<double> pack_scores(const ParamVector& delta,
                                const PackPartition& partition);

// k = max(1, round(ratio * P)) packs with the largest scores, ties to the
// lower pack index.
std::size_t topk_count(std::size_t pack_count, double ratio);
SparseMask topk_mask(std::span<const double> scores, double ratio);

// Packs `model` onto `mask`: values are the model's parameters, not deltas.
SparseUpdate restrict_to_mask(const ParamVector& model, const SparseMask& mask,
                              const PackPartition& partition, int client_id,
                              std::size_t dataset_size);

SparseUpdate sparsify_update(const ParamVector& local_model,
                             const ParamVector& prev_global,
                             const PackPartition& partition, double ratio,
                             int client_id, std::size_t dataset_size);

// Wire format: pack p lives at bit (p % 8) of byte (p / 8); pad bits are zero.
std::vector<std::uint8_t> encode_mask(const SparseMask& mask);
SparseMask decode_mask(std::span<const std::uint8_t> bytes,
                       std::size_t pack_count);

// Mask bytes followed by the selected values as little-endian IEEE-754
// binary64, ascending pack index.
std::vector<std::uint8_t> encode_update(const SparseUpdate& update);
SparseUpdate decode_update(std::span<const std::uint8_t> bytes,
                           const PackPartition& partition, int client_id,
                           std::size_t dataset_size);

std::size_t mask_bytes(std::size_t pack_count);
std::size_t payload_bytes(const SparseUpdate& update);

}  // namespace safesparse
