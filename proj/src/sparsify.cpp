#include "safesparse/sparsify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace safesparse {

SparseMask::SparseMask(std::size_t pack_count, bool value)
    : size_(pack_count), words_((pack_count + 63) / 64, 0) {
  if (value)
    for (std::size_t p = 0; p < pack_count; ++p) set(p);
}

SparseMask SparseMask::from_indices(std::size_t pack_count,
                                    std::span<const std::size_t> packs) {
  SparseMask m(pack_count);
  for (auto p : packs) {
    if (p >= pack_count) throw std::out_of_range("mask index out of range");
    m.set(p);
  }
  return m;
}

void SparseMask::set(std::size_t pack, bool value) {
  const std::uint64_t bit = std::uint64_t{1} << (pack & 63);
  if (value)
    words_[pack >> 6] |= bit;
  else
    words_[pack >> 6] &= ~bit;
}

std::size_t SparseMask::count() const {
  std::size_t c = 0;
  for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

std::vector<std::size_t> SparseMask::indices() const {
  std::vector<std::size_t> out;
  out.reserve(count());
  for (std::size_t p = 0; p < size_; ++p)
    if (test(p)) out.push_back(p);
  return out;
}

SparseMask SparseMask::operator&(const SparseMask& other) const {
  if (size_ != other.size_) throw std::invalid_argument("mask size mismatch");
  SparseMask out = *this;
  for (std::size_t i = 0; i < words_.size(); ++i) out.words_[i] &= other.words_[i];
  return out;
}

SparseMask SparseMask::operator|(const SparseMask& other) const {
  SparseMask out = *this;
  out |= other;
  return out;
}

SparseMask& SparseMask::operator|=(const SparseMask& other) {
  if (size_ != other.size_) throw std::invalid_argument("mask size mismatch");
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

std::size_t intersection_count(const SparseMask& a, const SparseMask& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mask size mismatch");
  std::size_t c = 0;
  auto wa = a.words(), wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i)
    c += static_cast<std::size_t>(std::popcount(wa[i] & wb[i]));
  return c;
}

std::size_t union_count(const SparseMask& a, const SparseMask& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mask size mismatch");
  std::size_t c = 0;
  auto wa = a.words(), wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i)
    c += static_cast<std::size_t>(std::popcount(wa[i] | wb[i]));
  return c;
}

Eigen::Map<const ParamVector> SparseUpdate::pack_values(
    const PackPartition& partition, std::size_t pack) const {
  if (!mask.test(pack)) throw std::invalid_argument("pack not selected");
  Eigen::Index offset = 0;
  for (std::size_t q = 0; q < pack; ++q)
    if (mask.test(q)) offset += static_cast<Eigen::Index>(partition.range(q).size());
  return {values.data() + offset,
          static_cast<Eigen::Index>(partition.range(pack).size())};
}

std::vector<double> pack_scores(const ParamVector& delta,
                                const PackPartition& partition) {
  if (static_cast<std::size_t>(delta.size()) != partition.dim())
    throw std::invalid_argument("pack_scores: delta length != d");
  std::vector<double> scores(partition.pack_count());
  for (std::size_t p = 0; p < scores.size(); ++p) {
    const auto r = partition.range(p);
    scores[p] = delta
                    .segment(static_cast<Eigen::Index>(r.begin),
                             static_cast<Eigen::Index>(r.size()))
                    .norm();
  }
  return scores;
}

std::size_t topk_count(std::size_t pack_count, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw std::invalid_argument("topk ratio must be in (0, 1]");
  const auto k = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(pack_count)));
  return std::clamp<std::size_t>(k, 1, pack_count);
}

SparseMask topk_mask(std::span<const double> scores, double ratio) {
  if (scores.empty()) throw std::invalid_argument("topk_mask: no packs");
  const std::size_t k = topk_count(scores.size(), ratio);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  SparseMask mask(scores.size());
  for (std::size_t i = 0; i < k; ++i) mask.set(order[i]);
  return mask;
}

SparseUpdate restrict_to_mask(const ParamVector& model, const SparseMask& mask,
                              const PackPartition& partition, int client_id,
                              std::size_t dataset_size) {
  if (static_cast<std::size_t>(model.size()) != partition.dim())
    throw std::invalid_argument("restrict_to_mask: model length != d");
  if (mask.size() != partition.pack_count())
    throw std::invalid_argument("restrict_to_mask: mask size != pack count");
  Eigen::Index total = 0;
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask.test(p)) total += static_cast<Eigen::Index>(partition.range(p).size());
  SparseUpdate u;
  u.client_id = client_id;
  u.mask = mask;
  u.dataset_size = dataset_size;
  u.values.resize(total);
  Eigen::Index offset = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask.test(p)) continue;
    const auto r = partition.range(p);
    const auto len = static_cast<Eigen::Index>(r.size());
    u.values.segment(offset, len) =
        model.segment(static_cast<Eigen::Index>(r.begin), len);
    offset += len;
  }
  return u;
}

SparseUpdate sparsify_update(const ParamVector& local_model,
                             const ParamVector& prev_global,
                             const PackPartition& partition, double ratio,
                             int client_id, std::size_t dataset_size) {
  if (local_model.size() != prev_global.size())
    throw std::invalid_argument("sparsify_update: length mismatch");
  const auto scores = pack_scores(local_model - prev_global, partition);
  return restrict_to_mask(local_model, topk_mask(scores, ratio), partition,
                          client_id, dataset_size);
}

std::size_t mask_bytes(std::size_t pack_count) { return (pack_count + 7) / 8; }

std::vector<std::uint8_t> encode_mask(const SparseMask& mask) {
  std::vector<std::uint8_t> bytes(mask_bytes(mask.size()), 0);
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask.test(p)) bytes[p >> 3] |= static_cast<std::uint8_t>(1u << (p & 7));
  return bytes;
}

SparseMask decode_mask(std::span<const std::uint8_t> bytes,
                       std::size_t pack_count) {
  const std::size_t need = mask_bytes(pack_count);
  if (bytes.size() < need)
    throw std::invalid_argument("decode_mask: byte sequence too short");
  if (pack_count % 8 != 0) {
    const std::uint8_t pad = static_cast<std::uint8_t>(0xFFu << (pack_count % 8));
    if (bytes[need - 1] & pad)
      throw std::invalid_argument("decode_mask: nonzero pad bits");
  }
  SparseMask mask(pack_count);
  for (std::size_t p = 0; p < pack_count; ++p)
    if ((bytes[p >> 3] >> (p & 7)) & 1u) mask.set(p);
  return mask;
}

namespace {

void put_f64_le(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double get_f64_le(const std::uint8_t* in) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t{in[i]} << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_update(const SparseUpdate& update) {
  auto out = encode_mask(update.mask);
  out.reserve(out.size() + 8 * static_cast<std::size_t>(update.values.size()));
  for (Eigen::Index i = 0; i < update.values.size(); ++i) put_f64_le(out, update.values[i]);
  return out;
}

SparseUpdate decode_update(std::span<const std::uint8_t> bytes,
                           const PackPartition& partition, int client_id,
                           std::size_t dataset_size) {
  const std::size_t head = mask_bytes(partition.pack_count());
  // Short input is reported by decode_mask.
  SparseMask mask = decode_mask(bytes, partition.pack_count());
  std::size_t n_values = 0;
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask.test(p)) n_values += partition.range(p).size();
  if (bytes.size() != head + 8 * n_values)
    throw std::invalid_argument("decode_update: payload size does not match mask");
  SparseUpdate u;
  u.client_id = client_id;
  u.mask = std::move(mask);
  u.dataset_size = dataset_size;
  u.values.resize(static_cast<Eigen::Index>(n_values));
  for (std::size_t i = 0; i < n_values; ++i)
    u.values[static_cast<Eigen::Index>(i)] = get_f64_le(bytes.data() + head + 8 * i);
  return u;
}

std::size_t payload_bytes(const SparseUpdate& update) {
  return mask_bytes(update.mask.size()) +
         8 * static_cast<std::size_t>(update.values.size());
}

}  // namespace safesparse
