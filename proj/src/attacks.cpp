#include "safesparse/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace safesparse {

AttackKind parse_attack(std::string_view s) {
  if (s == "none") return AttackKind::None;
  if (s == "lfa") return AttackKind::LFA;
  if (s == "gna") return AttackKind::GNA;
  if (s == "ipm") return AttackKind::IPM;
  if (s == "scaling") return AttackKind::Scaling;
  throw std::invalid_argument("unknown attack kind: " + std::string(s));
}

std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::None: return "none";
    case AttackKind::LFA: return "lfa";
    case AttackKind::GNA: return "gna";
    case AttackKind::IPM: return "ipm";
    case AttackKind::Scaling: return "scaling";
  }
  return "?";
}

MaskMode parse_mask_mode(std::string_view s) {
  if (s == "honest") return MaskMode::Honest;
  if (s == "coordinated") return MaskMode::Coordinated;
  throw std::invalid_argument("unknown mask_mode: " + std::string(s));
}

std::string_view to_string(MaskMode m) {
  return m == MaskMode::Honest ? "honest" : "coordinated";
}

std::vector<int> attacker_ids(std::size_t n_clients, double ratio) {
  if (!(ratio >= 0.0 && ratio < 0.5))
    throw std::invalid_argument("attacker ratio must be below 0.5 (honest-majority threat model)");
  const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n_clients) + 1e-9));
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  return ids;
}

int label_flip(int label, int num_classes) {
  if (label < 0 || label >= num_classes)
    throw std::invalid_argument("label_flip: label out of range");
  return num_classes - label - 1;
}

ParamVector gaussian_noise_update(const ParamVector& honest_local, std::uint64_t seed) {
  const auto d = honest_local.size();
  if (d == 0) return honest_local;
  const double mu = honest_local.mean();
  const double var = (honest_local.array() - mu).square().sum() / static_cast<double>(d);
  const double sigma = std::sqrt(var);
  if (sigma == 0.0) return ParamVector::Constant(d, mu);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(mu, sigma);
  ParamVector out(d);
  for (Eigen::Index i = 0; i < d; ++i) out[i] = normal(rng);
  return out;
}

ParamVector ipm_update(std::span<const ParamVector> colluder_honest, double epsilon,
                       const ParamVector& prev_global) {
  if (colluder_honest.empty()) throw std::invalid_argument("ipm_update: no colluders");
  ParamVector mean_delta = ParamVector::Zero(prev_global.size());
  for (const auto& w : colluder_honest) mean_delta += w - prev_global;
  mean_delta /= static_cast<double>(colluder_honest.size());
  return prev_global - epsilon * mean_delta;
}

ParamVector scaling_update(const ParamVector& honest_local, const ParamVector& prev_global,
                           double factor) {
  return prev_global + factor * (honest_local - prev_global);
}

std::vector<SparseUpdate> coordinate_masks(std::span<const SparseUpdate> attacker_updates,
                                           std::span<const ParamVector> full_models,
                                           const PackPartition& partition, MaskMode mode) {
  std::vector<SparseUpdate> out(attacker_updates.begin(), attacker_updates.end());
  if (mode == MaskMode::Honest || out.empty()) return out;
  if (full_models.size() != attacker_updates.size())
    throw std::invalid_argument("coordinate_masks: one full model per attacker required");
  const auto leader = std::min_element(out.begin(), out.end(), [](const auto& a, const auto& b) {
                        return a.client_id < b.client_id;
                      }) - out.begin();
  const SparseMask shared = out[static_cast<std::size_t>(leader)].mask;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = restrict_to_mask(full_models[i], shared, partition, out[i].client_id,
                              out[i].dataset_size);
  return out;
}

}  // namespace safesparse
