#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "safesparse/params.hpp"
#include "safesparse/sparsify.hpp"

namespace safesparse {

enum class AttackKind { None, LFA, GNA, IPM, Scaling };
enum class MaskMode { Honest, Coordinated };

AttackKind parse_attack(std::string_view s);
std::string_view to_string(AttackKind k);
MaskMode parse_mask_mode(std::string_view s);
std::string_view to_string(MaskMode m);

inline constexpr AttackKind kAllAttacks[] = {AttackKind::LFA, AttackKind::GNA, AttackKind::IPM,
                                             AttackKind::Scaling};

struct AttackPlan {
  AttackKind kind = AttackKind::None;
  double attacker_ratio = 0.4;
  int start_round = 10;
  double scale_factor = 10.0;
  double ipm_epsilon = 2.0;
  MaskMode mask_mode = MaskMode::Honest;
  // Colluders all submit the lowest-id attacker's poisoned model instead of
  // each poisoning its own. IPM always pools its gradient estimate.
  bool collude = true;

  bool active(int round) const { return kind != AttackKind::None && round >= start_round; }
  bool operator==(const AttackPlan&) const = default;
};

// First floor(ratio * n) client ids; rejects ratios outside [0, 0.5).
std::vector<int> attacker_ids(std::size_t n_clients, double ratio);

int label_flip(int label, int num_classes);

// d i.i.d. draws from Normal(mu, sigma^2), where mu and sigma are the scalar
// mean and standard deviation of the honest model's entries.
ParamVector gaussian_noise_update(const ParamVector& honest_local, std::uint64_t seed);

// w_G - epsilon * mean_j(w_j - w_G) over the colluders' honest models.
ParamVector ipm_update(std::span<const ParamVector> colluder_honest, double epsilon,
                       const ParamVector& prev_global);

// w_G + factor * (w - w_G).
ParamVector scaling_update(const ParamVector& honest_local, const ParamVector& prev_global,
                           double factor);

// Coordinated mode: every attacker adopts the lowest-indexed attacker's mask
// and re-packs its full local model onto it. `full_models[i]` is attacker i's
// dense model.
std::vector<SparseUpdate> coordinate_masks(std::span<const SparseUpdate> attacker_updates,
                                           std::span<const ParamVector> full_models,
                                           const PackPartition& partition, MaskMode mode);

}  // namespace safesparse
