#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "safesparse/sim.hpp"

namespace safesparse {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Axes of a Cartesian sweep; empty axes are not swept.
struct SweepGrid {
  std::vector<double> beta;
  std::vector<double> gamma;
  std::vector<double> attacker_ratio;
  std::vector<double> topk_ratio;
  std::vector<AttackKind> attack;
  std::vector<AggregatorKind> aggregator;

  bool empty() const {
    return beta.empty() && gamma.empty() && attacker_ratio.empty() && topk_ratio.empty() &&
           attack.empty() && aggregator.empty();
  }
  bool operator==(const SweepGrid&) const = default;
};

struct ConfigFile {
  ExperimentConfig experiment;
  std::optional<SweepGrid> sweep;
  int export_round = 0;      // 0: the attack start round
  std::size_t bound_trials = 1000;
};

// JSON text with nested sections; absent fields keep their defaults.
ConfigFile parse_config_text(const std::string& text);
ConfigFile parse_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_text(const std::string& text);

std::string serialize_config(const ConfigFile& cfg);
std::string serialize_experiment(const ExperimentConfig& cfg);

}  // namespace safesparse
