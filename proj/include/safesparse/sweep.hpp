#pragma once

#include <functional>
#include <string>
#include <vector>

#include "safesparse/config.hpp"
#include "safesparse/sim.hpp"

namespace safesparse {

struct SweepCell {
  std::size_t index = 0;
  ExperimentConfig config;  // seed already replaced by the cell's sub-seed
};

// Cartesian product in axis order beta, gamma, attacker_ratio, topk_ratio,
// attack, aggregator; the last axis varies fastest. A one-cell grid keeps the
// base seed.
std::vector<SweepCell> expand_grid(const ExperimentConfig& base, const SweepGrid& grid);

struct SweepCellResult {
  SweepCell cell;
  ExperimentResult result;
};

using CellCallback = std::function<void(const SweepCellResult&)>;

// Runs every cell on up to `jobs` threads. Results come back in cell order;
// `on_cell` is invoked from worker threads.
std::vector<SweepCellResult> run_sweep(const ExperimentConfig& base, const SweepGrid& grid,
                                       std::size_t jobs, const CellCallback& on_cell = {});

// Long format: one row per (cell, metric).
std::string sweep_csv(const std::vector<SweepCellResult>& cells);

}  // namespace safesparse
