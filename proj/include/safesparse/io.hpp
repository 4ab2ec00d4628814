#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "safesparse/params.hpp"
#include "safesparse/sim.hpp"

namespace safesparse {

// 17 significant digits.
std::string format_number(double v);

// Writes to a sibling temporary then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string round_record_json(const RoundRecord& rec);
std::string rounds_jsonl(const std::vector<RoundRecord>& records);

std::string summary_csv(const Summary& s);

// Square matrix with a header row of client ids.
std::string matrix_csv(const Matrix<double>& m);

}  // namespace safesparse
