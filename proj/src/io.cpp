#include "safesparse/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace safesparse {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string json_number(double v) { return std::isfinite(v) ? format_number(v) : "null"; }

std::string json_opt(const std::optional<double>& v) { return v ? json_number(*v) : "null"; }

std::string json_ids(const std::vector<int>& ids) {
  std::string s = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(ids[i]);
  }
  return s + "]";
}

std::string json_doubles(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += json_number(v[i]);
  }
  return s + "]";
}

const char* json_bool(bool b) { return b ? "true" : "false"; }

std::string csv_opt(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace

std::string round_record_json(const RoundRecord& r) {
  std::ostringstream o;
  o << "{\"round\":" << r.round << ",\"attack_active\":" << json_bool(r.attack_active)
    << ",\"loss\":" << json_number(r.eval.loss) << ",\"accuracy\":" << json_opt(r.eval.accuracy)
    << ",\"dist_to_opt\":" << json_opt(r.eval.dist_to_opt)
    << ",\"retained\":" << json_ids(r.retained)
    << ",\"excluded_jaccard\":" << json_ids(r.excluded_jaccard)
    << ",\"excluded_cluster\":" << json_ids(r.excluded_cluster)
    << ",\"precision\":" << json_opt(r.precision) << ",\"recall\":" << json_opt(r.recall)
    << ",\"fp\":" << json_doubles(r.fp) << ",\"fp_peak\":" << json_number(r.fp_peak)
    << ",\"fp_attacker_packs\":" << json_opt(r.fp_attacker_packs)
    << ",\"rho\":" << json_number(r.rho) << ",\"bytes_uplink\":" << r.bytes_uplink
    << ",\"degenerate\":" << json_bool(r.degenerate)
    << ",\"trim_fell_back\":" << json_bool(r.trim_fell_back)
    << ",\"rfa_converged\":" << json_bool(r.rfa_converged) << "}";
  return o.str();
}

std::string rounds_jsonl(const std::vector<RoundRecord>& records) {
  std::string s;
  for (const auto& r : records) s += round_record_json(r) + "\n";
  return s;
}

std::string summary_csv(const Summary& s) {
  std::ostringstream o;
  o << "rounds,final_loss,final_accuracy,final_dist_to_opt,mean_precision,mean_recall,peak_fp,"
       "mean_fp_attacker_packs,mean_rho,total_bytes,degenerate_rounds\n";
  o << s.rounds << ',' << format_number(s.final_eval.loss) << ','
    << csv_opt(s.final_eval.accuracy) << ',' << csv_opt(s.final_eval.dist_to_opt) << ','
    << csv_opt(s.mean_precision) << ',' << csv_opt(s.mean_recall) << ','
    << format_number(s.peak_fp) << ',' << csv_opt(s.mean_fp_attacker_packs) << ','
    << format_number(s.mean_rho) << ',' << s.total_bytes << ',' << s.degenerate_rounds << '\n';
  return o.str();
}

std::string matrix_csv(const Matrix<double>& m) {
  std::ostringstream o;
  o << "client";
  for (Eigen::Index j = 0; j < m.cols(); ++j) o << ',' << j;
  o << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    o << i;
    for (Eigen::Index j = 0; j < m.cols(); ++j) o << ',' << format_number(m(i, j));
    o << '\n';
  }
  return o.str();
}

}  // namespace safesparse
