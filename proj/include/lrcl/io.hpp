#pragma once

// CSV emission and small filesystem helpers.  All floating-point output goes
// through %.17g so emitted values round-trip exactly and reruns are
// byte-comparable; rows are LF-terminated regardless of platform.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lrcl/errors.hpp"
#include "lrcl/regimes.hpp"

namespace lrcl {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trace_csv(const MetricTrace& trace, std::uint64_t seed) {
  std::string out = "step,seed,eps_q,eps_b\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    out += std::to_string(trace.steps[i]);
    out += ',';
    out += std::to_string(seed);
    out += ',';
    out += format_g17(trace.eps_q[i]);
    out += ',';
    out += format_g17(trace.eps_b[i]);
    out += '\n';
  }
  return out;
}

inline std::string runs_csv(const std::vector<RunStat>& runs) {
  std::string out = "regime,dense,rank,seed,final_eps_q,final_eps_b,tail_eps_b,seconds\n";
  for (const RunStat& run : runs) {
    out += run.regime + ',';
    out += run.dense ? "true," : "false,";
    out += std::to_string(run.rank) + ',' + std::to_string(run.seed) + ',';
    out += format_g17(run.final_eps_q) + ',';
    out += format_g17(run.final_eps_b) + ',';
    out += format_g17(run.tail_eps_b) + ',';
    out += format_g17(run.seconds) + '\n';
  }
  return out;
}

inline std::string summary_csv(const std::vector<AggregateStat>& rows) {
  std::string out =
      "regime,dense,rank,runs,mean_final_eps_q,std_final_eps_q,"
      "mean_tail_eps_b,std_tail_eps_b\n";
  for (const AggregateStat& row : rows) {
    out += row.regime + ',';
    out += row.dense ? "true," : "false,";
    out += std::to_string(row.rank) + ',' + std::to_string(row.n) + ',';
    out += format_g17(row.mean_final_eps_q) + ',';
    out += format_g17(row.std_final_eps_q) + ',';
    out += format_g17(row.mean_tail_eps_b) + ',';
    out += format_g17(row.std_tail_eps_b) + '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw UsageError("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

}  // namespace lrcl
