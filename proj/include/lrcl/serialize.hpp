#pragma once

// Flat text tensor snapshots.
//
// Format (line-oriented, LF, locale-independent):
//   lrcl-tensors 1
//   <count>
//   then per tensor:
//   <name> <kind> <rows> <cols>
//   one line per row, entries space-separated, printed with %.17g so that
//   parse(print(x)) == x bit-exactly for finite doubles.
//
// Round-trips the full registry including frozen bases and masks.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "lrcl/registry.hpp"

namespace lrcl {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string snapshot_registry(const ParamRegistry& reg) {
  std::string out;
  out += "lrcl-tensors 1\n";
  out += std::to_string(reg.size()) + "\n";
  for (int i = 0; i < reg.size(); ++i) {
    const Eigen::MatrixXd& m = reg.value(i);
    out += reg.name(i);
    out += ' ';
    out += param_kind_name(reg.kind(i));
    out += ' ';
    out += std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c) out += ' ';
        out += format_double(m(r, c));
      }
      out += '\n';
    }
  }
  return out;
}

inline ParamKind parse_param_kind(const std::string& s) {
  if (s == "trainable") return ParamKind::Trainable;
  if (s == "adapter") return ParamKind::Adapter;
  if (s == "frozen") return ParamKind::Frozen;
  throw std::runtime_error("snapshot: unknown tensor kind '" + s + "'");
}

inline ParamRegistry parse_snapshot(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "lrcl-tensors" || version != 1)
    throw std::runtime_error("snapshot: bad header");
  int count = 0;
  in >> count;
  if (count < 0) throw std::runtime_error("snapshot: negative tensor count");
  ParamRegistry reg;
  for (int i = 0; i < count; ++i) {
    std::string name, kind;
    Eigen::Index rows = 0, cols = 0;
    in >> name >> kind >> rows >> cols;
    if (!in || rows < 0 || cols < 0) throw std::runtime_error("snapshot: bad tensor header");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        if (!(in >> m(r, c))) throw std::runtime_error("snapshot: truncated tensor data");
    reg.add(name, std::move(m), parse_param_kind(kind));
  }
  return reg;
}

inline ParamRegistry parse_snapshot(const std::string& text) {
  std::istringstream in(text);
  return parse_snapshot(in);
}

inline void save_snapshot(const ParamRegistry& reg, const std::string& path) {
  std::ofstream f(path, std::ios::binary);  // binary: keep LF endings everywhere
  if (!f) throw std::runtime_error("snapshot: cannot open " + path);
  f << snapshot_registry(reg);
  if (!f) throw std::runtime_error("snapshot: write failed for " + path);
}

inline ParamRegistry load_snapshot(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("snapshot: cannot open " + path);
  return parse_snapshot(f);
}

}  // namespace lrcl
