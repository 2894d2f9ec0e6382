#pragma once

// Flat registry of named parameter tensors.  Networks register every tensor
// they own (including frozen bases and pruning masks) so that optimizers,
// target-network averaging, snapshots, and gradient checks all walk one
// structure.  Adapter tensors are trainable but belong to a separate
// optimizer group (they can carry their own weight decay).

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lrcl/autodiff.hpp"

namespace lrcl {

enum class ParamKind { Trainable, Adapter, Frozen };

inline const char* param_kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::Trainable: return "trainable";
    case ParamKind::Adapter: return "adapter";
    case ParamKind::Frozen: return "frozen";
  }
  return "?";
}

class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    Eigen::MatrixXd value;
    ParamKind kind;
  };

  int add(std::string name, Eigen::MatrixXd value, ParamKind kind) {
    if (find(name) >= 0) throw std::invalid_argument("registry: duplicate name " + name);
    entries_.push_back({std::move(name), std::move(value), kind});
    return static_cast<int>(entries_.size()) - 1;
  }

  int size() const { return static_cast<int>(entries_.size()); }
  Eigen::MatrixXd& value(int i) { return entries_.at(i).value; }
  const Eigen::MatrixXd& value(int i) const { return entries_.at(i).value; }
  const std::string& name(int i) const { return entries_.at(i).name; }
  ParamKind kind(int i) const { return entries_.at(i).kind; }
  bool trainable(int i) const { return kind(i) != ParamKind::Frozen; }

  int find(std::string_view name) const {
    for (int i = 0; i < size(); ++i)
      if (entries_[i].name == name) return i;
    return -1;
  }

  long scalar_count(ParamKind k) const {
    long n = 0;
    for (const Entry& e : entries_)
      if (e.kind == k) n += e.value.size();
    return n;
  }

  long trainable_scalar_count() const {
    return scalar_count(ParamKind::Trainable) + scalar_count(ParamKind::Adapter);
  }

  bool same_structure(const ParamRegistry& other) const {
    if (size() != other.size()) return false;
    for (int i = 0; i < size(); ++i) {
      const Entry& a = entries_[i];
      const Entry& b = other.entries_[i];
      if (a.name != b.name || a.kind != b.kind || a.value.rows() != b.value.rows() ||
          a.value.cols() != b.value.cols())
        return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

// One tape leaf per registry entry; index-aligned with the registry.
// Frozen entries become constants, so no gradient ever reaches them.
struct TapeLeaves {
  std::vector<Tape::NodeRef> node;
};

inline TapeLeaves bind_leaves(Tape& tape, const ParamRegistry& reg) {
  TapeLeaves leaves;
  leaves.node.reserve(reg.size());
  for (int i = 0; i < reg.size(); ++i)
    leaves.node.push_back(tape.leaf_external(&reg.value(i), reg.trainable(i)));
  return leaves;
}

inline std::vector<Eigen::MatrixXd> collect_grads(const Tape& tape,
                                                  const ParamRegistry& reg,
                                                  const TapeLeaves& leaves) {
  std::vector<Eigen::MatrixXd> grads(reg.size());
  for (int i = 0; i < reg.size(); ++i)
    if (reg.trainable(i)) grads[i] = tape.grad(leaves.node[i]);
  return grads;
}

}  // namespace lrcl
