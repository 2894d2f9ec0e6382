#pragma once

// Critic networks assembled from registry-backed linear maps.
//
// Three architectures share one toolkit:
//   ToyCritic    bias-free 2-hidden-layer ReLU MLP (scalar or categorical head)
//   SimbaCritic  unit-norm residual network: shift-augmented normalized input,
//                scaled embedding, L bottleneck blocks with learned LERP, all
//                representations L2-normalized
//   BroCritic    residual MLP with layer normalization
//
// Each trainable/frozen tensor lives in the critic's ParamRegistry; MapSlot
// describes how a linear map pulls its tensors out of the registry.  The
// low-rank wrap replaces a designated map's weight with a frozen base plus
// trainable factors without disturbing any other entry, so a wrapped critic
// built from the same seed matches its dense twin exactly at init (zero-B).

#include <Eigen/Dense>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrcl/autodiff.hpp"
#include "lrcl/categorical.hpp"
#include "lrcl/hypersphere.hpp"
#include "lrcl/linear_maps.hpp"
#include "lrcl/registry.hpp"
#include "lrcl/rng.hpp"

namespace lrcl {

// ---------------------------------------------------------------------------
// Registry-backed linear map

struct MapSlot {
  enum class Kind { Dense, Lora, Pruned };
  Kind kind = Kind::Dense;
  int w = -1;                   // dense / pruned weight
  int mask = -1;                // pruned
  int w0 = -1, a = -1, b = -1;  // low-rank pieces
  int rank = 0;
  double alpha = 0.0;
  double sparsity = 0.0;  // pruned only

  double delta_scale() const { return alpha / static_cast<double>(rank); }

  int rows(const ParamRegistry& reg) const {
    return static_cast<int>(reg.value(kind == Kind::Lora ? w0 : w).rows());
  }
  int cols(const ParamRegistry& reg) const {
    return static_cast<int>(reg.value(kind == Kind::Lora ? w0 : w).cols());
  }

  Eigen::MatrixXd effective(const ParamRegistry& reg) const {
    switch (kind) {
      case Kind::Dense: return reg.value(w);
      case Kind::Pruned: return reg.value(w).cwiseProduct(reg.value(mask));
      case Kind::Lora:
        return reg.value(w0) + delta_scale() * (reg.value(b) * reg.value(a));
    }
    throw std::logic_error("map slot: bad kind");
  }

  Eigen::MatrixXd apply(const ParamRegistry& reg, const Eigen::MatrixXd& x) const {
    switch (kind) {
      case Kind::Dense: return reg.value(w) * x;
      case Kind::Pruned: return reg.value(w).cwiseProduct(reg.value(mask)) * x;
      case Kind::Lora:
        return reg.value(w0) * x + delta_scale() * (reg.value(b) * (reg.value(a) * x));
    }
    throw std::logic_error("map slot: bad kind");
  }

  Tape::NodeRef apply(Tape& t, const ParamRegistry& reg, const TapeLeaves& leaves,
                      Tape::NodeRef x) const {
    switch (kind) {
      case Kind::Dense:
        return t.matmul(leaves.node[w], x);
      case Kind::Pruned:
        return t.matmul(t.hadamard_external(leaves.node[w], &reg.value(mask)), x);
      case Kind::Lora: {
        Tape::NodeRef base = t.matmul(leaves.node[w0], x);
        Tape::NodeRef delta =
            t.scale(t.matmul(leaves.node[b], t.matmul(leaves.node[a], x)), delta_scale());
        return t.add(base, delta);
      }
    }
    throw std::logic_error("map slot: bad kind");
  }
};

// How a designated map acquires its low-rank parameterization.
struct LoraWrapSpec {
  int rank = 1;
  double alpha = 0.0;  // <= 0 means alpha = rank (unit delta scale)
  LoRAInitSpec init;
  double kappa = 0.0;  // > 0: rebuild the frozen base with this row norm
  int base_rank = 0;   // 0: full rank (only used when kappa > 0)
  bool zero_base = false;

  double resolved_alpha() const { return alpha > 0.0 ? alpha : static_cast<double>(rank); }
};

enum class ProjectionMode { None, RowNormalize, ProjectLora };

inline ProjectionMode parse_projection_mode(std::string_view s) {
  if (s == "none") return ProjectionMode::None;
  if (s == "row_normalize") return ProjectionMode::RowNormalize;
  if (s == "project_lora") return ProjectionMode::ProjectLora;
  throw std::invalid_argument("unknown projection mode '" + std::string(s) + "'");
}

inline const char* projection_mode_name(ProjectionMode m) {
  switch (m) {
    case ProjectionMode::None: return "none";
    case ProjectionMode::RowNormalize: return "row_normalize";
    case ProjectionMode::ProjectLora: return "project_lora";
  }
  return "?";
}

namespace detail {

// Re-registers every entry except the wrapped map's weight, which is split
// into (frozen base, adapter factors).  Keeps registry order canonical so
// twin networks stay structurally comparable.
struct WrapPlan {
  std::string name;  // map entry to wrap, e.g. "layer0"
  MapSlot* slot;
};

inline void wrap_dense_slot(ParamRegistry& reg, MapSlot& slot, const std::string& name,
                            const LoraWrapSpec& spec, Rng& rng) {
  if (slot.kind != MapSlot::Kind::Dense)
    throw std::invalid_argument("lora wrap: map '" + name + "' is not dense");
  const int d_out = slot.rows(reg);
  const int d_in = slot.cols(reg);
  if (spec.rank < 1 || spec.rank > std::max(d_out, d_in))
    throw std::invalid_argument("lora wrap: rank out of range for '" + name + "'");

  Eigen::MatrixXd base;
  if (spec.zero_base) {
    base = Eigen::MatrixXd::Zero(d_out, d_in);
  } else if (spec.kappa > 0.0) {
    const int k = spec.base_rank > 0 ? spec.base_rank : std::min(d_out, d_in);
    base = build_frozen_base(d_out, d_in, k, spec.kappa, rng);
  } else {
    base = reg.value(slot.w);  // inherit the dense initialization, now frozen
  }
  auto [a, b] = init_lora_factors(d_out, d_in, spec.rank, spec.init, rng);

  slot.kind = MapSlot::Kind::Lora;
  slot.rank = spec.rank;
  slot.alpha = spec.resolved_alpha();
  reg.value(slot.w).resize(0, 0);  // orphan the old dense entry; see rebuild below
  slot.w0 = reg.add(name + ".w0", std::move(base), ParamKind::Frozen);
  slot.a = reg.add(name + ".a", std::move(a), ParamKind::Adapter);
  slot.b = reg.add(name + ".b", std::move(b), ParamKind::Adapter);
}

}  // namespace detail

// Removes zero-sized orphaned entries left behind by wrapping, remapping the
// slot indices that survive.  Keeping this out-of-line of the registry keeps
// the registry dumb.
inline void compact_registry(ParamRegistry& reg, std::vector<MapSlot*> slots,
                             std::vector<int*> extra_indices) {
  ParamRegistry fresh;
  std::vector<int> remap(reg.size(), -1);
  for (int i = 0; i < reg.size(); ++i) {
    if (reg.value(i).size() == 0) continue;
    remap[i] = fresh.add(reg.name(i), std::move(reg.value(i)), reg.kind(i));
  }
  auto fix = [&](int& idx) {
    if (idx >= 0) idx = remap[idx];
  };
  for (MapSlot* s : slots) {
    fix(s->w);
    fix(s->mask);
    fix(s->w0);
    fix(s->a);
    fix(s->b);
  }
  for (int* p : extra_indices) fix(*p);
  reg = std::move(fresh);
}

// ---------------------------------------------------------------------------
// Toy critic: Q(s,a) = w_out^T ReLU(W1 ReLU(W0 phi)), no biases.

class ToyCritic {
 public:
  static ToyCritic build_dense(int feature_dim, int hidden, Rng& rng,
                               bool categorical = false, ValueSupport support = {}) {
    ToyCritic c;
    c.feature_dim_ = feature_dim;
    c.hidden_ = hidden;
    c.categorical_ = categorical;
    c.support_ = support;
    const int head_rows = categorical ? support.num_atoms : 1;
    c.layer0_.w = c.reg_.add(
        "layer0.w", rng.normal_matrix(hidden, feature_dim, 1.0 / std::sqrt(feature_dim)),
        ParamKind::Trainable);
    c.layer1_.w = c.reg_.add(
        "layer1.w", rng.normal_matrix(hidden, hidden, 1.0 / std::sqrt(hidden)),
        ParamKind::Trainable);
    c.head_ = c.reg_.add(
        "w_out", rng.normal_matrix(head_rows, hidden, 1.0 / std::sqrt(hidden)),
        ParamKind::Trainable);
    return c;
  }

  // Replace both hidden maps with frozen-base + low-rank factors.  The output
  // head stays plainly trainable.  Draw order per map: base (if rebuilt),
  // then A, then B.
  void lora_wrap(const LoraWrapSpec& spec, Rng& rng) {
    detail::wrap_dense_slot(reg_, layer0_, "layer0", spec, rng);
    detail::wrap_dense_slot(reg_, layer1_, "layer1", spec, rng);
    compact_registry(reg_, {&layer0_, &layer1_}, {&head_});
  }

  // Fixed random mask on both hidden maps; masked weights start at exactly 0
  // so they stay 0 under any multiplicative-free update rule.
  void prune_wrap(double sparsity, Rng& rng) {
    const std::pair<MapSlot*, const char*> targets[] = {{&layer0_, "layer0"},
                                                        {&layer1_, "layer1"}};
    for (auto [slot, name] : targets) {
      if (slot->kind != MapSlot::Kind::Dense)
        throw std::invalid_argument("prune wrap: map is not dense");
      Eigen::MatrixXd mask =
          build_prune_mask(slot->rows(reg_), slot->cols(reg_), sparsity, rng);
      reg_.value(slot->w) = reg_.value(slot->w).cwiseProduct(mask);
      slot->mask = reg_.add(std::string(name) + ".mask", std::move(mask), ParamKind::Frozen);
      slot->kind = MapSlot::Kind::Pruned;
      slot->sparsity = sparsity;
    }
  }

  // x: feature_dim x C. Returns head_rows x C (scalar head: 1 x C of Q values).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd h0 = layer0_.apply(reg_, x).cwiseMax(0.0);
    const Eigen::MatrixXd h1 = layer1_.apply(reg_, h0).cwiseMax(0.0);
    Eigen::MatrixXd out = reg_.value(head_) * h1;
    if (!out.allFinite()) throw std::runtime_error("toy critic: non-finite activation");
    return out;
  }

  Tape::NodeRef forward(Tape& t, const TapeLeaves& leaves, Tape::NodeRef x) const {
    Tape::NodeRef h0 = t.relu(layer0_.apply(t, reg_, leaves, x));
    Tape::NodeRef h1 = t.relu(layer1_.apply(t, reg_, leaves, h0));
    return t.matmul(leaves.node[head_], h1);
  }

  Tape::NodeRef forward(Tape& t, const TapeLeaves& leaves, const Eigen::MatrixXd& x) const {
    return forward(t, leaves, t.constant(x));
  }

  // Scalar Q values per column regardless of head type.
  Eigen::VectorXd q_values(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd out = forward(x);
    if (!categorical_) return out.row(0).transpose();
    return expectation_columns(softmax_columns(out), support_);
  }

  std::vector<MapSlot*> hook_maps() { return {&layer0_, &layer1_}; }
  std::vector<const MapSlot*> hook_maps() const { return {&layer0_, &layer1_}; }

  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }
  bool is_categorical() const { return categorical_; }
  const ValueSupport& support() const { return support_; }
  int feature_dim() const { return feature_dim_; }
  int hidden() const { return hidden_; }

 private:
  ParamRegistry reg_;
  MapSlot layer0_, layer1_;
  int head_ = -1;
  int feature_dim_ = 0, hidden_ = 0;
  bool categorical_ = false;
  ValueSupport support_;
};

// ---------------------------------------------------------------------------
// Post-update hooks shared by all critics.

template <class Critic>
void post_update_hook(Critic& critic, ProjectionMode mode,
                      const ProjectionConfig& cfg = {}) {
  if (mode == ProjectionMode::None || !cfg.enabled) return;
  ParamRegistry& reg = critic.registry();
  auto maps = critic.hook_maps();
  if (maps.empty())
    throw std::invalid_argument("post-update hook: critic has no normalized maps");
  if (mode == ProjectionMode::ProjectLora) {
    bool any_lora = false;
    for (const MapSlot* m : maps) any_lora |= m->kind == MapSlot::Kind::Lora;
    if (!any_lora)
      throw std::invalid_argument("post-update hook: project_lora requires low-rank maps");
  }
  for (MapSlot* m : maps) {
    switch (m->kind) {
      case MapSlot::Kind::Dense:
        // Plain maps go straight onto the sphere under either mode.
        row_normalize_inplace(reg.value(m->w));
        break;
      case MapSlot::Kind::Lora:
        if (mode == ProjectionMode::RowNormalize)
          throw std::invalid_argument(
              "post-update hook: row_normalize would rescale a frozen base; "
              "use project_lora for low-rank maps");
        project_lora_rows(reg.value(m->w0), reg.value(m->a), reg.value(m->b),
                          m->delta_scale(), cfg);
        break;
      case MapSlot::Kind::Pruned:
        throw std::invalid_argument("post-update hook: pruned maps are never normalized");
    }
  }
}

// ---------------------------------------------------------------------------
// SimbaV2-style critic.

struct SimbaConfig {
  int d_in = 17;
  int d_h = 64;
  int blocks = 2;
  int head_rows = 51;  // categorical logits; 1 for a scalar head
  double c_shift = 1.0;
  double beta_init = 0.5;
};

class SimbaCritic {
 public:
  static SimbaCritic build(const SimbaConfig& cfg, Rng& rng) {
    if (cfg.d_in < 1 || cfg.d_h < 1 || cfg.blocks < 1 || cfg.head_rows < 1)
      throw std::invalid_argument("simba: bad dimensions");
    SimbaCritic c;
    c.cfg_ = cfg;
    const int aug = cfg.d_in + 1;
    c.embed_.w = c.reg_.add(
        "embed.w",
        row_normalize(rng.normal_matrix(cfg.d_h, aug, 1.0 / std::sqrt(aug))),
        ParamKind::Trainable);
    c.embed_scale_ = c.reg_.add("embed.scale", Eigen::MatrixXd::Ones(cfg.d_h, 1),
                                ParamKind::Trainable);
    c.blocks_.resize(cfg.blocks);
    for (int l = 0; l < cfg.blocks; ++l) {
      const std::string p = "block" + std::to_string(l);
      Block& blk = c.blocks_[l];
      blk.w1.w = c.reg_.add(
          p + ".w1",
          row_normalize(rng.normal_matrix(4 * cfg.d_h, cfg.d_h, 1.0 / std::sqrt(cfg.d_h))),
          ParamKind::Trainable);
      blk.scale = c.reg_.add(p + ".scale", Eigen::MatrixXd::Ones(4 * cfg.d_h, 1),
                             ParamKind::Trainable);
      blk.w2.w = c.reg_.add(
          p + ".w2",
          row_normalize(
              rng.normal_matrix(cfg.d_h, 4 * cfg.d_h, 1.0 / std::sqrt(4.0 * cfg.d_h))),
          ParamKind::Trainable);
      blk.beta = c.reg_.add(
          p + ".beta", Eigen::MatrixXd::Constant(cfg.d_h, 1, cfg.beta_init),
          ParamKind::Trainable);
    }
    c.head_.w = c.reg_.add(
        "head.w",
        row_normalize(rng.normal_matrix(cfg.head_rows, cfg.d_h, 1.0 / std::sqrt(cfg.d_h))),
        ParamKind::Trainable);
    return c;
  }

  // Wraps the residual-block maps only; embedding, head, scale and LERP
  // vectors stay plainly trainable.
  void lora_wrap(const LoraWrapSpec& spec, Rng& rng) {
    std::vector<MapSlot*> slots;
    for (int l = 0; l < cfg_.blocks; ++l) {
      const std::string p = "block" + std::to_string(l);
      detail::wrap_dense_slot(reg_, blocks_[l].w1, p + ".w1", spec, rng);
      detail::wrap_dense_slot(reg_, blocks_[l].w2, p + ".w2", spec, rng);
    }
    for (Block& b : blocks_) {
      slots.push_back(&b.w1);
      slots.push_back(&b.w2);
    }
    slots.push_back(&embed_);
    slots.push_back(&head_);
    std::vector<int*> extra;
    extra.push_back(&embed_scale_);
    for (Block& b : blocks_) {
      extra.push_back(&b.scale);
      extra.push_back(&b.beta);
    }
    compact_registry(reg_, slots, extra);
  }

  // Shift-augment and normalize an input batch (columns).  Pure preprocessing.
  Eigen::MatrixXd augment(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd aug(x.rows() + 1, x.cols());
    aug.topRows(x.rows()) = x;
    aug.row(x.rows()).setConstant(cfg_.c_shift);
    for (Eigen::Index c = 0; c < aug.cols(); ++c) {
      const double n = aug.col(c).norm();
      if (!(n > 0)) throw std::runtime_error("simba: zero augmented input");
      aug.col(c) /= n;
    }
    return aug;
  }

  // Plain forward; optionally records every normalized representation
  // (h^0 .. h^L) for invariant checks.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x,
                          std::vector<Eigen::MatrixXd>* trace = nullptr) const {
    Eigen::MatrixXd h = normalize_cols(
        (embed_.apply(reg_, augment(x)).array().colwise() * reg_.value(embed_scale_).col(0).array())
            .matrix());
    if (trace) trace->push_back(h);
    for (const Block& blk : blocks_) {
      Eigen::MatrixXd u =
          (blk.w1.apply(reg_, h).array().colwise() * reg_.value(blk.scale).col(0).array())
              .cwiseMax(0.0)
              .matrix();
      Eigen::MatrixXd htilde = normalize_cols(blk.w2.apply(reg_, u));
      const Eigen::ArrayXd beta = reg_.value(blk.beta).col(0).array();
      h = normalize_cols(((h.array().colwise() * (1.0 - beta)) +
                          (htilde.array().colwise() * beta))
                             .matrix());
      if (trace) trace->push_back(h);
    }
    Eigen::MatrixXd out = head_.apply(reg_, h);
    if (!out.allFinite()) throw std::runtime_error("simba: non-finite activation");
    return out;
  }

  Tape::NodeRef forward(Tape& t, const TapeLeaves& leaves, const Eigen::MatrixXd& x) const {
    Tape::NodeRef h = t.l2_normalize_cols(
        t.cwise_scale_cols(leaves.node[embed_scale_],
                           embed_.apply(t, reg_, leaves, t.constant(augment(x)))));
    for (const Block& blk : blocks_) {
      Tape::NodeRef u =
          t.relu(t.cwise_scale_cols(leaves.node[blk.scale], blk.w1.apply(t, reg_, leaves, h)));
      Tape::NodeRef htilde = t.l2_normalize_cols(blk.w2.apply(t, reg_, leaves, u));
      h = t.l2_normalize_cols(t.lerp_cols(h, htilde, leaves.node[blk.beta]));
    }
    return head_.apply(t, reg_, leaves, h);
  }

  std::vector<MapSlot*> hook_maps() {
    std::vector<MapSlot*> maps{&embed_};
    for (Block& b : blocks_) {
      maps.push_back(&b.w1);
      maps.push_back(&b.w2);
    }
    maps.push_back(&head_);
    return maps;
  }

  std::vector<MapSlot*> wrapped_maps() {
    std::vector<MapSlot*> maps;
    for (Block& b : blocks_) {
      maps.push_back(&b.w1);
      maps.push_back(&b.w2);
    }
    return maps;
  }

  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }
  const SimbaConfig& config() const { return cfg_; }

 private:
  struct Block {
    MapSlot w1, w2;
    int scale = -1, beta = -1;
  };

  static Eigen::MatrixXd normalize_cols(Eigen::MatrixXd m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double n = m.col(c).norm();
      if (!(n > 1e-150)) throw std::runtime_error("simba: zero representation");
      m.col(c) /= n;
    }
    return m;
  }

  SimbaConfig cfg_;
  ParamRegistry reg_;
  MapSlot embed_, head_;
  int embed_scale_ = -1;
  std::vector<Block> blocks_;
};

// ---------------------------------------------------------------------------
// BroNet-style critic: h <- h + LN(W2 ReLU(LN(W1 h))).

struct BroConfig {
  int d_in = 17;
  int d_h = 64;
  int blocks = 2;
  int head_rows = 51;
  double ln_eps = 1e-5;
};

class BroCritic {
 public:
  static BroCritic build(const BroConfig& cfg, Rng& rng) {
    if (cfg.d_in < 1 || cfg.d_h < 2 || cfg.blocks < 1 || cfg.head_rows < 1)
      throw std::invalid_argument("bronet: bad dimensions");
    BroCritic c;
    c.cfg_ = cfg;
    c.in_.w = c.reg_.add("in.w",
                         rng.normal_matrix(cfg.d_h, cfg.d_in, 1.0 / std::sqrt(cfg.d_in)),
                         ParamKind::Trainable);
    c.ln_in_ = c.add_ln("ln_in");
    c.blocks_.resize(cfg.blocks);
    for (int l = 0; l < cfg.blocks; ++l) {
      const std::string p = "block" + std::to_string(l);
      Block& blk = c.blocks_[l];
      blk.w1.w = c.reg_.add(p + ".w1",
                            rng.normal_matrix(cfg.d_h, cfg.d_h, 1.0 / std::sqrt(cfg.d_h)),
                            ParamKind::Trainable);
      blk.ln1 = c.add_ln(p + ".ln1");
      blk.w2.w = c.reg_.add(p + ".w2",
                            rng.normal_matrix(cfg.d_h, cfg.d_h, 1.0 / std::sqrt(cfg.d_h)),
                            ParamKind::Trainable);
      blk.ln2 = c.add_ln(p + ".ln2");
    }
    c.head_.w = c.reg_.add(
        "head.w", rng.normal_matrix(cfg.head_rows, cfg.d_h, 1.0 / std::sqrt(cfg.d_h)),
        ParamKind::Trainable);
    return c;
  }

  void lora_wrap(const LoraWrapSpec& spec, Rng& rng) {
    for (int l = 0; l < cfg_.blocks; ++l) {
      const std::string p = "block" + std::to_string(l);
      detail::wrap_dense_slot(reg_, blocks_[l].w1, p + ".w1", spec, rng);
      detail::wrap_dense_slot(reg_, blocks_[l].w2, p + ".w2", spec, rng);
    }
    std::vector<MapSlot*> slots{&in_, &head_};
    std::vector<int*> extra{&ln_in_.gamma, &ln_in_.beta};
    for (Block& b : blocks_) {
      slots.push_back(&b.w1);
      slots.push_back(&b.w2);
      extra.insert(extra.end(), {&b.ln1.gamma, &b.ln1.beta, &b.ln2.gamma, &b.ln2.beta});
    }
    compact_registry(reg_, slots, extra);
  }

  // Plain forward; optionally records every layer-norm output (pre-ReLU /
  // pre-residual) so callers can report normalization statistics.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x,
                          std::vector<Eigen::MatrixXd>* ln_trace = nullptr) const {
    Eigen::MatrixXd n0 = layer_norm(in_.apply(reg_, x), ln_in_);
    if (ln_trace) ln_trace->push_back(n0);
    Eigen::MatrixXd h = n0.cwiseMax(0.0);
    for (const Block& blk : blocks_) {
      const Eigen::MatrixXd n1 = layer_norm(blk.w1.apply(reg_, h), blk.ln1);
      if (ln_trace) ln_trace->push_back(n1);
      const Eigen::MatrixXd u = n1.cwiseMax(0.0);
      const Eigen::MatrixXd n2 = layer_norm(blk.w2.apply(reg_, u), blk.ln2);
      if (ln_trace) ln_trace->push_back(n2);
      h += n2;
    }
    Eigen::MatrixXd out = head_.apply(reg_, h);
    if (!out.allFinite()) throw std::runtime_error("bronet: non-finite activation");
    return out;
  }

  Tape::NodeRef forward(Tape& t, const TapeLeaves& leaves, const Eigen::MatrixXd& x) const {
    auto ln = [&](Tape::NodeRef v, const LnSlot& slot) {
      return t.layer_norm_cols(v, leaves.node[slot.gamma], leaves.node[slot.beta],
                               cfg_.ln_eps);
    };
    Tape::NodeRef h =
        t.relu(ln(in_.apply(t, reg_, leaves, t.constant(x)), ln_in_));
    for (const Block& blk : blocks_) {
      Tape::NodeRef u = t.relu(ln(blk.w1.apply(t, reg_, leaves, h), blk.ln1));
      h = t.add(h, ln(blk.w2.apply(t, reg_, leaves, u), blk.ln2));
    }
    return head_.apply(t, reg_, leaves, h);
  }

  // BroNet-style training never normalizes weight rows, so nothing is
  // designated; hooks other than `none` are a configuration error.
  std::vector<MapSlot*> hook_maps() { return {}; }

  std::vector<MapSlot*> wrapped_maps() {
    std::vector<MapSlot*> maps;
    for (Block& b : blocks_) {
      maps.push_back(&b.w1);
      maps.push_back(&b.w2);
    }
    return maps;
  }

  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }
  const BroConfig& config() const { return cfg_; }

 private:
  struct LnSlot {
    int gamma = -1, beta = -1;
  };
  struct Block {
    MapSlot w1, w2;
    LnSlot ln1, ln2;
  };

  LnSlot add_ln(const std::string& name) {
    LnSlot s;
    s.gamma = reg_.add(name + ".gamma", Eigen::MatrixXd::Ones(cfg_.d_h, 1),
                       ParamKind::Trainable);
    s.beta = reg_.add(name + ".beta", Eigen::MatrixXd::Zero(cfg_.d_h, 1),
                      ParamKind::Trainable);
    return s;
  }

  Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const LnSlot& slot) const {
    Eigen::MatrixXd out(x.rows(), x.cols());
    const Eigen::ArrayXd gamma = reg_.value(slot.gamma).col(0).array();
    const Eigen::ArrayXd beta = reg_.value(slot.beta).col(0).array();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double mu = x.col(c).mean();
      const double var = (x.col(c).array() - mu).square().mean();
      out.col(c) =
          (gamma * (x.col(c).array() - mu) / std::sqrt(var + cfg_.ln_eps) + beta)
              .matrix();
    }
    return out;
  }

  BroConfig cfg_;
  ParamRegistry reg_;
  MapSlot in_, head_;
  LnSlot ln_in_;
  std::vector<Block> blocks_;
};

}  // namespace lrcl
