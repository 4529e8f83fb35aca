#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmfuse/error.hpp"
#include "mmfuse/matrix.hpp"
#include "mmfuse/model_config.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

// Ordered, named parameter matrices. Gradients and Adam moments use the same
// layout as the parameters they describe.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Matrix<T> value;
    bool operator==(const Entry&) const = default;
  };

  void add(std::string name, Matrix<T> value) {
    if (find(name) != nullptr) fail(ErrorKind::invalid_argument, "duplicate parameter '" + name + "'");
    entries_.push_back({std::move(name), std::move(value)});
  }

  const Matrix<T>* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e.value;
    return nullptr;
  }
  Matrix<T>* find(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return &e.value;
    return nullptr;
  }

  const Matrix<T>& at(const std::string& name) const {
    if (const auto* m = find(name)) return *m;
    fail(ErrorKind::invalid_argument, "missing parameter '" + name + "'");
  }
  Matrix<T>& at(const std::string& name) {
    if (auto* m = find(name)) return *m;
    fail(ErrorKind::invalid_argument, "missing parameter '" + name + "'");
  }

  // Same names and shapes, all entries zero.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.entries_.push_back({e.name, Matrix<T>(e.value.rows(), e.value.cols())});
    return out;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<Entry> entries_;
};

// h_t = tanh(W_t f_t + b_t), h_v = tanh(W_v f_v + b_v), z = sigmoid(W_z [f_t; f_v] + b_z).
template <typename T>
struct GateParams {
  Matrix<T> W_t, b_t;  // [d x d_t], [d x 1]
  Matrix<T> W_v, b_v;  // [d x d_v], [d x 1]
  Matrix<T> W_z, b_z;  // [g x (d_t + d_v)], [g x 1]
};

// Per-side linear projections to d_proj, shared by queries, keys and values.
template <typename T>
struct XAttParams {
  Matrix<T> W_t, b_t;  // [d_proj x in_t], [d_proj x 1]
  Matrix<T> W_v, b_v;  // [d_proj x in_v], [d_proj x 1]
};

template <typename T>
struct LinearParams {
  Matrix<T> W, b;  // [out x in], [out x 1]
};

template <typename T>
struct HeadParams {
  Matrix<T> W_out, b_out;  // [M x h_dim], [M x 1]
};

namespace param_names {
inline const std::string gate_prefix = "gate.";
inline const std::string xatt_prefix = "xatt.";
inline const std::string selfattn_prefix = "selfattn.";
inline const std::string concat_prefix = "concat.";
inline const std::string head_prefix = "head.";
}  // namespace param_names

template <typename T>
void add_params(ParamSet<T>& set, const std::string& prefix, const GateParams<T>& p) {
  set.add(prefix + "W_t", p.W_t);
  set.add(prefix + "b_t", p.b_t);
  set.add(prefix + "W_v", p.W_v);
  set.add(prefix + "b_v", p.b_v);
  set.add(prefix + "W_z", p.W_z);
  set.add(prefix + "b_z", p.b_z);
}

template <typename T>
void add_params(ParamSet<T>& set, const std::string& prefix, const XAttParams<T>& p) {
  set.add(prefix + "W_t", p.W_t);
  set.add(prefix + "b_t", p.b_t);
  set.add(prefix + "W_v", p.W_v);
  set.add(prefix + "b_v", p.b_v);
}

template <typename T>
void add_params(ParamSet<T>& set, const std::string& prefix, const LinearParams<T>& p) {
  set.add(prefix + "W", p.W);
  set.add(prefix + "b", p.b);
}

template <typename T>
void add_params(ParamSet<T>& set, const std::string& prefix, const HeadParams<T>& p) {
  set.add(prefix + "W_out", p.W_out);
  set.add(prefix + "b_out", p.b_out);
}

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
Matrix<T> glorot_uniform(std::size_t rows, std::size_t cols, CounterRng& rng) {
  const double limit = glorot_limit(cols, rows);
  Matrix<T> m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(rng.uniform(-limit, limit));
  return m;
}

/**
 * Parameter layout of `kind`: weight shapes per the model definitions,
 * Glorot-uniform weights drawn from the init stream of `seed`, zero biases.
 * The majority baseline has no parameters.
 */
template <typename T>
ParamSet<T> init_params(ModelKind kind, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CounterRng rng(seed, Stream::init);
  ParamSet<T> set;
  auto weight = [&](std::size_t r, std::size_t c) { return glorot_uniform<T>(r, c, rng); };
  auto bias = [](std::size_t r) { return Matrix<T>(r, 1); };

  const std::size_t d = cfg.d, dp = cfg.proj_dim(), g = cfg.gate_dim();
  auto gate = [&] {
    return GateParams<T>{weight(d, cfg.d_t), bias(d), weight(d, cfg.d_v), bias(d),
                         weight(g, cfg.d_t + cfg.d_v), bias(g)};
  };
  auto projections = [&](std::size_t in_t, std::size_t in_v) {
    return XAttParams<T>{weight(dp, in_t), bias(dp), weight(dp, in_v), bias(dp)};
  };

  switch (kind) {
    case ModelKind::majority: return set;
    case ModelKind::text:
    case ModelKind::image: break;
    case ModelKind::concat:
      add_params(set, param_names::concat_prefix, LinearParams<T>{weight(cfg.d_t, cfg.d_v), bias(cfg.d_t)});
      break;
    case ModelKind::selfattn: add_params(set, param_names::selfattn_prefix, projections(cfg.d_t, cfg.d_v)); break;
    case ModelKind::mm_gate: add_params(set, param_names::gate_prefix, gate()); break;
    case ModelKind::mm_xatt: add_params(set, param_names::xatt_prefix, projections(cfg.d_t, cfg.d_v)); break;
    case ModelKind::mm_gated_xatt:
      add_params(set, param_names::gate_prefix, gate());
      add_params(set, param_names::xatt_prefix, projections(d, d));
      break;
  }
  const std::size_t h = cfg.head_input_dim(kind);
  add_params(set, param_names::head_prefix, HeadParams<T>{weight(cfg.classes, h), bias(cfg.classes)});
  return set;
}

}  // namespace mmfuse
