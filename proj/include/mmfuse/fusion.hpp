#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "mmfuse/error.hpp"
#include "mmfuse/matrix.hpp"
#include "mmfuse/params.hpp"
#include "mmfuse/rng.hpp"
#include "mmfuse/tape.hpp"

namespace mmfuse {

// Parameter leaves bound on a tape.
template <typename T>
struct GateNodes {
  Var<T> W_t, b_t, W_v, b_v, W_z, b_z;
};
template <typename T>
struct XAttNodes {
  Var<T> W_t, b_t, W_v, b_v;
};
template <typename T>
struct LinearNodes {
  Var<T> W, b;
};
template <typename T>
struct HeadNodes {
  Var<T> W_out, b_out;
};

template <typename T>
GateNodes<T> bind(Tape<T>& t, const GateParams<T>& p) {
  return {t.parameter(p.W_t), t.parameter(p.b_t), t.parameter(p.W_v),
          t.parameter(p.b_v), t.parameter(p.W_z), t.parameter(p.b_z)};
}
template <typename T>
XAttNodes<T> bind(Tape<T>& t, const XAttParams<T>& p) {
  return {t.parameter(p.W_t), t.parameter(p.b_t), t.parameter(p.W_v), t.parameter(p.b_v)};
}
template <typename T>
LinearNodes<T> bind(Tape<T>& t, const LinearParams<T>& p) {
  return {t.parameter(p.W), t.parameter(p.b)};
}
template <typename T>
HeadNodes<T> bind(Tape<T>& t, const HeadParams<T>& p) {
  return {t.parameter(p.W_out), t.parameter(p.b_out)};
}

// Fused representation on the tape plus the diagnostics each model exposes.
template <typename T>
struct FusionGraph {
  Var<T> h;                            // [1 x h_dim]
  std::optional<Var<T>> z;             // [1 x g]
  std::optional<Var<T>> h_t, h_v;      // per-modality hidden (pooled or per position)
  std::optional<Var<T>> attn_t2v;      // [L_t x L_v]
  std::optional<Var<T>> attn_v2t;      // [L_v x L_t]
  std::optional<Var<T>> attn_self;     // [2 x 2]
};

namespace detail {

template <typename T>
void require_single_row(const char* op, const Var<T>& v) {
  if (v.rows() != 1) fail(ErrorKind::shape_mismatch, std::string(op) + ": expected a single row, got " + v.value().shape());
}

template <typename T>
void require_width(const char* op, const char* what, const Var<T>& v, std::size_t width) {
  if (v.cols() != width) {
    fail(ErrorKind::shape_mismatch, std::string(op) + ": " + what + " has shape " + v.value().shape() +
                                        ", expected width " + std::to_string(width));
  }
}

template <typename T>
Var<T> pool(Var<T> x) {
  return x.rows() == 1 ? x : mean_rows(x);
}

template <typename T>
Var<T> gate_activation(Var<T> f_t, Var<T> f_v, const GateNodes<T>& p) {
  return sigmoid_map(affine(concat_cols(f_t, f_v), p.W_z, p.b_z));
}

// Two cross-attention directions over projected sequences, mean-pooled and summed.
template <typename T>
void cross_attend(Var<T> x_t, Var<T> x_v, const XAttNodes<T>& p, FusionGraph<T>& out) {
  Var<T> p_t = affine(x_t, p.W_t, p.b_t);
  Var<T> p_v = affine(x_v, p.W_v, p.b_v);
  Attention<T> t2v = scaled_dot_attention(p_t, p_v, p_v);
  Attention<T> v2t = scaled_dot_attention(p_v, p_t, p_t);
  out.h = add(mean_rows(t2v.out), mean_rows(v2t.out));
  out.attn_t2v = t2v.weights;
  out.attn_v2t = v2t.weights;
}

}  // namespace detail

// h = z*h_t + (1-z)*h_v over single-row inputs.
template <typename T>
FusionGraph<T> gate_fuse(Var<T> f_t, Var<T> f_v, const GateNodes<T>& p) {
  detail::require_single_row("gate_fuse", f_t);
  detail::require_single_row("gate_fuse", f_v);
  detail::require_width("gate_fuse", "text input", f_t, p.W_t.cols());
  detail::require_width("gate_fuse", "image input", f_v, p.W_v.cols());
  FusionGraph<T> out;
  Var<T> h_t = tanh_map(affine(f_t, p.W_t, p.b_t));
  Var<T> h_v = tanh_map(affine(f_v, p.W_v, p.b_v));
  Var<T> z = detail::gate_activation(f_t, f_v, p);
  out.h = add(mul_broadcast(h_t, z), mul_broadcast(h_v, one_minus(z)));
  out.z = z;
  out.h_t = h_t;
  out.h_v = h_v;
  return out;
}

// Text-queries-image plus image-queries-text attention over [L x d] inputs.
template <typename T>
FusionGraph<T> xatt_fuse(Var<T> f_t, Var<T> f_v, const XAttNodes<T>& p) {
  detail::require_width("xatt_fuse", "text input", f_t, p.W_t.cols());
  detail::require_width("xatt_fuse", "image input", f_v, p.W_v.cols());
  FusionGraph<T> out;
  detail::cross_attend(f_t, f_v, p, out);
  return out;
}

/**
 * Cross-attention over gate-weighted sequences. z comes from the row-mean
 * pooled raw features; the tanh projections apply position-wise, and the
 * attention inputs are z*h_t and (1-z)*h_v.
 */
template <typename T>
FusionGraph<T> gated_xatt_fuse(Var<T> f_t, Var<T> f_v, const GateNodes<T>& gp, const XAttNodes<T>& xp) {
  detail::require_width("gated_xatt_fuse", "text input", f_t, gp.W_t.cols());
  detail::require_width("gated_xatt_fuse", "image input", f_v, gp.W_v.cols());
  FusionGraph<T> out;
  Var<T> z = detail::gate_activation(detail::pool(f_t), detail::pool(f_v), gp);
  Var<T> h_t = tanh_map(affine(f_t, gp.W_t, gp.b_t));
  Var<T> h_v = tanh_map(affine(f_v, gp.W_v, gp.b_v));
  Var<T> g_t = mul_broadcast(h_t, z);
  Var<T> g_v = mul_broadcast(h_v, one_minus(z));
  detail::cross_attend(g_t, g_v, xp, out);
  out.z = z;
  out.h_t = h_t;
  out.h_v = h_v;
  return out;
}

// [f_t ; W f_v + b], the image side projected to the text width.
template <typename T>
FusionGraph<T> concat_fuse(Var<T> f_t, Var<T> f_v, const LinearNodes<T>& proj) {
  detail::require_single_row("concat_fuse", f_t);
  detail::require_single_row("concat_fuse", f_v);
  detail::require_width("concat_fuse", "image input", f_v, proj.W.cols());
  if (proj.W.rows() != f_t.cols()) {
    fail(ErrorKind::shape_mismatch, "concat_fuse: projection " + proj.W.value().shape() +
                                        " does not map to text width " + std::to_string(f_t.cols()));
  }
  FusionGraph<T> out;
  out.h = concat_cols(f_t, affine(f_v, proj.W, proj.b));
  return out;
}

// Self-attention over the two projected modality vectors, mean-pooled.
template <typename T>
FusionGraph<T> selfattn_fuse(Var<T> f_t, Var<T> f_v, const XAttNodes<T>& proj) {
  detail::require_single_row("selfattn_fuse", f_t);
  detail::require_single_row("selfattn_fuse", f_v);
  detail::require_width("selfattn_fuse", "text input", f_t, proj.W_t.cols());
  detail::require_width("selfattn_fuse", "image input", f_v, proj.W_v.cols());
  Var<T> seq = concat_rows(affine(f_t, proj.W_t, proj.b_t), affine(f_v, proj.W_v, proj.b_v));
  Attention<T> a = scaled_dot_attention(seq, seq, seq);
  FusionGraph<T> out;
  out.h = mean_rows(a.out);
  out.attn_self = a.weights;
  return out;
}

/**
 * Classification layer. In training mode with dropout > 0, inverted dropout
 * with keep probability 1 - dropout is applied to h, one draw per coordinate
 * from `rng`. Evaluation mode applies neither dropout nor rescaling.
 */
template <typename T>
Var<T> classify(Var<T> h, const HeadNodes<T>& head, double dropout, CounterRng* rng, bool training) {
  detail::require_single_row("classify", h);
  detail::require_width("classify", "representation", h, head.W_out.cols());
  if (training && dropout > 0.0) {
    if (rng == nullptr) fail(ErrorKind::invalid_argument, "classify: dropout in training mode needs a random stream");
    const double keep = 1.0 - dropout;
    Matrix<T> mask(1, h.cols());
    for (std::size_t j = 0; j < mask.size(); ++j) mask[j] = rng->uniform01() < keep ? static_cast<T>(1.0 / keep) : T(0);
    h = hadamard(h, h.tape().constant(std::move(mask)));
  }
  return affine(h, head.W_out, head.b_out);
}

// Argmax with ties broken toward the lowest class index.
template <typename T>
std::size_t predict(std::span<const T> logits) {
  if (logits.size() < 2) fail(ErrorKind::invalid_argument, "predict needs at least 2 logits");
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.size(); ++j)
    if (logits[j] > logits[best]) best = j;
  return best;
}

template <typename T>
std::size_t predict(const Matrix<T>& logits) {
  return predict<T>(logits.data());
}

// ---------------------------------------------------------------------------
// Value-level wrappers: evaluate one fusion on a private tape.

template <typename T>
struct FusionOutput {
  Matrix<T> h;
  std::optional<Matrix<T>> logits;
  std::optional<Matrix<T>> z;  // [g x 1]
  std::optional<Matrix<T>> h_t, h_v;
  std::optional<Matrix<T>> attn_t2v, attn_v2t, attn_self;
};

template <typename T>
FusionOutput<T> materialize(const FusionGraph<T>& g) {
  auto get = [](const std::optional<Var<T>>& v) -> std::optional<Matrix<T>> {
    if (!v) return std::nullopt;
    return v->value();
  };
  FusionOutput<T> out{g.h.value(), std::nullopt, std::nullopt, get(g.h_t), get(g.h_v),
                      get(g.attn_t2v), get(g.attn_v2t), get(g.attn_self)};
  if (g.z) out.z = transpose(g.z->value());
  return out;
}

template <typename T>
FusionOutput<T> gate_fuse(const Matrix<T>& f_t, const Matrix<T>& f_v, const GateParams<T>& p) {
  Tape<T> t;
  return materialize(gate_fuse(t.constant(f_t), t.constant(f_v), bind(t, p)));
}

template <typename T>
FusionOutput<T> xatt_fuse(const Matrix<T>& f_t, const Matrix<T>& f_v, const XAttParams<T>& p) {
  Tape<T> t;
  return materialize(xatt_fuse(t.constant(f_t), t.constant(f_v), bind(t, p)));
}

template <typename T>
FusionOutput<T> gated_xatt_fuse(const Matrix<T>& f_t, const Matrix<T>& f_v, const GateParams<T>& gp,
                                const XAttParams<T>& xp) {
  Tape<T> t;
  return materialize(gated_xatt_fuse(t.constant(f_t), t.constant(f_v), bind(t, gp), bind(t, xp)));
}

template <typename T>
Matrix<T> concat_fuse(const Matrix<T>& f_t, const Matrix<T>& f_v, const LinearParams<T>& proj) {
  Tape<T> t;
  return concat_fuse(t.constant(f_t), t.constant(f_v), bind(t, proj)).h.value();
}

template <typename T>
FusionOutput<T> selfattn_fuse(const Matrix<T>& f_t, const Matrix<T>& f_v, const XAttParams<T>& proj) {
  Tape<T> t;
  return materialize(selfattn_fuse(t.constant(f_t), t.constant(f_v), bind(t, proj)));
}

template <typename T>
Matrix<T> classify(const Matrix<T>& h, const HeadParams<T>& head, double dropout, CounterRng* rng, bool training) {
  Tape<T> t;
  return classify(t.constant(h), bind(t, head), dropout, rng, training).value();
}

}  // namespace mmfuse
