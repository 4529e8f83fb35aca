#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "mmfuse/error.hpp"
#include "mmfuse/params.hpp"

namespace mmfuse {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  ParamSet<T> m;  // first moments
  ParamSet<T> v;  // second moments
  std::uint64_t t = 0;

  static AdamState for_params(const ParamSet<T>& params) { return {params.zeros_like(), params.zeros_like(), 0}; }
};

/**
 * One Adam update:
 *   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
 *   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
 * with bias-corrected m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t).
 * Nothing is modified if any gradient entry is non-finite.
 */
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, double lr,
               const AdamConfig& cfg = {}) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    fail(ErrorKind::shape_mismatch, "adam_step: parameter, gradient and moment sets differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix<T>& g = grads[k].value;
    if (!g.same_shape(params[k].value)) {
      fail(ErrorKind::shape_mismatch, "adam_step: gradient of '" + params[k].name + "' has shape " + g.shape());
    }
    for (T x : g.data())
      if (!std::isfinite(static_cast<double>(x))) {
        fail(ErrorKind::non_finite, "adam_step: non-finite gradient for parameter '" + params[k].name + "'");
      }
  }

  ++state.t;
  const double step = static_cast<double>(state.t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, step));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, step));
  const T rate = static_cast<T>(lr), eps = static_cast<T>(cfg.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix<T>& p = params[k].value;
    Matrix<T>& m = state.m[k].value;
    Matrix<T>& v = state.v[k].value;
    const Matrix<T>& g = grads[k].value;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = m[i] / c1;
      const T v_hat = v[i] / c2;
      p[i] -= rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace mmfuse
