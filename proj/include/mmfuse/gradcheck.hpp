#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mmfuse/error.hpp"
#include "mmfuse/matrix.hpp"
#include "mmfuse/tape.hpp"

namespace mmfuse {

// Builds a scalar loss on `tape` from leaves bound to each parameter matrix.
using LossBuilder = std::function<Var<double>(Tape<double>& tape, std::span<const Var<double>> params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/**
 * Compares reverse-mode gradients against central differences
 * (f(p+eps) - f(p-eps)) / 2eps for every parameter entry. The error of one
 * entry is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
 *
 * Runs in double precision only; eps must lie in [1e-6, 1e-4].
 */
inline GradCheckResult grad_check(const LossBuilder& build, std::vector<Matrix<double>> params, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) {
    fail(ErrorKind::invalid_argument, "grad_check eps must lie in [1e-6, 1e-4], got " + std::to_string(eps));
  }

  auto evaluate = [&](std::vector<Matrix<double>>* grads) {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.parameter(p));
    Var<double> loss = build(tape, leaves);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) fail(ErrorKind::non_finite, "grad_check: non-finite loss");
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (const auto& leaf : leaves) grads->push_back(tape.grad(leaf));
    }
    return value;
  };

  std::vector<Matrix<double>> analytic;
  evaluate(&analytic);

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + eps;
      const double up = evaluate(nullptr);
      params[p][i] = saved - eps;
      const double down = evaluate(nullptr);
      params[p][i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++result.entries_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = p;
        result.worst_entry = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace mmfuse
