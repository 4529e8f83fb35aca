#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmfuse/error.hpp"
#include "mmfuse/fusion.hpp"
#include "mmfuse/model_config.hpp"
#include "mmfuse/params.hpp"
#include "mmfuse/tape.hpp"

namespace mmfuse {

template <typename T>
struct ModelForward {
  FusionGraph<T> fusion;
  Var<T> logits;  // [1 x M]
};

/**
 * One classifier: its kind, shapes and parameters. Parameters are read-only
 * during forward passes, so a Model can be shared across threads for
 * evaluation.
 */
template <typename T>
struct Model {
  ModelKind kind = ModelKind::text;
  ModelConfig config;
  ParamSet<T> params;
  std::size_t majority_class = 0;  // used by ModelKind::majority only

  static Model create(ModelKind kind, const ModelConfig& cfg, std::uint64_t seed) {
    return Model{kind, cfg, init_params<T>(kind, cfg, seed), 0};
  }

  // One tape leaf per parameter, in ParamSet order.
  std::vector<Var<T>> bind_params(Tape<T>& tape) const {
    std::vector<Var<T>> leaves;
    leaves.reserve(params.size());
    for (const auto& e : params) leaves.push_back(tape.parameter(e.value));
    return leaves;
  }

  ModelForward<T> forward(Tape<T>& tape, std::span<const Var<T>> leaves, const Matrix<T>& text, const Matrix<T>& image,
                          bool training = false, CounterRng* dropout_rng = nullptr) const {
    if (kind == ModelKind::majority) fail(ErrorKind::unsupported, "majority baseline has no forward pass");
    if (leaves.size() != params.size()) {
      fail(ErrorKind::invalid_argument, "forward: " + std::to_string(leaves.size()) + " leaves for " +
                                            std::to_string(params.size()) + " parameters");
    }
    if (text.cols() != config.d_t || image.cols() != config.d_v) {
      fail(ErrorKind::shape_mismatch, "forward: inputs " + text.shape() + " / " + image.shape() +
                                          " do not match d_t=" + std::to_string(config.d_t) +
                                          ", d_v=" + std::to_string(config.d_v));
    }
    auto leaf = [&](const std::string& name) {
      for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].name == name) return leaves[i];
      fail(ErrorKind::invalid_argument, "missing parameter '" + name + "'");
    };
    auto gate = [&] {
      const std::string& p = param_names::gate_prefix;
      return GateNodes<T>{leaf(p + "W_t"), leaf(p + "b_t"), leaf(p + "W_v"),
                          leaf(p + "b_v"), leaf(p + "W_z"), leaf(p + "b_z")};
    };
    auto projections = [&](const std::string& p) {
      return XAttNodes<T>{leaf(p + "W_t"), leaf(p + "b_t"), leaf(p + "W_v"), leaf(p + "b_v")};
    };

    Var<T> f_t = tape.constant(text);
    Var<T> f_v = tape.constant(image);
    ModelForward<T> out;
    switch (kind) {
      case ModelKind::text: out.fusion.h = detail::pool(f_t); break;
      case ModelKind::image: out.fusion.h = detail::pool(f_v); break;
      case ModelKind::concat: {
        const std::string& p = param_names::concat_prefix;
        out.fusion = concat_fuse(detail::pool(f_t), detail::pool(f_v), LinearNodes<T>{leaf(p + "W"), leaf(p + "b")});
        break;
      }
      case ModelKind::selfattn:
        out.fusion = selfattn_fuse(detail::pool(f_t), detail::pool(f_v), projections(param_names::selfattn_prefix));
        break;
      case ModelKind::mm_gate: out.fusion = gate_fuse(detail::pool(f_t), detail::pool(f_v), gate()); break;
      case ModelKind::mm_xatt: out.fusion = xatt_fuse(f_t, f_v, projections(param_names::xatt_prefix)); break;
      case ModelKind::mm_gated_xatt:
        out.fusion = gated_xatt_fuse(f_t, f_v, gate(), projections(param_names::xatt_prefix));
        break;
      case ModelKind::majority: break;
    }
    const std::string& hp = param_names::head_prefix;
    out.logits = classify(out.fusion.h, HeadNodes<T>{leaf(hp + "W_out"), leaf(hp + "b_out")}, config.dropout,
                          dropout_rng, training);
    return out;
  }

  // Evaluation-mode forward on a private tape.
  FusionOutput<T> evaluate(const Matrix<T>& text, const Matrix<T>& image) const {
    Tape<T> tape;
    const auto leaves = bind_params(tape);
    ModelForward<T> f = forward(tape, leaves, text, image);
    FusionOutput<T> out = materialize(f.fusion);
    out.logits = f.logits.value();
    return out;
  }

  std::size_t predict_class(const Matrix<T>& text, const Matrix<T>& image) const {
    if (kind == ModelKind::majority) return majority_class;
    return predict(*evaluate(text, image).logits);
  }
};

}  // namespace mmfuse
