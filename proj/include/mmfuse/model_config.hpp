#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "mmfuse/error.hpp"

namespace mmfuse {

enum class ModelKind { majority, text, image, concat, selfattn, mm_gate, mm_xatt, mm_gated_xatt };

inline constexpr std::array<ModelKind, 8> kAllModelKinds = {
    ModelKind::majority, ModelKind::text,     ModelKind::image,   ModelKind::concat,
    ModelKind::selfattn, ModelKind::mm_gate, ModelKind::mm_xatt, ModelKind::mm_gated_xatt};

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::majority: return "majority";
    case ModelKind::text: return "text";
    case ModelKind::image: return "image";
    case ModelKind::concat: return "concat";
    case ModelKind::selfattn: return "selfattn";
    case ModelKind::mm_gate: return "mm-gate";
    case ModelKind::mm_xatt: return "mm-xatt";
    case ModelKind::mm_gated_xatt: return "mm-gated-xatt";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (ModelKind k : kAllModelKinds)
    if (model_kind_name(k) == s) return k;
  fail(ErrorKind::invalid_argument,
       "unknown model kind '" + std::string(s) +
           "' (expected majority|text|image|concat|selfattn|mm-gate|mm-xatt|mm-gated-xatt)");
}

inline bool has_gate(ModelKind k) { return k == ModelKind::mm_gate || k == ModelKind::mm_gated_xatt; }
inline bool has_cross_attention(ModelKind k) { return k == ModelKind::mm_xatt || k == ModelKind::mm_gated_xatt; }

enum class GateMode { vector, scalar };
enum class Granularity { pooled, sequence };

inline std::string gate_mode_name(GateMode m) { return m == GateMode::vector ? "vector" : "scalar"; }
inline GateMode parse_gate_mode(std::string_view s) {
  if (s == "vector") return GateMode::vector;
  if (s == "scalar") return GateMode::scalar;
  fail(ErrorKind::invalid_argument, "unknown gate mode '" + std::string(s) + "' (expected vector|scalar)");
}

inline std::string granularity_name(Granularity g) { return g == Granularity::pooled ? "pooled" : "sequence"; }
inline Granularity parse_granularity(std::string_view s) {
  if (s == "pooled") return Granularity::pooled;
  if (s == "sequence") return Granularity::sequence;
  fail(ErrorKind::invalid_argument, "unknown granularity '" + std::string(s) + "' (expected pooled|sequence)");
}

struct ModelConfig {
  std::size_t d_t = 768;
  std::size_t d_v = 2048;
  std::size_t d = 200;       // fused hidden width
  std::size_t d_proj = 0;    // attention projection width; 0 means "same as d"
  std::size_t classes = 8;
  double dropout = 0.0;
  GateMode gate_mode = GateMode::vector;
  Granularity granularity = Granularity::sequence;

  std::size_t proj_dim() const noexcept { return d_proj == 0 ? d : d_proj; }
  std::size_t gate_dim() const noexcept { return gate_mode == GateMode::vector ? d : 1; }

  void validate() const {
    if (d_t < 1 || d_v < 1 || d < 1) fail(ErrorKind::invalid_argument, "model widths must be >= 1");
    if (classes < 2) fail(ErrorKind::invalid_argument, "model needs at least 2 classes");
    if (!(dropout >= 0.0 && dropout < 1.0)) {
      fail(ErrorKind::invalid_argument, "dropout must lie in [0, 1), got " + std::to_string(dropout));
    }
  }

  // Width of the representation fed to the classification layer.
  std::size_t head_input_dim(ModelKind kind) const {
    switch (kind) {
      case ModelKind::text: return d_t;
      case ModelKind::image: return d_v;
      case ModelKind::concat: return 2 * d_t;
      case ModelKind::selfattn: return proj_dim();
      case ModelKind::mm_gate: return d;
      case ModelKind::mm_xatt: return proj_dim();
      case ModelKind::mm_gated_xatt: return proj_dim();
      case ModelKind::majority: break;
    }
    fail(ErrorKind::unsupported, "majority baseline has no classification layer");
  }
};

}  // namespace mmfuse
