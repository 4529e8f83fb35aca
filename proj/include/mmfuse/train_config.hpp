#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmfuse/adam.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/matrix.hpp"
#include "mmfuse/model_config.hpp"
#include "mmfuse/synth.hpp"

namespace mmfuse {

// Defaults beyond the optimizer's standard betas/eps are chosen for
// feature-level heads; see README for the full list.
struct TrainConfig {
  double learning_rate = 1e-3;
  double dropout = 0.0;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  AdamConfig adam;
  Precision precision = Precision::single;

  void validate() const {
    if (!(learning_rate >= 0.0)) fail(ErrorKind::invalid_argument, "learning rate must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorKind::invalid_argument, "dropout must lie in [0, 1)");
    if (batch_size < 1) fail(ErrorKind::invalid_argument, "batch_size must be >= 1");
    if (patience < 1) fail(ErrorKind::invalid_argument, "patience must be >= 1");
    if (max_epochs < 1) fail(ErrorKind::invalid_argument, "max_epochs must be >= 1");
    if (seeds.empty()) fail(ErrorKind::invalid_argument, "at least one seed is required");
  }
};

// JSON mapping. Readers accept partial objects: absent keys keep defaults.
namespace config_io {

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<V>();
}

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"d_t", c.d_t},
          {"d_v", c.d_v},
          {"d", c.d},
          {"d_proj", c.proj_dim()},
          {"classes", c.classes},
          {"dropout", c.dropout},
          {"gate_mode", gate_mode_name(c.gate_mode)},
          {"granularity", granularity_name(c.granularity)}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  read_opt(j, "d_t", c.d_t);
  read_opt(j, "d_v", c.d_v);
  read_opt(j, "d", c.d);
  read_opt(j, "d_proj", c.d_proj);
  read_opt(j, "classes", c.classes);
  read_opt(j, "dropout", c.dropout);
  if (j.contains("gate_mode")) c.gate_mode = parse_gate_mode(j["gate_mode"].get<std::string>());
  if (j.contains("granularity")) c.granularity = parse_granularity(j["granularity"].get<std::string>());
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"dropout", c.dropout},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"seeds", c.seeds},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps_adam", c.adam.eps},
          {"precision", precision_name(c.precision)}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "dropout", c.dropout);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "max_epochs", c.max_epochs);
  read_opt(j, "patience", c.patience);
  read_opt(j, "seed", c.seed);
  read_opt(j, "seeds", c.seeds);
  read_opt(j, "beta1", c.adam.beta1);
  read_opt(j, "beta2", c.adam.beta2);
  read_opt(j, "eps_adam", c.adam.eps);
  if (j.contains("precision")) c.precision = parse_precision(j["precision"].get<std::string>());
}

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
  return {{"classes", c.classes},
          {"n_train", c.n_train},
          {"n_dev", c.n_dev},
          {"n_test", c.n_test},
          {"mu", c.mu},
          {"sigma_s", c.sigma_s},
          {"sigma_n", c.sigma_n},
          {"rho", c.rho},
          {"seed", c.seed},
          {"d_t", c.d_t},
          {"d_v", c.d_v},
          {"granularity", granularity_name(c.granularity)},
          {"text_rows", c.text_rows},
          {"image_rows", c.image_rows},
          {"missing_image_rate", c.missing_image_rate}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  read_opt(j, "classes", c.classes);
  read_opt(j, "n_train", c.n_train);
  read_opt(j, "n_dev", c.n_dev);
  read_opt(j, "n_test", c.n_test);
  read_opt(j, "mu", c.mu);
  read_opt(j, "sigma_s", c.sigma_s);
  read_opt(j, "sigma_n", c.sigma_n);
  read_opt(j, "rho", c.rho);
  read_opt(j, "seed", c.seed);
  read_opt(j, "d_t", c.d_t);
  read_opt(j, "d_v", c.d_v);
  if (j.contains("granularity")) c.granularity = parse_granularity(j["granularity"].get<std::string>());
  read_opt(j, "text_rows", c.text_rows);
  read_opt(j, "image_rows", c.image_rows);
  read_opt(j, "missing_image_rate", c.missing_image_rate);
}

}  // namespace config_io
}  // namespace mmfuse
