#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mmfuse.hpp"

#define EXPECT_ERROR_KIND(stmt, expected_kind)                                                  \
  do {                                                                                         \
    try {                                                                                      \
      stmt;                                                                                    \
      ADD_FAILURE() << "expected " << mmfuse::error_kind_name(expected_kind) << " from " #stmt; \
    } catch (const mmfuse::Error& e_) {                                                        \
      EXPECT_EQ(e_.kind(), expected_kind) << e_.what();                                        \
    }                                                                                          \
  } while (0)

namespace testing_support {

namespace fs = std::filesystem;

template <typename T = double>
mmfuse::Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  mmfuse::Matrix<T> m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(dist(gen));
  return m;
}

// Fresh, empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmfuse_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline std::string fixture(const std::string& name) { return std::string(MMFUSE_FIXTURES) + "/" + name; }

struct GradCase {
  mmfuse::ModelKind kind;
  mmfuse::ModelConfig config;
  std::size_t text_rows = 1;
  std::size_t image_rows = 1;
};

// Max relative gradient error of a model's weighted loss on one random example.
inline mmfuse::GradCheckResult check_model_gradients(const GradCase& c, std::uint64_t seed, double eps = 1e-5) {
  using namespace mmfuse;
  std::mt19937_64 gen(seed);
  const Matrix<double> text = random_matrix(c.text_rows, c.config.d_t, gen);
  const Matrix<double> image = random_matrix(c.image_rows, c.config.d_v, gen);
  const std::size_t gold = seed % c.config.classes;
  std::vector<double> weights(c.config.classes);
  for (auto& w : weights) w = 0.5 + std::uniform_real_distribution<double>(0.0, 1.0)(gen);

  Model<double> model = Model<double>::create(c.kind, c.config, seed);
  // Non-zero biases so their gradients and the bias paths are exercised.
  for (auto& e : model.params)
    if (e.value.cols() == 1)
      for (auto& x : e.value.data()) x = std::uniform_real_distribution<double>(-0.2, 0.2)(gen);

  std::vector<Matrix<double>> values;
  for (const auto& e : model.params) values.push_back(e.value);
  LossBuilder build = [&](Tape<double>& tape, std::span<const Var<double>> leaves) {
    const ModelForward<double> f = model.forward(tape, leaves, text, image);
    return weighted_cross_entropy(f.logits, gold, std::span<const double>(weights));
  };
  return grad_check(build, values, eps);
}

}  // namespace testing_support
