#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "mmfuse/catalog.hpp"
#include "mmfuse/dataset.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

/**
 * Two-modality Gaussian generator. Each class c owns fixed +-1 patterns u_c
 * (one per modality). Per example one modality is informative (text with
 * probability rho): its rows are N(mu * u_c, sigma_s^2), the other
 * modality's rows are N(0, sigma_n^2).
 */
struct SynthConfig {
  std::size_t classes = 2;
  std::size_t n_train = 2000;
  std::size_t n_dev = 500;
  std::size_t n_test = 500;
  double mu = 1.0;
  double sigma_s = 0.5;
  double sigma_n = 1.0;
  double rho = 0.5;
  std::uint64_t seed = 1;
  std::size_t d_t = 16;
  std::size_t d_v = 16;
  Granularity granularity = Granularity::pooled;
  std::size_t text_rows = 1;
  std::size_t image_rows = 1;
  double missing_image_rate = 0.0;  // fraction of posts stored text-only

  void validate() const {
    if (classes < 2) fail(ErrorKind::invalid_argument, "synth: classes must be >= 2");
    if (!(mu > 0.0) || !(sigma_s > 0.0) || !(sigma_n >= 0.0)) {
      fail(ErrorKind::invalid_argument, "synth: need mu > 0, sigma_s > 0, sigma_n >= 0");
    }
    if (!(rho >= 0.0 && rho <= 1.0)) fail(ErrorKind::invalid_argument, "synth: rho must lie in [0, 1]");
    if (!(missing_image_rate >= 0.0 && missing_image_rate <= 1.0)) {
      fail(ErrorKind::invalid_argument, "synth: missing_image_rate must lie in [0, 1]");
    }
    if (d_t < 1 || d_v < 1 || text_rows < 1 || image_rows < 1) {
      fail(ErrorKind::invalid_argument, "synth: widths and row counts must be >= 1");
    }
    if (granularity == Granularity::pooled && (text_rows != 1 || image_rows != 1)) {
      fail(ErrorKind::invalid_argument, "synth: pooled granularity requires one row per modality");
    }
  }
};

struct SynthPatterns {
  std::vector<std::vector<float>> text;   // [classes][d_t]
  std::vector<std::vector<float>> image;  // [classes][d_v]
};

inline SynthPatterns synth_patterns(const SynthConfig& cfg) {
  CounterRng rng(cfg.seed, Stream::synth);
  SynthPatterns p;
  auto draw = [&](std::size_t width) {
    std::vector<float> u(width);
    for (auto& x : u) x = rng.bernoulli(0.5) ? 1.0f : -1.0f;
    return u;
  };
  for (std::size_t c = 0; c < cfg.classes; ++c) p.text.push_back(draw(cfg.d_t));
  for (std::size_t c = 0; c < cfg.classes; ++c) p.image.push_back(draw(cfg.d_v));
  return p;
}

inline Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const SynthPatterns patterns = synth_patterns(cfg);
  // Per-example draws use a stream offset from the pattern stream.
  CounterRng rng(cfg.seed, static_cast<std::uint64_t>(Stream::synth) + 1000);

  Dataset ds;
  ds.header = DatasetHeader{cfg.d_t, cfg.d_v, cfg.granularity, ClassCatalog::numbered(cfg.classes)};

  auto block = [&](std::size_t rows, const std::vector<float>& pattern, bool informative) {
    const std::size_t width = pattern.size();
    std::vector<float> v(rows * width);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        v[i * width + j] = informative ? static_cast<float>(rng.normal(cfg.mu * pattern[j], cfg.sigma_s))
                                       : static_cast<float>(rng.normal(0.0, cfg.sigma_n));
      }
    return Matrix<float>(rows, width, std::move(v));
  };

  const std::pair<Split, std::size_t> plan[] = {{Split::train, cfg.n_train}, {Split::dev, cfg.n_dev}, {Split::test, cfg.n_test}};
  for (const auto& [split, n] : plan) {
    for (std::size_t i = 0; i < n; ++i) {
      FeatureRecord r;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%06zu", split_name(split).c_str(), i);
      r.id = id;
      r.split = split;
      r.label = static_cast<std::size_t>(rng.below(cfg.classes));
      const bool text_informative = rng.bernoulli(cfg.rho);
      r.text = block(cfg.text_rows, patterns.text[r.label], text_informative);
      Matrix<float> image = block(cfg.image_rows, patterns.image[r.label], !text_informative);
      // Drawn unconditionally so the missing rate does not shift later draws.
      r.has_image = !rng.bernoulli(cfg.missing_image_rate);
      if (r.has_image) r.image = std::move(image);
      r.extras["informative"] = text_informative ? "text" : "image";
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

}  // namespace mmfuse
