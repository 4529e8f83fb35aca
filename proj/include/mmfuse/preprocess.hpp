#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mmfuse/dataset.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/matrix.hpp"

namespace mmfuse {

/**
 * Elementwise mean of every genuine train-split image. Accumulates in double,
 * so n identical float images sum exactly and the mean reproduces the image
 * bit for bit.
 */
inline Matrix<float> average_image(const Dataset& ds) {
  std::vector<double> sum;
  std::size_t rows = 0, n = 0;
  for (const auto& r : ds.records) {
    if (r.split != Split::train || !r.has_image || !r.image) continue;
    const Matrix<float>& img = *r.image;
    if (n == 0) {
      rows = img.rows();
      sum.assign(img.size(), 0.0);
    } else if (img.rows() != rows || img.cols() != ds.header.d_v) {
      fail(ErrorKind::shape_mismatch, "average_image: record '" + r.id + "' image " + img.shape() +
                                          " differs from " + Matrix<float>::shape_string(rows, ds.header.d_v));
    }
    for (std::size_t i = 0; i < img.size(); ++i) sum[i] += static_cast<double>(img[i]);
    ++n;
  }
  if (n == 0) fail(ErrorKind::empty_split, "average_image: the train split has no records with an image");
  std::vector<float> mean(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i) mean[i] = static_cast<float>(sum[i] / static_cast<double>(n));
  return Matrix<float>(rows, ds.header.d_v, std::move(mean));
}

// Records without a genuine image get `avg`; has_image flags are untouched.
inline Dataset impute_missing(Dataset ds, const Matrix<float>& avg) {
  if (avg.cols() != ds.header.d_v) {
    fail(ErrorKind::shape_mismatch, "impute_missing: average image " + avg.shape() + " does not match d_v=" +
                                        std::to_string(ds.header.d_v));
  }
  if (ds.header.granularity == Granularity::pooled && avg.rows() != 1) {
    fail(ErrorKind::shape_mismatch, "impute_missing: pooled dataset needs a single-row average image");
  }
  for (auto& r : ds.records)
    if (!r.has_image) r.image = avg;
  ds.average_image = avg;
  return ds;
}

// Keeps only has_image records within `splits`; other splits pass through.
inline Dataset filter_paired(Dataset ds, const std::set<Split>& splits) {
  std::vector<FeatureRecord> kept;
  kept.reserve(ds.records.size());
  for (auto& r : ds.records)
    if (r.has_image || !splits.contains(r.split)) kept.push_back(std::move(r));
  ds.records = std::move(kept);
  return ds;
}

enum class Regime { all, paired_all, paired_train };

inline std::string regime_name(Regime r) {
  switch (r) {
    case Regime::all: return "all";
    case Regime::paired_all: return "paired-all";
    case Regime::paired_train: return "paired-train";
  }
  return "unknown";
}

inline Regime parse_regime(const std::string& s) {
  if (s == "all") return Regime::all;
  if (s == "paired-all") return Regime::paired_all;
  if (s == "paired-train") return Regime::paired_train;
  fail(ErrorKind::invalid_argument, "unknown regime '" + s + "' (expected all|paired-all|paired-train)");
}

// Splits whose text-only records a regime removes.
inline std::set<Split> regime_filtered_splits(Regime r) {
  switch (r) {
    case Regime::all: return {};
    case Regime::paired_all: return {Split::train, Split::dev, Split::test};
    case Regime::paired_train: return {Split::train};
  }
  return {};
}

/**
 * Applies a regime's filtering, recomputes the average image from whatever
 * train split remains, and imputes every missing image with it.
 */
inline Dataset prepare_dataset(const Dataset& raw, Regime regime) {
  Dataset ds = filter_paired(raw, regime_filtered_splits(regime));
  for (Split s : {Split::train, Split::dev}) {
    if (ds.count(s) == 0) {
      fail(ErrorKind::empty_split, "regime " + regime_name(regime) + " leaves the " + split_name(s) + " split empty");
    }
  }
  const Matrix<float> avg = average_image(ds);
  return impute_missing(std::move(ds), avg);
}

// Balanced heuristic: w_c = N / (M * N_c).
inline std::vector<double> class_weights(std::span<const std::size_t> counts) {
  const std::size_t m = counts.size();
  if (m == 0) fail(ErrorKind::invalid_argument, "class_weights: no classes");
  std::size_t total = 0;
  for (std::size_t c = 0; c < m; ++c) {
    if (counts[c] == 0) {
      fail(ErrorKind::invalid_argument, "class_weights: class " + std::to_string(c) + " has no training examples");
    }
    total += counts[c];
  }
  std::vector<double> w(m);
  for (std::size_t c = 0; c < m; ++c)
    w[c] = static_cast<double>(total) / (static_cast<double>(m) * static_cast<double>(counts[c]));
  return w;
}

// Most frequent train label, ties toward the lowest index.
inline std::size_t majority_class(std::span<const std::size_t> train_counts) {
  std::size_t best = 0;
  bool any = false;
  for (std::size_t c = 0; c < train_counts.size(); ++c) {
    if (train_counts[c] > 0) any = true;
    if (train_counts[c] > train_counts[best]) best = c;
  }
  if (!any) fail(ErrorKind::empty_split, "majority baseline needs a nonempty train split");
  return best;
}

inline std::vector<std::size_t> majority_baseline(std::span<const std::size_t> train_counts, std::size_t test_size) {
  return std::vector<std::size_t>(test_size, majority_class(train_counts));
}

}  // namespace mmfuse
