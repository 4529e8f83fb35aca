#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "mmfuse/catalog.hpp"
#include "mmfuse/dataset.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/model.hpp"
#include "mmfuse/train_config.hpp"

namespace mmfuse {

inline constexpr char kCheckpointMagic[8] = {'M', 'M', 'C', 'K', '1', '\0', '\0', '\0'};

// Everything inference needs: model, class names and the imputation image.
template <typename T>
struct Checkpoint {
  Model<T> model;
  ClassCatalog classes;
  std::optional<Matrix<float>> average_image;
  TrainConfig train;
  std::string regime = "all";
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  std::optional<double> best_dev_loss;
};

template <typename T>
constexpr Precision precision_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? Precision::single : Precision::double_;
}

namespace detail {

template <typename T>
void append_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits;
  if constexpr (std::is_floating_point_v<T>) {
    bits = std::bit_cast<U>(value);
  } else {
    bits = static_cast<U>(value);
  }
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename U>
U read_le(const std::string& in, std::size_t pos) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return bits;
}

}  // namespace detail

/**
 * Container layout:
 *   8 bytes  magic "MMCK1\0\0\0"
 *   u64 LE   metadata length, then that many bytes of JSON
 *   u64 LE   blob length in bytes, then the blob: little-endian values of the
 *            checkpoint precision (4 or 8 bytes each), addressed by element
 *            offsets recorded in the metadata.
 */
template <typename T>
std::string encode_checkpoint(const Checkpoint<T>& ck) {
  std::string blob;
  std::uint64_t offset = 0;
  auto put = [&](const Matrix<T>& m) {
    const std::uint64_t start = offset;
    for (T v : m.data()) detail::append_le<T>(blob, v);
    offset += m.size();
    return start;
  };

  nlohmann::ordered_json meta;
  meta["format"] = "MMCK1";
  meta["precision"] = precision_name(precision_of<T>());
  meta["model"] = model_kind_name(ck.model.kind);
  meta["model_config"] = config_io::to_json(ck.model.config);
  meta["train_config"] = config_io::to_json(ck.train);
  meta["regime"] = ck.regime;
  meta["seed"] = ck.seed;
  meta["classes"] = ck.classes.names();
  meta["best_epoch"] = ck.best_epoch;
  meta["best_dev_loss"] = ck.best_dev_loss ? nlohmann::ordered_json(*ck.best_dev_loss) : nlohmann::ordered_json(nullptr);
  meta["majority_class"] = ck.model.majority_class;
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const auto& e : ck.model.params) {
    params.push_back({{"name", e.name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}, {"offset", put(e.value)}});
  }
  meta["params"] = params;
  if (ck.average_image) {
    const Matrix<T> avg = ck.average_image->template cast<T>();
    meta["average_image"] = {{"rows", avg.rows()}, {"cols", avg.cols()}, {"offset", put(avg)}};
  } else {
    meta["average_image"] = nullptr;
  }

  const std::string text = meta.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::append_le<std::uint64_t>(out, text.size());
  out += text;
  detail::append_le<std::uint64_t>(out, blob.size());
  out += blob;
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "short write for checkpoint '" + path.string() + "'");
}

struct CheckpointFile {
  nlohmann::json meta;
  std::string blob;
};

inline CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    fail(ErrorKind::format_magic, "'" + path.string() + "' is not an MMCK1 checkpoint");
  }
  const auto meta_len = detail::read_le<std::uint64_t>(bytes, 8);
  if (meta_len > bytes.size() - 16) fail(ErrorKind::format_truncated, "checkpoint metadata truncated");
  CheckpointFile f;
  try {
    f.meta = nlohmann::json::parse(bytes.substr(16, meta_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format_magic, "checkpoint metadata is not valid JSON: " + std::string(e.what()));
  }
  const std::size_t blob_at = 16 + meta_len;
  if (bytes.size() < blob_at + 8) fail(ErrorKind::format_truncated, "checkpoint blob header truncated");
  const auto blob_len = detail::read_le<std::uint64_t>(bytes, blob_at);
  if (blob_len != bytes.size() - blob_at - 8) fail(ErrorKind::format_truncated, "checkpoint blob length mismatch");
  f.blob = bytes.substr(blob_at + 8);
  return f;
}

inline Precision checkpoint_precision(const std::filesystem::path& path) {
  return parse_precision(read_checkpoint_file(path).meta.at("precision").get<std::string>());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  CheckpointFile f = read_checkpoint_file(path);
  const nlohmann::json& meta = f.meta;
  Checkpoint<T> ck;
  try {
    if (parse_precision(meta.at("precision").get<std::string>()) != precision_of<T>()) {
      fail(ErrorKind::invalid_argument, "checkpoint precision is " + meta.at("precision").get<std::string>());
    }
    const std::size_t available = f.blob.size() / sizeof(T);
    auto take = [&](const nlohmann::json& node) {
      const auto rows = node.at("rows").get<std::size_t>();
      const auto cols = node.at("cols").get<std::size_t>();
      const auto off = node.at("offset").get<std::size_t>();
      if (off > available || rows * cols > available - off) fail(ErrorKind::format_truncated, "checkpoint blob truncated");
      using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      std::vector<T> v(rows * cols);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::bit_cast<T>(detail::read_le<U>(f.blob, (off + i) * sizeof(T)));
      return Matrix<T>::checked(rows, cols, std::move(v));
    };

    ck.model.kind = parse_model_kind(meta.at("model").get<std::string>());
    config_io::from_json(meta.at("model_config"), ck.model.config);
    config_io::from_json(meta.at("train_config"), ck.train);
    ck.regime = meta.at("regime").get<std::string>();
    ck.seed = meta.at("seed").get<std::uint64_t>();
    ck.classes = ClassCatalog(meta.at("classes").get<std::vector<std::string>>());
    ck.best_epoch = meta.at("best_epoch").get<std::size_t>();
    if (!meta.at("best_dev_loss").is_null()) ck.best_dev_loss = meta["best_dev_loss"].get<double>();
    ck.model.majority_class = meta.at("majority_class").get<std::size_t>();
    for (const auto& p : meta.at("params")) ck.model.params.add(p.at("name").get<std::string>(), take(p));
    if (!meta.at("average_image").is_null()) ck.average_image = take(meta["average_image"]).template cast<float>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_argument, "malformed checkpoint metadata: " + std::string(e.what()));
  }
  return ck;
}

}  // namespace mmfuse
