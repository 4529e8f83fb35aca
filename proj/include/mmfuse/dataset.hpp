#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmfuse/catalog.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/matrix.hpp"
#include "mmfuse/model_config.hpp"

namespace mmfuse {

inline constexpr const char* kDatasetFormat = "MMFV1";

// One post. Features are stored as ingested (32-bit floats); encoders are
// out of scope, so these are used directly as the model inputs.
struct FeatureRecord {
  std::string id;
  std::size_t label = 0;
  Split split = Split::train;
  bool has_image = false;
  Matrix<float> text;                  // [L_t x d_t]
  std::optional<Matrix<float>> image;  // [L_v x d_v]; present iff has_image until imputed
  nlohmann::ordered_json extras = nlohmann::ordered_json::object();

  bool operator==(const FeatureRecord&) const = default;
};

struct DatasetHeader {
  std::size_t d_t = 1;
  std::size_t d_v = 1;
  Granularity granularity = Granularity::pooled;
  ClassCatalog classes;

  bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<FeatureRecord> records;
  std::optional<Matrix<float>> average_image;

  std::vector<const FeatureRecord*> split(Split s) const {
    std::vector<const FeatureRecord*> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(&r);
    return out;
  }

  std::size_t count(Split s) const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.split == s;
    return n;
  }

  std::vector<std::size_t> label_counts(Split s) const {
    std::vector<std::size_t> counts(header.classes.size(), 0);
    for (const auto& r : records)
      if (r.split == s) ++counts.at(r.label);
    return counts;
  }

  bool operator==(const Dataset&) const = default;
};

namespace detail {

inline void check_record_shape(const DatasetHeader& h, const FeatureRecord& r) {
  auto check = [&](const Matrix<float>& m, std::size_t width, const char* what) {
    if (m.cols() != width) {
      fail(ErrorKind::format_width, "record '" + r.id + "': " + what + " width " + std::to_string(m.cols()) +
                                        " != header width " + std::to_string(width));
    }
    if (h.granularity == Granularity::pooled && m.rows() != 1) {
      fail(ErrorKind::format_width, "record '" + r.id + "': pooled dataset requires one " + what + " row, got " +
                                        std::to_string(m.rows()));
    }
  };
  check(r.text, h.d_t, "text");
  if (r.image) check(*r.image, h.d_v, "image");
  if (r.has_image && !r.image) fail(ErrorKind::invalid_argument, "record '" + r.id + "': has_image without image features");
  if (r.label >= h.classes.size()) {
    fail(ErrorKind::unknown_label, "record '" + r.id + "': label index " + std::to_string(r.label) + " out of range");
  }
}

inline std::uint32_t to_little_endian(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    x = ((x & 0xff) << 24) | ((x & 0xff00) << 8) | ((x >> 8) & 0xff00) | (x >> 24);
  }
  return x;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// Validates widths, labels, and id uniqueness across splits.
inline void validate_dataset(const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& r : ds.records) {
    detail::check_record_shape(ds.header, r);
    if (!ids.insert(r.id).second) fail(ErrorKind::invalid_argument, "duplicate record id '" + r.id + "'");
  }
}

/**
 * Writes header.json, manifest.jsonl and features.bin under `dir` (created if
 * needed). Offsets count float elements: a record's text block starts at
 * text_offset and holds text_rows * d_t floats, then its image block.
 */
inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  validate_dataset(ds);
  std::filesystem::create_directories(dir);

  nlohmann::ordered_json header;
  header["format"] = kDatasetFormat;
  header["d_t"] = ds.header.d_t;
  header["d_v"] = ds.header.d_v;
  header["granularity"] = granularity_name(ds.header.granularity);
  header["classes"] = ds.header.classes.names();
  {
    std::ofstream out(dir / "header.json", std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write header.json in '" + dir.string() + "'");
    out << header.dump(2) << '\n';
  }

  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary);
  std::ofstream blob(dir / "features.bin", std::ios::binary);
  if (!manifest || !blob) fail(ErrorKind::io, "cannot write dataset files in '" + dir.string() + "'");

  std::uint64_t offset = 0;
  auto emit = [&](const Matrix<float>& m) {
    const std::uint64_t start = offset;
    for (float v : m.data()) {
      std::uint32_t bits = detail::to_little_endian(std::bit_cast<std::uint32_t>(v));
      blob.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += m.size();
    return start;
  };

  for (const auto& r : ds.records) {
    nlohmann::ordered_json line;
    line["id"] = r.id;
    line["label"] = ds.header.classes.name(r.label);
    line["split"] = split_name(r.split);
    line["has_image"] = r.has_image;
    line["text_rows"] = r.text.rows();
    line["text_offset"] = emit(r.text);
    // Imputed images are not persisted: the manifest describes raw data.
    if (r.has_image) {
      line["image_rows"] = r.image->rows();
      line["image_offset"] = emit(*r.image);
    } else {
      line["image_rows"] = nullptr;
      line["image_offset"] = nullptr;
    }
    if (!r.extras.empty()) line["extras"] = r.extras;
    manifest << line.dump() << '\n';
  }
  if (!manifest || !blob) fail(ErrorKind::io, "short write in '" + dir.string() + "'");
}

inline DatasetHeader parse_dataset_header(const std::string& text, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format_magic, where + ": header is not valid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("format") || j["format"] != kDatasetFormat) {
    fail(ErrorKind::format_magic, where + ": header format is not " + std::string(kDatasetFormat));
  }
  DatasetHeader h;
  try {
    h.d_t = j.at("d_t").get<std::size_t>();
    h.d_v = j.at("d_v").get<std::size_t>();
    h.granularity = parse_granularity(j.at("granularity").get<std::string>());
    h.classes = ClassCatalog(j.at("classes").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_argument, where + ": malformed header: " + e.what());
  }
  if (h.d_t < 1 || h.d_v < 1) fail(ErrorKind::format_width, where + ": feature widths must be >= 1");
  if (h.classes.size() < 2) fail(ErrorKind::invalid_argument, where + ": header needs at least 2 classes");
  return h;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.header = parse_dataset_header(detail::read_file(dir / "header.json"), dir.string());

  const std::string blob = detail::read_file(dir / "features.bin");
  if (blob.size() % sizeof(float) != 0) {
    fail(ErrorKind::format_truncated, "features.bin size " + std::to_string(blob.size()) + " is not a multiple of 4");
  }
  const std::uint64_t available = blob.size() / sizeof(float);

  auto read_block = [&](const std::string& id, const char* what, std::uint64_t offset, std::uint64_t rows,
                        std::size_t width) {
    if (rows == 0) fail(ErrorKind::format_width, "record '" + id + "': " + what + "_rows must be >= 1");
    const std::uint64_t n = rows * width;
    if (offset > available || n > available - offset) {
      fail(ErrorKind::format_truncated, "record '" + id + "': " + what + " block [" + std::to_string(offset) + ", " +
                                            std::to_string(offset + n) + ") exceeds features.bin (" +
                                            std::to_string(available) + " floats)");
    }
    std::vector<float> values(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, blob.data() + (offset + i) * sizeof(float), sizeof bits);
      values[i] = std::bit_cast<float>(detail::to_little_endian(bits));
    }
    try {
      return Matrix<float>::checked(rows, width, std::move(values));
    } catch (const Error& e) {
      fail(e.kind(), "record '" + id + "': " + e.what());
    }
  };

  std::ifstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) fail(ErrorKind::io, "cannot open manifest.jsonl in '" + dir.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> ids;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::invalid_argument, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    FeatureRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      const std::string label = j.at("label").get<std::string>();
      const auto idx = ds.header.classes.index_of(label);
      if (!idx) fail(ErrorKind::unknown_label, "record '" + r.id + "': unknown label '" + label + "'");
      r.label = *idx;
      r.split = parse_split(j.at("split").get<std::string>());
      r.has_image = j.at("has_image").get<bool>();
      r.text = read_block(r.id, "text", j.at("text_offset").get<std::uint64_t>(), j.at("text_rows").get<std::uint64_t>(),
                          ds.header.d_t);
      if (r.has_image) {
        r.image = read_block(r.id, "image", j.at("image_offset").get<std::uint64_t>(),
                             j.at("image_rows").get<std::uint64_t>(), ds.header.d_v);
      } else if (!j.at("image_rows").is_null() || !j.at("image_offset").is_null()) {
        fail(ErrorKind::invalid_argument, "record '" + r.id + "': image fields must be null when has_image is false");
      }
      if (j.contains("extras")) r.extras = j["extras"];
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::invalid_argument, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(r.id).second) fail(ErrorKind::invalid_argument, "duplicate record id '" + r.id + "'");
    detail::check_record_shape(ds.header, r);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace mmfuse
