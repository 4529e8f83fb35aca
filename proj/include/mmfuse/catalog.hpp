#pragma once

#include <array>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmfuse/error.hpp"

namespace mmfuse {

// Ordered class names; the position of a name is its class index.
class ClassCatalog {
 public:
  ClassCatalog() = default;
  explicit ClassCatalog(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i)
      for (std::size_t j = i + 1; j < names_.size(); ++j)
        if (names_[i] == names_[j]) fail(ErrorKind::invalid_argument, "duplicate class name '" + names_[i] + "'");
  }

  // The eight top-level Foursquare POI categories.
  static ClassCatalog poi() {
    return ClassCatalog({"Arts & Entertainment", "College & University", "Food", "Great Outdoors",
                         "Nightlife Spot", "Professional & Other Places", "Shop & Service", "Travel & Transport"});
  }

  static ClassCatalog numbered(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("class_" + std::to_string(i));
    return ClassCatalog(std::move(names));
  }

  std::optional<std::size_t> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  const std::string& name(std::size_t i) const {
    if (i >= names_.size()) fail(ErrorKind::invalid_argument, "class index " + std::to_string(i) + " out of range");
    return names_[i];
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  bool operator==(const ClassCatalog&) const = default;

 private:
  std::vector<std::string> names_;
};

enum class Split { train, dev, test };
inline constexpr std::array<Split, 3> kAllSplits = {Split::train, Split::dev, Split::test};

inline std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "unknown";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  fail(ErrorKind::invalid_argument, "unknown split '" + s + "' (expected train|dev|test)");
}

// Per-class tweet and image counts for each split of the POI corpus.
// `*_total` come from the table's "All" row, which for images does not equal
// the sum of the per-class column.
struct SplitCounts {
  std::vector<std::size_t> tweets;
  std::vector<std::size_t> images;
  std::size_t tweets_total = 0;
  std::size_t images_total = 0;
};

struct CountsFixture {
  ClassCatalog classes;
  std::array<SplitCounts, 3> splits;  // indexed by Split

  const SplitCounts& at(Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

inline CountsFixture load_counts_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open counts fixture '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, "counts fixture '" + path + "' is not valid JSON: " + e.what());
  }
  CountsFixture f;
  try {
    f.classes = ClassCatalog(j.at("classes").get<std::vector<std::string>>());
    for (Split s : kAllSplits) {
      const auto& node = j.at("splits").at(split_name(s));
      SplitCounts c{node.at("tweets").get<std::vector<std::size_t>>(), node.at("images").get<std::vector<std::size_t>>(),
                    node.at("tweets_total").get<std::size_t>(), node.at("images_total").get<std::size_t>()};
      if (c.tweets.size() != f.classes.size() || c.images.size() != f.classes.size()) {
        fail(ErrorKind::shape_mismatch, "counts fixture split '" + split_name(s) + "' does not list every class");
      }
      f.splits[static_cast<std::size_t>(s)] = std::move(c);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_argument, "counts fixture '" + path + "' is missing fields: " + e.what());
  }
  return f;
}

}  // namespace mmfuse
