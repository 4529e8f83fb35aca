#pragma once

#include <string>
#include <vector>

#include "mmfuse/dataset.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/matrix.hpp"

namespace mmfuse {

// Model-ready view of one record in the working precision.
template <typename T>
struct Example {
  std::string id;
  std::size_t label = 0;
  bool has_image = false;
  Matrix<T> text;
  Matrix<T> image;
};

// Records of `split` in dataset order. Every record must carry image
// features, i.e. imputation has already run.
template <typename T>
std::vector<Example<T>> make_examples(const Dataset& ds, Split split) {
  std::vector<Example<T>> out;
  for (const FeatureRecord* r : ds.split(split)) {
    if (!r->image) {
      fail(ErrorKind::invalid_argument, "record '" + r->id + "' has no image features; run imputation first");
    }
    out.push_back({r->id, r->label, r->has_image, r->text.cast<T>(), r->image->cast<T>()});
  }
  return out;
}

}  // namespace mmfuse
