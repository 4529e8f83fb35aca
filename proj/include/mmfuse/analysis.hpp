#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmfuse/catalog.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/example.hpp"
#include "mmfuse/metrics.hpp"
#include "mmfuse/model.hpp"

namespace mmfuse {

enum class GroupBy { predicted, gold };

struct CategoryShare {
  std::size_t count = 0;
  double text_pct = 0.0;   // mean gate activation x 100
  double image_pct = 0.0;  // 100 - text_pct
};

struct ExampleShare {
  std::string id;
  std::size_t gold = 0;
  std::size_t pred = 0;
  double text_share = 0.0;  // mean over gate entries of z
};

struct GateReport {
  GroupBy group_by = GroupBy::predicted;
  std::vector<CategoryShare> categories;  // indexed by class
  double overall_text_pct = 0.0;
  double overall_image_pct = 0.0;
  std::vector<ExampleShare> examples;
};

namespace detail {
inline void require_gate(ModelKind kind) {
  if (!has_gate(kind)) {
    fail(ErrorKind::unsupported, "gate analysis is not available for model '" + model_kind_name(kind) +
                                     "'; supported: mm-gate, mm-gated-xatt");
  }
}
template <typename T>
double mean_entry(const Matrix<T>& m) {
  double s = 0.0;
  for (T v : m.data()) s += static_cast<double>(v);
  return s / static_cast<double>(m.size());
}
}  // namespace detail

/**
 * Modality contribution of a gated model: an example's text share is the mean
 * of its gate activations z, its image share the remainder. Shares are averaged
 * per category (predicted category by default) and reported in percent.
 */
template <typename T>
GateReport gate_contribution(const Model<T>& model, std::span<const Example<T>> examples,
                             GroupBy group_by = GroupBy::predicted) {
  detail::require_gate(model.kind);
  const std::size_t m = model.config.classes;
  GateReport r;
  r.group_by = group_by;
  r.categories.assign(m, {});
  std::vector<double> sums(m, 0.0);
  double total = 0.0;
  for (const auto& ex : examples) {
    const FusionOutput<T> out = model.evaluate(ex.text, ex.image);
    ExampleShare s{ex.id, ex.label, predict(*out.logits), detail::mean_entry(*out.z)};
    const std::size_t key = group_by == GroupBy::predicted ? s.pred : s.gold;
    sums[key] += s.text_share;
    ++r.categories[key].count;
    total += s.text_share;
    r.examples.push_back(std::move(s));
  }
  for (std::size_t c = 0; c < m; ++c) {
    CategoryShare& cs = r.categories[c];
    if (cs.count == 0) continue;
    cs.text_pct = 100.0 * sums[c] / static_cast<double>(cs.count);
    cs.image_pct = 100.0 - cs.text_pct;
  }
  if (!examples.empty()) {
    r.overall_text_pct = 100.0 * total / static_cast<double>(examples.size());
    r.overall_image_pct = 100.0 - r.overall_text_pct;
  }
  return r;
}

// 100 - pct at 2 decimals, so a rounded pair still sums to 100.
inline double complement_pct(double pct) { return std::round((100.0 - pct) * 100.0) / 100.0; }

inline nlohmann::ordered_json gate_report_to_json(const GateReport& r, const ClassCatalog& classes) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["group_by"] = r.group_by == GroupBy::predicted ? "predicted" : "gold";
  nlohmann::ordered_json cats = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < r.categories.size(); ++c) {
    const CategoryShare& s = r.categories[c];
    nlohmann::ordered_json e{{"class", classes.name(c)}, {"count", s.count}};
    if (s.count > 0) {
      const double txt = percent_2dp(s.text_pct / 100.0);
      e["text_pct"] = txt;
      e["image_pct"] = complement_pct(txt);
    } else {
      e["text_pct"] = nullptr;
      e["image_pct"] = nullptr;
    }
    cats.push_back(e);
  }
  j["categories"] = cats;
  const double overall = percent_2dp(r.overall_text_pct / 100.0);
  j["overall"] = {{"text_pct", overall}, {"image_pct", complement_pct(overall)}};
  nlohmann::ordered_json ex = nlohmann::ordered_json::array();
  for (const auto& s : r.examples) {
    ex.push_back({{"id", s.id}, {"gold", classes.name(s.gold)}, {"pred", classes.name(s.pred)}, {"text_share", s.text_share}});
  }
  j["examples"] = ex;
  return j;
}

struct AttentionRecord {
  std::string id;
  std::size_t gold = 0;
  std::size_t pred = 0;
  Matrix<double> t2v;  // [L_t x L_v]
  Matrix<double> v2t;  // [L_v x L_t]
  std::optional<double> text_share;  // gated models only
};

template <typename T>
std::vector<AttentionRecord> dump_attention(const Model<T>& model, std::span<const Example<T>> examples) {
  if (!has_cross_attention(model.kind)) {
    fail(ErrorKind::unsupported, "attention dump is not available for model '" + model_kind_name(model.kind) +
                                     "'; supported: mm-xatt, mm-gated-xatt");
  }
  std::vector<AttentionRecord> out;
  for (const auto& ex : examples) {
    const FusionOutput<T> f = model.evaluate(ex.text, ex.image);
    AttentionRecord r{ex.id, ex.label, predict(*f.logits), f.attn_t2v->template cast<double>(),
                      f.attn_v2t->template cast<double>(), std::nullopt};
    if (f.z) r.text_share = detail::mean_entry(*f.z);
    out.push_back(std::move(r));
  }
  return out;
}

inline nlohmann::ordered_json attention_record_to_json(const AttentionRecord& r, const ClassCatalog& classes) {
  auto rows = [](const Matrix<double>& m) {
    std::vector<std::vector<double>> v(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) v[i].assign(m.row(i).begin(), m.row(i).end());
    return v;
  };
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["id"] = r.id;
  j["gold"] = classes.name(r.gold);
  j["pred"] = classes.name(r.pred);
  j["t2v"] = rows(r.t2v);
  j["v2t"] = rows(r.v2t);
  if (r.text_share) {
    const double txt = percent_2dp(*r.text_share);
    j["text_pct"] = txt;
    j["image_pct"] = complement_pct(txt);
  } else {
    j["text_pct"] = nullptr;
    j["image_pct"] = nullptr;
  }
  return j;
}

// "Txt: 65% - Img: 35%"
inline std::string share_caption(double text_share) {
  const long txt = std::lround(100.0 * text_share);
  return "Txt: " + std::to_string(txt) + "% - Img: " + std::to_string(100 - txt) + "%";
}

}  // namespace mmfuse
