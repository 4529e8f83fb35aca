#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmfuse/analysis.hpp"
#include "mmfuse/catalog.hpp"
#include "mmfuse/checkpoint.hpp"
#include "mmfuse/dataset.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/log.hpp"
#include "mmfuse/metrics.hpp"
#include "mmfuse/preprocess.hpp"
#include "mmfuse/synth.hpp"
#include "mmfuse/train.hpp"
#include "mmfuse/train_config.hpp"

#ifndef MMFUSE_VERSION
#define MMFUSE_VERSION "0.0.0"
#endif

namespace mmfuse {

inline constexpr int kConfigSchemaVersion = 1;
namespace fs = std::filesystem;

// Fixed artifact names under --out.
namespace artifacts {
inline const char* metrics = "metrics.json";
inline const char* gate_report = "gate_report.json";
inline const char* attention = "attention.jsonl";
inline const char* errors = "errors.json";
inline const char* manifest = "run_manifest.json";
inline const char* checkpoint = "checkpoint.mmck";
inline const char* history = "history.json";
}  // namespace artifacts

struct RunConfig {
  ModelKind model = ModelKind::mm_gated_xatt;
  std::string dataset;
  Regime regime = Regime::all;
  TrainConfig train;
  ModelConfig model_config;
  std::string out = "out";

  nlohmann::ordered_json to_json() const {
    return {{"schema_version", kConfigSchemaVersion},
            {"model", model_kind_name(model)},
            {"dataset", dataset},
            {"regime", regime_name(regime)},
            {"out", out},
            {"train", config_io::to_json(train)},
            {"model_config", config_io::to_json(model_config)}};
  }

  static RunConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorKind::invalid_argument, "config must be a JSON object");
    const int version = j.value("schema_version", kConfigSchemaVersion);
    if (version != kConfigSchemaVersion) {
      fail(ErrorKind::invalid_argument, "unsupported config schema_version " + std::to_string(version));
    }
    RunConfig c;
    try {
      if (j.contains("model")) c.model = parse_model_kind(j["model"].get<std::string>());
      config_io::read_opt(j, "dataset", c.dataset);
      if (j.contains("regime")) c.regime = parse_regime(j["regime"].get<std::string>());
      config_io::read_opt(j, "out", c.out);
      if (j.contains("train")) config_io::from_json(j["train"], c.train);
      if (j.contains("model_config")) config_io::from_json(j["model_config"], c.model_config);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::invalid_argument, std::string("malformed config: ") + e.what());
    }
    return c;
  }

  static RunConfig load(const fs::path& path) {
    return from_json(read_json(path));
  }

  static nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open config '" + path.string() + "'");
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::invalid_argument, "config '" + path.string() + "' is not valid JSON: " + e.what());
    }
  }

  void validate() const {
    train.validate();
    if (dataset.empty()) fail(ErrorKind::invalid_argument, "no dataset path given");
    if (!fs::exists(dataset)) fail(ErrorKind::io, "dataset path '" + dataset + "' does not exist");
  }
};

namespace detail {

// Writes to a sibling temp file and renames it into place.
inline void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) fail(ErrorKind::io, "short write for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_atomic(path, j.dump(2) + "\n"); }

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string file_hash(const fs::path& path) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(read_file(path))));
  return buf;
}

inline std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

inline nlohmann::ordered_json history_to_json(const std::vector<EpochLog>& history) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : history) {
    arr.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}, {"improved", e.improved}});
  }
  return arr;
}

// Test split as the regime evaluates it, with missing images imputed from `avg`.
inline Dataset evaluation_view(const Dataset& raw, Regime regime, const std::optional<Matrix<float>>& avg) {
  std::set<Split> filtered;
  if (regime == Regime::paired_all) filtered = {Split::test};
  Dataset ds = filter_paired(raw, filtered);
  std::vector<FeatureRecord> test;
  for (auto& r : ds.records)
    if (r.split == Split::test) test.push_back(std::move(r));
  ds.records = std::move(test);
  bool missing = false;
  for (const auto& r : ds.records) missing = missing || !r.has_image;
  if (missing) {
    if (!avg) fail(ErrorKind::invalid_argument, "checkpoint has no average image but test records lack images");
    ds = impute_missing(std::move(ds), *avg);
  }
  return ds;
}

inline void require_same_classes(const ClassCatalog& a, const ClassCatalog& b) {
  if (!(a == b)) fail(ErrorKind::invalid_argument, "checkpoint and dataset class catalogs differ");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth

inline Dataset cmd_synth(const SynthConfig& cfg, const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_empty(out) && !force) {
    fail(ErrorKind::invalid_argument, "output directory '" + out.string() + "' is not empty (use --force)");
  }
  Dataset ds = synth_generate(cfg);
  write_dataset(out, ds);
  nlohmann::ordered_json echo{{"schema_version", kConfigSchemaVersion}, {"synth", config_io::to_json(cfg)}};
  detail::write_json(out / "synth_config.json", echo);
  return ds;
}

// ---------------------------------------------------------------------------
// ingest-validate

inline nlohmann::ordered_json cmd_ingest_validate(const fs::path& dir) {
  const Dataset ds = load_dataset(dir);
  validate_dataset(ds);
  nlohmann::ordered_json j;
  j["format"] = kDatasetFormat;
  j["d_t"] = ds.header.d_t;
  j["d_v"] = ds.header.d_v;
  j["granularity"] = granularity_name(ds.header.granularity);
  j["classes"] = ds.header.classes.names();
  for (Split s : kAllSplits) {
    std::size_t paired = 0;
    for (const FeatureRecord* r : ds.split(s)) paired += r->has_image;
    j["splits"][split_name(s)] = {{"records", ds.count(s)}, {"paired", paired}, {"label_counts", ds.label_counts(s)}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// train

struct TrainReport {
  nlohmann::ordered_json metrics;  // contents of <out>/metrics.json
  std::vector<fs::path> checkpoints;
};

namespace detail {

template <typename T>
TrainReport train_with_precision(const RunConfig& cfg, const Dataset& prepared) {
  const fs::path out(cfg.out);
  const MultiSeedResult<T> result = run_seeds<T>(cfg.model, prepared, cfg.model_config, cfg.train, cfg.train.seeds);

  TrainReport report;
  nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
  for (const auto& run : result.runs) {
    Checkpoint<T> ck = run.training.checkpoint;
    ck.regime = regime_name(cfg.regime);
    const fs::path dir = out / seed_dir_name(run.seed);
    fs::create_directories(dir);
    save_checkpoint(dir / artifacts::checkpoint, ck);
    write_json(dir / artifacts::metrics, metrics_to_json(run.test, prepared.header.classes));
    write_json(dir / artifacts::history, history_to_json(run.training.history));
    report.checkpoints.push_back(dir / artifacts::checkpoint);
    nlohmann::ordered_json s{{"seed", run.seed},
                             {"best_epoch", ck.best_epoch},
                             {"epochs_run", run.training.history.size()},
                             {"macro_f1", run.test.macro_f1},
                             {"macro_precision", run.test.macro_precision},
                             {"macro_recall", run.test.macro_recall},
                             {"metrics_file", (fs::path(seed_dir_name(run.seed)) / artifacts::metrics).string()}};
    s["best_dev_loss"] = ck.best_dev_loss ? nlohmann::ordered_json(*ck.best_dev_loss) : nlohmann::ordered_json(nullptr);
    per_seed.push_back(s);
  }
  nlohmann::ordered_json m;
  m["schema_version"] = kReportSchemaVersion;
  m["model"] = model_kind_name(cfg.model);
  m["regime"] = regime_name(cfg.regime);
  m["split"] = "test";
  m["summary"] = summary_to_json(result.summary);
  m["seeds"] = per_seed;
  write_json(out / artifacts::metrics, m);
  report.metrics = m;
  return report;
}

}  // namespace detail

/**
 * Applies the regime, recomputes the average image from the active train
 * split, imputes, trains once per seed and writes per-seed checkpoints and
 * metrics plus an aggregate metrics.json and run_manifest.json.
 */
inline TrainReport cmd_train(const RunConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const Dataset raw = load_dataset(cfg.dataset);
  const Dataset prepared = prepare_dataset(raw, cfg.regime);
  log::info("regime " + regime_name(cfg.regime) + ": average image recomputed from " +
            std::to_string(prepared.count(Split::train)) + " active train records");

  TrainReport report = cfg.train.precision == Precision::single ? detail::train_with_precision<float>(cfg, prepared)
                                                                 : detail::train_with_precision<double>(cfg, prepared);

  const fs::path out(cfg.out);
  nlohmann::ordered_json manifest;
  manifest["schema_version"] = kReportSchemaVersion;
  manifest["tool_version"] = MMFUSE_VERSION;
  manifest["command"] = "train";
  manifest["config"] = cfg.to_json();
  nlohmann::ordered_json hashes = nlohmann::ordered_json::array();
  for (const char* name : {"header.json", "manifest.jsonl", "features.bin"}) {
    hashes.push_back({{"path", (fs::path(cfg.dataset) / name).string()},
                      {"fnv1a64", detail::file_hash(fs::path(cfg.dataset) / name)}});
  }
  for (const auto& ck : report.checkpoints) {
    hashes.push_back({{"path", fs::relative(ck, out).string()}, {"fnv1a64", detail::file_hash(ck)}});
  }
  manifest["artifacts"] = hashes;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& s : report.metrics["seeds"]) files.push_back(s["metrics_file"]);
  manifest["seed_metrics"] = files;
  manifest["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  detail::write_json(out / artifacts::manifest, manifest);
  return report;
}

// ---------------------------------------------------------------------------
// evaluate

namespace detail {
template <typename T>
Metrics evaluate_with_precision(const fs::path& checkpoint, const Dataset& raw, Regime regime) {
  const Checkpoint<T> ck = load_checkpoint<T>(checkpoint);
  require_same_classes(ck.classes, raw.header.classes);
  const Dataset view = evaluation_view(raw, regime, ck.average_image);
  const auto test = make_examples<T>(view, Split::test);
  if (test.empty()) fail(ErrorKind::empty_split, "test split is empty");
  return evaluate_model<T>(ck.model, test);
}
}  // namespace detail

// Metrics of a checkpoint on the test split as seen under `regime`.
inline Metrics cmd_evaluate(const fs::path& checkpoint, const fs::path& dataset, Regime regime, const fs::path& out) {
  const Dataset raw = load_dataset(dataset);
  const Metrics m = checkpoint_precision(checkpoint) == Precision::single
                        ? detail::evaluate_with_precision<float>(checkpoint, raw, regime)
                        : detail::evaluate_with_precision<double>(checkpoint, raw, regime);
  detail::write_json(out / artifacts::metrics, metrics_to_json(m, raw.header.classes));
  return m;
}

// ---------------------------------------------------------------------------
// baseline

// Majority class of the train counts, scored on the test counts of a fixture.
inline Metrics majority_from_counts(const CountsFixture& f) {
  const std::size_t cls = majority_class(f.at(Split::train).tweets);
  std::vector<std::size_t> golds;
  const auto& test = f.at(Split::test).tweets;
  for (std::size_t c = 0; c < test.size(); ++c) golds.insert(golds.end(), test[c], c);
  const std::vector<std::size_t> preds(golds.size(), cls);
  return compute_metrics(preds, golds, f.classes.size());
}

inline Metrics cmd_baseline_counts(const fs::path& counts, const fs::path& out) {
  const CountsFixture f = load_counts_fixture(counts.string());
  const Metrics m = majority_from_counts(f);
  detail::write_json(out / artifacts::metrics, metrics_to_json(m, f.classes));
  return m;
}

inline Metrics cmd_baseline_dataset(const fs::path& dataset, Regime regime, const fs::path& out) {
  const Dataset raw = load_dataset(dataset);
  const Dataset ds = filter_paired(raw, regime_filtered_splits(regime));
  const auto preds = majority_baseline(ds.label_counts(Split::train), ds.count(Split::test));
  std::vector<std::size_t> golds;
  for (const FeatureRecord* r : ds.split(Split::test)) golds.push_back(r->label);
  const Metrics m = compute_metrics(preds, golds, ds.header.classes.size());
  detail::write_json(out / artifacts::metrics, metrics_to_json(m, ds.header.classes));
  return m;
}

// ---------------------------------------------------------------------------
// analyses

enum class Analysis { gate, attention, errors };

inline std::string analysis_name(Analysis a) {
  switch (a) {
    case Analysis::gate: return "gate";
    case Analysis::attention: return "attention";
    case Analysis::errors: return "errors";
  }
  return "unknown";
}

struct AnalyzeOptions {
  Regime regime = Regime::all;
  GroupBy group_by = GroupBy::predicted;
  std::size_t limit = 0;  // attention dump: max examples, 0 = all
};

namespace detail {

inline void require_supported(ModelKind kind, Analysis a) {
  const bool ok = a == Analysis::errors ? kind != ModelKind::majority
                  : a == Analysis::gate ? has_gate(kind)
                                        : has_cross_attention(kind);
  if (!ok) {
    fail(ErrorKind::unsupported,
         "analysis '" + analysis_name(a) + "' is not supported for model '" + model_kind_name(kind) +
             "'; supported pairs: gate with {mm-gate, mm-gated-xatt}, attention with {mm-xatt, mm-gated-xatt}, "
             "errors with every trained model");
  }
}

template <typename T>
fs::path analyze_with_precision(const fs::path& checkpoint, const Dataset& raw, Analysis which,
                                const AnalyzeOptions& opt, const fs::path& out) {
  const Checkpoint<T> ck = load_checkpoint<T>(checkpoint);
  require_supported(ck.model.kind, which);
  require_same_classes(ck.classes, raw.header.classes);
  const Dataset view = evaluation_view(raw, opt.regime, ck.average_image);
  auto examples = make_examples<T>(view, Split::test);

  switch (which) {
    case Analysis::gate: {
      const GateReport r = gate_contribution<T>(ck.model, examples, opt.group_by);
      write_json(out / artifacts::gate_report, gate_report_to_json(r, ck.classes));
      return out / artifacts::gate_report;
    }
    case Analysis::attention: {
      if (opt.limit > 0 && examples.size() > opt.limit) examples.resize(opt.limit);
      std::string lines;
      for (const auto& rec : dump_attention<T>(ck.model, examples)) {
        lines += attention_record_to_json(rec, ck.classes).dump() + "\n";
      }
      write_atomic(out / artifacts::attention, lines);
      return out / artifacts::attention;
    }
    case Analysis::errors: {
      std::vector<std::size_t> golds;
      std::vector<std::string> ids;
      for (const auto& ex : examples) {
        golds.push_back(ex.label);
        ids.push_back(ex.id);
      }
      const auto preds = predict_all<T>(ck.model, examples);
      const Metrics m = compute_metrics(preds, golds, ck.classes.size());
      std::size_t wrong = 0;
      for (std::size_t i = 0; i < preds.size(); ++i) wrong += preds[i] != golds[i];
      write_json(out / artifacts::errors, error_report_to_json(error_report(m, preds, golds, ids), ck.classes, wrong));
      return out / artifacts::errors;
    }
  }
  return {};
}

}  // namespace detail

inline fs::path cmd_analyze(const fs::path& checkpoint, const fs::path& dataset, Analysis which,
                            const AnalyzeOptions& opt, const fs::path& out) {
  const Dataset raw = load_dataset(dataset);
  return checkpoint_precision(checkpoint) == Precision::single
             ? detail::analyze_with_precision<float>(checkpoint, raw, which, opt, out)
             : detail::analyze_with_precision<double>(checkpoint, raw, which, opt, out);
}

}  // namespace mmfuse
