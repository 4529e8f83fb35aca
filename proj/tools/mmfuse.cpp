#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmfuse.hpp"

namespace {

using namespace mmfuse;

struct Flags {
  std::string config;
  std::string model;
  std::string regime;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string precision;
  bool force = false;
  std::string data;
  std::string checkpoint;
  std::string counts;
  std::string group_by = "predicted";
  std::size_t limit = 0;
};

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

RunConfig resolve_run_config(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
  if (!f.model.empty()) cfg.model = parse_model_kind(f.model);
  if (!f.regime.empty()) cfg.regime = parse_regime(f.regime);
  if (!f.data.empty()) cfg.dataset = f.data;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.precision.empty()) cfg.train.precision = parse_precision(f.precision);
  if (f.seed) cfg.train.seeds = {*f.seed};
  if (!f.seeds.empty()) cfg.train.seeds = f.seeds;
  return cfg;
}

SynthConfig resolve_synth_config(const Flags& f) {
  SynthConfig cfg;
  if (!f.config.empty()) {
    const nlohmann::json j = RunConfig::read_json(f.config);
    config_io::from_json(j.contains("synth") ? j["synth"] : j, cfg);
  }
  if (f.seed) cfg.seed = *f.seed;
  return cfg;
}

Regime regime_or_default(const Flags& f) { return f.regime.empty() ? Regime::all : parse_regime(f.regime); }

GroupBy parse_group_by(const std::string& s) {
  if (s == "predicted") return GroupBy::predicted;
  if (s == "gold") return GroupBy::gold;
  fail(ErrorKind::invalid_argument, "unknown --group-by '" + s + "' (expected predicted or gold)");
}

std::string out_or_default(const Flags& f) { return f.out.empty() ? std::string("out") : f.out; }

std::string required(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorKind::invalid_argument, std::string(flag) + " is required");
  return value;
}

void run_analysis(const Flags& f, Analysis which) {
  AnalyzeOptions opt;
  opt.regime = regime_or_default(f);
  opt.group_by = parse_group_by(f.group_by);
  opt.limit = f.limit;
  const auto path = cmd_analyze(required(f.checkpoint, "--checkpoint"), required(f.data, "--data"), which, opt,
                                out_or_default(f));
  std::cout << path.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal text/image fusion classifiers: training, evaluation and analysis"};
  app.set_version_flag("--version", std::string(MMFUSE_VERSION));
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--out", f.out, "output directory");
  };
  auto data_opt = [&](CLI::App* sub) { sub->add_option("--data", f.data, "MMFV1 dataset directory"); };
  auto regime_opt = [&](CLI::App* sub) {
    sub->add_option("--regime", f.regime, "all, paired-all or paired-train");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic MMFV1 dataset");
  common(synth);
  synth->add_option("--seed", f.seed, "generator seed");
  synth->add_flag("--force", f.force, "overwrite a non-empty output directory");

  auto* validate = app.add_subcommand("ingest-validate", "load and validate a dataset");
  validate->add_option("--data", f.data, "MMFV1 dataset directory")->required();

  auto* train = app.add_subcommand("train", "train a model over one or more seeds");
  common(train);
  data_opt(train);
  regime_opt(train);
  train->add_option("--model", f.model, "model kind");
  auto* seed_opt = train->add_option("--seed", f.seed, "single seed");
  train->add_option("--seeds", f.seeds, "comma-separated seeds")->delimiter(',')->excludes(seed_opt);
  train->add_option("--precision", f.precision, "single or double");

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the test split");
  common(evaluate);
  data_opt(evaluate);
  regime_opt(evaluate);
  evaluate->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();

  auto add_analysis = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    common(sub);
    data_opt(sub);
    regime_opt(sub);
    sub->add_option("--checkpoint", f.checkpoint, "checkpoint file")->required();
    return sub;
  };
  auto* gate = add_analysis("analyze-gate", "per-category modality contribution of a gated model");
  gate->add_option("--group-by", f.group_by, "predicted or gold");
  auto* attention = add_analysis("dump-attention", "write cross-attention weights as JSON lines");
  attention->add_option("--limit", f.limit, "maximum number of test examples (0 = all)");
  auto* errors = add_analysis("errors", "most confused class pairs with example ids");

  auto* baseline = app.add_subcommand("baseline", "majority-class baseline");
  common(baseline);
  data_opt(baseline);
  regime_opt(baseline);
  baseline->add_option("--counts", f.counts, "per-class count fixture (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) {
      const std::string out = out_or_default(f);
      const Dataset ds = cmd_synth(resolve_synth_config(f), out, f.force);
      std::cout << out << ": " << ds.records.size() << " records\n";
    } else if (validate->parsed()) {
      print_json(cmd_ingest_validate(f.data));
    } else if (train->parsed()) {
      print_json(cmd_train(resolve_run_config(f)).metrics["summary"]);
    } else if (evaluate->parsed()) {
      const auto m = cmd_evaluate(f.checkpoint, required(f.data, "--data"), regime_or_default(f), out_or_default(f));
      print_json(summary_to_json(summarize(std::vector<Metrics>{m})));
    } else if (gate->parsed()) {
      run_analysis(f, Analysis::gate);
    } else if (attention->parsed()) {
      run_analysis(f, Analysis::attention);
    } else if (errors->parsed()) {
      run_analysis(f, Analysis::errors);
    } else if (baseline->parsed()) {
      Metrics m;
      if (!f.counts.empty()) {
        m = cmd_baseline_counts(f.counts, out_or_default(f));
      } else {
        m = cmd_baseline_dataset(required(f.data, "--data or --counts"), regime_or_default(f), out_or_default(f));
      }
      std::cout << "macro F1 " << percent_2dp(m.macro_f1) << "  P " << percent_2dp(m.macro_precision) << "  R "
                << percent_2dp(m.macro_recall) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << error_kind_name(e.kind()) << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
