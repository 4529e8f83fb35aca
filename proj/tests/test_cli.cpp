#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace mmfuse;
using testing_support::fixture;
using testing_support::scratch_dir;
namespace fs = std::filesystem;

namespace {

SynthConfig tiny_synth(double missing = 0.0) {
  SynthConfig c;
  c.classes = 3;
  c.n_train = 90;
  c.n_dev = 30;
  c.n_test = 30;
  c.d_t = c.d_v = 6;
  c.granularity = Granularity::sequence;
  c.text_rows = 3;
  c.image_rows = 2;
  c.missing_image_rate = missing;
  return c;
}

RunConfig tiny_run(const fs::path& data, const fs::path& out, ModelKind kind) {
  RunConfig r;
  r.model = kind;
  r.dataset = data.string();
  r.out = out.string();
  r.train.max_epochs = 3;
  r.train.seeds = {1, 2};
  r.model_config.d = 8;
  r.model_config.d_proj = 8;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code;
  std::string output;
};

// Runs the installed binary with stderr folded into the captured output.
CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MMFUSE_CLI + "\" " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class Workspace : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = scratch_dir("cli_workspace");
    cmd_synth(tiny_synth(0.3), root_ / "data", false);
  }
  static fs::path data() { return root_ / "data"; }
  static inline fs::path root_;
};

}  // namespace

TEST_F(Workspace, SynthRefusesNonEmptyOutput) {
  EXPECT_ERROR_KIND(cmd_synth(tiny_synth(), data(), false), ErrorKind::invalid_argument);
  const fs::path again = root_ / "again";
  cmd_synth(tiny_synth(0.3), again, false);
  EXPECT_NO_THROW(cmd_synth(tiny_synth(0.3), again, true));
  EXPECT_EQ(slurp(again / "features.bin"), slurp(data() / "features.bin"));
  EXPECT_TRUE(fs::exists(again / "synth_config.json"));
}

TEST_F(Workspace, IngestValidateSummary) {
  const auto j = cmd_ingest_validate(data());
  EXPECT_EQ(j["splits"]["train"]["records"], 90);
  EXPECT_LT(j["splits"]["train"]["paired"].get<int>(), 90);
  EXPECT_EQ(j["granularity"], "sequence");
  EXPECT_EQ(j["classes"].size(), 3u);
}

TEST_F(Workspace, TrainWritesArtifactsAndIsReproducible) {
  const std::string before = slurp(data() / "features.bin") + slurp(data() / "manifest.jsonl");
  const fs::path a = root_ / "run_a", b = root_ / "run_b";
  const TrainReport ra = cmd_train(tiny_run(data(), a, ModelKind::mm_gated_xatt));
  cmd_train(tiny_run(data(), b, ModelKind::mm_gated_xatt));
  EXPECT_EQ(slurp(a / "metrics.json"), slurp(b / "metrics.json"));
  EXPECT_EQ(slurp(a / "seed_1" / "checkpoint.mmck"), slurp(b / "seed_1" / "checkpoint.mmck"));
  EXPECT_EQ(before, slurp(data() / "features.bin") + slurp(data() / "manifest.jsonl"));

  ASSERT_EQ(ra.checkpoints.size(), 2u);
  for (const char* f : {"metrics.json", "run_manifest.json", "seed_1/history.json", "seed_2/metrics.json"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(a / "run_manifest.json"));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["seed_metrics"].size(), 2u);
  EXPECT_EQ(manifest["config"]["model"], "mm-gated-xatt");
  EXPECT_EQ(manifest["artifacts"].size(), 5u);

  // Evaluating the stored checkpoint reproduces the training-time test metrics.
  const Metrics m = cmd_evaluate(ra.checkpoints[0], data(), Regime::all, root_ / "eval");
  EXPECT_EQ(m.macro_f1, ra.metrics["seeds"][0]["macro_f1"].get<double>());
  const auto per_seed = nlohmann::json::parse(slurp(a / "seed_1" / "metrics.json"));
  EXPECT_EQ(per_seed["macro"]["f1"].get<double>(), m.macro_f1);
}

TEST_F(Workspace, MajorityRunMatchesBaseline) {
  const TrainReport r = cmd_train(tiny_run(data(), root_ / "majority", ModelKind::majority));
  const Metrics base = cmd_baseline_dataset(data(), Regime::all, root_ / "baseline");
  EXPECT_EQ(r.metrics["summary"]["macro_f1"]["mean"].get<double>(), base.macro_f1);
  EXPECT_EQ(r.metrics["summary"]["macro_f1"]["std"].get<double>(), 0.0);
  EXPECT_NEAR(base.macro_recall, 1.0 / 3.0, 1e-15);
}

TEST_F(Workspace, PairedEvaluationOfFullyPairedData) {
  const fs::path full = root_ / "full";
  cmd_synth(tiny_synth(0.0), full, false);
  const TrainReport r = cmd_train(tiny_run(full, root_ / "full_run", ModelKind::mm_gate));
  const Metrics all = cmd_evaluate(r.checkpoints[0], full, Regime::all, root_ / "e1");
  const Metrics paired = cmd_evaluate(r.checkpoints[0], full, Regime::paired_all, root_ / "e2");
  EXPECT_EQ(all.macro_f1, paired.macro_f1);
  EXPECT_EQ(all.confusion, paired.confusion);
}

TEST_F(Workspace, PairedRegimeWithoutPairsFails) {
  const fs::path bare = root_ / "bare";
  cmd_synth(tiny_synth(1.0), bare, false);
  EXPECT_ERROR_KIND(cmd_train(tiny_run(bare, root_ / "bare_run", ModelKind::text)), ErrorKind::empty_split);
  RunConfig cfg = tiny_run(bare, root_ / "bare_run2", ModelKind::text);
  cfg.regime = Regime::paired_all;
  EXPECT_ERROR_KIND(cmd_train(cfg), ErrorKind::empty_split);
}

TEST_F(Workspace, Analyses) {
  const TrainReport gated = cmd_train(tiny_run(data(), root_ / "an_gated", ModelKind::mm_gated_xatt));
  const fs::path ck = gated.checkpoints[0];

  const auto gate = nlohmann::json::parse(slurp(cmd_analyze(ck, data(), Analysis::gate, {}, root_ / "an1")));
  EXPECT_EQ(gate["group_by"], "predicted");
  EXPECT_EQ(gate["examples"].size(), 30u);
  EXPECT_NEAR(gate["overall"]["text_pct"].get<double>() + gate["overall"]["image_pct"].get<double>(), 100.0, 1e-9);

  AnalyzeOptions lim;
  lim.limit = 4;
  const std::string lines = slurp(cmd_analyze(ck, data(), Analysis::attention, lim, root_ / "an2"));
  std::istringstream ls(lines);
  std::size_t n = 0;
  for (std::string line; std::getline(ls, line); ++n) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["t2v"].size(), 3u);
    EXPECT_EQ(j["t2v"][0].size(), 2u);
  }
  EXPECT_EQ(n, 4u);

  const auto errors = nlohmann::json::parse(slurp(cmd_analyze(ck, data(), Analysis::errors, {}, root_ / "an3")));
  const Metrics m = cmd_evaluate(ck, data(), Regime::all, root_ / "an3eval");
  std::size_t wrong = 0, in_pairs = 0;
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t p = 0; p < 3; ++p)
      if (g != p) wrong += m.confusion[g][p];
  for (const auto& pair : errors["pairs"]) {
    in_pairs += pair["count"].get<std::size_t>();
    EXPECT_EQ(pair["ids"].size(), pair["count"].get<std::size_t>());
  }
  EXPECT_EQ(errors["total_errors"].get<std::size_t>(), wrong);
  EXPECT_EQ(in_pairs, wrong);

  const TrainReport xatt = cmd_train(tiny_run(data(), root_ / "an_xatt", ModelKind::mm_xatt));
  EXPECT_ERROR_KIND(cmd_analyze(xatt.checkpoints[0], data(), Analysis::gate, {}, root_ / "an4"), ErrorKind::unsupported);
  EXPECT_FALSE(fs::exists(root_ / "an4" / "gate_report.json"));
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c;
  c.model = ModelKind::concat;
  c.dataset = "somewhere";
  c.regime = Regime::paired_train;
  c.train.learning_rate = 0.003;
  c.train.seeds = {7, 8};
  c.model_config.d = 64;
  const RunConfig back = RunConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_ERROR_KIND(RunConfig::from_json(nlohmann::json{{"schema_version", 99}}), ErrorKind::invalid_argument);
  EXPECT_ERROR_KIND(RunConfig::from_json(nlohmann::json{{"model", "nope"}}), ErrorKind::invalid_argument);
  EXPECT_ERROR_KIND(RunConfig::from_json(nlohmann::json{{"train", {{"learning_rate", "fast"}}}}),
                    ErrorKind::invalid_argument);
}

TEST(Baseline, CountsFixture) {
  const Metrics m = cmd_baseline_counts(fixture("poi_counts.json"), scratch_dir("baseline_counts"));
  EXPECT_EQ(percent_2dp(m.macro_f1), 5.3);
  EXPECT_EQ(percent_2dp(m.macro_precision), 3.36);
  EXPECT_EQ(percent_2dp(m.macro_recall), 12.5);
}

TEST(Binary, VersionAndHelp) {
  const auto v = run_cli("--version");
  EXPECT_EQ(v.exit_code, 0);
  EXPECT_NE(v.output.find(MMFUSE_VERSION), std::string::npos);
  EXPECT_EQ(run_cli("--help").exit_code, 0);
}

TEST(Binary, ErrorsAreOneLineWithKind) {
  const fs::path dir = scratch_dir("binary_errors");
  std::ofstream(dir / "header.json") << "{\"format\": \"NOPE\"}";
  std::ofstream(dir / "manifest.jsonl");
  std::ofstream(dir / "features.bin");
  const auto r = run_cli("ingest-validate --data \"" + dir.string() + "\"");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(r.output.rfind("error: format_magic: ", 0), 0u) << r.output;
  EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1);

  const auto missing = run_cli("train --data \"" + (dir / "absent").string() + "\" --out \"" + dir.string() + "/o\"");
  EXPECT_EQ(missing.exit_code, 2);
  EXPECT_EQ(missing.output.rfind("error: io: ", 0), 0u) << missing.output;

  const auto bad_regime = run_cli("baseline --data \"" + dir.string() + "\" --regime sometimes");
  EXPECT_EQ(bad_regime.exit_code, 2);
  EXPECT_NE(bad_regime.output.find("invalid_argument"), std::string::npos) << bad_regime.output;

  EXPECT_NE(run_cli("no-such-command").exit_code, 0);
}

TEST(Binary, SynthTrainEvaluate) {
  const fs::path dir = scratch_dir("binary_flow");
  const fs::path cfg = dir / "synth.json";
  std::ofstream(cfg) << nlohmann::json{{"synth", config_io::to_json(tiny_synth(0.2))}}.dump();
  ASSERT_EQ(run_cli("synth --config \"" + cfg.string() + "\" --out \"" + (dir / "d").string() + "\"").exit_code, 0);
  EXPECT_NE(run_cli("synth --config \"" + cfg.string() + "\" --out \"" + (dir / "d").string() + "\"").exit_code, 0);
  const auto train = run_cli("train --data \"" + (dir / "d").string() + "\" --model mm-gate --seed 3 --out \"" +
                             (dir / "run").string() + "\"");
  ASSERT_EQ(train.exit_code, 0) << train.output;
  EXPECT_TRUE(fs::exists(dir / "run" / "seed_3" / "checkpoint.mmck"));
  const auto eval = run_cli("evaluate --checkpoint \"" + (dir / "run" / "seed_3" / "checkpoint.mmck").string() +
                            "\" --data \"" + (dir / "d").string() + "\" --out \"" + (dir / "eval").string() + "\"");
  ASSERT_EQ(eval.exit_code, 0) << eval.output;
  const auto trained = nlohmann::json::parse(slurp(dir / "run" / "seed_3" / "metrics.json"));
  const auto evaluated = nlohmann::json::parse(slurp(dir / "eval" / "metrics.json"));
  EXPECT_EQ(trained["macro"], evaluated["macro"]);
  const auto att = run_cli("dump-attention --checkpoint \"" + (dir / "run" / "seed_3" / "checkpoint.mmck").string() +
                           "\" --data \"" + (dir / "d").string() + "\" --out \"" + (dir / "att").string() + "\"");
  EXPECT_EQ(att.exit_code, 2);
  EXPECT_EQ(att.output.rfind("error: unsupported: ", 0), 0u) << att.output;
}
