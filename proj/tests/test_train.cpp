#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace mmfuse;
using testing_support::scratch_dir;

namespace {

ParamSet<double> scalar_set(double p) {
  ParamSet<double> s;
  s.add("p", Matrix<double>(1, 1, p));
  return s;
}

Dataset prepared_synth(std::size_t n_train, double rho = 0.5, std::uint64_t seed = 1) {
  SynthConfig c;
  c.n_train = n_train;
  c.n_dev = n_train / 4;
  c.n_test = n_train / 4;
  c.rho = rho;
  c.d_t = c.d_v = 8;
  c.seed = seed;
  return prepare_dataset(synth_generate(c), Regime::all);
}

ModelConfig small_model() {
  ModelConfig m;
  m.d = 8;
  m.d_proj = 8;
  return m;
}

// Train and dev share features but have opposite labels, so fitting train
// strictly raises the dev loss.
Dataset flipped_dev() {
  Dataset ds;
  ds.header = DatasetHeader{2, 1, Granularity::pooled, ClassCatalog::numbered(2)};
  const Matrix<float> img{{0.0f}};
  for (int i = 0; i < 16; ++i) {
    const std::size_t y = i % 2;
    const float s = y ? -1.0f : 1.0f;
    for (Split split : {Split::train, Split::dev, Split::test}) {
      FeatureRecord r;
      r.id = split_name(split) + std::to_string(i);
      r.split = split;
      r.label = split == Split::dev ? 1 - y : y;
      r.text = Matrix<float>{{s, 0.5f * s}};
      r.has_image = true;
      r.image = img;
      ds.records.push_back(r);
    }
  }
  return prepare_dataset(ds, Regime::all);
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  auto p = scalar_set(1.25);
  auto state = AdamState<double>::for_params(p);
  adam_step(p, p.zeros_like(), state, 0.1, AdamConfig{});
  EXPECT_EQ(p.at("p")[0], 1.25);
  EXPECT_EQ(state.t, 1u);
}

TEST(Adam, FirstStepIsLearningRate) {
  auto p = scalar_set(0.0);
  auto state = AdamState<double>::for_params(p);
  adam_step(p, scalar_set(1.0), state, 0.1, AdamConfig{});
  EXPECT_NEAR(p.at("p")[0], -0.1 / (1.0 + 1e-8), 1e-12);
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  std::mt19937_64 gen(1);
  ParamSet<double> p;
  p.add("w", testing_support::random_matrix(3, 2, gen));
  const auto before = p;
  auto state = AdamState<double>::for_params(p);
  ParamSet<double> g;
  g.add("w", testing_support::random_matrix(3, 2, gen));
  adam_step(p, g, state, 0.0, AdamConfig{});
  EXPECT_EQ(p, before);
}

TEST(Adam, ConstantGradientMatchesRecurrenceOracle) {
  const double lr = 0.01, g = -0.37;
  auto p = scalar_set(2.0);
  auto state = AdamState<double>::for_params(p);
  double x = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 500; ++t) {
    const double before = p.at("p")[0];
    adam_step(p, scalar_set(g), state, lr, AdamConfig{});
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= lr * mh / (std::sqrt(vh) + 1e-8);
    ASSERT_NEAR(p.at("p")[0], x, 1e-12) << t;
    if (t > 100) {
      EXPECT_NEAR(p.at("p")[0] - before, lr, 1e-6);  // -lr * sign(g)
    }
  }
}

TEST(Adam, NonFiniteGradientAbortsWithName) {
  auto p = scalar_set(1.0);
  auto state = AdamState<double>::for_params(p);
  try {
    adam_step(p, scalar_set(std::nan("")), state, 0.1, AdamConfig{});
    FAIL() << "expected non_finite";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_finite);
    EXPECT_NE(std::string(e.what()).find("'p'"), std::string::npos) << e.what();
  }
  EXPECT_EQ(p.at("p")[0], 1.0);
  EXPECT_EQ(state.t, 0u);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.patience, 5u);
  EXPECT_EQ(c.max_epochs, 100u);
  EXPECT_EQ(c.seeds.size(), 3u);
  c.patience = 0;
  EXPECT_ERROR_KIND(c.validate(), ErrorKind::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_ERROR_KIND(c.validate(), ErrorKind::invalid_argument);
}

TEST(TrainModel, StopsWhenDevLossRises) {
  const Dataset ds = flipped_dev();
  TrainConfig tc;
  tc.patience = 1;
  tc.learning_rate = 0.05;
  tc.batch_size = 4;
  const auto r = train_model<double>(ModelKind::text, ds, small_model(), tc, 3);
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_LT(r.history[0].dev_loss, r.history[1].dev_loss);
  EXPECT_EQ(r.checkpoint.best_epoch, 1u);

  tc.max_epochs = 1;
  const auto one = train_model<double>(ModelKind::text, ds, small_model(), tc, 3);
  EXPECT_EQ(r.checkpoint.model.params, one.checkpoint.model.params);
  EXPECT_EQ(*r.checkpoint.best_dev_loss, r.history[0].dev_loss);
}

TEST(TrainModel, ZeroLearningRateStopsAtPatienceBound) {
  const Dataset ds = prepared_synth(64);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.patience = 3;
  const auto r = train_model<double>(ModelKind::mm_gate, ds, small_model(), tc, 5);
  ASSERT_EQ(r.history.size(), 4u);
  for (const auto& e : r.history) EXPECT_EQ(e.dev_loss, r.history[0].dev_loss);
  ModelConfig expected_cfg = r.checkpoint.model.config;
  EXPECT_EQ(r.checkpoint.model.params, init_params<double>(ModelKind::mm_gate, expected_cfg, 5));
  EXPECT_EQ(r.checkpoint.best_epoch, 1u);
}

TEST(TrainModel, TextHeadLossDecreasesOnSeparableData) {
  const Dataset ds = prepared_synth(400, 1.0);
  TrainConfig tc;
  tc.max_epochs = 5;
  tc.learning_rate = 1e-2;
  const auto r = train_model<double>(ModelKind::text, ds, small_model(), tc, 1);
  ASSERT_EQ(r.history.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(r.history[e].train_loss, r.history[e - 1].train_loss) << e;
}

TEST(TrainModel, BestCheckpointHasLowestDevLoss) {
  const Dataset ds = prepared_synth(200);
  TrainConfig tc;
  tc.max_epochs = 12;
  tc.patience = 2;
  tc.learning_rate = 5e-2;
  tc.dropout = 0.2;
  const auto r = train_model<double>(ModelKind::mm_gated_xatt, ds, small_model(), tc, 2);
  for (const auto& e : r.history) EXPECT_LE(*r.checkpoint.best_dev_loss, e.dev_loss);
  EXPECT_EQ(r.history[r.checkpoint.best_epoch - 1].dev_loss, *r.checkpoint.best_dev_loss);
  // The kept parameters reproduce the recorded dev loss.
  const auto dev = make_examples<double>(ds, Split::dev);
  const auto w = class_weights(ds.label_counts(Split::train));
  EXPECT_DOUBLE_EQ(mean_loss<double>(r.checkpoint.model, dev, w), *r.checkpoint.best_dev_loss);
}

TEST(TrainModel, DeterministicBitwise) {
  const Dataset ds = prepared_synth(120);
  TrainConfig tc;
  tc.max_epochs = 4;
  tc.dropout = 0.3;
  for (ModelKind kind : {ModelKind::mm_xatt, ModelKind::concat}) {
    const auto a = train_model<double>(kind, ds, small_model(), tc, 9);
    const auto b = train_model<double>(kind, ds, small_model(), tc, 9);
    EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
    const auto c = train_model<float>(kind, ds, small_model(), tc, 9);
    const auto d = train_model<float>(kind, ds, small_model(), tc, 9);
    EXPECT_EQ(encode_checkpoint(c.checkpoint), encode_checkpoint(d.checkpoint));
  }
}

TEST(TrainModel, DropoutDoesNotPerturbShuffleOrInit) {
  const Dataset ds = prepared_synth(64);
  TrainConfig tc;
  tc.max_epochs = 1;
  tc.learning_rate = 0.0;
  const auto a = train_model<double>(ModelKind::selfattn, ds, small_model(), tc, 4);
  tc.dropout = 0.5;
  const auto b = train_model<double>(ModelKind::selfattn, ds, small_model(), tc, 4);
  EXPECT_EQ(a.checkpoint.model.params, b.checkpoint.model.params);
  EXPECT_EQ(a.history[0].dev_loss, b.history[0].dev_loss);
}

TEST(TrainModel, MajorityNeedsNoOptimization) {
  const Dataset ds = prepared_synth(40);
  const auto r = train_model<double>(ModelKind::majority, ds, small_model(), TrainConfig{}, 1);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.checkpoint.model.majority_class, majority_class(ds.label_counts(Split::train)));
}

TEST(TrainModel, EmptySplitsRejected) {
  Dataset ds = prepared_synth(40);
  std::erase_if(ds.records, [](const FeatureRecord& r) { return r.split == Split::dev; });
  EXPECT_ERROR_KIND(train_model<double>(ModelKind::text, ds, small_model(), TrainConfig{}, 1), ErrorKind::empty_split);
}

TEST(RunSeeds, StdRules) {
  const Dataset ds = prepared_synth(80);
  TrainConfig tc;
  tc.max_epochs = 2;
  const std::vector<std::uint64_t> one{4};
  const auto single = run_seeds<double>(ModelKind::text, ds, small_model(), tc, one);
  EXPECT_EQ(single.summary.macro_f1.std, 0.0);
  const std::vector<std::uint64_t> twice{4, 4};
  const auto dup = run_seeds<double>(ModelKind::text, ds, small_model(), tc, twice);
  EXPECT_EQ(dup.runs[0].test.macro_f1, dup.runs[1].test.macro_f1);
  EXPECT_EQ(dup.summary.macro_f1.std, 0.0);
  EXPECT_EQ(dup.summary.macro_f1.mean, single.summary.macro_f1.mean);
  EXPECT_ERROR_KIND(run_seeds<double>(ModelKind::text, ds, small_model(), tc, std::vector<std::uint64_t>{}),
                    ErrorKind::invalid_argument);
}

TEST(MeanStd, SampleStandardDeviation) {
  const std::vector<double> xs{1.0, 2.0, 4.0};
  const auto r = mean_std(xs);
  EXPECT_DOUBLE_EQ(r.mean, 7.0 / 3.0);
  EXPECT_NEAR(r.std, std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) + (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2.0),
              1e-15);
}

TEST(Checkpoint, RoundTripBothPrecisions) {
  const Dataset ds = prepared_synth(60);
  TrainConfig tc;
  tc.max_epochs = 2;
  const auto dir = scratch_dir("checkpoint");
  const auto d = train_model<double>(ModelKind::mm_gated_xatt, ds, small_model(), tc, 1);
  save_checkpoint(dir / "d.mmck", d.checkpoint);
  EXPECT_EQ(checkpoint_precision(dir / "d.mmck"), Precision::double_);
  const auto back = load_checkpoint<double>(dir / "d.mmck");
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(d.checkpoint));
  EXPECT_EQ(back.model.params, d.checkpoint.model.params);
  EXPECT_EQ(*back.average_image, *ds.average_image);
  EXPECT_EQ(back.classes, ds.header.classes);
  EXPECT_ERROR_KIND(load_checkpoint<float>(dir / "d.mmck"), ErrorKind::invalid_argument);

  const auto f = train_model<float>(ModelKind::text, ds, small_model(), tc, 1);
  save_checkpoint(dir / "f.mmck", f.checkpoint);
  EXPECT_EQ(load_checkpoint<float>(dir / "f.mmck").model.params, f.checkpoint.model.params);
}

TEST(Checkpoint, CorruptionErrors) {
  const Dataset ds = prepared_synth(40);
  TrainConfig tc;
  tc.max_epochs = 1;
  const std::string bytes = encode_checkpoint(train_model<float>(ModelKind::image, ds, small_model(), tc, 1).checkpoint);
  const auto dir = scratch_dir("checkpoint_bad");
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir / name, std::ios::binary) << content;
    return dir / name;
  };
  std::string bad = bytes;
  bad[2] = 'X';
  EXPECT_ERROR_KIND(load_checkpoint<float>(write("magic.mmck", bad)), ErrorKind::format_magic);
  EXPECT_ERROR_KIND(load_checkpoint<float>(write("short.mmck", bytes.substr(0, bytes.size() - 4))),
                    ErrorKind::format_truncated);
  EXPECT_ERROR_KIND(load_checkpoint<float>(write("tiny.mmck", bytes.substr(0, 12))), ErrorKind::format_magic);
}
