#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mmfuse/adam.hpp"
#include "mmfuse/checkpoint.hpp"
#include "mmfuse/dataset.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/example.hpp"
#include "mmfuse/metrics.hpp"
#include "mmfuse/model.hpp"
#include "mmfuse/preprocess.hpp"
#include "mmfuse/rng.hpp"
#include "mmfuse/tape.hpp"
#include "mmfuse/train_config.hpp"

namespace mmfuse {

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per-example loss seen during the epoch
  double dev_loss = 0.0;    // mean weighted loss on dev, evaluation mode
  bool improved = false;
};

template <typename T>
struct TrainResult {
  Checkpoint<T> checkpoint;
  std::vector<EpochLog> history;
};

// Mean weighted cross-entropy in evaluation mode.
template <typename T>
double mean_loss(const Model<T>& model, std::span<const Example<T>> examples, std::span<const T> weights) {
  if (examples.empty()) fail(ErrorKind::empty_split, "mean_loss over an empty split");
  Tape<T> tape;
  double total = 0.0;
  for (const auto& ex : examples) {
    tape.clear();
    const auto leaves = model.bind_params(tape);
    const ModelForward<T> f = model.forward(tape, leaves, ex.text, ex.image);
    total += static_cast<double>(weighted_cross_entropy(f.logits, ex.label, weights).value()[0]);
  }
  const double mean = total / static_cast<double>(examples.size());
  if (!std::isfinite(mean)) fail(ErrorKind::non_finite, "non-finite evaluation loss");
  return mean;
}

template <typename T>
std::vector<std::size_t> predict_all(const Model<T>& model, std::span<const Example<T>> examples) {
  std::vector<std::size_t> preds;
  preds.reserve(examples.size());
  for (const auto& ex : examples) preds.push_back(model.predict_class(ex.text, ex.image));
  return preds;
}

template <typename T>
Metrics evaluate_model(const Model<T>& model, std::span<const Example<T>> examples) {
  std::vector<std::size_t> golds;
  for (const auto& ex : examples) golds.push_back(ex.label);
  return compute_metrics(predict_all(model, examples), golds, model.config.classes);
}

/**
 * Mini-batch Adam on class-weighted cross-entropy with early stopping.
 *
 * Each epoch visits the train split in a fresh order from the shuffle stream;
 * a batch's gradient is the mean of its per-example gradients, summed in
 * batch order. After every epoch the dev loss is measured without dropout;
 * the parameters of the epoch with the lowest dev loss are kept, and training
 * stops once `patience` epochs pass without a strict improvement.
 *
 * `ds` must already be prepared (regime applied, images imputed).
 */
template <typename T>
TrainResult<T> train_model(ModelKind kind, const Dataset& ds, ModelConfig mcfg, const TrainConfig& tcfg,
                           std::uint64_t seed) {
  tcfg.validate();
  mcfg.classes = ds.header.classes.size();
  mcfg.d_t = ds.header.d_t;
  mcfg.d_v = ds.header.d_v;
  mcfg.granularity = ds.header.granularity;
  mcfg.dropout = tcfg.dropout;
  mcfg.validate();

  const auto train = make_examples<T>(ds, Split::train);
  const auto dev = make_examples<T>(ds, Split::dev);
  if (train.empty()) fail(ErrorKind::empty_split, "train split is empty");
  if (dev.empty()) fail(ErrorKind::empty_split, "dev split is empty");

  TrainResult<T> result;
  Checkpoint<T>& ck = result.checkpoint;
  ck.classes = ds.header.classes;
  ck.average_image = ds.average_image;
  ck.train = tcfg;
  ck.seed = seed;

  const auto counts = ds.label_counts(Split::train);
  if (kind == ModelKind::majority) {
    ck.model = Model<T>{kind, mcfg, {}, majority_class(counts)};
    return result;
  }

  std::vector<T> weights;
  for (double w : class_weights(counts)) weights.push_back(static_cast<T>(w));

  Model<T> model = Model<T>::create(kind, mcfg, seed);
  AdamState<T> adam = AdamState<T>::for_params(model.params);
  CounterRng shuffle_rng(seed, Stream::shuffle);
  CounterRng dropout_rng(seed, Stream::dropout);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  ck.model = model;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  Tape<T> tape;

  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    shuffle_in_place(order, shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
      ParamSet<T> grads = model.params.zeros_like();
      for (std::size_t b = start; b < stop; ++b) {
        const Example<T>& ex = train[order[b]];
        tape.clear();
        const auto leaves = model.bind_params(tape);
        const ModelForward<T> f = model.forward(tape, leaves, ex.text, ex.image, true, &dropout_rng);
        Var<T> loss = weighted_cross_entropy(f.logits, ex.label, std::span<const T>(weights));
        const double lv = static_cast<double>(loss.value()[0]);
        if (!std::isfinite(lv)) fail(ErrorKind::non_finite, "non-finite training loss at epoch " + std::to_string(epoch));
        epoch_loss += lv;
        tape.backward(loss);
        for (std::size_t k = 0; k < leaves.size(); ++k) {
          const Matrix<T> g = tape.grad(leaves[k]);
          Matrix<T>& acc = grads[k].value;
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
        }
      }
      const T inv = T(1) / static_cast<T>(stop - start);
      for (auto& e : grads)
        for (auto& x : e.value.data()) x *= inv;
      adam_step(model.params, grads, adam, tcfg.learning_rate, tcfg.adam);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(train.size());
    log.dev_loss = mean_loss<T>(model, dev, weights);
    log.improved = log.dev_loss < best;
    result.history.push_back(log);
    if (log.improved) {
      best = log.dev_loss;
      since_best = 0;
      ck.model = model;
      ck.best_epoch = epoch;
      ck.best_dev_loss = best;
    } else if (++since_best >= tcfg.patience) {
      break;
    }
  }
  return result;
}

template <typename T>
struct SeedRun {
  std::uint64_t seed = 0;
  TrainResult<T> training;
  Metrics test;
};

template <typename T>
struct MultiSeedResult {
  std::vector<SeedRun<T>> runs;
  MetricsSummary summary;
};

// Trains and evaluates once per seed; test metrics are averaged across seeds.
template <typename T>
MultiSeedResult<T> run_seeds(ModelKind kind, const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                             std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) fail(ErrorKind::invalid_argument, "run_seeds needs at least one seed");
  const auto test = make_examples<T>(ds, Split::test);
  if (test.empty()) fail(ErrorKind::empty_split, "test split is empty");
  MultiSeedResult<T> out;
  std::vector<Metrics> all;
  for (std::uint64_t seed : seeds) {
    SeedRun<T> run;
    run.seed = seed;
    run.training = train_model<T>(kind, ds, mcfg, tcfg, seed);
    run.test = evaluate_model<T>(run.training.checkpoint.model, test);
    all.push_back(run.test);
    out.runs.push_back(std::move(run));
  }
  out.summary = summarize(all);
  return out;
}

}  // namespace mmfuse
