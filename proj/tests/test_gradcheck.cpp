#include <gtest/gtest.h>

#include "support.hpp"

using namespace mmfuse;
using testing_support::check_model_gradients;
using testing_support::GradCase;
using testing_support::random_matrix;

namespace {

ModelConfig desk_config() {
  ModelConfig c;
  c.d_t = 12;
  c.d_v = 10;
  c.d = 8;
  c.d_proj = 8;
  c.classes = 4;
  return c;
}

}  // namespace

TEST(GradCheck, RejectsEpsOutsideRange) {
  LossBuilder build = [](Tape<double>&, std::span<const Var<double>> p) { return sum_all(p[0]); };
  EXPECT_ERROR_KIND(grad_check(build, {Matrix<double>(1, 1)}, 1e-3), ErrorKind::invalid_argument);
  EXPECT_ERROR_KIND(grad_check(build, {Matrix<double>(1, 1)}, 1e-7), ErrorKind::invalid_argument);
}

TEST(GradCheck, NonFiniteLossIsAnError) {
  LossBuilder build = [](Tape<double>& t, std::span<const Var<double>> p) {
    return sum_all(hadamard(p[0], t.constant({{std::numeric_limits<double>::infinity()}})));
  };
  EXPECT_ERROR_KIND(grad_check(build, {Matrix<double>(1, 1, 1.0)}, 1e-5), ErrorKind::non_finite);
}

TEST(GradCheck, LinearSoftmaxHead) {
  std::mt19937_64 gen(1);
  const auto x = random_matrix(1, 6, gen);
  const std::vector<double> w{1.0, 1.0, 1.0};
  LossBuilder build = [&](Tape<double>& t, std::span<const Var<double>> p) {
    return weighted_cross_entropy(affine(t.constant(x), p[0], p[1]), 2, std::span<const double>(w));
  };
  const auto res = grad_check(build, {random_matrix(3, 6, gen), random_matrix(3, 1, gen)}, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-6);
  EXPECT_EQ(res.entries_checked, 21u);
}

TEST(GradCheck, ConstantLossHasZeroError) {
  const std::vector<double> w{1.0, 1.0};
  LossBuilder build = [&](Tape<double>& t, std::span<const Var<double>> p) {
    // Zero weights: the logits are the (zero) bias for every input.
    return weighted_cross_entropy(affine(t.constant({{3.0, -1.0}}), hadamard(p[0], t.constant(Matrix<double>(2, 2))), p[1]),
                                  0, std::span<const double>(w));
  };
  const auto res = grad_check(build, {Matrix<double>(2, 2), Matrix<double>(2, 1)}, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-9);
}

TEST(GradCheck, ZeroWeightModelHasZeroGradients) {
  ModelConfig c = desk_config();
  Model<double> m = Model<double>::create(ModelKind::mm_gate, c, 1);
  for (auto& e : m.params) e.value.fill(0.0);
  Tape<double> t;
  const auto leaves = m.bind_params(t);
  const std::vector<double> w(4, 1.0);
  std::mt19937_64 gen(2);
  const auto f = m.forward(t, leaves, random_matrix(1, 12, gen), random_matrix(1, 10, gen));
  t.backward(weighted_cross_entropy(f.logits, 0, std::span<const double>(w)));
  // Only the output bias receives gradient through a zero model.
  for (std::size_t k = 0; k + 1 < leaves.size(); ++k) {
    const Matrix<double> g = t.grad(leaves[k]);
    for (double x : g.data()) EXPECT_EQ(x, 0.0) << m.params[k].name;
  }
}

struct NamedCase {
  const char* name;
  GradCase c;
};

class ModelGradients : public ::testing::TestWithParam<NamedCase> {};

TEST_P(ModelGradients, MatchCentralDifferences) {
  const GradCase& c = GetParam().c;
  for (std::uint64_t seed : {1u, 2u}) {
    const auto res = check_model_gradients(c, seed);
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed << " param " << res.worst_param << " entry "
                                       << res.worst_entry << " analytic " << res.worst_analytic << " numeric "
                                       << res.worst_numeric;
    EXPECT_GT(res.entries_checked, 0u);
  }
}

namespace {

std::vector<NamedCase> model_cases() {
  std::vector<NamedCase> cases;
  auto add = [&](const char* name, ModelKind kind, GateMode gm, Granularity gr) {
    ModelConfig c = desk_config();
    c.gate_mode = gm;
    c.granularity = gr;
    const bool seq = gr == Granularity::sequence;
    cases.push_back({name, {kind, c, seq ? 3u : 1u, seq ? 4u : 1u}});
  };
  add("text", ModelKind::text, GateMode::vector, Granularity::sequence);
  add("image", ModelKind::image, GateMode::vector, Granularity::sequence);
  add("concat", ModelKind::concat, GateMode::vector, Granularity::sequence);
  add("selfattn", ModelKind::selfattn, GateMode::vector, Granularity::sequence);
  add("gate_vector", ModelKind::mm_gate, GateMode::vector, Granularity::pooled);
  add("gate_scalar", ModelKind::mm_gate, GateMode::scalar, Granularity::pooled);
  add("xatt_sequence", ModelKind::mm_xatt, GateMode::vector, Granularity::sequence);
  add("xatt_pooled", ModelKind::mm_xatt, GateMode::vector, Granularity::pooled);
  add("gated_xatt_sequence", ModelKind::mm_gated_xatt, GateMode::vector, Granularity::sequence);
  add("gated_xatt_pooled", ModelKind::mm_gated_xatt, GateMode::vector, Granularity::pooled);
  add("gated_xatt_scalar", ModelKind::mm_gated_xatt, GateMode::scalar, Granularity::sequence);
  return cases;
}

}  // namespace

INSTANTIATE_TEST_SUITE_P(AllModels, ModelGradients, ::testing::ValuesIn(model_cases()),
                         [](const auto& info) { return std::string(info.param.name); });
