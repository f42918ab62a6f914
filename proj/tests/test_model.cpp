#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "distillkit/model.hpp"
#include "gradient_check.hpp"
#include "oracles/dense_model.hpp"

namespace dk = distillkit;
using testing_support::LossKind;

namespace {

dk::SparseVector random_input(std::size_t dim, dk::Rng& rng) {
  dk::SparseVector x{dim, {}};
  for (std::uint32_t i = 0; i < dim; ++i)
    if (rng.uniform() < 0.6) x.entries.push_back({i, rng.uniform(-2.0, 2.0)});
  return x;
}

// input_dim 1, one hidden unit, one label.
dk::ModelState scalar_model() {
  return dk::init_model({1, {1}, dk::Activation::tanh, dk::ModelRole::student}, 1, 0);
}

}  // namespace

TEST(Init, DeterministicWithZeroBiases) {
  const auto spec = dk::EncoderSpec::teacher_default(64);
  const auto a = dk::init_model(spec, 3, 17);
  EXPECT_EQ(a, dk::init_model(spec, 3, 17));
  EXPECT_NE(a, dk::init_model(spec, 3, 18));
  EXPECT_EQ(a.num_labels(), 3u);
  for (const auto& layer : a.layers)
    for (double b : layer.bias) EXPECT_EQ(b, 0.0);
  for (const auto& h : a.heads) EXPECT_EQ(h.bias, (dk::Logits{0.0, 0.0}));
}

TEST(Init, GlorotBounds) {
  const auto m = dk::init_model({4, {2}, dk::Activation::tanh, dk::ModelRole::student}, 1, 3);
  for (double w : m.layers[0].weight.data) {
    EXPECT_GE(w, -1.0);
    EXPECT_LE(w, 1.0);
  }
  const auto t = dk::init_model(dk::EncoderSpec::teacher_default(100), 2, 1);
  const double a0 = std::sqrt(6.0 / 228.0);
  for (double w : t.layers[0].weight.data) EXPECT_LE(std::abs(w), a0);
}

TEST(Init, TeacherDefaultOutsizesStudent) {
  const auto t = dk::EncoderSpec::teacher_default(10), s = dk::EncoderSpec::student_default(10);
  EXPECT_GT(t.hidden_sizes.size(), s.hidden_sizes.size());
  EXPECT_THROW(dk::init_model(t, 0, 0), dk::UsageError);
  EXPECT_THROW(dk::init_model({10, {}, dk::Activation::tanh, dk::ModelRole::student}, 1, 0), dk::UsageError);
}

TEST(Forward, ZeroInputGivesBiasLogits) {
  const auto m = dk::init_model({8, {5, 3}, dk::Activation::tanh, dk::ModelRole::teacher}, 2, 0);
  const auto r = dk::forward(m, {8, {}}, 1);
  for (double h : r.hidden) EXPECT_EQ(h, 0.0);
  EXPECT_EQ(r.logits, (dk::Logits{0.0, 0.0}));
}

TEST(Forward, IdentityReluLayerPassesInput) {
  auto m = dk::init_model({3, {3}, dk::Activation::relu, dk::ModelRole::student}, 1, 0);
  auto& w = m.layers[0].weight;
  std::fill(w.data.begin(), w.data.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
  const dk::SparseVector x{3, {{0, 0.5}, {2, 1.25}}};
  EXPECT_EQ(dk::forward(m, x, 0).hidden, (std::vector<double>{0.5, 0.0, 1.25}));
}

TEST(Forward, MatchesDenseOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    dk::Rng rng(seed);
    const auto act = seed % 2 ? dk::Activation::relu : dk::Activation::tanh;
    auto m = dk::init_model({8, {6, 4}, act, dk::ModelRole::teacher}, 3, seed);
    for (auto& layer : m.layers)
      for (auto& b : layer.bias) b = rng.uniform(-0.3, 0.3);
    const auto x = random_input(8, rng);
    for (std::size_t label = 0; label < 3; ++label) {
      const auto r = dk::forward(m, x, label);
      const auto h = oracle::dense_hidden(m, x);
      const auto z = oracle::dense_logits(m, x, label);
      for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(r.hidden[i], h[i], 1e-12);
      EXPECT_NEAR(r.logits[0], z[0], 1e-12);
      EXPECT_NEAR(r.logits[1], z[1], 1e-12);
    }
  }
}

TEST(Forward, RejectsMismatchedInput) {
  const auto m = dk::init_model({8, {4}, dk::Activation::tanh, dk::ModelRole::student}, 2, 0);
  EXPECT_THROW(dk::forward(m, {7, {}}, 0), dk::InvariantError);
  EXPECT_THROW(dk::forward(m, {8, {}}, 2), dk::InvariantError);
}

TEST(Softmax, Examples) {
  EXPECT_EQ(dk::softmax_t({1.0, 1.0}, 3.0), (dk::Probabilities{0.5, 0.5}));
  const auto p = dk::softmax_t({2.0, 0.0}, 2.0);
  EXPECT_NEAR(p[0], 0.73106, 1e-5);
  EXPECT_NEAR(p[1], 0.26894, 1e-5);
  const auto q = dk::softmax_t({1000.0, 0.0}, 1.0);
  EXPECT_EQ(q[0], 1.0);
  EXPECT_GE(q[1], 0.0);
  EXPECT_LT(q[1], 1e-300);
  EXPECT_THROW(dk::softmax_t({0.0, 0.0}, 0.0), dk::UsageError);
  EXPECT_THROW(dk::softmax_t({0.0, 0.0}, -1.0), dk::UsageError);
}

TEST(Softmax, NormalizedShiftInvariantAndFlatAtHighTemperature) {
  dk::Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const dk::Logits z{rng.uniform(-20, 20), rng.uniform(-20, 20)};
    const double t = rng.uniform(0.1, 10.0), c = rng.uniform(-50, 50);
    const auto p = dk::softmax_t(z, t);
    EXPECT_GE(p[0], 0.0);
    EXPECT_GE(p[1], 0.0);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
    const auto shifted = dk::softmax_t({z[0] + c, z[1] + c}, t);
    EXPECT_NEAR(shifted[0], p[0], 1e-12);
    const auto flat = dk::softmax_t(z, 1e6);
    EXPECT_NEAR(flat[0], 0.5, 2e-5);
  }
}

TEST(Predict, PositiveClassProbability) {
  auto m = dk::init_model({2, {1}, dk::Activation::tanh, dk::ModelRole::student}, 1, 0);
  auto& head = m.heads[0];
  std::fill(head.weight.data.begin(), head.weight.data.end(), 0.0);
  EXPECT_EQ(dk::predict_proba(m, {2, {}}, 0), 0.5);
  head.bias = {0.0, std::log(3.0)};
  EXPECT_NEAR(dk::predict_proba(m, {2, {}}, 0), 0.75, 1e-15);
  double last = 0.0;
  for (double z1 = -5.0; z1 <= 5.0; z1 += 0.5) {
    head.bias = {0.3, z1};
    const double p = dk::predict_proba(m, {2, {}}, 0);
    EXPECT_GT(p, last);
    last = p;
  }
}

TEST(Sgd, ZeroRateLeavesModelUnchanged) {
  const auto m = dk::init_model(dk::EncoderSpec::student_default(16), 2, 4);
  auto g = dk::Gradients::zeros_like(m);
  g.first_weight.row(3)[0] = 1.0;
  g.heads[1].bias = {2.0, -1.0};
  EXPECT_EQ(dk::sgd_step(m, g, 0.0), m);
}

TEST(Sgd, OneScalarStep) {
  auto m = scalar_model();
  m.layers[0].weight(0, 0) = 1.0;
  auto g = dk::Gradients::zeros_like(m);
  g.first_weight.row(0)[0] = 0.5;
  EXPECT_DOUBLE_EQ(dk::sgd_step(m, g, 0.1).layers[0].weight(0, 0), 0.95);
}

TEST(Sgd, TwoStepsEqualSummedStep) {
  const auto m = dk::init_model({4, {3, 2}, dk::Activation::tanh, dk::ModelRole::teacher}, 2, 9);
  auto g1 = dk::Gradients::zeros_like(m), g2 = dk::Gradients::zeros_like(m), sum = dk::Gradients::zeros_like(m);
  dk::Rng rng(1);
  for (std::uint32_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
      g1.first_weight.row(r)[c] = a;
      g2.first_weight.row(r)[c] = b;
      sum.first_weight.row(r)[c] = a + b;
    }
  for (std::size_t i = 0; i < g1.weights[1].data.size(); ++i) {
    g1.weights[1].data[i] = 0.25;
    g2.weights[1].data[i] = 0.5;
    sum.weights[1].data[i] = 0.75;
  }
  const auto two = dk::sgd_step(dk::sgd_step(m, g1, 0.1), g2, 0.1);
  const auto one = dk::sgd_step(m, sum, 0.1);
  for (std::size_t l = 0; l < m.layers.size(); ++l)
    for (std::size_t i = 0; i < m.layers[l].weight.data.size(); ++i)
      EXPECT_NEAR(two.layers[l].weight.data[i], one.layers[l].weight.data[i], 1e-15);
}

TEST(Sgd, NonFiniteGradientNamesLayer) {
  const auto m = dk::init_model({4, {3, 2}, dk::Activation::tanh, dk::ModelRole::teacher}, 1, 0);
  auto g = dk::Gradients::zeros_like(m);
  g.weights[1](0, 0) = std::nan("");
  try {
    dk::sgd_step(m, g, 0.1);
    FAIL();
  } catch (const dk::InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
  auto h = dk::Gradients::zeros_like(m);
  h.heads[0].bias[1] = INFINITY;
  EXPECT_THROW(dk::sgd_step(m, h, 0.1), dk::InvariantError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto m = dk::init_model({20, {7, 5}, dk::Activation::relu, dk::ModelRole::teacher}, 4, 12);
  m.layers[1].bias[2] = -0.0;
  m.heads[3].bias = {1e-310, -3.5};
  std::stringstream buf;
  dk::write_checkpoint(buf, m);
  const auto back = dk::read_checkpoint(buf);
  EXPECT_EQ(back, m);
  std::ostringstream again;
  dk::write_checkpoint(again, back);
  EXPECT_EQ(again.str(), buf.str());
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto m = dk::init_model(dk::EncoderSpec::student_default(8), 1, 0);
  std::ostringstream out;
  dk::write_checkpoint(out, m);
  const auto bytes = out.str();
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(dk::read_checkpoint(truncated), dk::DataError);
  std::istringstream garbage("NOTAMODEL...........");
  EXPECT_THROW(dk::read_checkpoint(garbage), dk::DataError);
}

class GradientCheck : public ::testing::TestWithParam<LossKind> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto r = testing_support::gradient_trial(seed, GetParam());
    EXPECT_LT(r.max_rel_error, 1e-4) << testing_support::loss_name(GetParam()) << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Losses, GradientCheck,
                         ::testing::Values(LossKind::hard, LossKind::soft, LossKind::combined, LossKind::contrastive),
                         [](const auto& info) { return std::string(testing_support::loss_name(info.param)); });
