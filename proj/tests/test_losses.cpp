#include <gtest/gtest.h>

#include <cmath>

#include "distillkit/losses.hpp"

namespace dk = distillkit;

namespace {

// KL(p || q) of the two-class softmax at temperature t, from raw exponentials.
double kl_softened(const dk::Logits& teacher, const dk::Logits& student, double t) {
  const double p1 = 1.0 / (1.0 + std::exp((teacher[0] - teacher[1]) / t));
  const double q1 = 1.0 / (1.0 + std::exp((student[0] - student[1]) / t));
  const double p0 = 1.0 - p1, q0 = 1.0 - q1;
  return p0 * std::log(p0 / q0) + p1 * std::log(p1 / q1);
}

}  // namespace

TEST(SoftLoss, ZeroForIdenticalLogits) {
  dk::Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const dk::Logits z{rng.uniform(-10, 10), rng.uniform(-10, 10)};
    EXPECT_NEAR(dk::soft_loss(z, z, rng.uniform(0.5, 5.0)), 0.0, 1e-12);
  }
}

TEST(SoftLoss, HandEvaluatedKl) {
  // teacher [0.5, 0.5], student [0.9, 0.1]
  const double v = dk::soft_loss({std::log(9.0), 0.0}, {0.0, 0.0}, 1.0);
  EXPECT_NEAR(v, 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1), 1e-12);
  EXPECT_NEAR(v, 0.51083, 1e-5);
}

TEST(SoftLoss, TemperatureSquaredTimesKl) {
  dk::Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const dk::Logits s{rng.uniform(-4, 4), rng.uniform(-4, 4)}, t{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    for (double temp : {1.0, 2.0, 3.5}) {
      EXPECT_NEAR(dk::soft_loss(s, t, temp), temp * temp * kl_softened(t, s, temp), 1e-12);
      EXPECT_GE(dk::soft_loss(s, t, temp), 0.0);
    }
  }
  EXPECT_THROW(dk::soft_loss({0, 0}, {0, 0}, 0.0), dk::UsageError);
}

TEST(HardLoss, Examples) {
  EXPECT_NEAR(dk::hard_loss({0.0, 0.0}, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(dk::hard_loss({0.0, 0.0}, 1), 0.69315, 1e-5);
  EXPECT_NEAR(dk::hard_loss({0.0, std::log(3.0)}, 1), -std::log(0.75), 1e-15);
  EXPECT_NEAR(dk::hard_loss({0.0, std::log(3.0)}, 1), 0.28768, 1e-5);
  const double confident = dk::hard_loss({-1000.0, 1000.0}, 1);
  EXPECT_TRUE(std::isfinite(confident));
  EXPECT_NEAR(confident, 0.0, 1e-300);
  EXPECT_TRUE(std::isfinite(dk::hard_loss({-1000.0, 1000.0}, 0)));
}

TEST(KdLoss, DegenerateWeights) {
  const dk::Logits s{0.3, -1.2}, t{2.0, 0.5};
  dk::DistillConfig cfg;
  cfg.temperature = 3.0;
  cfg.alpha = 0.0;
  EXPECT_EQ(dk::kd_loss(s, t, 1, cfg), dk::hard_loss(s, 1));
  cfg.alpha = 1.0;
  EXPECT_EQ(dk::kd_loss(s, t, 1, cfg), dk::soft_loss(s, t, 3.0));
}

TEST(KdLoss, AffineInAlpha) {
  dk::Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const dk::Logits s{rng.uniform(-3, 3), rng.uniform(-3, 3)}, t{rng.uniform(-3, 3), rng.uniform(-3, 3)};
    dk::DistillConfig cfg;
    cfg.temperature = rng.uniform(2, 4);
    const auto y = static_cast<std::size_t>(rng.below(2));
    cfg.alpha = 0.0;
    const double at0 = dk::kd_loss(s, t, y, cfg);
    cfg.alpha = 1.0;
    const double at1 = dk::kd_loss(s, t, y, cfg);
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      cfg.alpha = a;
      EXPECT_NEAR(dk::kd_loss(s, t, y, cfg), (1.0 - a) * at0 + a * at1, 1e-12);
    }
  }
}

TEST(Contrastive, CosineCases) {
  dk::Matrix identity(3, 3);
  for (std::size_t i = 0; i < 3; ++i) identity(i, i) = 1.0;
  const std::vector<double> h{1.0, -2.0, 0.5};
  EXPECT_NEAR(dk::contrastive_loss(h, std::vector<double>{2.0, -4.0, 1.0}, identity), 0.0, 1e-15);
  EXPECT_NEAR(dk::contrastive_loss(h, std::vector<double>{-1.0, 2.0, -0.5}, identity), 2.0, 1e-15);
  EXPECT_NEAR(dk::contrastive_loss(std::vector<double>{1.0, 0.0, 0.0}, std::vector<double>{0.0, 3.0, 0.0}, identity),
              1.0, 1e-15);
  EXPECT_EQ(dk::contrastive_loss(std::vector<double>{0.0, 0.0, 0.0}, h, identity), 1.0);
  EXPECT_EQ(dk::contrastive_loss(h, std::vector<double>{0.0, 0.0, 0.0}, identity), 1.0);
}

TEST(Contrastive, ProjectionShapeChecked) {
  const dk::Matrix p(2, 3);
  EXPECT_THROW(dk::contrastive_loss(std::vector<double>{1, 2}, std::vector<double>{1, 2}, p), dk::InvariantError);
  const std::vector<double> hs{1, 2, 3}, ht{1, 0};
  dk::Matrix q(2, 3, 0.1);
  const double v = dk::contrastive_loss(hs, ht, q);
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 2.0);
}

TEST(DistillConfig, Validation) {
  dk::DistillConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  auto bad = cfg;
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), dk::UsageError);
  bad = cfg;
  bad.alpha = 1.5;
  EXPECT_THROW(bad.validate(), dk::UsageError);
  bad = cfg;
  bad.temperature = 0.0;
  EXPECT_THROW(bad.validate(), dk::UsageError);
  bad = cfg;
  bad.learning_rate = 0.0;
  EXPECT_THROW(bad.validate(), dk::UsageError);
  bad = cfg;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), dk::UsageError);
}
