#include <doctest/doctest.h>

#include <cmath>
#include <vector>

#include "endocss/error.hpp"
#include "endocss/loss.hpp"
#include "endocss/rng.hpp"

#include "test_support.hpp"

using namespace endocss;
using testsupport::random_labels;
using testsupport::random_uniform;

namespace {

/// The 1x2x2x3 fixture used by the pinned-value checks below. Reference loss
/// and gradients were frozen from an independent implementation.
TensorD fixture_logits() {
  TensorD logits({1, 2, 2, 3});
  const double vals[12] = {0.5, -0.25, 1.0, 2.0, 0.0, -1.0, -0.5, 0.75, 0.25, 1.5, 1.5, 1.5};
  for (long i = 0; i < 12; ++i) logits.data()[i] = vals[i];
  return logits;
}

TensorI fixture_targets() {
  TensorI t({1, 2, 2});
  t.data()[0] = 0;
  t.data()[1] = 1;
  t.data()[2] = 2;
  t.data()[3] = 255;
  return t;
}

}  // namespace

TEST_CASE("ce_loss matches the two-class closed form") {
  TensorD logits({1, 1, 1, 2});
  logits.data()[0] = 1.0;
  logits.data()[1] = 0.0;
  TensorI target({1, 1, 1});
  target.data()[0] = 0;
  TensorD grad({1, 1, 1, 2});
  const auto res = ce_loss(logits, target, 255, &grad);
  CHECK(res.value == doctest::Approx(0.31326168751822286).epsilon(1e-12));
  CHECK(res.counted == 1);
  CHECK(grad.data()[0] == doctest::Approx(-0.2689414213699951).epsilon(1e-12));
  CHECK(grad.data()[1] == doctest::Approx(0.2689414213699951).epsilon(1e-12));
}

TEST_CASE("ce_loss pinned fixture with an ignored pixel") {
  const TensorD logits = fixture_logits();
  const TensorI targets = fixture_targets();
  TensorD grad({1, 2, 2, 3});
  const auto res = ce_loss(logits, targets, 255, &grad);
  CHECK(res.value == doctest::Approx(1.4820697414604183).epsilon(1e-12));
  CHECK(res.counted == 3);
  const double expected[12] = {-0.22653296365779566, 0.05044892245509973, 0.17608404120269588,
                               0.2812649114937798,  -0.2952682668718018,  0.014003355378022015,
                               0.05044892245509973,  0.17608404120269588, -0.22653296365779566,
                               0.0,                  0.0,                 0.0};
  for (long i = 0; i < 12; ++i)
    CHECK(grad.data()[i] == doctest::Approx(expected[i]).epsilon(1e-10));
  CHECK(res.pixel_losses.data()[3] == 0.0);
}

TEST_CASE("sance_loss_with pinned multiplier 1.1") {
  const TensorD logits = fixture_logits();
  const TensorI targets = fixture_targets();
  SanCEConfig cfg;
  cfg.cur_step = 2;
  // 1 + 2 * (0 + 0.1 * |0.5|)
  CHECK(san_lambda(cfg, 0.5) == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(san_lambda(cfg, -0.5) == doctest::Approx(1.1).epsilon(1e-15));
  TensorD grad({1, 2, 2, 3});
  const auto res = sance_loss_with(logits, targets, cfg, {1.1}, &grad);
  CHECK(res.value == doctest::Approx(1.5487165961507172).epsilon(1e-12));
  const double expected[12] = {-0.251053217877925,  0.05066585885878099, 0.20038735901914403,
                               0.31948334526223227, -0.3312669029674474, 0.01178355770521507,
                               0.05066585885878099, 0.20038735901914403, -0.251053217877925,
                               0.0,                 0.0,                 0.0};
  for (long i = 0; i < 12; ++i)
    CHECK(grad.data()[i] == doctest::Approx(expected[i]).epsilon(1e-10));
}

TEST_CASE("sance_loss at step 0 is exactly cross-entropy") {
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits = random_uniform<float>({3, 4, 4, 5}, -4.0, 4.0, 100 + trial);
    const TensorI targets = random_labels({3, 4, 4}, 5, 200 + trial, 0.15);
    Tensor gc({3, 4, 4, 5}), gs({3, 4, 4, 5});
    const auto ce = ce_loss(logits, targets, 255, &gc);
    SanCEConfig cfg;  // cur_step = 0
    Rng rng(300 + trial);
    const auto sance = sance_loss(logits, targets, cfg, rng, &gs);
    CHECK(sance.value == ce.value);  // bit-identical, not merely close
    for (long i = 0; i < gc.numel(); ++i) CHECK(gs.data()[i] == gc.data()[i]);
  }
}

TEST_CASE("sance noise is one multiplier per sample") {
  const Tensor logits = random_uniform<float>({4, 2, 2, 3}, -2.0, 2.0, 7);
  SanCEConfig cfg;
  cfg.cur_step = 3;
  Rng rng(9);
  const std::vector<double> lambdas = san_lambdas(cfg, 4, rng);
  CHECK(lambdas.size() == 4);
  const Tensor scaled = san_scale_with(logits, lambdas);
  for (long b = 0; b < 4; ++b)
    for (long i = 0; i < 2 * 2 * 3; ++i) {
      const float expect = logits.data()[b * 12 + i] * static_cast<float>(lambdas[b]);
      CHECK(scaled.data()[b * 12 + i] == expect);
    }
  for (const double l : lambdas) CHECK(l >= 1.0);  // mu=0: 1 + 3*0.1*|xi|
}

TEST_CASE("san_scale keeps every pixel argmax") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor logits = random_uniform<float>({2, 3, 3, 6}, -5.0, 5.0, 500 + trial);
    SanCEConfig cfg;
    cfg.cur_step = 1 + static_cast<int>(rng.uniform_index(4));
    Rng noise(600 + trial);
    const Tensor scaled = san_scale(logits, cfg, noise);
    for (long b = 0; b < 2; ++b)
      for (long p = 0; p < 9; ++p) {
        int a0 = 0, a1 = 0;
        for (int c = 1; c < 6; ++c) {
          const long base = (b * 9 + p) * 6;
          if (logits.data()[base + c] > logits.data()[base + a0]) a0 = c;
          if (scaled.data()[base + c] > scaled.data()[base + a1]) a1 = c;
        }
        CHECK(a0 == a1);
      }
  }
}

TEST_CASE("gradients vanish at ignored pixels and all-ignored warns to zero") {
  TensorD logits({1, 1, 2, 2});
  logits.data()[0] = 3.0;
  logits.data()[1] = -1.0;
  logits.data()[2] = 0.5;
  logits.data()[3] = 0.25;
  TensorI targets({1, 1, 2});
  targets.data()[0] = 255;
  targets.data()[1] = 255;
  TensorD grad({1, 1, 2, 2});
  const auto res = ce_loss(logits, targets, 255, &grad);
  CHECK(res.value == 0.0);
  CHECK(res.counted == 0);
  for (long i = 0; i < 4; ++i) CHECK(grad.data()[i] == 0.0);
}

TEST_CASE("ce_loss central finite differences agree in double") {
  for (int trial = 0; trial < 5; ++trial) {
    TensorD logits = random_uniform<double>({1, 3, 3, 4}, -3.0, 3.0, 900 + trial);
    const TensorI targets = random_labels({1, 3, 3}, 4, 950 + trial, 0.1);
    TensorD grad({1, 3, 3, 4});
    ce_loss(logits, targets, 255, &grad);
    const double h = 1e-6;
    for (long i = 0; i < logits.numel(); i += 7) {
      const double orig = logits.data()[i];
      logits.data()[i] = orig + h;
      const double up = ce_loss(logits, targets, 255).value;
      logits.data()[i] = orig - h;
      const double dn = ce_loss(logits, targets, 255).value;
      logits.data()[i] = orig;
      const double fd = (up - dn) / (2 * h);
      CHECK(grad.data()[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("loss input validation") {
  TensorD logits({1, 2, 2, 3});
  TensorI bad({2, 2});
  CHECK_THROWS_AS(ce_loss(logits, bad, 255), ValidationError);
  TensorI wrong_shape({1, 2, 3});
  CHECK_THROWS_AS(ce_loss(logits, wrong_shape, 255), ValidationError);
  TensorI targets({1, 2, 2});
  targets.data()[0] = 7;  // class id out of range
  CHECK_THROWS_AS(ce_loss(logits, targets, 255), ValidationError);
  SanCEConfig cfg;
  cfg.sigma = -0.1;
  CHECK_THROWS_AS(validate(cfg), ValidationError);
  cfg.sigma = 0.1;
  cfg.cur_step = -1;
  CHECK_THROWS_AS(validate(cfg), ValidationError);
}

TEST_CASE("pixel losses mean equals the reported value") {
  const Tensor logits = random_uniform<float>({2, 4, 4, 3}, -2.0, 2.0, 1234);
  const TensorI targets = random_labels({2, 4, 4}, 3, 4321, 0.2);
  const auto res = ce_loss(logits, targets, 255);
  double sum = 0.0;
  for (long i = 0; i < res.pixel_losses.numel(); ++i) sum += res.pixel_losses.data()[i];
  CHECK(static_cast<double>(res.value) ==
        doctest::Approx(sum / static_cast<double>(res.counted)).epsilon(1e-6));
}
