#pragma once

#include <cmath>
#include <vector>

#include "endocss/datamodel.hpp"
#include "endocss/error.hpp"
#include "endocss/rng.hpp"
#include "endocss/tensor.hpp"

namespace endocss {

/// Noise is one scalar ξ per sample per forward pass, so the multiplier is
/// uniform across a sample's logits and never changes a pixel's argmax.
struct SanCEConfig {
  double mu = 0.0;
  double sigma = 0.1;
  int cur_step = 0;  // 0 on the first task, where the loss reduces to plain CE
  int ignore_index = kDefaultIgnoreIndex;
};

inline void validate(const SanCEConfig& c) {
  require(c.sigma >= 0.0, "loss sigma must be >= 0, got ", c.sigma);
  require(c.cur_step >= 0, "loss cur_step must be >= 0, got ", c.cur_step);
}

inline double san_lambda(const SanCEConfig& c, double xi) {
  return 1.0 + c.cur_step * (c.mu + c.sigma * std::abs(xi));
}

inline std::vector<double> san_lambdas(const SanCEConfig& c, long batch, Rng& rng) {
  std::vector<double> lambdas(static_cast<std::size_t>(batch));
  for (auto& l : lambdas) l = san_lambda(c, rng.normal());
  return lambdas;
}

template <typename S>
BasicTensor<S> san_scale_with(const BasicTensor<S>& logits, const std::vector<double>& lambdas) {
  require(logits.rank() == 4, "san_scale expects {B,H,W,C} logits");
  require(static_cast<long>(lambdas.size()) == logits.dim(0), "need one scale per sample: got ",
          lambdas.size(), " for batch ", logits.dim(0));
  BasicTensor<S> out = logits;
  const long per_sample = logits.dim(1) * logits.dim(2) * logits.dim(3);
  for (long b = 0; b < logits.dim(0); ++b) {
    const S lambda = static_cast<S>(lambdas[static_cast<std::size_t>(b)]);
    S* block = out.data() + b * per_sample;
    for (long i = 0; i < per_sample; ++i) block[i] *= lambda;
  }
  return out;
}

template <typename S>
BasicTensor<S> san_scale(const BasicTensor<S>& logits, const SanCEConfig& c, Rng& rng) {
  validate(c);
  return san_scale_with(logits, san_lambdas(c, logits.dim(0), rng));
}

template <typename S>
struct LossResult {
  S value = S(0);
  long counted = 0;             // pixels contributing to the mean
  BasicTensor<S> pixel_losses;  // {B,H,W}, zero at ignored pixels
};

/// Mean softmax cross-entropy over non-ignored pixels. When `grad` is given
/// it receives d(mean loss)/d(logits); ignored pixels contribute no gradient.
/// An all-ignored target keeps the loss at 0 and warns.
template <typename S>
LossResult<S> ce_loss(const BasicTensor<S>& logits, const TensorI& targets, int ignore_index,
                      BasicTensor<S>* grad = nullptr) {
  require(logits.rank() == 4 && targets.rank() == 3, "ce_loss expects {B,H,W,C} and {B,H,W}");
  require(logits.dim(0) == targets.dim(0) && logits.dim(1) == targets.dim(1) &&
              logits.dim(2) == targets.dim(2),
          "logits and targets disagree on B,H,W");
  const long pixels = targets.numel();
  const long n_cls = logits.dim(3);

  LossResult<S> res;
  res.pixel_losses = BasicTensor<S>({targets.dim(0), targets.dim(1), targets.dim(2)});
  if (grad) {
    *grad = BasicTensor<S>(logits.shape());
  }

  // First pass: count valid pixels so gradients can be scaled by 1/counted.
  for (long p = 0; p < pixels; ++p) {
    const std::int32_t t = targets[p];
    if (t == ignore_index) continue;
    require(t >= 0 && t < n_cls, "target class ", t, " outside [0,", n_cls,
            ") and not ignore_index ", ignore_index);
    ++res.counted;
  }
  if (res.counted == 0) {
    warn("ce_loss: every target pixel is ignored; loss is 0");
    return res;
  }

  const double inv_count = 1.0 / static_cast<double>(res.counted);
  double total = 0.0;
  std::vector<double> expv(static_cast<std::size_t>(n_cls));
  for (long p = 0; p < pixels; ++p) {
    const std::int32_t t = targets[p];
    if (t == ignore_index) continue;
    const S* row = logits.data() + p * n_cls;
    double mx = static_cast<double>(row[0]);
    for (long c = 1; c < n_cls; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double sum = 0.0;
    for (long c = 0; c < n_cls; ++c) {
      expv[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(row[c]) - mx);
      sum += expv[static_cast<std::size_t>(c)];
    }
    const double lse = mx + std::log(sum);
    const double l = lse - static_cast<double>(row[t]);
    res.pixel_losses[p] = static_cast<S>(l);
    total += l;
    if (grad) {
      S* g = grad->data() + p * n_cls;
      for (long c = 0; c < n_cls; ++c) {
        double d = expv[static_cast<std::size_t>(c)] / sum;
        if (c == t) d -= 1.0;
        g[c] = static_cast<S>(d * inv_count);
      }
    }
  }
  res.value = static_cast<S>(total * inv_count);
  return res;
}

/// SAN-CE with pinned per-sample multipliers; the gradient is reported
/// w.r.t. the unscaled logits.
template <typename S>
LossResult<S> sance_loss_with(const BasicTensor<S>& logits, const TensorI& targets,
                              const SanCEConfig& c, const std::vector<double>& lambdas,
                              BasicTensor<S>* grad = nullptr) {
  const BasicTensor<S> scaled = san_scale_with(logits, lambdas);
  LossResult<S> res = ce_loss(scaled, targets, c.ignore_index, grad);
  if (grad) {
    const long per_sample = logits.dim(1) * logits.dim(2) * logits.dim(3);
    for (long b = 0; b < logits.dim(0); ++b) {
      const S lambda = static_cast<S>(lambdas[static_cast<std::size_t>(b)]);
      S* block = grad->data() + b * per_sample;
      for (long i = 0; i < per_sample; ++i) block[i] *= lambda;
    }
  }
  return res;
}

/// Full SAN-CE: draws one fresh ξ per sample from `rng` each call. When
/// `lambdas_out` is non-null the drawn multipliers are reported.
template <typename S>
LossResult<S> sance_loss(const BasicTensor<S>& logits, const TensorI& targets,
                         const SanCEConfig& c, Rng& rng, BasicTensor<S>* grad = nullptr,
                         std::vector<double>* lambdas_out = nullptr) {
  validate(c);
  const std::vector<double> lambdas = san_lambdas(c, logits.dim(0), rng);
  if (lambdas_out) *lambdas_out = lambdas;
  return sance_loss_with(logits, targets, c, lambdas, grad);
}

}  // namespace endocss
