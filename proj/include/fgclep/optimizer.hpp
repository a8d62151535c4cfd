#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "fgclep/errors.hpp"
#include "fgclep/params.hpp"

namespace fgclep::numerics {

struct OptimizerHyper {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct OptimizerState {
  OptimizerHyper hyper;
  long step = 0;
  std::vector<Mat> m;  // aligned with the ParamStore iteration order
  std::vector<Mat> v;

  OptimizerState() = default;
  explicit OptimizerState(const ParamStore& params, OptimizerHyper h = {}) : hyper(h) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = params.tensor(i);
      m.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
      v.push_back(Mat::Zero(t.value.rows(), t.value.cols()));
    }
  }
};

// Bias-corrected adaptive-moment update with decoupled weight decay; the decay
// is applied to the parameter before the moment term.
inline void adamw_step(ParamStore& params, const GradStore& grads, OptimizerState& state) {
  if (state.m.size() != params.size()) {
    fail(errc::config_error, "optimizer state does not match the parameter store");
  }
  state.step += 1;
  const double b1 = state.hyper.beta1;
  const double b2 = state.hyper.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& theta = params.tensor(i).value;
    const Mat& g = grads.tensor(i).value;
    Mat& m = state.m[i];
    Mat& v = state.v[i];
    theta.array() -= state.hyper.lr * state.hyper.weight_decay * theta.array();
    m.array() = b1 * m.array() + (1.0 - b1) * g.array();
    v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
    theta.array() -=
        state.hyper.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.hyper.eps);
  }
}

// Linear ramp to base_lr over the first ceil(warmup_frac * total) steps, then
// cosine decay to zero at total_steps.
inline double lr_at(long step, long total_steps, double base_lr, double warmup_frac) {
  if (step < 0 || step > total_steps) {
    fail(errc::config_error, "lr_at: step " + std::to_string(step) + " outside [0, " +
                                 std::to_string(total_steps) + "]");
  }
  if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) {
    fail(errc::config_error, "lr_at: warmup_frac must lie in (0, 1)");
  }
  const long warmup = static_cast<long>(std::ceil(warmup_frac * static_cast<double>(total_steps)));
  if (step <= warmup) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace fgclep::numerics
