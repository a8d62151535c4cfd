#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fgclep/errors.hpp"
#include "fgclep/params.hpp"
#include "fgclep/rng.hpp"

namespace fgclep::numerics {

// A training batch: borrowed signal matrices plus tokenized reports. Loss
// functions that do not touch inputs (e.g. test regularizers) may ignore it.
struct Batch {
  std::vector<const Mat*> signals;
  std::vector<std::vector<int>> token_ids;

  std::size_t size() const { return std::max(signals.size(), token_ids.size()); }
};

// Computes the loss; when `grads` is non-null, accumulates d loss / d theta
// for every parameter. The forward value must not depend on the grads branch.
using LossFn = std::function<double(const ParamStore&, const Batch&, GradStore*)>;

struct ForwardBackwardResult {
  double loss = 0.0;
  GradStore grads;
};

inline double forward_only(const ParamStore& params, const Batch& batch, const LossFn& loss_fn) {
  const double loss = loss_fn(params, batch, nullptr);
  if (!std::isfinite(loss)) fail(errc::numeric_failure, "loss is not finite");
  return loss;
}

inline ForwardBackwardResult forward_backward(const ParamStore& params, const Batch& batch,
                                              const LossFn& loss_fn) {
  if (batch.size() == 0) fail(errc::config_error, "forward_backward: empty batch");
  ForwardBackwardResult res{0.0, GradStore(params)};
  res.loss = loss_fn(params, batch, &res.grads);
  if (!std::isfinite(res.loss)) fail(errc::numeric_failure, "loss is not finite");
  if (auto bad = res.grads.first_nonfinite()) {
    fail(errc::numeric_failure, "gradient of '" + *bad + "' is not finite");
  }
  return res;
}

// Central-difference check over up to n_coords sampled coordinates per tensor.
// Returns max |g_analytic - g_numeric| / max(1e-12, |g_analytic| + |g_numeric|).
inline double grad_check(const ParamStore& params, const Batch& batch, const LossFn& loss_fn,
                         double step, int n_coords, std::uint64_t seed = 0x5eedULL) {
  if (step <= 0.0) fail(errc::config_error, "grad_check: step must be positive");
  const ForwardBackwardResult fb = forward_backward(params, batch, loss_fn);
  ParamStore work = params;
  double max_rel = 0.0;
  for (std::size_t ti = 0; ti < work.size(); ++ti) {
    Mat& value = work.tensor(ti).value;
    const Mat& analytic = fb.grads.tensor(ti).value;
    const Eigen::Index n = value.size();
    std::vector<Eigen::Index> coords;
    if (n <= n_coords) {
      coords.resize(static_cast<std::size_t>(n));
      for (Eigen::Index k = 0; k < n; ++k) coords[static_cast<std::size_t>(k)] = k;
    } else {
      auto g = rng::stream(seed, 100 + ti);
      std::vector<char> taken(static_cast<std::size_t>(n), 0);
      while (coords.size() < static_cast<std::size_t>(n_coords)) {
        const Eigen::Index c = static_cast<Eigen::Index>(g.below(static_cast<std::uint64_t>(n)));
        if (!taken[static_cast<std::size_t>(c)]) {
          taken[static_cast<std::size_t>(c)] = 1;
          coords.push_back(c);
        }
      }
    }
    for (Eigen::Index c : coords) {
      double* coeff = value.data() + c;
      const double original = *coeff;
      *coeff = original + step;
      const double lp = loss_fn(work, batch, nullptr);
      *coeff = original - step;
      const double lm = loss_fn(work, batch, nullptr);
      *coeff = original;
      const double numeric = (lp - lm) / (2.0 * step);
      const double ga = *(analytic.data() + c);
      const double rel =
          std::abs(ga - numeric) / std::max(1e-12, std::abs(ga) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace fgclep::numerics
