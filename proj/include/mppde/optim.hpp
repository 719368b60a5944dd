#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mppde/error.hpp"
#include "mppde/tensor.hpp"

namespace mppde {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update. `grads[i]` belongs to `params[i]`.
inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  require(params.size() == grads.size(), ErrorCode::ShapeMismatch,
          "adam_step: " + std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) +
              " gradients");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  require(state.first_moment.size() == params.size(), ErrorCode::ShapeMismatch,
          "optimizer state does not match the parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].shape() == grads[i].shape() && state.first_moment[i].size() == params[i].numel(),
            ErrorCode::ShapeMismatch,
            "adam_step: parameter " + std::to_string(i) + " has shape " + shape_string(params[i].shape()) +
                " but gradient " + shape_string(grads[i].shape()));
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    const auto g = grads[i].data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

inline double global_norm(std::span<const Tensor> grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

/// Rescales gradients in place so their global L2 norm is at most
/// `max_norm`; returns the norm before clipping.
inline double clip_grad_norm(std::span<Tensor> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g.mutable_data()) v *= f;
  }
  return norm;
}

}  // namespace mppde
