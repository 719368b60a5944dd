#pragma once

// Central finite-difference oracle for tape gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mppde/random.hpp"
#include "mppde/tensor.hpp"

namespace mppde::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

/// |a - n| / max(|a|, |n|, floor), elementwise maximum.
inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Gradient of f at `inputs` from the tape.
inline std::vector<Tensor> tape_gradients(const std::vector<Tensor>& inputs, const ScalarFn& f) {
  Tape tape;
  std::vector<Tensor> vars;
  for (const auto& x : inputs) vars.push_back(tape.variable(x));
  const Tensor loss = f(vars);
  const Gradients g = tape.backward(loss);
  std::vector<Tensor> out;
  for (const auto& v : vars) out.push_back(g.of(v));
  return out;
}

/// Central differences of f, one coordinate at a time, on untaped copies.
inline std::vector<Tensor> numeric_gradients(const std::vector<Tensor>& inputs, const ScalarFn& f, double h = 1e-5) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<double> g(inputs[i].numel());
    for (std::size_t e = 0; e < g.size(); ++e) {
      auto plus = inputs;
      auto minus = inputs;
      plus[i].mutable_data()[e] += h;
      minus[i].mutable_data()[e] -= h;
      g[e] = (f(plus).item() - f(minus).item()) / (2.0 * h);
    }
    out.emplace_back(inputs[i].shape(), std::move(g));
  }
  return out;
}

inline double grad_check(const std::vector<Tensor>& inputs, const ScalarFn& f, double h = 1e-5) {
  const auto a = tape_gradients(inputs, f);
  const auto n = numeric_gradients(inputs, f, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, max_rel_error(a[i].data(), n[i].data()));
  return worst;
}

/// Contracts a tensor against fixed random weights so every output element
/// receives a distinct upstream gradient.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng)));
}

}  // namespace mppde::testing
