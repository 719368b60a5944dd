#pragma once

// One-step and pushforward (stability) losses over temporally bundled
// windows, and the Adam training loop.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mppde/classical.hpp"
#include "mppde/error.hpp"
#include "mppde/model.hpp"
#include "mppde/optim.hpp"
#include "mppde/random.hpp"
#include "mppde/tensor.hpp"

namespace mppde {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  bool unroll_for_pushforward = true;
  double max_grad_norm = 1.0;
  /// Windows drawn per trajectory and epoch.
  std::size_t samples_per_trajectory = 1;

  void validate() const {
    require(epochs >= 1 && batch_size >= 1 && samples_per_trajectory >= 1, ErrorCode::InvalidArgument,
            "epochs, batch_size and samples_per_trajectory must be positive");
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorCode::InvalidArgument,
            "learning rate must be finite and non-negative");
    require(max_grad_norm > 0.0, ErrorCode::InvalidArgument, "max_grad_norm must be positive");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Window ending at save index `step` (= k) and the bundle(s) that follow.
/// Field values are [K][n_x] time-major.
struct TrainSample {
  std::size_t trajectory = 0;
  std::size_t step = 0;
  std::vector<double> window;
  std::vector<double> target;
  std::optional<std::vector<double>> next_target;
};

namespace detail {

inline std::vector<double> rows(const Field& u, std::size_t first, std::size_t count) {
  std::vector<double> out;
  out.reserve(count * u.cols());
  for (std::size_t r = first; r < first + count; ++r) out.insert(out.end(), u.row(r).begin(), u.row(r).end());
  return out;
}

}  // namespace detail

/// Range of valid k for one trajectory: window rows k-K+1..k must exist
/// and `bundles` target bundles after k.
inline std::pair<std::size_t, std::size_t> valid_steps(std::size_t n_t, std::size_t K, std::size_t bundles) {
  const std::size_t lo = K - 1;
  if (n_t < K + bundles * K) {
    fail(ErrorCode::InsufficientHorizon, "n_t = " + std::to_string(n_t) + " cannot hold a window and " +
                                             std::to_string(bundles) + " bundle(s) of K = " + std::to_string(K));
  }
  return {lo, n_t - 1 - bundles * K};
}

inline TrainSample make_sample(const TrajectorySet& data, std::size_t traj, std::size_t k, std::size_t K,
                               bool with_next) {
  const Field& u = data.trajectories.at(traj).u;
  const auto [lo, hi] = valid_steps(u.rows(), K, with_next ? 2 : 1);
  require(k >= lo && k <= hi, ErrorCode::InsufficientHorizon,
          "start step " + std::to_string(k) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  TrainSample s;
  s.trajectory = traj;
  s.step = k;
  s.window = detail::rows(u, k + 1 - K, K);
  s.target = detail::rows(u, k + 1, K);
  if (with_next) s.next_target = detail::rows(u, k + 1 + K, K);
  return s;
}

/// `per_trajectory` windows per trajectory, k uniform over the valid range.
inline std::vector<TrainSample> draw_samples(const TrajectorySet& data, std::size_t K, bool with_next,
                                             std::size_t per_trajectory, Rng& rng) {
  std::vector<TrainSample> out;
  for (std::size_t t = 0; t < data.size(); ++t) {
    const auto [lo, hi] = valid_steps(data.trajectories[t].u.rows(), K, with_next ? 2 : 1);
    for (std::size_t r = 0; r < per_trajectory; ++r) {
      const auto k = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
      out.push_back(make_sample(data, t, k, K, with_next));
    }
  }
  return out;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i - 1)));
    std::swap(v[i - 1], v[j]);
  }
}

/// Stacks time-major [K][n_x] blocks into a node-major [B * n_x, K] tensor.
inline Tensor stack_bundles(const std::vector<const std::vector<double>*>& blocks, std::size_t K, std::size_t n_x) {
  std::vector<double> out(blocks.size() * n_x * K);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = *blocks[b];
    require(blk.size() == K * n_x, ErrorCode::ShapeMismatch, "bundle block size mismatch");
    for (std::size_t l = 0; l < K; ++l)
      for (std::size_t i = 0; i < n_x; ++i) out[(b * n_x + i) * K + l] = blk[l * n_x + i];
  }
  return Tensor({blocks.size() * n_x, K}, std::move(out));
}

/// Graph input whose window is given explicitly (possibly a prediction) and
/// whose newest snapshot sits at save index `steps[b]`.
inline GraphInput batch_input(const ModelConfig& cfg, const TrajectorySet& data, std::span<const TrainSample> batch,
                              Tensor window, std::size_t step_shift = 0) {
  std::vector<GraphSpec> specs;
  for (const auto& s : batch) {
    const std::size_t k = s.step + step_shift;
    specs.push_back({data.trajectories.at(s.trajectory).params, data.grid.t_points.at(k), s.trajectory, k});
  }
  return make_graph_input(cfg, data.grid, specs, std::move(window));
}

inline GraphInput batch_input(const ModelConfig& cfg, const TrajectorySet& data, std::span<const TrainSample> batch) {
  std::vector<const std::vector<double>*> blocks;
  for (const auto& s : batch) blocks.push_back(&s.window);
  return batch_input(cfg, data, batch, stack_bundles(blocks, cfg.bundle_size, data.grid.n_x));
}

inline Tensor batch_targets(std::span<const TrainSample> batch, std::size_t K, std::size_t n_x, bool next) {
  std::vector<const std::vector<double>*> blocks;
  for (const auto& s : batch) {
    if (next) {
      require(s.next_target.has_value(), ErrorCode::InsufficientHorizon,
              "sample at step " + std::to_string(s.step) + " of trajectory " + std::to_string(s.trajectory) +
                  " has no second bundle");
      blocks.push_back(&*s.next_target);
    } else {
      blocks.push_back(&s.target);
    }
  }
  return stack_bundles(blocks, K, n_x);
}

/// A predictor maps a batched GraphInput to node-major bundles [N, K].
template <typename P>
concept BundlePredictor = requires(const P& p, const GraphInput& in) {
  { p(in) } -> std::convertible_to<Tensor>;
};

namespace detail {

template <typename P>
auto inference_copy(const P& p) {
  if constexpr (requires { p.detached(); }) {
    return p.detached();
  } else {
    return p;
  }
}

}  // namespace detail

/// Mean over the batch of the bundle MSE against ground truth.
template <BundlePredictor P>
Tensor one_step_loss(const P& model, const ModelConfig& cfg, const TrajectorySet& data,
                     std::span<const TrainSample> batch) {
  require(!batch.empty(), ErrorCode::InvalidArgument, "empty batch");
  const GraphInput in = batch_input(cfg, data, batch);
  return mse(model(in), batch_targets(batch, cfg.bundle_size, data.grid.n_x, false));
}

/// Input of the second pushforward pass: the first-pass prediction used as
/// the window ending at k + K.
inline GraphInput pushforward_input(const ModelConfig& cfg, const TrajectorySet& data,
                                    std::span<const TrainSample> batch, Tensor first_prediction) {
  return batch_input(cfg, data, batch, std::move(first_prediction), cfg.bundle_size);
}

/// Two-step unroll, A(A(u^k)) against u^{k+K+1..k+2K}. With `stop_gradient`
/// the first pass is computed off-tape, so gradients flow through the
/// second pass only.
template <BundlePredictor P>
Tensor unrolled_loss(const P& model, const ModelConfig& cfg, const TrajectorySet& data,
                     std::span<const TrainSample> batch, bool stop_gradient) {
  require(!batch.empty(), ErrorCode::InvalidArgument, "empty batch");
  const Tensor target = batch_targets(batch, cfg.bundle_size, data.grid.n_x, true);
  const GraphInput first = batch_input(cfg, data, batch);
  Tensor prediction = stop_gradient ? detach(detail::inference_copy(model)(first)) : model(first);
  const GraphInput second = pushforward_input(cfg, data, batch, std::move(prediction));
  return mse(model(second), target);
}

template <BundlePredictor P>
Tensor pushforward_loss(const P& model, const ModelConfig& cfg, const TrajectorySet& data,
                        std::span<const TrainSample> batch) {
  return unrolled_loss(model, cfg, data, batch, true);
}

struct LossParts {
  Tensor one_step;
  Tensor pushforward;
  Tensor total;
};

template <BundlePredictor P>
LossParts total_loss(const P& model, const ModelConfig& cfg, const TrajectorySet& data,
                     std::span<const TrainSample> batch, bool use_pushforward) {
  LossParts parts;
  parts.one_step = one_step_loss(model, cfg, data, batch);
  if (use_pushforward) {
    parts.pushforward = pushforward_loss(model, cfg, data, batch);
    parts.total = add(parts.one_step, parts.pushforward);
  } else {
    parts.pushforward = Tensor::scalar(0.0);
    parts.total = parts.one_step;
  }
  return parts;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double one_step = 0.0;
  double pushforward = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

/// Loss and parameter gradients for one batch.
struct BatchStep {
  LossParts loss;
  std::vector<Tensor> grads;
};

inline BatchStep loss_and_gradients(const MpPdeModel& model, const TrajectorySet& data,
                                    std::span<const TrainSample> batch, bool use_pushforward) {
  Tape tape;
  const MpPdeModel bound = model.bind(tape);
  BatchStep step;
  step.loss = total_loss(bound, model.config, data, batch, use_pushforward);
  const Gradients g = tape.backward(step.loss.total);
  bound.for_each_parameter([&](const std::string&, const Tensor& p) { step.grads.push_back(g.of(p)); });
  return step;
}

/// Seeded, single-threaded training; output is a pure function of
/// (model, dataset, config).
inline std::pair<MpPdeModel, TrainLog> train(MpPdeModel model, const TrajectorySet& data, const TrainConfig& cfg) {
  cfg.validate();
  model.config.validate_for(data.grid.n_t);
  const std::size_t K = model.config.bundle_size;
  const bool pushforward = cfg.unroll_for_pushforward;
  // Fail early when the horizon is too short.
  for (const auto& t : data.trajectories) valid_steps(t.u.rows(), K, pushforward ? 2 : 1);

  Rng rng(derive_seed(cfg.seed, 0x7472616eULL));
  AdamState adam;
  adam.lr = cfg.learning_rate;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  TrainLog log;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    auto samples = draw_samples(data, K, pushforward, cfg.samples_per_trajectory, rng);
    shuffle(samples, rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < samples.size(); first += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, samples.size() - first);
      const std::span<const TrainSample> batch(samples.data() + first, count);
      BatchStep step = loss_and_gradients(model, data, batch, pushforward);
      const double total = step.loss.total.item();
      if (!std::isfinite(total)) {
        fail(ErrorCode::SolutionBlowup,
             "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      clip_grad_norm(step.grads, cfg.max_grad_norm);
      auto params = model.parameters();
      adam_step(params, step.grads, adam);
      model.set_parameters(params);
      rec.one_step += step.loss.one_step.item();
      rec.pushforward += step.loss.pushforward.item();
      rec.total += total;
      ++batches;
    }
    rec.one_step /= static_cast<double>(batches);
    rec.pushforward /= static_cast<double>(batches);
    rec.total /= static_cast<double>(batches);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
  }
  return {std::move(model), std::move(log)};
}

}  // namespace mppde
