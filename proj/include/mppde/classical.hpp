#pragma once

// Method-of-lines reference solver: WENO5 + local Lax-Friedrichs for the
// advective flux, central differences for diffusion and dispersion, SSP-RK3
// in time under a CFL restriction.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "mppde/error.hpp"
#include "mppde/pde.hpp"
#include "mppde/random.hpp"
#include "mppde/stencil.hpp"
#include "mppde/weno.hpp"

namespace mppde {

struct SolveConfig {
  double cfl_number = 0.5;
  std::size_t fine_factor = 4;
  std::size_t max_steps = 2'000'000;
  double dt_max = 1.0;

  void validate() const {
    require(cfl_number > 0.0 && cfl_number <= 1.0, ErrorCode::InvalidArgument,
            "cfl_number must lie in (0, 1]");
    require(fine_factor >= 1, ErrorCode::InvalidArgument, "fine_factor must be >= 1");
    require(max_steps >= 1, ErrorCode::InvalidArgument, "max_steps must be >= 1");
    require(dt_max > 0.0, ErrorCode::InvalidArgument, "dt_max must be positive");
  }

  friend bool operator==(const SolveConfig&, const SolveConfig&) = default;
};

inline constexpr int kDiffusionAccuracy = 4;
inline constexpr int kDispersionAccuracy = 4;

/// Largest |symbol| of a stencil over the resolved wavenumbers, in units of 1/dx^n.
inline double stencil_spectral_radius(const StencilCoeffs& s) {
  constexpr int samples = 4096;
  double best = 0.0;
  for (int k = 0; k <= samples; ++k) {
    const double theta = std::numbers::pi * k / samples;
    double re = 0.0;
    double im = 0.0;
    for (std::size_t j = 0; j < s.offsets.size(); ++j) {
      re += s.coeffs[j] * std::cos(s.offsets[j] * theta);
      im += s.coeffs[j] * std::sin(s.offsets[j] * theta);
    }
    best = std::max(best, std::hypot(re, im));
  }
  return best;
}

/// Dispersive stability constant: dt <= C3 dx^3 / |gamma| keeps the purely
/// imaginary spectrum of the third-derivative stencil inside the SSP-RK3
/// stability region, whose imaginary-axis extent is sqrt(3).
inline double dispersion_constant() {
  static const double c3 = std::sqrt(3.0) / stencil_spectral_radius(central_stencil(3, kDispersionAccuracy));
  return c3;
}

/// Spatial operator du/dt = L(u, t) for one parameter set and cell size.
class MolOperator {
 public:
  MolOperator(PdeParams params, ForcingTerm forcing, double dx, std::size_t n)
      : params_(std::move(params)),
        forcing_(std::move(forcing)),
        dx_(dx),
        n_(n),
        d2_(central_stencil(2, kDiffusionAccuracy)),
        d3_(central_stencil(3, kDispersionAccuracy)) {
    require(n_ >= 6, ErrorCode::GridTooSmall, "WENO5 needs at least 6 cells, got " + std::to_string(n_));
    if (params_.beta != 0.0) {
      require(n_ > static_cast<std::size_t>(2 + kDiffusionAccuracy), ErrorCode::GridTooSmall,
              "grid too small for the diffusion stencil");
    }
    if (params_.gamma != 0.0) {
      require(n_ > static_cast<std::size_t>(3 + kDispersionAccuracy), ErrorCode::GridTooSmall,
              "grid too small for the dispersion stencil");
    }
    x_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) x_[i] = (static_cast<double>(i) + 0.5) * dx_;
  }

  std::size_t size() const { return n_; }
  double dx() const { return dx_; }
  const PdeParams& params() const { return params_; }

  std::vector<double> operator()(std::span<const double> u, double t) const {
    require(u.size() == n_, ErrorCode::ShapeMismatch, "state size does not match the operator");
    const std::size_t g = std::max<std::size_t>(kWenoGhosts, static_cast<std::size_t>(d3_.half_width()));
    const auto padded = with_ghosts(u, g, params_.boundary, dx_);
    std::vector<double> rhs(n_, 0.0);

    if (params_.alpha != 0.0) {
      const std::span<const double> inner(padded.data() + (g - kWenoGhosts), n_ + 2 * kWenoGhosts);
      const FaceValues faces = weno5_reconstruct_padded(inner, n_);
      std::vector<double> face_flux(n_ + 1);
      for (std::size_t j = 0; j <= n_; ++j) {
        // Dissipation speed: max |f'(u)| = |2 alpha u| over the six cells
        // feeding this face.
        double speed = 0.0;
        for (std::size_t c = j; c < j + 6; ++c) speed = std::max(speed, std::abs(inner[c]));
        speed *= 2.0 * std::abs(params_.alpha);
        const double ul = faces.left[j];
        const double ur = faces.right[j];
        face_flux[j] = 0.5 * params_.alpha * (ul * ul + ur * ur) - 0.5 * speed * (ur - ul);
      }
      for (std::size_t i = 0; i < n_; ++i) rhs[i] = -(face_flux[i + 1] - face_flux[i]) / dx_;
    }
    if (params_.beta != 0.0) {
      const std::span<const double> inner(padded.data() + (g - d2_.half_width()),
                                          n_ + 2 * static_cast<std::size_t>(d2_.half_width()));
      const auto uxx = apply_stencil(d2_, inner, n_, dx_);
      for (std::size_t i = 0; i < n_; ++i) rhs[i] += params_.beta * uxx[i];
    }
    if (params_.gamma != 0.0) {
      const std::span<const double> inner(padded.data() + (g - d3_.half_width()),
                                          n_ + 2 * static_cast<std::size_t>(d3_.half_width()));
      const auto uxxx = apply_stencil(d3_, inner, n_, dx_);
      for (std::size_t i = 0; i < n_; ++i) rhs[i] -= params_.gamma * uxxx[i];
    }
    if (!forcing_.empty()) {
      for (std::size_t i = 0; i < n_; ++i) {
        rhs[i] += evaluate_forcing(forcing_, t, x_[i], params_.domain_length);
      }
    }
    return rhs;
  }

 private:
  PdeParams params_;
  ForcingTerm forcing_;
  double dx_;
  std::size_t n_;
  StencilCoeffs d2_;
  StencilCoeffs d3_;
  std::vector<double> x_;
};

inline std::vector<double> semidiscrete_rhs(std::span<const double> u, double t, const PdeParams& params,
                                            const ForcingTerm& forcing, double dx) {
  return MolOperator(params, forcing, dx, u.size())(u, t);
}

inline double cfl_dt(std::span<const double> u, const PdeParams& params, double dx, double cfl,
                     double dt_max = SolveConfig{}.dt_max) {
  require(cfl > 0.0 && cfl <= 1.0, ErrorCode::InvalidArgument, "cfl must lie in (0, 1]");
  double limit = std::numeric_limits<double>::infinity();
  if (params.alpha != 0.0) {
    double umax = 0.0;
    for (double v : u) umax = std::max(umax, std::abs(v));
    const double speed = 2.0 * std::abs(params.alpha) * umax;
    if (speed > 0.0) limit = std::min(limit, dx / speed);
  }
  if (params.beta != 0.0) limit = std::min(limit, dx * dx / (2.0 * params.beta));
  if (params.gamma != 0.0) {
    limit = std::min(limit, dx * dx * dx / std::abs(params.gamma) * dispersion_constant());
  }
  if (!std::isfinite(limit)) return dt_max;
  return std::min(cfl * limit, dt_max);
}

/// Three-stage SSP Runge-Kutta (Shu-Osher), written in increment form so a
/// zero right-hand side leaves the state bitwise unchanged.
template <typename Rhs>
std::vector<double> ssprk3_step(std::span<const double> u, double t, double dt, const Rhs& rhs) {
  require(dt > 0.0, ErrorCode::InvalidArgument, "dt must be positive");
  const std::size_t n = u.size();
  std::vector<double> u1(n), u2(n), u3(n);

  const std::vector<double> l0 = rhs(std::span<const double>(u), t);
  for (std::size_t i = 0; i < n; ++i) u1[i] = u[i] + dt * l0[i];

  const std::vector<double> l1 = rhs(std::span<const double>(u1), t + dt);
  for (std::size_t i = 0; i < n; ++i) u2[i] = u[i] + 0.25 * ((u1[i] - u[i]) + dt * l1[i]);

  const std::vector<double> l2 = rhs(std::span<const double>(u2), t + 0.5 * dt);
  for (std::size_t i = 0; i < n; ++i) {
    u3[i] = u[i] + (2.0 / 3.0) * ((u2[i] - u[i]) + dt * l2[i]);
    if (!std::isfinite(u3[i])) {
      fail(ErrorCode::SolutionBlowup, "non-finite value at t = " + std::to_string(t + dt));
    }
  }
  return u3;
}

/// Conservative down-sampling: each coarse cell is the mean of `factor` fine cells.
inline std::vector<double> block_average(std::span<const double> fine, std::size_t factor) {
  require(factor >= 1 && fine.size() % factor == 0, ErrorCode::ShapeMismatch,
          "fine size must be a multiple of the block factor");
  std::vector<double> coarse(fine.size() / factor);
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < factor; ++j) s += fine[i * factor + j];
    coarse[i] = s / static_cast<double>(factor);
  }
  return coarse;
}

inline Field block_average(const Field& fine, std::size_t factor) {
  if (factor == 1) return fine;
  Field out(fine.rows(), fine.cols() / factor);
  for (std::size_t r = 0; r < fine.rows(); ++r) {
    const auto row = block_average(fine.row(r), factor);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

/// Advances `u` from `t0` to `t1` with CFL-limited steps, landing exactly on t1.
inline std::size_t integrate_to(std::vector<double>& u, double t0, double t1, const MolOperator& op,
                                const SolveConfig& cfg, std::size_t steps_taken = 0) {
  double t = t0;
  while (t < t1) {
    if (steps_taken >= cfg.max_steps) {
      fail(ErrorCode::StepLimitExceeded,
           "max_steps = " + std::to_string(cfg.max_steps) + " reached at t = " + std::to_string(t));
    }
    double dt = cfl_dt(u, op.params(), op.dx(), cfg.cfl_number, cfg.dt_max);
    const bool last = t + dt >= t1 - 1e-12 * std::max(1.0, std::abs(t1));
    if (last) dt = t1 - t;
    u = ssprk3_step(u, t, dt, op);
    t = last ? t1 : t + dt;
    ++steps_taken;
  }
  return steps_taken;
}

/// Solves on a grid refined by `fine_factor`, saving block averages at every
/// save time. Row 0 is the initial profile sampled on the target grid.
inline Trajectory solve_trajectory(const PdeParams& params, const ForcingTerm& initial,
                                   const ForcingTerm& forcing, const Grid& grid,
                                   const SolveConfig& config) {
  params.validate();
  config.validate();
  require(params.domain_length == grid.length, ErrorCode::InvalidArgument,
          "grid length does not match the PDE domain length");
  const Grid fine = grid.refined(config.fine_factor);
  const MolOperator op(params, forcing, fine.dx, fine.n_x);

  Trajectory traj;
  traj.grid = grid;
  traj.params = params;
  traj.forcing = forcing;
  traj.initial = initial;
  traj.u = Field(grid.n_t, grid.n_x);

  std::vector<double> state = initial_condition(initial, fine);
  const auto u0 = initial_condition(initial, grid);
  std::copy(u0.begin(), u0.end(), traj.u.row(0).begin());

  std::size_t steps = 0;
  for (std::size_t k = 1; k < grid.n_t; ++k) {
    steps = integrate_to(state, grid.t_points[k - 1], grid.t_points[k], op, config, steps);
    const auto coarse = block_average(state, config.fine_factor);
    std::copy(coarse.begin(), coarse.end(), traj.u.row(k).begin());
  }
  return traj;
}

inline Trajectory solve_trajectory(const PdeParams& params, const ForcingTerm& forcing, const Grid& grid,
                                   const SolveConfig& config) {
  return solve_trajectory(params, forcing, forcing, grid, config);
}

struct TrajectorySet {
  Preset preset = Preset::E1;
  PresetConfig preset_config;
  SolveConfig solve_config;
  std::uint64_t seed = 0;
  Grid grid;
  std::vector<Trajectory> trajectories;

  std::size_t size() const { return trajectories.size(); }
  friend bool operator==(const TrajectorySet&, const TrajectorySet&) = default;
};

inline Grid preset_grid(const PresetConfig& cfg, std::size_t n_x, std::size_t n_t) {
  return Grid::make(n_x, n_t, cfg.domain_length, cfg.t_end);
}

/// Seed of trajectory `index` within a dataset generated from `master`.
inline std::uint64_t trajectory_seed(std::uint64_t master, std::size_t index) {
  return derive_seed(master, index);
}

/// Generates trajectories concurrently on up to `threads` workers; the
/// output is ordered by index and independent of the worker count.
inline TrajectorySet generate_dataset(Preset preset, std::size_t n_trajectories, const Grid& grid,
                                      std::uint64_t seed, const SolveConfig& config,
                                      const PresetConfig& preset_config = {}, unsigned threads = 1) {
  require(n_trajectories >= 1, ErrorCode::InvalidArgument, "n_trajectories must be >= 1");
  require(grid.length == preset_config.domain_length, ErrorCode::InvalidArgument,
          "grid length does not match the preset domain length");
  TrajectorySet set;
  set.preset = preset;
  set.preset_config = preset_config;
  set.solve_config = config;
  set.seed = seed;
  set.grid = grid;
  set.trajectories.resize(n_trajectories);

  std::vector<std::exception_ptr> errors(n_trajectories);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n_trajectories; i = next++) {
      try {
        const std::uint64_t s = trajectory_seed(seed, i);
        auto [params, forcing] = make_preset(preset, s, preset_config);
        set.trajectories[i] = solve_trajectory(params, forcing, grid, config);
        set.trajectories[i].seed = s;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_trajectories)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < n_trajectories; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "trajectory " + std::to_string(i) + ": " + e.what());
    }
  }
  return set;
}

}  // namespace mppde
