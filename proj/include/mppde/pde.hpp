#pragma once

// Benchmark PDE family in conservation form
//
//   u_t + (alpha u^2 - beta u_x + gamma u_xx)_x = delta(t, x),  u(0, x) = delta(0, x)
//
// together with the forcing term, grids and trajectory containers shared by
// the classical solver, the dataset generator and the neural model.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mppde/error.hpp"
#include "mppde/random.hpp"

namespace mppde {

enum class BoundaryKind { Periodic, Dirichlet, Neumann };

constexpr std::string_view to_string(BoundaryKind kind) {
  switch (kind) {
    case BoundaryKind::Periodic: return "periodic";
    case BoundaryKind::Dirichlet: return "dirichlet";
    case BoundaryKind::Neumann: return "neumann";
  }
  return "periodic";
}

inline BoundaryKind boundary_kind_from_string(std::string_view name) {
  if (name == "periodic") return BoundaryKind::Periodic;
  if (name == "dirichlet") return BoundaryKind::Dirichlet;
  if (name == "neumann") return BoundaryKind::Neumann;
  fail(ErrorCode::InvalidArgument, "unknown boundary '" + std::string(name) + "'");
}

/// Boundary condition. `value` is the prescribed boundary value for
/// Dirichlet and the prescribed outward derivative u_x for Neumann.
struct Boundary {
  BoundaryKind kind = BoundaryKind::Periodic;
  double value = 0.0;

  static Boundary periodic() { return {}; }
  static Boundary dirichlet(double v) { return {BoundaryKind::Dirichlet, v}; }
  static Boundary neumann(double g) { return {BoundaryKind::Neumann, g}; }

  bool is_periodic() const { return kind == BoundaryKind::Periodic; }
  friend bool operator==(const Boundary&, const Boundary&) = default;
};

/// Coefficient triple (alpha, beta, gamma) with domain metadata.
struct PdeParams {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double domain_length = 16.0;
  Boundary boundary{};

  /// Validating constructor; plain aggregate initialization skips the checks.
  static PdeParams make(double alpha, double beta, double gamma, double domain_length,
                        Boundary boundary = Boundary::periodic()) {
    PdeParams p{alpha, beta, gamma, domain_length, boundary};
    p.validate();
    return p;
  }

  void validate() const {
    require(std::isfinite(alpha) && std::isfinite(beta) && std::isfinite(gamma) &&
                std::isfinite(domain_length) && std::isfinite(boundary.value),
            ErrorCode::InvalidArgument, "PDE coefficients must be finite");
    require(domain_length > 0.0, ErrorCode::InvalidArgument, "domain_length must be positive");
    require(beta >= 0.0, ErrorCode::InvalidArgument, "negative diffusion (beta < 0) is ill-posed");
  }

  friend bool operator==(const PdeParams&, const PdeParams&) = default;
};

/// Flux J = alpha u^2 - beta u_x + gamma u_xx.
constexpr double flux(double u, double du_dx, double d2u_dx2, const PdeParams& p) {
  return p.alpha * u * u - p.beta * du_dx + p.gamma * d2u_dx2;
}

struct ForcingComponent {
  double amplitude = 0.0;
  double omega = 0.0;
  int wavenumber = 0;
  double phase = 0.0;

  friend bool operator==(const ForcingComponent&, const ForcingComponent&) = default;
};

/// delta(t, x) = sum_j A_j sin(omega_j t + 2 pi l_j x / L + phi_j)
struct ForcingTerm {
  std::vector<ForcingComponent> components;

  bool empty() const { return components.empty(); }
  friend bool operator==(const ForcingTerm&, const ForcingTerm&) = default;
};

inline double evaluate_forcing(const ForcingTerm& forcing, double t, double x, double length) {
  require(length > 0.0, ErrorCode::InvalidArgument, "domain length must be positive");
  double sum = 0.0;
  for (const auto& c : forcing.components) {
    sum += c.amplitude *
           std::sin(c.omega * t + 2.0 * std::numbers::pi * c.wavenumber * x / length + c.phase);
  }
  return sum;
}

/// Uniform cell-centred grid with evenly spaced save times.
struct Grid {
  std::size_t n_x = 0;
  std::size_t n_t = 0;
  double length = 0.0;
  double dx = 0.0;
  double t_end = 0.0;
  std::vector<double> x_centers;
  std::vector<double> t_points;

  static Grid make(std::size_t n_x, std::size_t n_t, double length, double t_end) {
    require(n_x >= 1, ErrorCode::InvalidArgument, "n_x must be at least 1");
    require(n_t >= 2, ErrorCode::InvalidArgument, "n_t must be at least 2");
    require(length > 0.0 && std::isfinite(length), ErrorCode::InvalidArgument,
            "domain length must be positive");
    require(t_end > 0.0 && std::isfinite(t_end), ErrorCode::InvalidArgument,
            "t_end must be positive");
    Grid g;
    g.n_x = n_x;
    g.n_t = n_t;
    g.length = length;
    g.t_end = t_end;
    g.dx = length / static_cast<double>(n_x);
    g.x_centers.resize(n_x);
    for (std::size_t i = 0; i < n_x; ++i) g.x_centers[i] = (static_cast<double>(i) + 0.5) * g.dx;
    g.t_points.resize(n_t);
    for (std::size_t k = 0; k < n_t; ++k) {
      g.t_points[k] = t_end * static_cast<double>(k) / static_cast<double>(n_t - 1);
    }
    g.t_points.back() = t_end;
    return g;
  }

  /// Save interval.
  double dt() const { return t_end / static_cast<double>(n_t - 1); }

  /// Same time axis, spatial resolution multiplied by `factor`.
  Grid refined(std::size_t factor) const { return make(n_x * factor, n_t, length, t_end); }

  friend bool operator==(const Grid&, const Grid&) = default;
};

inline std::vector<double> initial_condition(const ForcingTerm& forcing, const Grid& grid) {
  std::vector<double> u(grid.n_x);
  for (std::size_t i = 0; i < grid.n_x; ++i) {
    u[i] = evaluate_forcing(forcing, 0.0, grid.x_centers[i], grid.length);
  }
  return u;
}

/// Row-major [n_t][n_x] solution field.
class Field {
 public:
  Field() = default;
  Field(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Field(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorCode::ShapeMismatch, "field data size mismatch");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// One ground-truth solution. `initial` is the profile that produced u[0];
/// it equals `forcing` for benchmark trajectories.
struct Trajectory {
  Grid grid;
  PdeParams params;
  ForcingTerm forcing;
  ForcingTerm initial;
  std::uint64_t seed = 0;
  Field u;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

enum class Preset { E1, E2, E3 };

constexpr std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::E1: return "e1";
    case Preset::E2: return "e2";
    case Preset::E3: return "e3";
  }
  return "e1";
}

inline std::optional<Preset> parse_preset(std::string_view name) {
  if (name == "e1" || name == "E1") return Preset::E1;
  if (name == "e2" || name == "E2") return Preset::E2;
  if (name == "e3" || name == "E3") return Preset::E3;
  return std::nullopt;
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

/// Sampling configuration for the benchmark presets.
struct PresetConfig {
  double fixed_alpha = 0.5;
  Range beta_range{0.0, 0.2};
  Range alpha_range_mixed{0.0, 1.0};
  Range beta_range_mixed{0.0, 0.2};
  Range gamma_range_mixed{0.0, 1.0};
  double domain_length = 16.0;
  double t_end = 4.0;
  int num_components = 5;
  Range amplitude{-0.5, 0.5};
  Range omega{-0.4, 0.4};
  int min_wavenumber = 1;
  int max_wavenumber = 3;

  friend bool operator==(const PresetConfig&, const PresetConfig&) = default;
};

inline ForcingTerm sample_forcing(Rng& rng, const PresetConfig& cfg) {
  ForcingTerm f;
  f.components.reserve(static_cast<std::size_t>(cfg.num_components));
  for (int j = 0; j < cfg.num_components; ++j) {
    ForcingComponent c;
    c.amplitude = rng.uniform(cfg.amplitude.lo, cfg.amplitude.hi);
    c.omega = rng.uniform(cfg.omega.lo, cfg.omega.hi);
    c.wavenumber = static_cast<int>(rng.integer(cfg.min_wavenumber, cfg.max_wavenumber));
    c.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    f.components.push_back(c);
  }
  return f;
}

/// Draws (params, forcing) for a preset. E2 diffusion is drawn from the
/// half-open interval (lo, hi] so it is strictly positive.
inline std::pair<PdeParams, ForcingTerm> make_preset(Preset preset, std::uint64_t seed,
                                                     const PresetConfig& cfg = {}) {
  Rng rng(seed);
  PdeParams p;
  p.domain_length = cfg.domain_length;
  switch (preset) {
    case Preset::E1:
      p.alpha = cfg.fixed_alpha;
      break;
    case Preset::E2:
      p.alpha = cfg.fixed_alpha;
      p.beta = cfg.beta_range.hi - (cfg.beta_range.hi - cfg.beta_range.lo) * rng.uniform();
      break;
    case Preset::E3:
      p.alpha = rng.uniform(cfg.alpha_range_mixed.lo, cfg.alpha_range_mixed.hi);
      p.beta = rng.uniform(cfg.beta_range_mixed.lo, cfg.beta_range_mixed.hi);
      p.gamma = rng.uniform(cfg.gamma_range_mixed.lo, cfg.gamma_range_mixed.hi);
      break;
  }
  p.validate();
  ForcingTerm forcing = sample_forcing(rng, cfg);
  return {p, forcing};
}

}  // namespace mppde
