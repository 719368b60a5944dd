#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mppde/classical.hpp"
#include "mppde/error.hpp"
#include "mppde/model.hpp"
#include "mppde/pde.hpp"

namespace mppde {

inline void require_same_shape(const Field& a, const Field& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::ShapeMismatch,
          "prediction is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " but truth is " +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

/// Spatial mean squared error of every time row.
inline std::vector<double> spatial_mse(const Field& pred, const Field& truth) {
  require_same_shape(pred, truth);
  std::vector<double> out(pred.rows());
  for (std::size_t t = 0; t < pred.rows(); ++t) {
    double s = 0.0;
    for (std::size_t x = 0; x < pred.cols(); ++x) {
      const double d = pred(t, x) - truth(t, x);
      s += d * d;
    }
    out[t] = s / static_cast<double>(pred.cols());
  }
  return out;
}

/// sum_t (1/n_x) sum_x (pred - truth)^2
inline double accumulated_error(const Field& pred, const Field& truth) {
  double acc = 0.0;
  for (double m : spatial_mse(pred, truth)) acc += m;
  return acc;
}

/// Time of the first row whose spatial MSE exceeds `threshold`;
/// t_end when no row does.
inline double survival_time(const Field& pred, const Field& truth, const Grid& grid, double threshold) {
  require(threshold > 0.0, ErrorCode::InvalidArgument, "survival threshold must be positive");
  require(pred.rows() == grid.n_t, ErrorCode::ShapeMismatch, "field rows differ from the grid's n_t");
  const auto errors = spatial_mse(pred, truth);
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (errors[k] > threshold) return grid.t_points[k];
  }
  return grid.t_end;
}

struct EvalRow {
  std::string preset;
  std::size_t n_t = 0;
  std::size_t n_x = 0;
  std::string solver;
  std::uint64_t seed = 0;
  double acc_error = 0.0;
  double survival_time = 0.0;
  double runtime_ms = 0.0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalAggregate {
  std::string preset;
  std::size_t n_t = 0;
  std::size_t n_x = 0;
  std::string solver;
  std::size_t count = 0;
  double acc_error_mean = 0.0;
  double acc_error_std = 0.0;
  double survival_mean = 0.0;
  double survival_std = 0.0;
  double runtime_ms_mean = 0.0;
  double runtime_ms_std = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double threshold = 0.01;

  std::vector<EvalAggregate> aggregates() const {
    using Key = std::tuple<std::string, std::size_t, std::size_t, std::string>;
    std::map<Key, std::vector<const EvalRow*>> groups;
    std::vector<Key> order;
    for (const auto& r : rows) {
      Key key{r.preset, r.n_t, r.n_x, r.solver};
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(&r);
    }
    std::vector<EvalAggregate> out;
    for (const auto& key : order) {
      const auto& g = groups[key];
      auto stats = [&](auto field) {
        double m = 0.0;
        for (const auto* r : g) m += field(*r);
        m /= static_cast<double>(g.size());
        double v = 0.0;
        for (const auto* r : g) v += (field(*r) - m) * (field(*r) - m);
        return std::pair{m, g.size() > 1 ? std::sqrt(v / static_cast<double>(g.size() - 1)) : 0.0};
      };
      EvalAggregate a;
      std::tie(a.preset, a.n_t, a.n_x, a.solver) = key;
      a.count = g.size();
      std::tie(a.acc_error_mean, a.acc_error_std) = stats([](const EvalRow& r) { return r.acc_error; });
      std::tie(a.survival_mean, a.survival_std) = stats([](const EvalRow& r) { return r.survival_time; });
      std::tie(a.runtime_ms_mean, a.runtime_ms_std) = stats([](const EvalRow& r) { return r.runtime_ms; });
      out.push_back(a);
    }
    return out;
  }
};

inline constexpr const char* kCsvHeader = "preset,n_t,n_x,solver,seed,acc_error,survival_time,runtime_ms";

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const EvalReport& report) {
  os << kCsvHeader << '\n';
  for (const auto& r : report.rows) {
    os << r.preset << ',' << r.n_t << ',' << r.n_x << ',' << r.solver << ',' << r.seed << ','
       << format_double(r.acc_error) << ',' << format_double(r.survival_time) << ','
       << format_double(r.runtime_ms) << '\n';
  }
}

inline EvalReport read_csv(std::istream& is) {
  EvalReport report;
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == kCsvHeader, ErrorCode::FormatError,
          "unexpected CSV header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == 8, ErrorCode::FormatError, "CSV row with " + std::to_string(cells.size()) + " cells");
    try {
      EvalRow r;
      r.preset = cells[0];
      r.n_t = std::stoull(cells[1]);
      r.n_x = std::stoull(cells[2]);
      r.solver = cells[3];
      r.seed = std::stoull(cells[4]);
      r.acc_error = std::stod(cells[5]);
      r.survival_time = std::stod(cells[6]);
      r.runtime_ms = std::stod(cells[7]);
      report.rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      fail(ErrorCode::FormatError, "malformed CSV row '" + line + "'");
    }
  }
  return report;
}

// --- solvers ----------------------------------------------------------------

enum class SolverKind { Truth, Weno5, Neural };

/// A solver under evaluation. Neural solvers carry their model.
struct SolverSpec {
  std::string id;
  SolverKind kind = SolverKind::Weno5;
  std::shared_ptr<const MpPdeModel> model;

  static SolverSpec truth() { return {"truth", SolverKind::Truth, nullptr}; }
  static SolverSpec weno5() { return {"weno5", SolverKind::Weno5, nullptr}; }
  static SolverSpec neural(std::string id, std::shared_ptr<const MpPdeModel> m) {
    return {std::move(id), SolverKind::Neural, std::move(m)};
  }
};

/// Autoregressive prediction of a whole trajectory: the first K rows are
/// taken from `truth`, the rest predicted bundle by bundle.
inline Field neural_trajectory(const MpPdeModel& model, const Trajectory& truth) {
  const std::size_t K = model.config.bundle_size;
  const Grid& grid = truth.grid;
  model.config.validate_for(grid.n_t);
  Field out(grid.n_t, grid.n_x);
  for (std::size_t r = 0; r < K; ++r) std::copy(truth.u.row(r).begin(), truth.u.row(r).end(), out.row(r).begin());
  const std::size_t remaining = grid.n_t - K;
  const std::size_t steps = (remaining + K - 1) / K;
  std::vector<double> window(truth.u.data().begin(),
                             truth.u.data().begin() + static_cast<std::ptrdiff_t>(K * grid.n_x));
  const Field pred = rollout(model, window, grid, truth.params, steps, K - 1);
  for (std::size_t r = 0; r < remaining; ++r) {
    std::copy(pred.row(r).begin(), pred.row(r).end(), out.row(K + r).begin());
  }
  return out;
}

/// Runs `solver` on the problem described by `truth` at truth's resolution.
inline Field run_solver(const SolverSpec& solver, const Trajectory& truth, const SolveConfig& config) {
  switch (solver.kind) {
    case SolverKind::Truth:
      return truth.u;
    case SolverKind::Weno5: {
      SolveConfig coarse = config;
      coarse.fine_factor = 1;
      return solve_trajectory(truth.params, truth.initial, truth.forcing, truth.grid, coarse).u;
    }
    case SolverKind::Neural:
      require(solver.model != nullptr, ErrorCode::MissingCheckpoint, "solver '" + solver.id + "' has no model");
      return neural_trajectory(*solver.model, truth);
  }
  return truth.u;
}

/// Median wall-clock time of `repeats` runs of the solve alone.
inline std::pair<Field, double> timed_solve(const SolverSpec& solver, const Trajectory& truth,
                                            const SolveConfig& config, std::size_t repeats) {
  std::vector<double> times;
  Field result;
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto start = std::chrono::steady_clock::now();
    result = run_solver(solver, truth, config);
    times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(times.begin(), times.end());
  return {std::move(result), times[times.size() / 2]};
}

inline EvalRow evaluate_cell(const SolverSpec& solver, const Trajectory& truth, const SolveConfig& config,
                             const std::string& preset, double threshold, std::size_t repeats) {
  auto [pred, ms] = timed_solve(solver, truth, config, repeats);
  EvalRow row;
  row.preset = preset;
  row.n_t = truth.grid.n_t;
  row.n_x = truth.grid.n_x;
  row.solver = solver.id;
  row.seed = truth.seed;
  row.acc_error = accumulated_error(pred, truth.u);
  row.survival_time = survival_time(pred, truth.u, truth.grid, threshold);
  row.runtime_ms = ms;
  return row;
}

struct Resolution {
  std::size_t n_t = 0;
  std::size_t n_x = 0;
};

struct ExperimentSpec {
  Preset preset = Preset::E1;
  std::vector<Resolution> resolutions;
  std::vector<SolverSpec> solvers;
  std::vector<std::uint64_t> seeds;
  PresetConfig preset_config;
  /// Solver settings for the classical solver; the reference truth uses
  /// `reference_fine_factor` instead of `solve_config.fine_factor`.
  SolveConfig solve_config;
  std::size_t reference_fine_factor = 4;
  double threshold = 0.01;
  std::size_t repeats = 3;
};

/// Ground truth for one cell: the preset problem drawn from `seed`, solved
/// with spatial oversampling and block-averaged to the target resolution.
inline Trajectory reference_trajectory(const ExperimentSpec& spec, const Resolution& res, std::uint64_t seed) {
  const Grid grid = preset_grid(spec.preset_config, res.n_x, res.n_t);
  auto [params, forcing] = make_preset(spec.preset, seed, spec.preset_config);
  SolveConfig cfg = spec.solve_config;
  cfg.fine_factor = spec.reference_fine_factor;
  Trajectory t = solve_trajectory(params, forcing, grid, cfg);
  t.seed = seed;
  return t;
}

/// Sweeps (resolution x seed x solver); rows are ordered by that key.
inline EvalReport run_experiment(const ExperimentSpec& spec) {
  for (const auto& s : spec.solvers) {
    if (s.kind == SolverKind::Neural) {
      require(s.model != nullptr, ErrorCode::MissingCheckpoint, "solver '" + s.id + "' has no checkpoint");
    }
  }
  EvalReport report;
  report.threshold = spec.threshold;
  for (const auto& res : spec.resolutions) {
    for (const auto seed : spec.seeds) {
      const Trajectory truth = reference_trajectory(spec, res, seed);
      for (const auto& solver : spec.solvers) {
        report.rows.push_back(evaluate_cell(solver, truth, spec.solve_config, std::string(to_string(spec.preset)),
                                            spec.threshold, spec.repeats));
      }
    }
  }
  return report;
}

/// Evaluates solvers against every trajectory of a stored dataset.
inline EvalReport evaluate_dataset(const TrajectorySet& truth, const std::vector<SolverSpec>& solvers,
                                   double threshold, std::size_t repeats, const std::string& label = "") {
  const std::string preset = label.empty() ? std::string(to_string(truth.preset)) : label;
  EvalReport report;
  report.threshold = threshold;
  for (const auto& traj : truth.trajectories) {
    for (const auto& solver : solvers) {
      report.rows.push_back(evaluate_cell(solver, traj, truth.solve_config, preset, threshold, repeats));
    }
  }
  return report;
}

}  // namespace mppde
