// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gradcheck.hpp"
#include "mppde/eval.hpp"
#include "mppde/io.hpp"
#include "mppde/training.hpp"

using namespace mppde;
using namespace mppde::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// --- autodiff ---------------------------------------------------------------

Outcome autodiff() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t checks = 0;
  auto check = [&](const std::vector<Shape>& shapes, const ScalarFn& f) {
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(derive_seed(0xacc, static_cast<std::uint64_t>(trial)));
      std::vector<Tensor> inputs;
      for (const auto& s : shapes) inputs.push_back(random_tensor(s, rng));
      worst = std::max(worst, grad_check(inputs, f));
      ++checks;
    }
  };
  const Index idx{0, 2, 1, 2, 3, 0};
  check({{3, 4}, {4, 2}}, [](const auto& in) { return weighted_sum(matmul(in[0], in[1]), 1); });
  check({{2, 3, 4}, {4}}, [](const auto& in) { return weighted_sum(add(in[0], in[1]), 2); });
  check({{3, 4}, {4}}, [](const auto& in) { return weighted_sum(sub(in[0], in[1]), 3); });
  check({{5, 2}, {2}}, [](const auto& in) { return weighted_sum(mul(in[0], in[1]), 4); });
  check({{6}}, [](const auto& in) { return weighted_sum(scale(in[0], -1.7), 5); });
  check({{4, 5}}, [](const auto& in) { return weighted_sum(swish(scale(in[0], 3.0)), 6); });
  check({{2, 6}}, [](const auto& in) { return weighted_sum(reshape(in[0], {3, 4}), 7); });
  check({{2, 5}}, [](const auto& in) { return weighted_sum(transpose(in[0]), 8); });
  check({{2, 3}, {2, 1}}, [](const auto& in) { return weighted_sum(concat({in[0], in[1]}, 1), 9); });
  check({{3, 5, 2}}, [](const auto& in) { return weighted_sum(slice(in[0], 1, 1, 3), 10); });
  check({{6, 3}}, [&](const auto& in) { return weighted_sum(scatter_add(in[0], idx, 4), 11); });
  check({{4, 3}}, [&](const auto& in) { return weighted_sum(gather(in[0], idx), 12); });
  check({{2, 2, 6}, {3, 2, 3}, {3}}, [](const auto& in) { return weighted_sum(conv1d(in[0], in[1], in[2]), 13); });
  check({{3, 3}}, [](const auto& in) { return sum(mul(in[0], in[0])); });
  check({{4, 2}}, [](const auto& in) { return mean(swish(in[0])); });
  check({{3, 4}, {3, 4}}, [](const auto& in) { return mse(in[0], in[1]); });

  ModelConfig cfg;
  cfg.bundle_size = 2;
  cfg.num_layers = 2;
  cfg.hidden_dim = 8;
  cfg.neighborhood_radius = 1;
  const Grid grid = Grid::make(6, 20, 16.0, 4.0);
  const PdeParams params{0.5, 0.1, 0.3, 16.0, Boundary::periodic()};
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto model = MpPdeModel::init(cfg, 1000 + trial);
    Rng rng(trial);
    const GraphInput base = make_graph_input(cfg, grid, {GraphSpec{params, 0.4}}, random_tensor({6, 2}, rng));
    std::vector<Tensor> inputs = model.parameters();
    inputs.push_back(base.window);
    worst = std::max(worst, grad_check(inputs, [&](const std::vector<Tensor>& v) {
      MpPdeModel m = model;
      m.set_parameters(std::vector<Tensor>(v.begin(), v.end() - 1));
      GraphInput in = base;
      in.window = v.back();
      return weighted_sum(m.forward_nodes(in), trial);
    }));
    ++checks;
  }
  const double secs = seconds_since(start);
  return {worst < 1e-4 && secs < 10.0,
          fmt("%zu checks, worst relative error %.2e (tol 1e-4), %.2f s (limit 10 s)", checks, worst, secs)};
}

// --- classical ----------------------------------------------------------------

Outcome mass_conservation() {
  const PresetConfig pc;
  const Grid grid = preset_grid(pc, 64, 100);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto [params, forcing] = make_preset(Preset::E1, seed, pc);
    // Zero forcing; the preset's profile only sets the initial state.
    const Trajectory t = solve_trajectory(params, forcing, ForcingTerm{}, grid, SolveConfig{});
    auto mass = [&](std::size_t r) {
      double m = 0.0;
      for (double v : t.u.row(r)) m += v;
      return m * grid.dx;
    };
    // Row 0 holds point samples of the initial profile, later rows cell averages.
    const double m0 = mass(1);
    for (std::size_t r = 1; r < grid.n_t; ++r) worst = std::max(worst, std::abs(mass(r) - m0));
  }
  return {worst < 1e-8, fmt("max |delta mass| %.2e over 4 E1 solves (limit 1e-8)", worst)};
}

// Exact Burgers solution u = u0(x - u t) with u0 = 0.5 + sin(pi x).
double burgers_exact(double x, double t) {
  double u = 0.5 + std::sin(std::numbers::pi * x);
  for (int it = 0; it < 100; ++it) {
    const double arg = std::numbers::pi * (x - u * t);
    const double g = u - 0.5 - std::sin(arg);
    const double dg = 1.0 + std::numbers::pi * t * std::cos(arg);
    const double step = g / dg;
    u -= step;
    if (std::abs(step) < 1e-15) break;
  }
  return u;
}

std::vector<double> burgers_cell_averages(std::size_t n, double L, double t) {
  static constexpr double nodes[] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                     0.9061798459386640};
  static constexpr double weights[] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                       0.2369268850561891, 0.2369268850561891};
  const double dx = L / static_cast<double>(n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = (static_cast<double>(i) + 0.5) * dx;
    double s = 0.0;
    for (int q = 0; q < 5; ++q) s += weights[q] * burgers_exact(c + 0.5 * dx * nodes[q], t);
    out[i] = 0.5 * s;
  }
  return out;
}

Outcome weno_order() {
  const auto start = Clock::now();
  const double L = 2.0, T = 0.2;
  const PdeParams params{0.5, 0.0, 0.0, L, Boundary::periodic()};
  std::vector<double> errors;
  for (std::size_t n : {64u, 128u, 256u}) {
    const double dx = L / static_cast<double>(n);
    const double dx0 = L / 64.0;
    const double dt_target = 0.4 * dx0 / 1.5 * std::pow(dx / dx0, 5.0 / 3.0);
    const auto steps = static_cast<std::size_t>(std::ceil(T / dt_target));
    const double dt = T / static_cast<double>(steps);
    const MolOperator op(params, ForcingTerm{}, dx, n);
    std::vector<double> u = burgers_cell_averages(n, L, 0.0);
    for (std::size_t s = 0; s < steps; ++s) u = ssprk3_step(u, static_cast<double>(s) * dt, dt, op);
    const auto exact = burgers_cell_averages(n, L, T);
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) e += std::abs(u[i] - exact[i]) * dx;
    errors.push_back(e);
  }
  const double o1 = std::log2(errors[0] / errors[1]);
  const double o2 = std::log2(errors[1] / errors[2]);
  const double secs = seconds_since(start);
  return {o1 >= 4.0 && o2 >= 4.0 && secs < 60.0,
          fmt("L1 orders %.2f (64->128), %.2f (128->256), need >= 4.0; %.1f s", o1, o2, secs)};
}

Outcome rk3_order() {
  auto decay = [](std::span<const double> u, double) { return std::vector<double>{-u[0]}; };
  std::vector<double> errs;
  for (int steps : {10, 20, 40, 80}) {
    const double dt = 1.0 / steps;
    std::vector<double> u{1.0};
    for (int s = 0; s < steps; ++s) u = ssprk3_step(u, s * dt, dt, decay);
    errs.push_back(std::abs(u[0] - std::exp(-1.0)));
  }
  double worst = 1e9;
  std::string orders;
  for (std::size_t j = 1; j < errs.size(); ++j) {
    const double o = std::log2(errs[j - 1] / errs[j]);
    worst = std::min(worst, o);
    orders += fmt("%s%.3f", j > 1 ? ", " : "", o);
  }
  return {worst >= 2.7, "temporal orders " + orders + " (need >= 2.7)"};
}

Outcome heat_decay() {
  const double beta = 0.1, L = 16.0, t_end = 4.0;
  const PdeParams params{0.0, beta, 0.0, L, Boundary::periodic()};
  ForcingTerm mode;
  mode.components.push_back({1.0, 0.0, 1, 0.0});
  const Grid grid = Grid::make(128, 100, L, t_end);
  const Trajectory t = solve_trajectory(params, mode, ForcingTerm{}, grid, SolveConfig{});
  auto amplitude = [&](std::size_t row) {
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < grid.n_x; ++i) {
      const double ang = 2 * std::numbers::pi * grid.x_centers[i] / L;
      s += t.u(row, i) * std::sin(ang);
      c += t.u(row, i) * std::cos(ang);
    }
    return std::hypot(s, c);
  };
  const double k = 2 * std::numbers::pi / L;
  const double expected = std::exp(-beta * k * k * t_end);
  const double ratio = amplitude(grid.n_t - 1) / amplitude(0);
  const double rel = std::abs(ratio - expected) / expected;
  return {rel < 0.01, fmt("amplitude ratio %.6f vs exact %.6f, relative error %.2e (limit 1e-2)", ratio, expected, rel)};
}

Outcome shock_robustness() {
  const PresetConfig pc;
  const Grid grid = preset_grid(pc, 100, 100);
  const SolveConfig sc;
  double worst_margin = -1e9;
  double steepest = 0.0;
  bool finite = true;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto [params, forcing] = make_preset(Preset::E1, seed, pc);
    const Trajectory t = solve_trajectory(params, forcing, grid, sc);
    double sup0 = 0.0;
    for (double v : initial_condition(forcing, grid.refined(sc.fine_factor))) sup0 = std::max(sup0, std::abs(v));
    double total_amp = 0.0;
    for (const auto& c : forcing.components) total_amp += std::abs(c.amplitude);
    for (std::size_t r = 0; r < grid.n_t; ++r) {
      double m = 0.0;
      for (std::size_t i = 0; i < grid.n_x; ++i) {
        const double v = t.u(r, i);
        finite = finite && std::isfinite(v);
        m = std::max(m, std::abs(v));
        const double jump = std::abs(t.u(r, (i + 1) % grid.n_x) - v) / grid.dx;
        steepest = std::max(steepest, jump);
      }
      worst_margin = std::max(worst_margin, m - (sup0 + grid.t_points[r] * total_amp + 1e-6));
    }
  }
  return {finite && worst_margin <= 0.0,
          fmt("8 E1 solves at n_x=100: finite=%s, max overshoot beyond bound %.3e, steepest |du/dx| %.2f",
              finite ? "yes" : "no", worst_margin, steepest)};
}

// --- training -----------------------------------------------------------------

Outcome pushforward_trend() {
  const auto start = Clock::now();
  const PresetConfig pc;
  const Grid grid = preset_grid(pc, 40, 100);
  const std::size_t K = 5, bundles = 10;  // 50 predicted steps
  const auto test = generate_dataset(Preset::E1, 16, grid, 999, SolveConfig{}, pc, worker_threads());
  ModelConfig mc;
  mc.bundle_size = K;
  mc.num_layers = 3;
  mc.hidden_dim = 32;
  mc.neighborhood_radius = 2;

  std::vector<double> pooled[2];
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto data = generate_dataset(Preset::E1, 64, grid, 100 + seed, SolveConfig{}, pc, worker_threads());
    const auto init = MpPdeModel::init(mc, 7 + seed);
    double med[2];
    for (int pf = 0; pf < 2; ++pf) {
      TrainConfig tc;
      tc.epochs = 20;
      tc.samples_per_trajectory = 4;
      tc.batch_size = 16;
      tc.seed = seed;
      tc.unroll_for_pushforward = pf == 1;
      const auto [model, log] = train(init, data, tc);
      std::vector<double> errs;
      for (const auto& t : test.trajectories) {
        const std::vector<double> window(t.u.data().begin(), t.u.data().begin() + static_cast<std::ptrdiff_t>(K * 40));
        const Field pred = rollout(model, window, grid, t.params, bundles, K - 1);
        const Field truth(K * bundles, 40,
                          std::vector<double>(t.u.data().begin() + static_cast<std::ptrdiff_t>(K * 40),
                                              t.u.data().begin() + static_cast<std::ptrdiff_t>((K + K * bundles) * 40)));
        errs.push_back(accumulated_error(pred, truth));
      }
      pooled[pf].insert(pooled[pf].end(), errs.begin(), errs.end());
      std::sort(errs.begin(), errs.end());
      med[pf] = errs[errs.size() / 2];
    }
    per_seed += fmt("%sseed %llu: one-step %.3f, pushforward %.3f", seed ? "; " : "",
                    static_cast<unsigned long long>(seed), med[0], med[1]);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double one = median(pooled[0]), push = median(pooled[1]);
  const double secs = seconds_since(start);
  return {push < one && secs < 1800.0,
          fmt("median accumulated error over 3 seeds x 16 rollouts: pushforward %.4f vs one-step %.4f; ", push, one) +
              per_seed + fmt("; %.0f s", secs)};
}

Outcome detach_boundary() {
  TrajectorySet data;
  data.grid = Grid::make(6, 10, 16.0, 4.0);
  Rng rng(4);
  for (int t = 0; t < 2; ++t) {
    Trajectory tr;
    tr.grid = data.grid;
    tr.params = PdeParams{rng.uniform(0, 1), rng.uniform(0, 0.2), rng.uniform(0, 1), 16.0, Boundary::periodic()};
    tr.u = Field(10, 6);
    for (double& v : tr.u.data()) v = rng.uniform(-1, 1);
    data.trajectories.push_back(std::move(tr));
  }
  ModelConfig cfg;
  cfg.bundle_size = 2;
  cfg.num_layers = 1;
  cfg.hidden_dim = 6;
  cfg.neighborhood_radius = 1;
  std::vector<TrainSample> batch;
  for (std::size_t t = 0; t < 2; ++t) batch.push_back(make_sample(data, t, 1, 2, true));
  const std::span<const TrainSample> span(batch);

  double worst = 0.0, min_diff = 1e9;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto model = MpPdeModel::init(cfg, 200 + trial);
    const auto params = model.parameters();
    auto with = [&](const std::vector<Tensor>& p) {
      MpPdeModel m = model;
      m.set_parameters(p);
      return m;
    };
    const auto analytic =
        tape_gradients(params, [&](const std::vector<Tensor>& p) { return pushforward_loss(with(p), cfg, data, span); });
    const Tensor frozen = model(batch_input(cfg, data, span));
    const Tensor target = batch_targets(span, 2, data.grid.n_x, true);
    const auto numeric = numeric_gradients(params, [&](const std::vector<Tensor>& p) {
      return mse(with(p)(pushforward_input(cfg, data, span, frozen)), target);
    });
    const auto full =
        tape_gradients(params, [&](const std::vector<Tensor>& p) { return unrolled_loss(with(p), cfg, data, span, false); });
    double diff = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      worst = std::max(worst, max_rel_error(analytic[i].data(), numeric[i].data()));
      diff = std::max(diff, max_rel_error(analytic[i].data(), full[i].data()));
    }
    min_diff = std::min(min_diff, diff);
  }
  return {worst < 1e-4 && min_diff > 1e-3,
          fmt("20 trials: worst error vs second-pass oracle %.2e (tol 1e-4); smallest gap to full unroll %.2e",
              worst, min_diff)};
}

// --- model ----------------------------------------------------------------------

std::vector<double> naive_mlp(const Mlp& m, const std::vector<double>& x) {
  auto affine = [](const Tensor& w, const Tensor& b, const std::vector<double>& in) {
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    std::vector<double> out(cols);
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < rows; ++k) acc += in[k] * w[k * cols + j];
      out[j] = acc + b[j];
    }
    return out;
  };
  auto h = affine(m.w1, m.b1, x);
  for (double& v : h) v = v * (1.0 / (1.0 + std::exp(-v)));
  return affine(m.w2, m.b2, h);
}

Outcome message_passing_oracle() {
  ModelConfig cfg;
  cfg.bundle_size = 2;
  cfg.num_layers = 1;
  cfg.hidden_dim = 6;
  cfg.neighborhood_radius = 1;
  const Grid grid = Grid::make(3, 20, 3.0, 4.0);
  const PdeParams p{0.5, 0.1, 0.3, 3.0, Boundary::dirichlet(0.0)};
  const std::vector<std::vector<std::size_t>> neighbors{{1}, {0, 2}, {1}};
  std::size_t mismatches = 0, compared = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto model = MpPdeModel::init(cfg, seed);
    Rng rng(seed + 50);
    const GraphInput in = make_graph_input(cfg, grid, {GraphSpec{p, 0.4}}, random_tensor({3, 2}, rng));
    const Tensor f = random_tensor({3, 6}, rng);
    const Tensor du = sub(gather(in.window, in.graph.dst), gather(in.window, in.graph.src));
    const Tensor out = model.process(0, f, in, du);
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> agg(6, 0.0);
      for (std::size_t j : neighbors[i]) {
        std::vector<double> x(f.data().begin() + static_cast<std::ptrdiff_t>(i * 6),
                              f.data().begin() + static_cast<std::ptrdiff_t>(i * 6 + 6));
        x.insert(x.end(), f.data().begin() + static_cast<std::ptrdiff_t>(j * 6),
                 f.data().begin() + static_cast<std::ptrdiff_t>(j * 6 + 6));
        for (std::size_t l = 0; l < 2; ++l) x.push_back(in.window[i * 2 + l] - in.window[j * 2 + l]);
        x.push_back(grid.x_centers[i] - grid.x_centers[j]);
        x.insert(x.end(), {p.alpha, p.beta, p.gamma});
        const auto m = naive_mlp(model.layers[0].edge, x);
        for (std::size_t h = 0; h < 6; ++h) agg[h] += m[h];
      }
      std::vector<double> x(f.data().begin() + static_cast<std::ptrdiff_t>(i * 6),
                            f.data().begin() + static_cast<std::ptrdiff_t>(i * 6 + 6));
      x.insert(x.end(), agg.begin(), agg.end());
      x.insert(x.end(), {p.alpha, p.beta, p.gamma});
      const auto expected = naive_mlp(model.layers[0].node, x);
      for (std::size_t h = 0; h < 6; ++h) {
        ++compared;
        mismatches += expected[h] != out[i * 6 + h];
      }
    }
  }
  return {mismatches == 0, fmt("%zu of %zu values differ bitwise over 10 seeded chains", mismatches, compared)};
}

// --- eval ------------------------------------------------------------------------

Outcome metric_identities() {
  std::vector<std::string> failed;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) failed.push_back(what);
  };
  Rng rng(1);
  Field a(5, 7);
  for (double& v : a.data()) v = rng.uniform(-1, 1);
  expect(accumulated_error(a, a) == 0.0, "identical fields");
  expect(accumulated_error(Field(2, 2, 1.0), Field(2, 2, 0.0)) == 2.0, "uniform unit error");
  Field b = a;
  for (double& v : b.data()) v += rng.uniform(-0.3, 0.3);
  const double base = accumulated_error(b, a);
  Field doubled = a;
  for (std::size_t i = 0; i < a.data().size(); ++i) doubled.data()[i] += 2.0 * (b.data()[i] - a.data()[i]);
  expect(std::abs(accumulated_error(doubled, a) - 4.0 * base) <= 1e-13, "quadratic scaling");
  try {
    accumulated_error(Field(2, 3), Field(3, 2));
    expect(false, "shape mismatch");
  } catch (const Error& e) {
    expect(e.code() == ErrorCode::ShapeMismatch, "shape mismatch code");
  }

  const Grid grid = Grid::make(4, 10, 16.0, 4.0);
  const Field truth(10, 4, 0.25);
  expect(survival_time(truth, truth, grid, 0.01) == grid.t_end, "survival of exact prediction");
  Field off = truth;
  for (double& v : off.data()) v += 1.0;
  expect(survival_time(off, truth, grid, 0.01) == 0.0, "immediate divergence");
  Field growing = truth;
  for (std::size_t k = 0; k < 10; ++k)
    for (double& v : growing.row(k)) v += std::sqrt(0.001 * std::pow(2.0, static_cast<double>(k)));
  expect(survival_time(growing, truth, grid, 0.1) == grid.t_points[7], "crossing at step 7");
  double last = 0.0;
  for (double th : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
    const double s = survival_time(growing, truth, grid, th);
    expect(s >= last, "threshold monotonicity");
    last = s;
  }

  EvalReport r;
  r.rows.push_back({"e1", 100, 40, "weno5", 3, 0.125, 2.5, 12.75});
  r.rows.push_back({"e2", 250, 100, "mppde:model", 42, 1.0 / 3.0, 4.0, 0.1});
  std::ostringstream os;
  write_csv(os, r);
  std::istringstream is(os.str());
  const EvalReport back = read_csv(is);
  expect(back.rows == r.rows, "CSV round trip");
  expect(os.str().rfind("preset,n_t,n_x,solver,seed,acc_error,survival_time,runtime_ms\n", 0) == 0, "CSV header");
  std::string detail = "accumulated error, survival time and CSV checks";
  for (const auto& f : failed) detail += "; failed: " + f;
  return {failed.empty(), detail};
}

// --- cli determinism ---------------------------------------------------------------

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" MPPDE_CLI_PATH "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string without_timing_csv(const std::string& csv) {
  std::istringstream is(csv);
  EvalReport r = read_csv(is);
  for (auto& row : r.rows) row.runtime_ms = 0.0;
  std::ostringstream os;
  write_csv(os, r);
  return os.str();
}

std::string without_timing_json(json j) {
  for (auto& row : j.at("rows")) row.erase("runtime_ms");
  for (auto& a : j.at("aggregates")) {
    a.erase("runtime_ms_mean");
    a.erase("runtime_ms_std");
  }
  return j.dump();
}

std::string without_wall_clock(const std::string& log) {
  std::istringstream is(log);
  std::string out;
  for (std::string line; std::getline(is, line);) {
    json j = json::parse(line);
    j.erase("wall_ms");
    out += j.dump() + "\n";
  }
  return out;
}

Outcome cli_determinism() {
  const fs::path dir = fs::temp_directory_path() / "mppde_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> failed;
  for (const char* run : {"a", "b"}) {
    const std::string s(run);
    const int g = run_cli(dir, "gen-data --preset e2 --n-traj 6 --n-t 40 --n-x 24 --seed 11 --out data_" + s);
    const int t = run_cli(dir, "train --dataset data_" + s +
                                   " --epochs 4 --batch-size 3 --bundle 4 --layers 2 --hidden 12 --radius 2 --seed 5"
                                   " --out model_" + s + ".ckpt");
    const int e = run_cli(dir, "eval --dataset data_" + s + " --checkpoint model_" + s +
                                   ".ckpt --solver weno5 --repeats 1 --out report_" + s + ".csv");
    if (g || t || e) failed.push_back(fmt("run %s exit codes %d/%d/%d", run, g, t, e));
  }
  if (failed.empty()) {
    auto file = [&](const std::string& name) { return read_file(dir / name); };
    if (file("data_a.bin") != file("data_b.bin") || file("data_a.json") != file("data_b.json"))
      failed.push_back("gen-data outputs differ");
    if (file("model_a.ckpt") != file("model_b.ckpt")) failed.push_back("checkpoints differ");
    if (without_wall_clock(file("model_a.ckpt.log.jsonl")) != without_wall_clock(file("model_b.ckpt.log.jsonl")))
      failed.push_back("training logs differ");
    // The solver id carries the checkpoint stem, which differs between the two runs.
    std::string ca = without_timing_csv(file("report_a.csv")), cb = without_timing_csv(file("report_b.csv"));
    for (auto* s : {&ca, &cb}) {
      for (const char* stem : {"mppde:model_a", "mppde:model_b"}) {
        for (std::size_t p; (p = s->find(stem)) != std::string::npos;) s->replace(p, std::string(stem).size(), "mppde:m");
      }
    }
    if (ca != cb) failed.push_back("eval CSV differs");
    json ja = json::parse(file("report_a.json")), jb = json::parse(file("report_b.json"));
    for (auto* j : {&ja, &jb}) {
      for (auto& row : j->at("rows"))
        if (row.at("solver").get<std::string>().rfind("mppde:", 0) == 0) row["solver"] = "mppde:m";
      for (auto& a : j->at("aggregates"))
        if (a.at("solver").get<std::string>().rfind("mppde:", 0) == 0) a["solver"] = "mppde:m";
      j->erase("effective_config");
    }
    if (without_timing_json(ja) != without_timing_json(jb)) failed.push_back("eval JSON differs");
  }
  fs::remove_all(dir);
  std::string detail = "gen-data, train and eval run twice with equal seeds";
  for (const auto& f : failed) detail += "; " + f;
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"autodiff-correctness", autodiff},
      {"classical-mass-conservation", mass_conservation},
      {"weno5-order", weno_order},
      {"ssprk3-order", rk3_order},
      {"heat-decay-oracle", heat_decay},
      {"shock-robustness", shock_robustness},
      {"pushforward-trend", pushforward_trend},
      {"detach-boundary", detach_boundary},
      {"message-passing-oracle", message_passing_oracle},
      {"metric-identities", metric_identities},
      {"determinism", cli_determinism},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << "(" << criteria.size() - failures << "/" << criteria.size()
            << ")" << std::endl;
  return failures ? 1 : 0;
}
