// mppde: dataset generation, training, evaluation and single solves.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mppde/classical.hpp"
#include "mppde/eval.hpp"
#include "mppde/io.hpp"
#include "mppde/model.hpp"
#include "mppde/training.hpp"

namespace fs = std::filesystem;
using namespace mppde;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitSolver = 3;
constexpr int kExitCheckpoint = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::SolutionBlowup:
    case ErrorCode::StepLimitExceeded:
      return kExitSolver;
    case ErrorCode::MissingCheckpoint:
      return kExitCheckpoint;
    default:
      return kExitInvalid;
  }
}

const std::vector<std::string> kPresetNames = {"e1", "e2", "e3"};

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

struct SolverFlags {
  double cfl = SolveConfig{}.cfl_number;
  std::size_t fine_factor = SolveConfig{}.fine_factor;
  std::size_t max_steps = SolveConfig{}.max_steps;

  void add_to(CLI::App& app, bool with_fine_factor = true) {
    app.add_option("--cfl", cfl, "CFL number")->capture_default_str();
    if (with_fine_factor) {
      app.add_option("--fine-factor", fine_factor, "spatial oversampling of the reference solve")->capture_default_str();
    }
    app.add_option("--max-steps", max_steps, "time step limit per solve")->capture_default_str();
  }

  SolveConfig config() const {
    SolveConfig c;
    c.cfl_number = cfl;
    c.fine_factor = fine_factor;
    c.max_steps = max_steps;
    c.validate();
    return c;
  }
};

// --- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string preset;
  std::size_t n_traj = 0;
  std::size_t n_t = 100;
  std::size_t n_x = 40;
  std::uint64_t seed = 0;
  std::string out;
  SolverFlags solver;
};

int run_gen_data(const GenDataArgs& a, unsigned threads) {
  const Preset preset = *parse_preset(a.preset);
  const PresetConfig pcfg;
  const SolveConfig scfg = a.solver.config();
  const Grid grid = preset_grid(pcfg, a.n_x, a.n_t);
  const TrajectorySet set = generate_dataset(preset, a.n_traj, grid, a.seed, scfg, pcfg, threads);
  const json effective = {{"command", "gen-data"}, {"preset", a.preset}, {"n_traj", a.n_traj}, {"n_t", a.n_t},
                          {"n_x", a.n_x},          {"seed", a.seed},     {"solve_config", to_json(scfg)}};
  const std::size_t bytes = save_dataset(set, a.out, effective);
  std::cout << dataset_paths(a.out).payload.string() << ": " << set.size() << (set.size() == 1 ? " trajectory, " : " trajectories, ") << bytes
            << " payload bytes\n";
  return 0;
}

// --- solve ------------------------------------------------------------------

struct SolveArgs {
  std::string preset;
  std::optional<double> alpha, beta, gamma;
  std::size_t n_t = 100;
  std::size_t n_x = 40;
  double length = PresetConfig{}.domain_length;
  double t_end = PresetConfig{}.t_end;
  std::uint64_t seed = 0;
  int ic_mode = 0;
  double ic_amplitude = 1.0;
  std::string out;
  SolverFlags solver;
};

int run_solve(const SolveArgs& a) {
  PresetConfig pcfg;
  pcfg.domain_length = a.length;
  pcfg.t_end = a.t_end;
  PdeParams params;
  ForcingTerm forcing;
  std::string label = "custom";
  Preset preset_tag = Preset::E1;
  if (a.preset == "heat") {
    params = PdeParams::make(0.0, a.beta.value_or(0.1), 0.0, a.length);
    label = "heat";
  } else if (!a.preset.empty()) {
    preset_tag = *parse_preset(a.preset);
    std::tie(params, forcing) = make_preset(preset_tag, a.seed, pcfg);
    label = a.preset;
  }
  if (a.alpha) params.alpha = *a.alpha;
  if (a.beta) params.beta = *a.beta;
  if (a.gamma) params.gamma = *a.gamma;
  params.domain_length = a.length;
  params.validate();

  ForcingTerm initial = forcing;
  if (a.ic_mode > 0) initial = ForcingTerm{{ForcingComponent{a.ic_amplitude, 0.0, a.ic_mode, 0.0}}};
  if (a.preset == "heat" && a.ic_mode == 0) initial = ForcingTerm{{ForcingComponent{a.ic_amplitude, 0.0, 1, 0.0}}};

  const SolveConfig scfg = a.solver.config();
  const Grid grid = preset_grid(pcfg, a.n_x, a.n_t);
  Trajectory t = solve_trajectory(params, initial, forcing, grid, scfg);
  t.seed = a.seed;

  TrajectorySet set;
  set.preset = preset_tag;
  set.preset_config = pcfg;
  set.solve_config = scfg;
  set.seed = a.seed;
  set.grid = grid;
  set.trajectories.push_back(std::move(t));
  const json effective = {{"command", "solve"},
                          {"preset", label},
                          {"params", to_json(params)},
                          {"n_t", a.n_t},
                          {"n_x", a.n_x},
                          {"seed", a.seed},
                          {"ic_mode", a.ic_mode},
                          {"ic_amplitude", a.ic_amplitude},
                          {"solve_config", to_json(scfg)}};
  const std::size_t bytes = save_dataset(set, a.out, effective, label);
  std::cout << dataset_paths(a.out).payload.string() << ": 1 trajectory, " << bytes << " payload bytes\n";
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string log;
  ModelConfig model;
  TrainConfig train;
  bool one_step_only = false;
};

int run_train(TrainArgs a) {
  const LoadedDataset data = load_dataset(a.dataset);
  a.train.unroll_for_pushforward = !a.one_step_only;
  a.train.validate();
  a.model.validate();
  require(2 * a.model.bundle_size <= data.set.grid.n_t, ErrorCode::InvalidArgument,
          "bundle size " + std::to_string(a.model.bundle_size) + " is incompatible with dataset n_t " +
              std::to_string(data.set.grid.n_t));
  const MpPdeModel init = MpPdeModel::init(a.model, derive_seed(a.train.seed, 1));
  auto [model, log] = train(init, data.set, a.train);

  Provenance prov;
  prov.dataset_hash = data.payload_hash;
  prov.seed = a.train.seed;
  prov.epochs = a.train.epochs;
  prov.extra = {{"train_config", to_json(a.train)}, {"dataset_preset", data.label}};
  save_checkpoint(model, prov, a.out);
  const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log.jsonl") : fs::path(a.log);
  write_file(log_path, train_log_lines(log));
  const auto& last = log.epochs.back();
  std::cout << a.out << ": " << model.parameter_count() << " parameters, " << log.epochs.size()
            << " epochs, final loss " << last.total << "\n";
  return 0;
}

// --- eval / compare ---------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> solvers;
  std::string dataset;
  std::string preset;
  std::vector<std::size_t> n_x = {40};
  std::vector<std::size_t> n_t = {100};
  std::vector<std::uint64_t> seeds = {0};
  double threshold = 0.01;
  std::size_t repeats = 3;
  std::size_t ref_fine_factor = 4;
  std::string out;
  std::string json_out;
  SolverFlags solver;
};

std::vector<SolverSpec> build_solvers(const EvalArgs& a, bool compare) {
  std::vector<std::string> names = a.solvers;
  if (names.empty() && (compare || a.checkpoints.empty())) names.push_back("weno5");
  std::vector<SolverSpec> out;
  for (const auto& n : names) out.push_back(n == "truth" ? SolverSpec::truth() : SolverSpec::weno5());
  for (const auto& path : a.checkpoints) {
    auto ck = load_checkpoint(path);
    out.push_back(SolverSpec::neural("mppde:" + fs::path(path).stem().string(),
                                     std::make_shared<const MpPdeModel>(std::move(ck.model))));
  }
  if (compare) {
    require(out.size() >= 2, ErrorCode::InvalidArgument, "compare needs at least two solvers");
  }
  return out;
}

int run_eval(const EvalArgs& a, bool compare) {
  require(a.dataset.empty() != a.preset.empty(), ErrorCode::InvalidArgument,
          "give exactly one of --dataset or --preset");
  for (const auto& p : a.checkpoints) {
    if (!fs::exists(p)) fail(ErrorCode::MissingCheckpoint, "no checkpoint at " + p);
  }
  const auto solvers = build_solvers(a, compare);
  json effective = {{"command", compare ? "compare" : "eval"},
                    {"threshold", a.threshold},
                    {"repeats", a.repeats}};
  json solver_ids = json::array();
  for (const auto& s : solvers) solver_ids.push_back(s.id);
  effective["solvers"] = solver_ids;

  EvalReport report;
  if (!a.dataset.empty()) {
    const LoadedDataset data = load_dataset(a.dataset);
    effective["dataset_hash"] = data.payload_hash;
    report = evaluate_dataset(data.set, solvers, a.threshold, a.repeats, data.label);
  } else {
    ExperimentSpec spec;
    spec.preset = *parse_preset(a.preset);
    for (auto nt : a.n_t)
      for (auto nx : a.n_x) spec.resolutions.push_back({nt, nx});
    spec.solvers = solvers;
    spec.seeds = a.seeds;
    spec.solve_config = a.solver.config();
    spec.solve_config.fine_factor = 1;  // the solver under test runs at the target resolution
    spec.reference_fine_factor = a.ref_fine_factor;
    spec.threshold = a.threshold;
    spec.repeats = a.repeats;
    effective.update({{"preset", a.preset}, {"n_t", a.n_t}, {"n_x", a.n_x}, {"seeds", a.seeds},
                      {"reference_fine_factor", a.ref_fine_factor}, {"solve_config", to_json(spec.solve_config)}});
    report = run_experiment(spec);
  }

  std::ostringstream csv;
  write_csv(csv, report);
  write_file(a.out, csv.str());
  fs::path json_path = a.json_out.empty() ? fs::path(a.out).replace_extension(".json") : fs::path(a.json_out);
  write_file(json_path, report_json(report, effective).dump(2) + "\n");
  for (const auto& agg : report.aggregates()) {
    std::cout << agg.preset << " (" << agg.n_t << "," << agg.n_x << ") " << agg.solver
              << ": acc_error " << agg.acc_error_mean << " +- " << agg.acc_error_std << ", survival "
              << agg.survival_mean << ", runtime " << agg.runtime_ms_mean << " ms\n";
  }
  return 0;
}

void add_eval_options(CLI::App& cmd, EvalArgs& a) {
  cmd.add_option("--checkpoint", a.checkpoints, "trained model checkpoint (repeatable)");
  cmd.add_option("--solver", a.solvers, "classical solvers to include")
      ->check(CLI::IsMember({"truth", "weno5"}));
  auto* ds = cmd.add_option("--dataset,--truth", a.dataset, "stored dataset used as ground truth");
  cmd.add_option("--preset", a.preset, "sweep a preset instead of a stored dataset")
      ->check(CLI::IsMember(kPresetNames))
      ->excludes(ds);
  cmd.add_option("--n-x", a.n_x, "spatial resolutions of the sweep")->capture_default_str();
  cmd.add_option("--n-t", a.n_t, "temporal resolutions of the sweep")->capture_default_str();
  cmd.add_option("--seeds", a.seeds, "problem seeds of the sweep")->capture_default_str();
  cmd.add_option("--threshold", a.threshold, "survival MSE threshold")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd.add_option("--repeats", a.repeats, "timing repeats (median reported)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd.add_option("--ref-fine-factor", a.ref_fine_factor, "oversampling of the reference truth")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd.add_option("--out", a.out, "CSV report path")->required();
  cmd.add_option("--json", a.json_out, "JSON report path (default: CSV path with .json)");
  // The reference oversampling comes from --ref-fine-factor.
  a.solver.add_to(cmd, false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MP-PDE neural solver and WENO5 reference toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file with option defaults");
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0 = all cores)")->envname("MPPDE_THREADS");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a dataset of classical trajectories");
  gen_cmd->add_option("--preset", gen.preset, "equation family")->required()->check(CLI::IsMember(kPresetNames));
  gen_cmd->add_option("--n-traj", gen.n_traj, "number of trajectories")->required()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--n-t", gen.n_t, "stored time points")->capture_default_str();
  gen_cmd->add_option("--n-x", gen.n_x, "grid cells")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "master seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output stem")->required();
  gen.solver.add_to(*gen_cmd);

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "solve a single problem with the classical solver");
  solve_cmd->add_option("--preset", solve.preset, "e1, e2, e3 or heat")
      ->check(CLI::IsMember({"e1", "e2", "e3", "heat"}));
  solve_cmd->add_option("--alpha", solve.alpha, "advection coefficient");
  solve_cmd->add_option("--beta", solve.beta, "diffusion coefficient");
  solve_cmd->add_option("--gamma", solve.gamma, "dispersion coefficient");
  solve_cmd->add_option("--n-t", solve.n_t, "stored time points")->capture_default_str();
  solve_cmd->add_option("--n-x", solve.n_x, "grid cells")->capture_default_str();
  solve_cmd->add_option("--length", solve.length, "domain length")->capture_default_str();
  solve_cmd->add_option("--t-end", solve.t_end, "final time")->capture_default_str();
  solve_cmd->add_option("--seed", solve.seed, "seed for preset sampling")->capture_default_str();
  solve_cmd->add_option("--ic-mode", solve.ic_mode, "single-mode initial condition wavenumber (0 = preset)")
      ->check(CLI::NonNegativeNumber);
  solve_cmd->add_option("--ic-amplitude", solve.ic_amplitude, "amplitude of the single-mode initial condition");
  solve_cmd->add_option("--out", solve.out, "output stem")->required();
  solve.solver.add_to(*solve_cmd);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train an MP-PDE model on a dataset");
  train_cmd->add_option("--dataset", tr.dataset, "dataset stem or metadata path")->required();
  train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--log", tr.log, "train log path (default: <out>.log.jsonl)");
  train_cmd->add_option("--epochs", tr.train.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", tr.train.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--seed", tr.train.seed)->capture_default_str();
  train_cmd->add_option("--max-grad-norm", tr.train.max_grad_norm)->capture_default_str();
  train_cmd->add_option("--samples-per-traj", tr.train.samples_per_trajectory)->capture_default_str();
  train_cmd->add_flag("--one-step", tr.one_step_only, "disable the pushforward loss");
  train_cmd->add_option("--bundle", tr.model.bundle_size, "time steps per bundle K")->capture_default_str();
  train_cmd->add_option("--layers", tr.model.num_layers, "processor layers")->capture_default_str();
  train_cmd->add_option("--hidden", tr.model.hidden_dim, "hidden width")->capture_default_str();
  train_cmd->add_option("--radius", tr.model.neighborhood_radius, "graph neighbourhood radius")->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate solvers against ground truth");
  add_eval_options(*eval_cmd, ev);
  EvalArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "evaluate several solvers side by side");
  add_eval_options(*cmp_cmd, cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub ? sub->help() : app.help());
    return kExitInvalid;
  }

  try {
    const unsigned n_threads = resolve_threads(threads);
    if (*gen_cmd) return run_gen_data(gen, n_threads);
    if (*solve_cmd) return run_solve(solve);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev, false);
    if (*cmp_cmd) return run_eval(cmp, true);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
