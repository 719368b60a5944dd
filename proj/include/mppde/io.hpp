#pragma once

// On-disk formats.
//
// Dataset: `<stem>.json` metadata + `<stem>.bin` payload of little-endian
// float64 values, row-major [n_traj][n_t][n_x].
// Checkpoint: one file: magic line, one-line JSON header, little-endian
// float64 parameter payload in header order.
// Train log: one JSON object per line and epoch.

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "mppde/classical.hpp"
#include "mppde/error.hpp"
#include "mppde/eval.hpp"
#include "mppde/model.hpp"
#include "mppde/training.hpp"

namespace mppde {

using json = nlohmann::ordered_json;

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointMagic = "MPPDE-CHECKPOINT";

// --- little-endian float64 payloads -----------------------------------------

inline void append_le(std::string& out, std::span<const double> values) {
  const std::size_t start = out.size();
  out.resize(start + 8 * values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[start + 8 * i + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
}

inline std::vector<double> read_le(std::string_view bytes) {
  require(bytes.size() % 8 == 0, ErrorCode::FormatError, "payload length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 * i + static_cast<std::size_t>(b)])) << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

/// FNV-1a over raw bytes.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::FormatError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::FormatError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::FormatError, "short write to " + path.string());
}

// --- JSON conversions -------------------------------------------------------

inline json to_json(const Range& r) { return json::array({r.lo, r.hi}); }
inline Range range_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json to_json(const PresetConfig& c) {
  return {{"fixed_alpha", c.fixed_alpha},
          {"beta_range", to_json(c.beta_range)},
          {"alpha_range_mixed", to_json(c.alpha_range_mixed)},
          {"beta_range_mixed", to_json(c.beta_range_mixed)},
          {"gamma_range_mixed", to_json(c.gamma_range_mixed)},
          {"domain_length", c.domain_length},
          {"t_end", c.t_end},
          {"num_components", c.num_components},
          {"amplitude", to_json(c.amplitude)},
          {"omega", to_json(c.omega)},
          {"min_wavenumber", c.min_wavenumber},
          {"max_wavenumber", c.max_wavenumber}};
}

inline PresetConfig preset_config_from_json(const json& j) {
  PresetConfig c;
  c.fixed_alpha = j.at("fixed_alpha").get<double>();
  c.beta_range = range_from_json(j.at("beta_range"));
  c.alpha_range_mixed = range_from_json(j.at("alpha_range_mixed"));
  c.beta_range_mixed = range_from_json(j.at("beta_range_mixed"));
  c.gamma_range_mixed = range_from_json(j.at("gamma_range_mixed"));
  c.domain_length = j.at("domain_length").get<double>();
  c.t_end = j.at("t_end").get<double>();
  c.num_components = j.at("num_components").get<int>();
  c.amplitude = range_from_json(j.at("amplitude"));
  c.omega = range_from_json(j.at("omega"));
  c.min_wavenumber = j.at("min_wavenumber").get<int>();
  c.max_wavenumber = j.at("max_wavenumber").get<int>();
  return c;
}

inline json to_json(const SolveConfig& c) {
  return {{"cfl_number", c.cfl_number}, {"fine_factor", c.fine_factor}, {"max_steps", c.max_steps}, {"dt_max", c.dt_max}};
}

inline SolveConfig solve_config_from_json(const json& j) {
  SolveConfig c;
  c.cfl_number = j.at("cfl_number").get<double>();
  c.fine_factor = j.at("fine_factor").get<std::size_t>();
  c.max_steps = j.at("max_steps").get<std::size_t>();
  c.dt_max = j.at("dt_max").get<double>();
  return c;
}

inline json to_json(const PdeParams& p) {
  return {{"alpha", p.alpha},
          {"beta", p.beta},
          {"gamma", p.gamma},
          {"domain_length", p.domain_length},
          {"boundary", std::string(to_string(p.boundary.kind))},
          {"boundary_value", p.boundary.value}};
}

inline PdeParams params_from_json(const json& j) {
  PdeParams p;
  p.alpha = j.at("alpha").get<double>();
  p.beta = j.at("beta").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.domain_length = j.at("domain_length").get<double>();
  p.boundary.kind = boundary_kind_from_string(j.at("boundary").get<std::string>());
  p.boundary.value = j.at("boundary_value").get<double>();
  p.validate();
  return p;
}

inline json to_json(const ForcingTerm& f) {
  json arr = json::array();
  for (const auto& c : f.components) {
    arr.push_back({{"amplitude", c.amplitude}, {"omega", c.omega}, {"wavenumber", c.wavenumber}, {"phase", c.phase}});
  }
  return arr;
}

inline ForcingTerm forcing_from_json(const json& j) {
  ForcingTerm f;
  for (const auto& c : j) {
    f.components.push_back({c.at("amplitude").get<double>(), c.at("omega").get<double>(), c.at("wavenumber").get<int>(),
                            c.at("phase").get<double>()});
  }
  return f;
}

inline json to_json(const ModelConfig& c) {
  return {{"bundle_size", c.bundle_size},
          {"num_layers", c.num_layers},
          {"hidden_dim", c.hidden_dim},
          {"neighborhood_radius", c.neighborhood_radius},
          {"decoder_channels", c.decoder_channels},
          {"decoder_kernel", c.decoder_kernel},
          {"boundary_features", c.boundary_features}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.bundle_size = j.at("bundle_size").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.neighborhood_radius = j.at("neighborhood_radius").get<std::size_t>();
  c.decoder_channels = j.at("decoder_channels").get<std::size_t>();
  c.decoder_kernel = j.at("decoder_kernel").get<std::size_t>();
  c.boundary_features = j.at("boundary_features").get<bool>();
  c.validate();
  return c;
}

inline json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"seed", c.seed},
          {"unroll_for_pushforward", c.unroll_for_pushforward},
          {"max_grad_norm", c.max_grad_norm},
          {"samples_per_trajectory", c.samples_per_trajectory}};
}

// --- datasets ---------------------------------------------------------------

struct DatasetPaths {
  std::filesystem::path meta;
  std::filesystem::path payload;
};

/// Accepts a stem, or a path ending in .json or .bin.
inline DatasetPaths dataset_paths(std::filesystem::path path) {
  if (path.extension() == ".json" || path.extension() == ".bin") path.replace_extension();
  DatasetPaths p;
  p.meta = path;
  p.meta += ".json";
  p.payload = path;
  p.payload += ".bin";
  return p;
}

inline std::string dataset_payload(const TrajectorySet& set) {
  std::string bytes;
  bytes.reserve(8 * set.size() * set.grid.n_t * set.grid.n_x);
  for (const auto& t : set.trajectories) append_le(bytes, t.u.data());
  return bytes;
}

/// Writes both files; returns the payload size in bytes.
inline std::size_t save_dataset(const TrajectorySet& set, const std::filesystem::path& path,
                                const json& effective_config = json::object(), const std::string& label = "") {
  const auto paths = dataset_paths(path);
  const std::string payload = dataset_payload(set);
  json trajectories = json::array();
  for (const auto& t : set.trajectories) {
    trajectories.push_back({{"seed", t.seed},
                            {"params", to_json(t.params)},
                            {"forcing", to_json(t.forcing)},
                            {"initial", to_json(t.initial)}});
  }
  json meta = {{"format", "mppde-dataset"},
               {"format_version", kDatasetFormatVersion},
               {"preset", label.empty() ? std::string(to_string(set.preset)) : label},
               {"seed", set.seed},
               {"grid", {{"n_x", set.grid.n_x}, {"n_t", set.grid.n_t}, {"length", set.grid.length}, {"t_end", set.grid.t_end}}},
               {"preset_config", to_json(set.preset_config)},
               {"solve_config", to_json(set.solve_config)},
               {"payload",
                {{"dtype", "float64-le"},
                 {"shape", {set.size(), set.grid.n_t, set.grid.n_x}},
                 {"bytes", payload.size()},
                 {"fnv1a", fnv1a(payload)}}},
               {"effective_config", effective_config},
               {"trajectories", trajectories}};
  write_file(paths.meta, meta.dump(2) + "\n");
  write_file(paths.payload, payload);
  return payload.size();
}

struct LoadedDataset {
  TrajectorySet set;
  std::string label;
  std::uint64_t payload_hash = 0;
};

inline LoadedDataset load_dataset(const std::filesystem::path& path) {
  const auto paths = dataset_paths(path);
  require(std::filesystem::exists(paths.meta), ErrorCode::FormatError, "missing dataset metadata " + paths.meta.string());
  LoadedDataset out;
  try {
    const json meta = json::parse(read_file(paths.meta));
    require(meta.at("format") == "mppde-dataset", ErrorCode::FormatError, "not a dataset metadata file");
    const int version = meta.at("format_version").get<int>();
    require(version == kDatasetFormatVersion, ErrorCode::FormatError,
            "dataset format version " + std::to_string(version) + " (expected " +
                std::to_string(kDatasetFormatVersion) + ")");
    TrajectorySet& set = out.set;
    out.label = meta.at("preset").get<std::string>();
    set.preset = parse_preset(out.label).value_or(Preset::E1);
    set.seed = meta.at("seed").get<std::uint64_t>();
    const json& g = meta.at("grid");
    set.grid = Grid::make(g.at("n_x").get<std::size_t>(), g.at("n_t").get<std::size_t>(), g.at("length").get<double>(),
                          g.at("t_end").get<double>());
    set.preset_config = preset_config_from_json(meta.at("preset_config"));
    set.solve_config = solve_config_from_json(meta.at("solve_config"));
    const std::string payload = read_file(paths.payload);
    const std::size_t n = meta.at("trajectories").size();
    const std::size_t expected = 8 * n * set.grid.n_t * set.grid.n_x;
    require(payload.size() == expected, ErrorCode::FormatError,
            "payload has " + std::to_string(payload.size()) + " bytes, expected " + std::to_string(expected));
    out.payload_hash = fnv1a(payload);
    const auto values = read_le(payload);
    const std::size_t block = set.grid.n_t * set.grid.n_x;
    for (std::size_t i = 0; i < n; ++i) {
      const json& tj = meta.at("trajectories").at(i);
      Trajectory t;
      t.grid = set.grid;
      t.seed = tj.at("seed").get<std::uint64_t>();
      t.params = params_from_json(tj.at("params"));
      t.forcing = forcing_from_json(tj.at("forcing"));
      t.initial = forcing_from_json(tj.at("initial"));
      t.u = Field(set.grid.n_t, set.grid.n_x,
                  std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(i * block),
                                      values.begin() + static_cast<std::ptrdiff_t>((i + 1) * block)));
      set.trajectories.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("dataset metadata: ") + e.what());
  }
  return out;
}

// --- checkpoints ------------------------------------------------------------

struct Provenance {
  std::uint64_t dataset_hash = 0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  json extra = json::object();
};

inline std::string checkpoint_bytes(const MpPdeModel& model, const Provenance& prov) {
  json params = json::array();
  std::string payload;
  model.for_each_parameter([&](const std::string& name, const Tensor& t) {
    params.push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.size() / 8}, {"count", t.numel()}});
    append_le(payload, t.data());
  });
  const json header = {{"format_version", kCheckpointFormatVersion},
                       {"model_config", to_json(model.config)},
                       {"parameters", params},
                       {"provenance",
                        {{"dataset_hash", prov.dataset_hash}, {"seed", prov.seed}, {"epochs", prov.epochs}, {"extra", prov.extra}}}};
  return std::string(kCheckpointMagic) + "\n" + header.dump() + "\n" + payload;
}

inline void save_checkpoint(const MpPdeModel& model, const Provenance& prov, const std::filesystem::path& path) {
  write_file(path, checkpoint_bytes(model, prov));
}

struct LoadedCheckpoint {
  MpPdeModel model;
  Provenance provenance;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::MissingCheckpoint, "no checkpoint at " + path.string());
  const std::string bytes = read_file(path);
  const std::size_t l1 = bytes.find('\n');
  require(l1 != std::string::npos && bytes.substr(0, l1) == kCheckpointMagic, ErrorCode::FormatError,
          path.string() + " is not a checkpoint");
  const std::size_t l2 = bytes.find('\n', l1 + 1);
  require(l2 != std::string::npos, ErrorCode::FormatError, "truncated checkpoint header");
  LoadedCheckpoint out;
  try {
    const json header = json::parse(bytes.substr(l1 + 1, l2 - l1 - 1));
    const int version = header.at("format_version").get<int>();
    require(version == kCheckpointFormatVersion, ErrorCode::FormatError,
            "checkpoint format version " + std::to_string(version) + " (expected " +
                std::to_string(kCheckpointFormatVersion) + ")");
    const auto values = read_le(std::string_view(bytes).substr(l2 + 1));
    out.model = MpPdeModel::init(model_config_from_json(header.at("model_config")), 0);
    const json& params = header.at("parameters");
    std::size_t i = 0;
    out.model.for_each_parameter([&](const std::string& name, Tensor& t) {
      require(i < params.size(), ErrorCode::FormatError, "checkpoint lacks parameter " + name);
      const json& p = params.at(i++);
      require(p.at("name").get<std::string>() == name, ErrorCode::FormatError,
              "checkpoint parameter order differs at " + name);
      const auto shape = p.at("shape").get<Shape>();
      const auto offset = p.at("offset").get<std::size_t>();
      const auto count = p.at("count").get<std::size_t>();
      require(shape == t.shape() && count == t.numel() && offset + count <= values.size(), ErrorCode::FormatError,
              "checkpoint parameter " + name + " has shape " + shape_string(shape));
      t = Tensor(shape, std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                            values.begin() + static_cast<std::ptrdiff_t>(offset + count)));
    });
    require(i == params.size(), ErrorCode::FormatError, "checkpoint has extra parameters");
    const json& prov = header.at("provenance");
    out.provenance.dataset_hash = prov.at("dataset_hash").get<std::uint64_t>();
    out.provenance.seed = prov.at("seed").get<std::uint64_t>();
    out.provenance.epochs = prov.at("epochs").get<std::size_t>();
    out.provenance.extra = prov.at("extra");
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("checkpoint header: ") + e.what());
  }
  return out;
}

// --- logs and reports -------------------------------------------------------

inline std::string train_log_lines(const TrainLog& log) {
  std::string out;
  for (const auto& e : log.epochs) {
    const json line = {{"epoch", e.epoch}, {"one_step", e.one_step}, {"pushforward", e.pushforward},
                       {"total", e.total}, {"wall_ms", e.wall_ms}};
    out += line.dump() + "\n";
  }
  return out;
}

inline json report_json(const EvalReport& report, const json& effective_config = json::object()) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"preset", r.preset}, {"n_t", r.n_t}, {"n_x", r.n_x}, {"solver", r.solver}, {"seed", r.seed},
                    {"acc_error", r.acc_error}, {"survival_time", r.survival_time}, {"runtime_ms", r.runtime_ms}});
  }
  json aggs = json::array();
  for (const auto& a : report.aggregates()) {
    aggs.push_back({{"preset", a.preset}, {"n_t", a.n_t}, {"n_x", a.n_x}, {"solver", a.solver}, {"count", a.count},
                    {"acc_error_mean", a.acc_error_mean}, {"acc_error_std", a.acc_error_std},
                    {"survival_time_mean", a.survival_mean}, {"survival_time_std", a.survival_std},
                    {"runtime_ms_mean", a.runtime_ms_mean}, {"runtime_ms_std", a.runtime_ms_std}});
  }
  return {{"threshold", report.threshold}, {"rows", rows}, {"aggregates", aggs}, {"effective_config", effective_config}};
}

}  // namespace mppde
