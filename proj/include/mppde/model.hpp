#pragma once

// Message-passing neural PDE solver: MLP encoder, M message-passing layers
// and a 1D-CNN decoder that emits a bundle of K future time steps.
//
// All per-node work is batched: several graphs (one per sample) are stacked
// into one disjoint graph of N = graphs * n_x nodes.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mppde/error.hpp"
#include "mppde/pde.hpp"
#include "mppde/random.hpp"
#include "mppde/tensor.hpp"

namespace mppde {

struct ModelConfig {
  std::size_t bundle_size = 5;
  std::size_t num_layers = 6;
  std::size_t hidden_dim = 64;
  std::size_t neighborhood_radius = 3;
  std::size_t decoder_channels = 8;
  std::size_t decoder_kernel = 5;
  /// Append a one-hot boundary type to the PDE features.
  bool boundary_features = false;

  std::size_t theta_dim() const { return boundary_features ? 6 : 3; }
  std::size_t encoder_inputs() const { return bundle_size + 2 + theta_dim(); }
  std::size_t message_inputs() const { return 2 * hidden_dim + bundle_size + 1 + theta_dim(); }
  std::size_t update_inputs() const { return 2 * hidden_dim + theta_dim(); }

  void validate() const {
    require(bundle_size >= 1 && num_layers >= 1 && hidden_dim >= 1 && neighborhood_radius >= 1,
            ErrorCode::InvalidArgument, "model sizes must be positive");
    require(decoder_channels >= 1 && decoder_kernel % 2 == 1, ErrorCode::InvalidArgument,
            "decoder kernel width must be odd");
  }

  /// At least one supervised bundle must fit in a trajectory of n_t steps.
  void validate_for(std::size_t n_t) const {
    validate();
    require(2 * bundle_size <= n_t, ErrorCode::InvalidArgument,
            "bundle size K = " + std::to_string(bundle_size) + " incompatible with n_t = " + std::to_string(n_t));
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Directed edges src -> dst. `offset` is the signed index step from
/// receiver to sender (minimum image for periodic domains).
struct Graph {
  std::size_t num_nodes = 0;
  Index src;
  Index dst;
  std::vector<int> offset;

  std::size_t num_edges() const { return src.size(); }
  std::size_t in_degree(std::size_t node) const {
    std::size_t d = 0;
    for (std::size_t v : dst) d += v == node;
    return d;
  }
};

/// Connects j -> i whenever |i - j| <= radius, wrapping for periodic domains.
/// Edges are ordered by receiver, then by signed offset.
inline Graph build_graph(std::size_t n_x, std::size_t radius, const Boundary& bc) {
  require(n_x > 2 * radius, ErrorCode::GridTooSmall,
          "graph with radius " + std::to_string(radius) + " needs more than " + std::to_string(2 * radius) +
              " nodes, got " + std::to_string(n_x));
  Graph g;
  g.num_nodes = n_x;
  const auto n = static_cast<std::ptrdiff_t>(n_x);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t s = -r; s <= r; ++s) {
      if (s == 0) continue;
      std::ptrdiff_t j = i + s;
      if (bc.is_periodic()) {
        j = (j % n + n) % n;
      } else if (j < 0 || j >= n) {
        continue;
      }
      g.src.push_back(static_cast<std::size_t>(j));
      g.dst.push_back(static_cast<std::size_t>(i));
      g.offset.push_back(static_cast<int>(s));
    }
  }
  return g;
}

/// Disjoint union of `copies` copies of `g`, node ids shifted per copy.
inline Graph replicate(const Graph& g, std::size_t copies) {
  Graph out;
  out.num_nodes = g.num_nodes * copies;
  for (std::size_t c = 0; c < copies; ++c) {
    const std::size_t shift = c * g.num_nodes;
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      out.src.push_back(g.src[e] + shift);
      out.dst.push_back(g.dst[e] + shift);
      out.offset.push_back(g.offset[e]);
    }
  }
  return out;
}

/// Encoder input of one node: solution window u_i^{k-K+1..k}, position, time
/// and the PDE parameters.
struct NodeInput {
  std::vector<double> u_window;
  double x = 0.0;
  double t = 0.0;
  PdeParams theta;
};

inline std::vector<double> theta_features(const PdeParams& p, bool boundary_features) {
  std::vector<double> f{p.alpha, p.beta, p.gamma};
  if (boundary_features) {
    f.push_back(p.boundary.kind == BoundaryKind::Periodic ? 1.0 : 0.0);
    f.push_back(p.boundary.kind == BoundaryKind::Dirichlet ? 1.0 : 0.0);
    f.push_back(p.boundary.kind == BoundaryKind::Neumann ? 1.0 : 0.0);
  }
  return f;
}

/// Everything one batched forward pass consumes.
struct GraphInput {
  std::size_t graphs = 0;
  std::size_t n_x = 0;
  /// [N, K], oldest snapshot first; may be recorded on a tape.
  Tensor window;
  /// [N, 2 + theta_dim]: normalized position, normalized time, theta.
  Tensor node_features;
  /// [N, theta_dim]
  Tensor node_theta;
  /// [E, 1 + theta_dim]: x_i - x_j, theta.
  Tensor edge_features;
  Graph graph;
  /// t_{k+l} - t_k for l = 1..K.
  Tensor t_offsets;
  /// Provenance per graph; used by data-driven predictors and the trainer.
  std::vector<std::size_t> trajectory;
  std::vector<std::size_t> step;
};

/// Description of one graph in a batch.
struct GraphSpec {
  PdeParams params;
  /// Time of the newest snapshot in the window.
  double t = 0.0;
  std::size_t trajectory = 0;
  std::size_t step = 0;
};

/// Builds a batched input. `window` is [graphs * n_x, K] node-major.
inline GraphInput make_graph_input(const ModelConfig& cfg, const Grid& grid, const std::vector<GraphSpec>& specs,
                                   Tensor window) {
  const std::size_t n = grid.n_x;
  const std::size_t graphs = specs.size();
  const std::size_t K = cfg.bundle_size;
  const std::size_t td = cfg.theta_dim();
  require(graphs >= 1, ErrorCode::InvalidArgument, "empty batch");
  require(window.rank() == 2 && window.dim(0) == graphs * n && window.dim(1) == K, ErrorCode::ShapeMismatch,
          "window shape " + shape_string(window.shape()) + " does not match " + std::to_string(graphs) +
              " graphs of " + std::to_string(n) + " nodes with K = " + std::to_string(K));
  for (const auto& s : specs) {
    require(s.params.boundary.kind == specs.front().params.boundary.kind, ErrorCode::InvalidArgument,
            "a batch must share one boundary type");
  }
  const Graph single = build_graph(n, cfg.neighborhood_radius, specs.front().params.boundary);

  GraphInput in;
  in.graphs = graphs;
  in.n_x = n;
  in.window = std::move(window);
  in.graph = replicate(single, graphs);

  std::vector<double> nf(graphs * n * (2 + td));
  std::vector<double> nt(graphs * n * td);
  std::vector<double> ef(in.graph.num_edges() * (1 + td));
  for (std::size_t b = 0; b < graphs; ++b) {
    const auto theta = theta_features(specs[b].params, cfg.boundary_features);
    for (std::size_t i = 0; i < n; ++i) {
      double* row = nf.data() + (b * n + i) * (2 + td);
      row[0] = grid.x_centers[i] / grid.length;
      row[1] = specs[b].t / grid.t_end;
      std::copy(theta.begin(), theta.end(), row + 2);
      std::copy(theta.begin(), theta.end(), nt.data() + (b * n + i) * td);
    }
    for (std::size_t e = 0; e < single.num_edges(); ++e) {
      double* row = ef.data() + (b * single.num_edges() + e) * (1 + td);
      // x_i - x_j with j = i + offset
      row[0] = -static_cast<double>(single.offset[e]) * grid.dx;
      std::copy(theta.begin(), theta.end(), row + 1);
    }
    in.trajectory.push_back(specs[b].trajectory);
    in.step.push_back(specs[b].step);
  }
  in.node_features = Tensor({graphs * n, 2 + td}, std::move(nf));
  in.node_theta = Tensor({graphs * n, td}, std::move(nt));
  in.edge_features = Tensor({in.graph.num_edges(), 1 + td}, std::move(ef));
  std::vector<double> offs(K);
  for (std::size_t l = 0; l < K; ++l) offs[l] = static_cast<double>(l + 1) * grid.dt();
  in.t_offsets = Tensor::vector(std::move(offs));
  return in;
}

/// Two-layer perceptron: W2 swish(W1 x + b1) + b2.
struct Mlp {
  Tensor w1, b1, w2, b2;

  Tensor operator()(const Tensor& x) const { return add(matmul(swish(add(matmul(x, w1), b1)), w2), b2); }

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
};

namespace detail {

/// Glorot-uniform weights.
inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return Tensor({fan_in, fan_out}, std::move(w));
}

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> w(shape_numel(shape));
  for (double& v : w) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(w));
}

}  // namespace detail

inline Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Mlp m;
  m.w1 = detail::glorot(in, hidden, rng);
  m.b1 = Tensor::zeros({hidden});
  m.w2 = detail::glorot(hidden, out, rng);
  m.b2 = Tensor::zeros({out});
  return m;
}

struct ProcessorLayer {
  Mlp edge;  // phi
  Mlp node;  // psi
};

/// conv(1 -> C) -> swish -> conv(C -> 1) over the embedding axis, then a
/// linear map hidden_dim -> K.
struct Decoder {
  Tensor conv1_w, conv1_b, conv2_w, conv2_b, out_w, out_b;
};

class MpPdeModel {
 public:
  ModelConfig config;
  Mlp encoder;
  std::vector<ProcessorLayer> layers;
  Decoder decoder;

  static MpPdeModel init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    MpPdeModel m;
    m.config = cfg;
    const std::size_t H = cfg.hidden_dim;
    m.encoder = Mlp::init(cfg.encoder_inputs(), H, H, rng);
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      ProcessorLayer layer;
      layer.edge = Mlp::init(cfg.message_inputs(), H, H, rng);
      layer.node = Mlp::init(cfg.update_inputs(), H, H, rng);
      m.layers.push_back(std::move(layer));
    }
    const std::size_t C = cfg.decoder_channels;
    const std::size_t W = cfg.decoder_kernel;
    m.decoder.conv1_w = detail::uniform_tensor({C, 1, W}, 1.0 / std::sqrt(static_cast<double>(W)), rng);
    m.decoder.conv1_b = Tensor::zeros({C});
    m.decoder.conv2_w = detail::uniform_tensor({1, C, W}, 1.0 / std::sqrt(static_cast<double>(C * W)), rng);
    m.decoder.conv2_b = Tensor::zeros({1});
    m.decoder.out_w = detail::glorot(H, cfg.bundle_size, rng);
    m.decoder.out_b = Tensor::zeros({cfg.bundle_size});
    return m;
  }

  /// Visits every parameter with a stable name, in a fixed order.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    auto mlp = [&](const std::string& prefix, auto& m) {
      f(prefix + ".w1", m.w1);
      f(prefix + ".b1", m.b1);
      f(prefix + ".w2", m.w2);
      f(prefix + ".b2", m.b2);
    };
    mlp("encoder", self.encoder);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      mlp("processor." + std::to_string(l) + ".edge", self.layers[l].edge);
      mlp("processor." + std::to_string(l) + ".node", self.layers[l].node);
    }
    f(std::string("decoder.conv1.w"), self.decoder.conv1_w);
    f(std::string("decoder.conv1.b"), self.decoder.conv1_b);
    f(std::string("decoder.conv2.w"), self.decoder.conv2_w);
    f(std::string("decoder.conv2.b"), self.decoder.conv2_b);
    f(std::string("decoder.out.w"), self.decoder.out_w);
    f(std::string("decoder.out.b"), self.decoder.out_b);
  }

  template <typename F>
  void for_each_parameter(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <typename F>
  void for_each_parameter(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for_each_parameter([&](const std::string&, const Tensor& t) { out.push_back(t); });
    return out;
  }

  void set_parameters(const std::vector<Tensor>& values) {
    std::size_t i = 0;
    for_each_parameter([&](const std::string& name, Tensor& t) {
      require(i < values.size() && values[i].shape() == t.shape(), ErrorCode::ShapeMismatch,
              "parameter " + name + " shape mismatch");
      t = values[i++];
    });
    require(i == values.size(), ErrorCode::ShapeMismatch, "parameter count mismatch");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&](const std::string&, const Tensor& t) { n += t.numel(); });
    return n;
  }

  /// Copy whose parameters are differentiable leaves of `tape`.
  MpPdeModel bind(Tape& tape) const {
    MpPdeModel m = *this;
    m.for_each_parameter([&](const std::string&, Tensor& t) { t = tape.variable(t); });
    return m;
  }

  /// Copy with every parameter cut from its tape.
  MpPdeModel detached() const {
    MpPdeModel m = *this;
    m.for_each_parameter([&](const std::string&, Tensor& t) { t = detach(t); });
    return m;
  }

  /// Bitwise equality of configuration and all parameter values.
  bool same_parameters(const MpPdeModel& other) const {
    if (!(config == other.config)) return false;
    const auto a = parameters();
    const auto b = other.parameters();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!a[i].same_values(b[i])) return false;
    return true;
  }

  // --- network stages -----------------------------------------------------

  /// f^0 = encoder([u_window, x, t, theta]) for every node.
  Tensor encode(const GraphInput& in) const { return encoder(concat({in.window, in.node_features}, 1)); }

  /// Messages m_ij for a batch of edges; every argument has one row per edge.
  Tensor message(std::size_t layer, const Tensor& f_i, const Tensor& f_j, const Tensor& du,
                 const Tensor& edge_features) const {
    return layers.at(layer).edge(concat({f_i, f_j, du, edge_features}, 1));
  }

  /// f^{m+1}_i = psi(f^m_i, aggregated_i, theta).
  Tensor node_update(std::size_t layer, const Tensor& f, const Tensor& aggregated, const Tensor& theta) const {
    return layers.at(layer).node(concat({f, aggregated, theta}, 1));
  }

  /// One processor layer: messages along every edge, summed at the receiver.
  Tensor process(std::size_t layer, const Tensor& f, const GraphInput& in, const Tensor& du) const {
    const Tensor f_i = gather(f, in.graph.dst);
    const Tensor f_j = gather(f, in.graph.src);
    const Tensor m = message(layer, f_i, f_j, du, in.edge_features);
    const Tensor aggregated = scatter_add(m, in.graph.dst, f.dim(0));
    return node_update(layer, f, aggregated, in.node_theta);
  }

  /// Per-node bundle [N, K]: u_i^k + (t_{k+l} - t_k) d_i^l.
  Tensor decode(const Tensor& f, const Tensor& u_now, const Tensor& t_offsets) const {
    const std::size_t N = f.dim(0);
    const std::size_t H = f.dim(1);
    const std::size_t K = t_offsets.numel();
    require(u_now.rank() == 2 && u_now.dim(0) == N && u_now.dim(1) == 1, ErrorCode::ShapeMismatch,
            "decode: current state must be [N, 1]");
    Tensor h = reshape(f, {N, 1, H});
    h = swish(conv1d(h, decoder.conv1_w, decoder.conv1_b));
    h = conv1d(h, decoder.conv2_w, decoder.conv2_b);
    const Tensor d = add(matmul(reshape(h, {N, H}), decoder.out_w), decoder.out_b);
    const Tensor repeated = matmul(u_now, Tensor::full({1, K}, 1.0));
    return add(repeated, mul(d, t_offsets));
  }

  /// Batched forward pass; returns node-major [N, K].
  Tensor forward_nodes(const GraphInput& in) const {
    const std::size_t K = config.bundle_size;
    require(in.window.dim(1) == K, ErrorCode::ShapeMismatch, "window width differs from the bundle size");
    const Tensor du = sub(gather(in.window, in.graph.dst), gather(in.window, in.graph.src));
    Tensor f = encode(in);
    for (std::size_t l = 0; l < layers.size(); ++l) f = process(l, f, in, du);
    return decode(f, slice(in.window, 1, K - 1, 1), in.t_offsets);
  }

  Tensor operator()(const GraphInput& in) const { return forward_nodes(in); }
};

/// Window [K][n_x] (time-major rows) to node-major [n_x, K].
inline Tensor window_from_rows(std::span<const double> rows, std::size_t K, std::size_t n_x) {
  require(rows.size() == K * n_x, ErrorCode::ShapeMismatch, "window rows size mismatch");
  std::vector<double> out(K * n_x);
  for (std::size_t l = 0; l < K; ++l)
    for (std::size_t i = 0; i < n_x; ++i) out[i * K + l] = rows[l * n_x + i];
  return Tensor({n_x, K}, std::move(out));
}

/// Single-graph forward: returns the predicted bundle as [K, n_x].
inline Tensor forward(const MpPdeModel& model, const std::vector<NodeInput>& nodes, const Grid& grid) {
  const std::size_t K = model.config.bundle_size;
  require(nodes.size() == grid.n_x, ErrorCode::ShapeMismatch, "one NodeInput per grid cell expected");
  std::vector<double> w(nodes.size() * K);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    require(nodes[i].u_window.size() == K, ErrorCode::ShapeMismatch,
            "node window length " + std::to_string(nodes[i].u_window.size()) + " differs from K = " +
                std::to_string(K));
    std::copy(nodes[i].u_window.begin(), nodes[i].u_window.end(), w.begin() + static_cast<std::ptrdiff_t>(i * K));
  }
  GraphSpec spec{nodes.front().theta, nodes.front().t, 0, 0};
  GraphInput in = make_graph_input(model.config, grid, {spec}, Tensor({grid.n_x, K}, std::move(w)));
  std::vector<double> features(in.node_features.values());
  const std::size_t width = in.node_features.dim(1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto theta = theta_features(nodes[i].theta, model.config.boundary_features);
    features[i * width] = nodes[i].x / grid.length;
    features[i * width + 1] = nodes[i].t / grid.t_end;
    std::copy(theta.begin(), theta.end(), features.begin() + static_cast<std::ptrdiff_t>(i * width + 2));
  }
  in.node_features = Tensor(in.node_features.shape(), std::move(features));
  return transpose(model.forward_nodes(in));
}

/// Autoregressive inference. `initial_window` is [K][n_x] ending at save
/// index `start_step`; returns the concatenation of `steps` predicted
/// bundles as a [K * steps][n_x] field.
inline Field rollout(const MpPdeModel& model, std::span<const double> initial_window, const Grid& grid,
                     const PdeParams& params, std::size_t steps, std::size_t start_step) {
  const std::size_t K = model.config.bundle_size;
  require(steps >= 1, ErrorCode::InvalidArgument, "rollout needs at least one step");
  const MpPdeModel frozen = model.detached();
  Field out(K * steps, grid.n_x);
  Tensor window = window_from_rows(initial_window, K, grid.n_x);
  double t = grid.t_points.at(start_step);
  for (std::size_t s = 0; s < steps; ++s) {
    const GraphInput in = make_graph_input(frozen.config, grid, {GraphSpec{params, t, 0, start_step + s * K}}, window);
    window = frozen.forward_nodes(in);
    for (std::size_t i = 0; i < grid.n_x; ++i) {
      for (std::size_t l = 0; l < K; ++l) {
        const double v = window[i * K + l];
        if (!std::isfinite(v)) {
          fail(ErrorCode::SolutionBlowup, "rollout produced a non-finite value at bundle " + std::to_string(s));
        }
        out(s * K + l, i) = v;
      }
    }
    t += static_cast<double>(K) * grid.dt();
  }
  return out;
}

inline Field rollout(const MpPdeModel& model, std::span<const double> initial_window, const Grid& grid,
                     const PdeParams& params, std::size_t steps) {
  return rollout(model, initial_window, grid, params, steps, model.config.bundle_size - 1);
}

}  // namespace mppde
