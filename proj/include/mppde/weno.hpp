#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mppde/error.hpp"
#include "mppde/pde.hpp"
#include "mppde/stencil.hpp"

namespace mppde {

inline constexpr double kWenoEpsilon = 1e-6;

/// Fifth-order WENO value at the right face of cell c from the five cells
/// (c-2, c-1, c, c+1, c+2). Jiang-Shu smoothness indicators.
inline double weno5_face(double vm2, double vm1, double v0, double vp1, double vp2,
                         double eps = kWenoEpsilon) {
  // Candidate values as increments over v0, so constants are reproduced exactly.
  const double dm2 = vm2 - v0, dm1 = vm1 - v0, dp1 = vp1 - v0, dp2 = vp2 - v0;
  const double q0 = (2.0 * dm2 - 7.0 * dm1) / 6.0;
  const double q1 = (2.0 * dp1 - dm1) / 6.0;
  const double q2 = (5.0 * dp1 - dp2) / 6.0;

  const double s0a = vm2 - 2.0 * vm1 + v0;
  const double s0b = vm2 - 4.0 * vm1 + 3.0 * v0;
  const double s1a = vm1 - 2.0 * v0 + vp1;
  const double s1b = vm1 - vp1;
  const double s2a = v0 - 2.0 * vp1 + vp2;
  const double s2b = 3.0 * v0 - 4.0 * vp1 + vp2;
  const double b0 = 13.0 / 12.0 * s0a * s0a + 0.25 * s0b * s0b;
  const double b1 = 13.0 / 12.0 * s1a * s1a + 0.25 * s1b * s1b;
  const double b2 = 13.0 / 12.0 * s2a * s2a + 0.25 * s2b * s2b;

  const double a0 = 0.1 / ((eps + b0) * (eps + b0));
  const double a1 = 0.6 / ((eps + b1) * (eps + b1));
  const double a2 = 0.3 / ((eps + b2) * (eps + b2));
  return v0 + (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2);
}

/// Reconstructed values at the n + 1 faces x_j = j dx, j = 0..n.
/// `left[j]` is extrapolated from cell j-1 (upwind for rightward flow),
/// `right[j]` from cell j.
struct FaceValues {
  std::vector<double> left;
  std::vector<double> right;
};

inline constexpr std::size_t kWenoGhosts = 3;

/// Reconstruction from a buffer padded with kWenoGhosts cells per side.
inline FaceValues weno5_reconstruct_padded(std::span<const double> padded, std::size_t n) {
  FaceValues f;
  f.left.resize(n + 1);
  f.right.resize(n + 1);
  const std::size_t g = kWenoGhosts;
  for (std::size_t j = 0; j <= n; ++j) {
    // Padded index of cell j - 1 is g + j - 1.
    const std::size_t c = g + j - 1;
    f.left[j] = weno5_face(padded[c - 2], padded[c - 1], padded[c], padded[c + 1], padded[c + 2]);
    f.right[j] = weno5_face(padded[c + 3], padded[c + 2], padded[c + 1], padded[c], padded[c - 1]);
  }
  return f;
}

inline FaceValues weno5_reconstruct(std::span<const double> cell_avgs,
                                    const Boundary& bc = Boundary::periodic(), double dx = 1.0) {
  require(cell_avgs.size() >= 6, ErrorCode::GridTooSmall,
          "WENO5 needs at least 6 cells, got " + std::to_string(cell_avgs.size()));
  const auto padded = with_ghosts(cell_avgs, kWenoGhosts, bc, dx);
  return weno5_reconstruct_padded(padded, cell_avgs.size());
}

}  // namespace mppde
