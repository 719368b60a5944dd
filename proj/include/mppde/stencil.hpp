#pragma once

#include <boost/rational.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mppde/error.hpp"
#include "mppde/pde.hpp"

namespace mppde {

using Rational = boost::rational<std::int64_t>;

/// Central finite-difference stencil: d^n u/dx^n ~ (1/dx^n) sum_i coeffs[i] u[x + offsets[i] dx].
struct StencilCoeffs {
  int derivative_order = 0;
  int accuracy = 0;
  std::vector<int> offsets;
  std::vector<Rational> exact;
  std::vector<double> coeffs;

  int half_width() const { return offsets.empty() ? 0 : -offsets.front(); }
};

namespace detail {

inline Rational factorial(int k) {
  std::int64_t f = 1;
  for (int i = 2; i <= k; ++i) f *= i;
  return Rational(f);
}

inline Rational ipow(int base, int k) {
  std::int64_t r = 1;
  for (int i = 0; i < k; ++i) r *= base;
  return Rational(r);
}

}  // namespace detail

/// Moment residual sum_i c_i o_i^k / k! - [k == n], exact.
inline Rational stencil_moment(const StencilCoeffs& s, int k) {
  Rational m(0);
  for (std::size_t i = 0; i < s.offsets.size(); ++i) {
    m += s.exact[i] * detail::ipow(s.offsets[i], k) / detail::factorial(k);
  }
  return m - Rational(k == s.derivative_order ? 1 : 0);
}

/// Solves the moment (Vandermonde) system in exact rational arithmetic and
/// verifies every moment condition k = 0 .. accuracy + order - 1.
inline StencilCoeffs central_stencil(int order, int accuracy) {
  require(order >= 1 && order <= 4, ErrorCode::InvalidArgument,
          "derivative order must be in [1, 4]");
  require(accuracy >= 2 && accuracy <= 8 && accuracy % 2 == 0, ErrorCode::InvalidArgument,
          "accuracy must be even and in [2, 8]");
  const int points = 2 * ((order + 1) / 2) - 1 + accuracy;
  const int half = (points - 1) / 2;

  StencilCoeffs s;
  s.derivative_order = order;
  s.accuracy = accuracy;
  for (int o = -half; o <= half; ++o) s.offsets.push_back(o);

  const auto n = static_cast<std::size_t>(points);
  std::vector<std::vector<Rational>> a(n, std::vector<Rational>(n + 1));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      a[k][j] = detail::ipow(s.offsets[j], static_cast<int>(k)) / detail::factorial(static_cast<int>(k));
    }
    a[k][n] = Rational(static_cast<int>(k) == order ? 1 : 0);
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    while (pivot < n && a[pivot][col] == Rational(0)) ++pivot;
    require(pivot < n, ErrorCode::InvalidArgument, "singular stencil system");
    std::swap(a[col], a[pivot]);
    const Rational inv = Rational(1) / a[col][col];
    for (std::size_t j = col; j <= n; ++j) a[col][j] *= inv;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || a[r][col] == Rational(0)) continue;
      const Rational f = a[r][col];
      for (std::size_t j = col; j <= n; ++j) a[r][j] -= f * a[col][j];
    }
  }
  s.exact.resize(n);
  s.coeffs.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    s.exact[j] = a[j][n];
    s.coeffs[j] = boost::rational_cast<double>(s.exact[j]);
  }
  for (int k = 0; k < accuracy + order; ++k) {
    if (stencil_moment(s, k) != Rational(0)) {
      fail(ErrorCode::InvalidArgument, "stencil moment condition " + std::to_string(k) + " violated");
    }
  }
  return s;
}

/// Copies `u` into a buffer with `ghosts` extra cells on each side.
/// Periodic wraps; Dirichlet fixes ghost cells to the boundary value;
/// Neumann reflects with the prescribed slope.
inline std::vector<double> with_ghosts(std::span<const double> u, std::size_t ghosts,
                                       const Boundary& bc, double dx) {
  const std::size_t n = u.size();
  std::vector<double> out(n + 2 * ghosts);
  for (std::size_t i = 0; i < n; ++i) out[ghosts + i] = u[i];
  for (std::size_t m = 0; m < ghosts; ++m) {
    double left = 0.0;
    double right = 0.0;
    const double reach = static_cast<double>(2 * m + 1) * dx;
    switch (bc.kind) {
      case BoundaryKind::Periodic:
        left = u[(n - 1 - (m % n))];
        right = u[m % n];
        break;
      case BoundaryKind::Dirichlet:
        left = bc.value;
        right = bc.value;
        break;
      case BoundaryKind::Neumann: {
        const std::size_t mirror = std::min(m, n - 1);
        left = u[mirror] - bc.value * reach;
        right = u[n - 1 - mirror] + bc.value * reach;
        break;
      }
    }
    out[ghosts - 1 - m] = left;
    out[ghosts + n + m] = right;
  }
  return out;
}

/// Applies a stencil at every cell. `padded` holds the field with
/// `s.half_width()` ghost cells on each side.
inline std::vector<double> apply_stencil(const StencilCoeffs& s, std::span<const double> padded,
                                         std::size_t n, double dx) {
  const auto g = static_cast<std::ptrdiff_t>(s.half_width());
  const double scale = 1.0 / std::pow(dx, s.derivative_order);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s.offsets.size(); ++j) {
      acc += s.coeffs[j] * padded[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + g + s.offsets[j])];
    }
    out[i] = acc * scale;
  }
  return out;
}

inline std::vector<double> fdm_derivative(std::span<const double> u, int order, int accuracy,
                                          double dx, const Boundary& bc) {
  const StencilCoeffs s = central_stencil(order, accuracy);
  require(u.size() > static_cast<std::size_t>(order + accuracy), ErrorCode::GridTooSmall,
          "n_x = " + std::to_string(u.size()) + " too small for a derivative of order " +
              std::to_string(order) + " at accuracy " + std::to_string(accuracy));
  const auto padded = with_ghosts(u, static_cast<std::size_t>(s.half_width()), bc, dx);
  return apply_stencil(s, padded, u.size(), dx);
}

}  // namespace mppde
