#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mppde/stencil.hpp"

using namespace mppde;

namespace {

std::vector<Rational> rationals(std::initializer_list<std::pair<long, long>> v) {
  std::vector<Rational> out;
  for (auto [n, d] : v) out.emplace_back(n, d);
  return out;
}

std::vector<double> sample(std::size_t n, double L, auto f) {
  std::vector<double> u(n);
  const double dx = L / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = f((static_cast<double>(i) + 0.5) * dx);
  return u;
}

}  // namespace

TEST(Stencil, MomentConditionsExact) {
  for (int order = 1; order <= 3; ++order) {
    for (int acc = 2; acc <= 6; acc += 2) {
      const auto s = central_stencil(order, acc);
      EXPECT_EQ(s.derivative_order, order);
      for (int k = 0; k < acc + order; ++k) {
        EXPECT_EQ(stencil_moment(s, k), Rational(0)) << "order " << order << " acc " << acc << " k " << k;
      }
    }
  }
}

TEST(Stencil, KnownCoefficients) {
  EXPECT_EQ(central_stencil(1, 2).exact, rationals({{-1, 2}, {0, 1}, {1, 2}}));
  EXPECT_EQ(central_stencil(2, 2).exact, rationals({{1, 1}, {-2, 1}, {1, 1}}));
  EXPECT_EQ(central_stencil(2, 4).exact, rationals({{-1, 12}, {4, 3}, {-5, 2}, {4, 3}, {-1, 12}}));
  EXPECT_EQ(central_stencil(3, 2).exact, rationals({{-1, 2}, {1, 1}, {0, 1}, {-1, 1}, {1, 2}}));
  const auto s = central_stencil(3, 4);
  EXPECT_EQ(s.offsets, (std::vector<int>{-3, -2, -1, 0, 1, 2, 3}));
  EXPECT_EQ(s.half_width(), 3);
}

TEST(Stencil, RejectsUnsupported) {
  EXPECT_THROW(central_stencil(0, 2), Error);
  EXPECT_THROW(central_stencil(2, 3), Error);
  EXPECT_THROW(central_stencil(1, 0), Error);
}

TEST(FdmDerivative, ConstantGivesZero) {
  const std::vector<double> u(32, 3.7);
  for (int order = 1; order <= 3; ++order) {
    for (double v : fdm_derivative(u, order, 4, 0.1, Boundary::periodic())) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(FdmDerivative, LinearExactInInterior) {
  const std::size_t n = 20;
  const double dx = 0.25;
  const auto u = sample(n, n * dx, [](double x) { return 2.0 + x; });
  const auto du = fdm_derivative(u, 1, 2, dx, Boundary::dirichlet(0.0));
  for (std::size_t i = 1; i + 1 < n; ++i) EXPECT_NEAR(du[i], 1.0, 1e-10);
}

TEST(FdmDerivative, NeumannGhostsExtendLinearProfiles) {
  const std::size_t n = 16;
  const double dx = 0.5, slope = -1.5;
  const auto u = sample(n, n * dx, [&](double x) { return slope * x; });
  const auto padded = with_ghosts(u, 3, Boundary::neumann(slope), dx);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    const double x = (static_cast<double>(i) - 3.0 + 0.5) * dx;
    EXPECT_NEAR(padded[i], slope * x, 1e-12);
  }
  for (double v : fdm_derivative(u, 1, 4, dx, Boundary::neumann(slope))) EXPECT_NEAR(v, slope, 1e-12);
}

TEST(FdmDerivative, DirichletAndPeriodicGhosts) {
  const std::vector<double> u{1, 2, 3, 4, 5, 6};
  const auto d = with_ghosts(u, 2, Boundary::dirichlet(9.0), 1.0);
  EXPECT_EQ(d, (std::vector<double>{9, 9, 1, 2, 3, 4, 5, 6, 9, 9}));
  const auto p = with_ghosts(u, 2, Boundary::periodic(), 1.0);
  EXPECT_EQ(p, (std::vector<double>{5, 6, 1, 2, 3, 4, 5, 6, 1, 2}));
}

TEST(FdmDerivative, SecondDerivativeConvergesAtStencilOrder) {
  const double L = 16.0, k = 2 * std::numbers::pi / L;
  for (int acc : {2, 4, 6}) {
    std::vector<double> errs;
    for (std::size_t n : {32u, 64u, 128u}) {
      const auto u = sample(n, L, [&](double x) { return std::sin(k * x); });
      const auto d2 = fdm_derivative(u, 2, acc, L / n, Boundary::periodic());
      const auto exact = sample(n, L, [&](double x) { return -k * k * std::sin(k * x); });
      double e = 0.0;
      for (std::size_t i = 0; i < n; ++i) e = std::max(e, std::abs(d2[i] - exact[i]));
      errs.push_back(e);
    }
    for (std::size_t j = 1; j < errs.size(); ++j) {
      EXPECT_NEAR(std::log2(errs[j - 1] / errs[j]), acc, 0.2) << "accuracy " << acc;
    }
  }
}

TEST(FdmDerivative, ThirdDerivativeOfSine) {
  const double L = 16.0, k = 2 * std::numbers::pi / L;
  const std::size_t n = 128;
  const auto u = sample(n, L, [&](double x) { return std::sin(k * x); });
  const auto d3 = fdm_derivative(u, 3, 4, L / n, Boundary::periodic());
  const auto exact = sample(n, L, [&](double x) { return -k * k * k * std::cos(k * x); });
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(d3[i], exact[i], 1e-5);
}

TEST(FdmDerivative, GridTooSmall) {
  const std::vector<double> u(5, 1.0);
  try {
    fdm_derivative(u, 2, 4, 0.1, Boundary::periodic());
    FAIL() << "expected GridTooSmall";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridTooSmall);
  }
  EXPECT_NO_THROW(fdm_derivative(std::vector<double>(7, 1.0), 2, 4, 0.1, Boundary::periodic()));
}
