// Copyright 2026 The nmq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "nmq/sde.hpp"

namespace nmq {
namespace {

using namespace nmq::testing;

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// exp(A t) through an eigendecomposition (A diagonalizable).
Matrix expm_eigen(const Matrix& a, double t) {
  Eigen::ComplexEigenSolver<Matrix> es(a);
  const Matrix v = es.eigenvectors();
  Vector e = (es.eigenvalues() * t).array().exp();
  return v * e.asDiagonal() * v.inverse();
}

double slope(const std::vector<double>& err, const std::vector<double>& dts) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(err.size());
  for (std::size_t i = 0; i < err.size(); ++i) {
    const double x = std::log(dts[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

TEST(Rng, SeedDerivationIsInjectiveOnSmallRange) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 10000; ++i) seen.insert(derive_seed(42, i));
  EXPECT_EQ(seen.size(), 10000u);
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}

TEST(Rng, UniformInUnitInterval) {
  Xoshiro256 g(5);
  for (int i = 0; i < 100000; ++i) {
    const double u = g.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(WienerPath, RejectsEmptyOrNonpositiveStep) {
  EXPECT_THROW(wiener_path(1, 0.0, 1e-3, 0), ModelError);
  EXPECT_THROW(wiener_path(1, 0.0, 0.0, 10), ModelError);
  EXPECT_THROW(wiener_path(1, 0.0, -1e-3, 10), ModelError);
}

TEST(WienerPath, DeterministicInSeed) {
  const NoisePath a = wiener_path(99, 0.0, 1e-3, 1000);
  const NoisePath b = wiener_path(99, 0.0, 1e-3, 1000);
  const NoisePath c = wiener_path(100, 0.0, 1e-3, 1000);
  EXPECT_EQ(a.increments, b.increments);
  EXPECT_NE(a.increments, c.increments);
}

TEST(WienerPath, VarianceAndMean) {
  const double dt = 1e-3;
  const std::size_t n = 100000;
  const NoisePath p = wiener_path(42, 0.0, dt, n);
  const double mean = std::accumulate(p.increments.begin(), p.increments.end(), 0.0) / n;
  double var = 0.0;
  for (double x : p.increments) var += (x - mean) * (x - mean);
  var /= double(n - 1);
  EXPECT_GE(var, 0.97 * dt);
  EXPECT_LE(var, 1.03 * dt);
  EXPECT_LT(std::abs(mean), 5.0 * std::sqrt(dt / n));
  // Variance standard error is dt·sqrt(2/(n−1)).
  EXPECT_LT(std::abs(var - dt), 5.0 * dt * std::sqrt(2.0 / double(n - 1)));
}

TEST(WienerPath, KolmogorovSmirnovNormality) {
  const double dt = 2e-3;
  const std::size_t n = 100000;
  const NoisePath p = wiener_path(2024, 0.0, dt, n);
  std::vector<double> z(p.increments);
  for (double& x : z) x /= std::sqrt(dt);
  std::sort(z.begin(), z.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = std_normal_cdf(z[i]);
    d = std::max({d, f - double(i) / n, double(i + 1) / n - f});
  }
  // Asymptotic critical value at significance 1e-3.
  EXPECT_LT(d, 1.949 / std::sqrt(double(n)));
}

TEST(WienerPath, CoarseningSumsIncrements) {
  const NoisePath fine = wiener_path(3, 0.0, 1e-3, 12);
  const NoisePath coarse = fine.coarsen(4);
  ASSERT_EQ(coarse.steps(), 3u);
  EXPECT_DOUBLE_EQ(coarse.dt, 4e-3);
  for (std::size_t k = 0; k < 3; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += fine.increments[4 * k + i];
    EXPECT_DOUBLE_EQ(coarse.increments[k], s);
  }
  EXPECT_NEAR(fine.cumulative().back(), coarse.cumulative().back(), 1e-15);
  EXPECT_THROW(fine.coarsen(5), ModelError);
}

TEST(StepsFor, RequiresIntegralRatio) {
  EXPECT_EQ(steps_for(2.0, 1e-4), 20000u);
  EXPECT_EQ(steps_for(1.0, 0.1), 10u);
  EXPECT_THROW(steps_for(1.0, 0.3), ModelError);
  EXPECT_THROW(steps_for(1.0, 0.0), ModelError);
}

TEST(EmStep, Basics) {
  Vector x(2), zero = Vector::Zero(2), f(2), g(2);
  x << 1.0, Complex(0, 2);
  f << 1.0, 2.0;
  g << 3.0, 4.0;
  EXPECT_EQ(em_step(x, zero, zero, 0.7, 0.1), x);
  EXPECT_LT((em_step(x, f, g, 0.0, 0.1) - (x + 0.1 * f)).norm(), 1e-15);
  EXPECT_LT((em_step(x, f, g, 0.5, 0.1) - (x + 0.1 * f + 0.5 * g)).norm(), 1e-15);
  EXPECT_THROW(em_step(x, Vector::Zero(3), zero, 0.0, 0.1), ModelError);
  Vector bad = x;
  bad(0) = std::nan("");
  EXPECT_THROW(em_step(bad, zero, zero, 0.0, 0.1), ModelError);
}

TEST(EmStep, MartingaleProperty) {
  // dx = x dI has E[x_t] = x_0.
  const std::size_t paths = 10000;
  const double dt = 1e-3;
  const std::size_t n = 1000;
  double sum = 0.0, sum_sq = 0.0;
  Vector zero = Vector::Zero(1);
  for (std::size_t i = 0; i < paths; ++i) {
    const NoisePath p = wiener_path(derive_seed(77, i), 0.0, dt, n);
    Vector x = Vector::Ones(1);
    for (double dI : p.increments) x = em_step(x, zero, x, dI, dt);
    const double v = x(0).real();
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / paths;
  const double se = std::sqrt((sum_sq / paths - mean * mean) / (paths - 1));
  EXPECT_LT(std::abs(mean - 1.0), 3.0 * se);
}

TEST(StochasticExponential, StartsAtIdentity) {
  const NoisePath p = wiener_path(1, 0.0, 1e-2, 10);
  const PropagatorPath prop = propagate_stoch_exp(
      [](double) { return Matrix(Matrix::Ones(3, 3)); },
      [](double, double) { return Matrix(0.5 * identity(3)); }, p,
      [](std::size_t, double) { return 0.0; });
  EXPECT_EQ(prop.phi[0], identity(3));
  EXPECT_EQ(prop.phi_inv[0], identity(3));
  EXPECT_EQ(prop.size(), 11u);
}

TEST(StochasticExponential, DeterministicLimitApproachesMatrixExponential) {
  std::mt19937_64 rng(4);
  const Matrix a = 0.5 * random_matrix(rng, 3, 3);
  std::vector<double> errs, dts;
  for (double dt : {1e-2, 1e-3, 1e-4}) {
    const NoisePath p = zero_path(0.0, dt, steps_for(1.0, dt));
    StochasticExponential se(3);
    for (std::size_t n = 0; n < p.steps(); ++n) se.step(a, Matrix::Zero(3, 3), 0.0, dt);
    const Matrix exact = expm_eigen(a, 1.0);
    errs.push_back((se.phi() - exact).norm() / exact.norm());
    dts.push_back(dt);
    EXPECT_LT(se.residual(), 1e-6);
  }
  EXPECT_NEAR(slope(errs, dts), 1.0, 0.05);
}

TEST(StochasticExponential, InverseResidualStaysSmall) {
  std::mt19937_64 rng(6);
  const Matrix a = 0.5 * random_matrix(rng, 4, 4);
  const Matrix b = 0.5 * random_matrix(rng, 4, 4);
  const NoisePath p = wiener_path(8, 0.0, 1e-3, 2000);
  const PropagatorPath prop = propagate_stoch_exp(
      [&](double) { return a; }, [&](double, double c) { return Matrix(b - c * identity(4)); },
      p, [](std::size_t n, double) { return 0.1 * std::sin(double(n)); });
  EXPECT_LT(prop.max_residual(), 1e-6);
}

TEST(StochasticExponential, ItoInverseRecursionWithoutNoise) {
  // Per step the recursion misses A²dt², so 100 steps stay below 1e-6 when
  // ‖A‖dt is about 1e-4.
  std::mt19937_64 rng(10);
  const Matrix a = 0.2 * random_matrix(rng, 3, 3);
  PropagatorOptions opt;
  opt.scheme = InverseScheme::ito_recursion;
  opt.reinversion_period = 100;
  StochasticExponential se(3, opt);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    se.step(a, Matrix::Zero(3, 3), 0.0, 1e-4);
    worst = std::max(worst, se.residual());
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(StochasticExponential, ItoInverseRecursionDriftsWithNoise) {
  // The Itô inverse recursion is only accurate to O(dt) per step when B ≠ 0;
  // the per-step exact inverse is not.
  std::mt19937_64 rng(12);
  const Matrix a = 0.3 * random_matrix(rng, 3, 3);
  const Matrix b = 0.8 * random_hermitian(rng, 3);
  const NoisePath p = wiener_path(13, 0.0, 1e-3, 99);
  PropagatorOptions ito;
  ito.scheme = InverseScheme::ito_recursion;
  StochasticExponential s1(3, ito), s2(3);
  for (double dI : p.increments) {
    s1.step(a, b, dI, 1e-3);
    s2.step(a, b, dI, 1e-3);
  }
  EXPECT_GT(s1.residual(), 1e-5);
  EXPECT_LT(s2.residual(), 1e-10);
}

TEST(StochasticExponential, AbortsWhenResidualExceedsLimit) {
  PropagatorOptions opt;
  opt.scheme = InverseScheme::ito_recursion;
  opt.reinversion_period = 10;
  opt.residual_limit = 1e-4;
  StochasticExponential se(2, opt);
  const Matrix b = 3.0 * sigma_x();
  const NoisePath p = wiener_path(5, 0.0, 1e-2, 10);
  EXPECT_THROW(
      {
        for (double dI : p.increments) se.step(Matrix::Zero(2, 2), b, dI, 1e-2);
      },
      NumericalAbort);
}

TEST(StochasticExponential, GeometricBrownianStrongOrder) {
  // dΦ = bΦ dI has Φ_t = exp(b I_t − b²t/2).
  const double b = 0.8, horizon = 1.0;
  std::vector<double> errs, dts = {1e-2, 1e-3, 1e-4};
  const NoisePath base = wiener_path(2718, 0.0, 1e-4, steps_for(horizon, 1e-4));
  const int n_paths = 20;
  for (double dt : dts) {
    double acc = 0.0;
    for (int k = 0; k < n_paths; ++k) {
      const NoisePath fine = wiener_path(derive_seed(2718, k), 0.0, 1e-4, base.steps());
      const NoisePath p = fine.coarsen(std::size_t(std::llround(dt / 1e-4)));
      StochasticExponential se(1);
      Matrix bm = Matrix::Constant(1, 1, b);
      for (double dI : p.increments) se.step(Matrix::Zero(1, 1), bm, dI, dt);
      const double exact = std::exp(b * fine.cumulative().back() - 0.5 * b * b * horizon);
      acc += std::abs(se.phi()(0, 0).real() - exact);
    }
    errs.push_back(acc / n_paths);
  }
  EXPECT_GE(slope(errs, dts), 0.4);
  EXPECT_GT(errs[0], errs[2]);
}

TEST(VariationOfConstants, TrivialCases) {
  const NoisePath p = wiener_path(1, 0.0, 0.1, 5);
  std::mt19937_64 rng(3);
  const Matrix a = random_matrix(rng, 2, 2);
  const PropagatorPath prop = propagate_stoch_exp(
      [&](double) { return a; }, [](double, double) { return Matrix(Matrix::Zero(2, 2)); },
      p, [](std::size_t, double) { return 0.0; });
  Vector x0(2);
  x0 << 1.0, -2.0;
  const std::vector<Vector> zero_src(5, Vector::Zero(2));
  const auto hom = variation_of_constants(prop, zero_src, x0);
  for (std::size_t n = 0; n < hom.size(); ++n) {
    EXPECT_LT((hom[n] - prop.phi[n] * x0).norm(), 1e-14);
  }

  const PropagatorPath ident = propagate_stoch_exp(
      [](double) { return Matrix(Matrix::Zero(2, 2)); },
      [](double, double) { return Matrix(Matrix::Zero(2, 2)); }, p,
      [](std::size_t, double) { return 0.0; });
  std::vector<Vector> src;
  for (int n = 0; n < 5; ++n) src.push_back(Vector::Constant(2, double(n + 1)));
  const auto quad = variation_of_constants(ident, src, Vector::Zero(2));
  EXPECT_NEAR(quad[0](0).real(), 0.0, 1e-15);
  EXPECT_NEAR(quad[3](0).real(), 0.1 * (1 + 2 + 3), 1e-14);
  EXPECT_NEAR(quad[5](1).real(), 0.1 * 15, 1e-14);
  EXPECT_THROW(variation_of_constants(ident, {}, Vector::Zero(2)), ModelError);
}

TEST(VariationOfConstants, ReproducesDirectIntegration) {
  // dx = (A x + f(t)) dt + B x dI with a state-independent source.
  std::mt19937_64 rng(21);
  const Matrix a = 0.5 * random_matrix(rng, 3, 3);
  const Matrix b = 0.4 * random_hermitian(rng, 3);
  Vector x0(3);
  x0 << 1.0, 0.5, -0.2;
  const auto f = [](double t) {
    Vector v(3);
    v << std::sin(2 * t), std::cos(t), 1.0;
    return v;
  };
  const NoisePath fine = wiener_path(55, 0.0, 1e-4, 10000);
  std::vector<double> errs, dts;
  for (std::size_t factor : {100u, 10u, 1u}) {
    const NoisePath p = fine.coarsen(factor);
    const PropagatorPath prop = propagate_stoch_exp(
        [&](double) { return a; }, [&](double, double) { return b; }, p,
        [](std::size_t, double) { return 0.0; });
    std::vector<Vector> src;
    for (std::size_t n = 0; n < p.steps(); ++n) src.push_back(f(p.time(n)));
    const auto recon = variation_of_constants(prop, src, x0);
    Vector x = x0;
    double e = 0.0;
    for (std::size_t n = 0; n <= p.steps(); ++n) {
      e = std::max(e, (recon[n] - x).cwiseAbs().maxCoeff());
      if (n < p.steps()) x = em_step(x, a * x + src[n], b * x, p.increments[n], p.dt);
    }
    errs.push_back(e);
    dts.push_back(p.dt);
  }
  EXPECT_GE(slope(errs, dts), 0.4);
  EXPECT_LT(errs.back(), errs.front());
}

TEST(HistorySum, FullAndWindowed) {
  HistorySum full(1, 0), win(1, 2);
  for (int k = 1; k <= 5; ++k) {
    full.push(Vector::Constant(1, double(k)));
    win.push(Vector::Constant(1, double(k)));
  }
  EXPECT_DOUBLE_EQ(full.sum()(0).real(), 15.0);
  EXPECT_DOUBLE_EQ(win.sum()(0).real(), 9.0);
}

TEST(PropagatorCache, RoundTrip) {
  std::mt19937_64 rng(31);
  const Matrix a = 0.3 * random_matrix(rng, 3, 3);
  const NoisePath p = wiener_path(4, 0.0, 1e-2, 20);
  const PropagatorPath prop = propagate_stoch_exp(
      [&](double) { return a; }, [](double, double) { return Matrix(0.2 * identity(3)); }, p,
      [](std::size_t, double) { return 0.0; });
  const auto file = std::filesystem::temp_directory_path() / "nmq_prop_cache.bin";
  save_propagator_cache(file.string(), prop);
  const PropagatorPath back = load_propagator_cache(file.string());
  ASSERT_EQ(back.size(), prop.size());
  EXPECT_DOUBLE_EQ(back.dt, prop.dt);
  for (std::size_t n = 0; n < prop.size(); ++n) {
    // complex64 storage keeps about seven significant digits.
    EXPECT_LT((back.phi[n] - prop.phi[n]).norm(), 1e-6 * prop.phi[n].norm());
    EXPECT_LT((back.phi_inv[n] - prop.phi_inv[n]).norm(), 1e-6 * prop.phi_inv[n].norm());
  }
  std::filesystem::remove(file);
  EXPECT_THROW(load_propagator_cache(file.string()), ModelError);
}

}  // namespace
}  // namespace nmq
