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

/**
 * @file deterministic.hpp
 * @brief Unconditional master equations: GKSL, the coupled block system and
 *        the Nakajima–Zwanzig equation for the projected state.
 *
 * All three use classical RK4 on the same uniform grid as the stochastic
 * engines, so their samples line up with trajectory samples.
 */
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nmq/block_generators.hpp"
#include "nmq/core.hpp"
#include "nmq/engines.hpp"
#include "nmq/model.hpp"
#include "nmq/superop.hpp"

namespace nmq {

/// Uniform time grid t_n = t0 + n·dt, n = 0..steps.
struct Grid {
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;

  double time(std::size_t n) const { return t0 + double(n) * dt; }

  static Grid over(double horizon, double dt) {
    return {0.0, dt, steps_for(horizon, dt)};
  }
};

struct DeterministicRecord {
  std::string engine;
  Representation representation = Representation::composite;
  double dt = 0.0;
  std::vector<std::size_t> steps;
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Matrix> principal;

  std::size_t size() const { return states.size(); }
};

namespace detail {

using LinearField = std::function<void(double t, const Vector& x, Vector& out)>;

inline void rk4_step(const LinearField& f, double t, double dt, Vector& x,
                     Vector& k1, Vector& k2, Vector& k3, Vector& k4,
                     Vector& tmp) {
  f(t, x, k1);
  tmp = x + 0.5 * dt * k1;
  f(t + 0.5 * dt, tmp, k2);
  tmp = x + 0.5 * dt * k2;
  f(t + 0.5 * dt, tmp, k3);
  tmp = x + dt * k3;
  f(t + dt, tmp, k4);
  x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline DeterministicRecord integrate_rk4(
    std::string engine, Representation rep, const LinearField& f, Vector x,
    const Grid& grid, std::size_t stride,
    const std::function<Matrix(const Vector&)>& principal) {
  DeterministicRecord rec;
  rec.engine = std::move(engine);
  rec.representation = rep;
  rec.dt = grid.dt;
  const auto store = [&](std::size_t n) {
    rec.steps.push_back(n);
    rec.times.push_back(grid.time(n));
    rec.states.push_back(x);
    rec.principal.push_back(principal(x));
  };
  store(0);
  Vector k1(x.size()), k2(x.size()), k3(x.size()), k4(x.size()), tmp(x.size());
  for (std::size_t n = 0; n < grid.steps; ++n) {
    rk4_step(f, grid.time(n), grid.dt, x, k1, k2, k3, k4, tmp);
    if (!x.allFinite()) throw NumericalAbort("state became non-finite", n + 1);
    if (store_step(n + 1, grid.steps, stride)) store(n + 1);
  }
  return rec;
}

}  // namespace detail

/// dρ/dt = L(t)ρ on the composite space.
inline DeterministicRecord solve_gksl(const ModelSpec& spec, const Matrix& init,
                                      const Grid& grid, std::size_t stride = 1) {
  const Eigen::Index d = spec.dim();
  if (init.rows() != d || init.cols() != d) {
    throw ModelError("solve_gksl: initial state has wrong dimension");
  }
  TimeCache<Matrix> gen([&](double t) { return lindbladian(spec, t).matrix; },
                        spec.time_independent());
  return detail::integrate_rk4(
      "gksl", Representation::composite,
      [&](double t, const Vector& x, Vector& out) { out.noalias() = gen.at(t) * x; },
      vectorize(init), grid, stride,
      [&](const Vector& x) {
        return partial_trace_aux(devectorize(x, d), spec.n_a);
      });
}

/// The unconditional coupled block system on the stack [diag; offdiag].
inline DeterministicRecord solve_coupled_me(const ModelSpec& spec,
                                            const BlockState& init,
                                            const Grid& grid,
                                            std::size_t stride = 1) {
  if (init.n_s != spec.n_s || init.n_a != spec.n_a) {
    throw ModelError("solve_coupled_me: block state does not match model");
  }
  TimeCache<Matrix> gen(
      [&](double t) { return coupled_drift_matrix(BlockOperators::build(spec, t)); },
      spec.time_independent());
  const Eigen::Index nd = init.diag_dim();
  return detail::integrate_rk4(
      "coupled_me", Representation::block_stack,
      [&](double t, const Vector& x, Vector& out) { out.noalias() = gen.at(t) * x; },
      init.full_vector(), grid, stride,
      [&](const Vector& x) { return detail::stack_principal(x.head(nd), spec.n_s); });
}

/// Generator used for the time-ordered propagator of the irrelevant part.
enum class NzGenerator { qq, q };
/// How the memory integral is discretized.
enum class NzQuadrature { rk4_augmented, left_rectangle };

inline std::string to_string(NzGenerator g) { return g == NzGenerator::qq ? "qq" : "q"; }
inline std::string to_string(NzQuadrature q) {
  return q == NzQuadrature::rk4_augmented ? "rk4_augmented" : "left_rectangle";
}

struct NzOptions {
  NzGenerator generator = NzGenerator::qq;
  NzQuadrature quadrature = NzQuadrature::rk4_augmented;
  bool include_inhomogeneous = true;
  std::size_t stride = 1;
  /// Abort when ‖U U⁻¹ − I‖_F exceeds this.
  double inverse_limit = 1e-6;
};

/// Projected master equation
///   dρᵖ/dt = L^{pp}ρᵖ + L^{pq}Γ_{t,0}ρ^q(0) + ∫₀ᵗ L^{pq}Γ_{t,t'}L^{qp}ρᵖ(t') dt'
/// with Γ_{t,t'} = U_t U_{t'}⁻¹ and dU/dt = L^{qq}(t)U (or QL(t)U), U_0 = I.
///
/// rk4_augmented integrates (ρᵖ, M) with M(t) = ∫₀ᵗ U⁻¹L^{qp}ρᵖ dt' as one
/// ODE system; U is carried on the half-step grid by RK4. left_rectangle is
/// explicit Euler with a left-point memory sum.
inline DeterministicRecord solve_nz(const ModelSpec& spec, const Projector& proj,
                                    const Matrix& init, const Grid& grid,
                                    const NzOptions& opt = {}) {
  const Eigen::Index d = spec.dim();
  if (init.rows() != d || init.cols() != d) {
    throw ModelError("solve_nz: initial state has wrong dimension");
  }
  struct Gens {
    Matrix pp, pq, qp, u;
  };
  TimeCache<Gens> gens(
      [&](double t) {
        const SuperOp l = lindbladian(spec, t);
        Gens g{restrict(l, proj.p, proj.q, Restriction::pp).matrix,
               restrict(l, proj.p, proj.q, Restriction::pq).matrix,
               restrict(l, proj.p, proj.q, Restriction::qp).matrix, Matrix()};
        g.u = opt.generator == NzGenerator::qq
                  ? restrict(l, proj.p, proj.q, Restriction::qq).matrix
                  : Matrix(proj.q.matrix * l.matrix);
        return g;
      },
      spec.time_independent());

  const Eigen::Index n = d * d;
  const Vector v0 = vectorize(init);
  Vector p = proj.p.matrix * v0;
  Vector q0 = proj.q.matrix * v0;
  if (!opt.include_inhomogeneous) q0.setZero();
  Vector mem = Vector::Zero(n);

  const auto inverse = [&](const Matrix& u, std::size_t step) {
    Matrix inv = u.partialPivLu().inverse();
    const double res = (u * inv - Matrix::Identity(n, n)).norm();
    if (!(res <= opt.inverse_limit)) {
      throw NumericalAbort("singular time-ordered propagator (residual " +
                               std::to_string(res) + ")",
                           step);
    }
    return inv;
  };
  // Half-step RK4 for dU/dt = Gen(t) U.
  const auto advance_u = [&](Matrix& u, double t, double h) {
    const Matrix k1 = gens.at(t).u * u;
    const Matrix k2 = gens.at(t + 0.5 * h).u * (u + 0.5 * h * k1);
    const Matrix k3 = gens.at(t + 0.5 * h).u * (u + 0.5 * h * k2);
    const Matrix k4 = gens.at(t + h).u * (u + h * k3);
    u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };

  DeterministicRecord rec;
  rec.engine = "nz";
  rec.representation = Representation::projected;
  rec.dt = grid.dt;
  const auto store = [&](std::size_t k) {
    rec.steps.push_back(k);
    rec.times.push_back(grid.time(k));
    rec.states.push_back(p);
    rec.principal.push_back(partial_trace_aux(devectorize(p, d), spec.n_a));
  };
  store(0);

  Matrix u = Matrix::Identity(n, n);
  Matrix u_inv = u;
  Matrix u_half, u_half_inv, u_next, u_next_inv;
  const double dt = grid.dt;
  for (std::size_t k = 0; k < grid.steps; ++k) {
    const double t = grid.time(k);
    if (opt.quadrature == NzQuadrature::left_rectangle) {
      const Gens& g = gens.at(t);
      const Vector dp = g.pp * p + g.pq * (u * (q0 + mem));
      mem += dt * (u_inv * (g.qp * p));
      p += dt * dp;
      advance_u(u, t, 0.5 * dt);
      advance_u(u, t + 0.5 * dt, 0.5 * dt);
      u_inv = inverse(u, k + 1);
    } else {
      u_half = u;
      advance_u(u_half, t, 0.5 * dt);
      u_half_inv = inverse(u_half, k + 1);
      u_next = u_half;
      advance_u(u_next, t + 0.5 * dt, 0.5 * dt);
      u_next_inv = inverse(u_next, k + 1);

      const auto field = [&](double tt, const Matrix& uu, const Matrix& ui,
                             const Vector& pp, const Vector& mm, Vector& fp,
                             Vector& fm) {
        const Gens& g = gens.at(tt);
        fp = g.pp * pp + g.pq * (uu * (q0 + mm));
        fm = ui * (g.qp * pp);
      };
      Vector p1, m1, p2, m2, p3, m3, p4, m4;
      field(t, u, u_inv, p, mem, p1, m1);
      field(t + 0.5 * dt, u_half, u_half_inv, p + 0.5 * dt * p1,
            mem + 0.5 * dt * m1, p2, m2);
      field(t + 0.5 * dt, u_half, u_half_inv, p + 0.5 * dt * p2,
            mem + 0.5 * dt * m2, p3, m3);
      field(t + dt, u_next, u_next_inv, p + dt * p3, mem + dt * m3, p4, m4);
      p += (dt / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4);
      mem += (dt / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
      u.swap(u_next);
      u_inv.swap(u_next_inv);
    }
    if (!p.allFinite()) throw NumericalAbort("state became non-finite", k + 1);
    if (detail::store_step(k + 1, grid.steps, opt.stride)) store(k + 1);
  }
  return rec;
}

}  // namespace nmq
