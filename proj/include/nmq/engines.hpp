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
 * @file engines.hpp
 * @brief Conditional (homodyne-monitored) trajectory engines.
 *
 * Four encodings of the same conditional dynamics, all Itô Euler–Maruyama on
 * a shared NoisePath:
 *
 *  - run_full_sme:       the composite stochastic master equation;
 *  - run_coupled_blocks: every principal-space block ϱ^{jk};
 *  - run_reduced_diag:   the diagonal blocks only, with the off-diagonal
 *                        blocks eliminated into a memory kernel;
 *  - run_reduced_p:      the projected state Pϱ with Qϱ eliminated the same
 *                        way, for any admissible projector P.
 *
 * Renormalization is off by default so the encodings stay algebraically
 * comparable step by step.
 */
#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nmq/block_generators.hpp"
#include "nmq/core.hpp"
#include "nmq/model.hpp"
#include "nmq/sde.hpp"
#include "nmq/superop.hpp"

namespace nmq {

/// Rebuilds a time-dependent value only when the model is not constant.
template <class T>
class TimeCache {
 public:
  TimeCache(std::function<T(double)> build, bool constant)
      : build_(std::move(build)), constant_(constant) {}

  const T& at(double t) {
    if (!constant_ || !value_) value_ = build_(t);
    return *value_;
  }

 private:
  std::function<T(double)> build_;
  bool constant_;
  std::optional<T> value_;
};

enum class Representation { composite, block_stack, diag_stack, projected };

/// One stored trajectory.
struct TrajectoryRecord {
  std::string engine;
  Representation representation = Representation::composite;
  int n_s = 0;
  int n_a = 0;
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<std::size_t> steps;
  std::vector<double> times;
  /// Native state vector: vec ϱ, [diag; offdiag], diag stack or vec Pϱ.
  std::vector<Vector> states;
  /// Conditional principal state ϱ_s at each stored step.
  std::vector<Matrix> principal;
  /// Measurement record Y^Q at each stored step (Y^Q_0 = 0).
  std::vector<double> measurement;
  /// Σ_k Tr ϱ^{kk} at each stored step.
  std::vector<double> trace;
  /// (Φ_n, Φ_n⁻¹) or (Ψ_n, Ψ_n⁻¹) at requested steps.
  std::map<std::size_t, std::pair<Matrix, Matrix>> propagators;

  std::size_t size() const { return states.size(); }
};

struct EngineOptions {
  /// Store every `stride`-th step (the final step is always stored).
  std::size_t stride = 1;
  bool renormalize = false;
  /// Abort when |Tr − 1| exceeds this without renormalization.
  double trace_abort = 0.1;
  /// Truncated memory (reduced engines only). Drops the initial-condition
  /// term and keeps only history within the window.
  std::optional<double> memory_window;
  /// Drop the Ψϱ̃_sc(0) / Φϱ^q(0) term (ablation studies).
  bool ablate_initial_term = false;
  /// Fault injection: flip the sign of A00 (or L^{qp} for run_reduced_p).
  bool flip_a00_sign = false;
  PropagatorOptions propagator;
  /// Grid steps at which to keep the propagator and its inverse.
  std::vector<std::size_t> propagator_samples;
};

namespace detail {

inline double vec_trace(const Vector& v, Eigen::Index d) {
  double t = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) t += v(i * (d + 1)).real();
  return t;
}

inline double stack_trace(const Vector& diag_stack, int n_s) {
  double t = 0.0;
  const Eigen::Index bs = Eigen::Index(n_s) * n_s;
  for (Eigen::Index off = 0; off < diag_stack.size(); off += bs) {
    t += vec_trace(diag_stack.segment(off, bs), n_s);
  }
  return t;
}

inline Matrix stack_principal(const Vector& diag_stack, int n_s) {
  Matrix out = Matrix::Zero(n_s, n_s);
  const Eigen::Index bs = Eigen::Index(n_s) * n_s;
  for (Eigen::Index off = 0; off < diag_stack.size(); off += bs) {
    out += devectorize(diag_stack.segment(off, bs), n_s);
  }
  return out;
}

inline void check_step(const Vector& v, double trace, const EngineOptions& opt,
                       std::size_t step) {
  if (!v.allFinite()) throw NumericalAbort("state became non-finite", step);
  if (!opt.renormalize && std::abs(trace - 1.0) > opt.trace_abort) {
    throw NumericalAbort("trace drifted to " + std::to_string(trace), step);
  }
}

inline bool store_step(std::size_t n, std::size_t n_steps, std::size_t stride) {
  return n % std::max<std::size_t>(stride, 1) == 0 || n == n_steps;
}

inline std::size_t window_steps(const EngineOptions& opt, const NoisePath& path) {
  if (!opt.memory_window) return 0;
  const double w = *opt.memory_window;
  if (!(w > 0.0)) throw ModelError("memory window must be positive");
  if (w > path.horizon() - path.t0 + 1e-12) {
    throw ModelError("memory window exceeds the simulated horizon");
  }
  return std::max<std::size_t>(1, std::size_t(std::floor(w / path.dt + 1e-9)));
}

inline void record_sample(TrajectoryRecord& rec, std::size_t n, double t,
                          const Vector& state, Matrix principal, double y,
                          double trace) {
  rec.steps.push_back(n);
  rec.times.push_back(t);
  rec.states.push_back(state);
  rec.principal.push_back(std::move(principal));
  rec.measurement.push_back(y);
  rec.trace.push_back(trace);
}

}  // namespace detail

/// Composite stochastic master equation
///   dϱ = L(t)ϱ dt + (G(t)ϱ − ϱ Tr((L₀+L₀†)ϱ)) dI.
inline TrajectoryRecord run_full_sme(const ModelSpec& spec, const Matrix& init,
                                     const NoisePath& path,
                                     const EngineOptions& opt = {}) {
  const Eigen::Index d = spec.dim();
  if (init.rows() != d || init.cols() != d) {
    throw ModelError("run_full_sme: initial state has wrong dimension");
  }
  struct Gens {
    Matrix lind;
    Matrix g;
    Vector probe;
  };
  TimeCache<Gens> gens(
      [&](double t) {
        return Gens{lindbladian(spec, t).matrix, g_superop(spec, t).matrix,
                    probe_functional(spec, t)};
      },
      spec.time_independent());

  TrajectoryRecord rec;
  rec.engine = "full_sme";
  rec.representation = Representation::composite;
  rec.n_s = spec.n_s;
  rec.n_a = spec.n_a;
  rec.seed = path.seed;
  rec.dt = path.dt;

  Vector v = vectorize(init);
  Vector drift(v.size()), diff(v.size());
  double y = 0.0;
  const auto principal = [&](const Vector& x) {
    return partial_trace_aux(devectorize(x, d), spec.n_a);
  };
  detail::record_sample(rec, 0, path.t0, v, principal(v), y,
                        detail::vec_trace(v, d));
  const std::size_t n_steps = path.steps();
  for (std::size_t n = 0; n < n_steps; ++n) {
    const double t = path.time(n);
    const double dI = path.increments[n];
    const Gens& g = gens.at(t);
    const double c = apply_functional(g.probe, v).real();
    drift.noalias() = g.lind * v;
    diff.noalias() = g.g * v;
    diff -= c * v;
    v += drift * path.dt + diff * dI;
    y += c * path.dt + dI;
    double tr = detail::vec_trace(v, d);
    if (opt.renormalize) {
      v /= tr;
      tr = 1.0;
    }
    detail::check_step(v, tr, opt, n + 1);
    if (detail::store_step(n + 1, n_steps, opt.stride)) {
      detail::record_sample(rec, n + 1, path.time(n + 1), v, principal(v), y, tr);
    }
  }
  return rec;
}

/// Every block ϱ^{jk}:
///   dϱ^{jk} = [coupled block drift]^{jk} dt
///             + (L₀ϱ^{jk} + ϱ^{jk}L₀† − ϱ^{jk} Σ_l Tr((L₀+L₀†)ϱ^{ll})) dI.
inline TrajectoryRecord run_coupled_blocks(const ModelSpec& spec,
                                           const BlockState& init,
                                           const NoisePath& path,
                                           const EngineOptions& opt = {}) {
  if (init.n_s != spec.n_s || init.n_a != spec.n_a) {
    throw ModelError("run_coupled_blocks: block state does not match model");
  }
  struct Gens {
    Matrix drift;
    Matrix g;
    Vector probe;
  };
  TimeCache<Gens> gens(
      [&](double t) {
        const BlockOperators ops = BlockOperators::build(spec, t);
        return Gens{coupled_drift_matrix(ops),
                    stacked_g_matrix(ops.l0, spec.n_a * spec.n_a),
                    stacked_probe_functional(ops.l0, spec.n_a)};
      },
      spec.time_independent());

  TrajectoryRecord rec;
  rec.engine = "coupled_blocks";
  rec.representation = Representation::block_stack;
  rec.n_s = spec.n_s;
  rec.n_a = spec.n_a;
  rec.seed = path.seed;
  rec.dt = path.dt;

  const Eigen::Index nd = init.diag_dim();
  Vector x = init.full_vector();
  Vector drift(x.size()), diff(x.size());
  double y = 0.0;
  detail::record_sample(rec, 0, path.t0, x,
                        detail::stack_principal(x.head(nd), spec.n_s), y,
                        detail::stack_trace(x.head(nd), spec.n_s));
  const std::size_t n_steps = path.steps();
  for (std::size_t n = 0; n < n_steps; ++n) {
    const double t = path.time(n);
    const double dI = path.increments[n];
    const Gens& g = gens.at(t);
    // Σ_l Tr((L₀+L₀†)ϱ^{ll}): diagonal blocks only.
    const double c = apply_functional(g.probe, x.head(nd)).real();
    drift.noalias() = g.drift * x;
    diff.noalias() = g.g * x;
    diff -= c * x;
    x += drift * path.dt + diff * dI;
    y += c * path.dt + dI;
    double tr = detail::stack_trace(x.head(nd), spec.n_s);
    if (opt.renormalize) {
      x /= tr;
      tr = 1.0;
    }
    detail::check_step(x, tr, opt, n + 1);
    if (detail::store_step(n + 1, n_steps, opt.stride)) {
      detail::record_sample(rec, n + 1, path.time(n + 1), x,
                            detail::stack_principal(x.head(nd), spec.n_s), y, tr);
    }
  }
  return rec;
}

/// Reduced diagonal-block SDE with the off-diagonal stack eliminated:
///   dϱ̃_s = (A11 Ψ_t ϱ̃_sc(0) + ∫₀ᵗ A11 Ψ_t Ψ_{t'}⁻¹ A00 ϱ̃_s(t') dt'
///           + A10 ϱ̃_s) dt + B10(ϱ̃_s) ϱ̃_s dI,
///   dΨ = (A01 dt + B01(ϱ̃_s) dI) Ψ,  Ψ_0 = I.
///
/// Per step: h_n = Ψ_n⁻¹ A00 ϱ̃_{s,n}; the memory term uses the left
/// rectangle sum Σ_{m<n} h_m dt (within the window, if any).
inline TrajectoryRecord run_reduced_diag(const ModelSpec& spec,
                                         const BlockState& init,
                                         const NoisePath& path,
                                         const EngineOptions& opt = {}) {
  if (init.n_s != spec.n_s || init.n_a != spec.n_a) {
    throw ModelError("run_reduced_diag: block state does not match model");
  }
  const std::size_t window = detail::window_steps(opt, path);
  TimeCache<BlockGenerators> gens(
      [&](double t) {
        BlockGenerators g = block_generators(spec, t);
        if (opt.flip_a00_sign) g.a00 = -g.a00;
        return g;
      },
      spec.time_independent());

  TrajectoryRecord rec;
  rec.engine = "reduced_diag";
  rec.representation = Representation::diag_stack;
  rec.n_s = spec.n_s;
  rec.n_a = spec.n_a;
  rec.seed = path.seed;
  rec.dt = path.dt;

  const Eigen::Index no = init.offdiag_dim();
  const bool has_memory = no > 0;
  const std::set<std::size_t> samples(opt.propagator_samples.begin(),
                                      opt.propagator_samples.end());

  Vector s = init.diag_vector();
  Vector sc0 = init.offdiag_vector();
  if (opt.ablate_initial_term || opt.memory_window) sc0.setZero();
  std::optional<StochasticExponential> psi;
  if (has_memory) psi.emplace(no, opt.propagator);
  HistorySum history(no, window);

  Vector drift(s.size()), diff(s.size()), h(no), carried(no);
  Matrix b01;
  double y = 0.0;
  detail::record_sample(rec, 0, path.t0, s, detail::stack_principal(s, spec.n_s),
                        y, detail::stack_trace(s, spec.n_s));
  const std::size_t n_steps = path.steps();
  for (std::size_t n = 0; n < n_steps; ++n) {
    const double t = path.time(n);
    const double dI = path.increments[n];
    const BlockGenerators& g = gens.at(t);
    const double c = g.scalar(s).real();

    drift.noalias() = g.a10 * s;
    if (has_memory) {
      if (samples.count(n)) rec.propagators[n] = {psi->phi(), psi->phi_inv()};
      carried.noalias() = psi->phi() * (sc0 + history.sum());
      drift.noalias() += g.a11 * carried;
      h.noalias() = psi->phi_inv() * (g.a00 * s);
    }
    diff.noalias() = g.b10 * s;
    diff -= c * s;

    if (has_memory) {
      history.push(h * path.dt);
      b01 = g.b01;
      b01.diagonal().array() -= c;
      psi->step(g.a01, b01, dI, path.dt);
    }
    s += drift * path.dt + diff * dI;
    y += c * path.dt + dI;
    double tr = detail::stack_trace(s, spec.n_s);
    if (opt.renormalize) {
      s /= tr;
      tr = 1.0;
    }
    detail::check_step(s, tr, opt, n + 1);
    if (detail::store_step(n + 1, n_steps, opt.stride)) {
      detail::record_sample(rec, n + 1, path.time(n + 1), s,
                            detail::stack_principal(s, spec.n_s), y, tr);
    }
  }
  if (has_memory && samples.count(n_steps)) {
    rec.propagators[n_steps] = {psi->phi(), psi->phi_inv()};
  }
  return rec;
}

/// Restrictions of L(t) and the noise generators for one projector.
struct ProjectedGenerators {
  Matrix pp, pq, qp, qq;
  Matrix g;
  Vector probe;
};

inline ProjectedGenerators projected_generators(const ModelSpec& spec,
                                                const Projector& proj, double t) {
  const SuperOp l = lindbladian(spec, t);
  return {restrict(l, proj.p, proj.q, Restriction::pp).matrix,
          restrict(l, proj.p, proj.q, Restriction::pq).matrix,
          restrict(l, proj.p, proj.q, Restriction::qp).matrix,
          restrict(l, proj.p, proj.q, Restriction::qq).matrix,
          g_superop(spec, t).matrix, probe_functional(spec, t)};
}

/// Reduced SDE for ϱ^p = Pϱ with ϱ^q eliminated:
///   dϱ^p = (L^{pp}ϱ^p + L^{pq}Φ_t ϱ^q(0) + ∫₀ᵗ L^{pq}Φ_tΦ_{t'}⁻¹L^{qp}ϱ^p dt') dt
///          + (Gϱ^p − ϱ^p Tr((L₀+L₀†)ϱ^p)) dI,
///   dΦ = (L^{qq} dt + (G − Tr((L₀+L₀†)ϱ^p) I) dI) Φ,  Φ_0 = I.
inline TrajectoryRecord run_reduced_p(const ModelSpec& spec,
                                      const Projector& proj, const Matrix& init,
                                      const NoisePath& path,
                                      const EngineOptions& opt = {}) {
  const Eigen::Index d = spec.dim();
  if (init.rows() != d || init.cols() != d) {
    throw ModelError("run_reduced_p: initial state has wrong dimension");
  }
  const std::size_t window = detail::window_steps(opt, path);
  TimeCache<ProjectedGenerators> gens(
      [&](double t) {
        ProjectedGenerators g = projected_generators(spec, proj, t);
        if (opt.flip_a00_sign) g.qp = -g.qp;
        return g;
      },
      spec.time_independent());

  TrajectoryRecord rec;
  rec.engine = "reduced_p";
  rec.representation = Representation::projected;
  rec.n_s = spec.n_s;
  rec.n_a = spec.n_a;
  rec.seed = path.seed;
  rec.dt = path.dt;

  const std::set<std::size_t> samples(opt.propagator_samples.begin(),
                                      opt.propagator_samples.end());
  const Vector v0 = vectorize(init);
  Vector p = proj.p.matrix * v0;
  Vector q0 = proj.q.matrix * v0;
  if (opt.ablate_initial_term || opt.memory_window) q0.setZero();
  const Eigen::Index n = p.size();
  StochasticExponential phi(n, opt.propagator);
  HistorySum history(n, window);

  Vector drift(n), diff(n), h(n), carried(n);
  Matrix b;
  double y = 0.0;
  const auto principal = [&](const Vector& x) {
    return partial_trace_aux(devectorize(x, d), spec.n_a);
  };
  detail::record_sample(rec, 0, path.t0, p, principal(p), y,
                        detail::vec_trace(p, d));
  const std::size_t n_steps = path.steps();
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = path.time(k);
    const double dI = path.increments[k];
    const ProjectedGenerators& g = gens.at(t);
    const double c = apply_functional(g.probe, p).real();
    if (samples.count(k)) rec.propagators[k] = {phi.phi(), phi.phi_inv()};

    carried.noalias() = phi.phi() * (q0 + history.sum());
    drift.noalias() = g.pp * p;
    drift.noalias() += g.pq * carried;
    h.noalias() = phi.phi_inv() * (g.qp * p);
    diff.noalias() = g.g * p;
    diff -= c * p;

    history.push(h * path.dt);
    b = g.g;
    b.diagonal().array() -= c;
    phi.step(g.qq, b, dI, path.dt);

    p += drift * path.dt + diff * dI;
    y += c * path.dt + dI;
    double tr = detail::vec_trace(p, d);
    if (opt.renormalize) {
      p /= tr;
      tr = 1.0;
    }
    detail::check_step(p, tr, opt, k + 1);
    if (detail::store_step(k + 1, n_steps, opt.stride)) {
      detail::record_sample(rec, k + 1, path.time(k + 1), p, principal(p), y, tr);
    }
  }
  if (samples.count(n_steps)) {
    rec.propagators[n_steps] = {phi.phi(), phi.phi_inv()};
  }
  return rec;
}

/// Y^Q_{n+1} = Y^Q_n + Tr((L₀+L₀†)(t_n) ϱ_{s,n}) dt + dI_n,  Y^Q_0 = 0, from
/// principal states sampled on every grid point of `path`.
inline std::vector<double> measurement_record(const ModelSpec& spec,
                                              const std::vector<Matrix>& states,
                                              const NoisePath& path) {
  if (states.size() != path.steps() + 1) {
    throw ModelError("measurement_record: states and path grids differ");
  }
  std::vector<double> y(states.size(), 0.0);
  for (std::size_t n = 0; n < path.steps(); ++n) {
    const Matrix l0 = spec.l0.at(path.time(n));
    const double c = ((l0 + l0.adjoint()) * states[n]).trace().real();
    y[n + 1] = y[n] + c * path.dt + path.increments[n];
  }
  return y;
}

/// Diagonal block stack of stored sample i, whatever the representation.
inline Vector diag_stack(const TrajectoryRecord& rec, std::size_t i,
                         const ModelSpec& spec) {
  switch (rec.representation) {
    case Representation::composite:
    case Representation::projected:
      return BlockState::from_composite(devectorize(rec.states[i], spec.dim()),
                                        spec)
          .diag_vector();
    case Representation::block_stack: {
      BlockState shape;
      shape.n_s = spec.n_s;
      shape.n_a = spec.n_a;
      return rec.states[i].head(shape.diag_dim());
    }
    case Representation::diag_stack:
      return rec.states[i];
  }
  throw ModelError("diag_stack: unknown representation");
}

enum class StochasticEngine { full_sme, coupled_blocks, reduced_diag, reduced_p };

inline std::string to_string(StochasticEngine e) {
  switch (e) {
    case StochasticEngine::full_sme: return "full_sme";
    case StochasticEngine::coupled_blocks: return "coupled_blocks";
    case StochasticEngine::reduced_diag: return "reduced_diag";
    case StochasticEngine::reduced_p: return "reduced_p";
  }
  return "unknown";
}

/// Runs any stochastic engine from a composite initial state.
inline TrajectoryRecord run_stochastic(StochasticEngine engine,
                                       const ModelSpec& spec, const Matrix& init,
                                       const NoisePath& path,
                                       const EngineOptions& opt,
                                       const Projector* proj = nullptr) {
  switch (engine) {
    case StochasticEngine::full_sme:
      return run_full_sme(spec, init, path, opt);
    case StochasticEngine::coupled_blocks:
      return run_coupled_blocks(spec, BlockState::from_composite(init, spec),
                                path, opt);
    case StochasticEngine::reduced_diag:
      return run_reduced_diag(spec, BlockState::from_composite(init, spec), path,
                              opt);
    case StochasticEngine::reduced_p: {
      if (proj) return run_reduced_p(spec, *proj, init, path, opt);
      return run_reduced_p(spec, projector_p(spec, ProjectorKind::block_diagonal),
                           init, path, opt);
    }
  }
  throw ModelError("run_stochastic: unknown engine");
}

}  // namespace nmq
