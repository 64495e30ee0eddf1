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
 * @file kernel.hpp
 * @brief Two-time memory kernels sampled along one conditional trajectory.
 *
 *   projector form: K(t,t') = L^{pq}(t) Φ_t Φ_{t'}⁻¹ L^{qp}(t')
 *   block form:     K(t,t') = A11(t) Ψ_t Ψ_{t'}⁻¹ A00(t')
 */
#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "nmq/engines.hpp"

namespace nmq {

enum class KernelFormulation { pq_projector, block };

inline std::string to_string(KernelFormulation f) {
  return f == KernelFormulation::block ? "block" : "pq-projector";
}

struct KernelEntry {
  double t = 0.0;
  double t_prime = 0.0;
  std::size_t step = 0;
  std::size_t step_prime = 0;
  Matrix k;
};

struct KernelEvaluation {
  KernelFormulation formulation = KernelFormulation::block;
  std::vector<KernelEntry> entries;

  double sup_norm() const {
    double m = 0.0;
    for (const auto& e : entries) {
      if (e.k.size()) m = std::max(m, e.k.cwiseAbs().maxCoeff());
    }
    return m;
  }
};

/// Grid index of `t`, or ModelError when it is off the grid or the horizon.
inline std::size_t grid_index(const NoisePath& path, double t) {
  const double x = (t - path.t0) / path.dt;
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x)) || r < 0.0 ||
      r > double(path.steps())) {
    throw ModelError("kernel sample time " + std::to_string(t) +
                     " is not on the simulation grid");
  }
  return std::size_t(r);
}

/// Evaluates the kernel at every pair (t, t') with t' ≤ t drawn from the two
/// sample lists. Pairs with t' > t are skipped.
inline KernelEvaluation kernel_dump(const ModelSpec& spec,
                                    KernelFormulation formulation,
                                    const Projector& proj, const Matrix& init,
                                    const NoisePath& path,
                                    const std::vector<double>& t_samples,
                                    const std::vector<double>& t_prime_samples,
                                    EngineOptions opt = {}) {
  std::vector<std::size_t> ts, tps;
  for (double t : t_samples) ts.push_back(grid_index(path, t));
  for (double t : t_prime_samples) tps.push_back(grid_index(path, t));
  std::set<std::size_t> all(ts.begin(), ts.end());
  all.insert(tps.begin(), tps.end());
  opt.propagator_samples.assign(all.begin(), all.end());
  opt.stride = path.steps();

  KernelEvaluation out;
  out.formulation = formulation;
  const auto left = [&](double t) -> Matrix {
    if (formulation == KernelFormulation::block) return block_generators(spec, t).a11;
    return projected_generators(spec, proj, t).pq;
  };
  const auto right = [&](double t) -> Matrix {
    if (formulation == KernelFormulation::block) return block_generators(spec, t).a00;
    return projected_generators(spec, proj, t).qp;
  };

  TrajectoryRecord rec;
  if (formulation == KernelFormulation::block) {
    rec = run_reduced_diag(spec, BlockState::from_composite(init, spec), path, opt);
  } else {
    rec = run_reduced_p(spec, proj, init, path, opt);
  }
  for (std::size_t i : ts) {
    for (std::size_t j : tps) {
      if (j > i) continue;
      KernelEntry e;
      e.step = i;
      e.step_prime = j;
      e.t = path.time(i);
      e.t_prime = path.time(j);
      const auto pi = rec.propagators.find(i);
      const auto pj = rec.propagators.find(j);
      if (pi == rec.propagators.end() || pj == rec.propagators.end()) {
        // No off-diagonal sector (n_a = 1): the kernel acts on an empty space.
        e.k = Matrix::Zero(left(e.t).rows(), right(e.t_prime).cols());
      } else {
        e.k = left(e.t) * pi->second.first * pj->second.second * right(e.t_prime);
      }
      out.entries.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace nmq
