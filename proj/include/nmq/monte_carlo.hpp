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
 * @file monte_carlo.hpp
 * @brief Trajectory averages with per-trajectory seeds and a worker pool.
 *
 * Trajectories are grouped in fixed-size chunks. Each chunk is summed in
 * index order and chunks are combined in chunk order, so the result does not
 * depend on how many workers ran or how they were scheduled.
 */
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "nmq/engines.hpp"

namespace nmq {

struct McConfig {
  StochasticEngine engine = StochasticEngine::coupled_blocks;
  std::size_t n_traj = 1;
  std::uint64_t master_seed = 0;
  double dt = 1e-4;
  std::size_t n_steps = 1;
  /// 0 means one worker per hardware thread.
  unsigned workers = 0;
  std::size_t chunk = 32;
  /// Largest tolerated fraction of aborted trajectories.
  double max_abort_fraction = 0.01;
  EngineOptions options;
};

struct McResult {
  std::vector<std::size_t> steps;
  std::vector<double> times;
  /// E[ϱ_s] at each stored step.
  std::vector<Matrix> mean;
  /// Entrywise standard error sqrt((Var Re + Var Im)/n); absent for n < 2.
  std::optional<std::vector<Eigen::MatrixXd>> standard_error;
  std::size_t n_used = 0;
  std::vector<std::uint64_t> aborted_seeds;
};

namespace detail {

struct McChunk {
  // Running mean and Σ|x − mean|² (Welford), merged across chunks in order.
  std::vector<Matrix> mean;
  std::vector<Eigen::MatrixXd> m2;
  std::vector<std::size_t> steps;
  std::vector<double> times;
  std::size_t count = 0;
  std::vector<std::uint64_t> aborted;
  std::optional<std::string> error;
};

}  // namespace detail

/// Mean conditional principal state over `n_traj` trajectories.
inline McResult monte_carlo_mean(const ModelSpec& spec, const Matrix& init,
                                 const McConfig& cfg,
                                 const Projector* proj = nullptr) {
  if (cfg.n_traj == 0) throw ModelError("monte_carlo_mean: n_traj must be >= 1");
  const std::size_t chunk = std::max<std::size_t>(cfg.chunk, 1);
  const std::size_t n_chunks = (cfg.n_traj + chunk - 1) / chunk;
  std::vector<detail::McChunk> chunks(n_chunks);

  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (std::size_t c = next++; c < n_chunks; c = next++) {
      detail::McChunk& out = chunks[c];
      const std::size_t lo = c * chunk;
      const std::size_t hi = std::min(cfg.n_traj, lo + chunk);
      for (std::size_t i = lo; i < hi; ++i) {
        const std::uint64_t seed = derive_seed(cfg.master_seed, i);
        try {
          const NoisePath path = wiener_path(seed, 0.0, cfg.dt, cfg.n_steps);
          const TrajectoryRecord rec =
              run_stochastic(cfg.engine, spec, init, path, cfg.options, proj);
          if (out.mean.empty()) {
            out.steps = rec.steps;
            out.times = rec.times;
            out.mean.assign(rec.size(), Matrix::Zero(spec.n_s, spec.n_s));
            out.m2.assign(rec.size(), Eigen::MatrixXd::Zero(spec.n_s, spec.n_s));
          }
          ++out.count;
          for (std::size_t k = 0; k < rec.size(); ++k) {
            const Matrix delta = rec.principal[k] - out.mean[k];
            out.mean[k] += delta / double(out.count);
            const Matrix delta2 = rec.principal[k] - out.mean[k];
            out.m2[k] += (delta.real().cwiseProduct(delta2.real()) +
                          delta.imag().cwiseProduct(delta2.imag()));
          }
        } catch (const NumericalAbort&) {
          out.aborted.push_back(seed);
        } catch (const std::exception& e) {
          out.error = e.what();
          return;
        }
      }
    }
  };

  unsigned workers = cfg.workers ? cfg.workers : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, unsigned(n_chunks)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  McResult res;
  std::vector<Eigen::MatrixXd> m2;
  for (const auto& c : chunks) {
    if (c.error) throw std::runtime_error("monte_carlo_mean: " + *c.error);
    res.aborted_seeds.insert(res.aborted_seeds.end(), c.aborted.begin(),
                             c.aborted.end());
    if (c.count == 0) continue;
    if (res.mean.empty()) {
      res.steps = c.steps;
      res.times = c.times;
      res.mean = c.mean;
      m2 = c.m2;
    } else {
      const double na = double(res.n_used), nb = double(c.count), nt = na + nb;
      for (std::size_t k = 0; k < res.mean.size(); ++k) {
        const Matrix delta = c.mean[k] - res.mean[k];
        res.mean[k] += delta * (nb / nt);
        m2[k] += c.m2[k] + delta.cwiseAbs2() * (na * nb / nt);
      }
    }
    res.n_used += c.count;
  }
  const double abort_fraction = double(res.aborted_seeds.size()) / double(cfg.n_traj);
  if (abort_fraction > cfg.max_abort_fraction || res.n_used == 0) {
    std::ostringstream msg;
    msg << "monte_carlo_mean: " << res.aborted_seeds.size() << " of "
        << cfg.n_traj << " trajectories aborted; seeds:";
    for (auto s : res.aborted_seeds) msg << ' ' << s;
    throw std::runtime_error(msg.str());
  }

  const double n = double(res.n_used);
  if (res.n_used >= 2) res.standard_error.emplace();
  if (res.standard_error) {
    // Variance of Re plus variance of Im.
    for (const auto& m : m2) {
      res.standard_error->push_back((m.cwiseMax(0.0) / ((n - 1.0) * n)).cwiseSqrt());
    }
  }
  return res;
}

}  // namespace nmq
