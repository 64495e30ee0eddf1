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
 * @file sde.hpp
 * @brief Seeded Wiener paths, Itô Euler–Maruyama stepping and stochastic
 *        exponentials of linear matrix SDEs.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "nmq/core.hpp"

namespace nmq {

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Per-trajectory seed: splitmix64 finalizer over (master, index).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master ^ (0xD1B54A32D192ED03ULL * (index + 1));
  return splitmix64(s);
}

/// xoshiro256** (Blackman & Vigna), seeded through splitmix64. Satisfies
/// UniformRandomBitGenerator; the output sequence is platform independent.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;
  static constexpr const char* kName = "xoshiro256**/splitmix64";

  explicit Xoshiro256(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return double((*this)() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

/// Standard normal deviates by the Box–Muller transform, both outputs used.
/// std::normal_distribution is avoided because its algorithm is
/// implementation-defined.
class NormalSource {
 public:
  static constexpr const char* kName = "box-muller";

  explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - rng_.uniform();  // (0, 1]
    const double u2 = rng_.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  Xoshiro256 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Wiener paths
// ---------------------------------------------------------------------------

/// Wiener increments dI_n ~ N(0, dt) on the uniform grid t_n = t0 + n·dt.
struct NoisePath {
  std::uint64_t seed = 0;
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<double> increments;

  std::size_t steps() const { return increments.size(); }
  double time(std::size_t n) const { return t0 + double(n) * dt; }
  double horizon() const { return time(steps()); }

  /// I_{t_n} − I_{t_0} for n = 0..N.
  std::vector<double> cumulative() const {
    std::vector<double> out(steps() + 1, 0.0);
    for (std::size_t n = 0; n < steps(); ++n) out[n + 1] = out[n] + increments[n];
    return out;
  }

  /// The same Brownian path sampled on a grid `factor` times coarser.
  NoisePath coarsen(std::size_t factor) const {
    if (factor == 0 || steps() % factor != 0) {
      throw ModelError("NoisePath::coarsen: factor must divide the step count");
    }
    NoisePath out{seed, t0, dt * double(factor), {}};
    out.increments.reserve(steps() / factor);
    for (std::size_t n = 0; n < steps(); n += factor) {
      double sum = 0.0;
      for (std::size_t i = 0; i < factor; ++i) sum += increments[n + i];
      out.increments.push_back(sum);
    }
    return out;
  }
};

inline NoisePath wiener_path(std::uint64_t seed, double t0, double dt,
                             std::size_t n_steps) {
  if (!(dt > 0.0)) throw ModelError("wiener_path: dt must be positive");
  if (n_steps == 0) throw ModelError("wiener_path: n_steps must be at least 1");
  NoisePath path{seed, t0, dt, {}};
  path.increments.resize(n_steps);
  NormalSource normal(seed);
  const double scale = std::sqrt(dt);
  for (auto& x : path.increments) x = scale * normal();
  return path;
}

/// All-zero path (deterministic limit of the stochastic engines).
inline NoisePath zero_path(double t0, double dt, std::size_t n_steps) {
  return NoisePath{0, t0, dt, std::vector<double>(n_steps, 0.0)};
}

/// Number of grid steps for a horizon, rejecting non-integral T/dt.
inline std::size_t steps_for(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon > 0.0)) {
    throw ModelError("steps_for: horizon and dt must be positive");
  }
  const double ratio = horizon / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    throw ModelError("horizon is not an integral multiple of dt");
  }
  return std::size_t(rounded);
}

// ---------------------------------------------------------------------------
// Euler–Maruyama
// ---------------------------------------------------------------------------

/// Itô Euler–Maruyama: x + drift·dt + diffusion·dI, coefficients taken at
/// the left endpoint.
inline Vector em_step(const Vector& x, const Vector& drift,
                      const Vector& diffusion, double dI, double dt) {
  if (x.size() != drift.size() || x.size() != diffusion.size()) {
    throw ModelError("em_step: shape mismatch");
  }
  if (!x.allFinite() || !drift.allFinite() || !diffusion.allFinite() ||
      !std::isfinite(dI) || !std::isfinite(dt)) {
    throw ModelError("em_step: non-finite input");
  }
  return x + drift * dt + diffusion * dI;
}

// ---------------------------------------------------------------------------
// Stochastic exponentials
// ---------------------------------------------------------------------------

/// How the inverse propagator is advanced between reinversion checkpoints.
enum class InverseScheme {
  /// Φ⁻¹_{n+1} = Φ⁻¹_n (I + A dt + B dI)⁻¹: exact inverse of the discrete
  /// forward product, one small LU per step.
  exact_step,
  /// Φ⁻¹_{n+1} = Φ⁻¹_n (I + (−A + B²) dt − B dI): EM step of the Itô SDE
  /// satisfied by the inverse.
  ito_recursion,
};

inline std::string to_string(InverseScheme s) {
  return s == InverseScheme::exact_step ? "exact_step" : "ito_recursion";
}

struct PropagatorOptions {
  InverseScheme scheme = InverseScheme::exact_step;
  /// Direct reinversion every M steps (0 disables).
  std::size_t reinversion_period = 100;
  /// ‖Φ Φ⁻¹ − I‖_F above this at a checkpoint aborts the run.
  double residual_limit = 1e-4;
};

/// Running forward solution Φ_n of dΦ = (A dt + B dI) Φ, Φ_0 = I, and its
/// inverse.
class StochasticExponential {
 public:
  StochasticExponential(Eigen::Index dim, PropagatorOptions options = {})
      : options_(options),
        phi_(identity(dim)),
        phi_inv_(identity(dim)),
        id_(identity(dim)),
        step_(dim, dim),
        tmp_(dim, dim) {}

  /// Φ_{n+1} = (I + A dt + B dI) Φ_n.
  void step(const Matrix& a, const Matrix& b, double dI, double dt) {
    step_ = id_ + a * dt + b * dI;
    tmp_.noalias() = step_ * phi_;
    phi_.swap(tmp_);
    if (options_.scheme == InverseScheme::exact_step) {
      tmp_.noalias() = phi_inv_ * step_.partialPivLu().inverse();
    } else {
      Matrix inv_step = id_ + (b * b - a) * dt - b * dI;
      tmp_.noalias() = phi_inv_ * inv_step;
    }
    phi_inv_.swap(tmp_);
    ++count_;
    if (!phi_.allFinite() || !phi_inv_.allFinite()) {
      throw NumericalAbort("stochastic exponential became non-finite", count_);
    }
    if (options_.reinversion_period > 0 &&
        count_ % options_.reinversion_period == 0) {
      last_checkpoint_residual_ = residual();
      if (last_checkpoint_residual_ > options_.residual_limit) {
        throw NumericalAbort("propagator inverse residual " +
                                 std::to_string(last_checkpoint_residual_) +
                                 " exceeds limit",
                             count_);
      }
      phi_inv_ = phi_.partialPivLu().inverse();
    }
  }

  double residual() const { return (phi_ * phi_inv_ - id_).norm(); }

  const Matrix& phi() const { return phi_; }
  const Matrix& phi_inv() const { return phi_inv_; }
  std::size_t steps() const { return count_; }
  double last_checkpoint_residual() const { return last_checkpoint_residual_; }

 private:
  PropagatorOptions options_;
  Matrix phi_;
  Matrix phi_inv_;
  Matrix id_;
  Matrix step_;
  Matrix tmp_;
  std::size_t count_ = 0;
  double last_checkpoint_residual_ = 0.0;
};

/// Φ_n and Φ_n⁻¹ stored on every grid time of one noise path.
struct PropagatorPath {
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t reinversion_period = 0;
  std::vector<Matrix> phi;
  std::vector<Matrix> phi_inv;

  std::size_t size() const { return phi.size(); }
  double time(std::size_t n) const { return t0 + double(n) * dt; }

  double max_residual() const {
    double worst = 0.0;
    for (std::size_t n = 0; n < phi.size(); ++n) {
      worst = std::max(worst,
                       (phi[n] * phi_inv[n] - identity(phi[n].rows())).norm());
    }
    return worst;
  }
};

/// Drift generator A(t_n) of the linear SDE.
using DriftGenerator = std::function<Matrix(double t)>;
/// Diffusion generator B(t_n; s) where s is the trajectory scalar at t_n.
using DiffusionGenerator = std::function<Matrix(double t, double scalar)>;
/// Trajectory-dependent scalar at step n.
using ScalarFeed = std::function<double(std::size_t n, double t)>;

/// Forward recursion Φ_{n+1} = (I + A_n dt + B_n dI_n) Φ_n over the whole
/// path with every Φ_n and Φ_n⁻¹ retained.
inline PropagatorPath propagate_stoch_exp(const DriftGenerator& drift_gen,
                                          const DiffusionGenerator& diff_gen,
                                          const NoisePath& path,
                                          const ScalarFeed& scalar_feed,
                                          PropagatorOptions options = {}) {
  const Matrix a0 = drift_gen(path.t0);
  StochasticExponential se(a0.rows(), options);
  PropagatorPath out;
  out.t0 = path.t0;
  out.dt = path.dt;
  out.reinversion_period = options.reinversion_period;
  out.phi.reserve(path.steps() + 1);
  out.phi_inv.reserve(path.steps() + 1);
  out.phi.push_back(se.phi());
  out.phi_inv.push_back(se.phi_inv());
  for (std::size_t n = 0; n < path.steps(); ++n) {
    const double t = path.time(n);
    const Matrix a = n == 0 ? a0 : drift_gen(t);
    const Matrix b = diff_gen(t, scalar_feed(n, t));
    se.step(a, b, path.increments[n], path.dt);
    out.phi.push_back(se.phi());
    out.phi_inv.push_back(se.phi_inv());
  }
  return out;
}

/// x_n = Φ_n x0 + Φ_n Σ_{m<n} Φ_m⁻¹ source_m dt (left-rectangle memory
/// integral). `source` must hold at least one sample per step.
inline std::vector<Vector> variation_of_constants(
    const PropagatorPath& prop, const std::vector<Vector>& source,
    const Vector& x0) {
  if (prop.size() == 0) throw ModelError("variation_of_constants: empty path");
  const std::size_t n_steps = prop.size() - 1;
  if (source.size() < n_steps) {
    throw ModelError("variation_of_constants: source grid shorter than path");
  }
  std::vector<Vector> out;
  out.reserve(prop.size());
  Vector acc = Vector::Zero(x0.size());
  for (std::size_t n = 0; n <= n_steps; ++n) {
    out.push_back(prop.phi[n] * (x0 + acc));
    if (n < n_steps) acc += (prop.phi_inv[n] * source[n]) * prop.dt;
  }
  return out;
}

/// Σ_{m<n, n−m ≤ W} h_m dt as a running sum; W = 0 keeps the full history.
class HistorySum {
 public:
  HistorySum(Eigen::Index dim, std::size_t window_steps)
      : window_(window_steps), sum_(Vector::Zero(dim)) {}

  /// Appends h_n dt; the oldest term leaves once it falls outside the window.
  void push(const Vector& weighted) {
    sum_ += weighted;
    if (window_ > 0) {
      buffer_.push_back(weighted);
      if (buffer_.size() > window_) {
        sum_ -= buffer_.front();
        buffer_.pop_front();
      }
    }
  }

  const Vector& sum() const { return sum_; }

 private:
  std::size_t window_;
  Vector sum_;
  std::deque<Vector> buffer_;
};

// ---------------------------------------------------------------------------
// Binary propagator cache
// ---------------------------------------------------------------------------
//
// Layout (little-endian):
//   char[8]   "NMQPROP1"
//   uint64    dim            (operand side of each matrix)
//   uint64    count          (number of stored grid times, N+1)
//   float64   dt
//   float64   t0
//   then for n = 0..count−1: Φ_n followed by Φ_n⁻¹, each row-major,
//   each entry complex64 (float32 re, float32 im).

inline void save_propagator_cache(const std::string& file,
                                  const PropagatorPath& path) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw ModelError("cannot open " + file + " for writing");
  const char magic[8] = {'N', 'M', 'Q', 'P', 'R', 'O', 'P', '1'};
  os.write(magic, 8);
  const std::uint64_t dim = path.size() ? std::uint64_t(path.phi[0].rows()) : 0;
  const std::uint64_t count = path.size();
  os.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  os.write(reinterpret_cast<const char*>(&count), sizeof count);
  os.write(reinterpret_cast<const char*>(&path.dt), sizeof path.dt);
  os.write(reinterpret_cast<const char*>(&path.t0), sizeof path.t0);
  const auto write_matrix = [&](const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const float pair[2] = {float(m(r, c).real()), float(m(r, c).imag())};
        os.write(reinterpret_cast<const char*>(pair), sizeof pair);
      }
    }
  };
  for (std::size_t n = 0; n < path.size(); ++n) {
    write_matrix(path.phi[n]);
    write_matrix(path.phi_inv[n]);
  }
}

inline PropagatorPath load_propagator_cache(const std::string& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw ModelError("cannot open " + file);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "NMQPROP1", 8) != 0) {
    throw ModelError(file + ": not a propagator cache");
  }
  std::uint64_t dim = 0, count = 0;
  PropagatorPath out;
  is.read(reinterpret_cast<char*>(&dim), sizeof dim);
  is.read(reinterpret_cast<char*>(&count), sizeof count);
  is.read(reinterpret_cast<char*>(&out.dt), sizeof out.dt);
  is.read(reinterpret_cast<char*>(&out.t0), sizeof out.t0);
  if (!is) throw ModelError(file + ": truncated header");
  const auto read_matrix = [&]() {
    Matrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        float pair[2];
        is.read(reinterpret_cast<char*>(pair), sizeof pair);
        m(r, c) = Complex(pair[0], pair[1]);
      }
    }
    if (!is) throw ModelError(file + ": truncated matrix data");
    return m;
  };
  for (std::uint64_t n = 0; n < count; ++n) {
    out.phi.push_back(read_matrix());
    out.phi_inv.push_back(read_matrix());
  }
  return out;
}

}  // namespace nmq
