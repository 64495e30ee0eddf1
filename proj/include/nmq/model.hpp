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
 * @file model.hpp
 * @brief Principal/auxiliary model description and the composite-space
 *        operator algebra built on it.
 *
 * Composite operators act on h_s ⊗ h_a with the principal factor first, so
 * the composite index of |a⟩⊗|p⟩ is a·n_a + p. Auxiliary block indices are
 * zero-based throughout (block j = 0 is the first auxiliary basis vector).
 */
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "nmq/core.hpp"

namespace nmq {

/// Scalar time modulation applied to one operator part.
struct Schedule {
  enum class Kind { constant, sinusoidal };

  Kind kind = Kind::constant;
  double amplitude = 1.0;
  double frequency = 0.0;
  double phase = 0.0;

  static Schedule constant() { return {}; }
  static Schedule sinusoidal(double amplitude, double frequency, double phase) {
    return {Kind::sinusoidal, amplitude, frequency, phase};
  }

  double factor(double t) const {
    if (kind == Kind::constant) return 1.0;
    return amplitude * std::sin(frequency * t + phase);
  }

  bool is_constant() const { return kind == Kind::constant; }
};

/// An operator part with its schedule: part(t) = factor(t) · matrix.
struct TimedOperator {
  Matrix matrix;
  Schedule schedule;

  Matrix at(double t) const { return schedule.factor(t) * matrix; }
  bool is_zero() const { return matrix.size() == 0 || matrix.isZero(0.0); }
};

/// Coupling of the principal+auxiliary to one bath channel k ≥ 1:
/// L_k(t) = L_{k,s}(t)⊗I + L_{k,sa}(t) + I⊗L_{k,a}(t).
struct Coupling {
  TimedOperator s;   // n_s × n_s
  TimedOperator sa;  // n_s·n_a × n_s·n_a
  TimedOperator a;   // n_a × n_a
};

struct ModelSpec {
  int n_s = 2;
  int n_a = 1;
  /// Columns are the auxiliary basis vectors |φ_j⟩.
  Matrix aux_basis;
  TimedOperator h_s;
  TimedOperator h_sa;
  TimedOperator h_a;
  std::vector<Coupling> couplings;
  /// Probe coupling, a principal-only operator.
  TimedOperator l0;

  Eigen::Index dim() const { return Eigen::Index(n_s) * n_a; }

  /// Zero model with computational auxiliary basis and `n_channels` bath
  /// couplings, all parts sized correctly.
  static ModelSpec zeros(int n_s, int n_a, int n_channels = 0) {
    ModelSpec m;
    m.n_s = n_s;
    m.n_a = n_a;
    const Eigen::Index n = Eigen::Index(n_s) * n_a;
    m.aux_basis = identity(n_a);
    m.h_s.matrix = Matrix::Zero(n_s, n_s);
    m.h_sa.matrix = Matrix::Zero(n, n);
    m.h_a.matrix = Matrix::Zero(n_a, n_a);
    m.l0.matrix = Matrix::Zero(n_s, n_s);
    for (int k = 0; k < n_channels; ++k) {
      m.couplings.push_back({{Matrix::Zero(n_s, n_s), {}},
                             {Matrix::Zero(n, n), {}},
                             {Matrix::Zero(n_a, n_a), {}}});
    }
    return m;
  }

  bool time_independent() const {
    bool constant = h_s.schedule.is_constant() && h_sa.schedule.is_constant() &&
                    h_a.schedule.is_constant() && l0.schedule.is_constant();
    for (const auto& c : couplings) {
      constant = constant && c.s.schedule.is_constant() &&
                 c.sa.schedule.is_constant() && c.a.schedule.is_constant();
    }
    return constant;
  }

  bool computational_aux_basis() const {
    return aux_basis.rows() == n_a && aux_basis.cols() == n_a &&
           aux_basis.isIdentity(0.0);
  }
};

/// Which composite operator to assemble. `channel` selects L_k (k ≥ 1).
struct OperatorTag {
  enum class Kind { hamiltonian, coupling, probe };
  Kind kind = Kind::hamiltonian;
  int channel = 0;

  static OperatorTag hamiltonian() { return {Kind::hamiltonian, 0}; }
  static OperatorTag coupling(int k) { return {Kind::coupling, k}; }
  static OperatorTag probe() { return {Kind::probe, 0}; }
};

inline Matrix ampliate_principal(const Matrix& x, int n_a) {
  return kron(x, identity(n_a));
}

inline Matrix ampliate_aux(const Matrix& x, int n_s) {
  return kron(identity(n_s), x);
}

/// H(t), L_k(t) or L_0(t) ampliated to the composite space.
inline Matrix assemble_operator(const ModelSpec& spec, OperatorTag which,
                                double t) {
  if (t < 0.0) throw ModelError("assemble_operator: negative time");
  switch (which.kind) {
    case OperatorTag::Kind::hamiltonian:
      return ampliate_principal(spec.h_s.at(t), spec.n_a) + spec.h_sa.at(t) +
             ampliate_aux(spec.h_a.at(t), spec.n_s);
    case OperatorTag::Kind::coupling: {
      if (which.channel < 1 ||
          which.channel > static_cast<int>(spec.couplings.size())) {
        throw ModelError("assemble_operator: unknown coupling channel " +
                         std::to_string(which.channel));
      }
      const Coupling& c = spec.couplings[std::size_t(which.channel - 1)];
      return ampliate_principal(c.s.at(t), spec.n_a) + c.sa.at(t) +
             ampliate_aux(c.a.at(t), spec.n_s);
    }
    case OperatorTag::Kind::probe:
      return ampliate_principal(spec.l0.at(t), spec.n_a);
  }
  throw ModelError("assemble_operator: unknown operator tag");
}

/// Every Lindblad channel of the composite model including the probe as
/// entry 0: {L_0⊗I, L_1, …, L_K}.
inline std::vector<Matrix> all_channels(const ModelSpec& spec, double t) {
  std::vector<Matrix> out;
  out.reserve(spec.couplings.size() + 1);
  out.push_back(assemble_operator(spec, OperatorTag::probe(), t));
  for (std::size_t k = 0; k < spec.couplings.size(); ++k) {
    out.push_back(
        assemble_operator(spec, OperatorTag::coupling(int(k) + 1), t));
  }
  return out;
}

/// X^{jk} = (I ⊗ ⟨φ_j|) X (I ⊗ |φ_k⟩) for a composite matrix X.
inline Matrix block(const Matrix& x, const Matrix& aux_basis, int j, int k) {
  const Eigen::Index n_a = aux_basis.rows();
  if (n_a == 0 || x.rows() != x.cols() || x.rows() % n_a != 0) {
    throw ModelError("block: composite dimension mismatch");
  }
  if (j < 0 || k < 0 || j >= n_a || k >= n_a) {
    throw ModelError("block: auxiliary index out of range");
  }
  const Eigen::Index n_s = x.rows() / n_a;
  Matrix out(n_s, n_s);
  if (aux_basis.isIdentity(0.0)) {
    for (Eigen::Index b = 0; b < n_s; ++b) {
      for (Eigen::Index a = 0; a < n_s; ++a) {
        out(a, b) = x(a * n_a + j, b * n_a + k);
      }
    }
    return out;
  }
  const auto phi_j = aux_basis.col(j);
  const auto phi_k = aux_basis.col(k);
  for (Eigen::Index b = 0; b < n_s; ++b) {
    for (Eigen::Index a = 0; a < n_s; ++a) {
      Complex acc = 0.0;
      for (Eigen::Index p = 0; p < n_a; ++p) {
        for (Eigen::Index q = 0; q < n_a; ++q) {
          acc += std::conj(phi_j(p)) * x(a * n_a + p, b * n_a + q) * phi_k(q);
        }
      }
      out(a, b) = acc;
    }
  }
  return out;
}

inline Matrix block(const Matrix& x, const ModelSpec& spec, int j, int k) {
  return block(x, spec.aux_basis, j, k);
}

/// Tr_{h_a}(X) by direct index summation, auxiliary index p ascending.
inline Matrix partial_trace_aux(const Matrix& x, int n_a) {
  if (n_a <= 0 || x.rows() != x.cols() || x.rows() % n_a != 0) {
    throw ModelError("partial_trace_aux: dimension mismatch");
  }
  const Eigen::Index n_s = x.rows() / n_a;
  Matrix out = Matrix::Zero(n_s, n_s);
  for (Eigen::Index p = 0; p < n_a; ++p) {
    for (Eigen::Index b = 0; b < n_s; ++b) {
      for (Eigen::Index a = 0; a < n_s; ++a) {
        out(a, b) += x(a * n_a + p, b * n_a + p);
      }
    }
  }
  return out;
}

/// Tr_{h_s}(X), used to read off the auxiliary marginal of a composite state.
inline Matrix partial_trace_principal(const Matrix& x, int n_a) {
  if (n_a <= 0 || x.rows() != x.cols() || x.rows() % n_a != 0) {
    throw ModelError("partial_trace_principal: dimension mismatch");
  }
  const Eigen::Index n_s = x.rows() / n_a;
  Matrix out = Matrix::Zero(n_a, n_a);
  for (Eigen::Index a = 0; a < n_s; ++a) {
    out += x.block(a * n_a, a * n_a, n_a, n_a);
  }
  return out;
}

/// Lists every violated model invariant; an empty result means valid.
inline std::vector<std::string> validate_model(const ModelSpec& spec) {
  std::vector<std::string> report;
  constexpr double kHermTol = 1e-12;
  constexpr double kOrthoTol = 1e-12;
  const Eigen::Index n = Eigen::Index(spec.n_s) * spec.n_a;

  if (spec.n_s < 2) report.push_back("n_s must be at least 2");
  if (spec.n_a < 1) report.push_back("n_a must be at least 1");
  if (!report.empty()) return report;

  auto check_shape = [&](const Matrix& m, Eigen::Index size,
                         const std::string& name) {
    if (m.rows() != size || m.cols() != size) {
      report.push_back(name + " has shape " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", expected " +
                       std::to_string(size) + "x" + std::to_string(size));
      return false;
    }
    if (!m.allFinite()) {
      report.push_back(name + " has non-finite entries");
      return false;
    }
    return true;
  };
  auto check_hermitian = [&](const Matrix& m, Eigen::Index size,
                             const std::string& name) {
    if (check_shape(m, size, name) && hermiticity_defect(m) > kHermTol) {
      report.push_back(name + " not Hermitian");
    }
  };

  check_hermitian(spec.h_s.matrix, spec.n_s, "H_s");
  check_hermitian(spec.h_sa.matrix, n, "H_sa");
  check_hermitian(spec.h_a.matrix, spec.n_a, "H_a");
  check_shape(spec.l0.matrix, spec.n_s, "L_0");
  for (std::size_t k = 0; k < spec.couplings.size(); ++k) {
    const std::string tag = "L_" + std::to_string(k + 1);
    check_shape(spec.couplings[k].s.matrix, spec.n_s, tag + ",s");
    check_shape(spec.couplings[k].sa.matrix, n, tag + ",sa");
    check_shape(spec.couplings[k].a.matrix, spec.n_a, tag + ",a");
  }
  if (check_shape(spec.aux_basis, spec.n_a, "aux_basis")) {
    const Matrix gram = spec.aux_basis.adjoint() * spec.aux_basis;
    const double defect = (gram - identity(spec.n_a)).norm();
    if (defect > kOrthoTol) {
      report.push_back("aux_basis not orthonormal (Gram defect " +
                       std::to_string(defect) + ")");
    }
  }
  return report;
}

/// The model with every auxiliary and interaction part discarded: n_a = 1,
/// H_s, L_{k,s} and L_0 only, schedules kept.
inline ModelSpec principal_only(const ModelSpec& spec) {
  ModelSpec out = ModelSpec::zeros(spec.n_s, 1, int(spec.couplings.size()));
  out.h_s = spec.h_s;
  out.l0 = spec.l0;
  for (std::size_t k = 0; k < spec.couplings.size(); ++k) {
    out.couplings[k].s = spec.couplings[k].s;
  }
  return out;
}

/// The model with its principal–auxiliary interaction (H_sa, L_{k,sa}) removed.
inline ModelSpec decoupled_variant(const ModelSpec& spec) {
  ModelSpec out = spec;
  out.h_sa.matrix.setZero();
  out.h_sa.schedule = Schedule::constant();
  for (auto& c : out.couplings) {
    c.sa.matrix.setZero();
    c.sa.schedule = Schedule::constant();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

enum class Space { principal, auxiliary, composite };

struct DensityMatrix {
  Space space = Space::composite;
  Matrix rho;

  double trace() const { return rho.trace().real(); }
};

inline double min_eigenvalue(const Matrix& rho) {
  const Matrix herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Density-matrix invariant violations (Hermiticity, trace, positivity).
inline std::vector<std::string> check_density(const Matrix& rho,
                                              double trace_tol = 1e-8) {
  std::vector<std::string> report;
  if (rho.rows() != rho.cols() || rho.size() == 0) {
    report.push_back("density matrix not square");
    return report;
  }
  if (!rho.allFinite()) {
    report.push_back("density matrix has non-finite entries");
    return report;
  }
  if (hermiticity_defect(rho) > 1e-10) report.push_back("not Hermitian");
  if (std::abs(rho.trace().real() - 1.0) > trace_tol ||
      std::abs(rho.trace().imag()) > trace_tol) {
    report.push_back("trace differs from 1");
  }
  if (min_eigenvalue(rho) < -1e-8) report.push_back("negative eigenvalue");
  return report;
}

inline Matrix pure_state(const Vector& psi) {
  const Vector n = psi / psi.norm();
  return n * n.adjoint();
}

// ---------------------------------------------------------------------------
// Block decomposition of composite operators
// ---------------------------------------------------------------------------

/// Ordered off-diagonal block index pairs: (0,1), (0,2), …, (0,n_a−1), (1,2),
/// …, (n_a−2, n_a−1), followed by the same list transposed.
inline std::vector<std::pair<int, int>> offdiag_pairs(int n_a) {
  std::vector<std::pair<int, int>> upper;
  for (int j = 0; j < n_a; ++j) {
    for (int k = j + 1; k < n_a; ++k) upper.emplace_back(j, k);
  }
  std::vector<std::pair<int, int>> out = upper;
  for (const auto& [j, k] : upper) out.emplace_back(k, j);
  return out;
}

/// Position of block (j,k), j ≠ k, in the off-diagonal stack.
inline int offdiag_index(int n_a, int j, int k) {
  const auto pairs = offdiag_pairs(n_a);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first == j && pairs[i].second == k) return int(i);
  }
  throw ModelError("offdiag_index: (j,k) is not an off-diagonal pair");
}

/// The collection {ϱ^{jk}} of principal-space blocks of a composite operator,
/// split into the diagonal stack and the off-diagonal stack.
struct BlockState {
  int n_s = 0;
  int n_a = 0;
  std::vector<Matrix> diag;
  std::vector<Matrix> offdiag;

  Eigen::Index block_size() const { return Eigen::Index(n_s) * n_s; }
  Eigen::Index diag_dim() const { return block_size() * n_a; }
  Eigen::Index offdiag_dim() const {
    return block_size() * n_a * (n_a - 1);
  }

  static BlockState from_composite(const Matrix& x, const ModelSpec& spec) {
    BlockState b;
    b.n_s = spec.n_s;
    b.n_a = spec.n_a;
    for (int j = 0; j < spec.n_a; ++j) b.diag.push_back(block(x, spec, j, j));
    for (const auto& [j, k] : offdiag_pairs(spec.n_a)) {
      b.offdiag.push_back(block(x, spec, j, k));
    }
    return b;
  }

  /// Σ_{j,k} ϱ^{jk} ⊗ |φ_j⟩⟨φ_k|.
  Matrix to_composite(const Matrix& aux_basis) const {
    const Eigen::Index n = Eigen::Index(n_s) * n_a;
    Matrix out = Matrix::Zero(n, n);
    for (int j = 0; j < n_a; ++j) {
      out += kron(diag[std::size_t(j)],
                  aux_basis.col(j) * aux_basis.col(j).adjoint());
    }
    const auto pairs = offdiag_pairs(n_a);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto [j, k] = pairs[i];
      out += kron(offdiag[i], aux_basis.col(j) * aux_basis.col(k).adjoint());
    }
    return out;
  }

  /// Σ_k ϱ^{kk}: the principal marginal.
  Matrix principal() const {
    Matrix out = Matrix::Zero(n_s, n_s);
    for (const auto& d : diag) out += d;
    return out;
  }

  const Matrix& at(int j, int k) const {
    if (j == k) return diag[std::size_t(j)];
    return offdiag[std::size_t(offdiag_index(n_a, j, k))];
  }

  Vector diag_vector() const { return stack(diag); }
  Vector offdiag_vector() const { return stack(offdiag); }

  /// [diag stack; offdiag stack].
  Vector full_vector() const {
    Vector out(diag_dim() + offdiag_dim());
    out << diag_vector(), offdiag_vector();
    return out;
  }

  static BlockState from_vectors(int n_s, int n_a, const Vector& diag_stack,
                                 const Vector& offdiag_stack) {
    BlockState b;
    b.n_s = n_s;
    b.n_a = n_a;
    if (diag_stack.size() != b.diag_dim() ||
        offdiag_stack.size() != b.offdiag_dim()) {
      throw ModelError("BlockState: stack length mismatch");
    }
    b.diag = unstack(diag_stack, n_s);
    b.offdiag = unstack(offdiag_stack, n_s);
    return b;
  }

  static BlockState from_full_vector(int n_s, int n_a, const Vector& full) {
    BlockState shape;
    shape.n_s = n_s;
    shape.n_a = n_a;
    if (full.size() != shape.diag_dim() + shape.offdiag_dim()) {
      throw ModelError("BlockState: full stack length mismatch");
    }
    return from_vectors(n_s, n_a, full.head(shape.diag_dim()),
                        full.tail(shape.offdiag_dim()));
  }

  double total_trace() const {
    double t = 0.0;
    for (const auto& d : diag) t += d.trace().real();
    return t;
  }

  /// Largest ‖(ϱ^{jk})† − ϱ^{kj}‖_max over off-diagonal pairs.
  double adjoint_defect() const {
    double worst = 0.0;
    for (const auto& d : diag) {
      worst = std::max(worst, (d - d.adjoint()).cwiseAbs().maxCoeff());
    }
    const std::size_t half = offdiag.size() / 2;
    for (std::size_t i = 0; i < half; ++i) {
      worst = std::max(
          worst,
          (offdiag[i].adjoint() - offdiag[i + half]).cwiseAbs().maxCoeff());
    }
    return worst;
  }

 private:
  static Vector stack(const std::vector<Matrix>& blocks) {
    Eigen::Index total = 0;
    for (const auto& b : blocks) total += b.size();
    Vector out(total);
    Eigen::Index off = 0;
    for (const auto& b : blocks) {
      out.segment(off, b.size()) = vectorize(b);
      off += b.size();
    }
    return out;
  }

  static std::vector<Matrix> unstack(const Vector& v, int n_s) {
    const Eigen::Index bs = Eigen::Index(n_s) * n_s;
    std::vector<Matrix> out;
    for (Eigen::Index off = 0; off < v.size(); off += bs) {
      out.push_back(devectorize(v.segment(off, bs), n_s));
    }
    return out;
  }
};

}  // namespace nmq
