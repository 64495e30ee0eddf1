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
 * @file superop.hpp
 * @brief Matrix representations of superoperators on column-stacked
 *        operators.
 *
 * Convention: vec(A X B) = (Bᵀ ⊗ A) vec(X). Every superoperator built here
 * uses that identity; nothing else in the library transposes.
 */
#pragma once

#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "nmq/core.hpp"
#include "nmq/model.hpp"

namespace nmq {

struct SuperOp {
  Matrix matrix;
  Space space = Space::composite;

  /// Side length d of the operators acted on (matrix is d²×d²).
  Eigen::Index operand_dim() const {
    const auto d = Eigen::Index(std::llround(std::sqrt(double(matrix.rows()))));
    return d;
  }

  Vector apply(const Vector& v) const { return matrix * v; }
  Matrix apply(const Matrix& x) const {
    return devectorize(matrix * vectorize(x), x.rows());
  }
};

/// X ↦ A X.
inline Matrix left_multiplier(const Matrix& a) {
  return kron(identity(a.cols()), a);
}

/// X ↦ X B.
inline Matrix right_multiplier(const Matrix& b) {
  return kron(b.transpose(), identity(b.rows()));
}

/// Materializes any linear map on d×d matrices by acting on the basis E_ab.
inline Matrix superop_from_map(Eigen::Index d,
                               const std::function<Matrix(const Matrix&)>& f) {
  Matrix out(d * d, d * d);
  Matrix e = Matrix::Zero(d, d);
  for (Eigen::Index col = 0; col < d; ++col) {
    for (Eigen::Index row = 0; row < d; ++row) {
      e(row, col) = 1.0;
      out.col(col * d + row) = vectorize(f(e));
      e(row, col) = 0.0;
    }
  }
  return out;
}

/// −i[H, ρ] + Σ_k (L_k ρ L_k† − ½{L_k†L_k, ρ}) evaluated directly.
inline Matrix lindblad_rhs(const Matrix& h, const std::vector<Matrix>& channels,
                           const Matrix& rho) {
  Matrix out = -kI * (h * rho - rho * h);
  for (const auto& l : channels) {
    const Matrix ldl = l.adjoint() * l;
    out += l * rho * l.adjoint() - 0.5 * (ldl * rho + rho * ldl);
  }
  return out;
}

/// Matrix of the Lindblad generator built from Kronecker identities.
inline Matrix lindblad_matrix(const Matrix& h,
                              const std::vector<Matrix>& channels) {
  const Eigen::Index d = h.rows();
  const Matrix id = identity(d);
  Matrix out = -kI * (kron(id, h) - kron(h.transpose(), id));
  for (const auto& l : channels) {
    const Matrix ldl = l.adjoint() * l;
    out += kron(l.conjugate(), l) - 0.5 * kron(id, ldl) -
           0.5 * kron(ldl.transpose(), id);
  }
  return out;
}

/// L(t) on the composite space, probe channel included.
inline SuperOp lindbladian(const ModelSpec& spec, double t) {
  const Matrix h = assemble_operator(spec, OperatorTag::hamiltonian(), t);
  return {lindblad_matrix(h, all_channels(spec, t)), Space::composite};
}

/// G(t): ρ ↦ L₀ρ + ρL₀† with L₀ ampliated.
inline SuperOp g_superop(const ModelSpec& spec, double t) {
  const Matrix l0 = assemble_operator(spec, OperatorTag::probe(), t);
  return {left_multiplier(l0) + right_multiplier(l0.adjoint()),
          Space::composite};
}

/// Coefficients w with Tr(M X) = wᵀ vec(X) (no conjugation).
inline Vector trace_functional(const Matrix& m) {
  return vectorize(Matrix(m.transpose()));
}

/// Coefficients of the measurement scalar X ↦ Tr((L₀+L₀†) X) on the
/// composite space.
inline Vector probe_functional(const ModelSpec& spec, double t) {
  const Matrix l0 = assemble_operator(spec, OperatorTag::probe(), t);
  return trace_functional(l0 + l0.adjoint());
}

inline Complex apply_functional(const Vector& w, const Vector& v) {
  return (w.transpose() * v).value();
}

enum class ProjectorKind { block_diagonal, product };

inline std::string to_string(ProjectorKind k) {
  return k == ProjectorKind::block_diagonal ? "block" : "product";
}

struct Projector {
  ProjectorKind kind = ProjectorKind::block_diagonal;
  SuperOp p;
  SuperOp q;
};

/// P X = Σ_j X^{jj} ⊗ |φ_j⟩⟨φ_j|.
inline Matrix apply_block_diagonal_projection(const Matrix& x,
                                              const ModelSpec& spec) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (int j = 0; j < spec.n_a; ++j) {
    const auto phi = spec.aux_basis.col(j);
    out += kron(block(x, spec, j, j), phi * phi.adjoint());
  }
  return out;
}

/// P X = Tr_{h_a}(X) ⊗ ρ_a.
inline Matrix apply_product_projection(const Matrix& x, int n_a,
                                       const Matrix& rho_a) {
  return kron(partial_trace_aux(x, n_a), rho_a);
}

/// Builds (P, Q = I − P). `rho_a` is required for the product kind.
inline Projector projector_p(const ModelSpec& spec, ProjectorKind kind,
                             const Matrix& rho_a = Matrix()) {
  const Eigen::Index d = spec.dim();
  Projector out;
  out.kind = kind;
  if (kind == ProjectorKind::product) {
    if (rho_a.rows() != spec.n_a || rho_a.cols() != spec.n_a) {
      throw ModelError("projector_p: rho_a has wrong dimension");
    }
    const auto issues = check_density(rho_a, 1e-10);
    if (!issues.empty()) {
      throw ModelError("projector_p: invalid rho_a (" + issues.front() + ")");
    }
    out.p.matrix = superop_from_map(d, [&](const Matrix& x) {
      return apply_product_projection(x, spec.n_a, rho_a);
    });
  } else {
    out.p.matrix = superop_from_map(
        d, [&](const Matrix& x) { return apply_block_diagonal_projection(x, spec); });
  }
  out.q.matrix = identity(d * d) - out.p.matrix;
  return out;
}

enum class Restriction { pp, pq, qp, qq };

/// S^{pp} = PSP, S^{pq} = PSQ, S^{qp} = QSP, S^{qq} = QSQ.
inline SuperOp restrict(const SuperOp& s, const SuperOp& p, const SuperOp& q,
                        Restriction which) {
  if ((p.matrix * p.matrix - p.matrix).norm() > 1e-10) {
    throw ModelError("restrict: projector is not idempotent");
  }
  switch (which) {
    case Restriction::pp: return {p.matrix * s.matrix * p.matrix, s.space};
    case Restriction::pq: return {p.matrix * s.matrix * q.matrix, s.space};
    case Restriction::qp: return {q.matrix * s.matrix * p.matrix, s.space};
    case Restriction::qq: return {q.matrix * s.matrix * q.matrix, s.space};
  }
  throw ModelError("restrict: unknown restriction");
}

/// Row-major CSV dump; each complex cell is written as two columns re,im.
inline void write_superop_csv(std::ostream& os, const Matrix& m) {
  os << std::setprecision(17);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    os << (c ? "," : "") << "c" << c << "_re,c" << c << "_im";
  }
  os << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      os << (c ? "," : "") << m(r, c).real() << ',' << m(r, c).imag();
    }
    os << '\n';
  }
}

}  // namespace nmq
