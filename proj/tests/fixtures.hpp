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

// Shared models and helpers for the test and acceptance binaries.
#pragma once

#include <random>

#include "nmq/model.hpp"

namespace nmq::testing {

inline Matrix sigma_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline Matrix sigma_y() {
  Matrix m(2, 2);
  m << 0, -kI, kI, 0;
  return m;
}
inline Matrix sigma_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}
/// |0⟩⟨1|: lowers the excited level |1⟩.
inline Matrix sigma_minus() {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = 1;
  return m;
}
inline Matrix ket_bra(int n, int i, int j) {
  Matrix m = Matrix::Zero(n, n);
  m(i, j) = 1;
  return m;
}

/// Qubit principal, qubit auxiliary, one damping channel on the auxiliary and
/// a weak homodyne probe on the principal.
inline ModelSpec reference_model() {
  ModelSpec m = ModelSpec::zeros(2, 2, 1);
  m.h_s.matrix = 0.5 * sigma_z();
  m.h_a.matrix = sigma_z();
  m.h_sa.matrix = 0.3 * kron(sigma_x(), sigma_x());
  m.couplings[0].a.matrix = sigma_minus();
  m.l0.matrix = 0.5 * sigma_minus();
  return m;
}

/// |1⟩⟨1| ⊗ |0⟩⟨0|.
inline Matrix reference_init() { return kron(ket_bra(2, 1, 1), ket_bra(2, 0, 0)); }

/// (|1⟩|0⟩ + |0⟩|1⟩)/√2, which has nonzero off-diagonal blocks.
inline Matrix entangled_init() {
  Vector psi = Vector::Zero(4);
  psi(2) = 1.0;
  psi(1) = 1.0;
  return pure_state(psi);
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = Complex(n(rng), n(rng));
  }
  return m;
}

inline Matrix random_density(std::mt19937_64& rng, Eigen::Index d) {
  const Matrix a = random_matrix(rng, d, d);
  Matrix rho = a * a.adjoint();
  return rho / rho.trace();
}

inline Matrix random_hermitian(std::mt19937_64& rng, Eigen::Index d) {
  const Matrix a = random_matrix(rng, d, d);
  return 0.5 * (a + a.adjoint());
}

}  // namespace nmq::testing
