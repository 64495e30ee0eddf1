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

#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nmq {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

/// Raised for malformed models, bad indices and shape mismatches.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an integration produces non-finite values or leaves its
/// numerical tolerances. Carries the step index at which it happened.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Kronecker product a ⊗ b.
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

inline Matrix identity(Eigen::Index n) { return Matrix::Identity(n, n); }

/// Relative Frobenius distance from Hermiticity, ‖X − X†‖ / max(‖X‖, 1).
inline double hermiticity_defect(const Matrix& x) {
  const double scale = std::max(x.norm(), 1.0);
  return (x - x.adjoint()).norm() / scale;
}

inline bool all_finite(const Matrix& x) { return x.allFinite(); }
inline bool all_finite(const Vector& x) { return x.allFinite(); }

/// Column-stacking vectorization: vec(X)[i + j·d] = X(i, j).
inline Vector vectorize(const Matrix& x) {
  return Eigen::Map<const Vector>(x.data(), x.size());
}

inline Matrix devectorize(const Vector& v, Eigen::Index rows) {
  if (rows <= 0 || v.size() % rows != 0) {
    throw ModelError("devectorize: vector length not divisible by row count");
  }
  return Eigen::Map<const Matrix>(v.data(), rows, v.size() / rows);
}

}  // namespace nmq
