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

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "nmq/model.hpp"

namespace nmq {
namespace {

using namespace nmq::testing;

// Partial trace written out element by element, independent of the library.
Matrix naive_partial_trace_aux(const Matrix& x, int n_s, int n_a) {
  Matrix out = Matrix::Zero(n_s, n_s);
  for (int a = 0; a < n_s; ++a) {
    for (int b = 0; b < n_s; ++b) {
      for (int p = 0; p < n_a; ++p) out(a, b) += x(a * n_a + p, b * n_a + p);
    }
  }
  return out;
}

bool contains(const std::vector<std::string>& report, const std::string& text) {
  for (const auto& s : report) {
    if (s.find(text) != std::string::npos) return true;
  }
  return false;
}

TEST(AssembleOperator, ZeroModelGivesZeroMatrix) {
  const ModelSpec m = ModelSpec::zeros(2, 3, 1);
  EXPECT_TRUE(assemble_operator(m, OperatorTag::hamiltonian(), 0.0).isZero(0.0));
  EXPECT_TRUE(assemble_operator(m, OperatorTag::coupling(1), 0.0).isZero(0.0));
  EXPECT_EQ(assemble_operator(m, OperatorTag::probe(), 0.0).rows(), 6);
}

TEST(AssembleOperator, KroneckerSumOfPauliZ) {
  ModelSpec m = ModelSpec::zeros(2, 2);
  m.h_s.matrix = sigma_z();
  m.h_a.matrix = sigma_z();
  const Matrix h = assemble_operator(m, OperatorTag::hamiltonian(), 0.0);
  Matrix expected = Matrix::Zero(4, 4);
  expected.diagonal() << 2.0, 0.0, 0.0, -2.0;
  EXPECT_LT((h - expected).norm(), 1e-15);
}

TEST(AssembleOperator, SinusoidalScheduleVanishesAtPhaseZero) {
  ModelSpec m = ModelSpec::zeros(2, 2);
  m.h_s.matrix = sigma_x();
  m.h_s.schedule = Schedule::sinusoidal(1.0, 3.0, 0.0);
  EXPECT_TRUE(assemble_operator(m, OperatorTag::hamiltonian(), 0.0).isZero(0.0));
  const double t = 0.4;
  const Matrix h = assemble_operator(m, OperatorTag::hamiltonian(), t);
  EXPECT_LT((h - std::sin(3.0 * t) * kron(sigma_x(), identity(2))).norm(), 1e-15);
}

TEST(AssembleOperator, ProbeIsAmpliated) {
  const ModelSpec m = reference_model();
  const Matrix l0 = assemble_operator(m, OperatorTag::probe(), 0.0);
  EXPECT_LT((l0 - kron(0.5 * sigma_minus(), identity(2))).norm(), 1e-15);
}

TEST(AssembleOperator, RejectsNegativeTimeAndUnknownChannel) {
  const ModelSpec m = reference_model();
  EXPECT_THROW(assemble_operator(m, OperatorTag::hamiltonian(), -1e-3), ModelError);
  EXPECT_THROW(assemble_operator(m, OperatorTag::coupling(2), 0.0), ModelError);
  EXPECT_THROW(assemble_operator(m, OperatorTag::coupling(0), 0.0), ModelError);
}

TEST(AssembleOperator, HamiltonianHermitianWhenPartsAre) {
  std::mt19937_64 rng(3);
  ModelSpec m = ModelSpec::zeros(3, 2);
  m.h_s.matrix = random_hermitian(rng, 3);
  m.h_a.matrix = random_hermitian(rng, 2);
  m.h_sa.matrix = random_hermitian(rng, 6);
  m.h_sa.schedule = Schedule::sinusoidal(0.7, 1.3, 0.2);
  for (double t : {0.0, 0.3, 1.7}) {
    EXPECT_LT(hermiticity_defect(assemble_operator(m, OperatorTag::hamiltonian(), t)),
              1e-15);
  }
}

TEST(Block, IdentityFactorizes) {
  const ModelSpec m = ModelSpec::zeros(2, 3);
  const Matrix x = identity(6);
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) {
      const Matrix expected = j == k ? identity(2) : Matrix::Zero(2, 2);
      EXPECT_EQ(block(x, m, j, k), expected);
    }
  }
}

TEST(Block, ProductFactorizes) {
  std::mt19937_64 rng(5);
  const ModelSpec m = ModelSpec::zeros(2, 3);
  const Matrix a = random_matrix(rng, 2, 2);
  const Matrix b = random_matrix(rng, 3, 3);
  const Matrix x = kron(a, b);
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) {
      EXPECT_LT((block(x, m, j, k) - b(j, k) * a).norm(), 1e-14);
    }
  }
}

TEST(Block, RotatedBasisMatchesSandwich) {
  std::mt19937_64 rng(9);
  ModelSpec m = ModelSpec::zeros(2, 2);
  const double c = std::cos(0.3), s = std::sin(0.3);
  m.aux_basis = Matrix(2, 2);
  m.aux_basis << c, -s * kI, s * kI, c;
  const Matrix x = random_matrix(rng, 4, 4);
  for (int j = 0; j < 2; ++j) {
    for (int k = 0; k < 2; ++k) {
      const Matrix left = kron(identity(2), Matrix(m.aux_basis.col(j).adjoint()));
      const Matrix right = kron(identity(2), Matrix(m.aux_basis.col(k)));
      EXPECT_LT((block(x, m, j, k) - left * x * right).norm(), 1e-14);
    }
  }
}

TEST(Block, RejectsOutOfRangeIndex) {
  const ModelSpec m = ModelSpec::zeros(2, 2);
  EXPECT_THROW(block(identity(4), m, 2, 0), ModelError);
  EXPECT_THROW(block(identity(4), m, 0, -1), ModelError);
}

TEST(Block, AdjointSwapsIndices) {
  std::mt19937_64 rng(11);
  const ModelSpec m = ModelSpec::zeros(3, 3);
  const Matrix x = random_matrix(rng, 9, 9);
  const Matrix xd = x.adjoint();
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) {
      EXPECT_EQ(block(xd, m, j, k), Matrix(block(x, m, k, j).adjoint()));
    }
  }
}

TEST(PartialTrace, DiagonalBlockSumIsExact) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelSpec m = ModelSpec::zeros(3, 4);
    const Matrix x = random_hermitian(rng, 12);
    Matrix sum = Matrix::Zero(3, 3);
    for (int j = 0; j < 4; ++j) sum += block(x, m, j, j);
    // Same summation order, so equality is exact.
    EXPECT_EQ(sum, partial_trace_aux(x, 4));
    EXPECT_LT((partial_trace_aux(x, 4) - naive_partial_trace_aux(x, 3, 4)).norm(), 1e-14);
  }
}

TEST(PartialTrace, ProductStateMarginal) {
  std::mt19937_64 rng(17);
  const Matrix rho_s = random_density(rng, 2);
  const Matrix rho_a = random_density(rng, 3);
  EXPECT_LT((partial_trace_aux(kron(rho_s, rho_a), 3) - rho_s).norm(), 1e-14);
  EXPECT_LT((partial_trace_principal(kron(rho_s, rho_a), 3) - rho_a).norm(), 1e-14);
}

TEST(PartialTrace, IdentityAndTrace) {
  EXPECT_EQ(partial_trace_aux(identity(6), 3), Matrix(3.0 * identity(2)));
  std::mt19937_64 rng(19);
  const Matrix x = random_matrix(rng, 6, 6);
  EXPECT_NEAR(std::abs(partial_trace_aux(x, 2).trace() - x.trace()), 0.0, 1e-13);
  EXPECT_THROW(partial_trace_aux(identity(5), 2), ModelError);
}

TEST(ValidateModel, AcceptsValidModel) {
  ModelSpec m = reference_model();
  m.h_s.matrix = sigma_x();
  EXPECT_TRUE(validate_model(m).empty());
}

TEST(ValidateModel, ReportsNonHermitianHs) {
  ModelSpec m = reference_model();
  m.h_s.matrix = Matrix::Zero(2, 2);
  m.h_s.matrix(0, 1) = 1.0;
  const ModelSpec before = m;
  const auto report = validate_model(m);
  EXPECT_TRUE(contains(report, "H_s not Hermitian"));
  EXPECT_EQ(m.h_s.matrix, before.h_s.matrix);
}

TEST(ValidateModel, ReportsDuplicatedBasisVector) {
  ModelSpec m = reference_model();
  m.aux_basis = Matrix(2, 2);
  m.aux_basis << 1, 1, 0, 0;
  EXPECT_TRUE(contains(validate_model(m), "aux_basis not orthonormal"));
}

TEST(ValidateModel, ReportsShapeMismatch) {
  ModelSpec m = reference_model();
  m.h_sa.matrix = Matrix::Zero(3, 3);
  EXPECT_TRUE(contains(validate_model(m), "H_sa has shape"));
}

TEST(Variants, DecoupledDropsInteraction) {
  ModelSpec m = reference_model();
  m.couplings[0].sa.matrix = kron(sigma_x(), sigma_minus());
  const ModelSpec d = decoupled_variant(m);
  EXPECT_TRUE(d.h_sa.is_zero());
  EXPECT_TRUE(d.couplings[0].sa.is_zero());
  EXPECT_EQ(d.couplings[0].a.matrix, m.couplings[0].a.matrix);
  const ModelSpec p = principal_only(m);
  EXPECT_EQ(p.n_a, 1);
  EXPECT_EQ(p.h_s.matrix, m.h_s.matrix);
}

TEST(DensityMatrix, Checks) {
  std::mt19937_64 rng(23);
  EXPECT_TRUE(check_density(random_density(rng, 3), 1e-10).empty());
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 0) = 1.5;
  bad(1, 1) = -0.5;
  EXPECT_FALSE(check_density(bad, 1e-10).empty());
  Vector psi(2);
  psi << 1.0, kI;
  const Matrix rho = pure_state(psi);
  EXPECT_NEAR(rho.trace().real(), 1.0, 1e-15);
  EXPECT_NEAR((rho * rho - rho).norm(), 0.0, 1e-15);
}

TEST(BlockState, OffdiagonalStackingOrder) {
  const auto pairs = offdiag_pairs(3);
  const std::vector<std::pair<int, int>> expected = {{0, 1}, {0, 2}, {1, 2},
                                                     {1, 0}, {2, 0}, {2, 1}};
  EXPECT_EQ(pairs, expected);
  EXPECT_EQ(offdiag_index(3, 1, 2), 2);
  EXPECT_EQ(offdiag_index(3, 2, 0), 4);
}

TEST(BlockState, RoundTripAndInvariants) {
  std::mt19937_64 rng(29);
  ModelSpec m = ModelSpec::zeros(2, 3);
  const Matrix rho = random_density(rng, 6);
  const BlockState b = BlockState::from_composite(rho, m);
  EXPECT_NEAR(b.total_trace(), 1.0, 1e-14);
  EXPECT_LT(b.adjoint_defect(), 1e-14);
  EXPECT_LT((b.to_composite(m.aux_basis) - rho).norm(), 1e-14);
  EXPECT_LT((b.principal() - partial_trace_aux(rho, 3)).norm(), 1e-14);
  const BlockState c = BlockState::from_full_vector(2, 3, b.full_vector());
  EXPECT_EQ(c.full_vector(), b.full_vector());
  EXPECT_EQ(b.diag_dim(), 12);
  EXPECT_EQ(b.offdiag_dim(), 24);
}

TEST(BlockState, ReassemblyInRotatedBasis) {
  std::mt19937_64 rng(31);
  ModelSpec m = ModelSpec::zeros(2, 2);
  const double th = 0.7;
  m.aux_basis = Matrix(2, 2);
  m.aux_basis << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  const Matrix rho = random_density(rng, 4);
  const BlockState b = BlockState::from_composite(rho, m);
  const Matrix back = b.to_composite(m.aux_basis);
  EXPECT_LT((back - rho).norm(), 1e-14);
  EXPECT_LT(hermiticity_defect(back), 1e-14);
}

}  // namespace
}  // namespace nmq
