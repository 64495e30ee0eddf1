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
 * @file block_generators.hpp
 * @brief Principal-space block form of the embedded dynamics.
 *
 * The composite state is represented by its blocks ϱ^{jk} = ⟨φ_j|ϱ|φ_k⟩.
 * Two independent routes to the block drift live here:
 *
 *  - coupled_block_drift(): the full coupled drift for every (j,k), written
 *    from H^{jk}, L_m^{jk} and (L_m†L_m)^{jk};
 *  - the six generator maps A00, A01, A10, A11, B01, B10 that split that
 *    drift into diagonal-stack and off-diagonal-stack contributions.
 *
 * Stack layout: the diagonal stack is [vec ϱ^{00}, …, vec ϱ^{n−1,n−1}], the
 * off-diagonal stack follows offdiag_pairs().
 */
#pragma once

#include <functional>
#include <vector>

#include "nmq/core.hpp"
#include "nmq/model.hpp"
#include "nmq/superop.hpp"

namespace nmq {

/// H^{jk}(t), L_m^{jk}(t) and (L_m†L_m)^{jk}(t) for every channel m = 0..K.
struct BlockOperators {
  int n_s = 0;
  int n_a = 0;
  std::vector<std::vector<Matrix>> h;                 // [j][k]
  std::vector<std::vector<std::vector<Matrix>>> l;    // [m][j][k]
  std::vector<std::vector<std::vector<Matrix>>> ldl;  // [m][j][k]
  Matrix l0;

  static BlockOperators build(const ModelSpec& spec, double t) {
    BlockOperators ops;
    ops.n_s = spec.n_s;
    ops.n_a = spec.n_a;
    const int na = spec.n_a;
    const Matrix id_s = identity(spec.n_s);
    const auto aux_elem = [&](const Matrix& x, int j, int k) {
      return (spec.aux_basis.col(j).adjoint() * x * spec.aux_basis.col(k)).value();
    };

    const Matrix hs = spec.h_s.at(t);
    const Matrix hsa = spec.h_sa.at(t);
    const Matrix ha = spec.h_a.at(t);
    ops.h.assign(std::size_t(na), std::vector<Matrix>(static_cast<std::size_t>(na)));
    for (int j = 0; j < na; ++j) {
      for (int k = 0; k < na; ++k) {
        Matrix hjk = block(hsa, spec, j, k) + aux_elem(ha, j, k) * id_s;
        if (j == k) hjk += hs;
        ops.h[std::size_t(j)][std::size_t(k)] = std::move(hjk);
      }
    }

    ops.l0 = spec.l0.at(t);
    const auto channel_blocks = [&](const Matrix& s, const Matrix& sa,
                                    const Matrix& a) {
      std::vector<std::vector<Matrix>> out(static_cast<std::size_t>(na),
                                           std::vector<Matrix>(static_cast<std::size_t>(na)));
      for (int j = 0; j < na; ++j) {
        for (int k = 0; k < na; ++k) {
          Matrix ljk = block(sa, spec, j, k) + aux_elem(a, j, k) * id_s;
          if (j == k) ljk += s;
          out[std::size_t(j)][std::size_t(k)] = std::move(ljk);
        }
      }
      return out;
    };
    const Matrix zero_sa = Matrix::Zero(spec.dim(), spec.dim());
    const Matrix zero_a = Matrix::Zero(na, na);
    ops.l.push_back(channel_blocks(ops.l0, zero_sa, zero_a));
    for (const auto& c : spec.couplings) {
      ops.l.push_back(channel_blocks(c.s.at(t), c.sa.at(t), c.a.at(t)));
    }

    // (L†L)^{jk} = Σ_r (L^{rj})† L^{rk}
    for (const auto& lm : ops.l) {
      std::vector<std::vector<Matrix>> d(static_cast<std::size_t>(na),
                                         std::vector<Matrix>(static_cast<std::size_t>(na)));
      for (int j = 0; j < na; ++j) {
        for (int k = 0; k < na; ++k) {
          Matrix acc = Matrix::Zero(spec.n_s, spec.n_s);
          for (int r = 0; r < na; ++r) {
            acc += lm[std::size_t(r)][std::size_t(j)].adjoint() *
                   lm[std::size_t(r)][std::size_t(k)];
          }
          d[std::size_t(j)][std::size_t(k)] = std::move(acc);
        }
      }
      ops.ldl.push_back(std::move(d));
    }
    return ops;
  }

  const Matrix& H(int j, int k) const { return h[std::size_t(j)][std::size_t(k)]; }
  const Matrix& L(std::size_t m, int j, int k) const {
    return l[m][std::size_t(j)][std::size_t(k)];
  }
  const Matrix& LdL(std::size_t m, int j, int k) const {
    return ldl[m][std::size_t(j)][std::size_t(k)];
  }
  std::size_t channels() const { return l.size(); }
};

/// Square grid of blocks X[j][k] used as the input of the block formulas.
using BlockGrid = std::vector<std::vector<Matrix>>;

inline BlockGrid to_grid(const BlockState& b) {
  BlockGrid g(std::size_t(b.n_a), std::vector<Matrix>(std::size_t(b.n_a)));
  for (int j = 0; j < b.n_a; ++j) {
    for (int k = 0; k < b.n_a; ++k) {
      g[std::size_t(j)][std::size_t(k)] = b.at(j, k);
    }
  }
  return g;
}

inline BlockState from_grid(const BlockGrid& g, int n_s) {
  BlockState b;
  b.n_s = n_s;
  b.n_a = int(g.size());
  for (int j = 0; j < b.n_a; ++j) b.diag.push_back(g[std::size_t(j)][std::size_t(j)]);
  for (const auto& [j, k] : offdiag_pairs(b.n_a)) {
    b.offdiag.push_back(g[std::size_t(j)][std::size_t(k)]);
  }
  return b;
}

/// Drift of every block ϱ^{jk} of the embedded master equation:
///   i Σ_l (ϱ^{jl}H^{lk} − H^{jl}ϱ^{lk})
///   + Σ_m [ Σ_{r,s} L_m^{jr} ϱ^{rs} (L_m^{ks})†
///           − ½ Σ_r ((L_m†L_m)^{jr} ϱ^{rk} + ϱ^{jr} (L_m†L_m)^{rk}) ].
inline BlockGrid coupled_block_drift(const BlockOperators& ops,
                                     const BlockGrid& x) {
  const int na = ops.n_a;
  BlockGrid out(std::size_t(na), std::vector<Matrix>(static_cast<std::size_t>(na)));
  for (int j = 0; j < na; ++j) {
    for (int k = 0; k < na; ++k) {
      Matrix d = Matrix::Zero(ops.n_s, ops.n_s);
      for (int l = 0; l < na; ++l) {
        d += kI * (x[std::size_t(j)][std::size_t(l)] * ops.H(l, k) -
                   ops.H(j, l) * x[std::size_t(l)][std::size_t(k)]);
      }
      for (std::size_t m = 0; m < ops.channels(); ++m) {
        for (int r = 0; r < na; ++r) {
          for (int s = 0; s < na; ++s) {
            d += ops.L(m, j, r) * x[std::size_t(r)][std::size_t(s)] *
                 ops.L(m, k, s).adjoint();
          }
          d -= 0.5 * (ops.LdL(m, j, r) * x[std::size_t(r)][std::size_t(k)] +
                      x[std::size_t(j)][std::size_t(r)] * ops.LdL(m, r, k));
        }
      }
      out[std::size_t(j)][std::size_t(k)] = std::move(d);
    }
  }
  return out;
}

/// Materializes a linear map between stacked vectors.
inline Matrix compile_linear(Eigen::Index in_dim, Eigen::Index out_dim,
                             const std::function<Vector(const Vector&)>& f) {
  Matrix out(out_dim, in_dim);
  Vector e = Vector::Zero(in_dim);
  for (Eigen::Index c = 0; c < in_dim; ++c) {
    e(c) = 1.0;
    out.col(c) = f(e);
    e(c) = 0.0;
  }
  return out;
}

/// Coupled block drift as a matrix on the full stack [diag; offdiag].
inline Matrix coupled_drift_matrix(const BlockOperators& ops) {
  BlockState shape;
  shape.n_s = ops.n_s;
  shape.n_a = ops.n_a;
  const Eigen::Index n = shape.diag_dim() + shape.offdiag_dim();
  return compile_linear(n, n, [&](const Vector& v) {
    const BlockState b = BlockState::from_full_vector(ops.n_s, ops.n_a, v);
    return from_grid(coupled_block_drift(ops, to_grid(b)), ops.n_s).full_vector();
  });
}

/// Block noise map X^{jk} ↦ L₀X^{jk} + X^{jk}L₀† on a stack of `count` blocks.
inline Matrix stacked_g_matrix(const Matrix& l0, int count) {
  const Matrix g = left_multiplier(l0) + right_multiplier(l0.adjoint());
  return kron(identity(count), g);
}

/// Coefficients of ϱ̃_s ↦ Σ_l Tr((L₀+L₀†) ϱ^{ll}) on the diagonal stack.
inline Vector stacked_probe_functional(const Matrix& l0, int n_a) {
  const Vector w = trace_functional(l0 + l0.adjoint());
  Vector out(w.size() * n_a);
  for (int j = 0; j < n_a; ++j) out.segment(j * w.size(), w.size()) = w;
  return out;
}

/// The six block maps, materialized on the stacked spaces.
///
/// B01 and B10 depend on the current diagonal stack only through the scalar
/// c(ϱ̃_s) = Σ_l Tr((L₀+L₀†)ϱ^{ll}); they are stored as their linear parts
/// and the functional `probe`, with
///   B01(ϱ̃_s) = b01 − c(ϱ̃_s)·I,   B10(ϱ̃_s)ϱ̃_s = b10 ϱ̃_s − c(ϱ̃_s) ϱ̃_s.
struct BlockGenerators {
  int n_s = 0;
  int n_a = 0;
  Matrix a00;  // offdiag ← diag
  Matrix a01;  // offdiag ← offdiag
  Matrix a10;  // diag ← diag
  Matrix a11;  // diag ← offdiag
  Matrix b01;  // offdiag ← offdiag, linear part
  Matrix b10;  // diag ← diag, linear part
  Vector probe;

  Complex scalar(const Vector& diag_stack) const {
    return apply_functional(probe, diag_stack);
  }
};

namespace detail {

inline Matrix a00_block(const BlockOperators& o, const BlockState& s, int j,
                        int k) {
  const Matrix& sjj = s.diag[std::size_t(j)];
  const Matrix& skk = s.diag[std::size_t(k)];
  Matrix d = kI * (sjj * o.H(j, k) - o.H(j, k) * skk);
  for (std::size_t m = 0; m < o.channels(); ++m) {
    for (int r = 0; r < o.n_a; ++r) {
      d += o.L(m, j, r) * s.diag[std::size_t(r)] * o.L(m, k, r).adjoint();
    }
    d -= 0.5 * (o.LdL(m, j, k) * skk + sjj * o.LdL(m, j, k));
  }
  return d;
}

inline Matrix a01_block(const BlockOperators& o, const BlockGrid& x, int j,
                        int k) {
  const auto X = [&](int a, int b) -> const Matrix& {
    return x[std::size_t(a)][std::size_t(b)];
  };
  Matrix d = Matrix::Zero(o.n_s, o.n_s);
  for (int l = 0; l < o.n_a; ++l) {
    if (l != j) d += kI * X(j, l) * o.H(l, k);
    if (l != k) d -= kI * o.H(j, l) * X(l, k);
  }
  for (std::size_t m = 0; m < o.channels(); ++m) {
    for (int r = 0; r < o.n_a; ++r) {
      for (int s = 0; s < o.n_a; ++s) {
        if (r != s) d += o.L(m, j, r) * X(r, s) * o.L(m, k, s).adjoint();
      }
      if (r != k) d -= 0.5 * o.LdL(m, j, r) * X(r, k);
      if (r != j) d -= 0.5 * X(j, r) * o.LdL(m, r, k);
    }
  }
  return d;
}

inline Matrix a11_block(const BlockOperators& o, const BlockGrid& x, int j) {
  const auto X = [&](int a, int b) -> const Matrix& {
    return x[std::size_t(a)][std::size_t(b)];
  };
  Matrix d = Matrix::Zero(o.n_s, o.n_s);
  for (int l = 0; l < o.n_a; ++l) {
    if (l == j) continue;
    d += kI * (X(j, l) * o.H(l, j) - o.H(j, l) * X(l, j));
  }
  for (std::size_t m = 0; m < o.channels(); ++m) {
    for (int r = 0; r < o.n_a; ++r) {
      for (int s = 0; s < o.n_a; ++s) {
        if (r != s) d += o.L(m, j, r) * X(r, s) * o.L(m, j, s).adjoint();
      }
      if (r != j) {
        d -= 0.5 * (o.LdL(m, j, r) * X(r, j) + X(j, r) * o.LdL(m, r, j));
      }
    }
  }
  return d;
}

inline Matrix a10_block(const BlockOperators& o, const BlockState& s, int j) {
  const Matrix& sjj = s.diag[std::size_t(j)];
  Matrix d = kI * (sjj * o.H(j, j) - o.H(j, j) * sjj);
  for (std::size_t m = 0; m < o.channels(); ++m) {
    for (int r = 0; r < o.n_a; ++r) {
      d += o.L(m, j, r) * s.diag[std::size_t(r)] * o.L(m, j, r).adjoint();
    }
    d -= 0.5 * (o.LdL(m, j, j) * sjj + sjj * o.LdL(m, j, j));
  }
  return d;
}

/// Grid holding only the off-diagonal blocks (diagonal set to zero).
inline BlockGrid offdiag_grid(const BlockState& b) {
  BlockGrid g = to_grid(b);
  for (int j = 0; j < b.n_a; ++j) g[std::size_t(j)][std::size_t(j)].setZero();
  return g;
}

}  // namespace detail

inline BlockGenerators block_generators(const BlockOperators& ops) {
  BlockGenerators g;
  g.n_s = ops.n_s;
  g.n_a = ops.n_a;
  BlockState shape;
  shape.n_s = ops.n_s;
  shape.n_a = ops.n_a;
  const Eigen::Index nd = shape.diag_dim();
  const Eigen::Index no = shape.offdiag_dim();
  const Vector zero_diag = Vector::Zero(nd);
  const Vector zero_off = Vector::Zero(no);
  const auto pairs = offdiag_pairs(ops.n_a);

  const auto from_diag = [&](const Vector& v) {
    return BlockState::from_vectors(ops.n_s, ops.n_a, v, zero_off);
  };
  const auto from_off = [&](const Vector& v) {
    return BlockState::from_vectors(ops.n_s, ops.n_a, zero_diag, v);
  };
  const auto stack_offdiag = [&](const std::vector<Matrix>& blocks) {
    BlockState b;
    b.n_s = ops.n_s;
    b.n_a = ops.n_a;
    b.offdiag = blocks;
    return b.offdiag_vector();
  };
  const auto stack_diag = [&](const std::vector<Matrix>& blocks) {
    BlockState b;
    b.n_s = ops.n_s;
    b.n_a = ops.n_a;
    b.diag = blocks;
    return b.diag_vector();
  };

  g.a00 = compile_linear(nd, no, [&](const Vector& v) {
    const BlockState s = from_diag(v);
    std::vector<Matrix> out;
    for (const auto& [j, k] : pairs) out.push_back(detail::a00_block(ops, s, j, k));
    return stack_offdiag(out);
  });
  g.a01 = compile_linear(no, no, [&](const Vector& v) {
    const BlockGrid x = detail::offdiag_grid(from_off(v));
    std::vector<Matrix> out;
    for (const auto& [j, k] : pairs) out.push_back(detail::a01_block(ops, x, j, k));
    return stack_offdiag(out);
  });
  g.a11 = compile_linear(no, nd, [&](const Vector& v) {
    const BlockGrid x = detail::offdiag_grid(from_off(v));
    std::vector<Matrix> out;
    for (int j = 0; j < ops.n_a; ++j) out.push_back(detail::a11_block(ops, x, j));
    return stack_diag(out);
  });
  g.a10 = compile_linear(nd, nd, [&](const Vector& v) {
    const BlockState s = from_diag(v);
    std::vector<Matrix> out;
    for (int j = 0; j < ops.n_a; ++j) out.push_back(detail::a10_block(ops, s, j));
    return stack_diag(out);
  });
  g.b10 = stacked_g_matrix(ops.l0, ops.n_a);
  g.b01 = stacked_g_matrix(ops.l0, ops.n_a * (ops.n_a - 1));
  g.probe = stacked_probe_functional(ops.l0, ops.n_a);
  return g;
}

inline BlockGenerators block_generators(const ModelSpec& spec, double t) {
  return block_generators(BlockOperators::build(spec, t));
}

}  // namespace nmq
