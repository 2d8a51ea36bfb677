// Copyright 2026 The matchlearn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Orthogonal-matrix representation of fermionic Gaussian operations.
//
// Conventions used throughout:
//   * M gamma_mu M^dagger = sum_nu Q_{mu nu} gamma_nu, Q in O(2n).
//   * M = exp(iH), H = i sum h_{mu nu} gamma_mu gamma_nu, Q = exp(4h).
//   * Composition: Q(M_B M_A) = Q(M_A) Q(M_B). A circuit applied gate by gate
//     therefore has Q equal to the left-to-right product of its gate matrices.
//
// Matrix functions of antisymmetric/orthogonal matrices go through the real
// Schur form, whose diagonal blocks are 2x2 rotations [[a, b], [-b, a]] or
// 1x1 reals. Everything stays real.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "matchlearn/common.hpp"
#include "matchlearn/majorana.hpp"

namespace matchlearn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Largest entry magnitude of any dense Eigen expression.
template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : static_cast<double>(m.cwiseAbs().maxCoeff());
}

inline double orthogonality_defect(const Matrix& q) {
  return max_abs(q * q.transpose() - Matrix::Identity(q.rows(), q.cols()));
}

namespace detail {

inline int modes_from_dim(Eigen::Index dim, const char* what) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument(std::string(what) +
                                ": matrix dimension must be 2n");
  int n = static_cast<int>(dim / 2);
  check_mode_count(n);
  return n;
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols())
    throw std::invalid_argument(std::string(what) + ": matrix must be square");
}

/// One diagonal block of a real Schur form of a normal matrix.
struct SchurBlock {
  Eigen::Index start;
  int size;     // 1 or 2
  double real;  // a
  double imag;  // b, for [[a, b], [-b, a]]; zero for 1x1 blocks
};

struct NormalForm {
  Matrix basis;
  std::vector<SchurBlock> blocks;
};

inline NormalForm normal_form(const Matrix& a) {
  Eigen::RealSchur<Matrix> schur(a);
  const Matrix& t = schur.matrixT();
  NormalForm out{schur.matrixU(), {}};
  Eigen::Index i = 0, dim = t.rows();
  while (i < dim) {
    if (i + 1 < dim && t(i + 1, i) != 0.0) {
      out.blocks.push_back({i, 2, 0.5 * (t(i, i) + t(i + 1, i + 1)),
                            0.5 * (t(i, i + 1) - t(i + 1, i))});
      i += 2;
    } else {
      out.blocks.push_back({i, 1, t(i, i), 0.0});
      i += 1;
    }
  }
  return out;
}

/// Rebuilds basis * F * basis^T, where F is block diagonal with the block for
/// each SchurBlock produced by `block_fn(block) -> Eigen::Matrix2d` (2x2) or
/// `scalar_fn(block) -> double` (1x1).
template <class ScalarFn, class BlockFn>
Matrix apply_blockwise(const NormalForm& form, ScalarFn scalar_fn,
                       BlockFn block_fn) {
  Eigen::Index dim = form.basis.rows();
  Matrix f = Matrix::Zero(dim, dim);
  for (const SchurBlock& b : form.blocks) {
    if (b.size == 1) {
      f(b.start, b.start) = scalar_fn(b);
    } else {
      f.block<2, 2>(b.start, b.start) = block_fn(b);
    }
  }
  return form.basis * f * form.basis.transpose();
}

inline Eigen::Matrix2d rotation_block(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), std::sin(angle), -std::sin(angle), std::cos(angle);
  return r;
}

inline Eigen::Matrix2d generator_block(double b) {
  Eigen::Matrix2d j;
  j << 0.0, b, -b, 0.0;
  return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Domain types

class AntisymmetricGenerator {
 public:
  static constexpr double kTolerance = 1e-12;

  explicit AntisymmetricGenerator(const Matrix& h) {
    detail::require_square(h, "AntisymmetricGenerator");
    n_ = detail::modes_from_dim(h.rows(), "AntisymmetricGenerator");
    double scale = std::max(1.0, max_abs(h));
    if (max_abs(h + h.transpose()) > kTolerance * scale)
      throw std::invalid_argument("AntisymmetricGenerator: h + h^T != 0");
    h_ = 0.5 * (h - h.transpose());
  }

  static AntisymmetricGenerator zero(int n_modes) {
    return AntisymmetricGenerator(Matrix::Zero(2 * n_modes, 2 * n_modes));
  }

  int n_modes() const { return n_; }
  const Matrix& matrix() const { return h_; }

 private:
  int n_ = 0;
  Matrix h_;
};

class OrthogonalMatrix {
 public:
  static constexpr double kTolerance = 1e-10;

  explicit OrthogonalMatrix(const Matrix& q) : q_(q) {
    detail::require_square(q, "OrthogonalMatrix");
    n_ = detail::modes_from_dim(q.rows(), "OrthogonalMatrix");
    if (orthogonality_defect(q) > kTolerance)
      throw std::invalid_argument("OrthogonalMatrix: Q Q^T != I");
    double d = q.determinant();
    if (std::abs(std::abs(d) - 1.0) > kTolerance)
      throw std::invalid_argument("OrthogonalMatrix: |det Q| != 1");
    det_ = d > 0 ? 1 : -1;
  }

  static OrthogonalMatrix identity(int n_modes) {
    return OrthogonalMatrix(Matrix::Identity(2 * n_modes, 2 * n_modes));
  }

  int n_modes() const { return n_; }
  int dim() const { return 2 * n_; }
  const Matrix& matrix() const { return q_; }
  int determinant() const { return det_; }
  /// Entry with 1-based indices.
  double operator()(int mu, int nu) const { return q_(mu - 1, nu - 1); }

 private:
  int n_ = 0;
  int det_ = 1;
  Matrix q_;
};

/// Antisymmetric two-point matrix (i/2) <[gamma_j, gamma_k]>.
class CorrelationMatrix {
 public:
  explicit CorrelationMatrix(const Matrix& g) {
    detail::require_square(g, "CorrelationMatrix");
    n_ = detail::modes_from_dim(g.rows(), "CorrelationMatrix");
    if (max_abs(g + g.transpose()) > 1e-10)
      throw std::invalid_argument("CorrelationMatrix: not antisymmetric");
    g_ = 0.5 * (g - g.transpose());
  }

  int n_modes() const { return n_; }
  const Matrix& matrix() const { return g_; }
  double max_singular_value() const {
    Eigen::JacobiSVD<Matrix> svd(g_);
    return svd.singularValues()(0);
  }

 private:
  int n_ = 0;
  Matrix g_;
};

enum class GateKind { givens, reflection };

/// A Givens gate rotates Majorana modes (mode, mode + 1): its orthogonal
/// matrix has block [[cos t, -sin t], [sin t, cos t]] and its qubit form is
/// exp((t/2) gamma_mode gamma_{mode+1}). A reflection gate is gamma_{2n}
/// itself, whose orthogonal matrix is diag(-1, ..., -1, +1).
struct MatchgateGate {
  GateKind kind = GateKind::givens;
  int mode = 1;
  double angle = 0.0;
};

struct MatchgateCircuit {
  int n_modes = 1;
  std::vector<MatchgateGate> gates;

  std::size_t givens_count() const {
    return static_cast<std::size_t>(
        std::count_if(gates.begin(), gates.end(), [](const MatchgateGate& g) {
          return g.kind == GateKind::givens;
        }));
  }
};

/// Constant c in the reported bound gate_count <= c * n^3.
inline constexpr int kGivensGateConstant = 2;

// ---------------------------------------------------------------------------
// Operations

/// Haar-random element of O(2n): orthogonal factor of an i.i.d. standard
/// normal matrix with the signs of R's diagonal folded into Q.
inline OrthogonalMatrix haar_orthogonal(int n_modes, Rng& rng) {
  check_mode_count(n_modes);
  const int dim = 2 * n_modes;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Matrix g(dim, dim);
    for (int c = 0; c < dim; ++c)
      for (int r = 0; r < dim; ++r) g(r, c) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    if (r.diagonal().cwiseAbs().minCoeff() < 1e-12) continue;
    Matrix q = qr.householderQ();
    for (int c = 0; c < dim; ++c)
      if (r(c, c) < 0) q.col(c) *= -1.0;
    return OrthogonalMatrix(q);
  }
}

/// Haar-random element of SO(2n).
inline OrthogonalMatrix haar_special_orthogonal(int n_modes, Rng& rng) {
  OrthogonalMatrix q = haar_orthogonal(n_modes, rng);
  if (q.determinant() > 0) return q;
  Matrix m = q.matrix();
  m.col(m.cols() - 1) *= -1.0;
  return OrthogonalMatrix(m);
}

inline OrthogonalMatrix q_from_h(const AntisymmetricGenerator& g) {
  auto form = detail::normal_form(4.0 * g.matrix());
  Matrix q = detail::apply_blockwise(
      form, [](const detail::SchurBlock& b) { return std::exp(b.real); },
      [](const detail::SchurBlock& b) -> Eigen::Matrix2d {
        return std::exp(b.real) * detail::rotation_block(b.imag);
      });
  return OrthogonalMatrix(q);
}

/// Principal logarithm, h = log(Q) / 4. Requires det Q = +1 and no eigenangle
/// within 1e-6 of pi.
inline AntisymmetricGenerator h_from_q(const OrthogonalMatrix& q) {
  constexpr double kBranchMargin = 1e-6;
  if (q.determinant() < 0)
    throw std::invalid_argument(
        "h_from_q: det(Q) = -1; factor out a reflection first");
  auto form = detail::normal_form(q.matrix());
  for (const auto& b : form.blocks) {
    double angle = b.size == 1 ? (b.real > 0 ? 0.0 : std::numbers::pi)
                               : std::atan2(b.imag, b.real);
    if (std::abs(angle) > std::numbers::pi - kBranchMargin)
      throw BranchAmbiguityError("h_from_q: eigenangle at pi");
  }
  Matrix log_q = detail::apply_blockwise(
      form, [](const detail::SchurBlock&) { return 0.0; },
      [](const detail::SchurBlock& b) -> Eigen::Matrix2d {
        return detail::generator_block(std::atan2(b.imag, b.real));
      });
  return AntisymmetricGenerator(0.5 * (log_q - log_q.transpose()) / 4.0);
}

/// Correlation matrix of the Gibbs state exp(-H)/Tr exp(-H). Each canonical
/// block b of h maps to -tanh(2b).
inline CorrelationMatrix correlation_of_gibbs(const AntisymmetricGenerator& g) {
  auto form = detail::normal_form(g.matrix());
  Matrix gamma = detail::apply_blockwise(
      form, [](const detail::SchurBlock&) { return 0.0; },
      [](const detail::SchurBlock& b) -> Eigen::Matrix2d {
        return detail::generator_block(-std::tanh(2.0 * b.imag));
      });
  return CorrelationMatrix(0.5 * (gamma - gamma.transpose()));
}

/// det(Q|_{S,S'}): rows S, columns S', both increasing, 1-based.
inline double conjugation_minor(const Matrix& q, const IndexSet& rows,
                                const IndexSet& cols) {
  if (rows.size() != cols.size())
    throw std::invalid_argument("conjugation_minor: |S| != |S'|");
  const int n = detail::modes_from_dim(q.rows(), "conjugation_minor");
  check_index_set(rows, n);
  check_index_set(cols, n);
  const auto k = static_cast<Eigen::Index>(rows.size());
  auto at = [&](std::size_t r, std::size_t c) {
    return q(rows[r] - 1, cols[c] - 1);
  };
  switch (k) {
    case 0: return 1.0;
    case 1: return at(0, 0);
    case 2: return at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0);
    default: break;
  }
  Matrix sub(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c)
      sub(r, c) = at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  return Eigen::PartialPivLU<Matrix>(sub).determinant();
}

inline double conjugation_minor(const OrthogonalMatrix& q, const IndexSet& rows,
                                const IndexSet& cols) {
  return conjugation_minor(q.matrix(), rows, cols);
}

/// All k-element subsets of [1, m] in lexicographic order.
inline std::vector<IndexSet> subsets_of_size(int m, int k) {
  std::vector<IndexSet> out;
  if (k < 0 || k > m) return out;
  IndexSet cur(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i + 1;
  for (;;) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[static_cast<std::size_t>(i)] == m - k + i + 1) --i;
    if (i < 0) break;
    ++cur[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j)
      cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

/// M_Q (phase gamma_S) M_Q^dagger = phase * sum_{|S'| = |S|} coefficients[S'] gamma_{S'}.
struct ConjugationImage {
  Phase phase;
  std::map<IndexSet, double> coefficients;
};

/// Expands M_Q a M_Q^dagger into monomials of the same degree. The number of
/// terms is C(2n, |S|), which is large for |S| near n.
inline ConjugationImage apply_conjugation(const OrthogonalMatrix& q,
                                          const MajoranaMonomial& a) {
  if (a.n_modes() != q.n_modes())
    throw std::invalid_argument("apply_conjugation: mode-count mismatch");
  ConjugationImage out{a.phase(), {}};
  IndexSet s = a.support();
  for (IndexSet& target : subsets_of_size(q.dim(), static_cast<int>(s.size()))) {
    double c = conjugation_minor(q.matrix(), s, target);
    out.coefficients.emplace(std::move(target), c);
  }
  return out;
}

/// Orthogonal matrix of a single gate.
inline Matrix gate_matrix(const MatchgateGate& g, int n_modes) {
  const int dim = 2 * n_modes;
  Matrix m = Matrix::Identity(dim, dim);
  if (g.kind == GateKind::reflection) {
    m = -m;
    m(dim - 1, dim - 1) = 1.0;
    return m;
  }
  if (g.mode < 1 || g.mode >= dim)
    throw std::invalid_argument("Givens gate mode out of range");
  const int r = g.mode - 1;
  m(r, r) = std::cos(g.angle);
  m(r, r + 1) = -std::sin(g.angle);
  m(r + 1, r) = std::sin(g.angle);
  m(r + 1, r + 1) = std::cos(g.angle);
  return m;
}

/// Ordered product Q_{g1} Q_{g2} ... of the circuit's gate matrices.
inline Matrix recompose(const MatchgateCircuit& c) {
  Matrix q = Matrix::Identity(2 * c.n_modes, 2 * c.n_modes);
  for (const auto& g : c.gates) q = q * gate_matrix(g, c.n_modes);
  return q;
}

/// Adjacent-index Givens decomposition. Columns are cleared bottom-up by
/// rotations in planes (i-1, i), each chosen so the surviving pivot is
/// nonnegative; for det Q = +1 the remainder is exactly I. A det = -1 input is
/// first written as Q = Q+ * R with R the gamma_{2n} reflection, and R is
/// emitted as a trailing gate. Uses n(2n-1) rotations at most.
inline MatchgateCircuit compile_to_givens(const OrthogonalMatrix& q) {
  const int n = q.n_modes(), dim = 2 * n;
  MatchgateCircuit circuit{n, {}};
  Matrix work = q.matrix();
  const bool reflect = q.determinant() < 0;
  if (reflect) work = work * gate_matrix({GateKind::reflection, dim, 0.0}, n);

  for (int j = 0; j < dim - 1; ++j) {
    for (int i = dim - 1; i > j; --i) {
      double a = work(i - 1, j), b = work(i, j);
      if (b == 0.0 && (a >= 0.0 || i - 1 != j)) continue;
      double r = std::hypot(a, b);
      double c = a / r, s = b / r;
      // Left-multiply by [[c, s], [-s, c]] on rows (i-1, i).
      Eigen::RowVectorXd upper = work.row(i - 1), lower = work.row(i);
      work.row(i - 1) = c * upper + s * lower;
      work.row(i) = -s * upper + c * lower;
      work(i, j) = 0.0;
      // The inverse of that rotation is the emitted gate.
      circuit.gates.push_back({GateKind::givens, i, std::atan2(s, c)});
    }
  }
  if (reflect) circuit.gates.push_back({GateKind::reflection, dim, 0.0});
  return circuit;
}

/// Nearest orthogonal matrix in Frobenius norm (polar factor U V^T).
inline OrthogonalMatrix project_orthogonal(const Matrix& m) {
  detail::require_square(m, "project_orthogonal");
  detail::modes_from_dim(m.rows(), "project_orthogonal");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues().minCoeff() <= 1e-8)
    throw RankDeficiencyError("project_orthogonal: input is singular");
  return OrthogonalMatrix(svd.matrixU() * svd.matrixV().transpose());
}

// ---------------------------------------------------------------------------
// Serialization: CSV (row-major, headerless) and JSON.

inline std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c > 0) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

inline Matrix matrix_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::size_t p = 0;
    while (p <= line.size()) {
      std::size_t comma = line.find(',', p);
      if (comma == std::string::npos) comma = line.size();
      std::string cell = line.substr(p, comma - p);
      std::size_t used = 0;
      row.push_back(std::stod(cell, &used));
      p = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("matrix CSV is empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size())
      throw std::invalid_argument("matrix CSV rows have unequal length");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw std::invalid_argument("matrix JSON must be a non-empty array of rows");
  Matrix m(static_cast<Eigen::Index>(j.size()),
           static_cast<Eigen::Index>(j.front().size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != j.front().size())
      throw std::invalid_argument("matrix JSON rows have unequal length");
    for (std::size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          j[r][c].get<double>();
  }
  return m;
}

inline nlohmann::json circuit_to_json(const MatchgateCircuit& c) {
  nlohmann::json gates = nlohmann::json::array();
  for (const auto& g : c.gates) {
    if (g.kind == GateKind::givens) {
      gates.push_back({{"kind", "givens"},
                       {"modes", {g.mode, g.mode + 1}},
                       {"angle", g.angle}});
    } else {
      gates.push_back({{"kind", "reflection"}, {"modes", {g.mode}}});
    }
  }
  return {{"n_modes", c.n_modes}, {"gates", gates}};
}

inline MatchgateCircuit circuit_from_json(const nlohmann::json& j) {
  MatchgateCircuit c;
  c.n_modes = j.at("n_modes").get<int>();
  check_mode_count(c.n_modes);
  for (const auto& g : j.at("gates")) {
    std::string kind = g.at("kind").get<std::string>();
    auto modes = g.at("modes").get<std::vector<int>>();
    if (kind == "givens") {
      if (modes.size() != 2 || modes[1] != modes[0] + 1)
        throw std::invalid_argument("Givens gate must act on (mu, mu+1)");
      c.gates.push_back({GateKind::givens, modes[0], g.at("angle").get<double>()});
    } else if (kind == "reflection") {
      if (modes.size() != 1 || modes[0] != 2 * c.n_modes)
        throw std::invalid_argument("reflection gate must act on mode 2n");
      c.gates.push_back({GateKind::reflection, modes[0], 0.0});
    } else {
      throw std::invalid_argument("unknown gate kind '" + kind + "'");
    }
  }
  return c;
}

}  // namespace matchlearn
