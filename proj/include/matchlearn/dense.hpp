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

// Exact 2^n-dimensional ground truth for small mode counts.
//
// Qubit 1 is the leftmost Kronecker factor, i.e. the most significant bit of
// a computational-basis index. All inner products are normalized traces
// Tr(A^dagger B) / d, so the maximally entangled reference state of the Bell
// measurements never appears explicitly.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "json.hpp"
#include "matchlearn/common.hpp"
#include "matchlearn/gaussian.hpp"
#include "matchlearn/majorana.hpp"

namespace matchlearn {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

inline ComplexMatrix complex_identity(int n_qubits) {
  const Eigen::Index d = Eigen::Index{1} << n_qubits;
  return ComplexMatrix::Identity(d, d);
}

class DenseUnitary {
 public:
  static constexpr double kTolerance = 1e-9;

  explicit DenseUnitary(ComplexMatrix u) : u_(std::move(u)) {
    if (u_.rows() != u_.cols() || u_.rows() < 2 ||
        (u_.rows() & (u_.rows() - 1)) != 0)
      throw std::invalid_argument("DenseUnitary: dimension must be 2^n");
    n_ = std::countr_zero(static_cast<std::uint64_t>(u_.rows()));
    require_dense(n_);
    if (max_abs(u_.adjoint() * u_ - ComplexMatrix::Identity(u_.rows(), u_.cols())) >
        kTolerance)
      throw std::invalid_argument("DenseUnitary: U^dagger U != I");
  }

  static DenseUnitary identity(int n_qubits) {
    require_dense(n_qubits);
    return DenseUnitary(complex_identity(n_qubits));
  }

  int n_qubits() const { return n_; }
  Eigen::Index dim() const { return u_.rows(); }
  const ComplexMatrix& matrix() const { return u_; }
  DenseUnitary adjoint() const { return DenseUnitary(u_.adjoint()); }

  friend DenseUnitary operator*(const DenseUnitary& a, const DenseUnitary& b) {
    return DenseUnitary(a.u_ * b.u_);
  }

 private:
  int n_ = 0;
  ComplexMatrix u_;
};

inline int qubits_of_rows(Eigen::Index rows) {
  if (rows < 2 || (rows & (rows - 1)) != 0)
    throw std::invalid_argument("dimension must be 2^n");
  return std::countr_zero(static_cast<std::uint64_t>(rows));
}

inline int qubits_of(const ComplexMatrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("operator must be square");
  return qubits_of_rows(m.rows());
}

// ---------------------------------------------------------------------------
// Matrices of Pauli strings and Majorana operators

inline Eigen::Matrix2cd pauli_matrix(Pauli p) {
  Eigen::Matrix2cd m;
  const Complex i(0.0, 1.0);
  switch (p) {
    case Pauli::I: m << 1, 0, 0, 1; break;
    case Pauli::X: m << 0, 1, 1, 0; break;
    case Pauli::Y: m << 0, -i, i, 0; break;
    case Pauli::Z: m << 1, 0, 0, -1; break;
  }
  return m;
}

/// Kronecker product of single-qubit Pauli matrices, qubit 1 leftmost.
inline ComplexMatrix pauli_dense(const PauliString& p) {
  require_dense(p.n_qubits());
  ComplexMatrix acc = ComplexMatrix::Identity(1, 1);
  for (int q = 1; q <= p.n_qubits(); ++q) {
    ComplexMatrix next = Eigen::kroneckerProduct(acc, pauli_matrix(p.letter(q)));
    acc = std::move(next);
  }
  return p.phase().value() * acc;
}

/// gamma_mu as a dense matrix, built directly from Z_1..Z_{l-1} (X|Y)_l.
inline DenseUnitary gamma_dense(int mu, int n_qubits) {
  if (mu < 1 || mu > 2 * n_qubits)
    throw std::invalid_argument("gamma_dense: index out of range");
  require_dense(n_qubits);
  const int l = (mu + 1) / 2;
  ComplexMatrix acc = ComplexMatrix::Identity(1, 1);
  for (int q = 1; q <= n_qubits; ++q) {
    Pauli p = q < l ? Pauli::Z : q > l ? Pauli::I : (mu % 2 ? Pauli::X : Pauli::Y);
    ComplexMatrix next = Eigen::kroneckerProduct(acc, pauli_matrix(p));
    acc = std::move(next);
  }
  return DenseUnitary(acc);
}

/// Dense matrix of a monomial as the ordered product of gamma_dense factors.
inline ComplexMatrix monomial_dense(const MajoranaMonomial& a) {
  ComplexMatrix acc = complex_identity(a.n_modes());
  for (int mu : a.support()) acc = acc * gamma_dense(mu, a.n_modes()).matrix();
  return a.phase().value() * acc;
}

namespace detail {

/// gamma_S |b> = phase |b'>; `n` qubits, S given as a mask. Factors are applied
/// right to left, so the largest index acts first.
inline std::pair<std::uint64_t, Complex> monomial_on_basis(ModeMask s, int n,
                                                           std::uint64_t b) {
  Complex phase(1.0, 0.0);
  while (s != 0) {
    const int top = 63 - std::countl_zero(s);  // 0-based Majorana index
    s &= ~(ModeMask{1} << top);
    const int l = top / 2 + 1;                 // 1-based qubit
    const int bit = n - l;
    // Z string on qubits 1..l-1, i.e. bits above `bit`.
    if (std::popcount(b >> (bit + 1)) & 1) phase = -phase;
    const bool set = (b >> bit) & 1;
    if (top % 2 == 1) phase *= set ? Complex(0, -1) : Complex(0, 1);  // Y
    b ^= std::uint64_t{1} << bit;
  }
  return {b, phase};
}

}  // namespace detail

/// Tr(gamma_S^dagger A) / d, for the unit-phase monomial gamma_S.
inline Complex monomial_overlap(ModeMask s, const ComplexMatrix& a) {
  const int n = qubits_of(a);
  const auto d = static_cast<std::uint64_t>(a.rows());
  Complex acc(0.0, 0.0);
  for (std::uint64_t b = 0; b < d; ++b) {
    auto [row, ph] = detail::monomial_on_basis(s, n, b);
    acc += std::conj(ph) * a(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(b));
  }
  return acc / static_cast<double>(d);
}

/// gamma_S * A, computed from the basis action of gamma_S. A may be a state.
inline ComplexMatrix monomial_times(ModeMask s, const ComplexMatrix& a) {
  const int n = qubits_of_rows(a.rows());
  const auto d = static_cast<std::uint64_t>(a.rows());
  ComplexMatrix out = ComplexMatrix::Zero(a.rows(), a.cols());
  for (std::uint64_t b = 0; b < d; ++b) {
    auto [row, ph] = detail::monomial_on_basis(s, n, b);
    out.row(static_cast<Eigen::Index>(row)) = ph * a.row(static_cast<Eigen::Index>(b));
  }
  return out;
}

/// Sparse-route dense matrix of the unit-phase monomial gamma_S.
inline ComplexMatrix monomial_matrix(ModeMask s, int n_qubits) {
  return monomial_times(s, complex_identity(n_qubits));
}

// ---------------------------------------------------------------------------
// Constructions

/// H = i sum_{mu,nu} h_{mu nu} gamma_mu gamma_nu (Hermitian).
inline ComplexMatrix quadratic_hamiltonian(const AntisymmetricGenerator& g) {
  const int n = g.n_modes();
  require_dense(n);
  std::vector<ComplexMatrix> gammas;
  for (int mu = 1; mu <= 2 * n; ++mu) gammas.push_back(gamma_dense(mu, n).matrix());
  ComplexMatrix h = ComplexMatrix::Zero(gammas[0].rows(), gammas[0].cols());
  const Matrix& hm = g.matrix();
  for (int mu = 0; mu < 2 * n; ++mu)
    for (int nu = 0; nu < 2 * n; ++nu)
      if (hm(mu, nu) != 0.0)
        h += Complex(0.0, hm(mu, nu)) * (gammas[static_cast<std::size_t>(mu)] *
                                         gammas[static_cast<std::size_t>(nu)]);
  return 0.5 * (h + h.adjoint());
}

/// f(H) for Hermitian H via its eigendecomposition.
template <class F>
ComplexMatrix hermitian_function(const ComplexMatrix& h, F f) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> eig(h);
  const auto& vals = eig.eigenvalues();
  ComplexVector fv(vals.size());
  for (Eigen::Index i = 0; i < vals.size(); ++i) fv(i) = f(vals(i));
  return eig.eigenvectors() * fv.asDiagonal() * eig.eigenvectors().adjoint();
}

/// M = exp(iH).
inline DenseUnitary unitary_from_h(const AntisymmetricGenerator& g) {
  ComplexMatrix h = quadratic_hamiltonian(g);
  return DenseUnitary(hermitian_function(
      h, [](double x) { return std::exp(Complex(0.0, x)); }));
}

/// (i/2) Tr([gamma_j, gamma_k] rho) for rho = exp(-H) / Tr exp(-H).
inline Matrix gibbs_correlation_dense(const AntisymmetricGenerator& g) {
  const int n = g.n_modes();
  ComplexMatrix rho = hermitian_function(
      quadratic_hamiltonian(g), [](double x) { return Complex(std::exp(-x), 0.0); });
  rho /= rho.trace();
  Matrix gamma = Matrix::Zero(2 * n, 2 * n);
  for (int j = 1; j <= 2 * n; ++j)
    for (int k = 1; k <= 2 * n; ++k) {
      if (j == k) continue;
      ComplexMatrix gj = gamma_dense(j, n).matrix();
      ComplexMatrix gk = gamma_dense(k, n).matrix();
      Complex v = Complex(0.0, 0.5) * ((gj * gk - gk * gj) * rho).trace();
      gamma(j - 1, k - 1) = v.real();
    }
  return gamma;
}

/// Dense form of one gate: exp((t/2) gamma_mu gamma_{mu+1}) or gamma_{2n}.
inline ComplexMatrix gate_dense(const MatchgateGate& g, int n_qubits) {
  if (g.kind == GateKind::reflection)
    return monomial_matrix(ModeMask{1} << (2 * n_qubits - 1), n_qubits);
  if (g.mode < 1 || g.mode >= 2 * n_qubits)
    throw std::invalid_argument("Givens gate mode out of range");
  // (gamma_mu gamma_{mu+1})^2 = -I, so the exponential is cos + sin * pair.
  ModeMask pair = (ModeMask{1} << (g.mode - 1)) | (ModeMask{1} << g.mode);
  ComplexMatrix out = std::cos(g.angle / 2) * complex_identity(n_qubits);
  out += std::sin(g.angle / 2) * monomial_matrix(pair, n_qubits);
  return out;
}

/// U = U_K ... U_1 for gates g_1, ..., g_K in circuit order.
inline DenseUnitary unitary_from_circuit(const MatchgateCircuit& c) {
  require_dense(c.n_modes);
  ComplexMatrix u = complex_identity(c.n_modes);
  for (const auto& g : c.gates) u = gate_dense(g, c.n_modes) * u;
  return DenseUnitary(u);
}

/// A dense M_Q for any Q in O(2n), via the Givens compiler.
inline DenseUnitary gaussian_unitary(const OrthogonalMatrix& q) {
  return unitary_from_circuit(compile_to_givens(q));
}

/// Q_{mu nu} = Tr(gamma_nu U gamma_mu U^dagger) / d (real part).
inline Matrix extract_q(const ComplexMatrix& u) {
  const int n = qubits_of(u);
  require_dense(n);
  Matrix q(2 * n, 2 * n);
  for (int mu = 1; mu <= 2 * n; ++mu) {
    ComplexMatrix image = u * monomial_times(ModeMask{1} << (mu - 1), u.adjoint());
    for (int nu = 1; nu <= 2 * n; ++nu)
      q(mu - 1, nu - 1) = monomial_overlap(ModeMask{1} << (nu - 1), image).real();
  }
  return q;
}

inline Matrix extract_q(const DenseUnitary& u) { return extract_q(u.matrix()); }

/// Normalized trace Tr(A^dagger B) / d.
inline Complex normalized_inner(const ComplexMatrix& a, const ComplexMatrix& b) {
  return (a.adjoint() * b).trace() / static_cast<double>(a.rows());
}

// Both distances use |U1 - c U2|_F^2 = 2d - 2 Re(c Tr(U1^dagger U2)) for
// unitary arguments, which keeps full precision near zero.

/// Phase-sensitive distance sqrt(1 - Re Tr(U1^dagger U2)/d), in [0, sqrt 2].
inline double distance_Dplus(const ComplexMatrix& u1, const ComplexMatrix& u2) {
  if (u1.rows() != u2.rows() || u1.cols() != u2.cols())
    throw std::invalid_argument("distance: dimension mismatch");
  double v = (u1 - u2).squaredNorm() / (2.0 * static_cast<double>(u1.rows()));
  return std::sqrt(std::clamp(v, 0.0, 2.0));
}

/// Phase-insensitive distance sqrt(1 - |Tr(U1^dagger U2)/d|^2), in [0, 1].
inline double distance_D(const ComplexMatrix& u1, const ComplexMatrix& u2) {
  if (u1.rows() != u2.rows() || u1.cols() != u2.cols())
    throw std::invalid_argument("distance: dimension mismatch");
  const Complex t = normalized_inner(u1, u2);
  const Complex c = std::abs(t) > 0.0 ? t / std::abs(t) : Complex(1.0);
  // w = 1 - |t|
  double w = (c * u1 - u2).squaredNorm() / (2.0 * static_cast<double>(u1.rows()));
  return std::sqrt(std::clamp(w * (2.0 - w), 0.0, 1.0));
}

inline double distance_Dplus(const DenseUnitary& a, const DenseUnitary& b) {
  return distance_Dplus(a.matrix(), b.matrix());
}
inline double distance_D(const DenseUnitary& a, const DenseUnitary& b) {
  return distance_D(a.matrix(), b.matrix());
}

// ---------------------------------------------------------------------------
// Decompositions

/// Coefficients c_S in the Hermitian monomial basis, indexed by mask.
struct CoefficientVector {
  int n_modes = 1;
  std::vector<Complex> c;

  Complex operator[](ModeMask s) const { return c[static_cast<std::size_t>(s)]; }
  Complex at(const IndexSet& s) const { return (*this)[mask_of(s)]; }

  double squared_norm() const {
    return std::accumulate(c.begin(), c.end(), 0.0,
                           [](double acc, Complex z) { return acc + std::norm(z); });
  }
  ModeMask argmax() const {
    auto it = std::max_element(c.begin(), c.end(), [](Complex a, Complex b) {
      return std::abs(a) < std::abs(b);
    });
    return static_cast<ModeMask>(it - c.begin());
  }
};

/// c_S = Tr(gamma-bar_S^dagger U) / d over all 4^n sets S.
inline CoefficientVector pauli_decompose(const ComplexMatrix& u) {
  const int n = qubits_of(u);
  require_dense(n);
  CoefficientVector out{n, std::vector<Complex>(std::size_t{1} << (2 * n))};
  for (ModeMask s = 0; s < (ModeMask{1} << (2 * n)); ++s) {
    // gamma-bar = phase * gamma, so its overlap picks up conj(phase).
    Complex phase = hermitian_phase(std::popcount(s)).value();
    out.c[static_cast<std::size_t>(s)] = std::conj(phase) * monomial_overlap(s, u);
  }
  return out;
}

inline CoefficientVector pauli_decompose(const DenseUnitary& u) {
  return pauli_decompose(u.matrix());
}

/// sum_S c_S gamma-bar_S.
inline ComplexMatrix reconstruct(const CoefficientVector& v) {
  ComplexMatrix out = ComplexMatrix::Zero(Eigen::Index{1} << v.n_modes,
                                          Eigen::Index{1} << v.n_modes);
  for (ModeMask s = 0; s < static_cast<ModeMask>(v.c.size()); ++s) {
    Complex coeff = v[s];
    if (coeff == Complex(0.0, 0.0)) continue;
    out += coeff * hermitian_phase(std::popcount(s)).value() *
           monomial_matrix(s, v.n_modes);
  }
  return out;
}

/// P(S) = |Tr(gamma_S^dagger A)/d|^2 for every S, indexed by mask.
inline std::vector<double> bell_measurement_distribution(const ComplexMatrix& a) {
  const int n = qubits_of(a);
  require_dense(n);
  std::vector<double> p(std::size_t{1} << (2 * n));
  for (ModeMask s = 0; s < static_cast<ModeMask>(p.size()); ++s)
    p[static_cast<std::size_t>(s)] = std::norm(monomial_overlap(s, a));
  return p;
}

/// Rotates the global phase so the largest-magnitude coefficient c_S is real
/// and positive.
inline ComplexMatrix canonicalize_global_phase(const ComplexMatrix& u) {
  CoefficientVector c = pauli_decompose(u);
  Complex top = c[c.argmax()];
  if (std::abs(top) == 0.0) return u;
  return u * (std::abs(top) / top);
}

struct ActionReconstruction {
  DenseUnitary w;
  double residual;  // 1 - top eigenvalue of the normalized Choi operator
  double gap;       // top minus second eigenvalue
};

/// Finds W with W gamma_mu W^dagger ~ A_mu (mu = 1..2n, passed in order).
///
/// The candidate channel is gamma_S -> A_{s1} A_{s2} ... (increasing order).
/// Its Choi operator J = d^-2 sum_S conj(gamma_S) (x) Phi(gamma_S) is the
/// projector onto (I (x) W)|Phi+> when the action is a unitary conjugation.
/// The top eigenvector therefore gives W up to phase. J has dimension 4^n, so
/// this is restricted to n <= 5.
inline ActionReconstruction reconstruct_from_action(
    const std::vector<ComplexMatrix>& action) {
  if (action.empty() || action.size() % 2 != 0)
    throw std::invalid_argument("reconstruct_from_action: need 2n operators");
  const int n = static_cast<int>(action.size() / 2);
  require_dense(n);
  if (n > 5)
    throw SizeLimitError("reconstruct_from_action supports at most 5 modes");
  for (const auto& a : action)
    if (qubits_of(a) != n)
      throw std::invalid_argument("reconstruct_from_action: dimension mismatch");

  const Eigen::Index d = Eigen::Index{1} << n;
  ComplexMatrix choi = ComplexMatrix::Zero(d * d, d * d);

  // Depth-first walk over index sets so each Phi(gamma_S) costs one product.
  std::vector<std::pair<ModeMask, ComplexMatrix>> stack;
  stack.emplace_back(0, complex_identity(n));
  while (!stack.empty()) {
    auto [s, phi] = std::move(stack.back());
    stack.pop_back();
    ComplexMatrix g = monomial_matrix(s, n).conjugate();
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c)
        if (g(r, c) != Complex(0.0, 0.0))
          choi.block(r * d, c * d, d, d) += g(r, c) * phi;
    const int start = s == 0 ? 0 : 64 - std::countl_zero(s);
    for (int mu = start; mu < 2 * n; ++mu)
      stack.emplace_back(s | (ModeMask{1} << mu),
                         phi * action[static_cast<std::size_t>(mu)]);
  }
  choi /= static_cast<double>(d * d);
  choi = 0.5 * (choi + choi.adjoint());

  Eigen::SelfAdjointEigenSolver<ComplexMatrix> eig(choi);
  const auto& vals = eig.eigenvalues();  // ascending
  const double top = vals(vals.size() - 1);
  const double second = vals(vals.size() - 2);
  if (top - second < 0.5)
    throw InconsistentActionError(
        "reconstruct_from_action: Choi eigenvalue gap " +
        std::to_string(top - second) + " < 0.5");

  ComplexVector w = eig.eigenvectors().col(vals.size() - 1);
  ComplexMatrix wm(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index a = 0; a < d; ++a)
      wm(a, i) = w(i * d + a) * std::sqrt(static_cast<double>(d));
  Eigen::JacobiSVD<ComplexMatrix> svd(wm, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {DenseUnitary(svd.matrixU() * svd.matrixV().adjoint()), 1.0 - top,
          top - second};
}

inline nlohmann::json complex_matrix_to_json(const ComplexMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

inline ComplexMatrix complex_matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument("complex matrix JSON must be a non-empty array");
  ComplexMatrix m(static_cast<Eigen::Index>(j.size()),
                  static_cast<Eigen::Index>(j.front().size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != j.front().size())
      throw std::invalid_argument("complex matrix JSON rows have unequal length");
    for (std::size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          Complex(j[r][c].at(0).get<double>(), j[r][c].at(1).get<double>());
  }
  return m;
}

}  // namespace matchlearn
