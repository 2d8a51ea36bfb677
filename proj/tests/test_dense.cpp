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

#include <gtest/gtest.h>

#include <cstdlib>
#include <numbers>
#include <random>

#include "matchlearn/dense.hpp"
#include "reference.hpp"

namespace ml = matchlearn;
using ml::ComplexMatrix;
using ml::DenseUnitary;
using ml::Matrix;

namespace {

double max_err(const ref::CM& a, const ref::CM& b) { return (a - b).cwiseAbs().maxCoeff(); }

ml::AntisymmetricGenerator random_generator(int n, std::mt19937_64& gen, double scale = 0.5) {
  return ml::AntisymmetricGenerator(ref::random_antisymmetric(2 * n, scale, gen));
}

}  // namespace

TEST(GammaDense, JordanWignerImages) {
  EXPECT_LE(max_err(ml::gamma_dense(1, 1).matrix(), ref::pauli('X')), 0.0);
  EXPECT_LE(max_err(ml::gamma_dense(2, 1).matrix(), ref::pauli('Y')), 0.0);
  EXPECT_LE(max_err(ml::gamma_dense(3, 2).matrix(), ref::pauli_string("ZX")), 0.0);
  EXPECT_THROW(ml::gamma_dense(5, 2), std::invalid_argument);
}

TEST(GammaDense, CliffordRelations) {
  const int n = 3;
  for (int mu = 1; mu <= 2 * n; ++mu) {
    ref::CM a = ml::gamma_dense(mu, n).matrix();
    EXPECT_LE(max_err(a, a.adjoint()), 0.0);
    EXPECT_LE(max_err(a * a, ref::CM::Identity(8, 8)), 0.0);
    for (int nu = mu + 1; nu <= 2 * n; ++nu) {
      ref::CM b = ml::gamma_dense(nu, n).matrix();
      EXPECT_LE((a * b + b * a).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(GammaDense, SparseRouteAgreesWithProducts) {
  for (int n = 1; n <= 3; ++n)
    for (auto s : ref::all_subsets(2 * n)) {
      ref::CM expected = ref::product(s, n);
      EXPECT_LE(max_err(ml::monomial_matrix(ml::mask_of(s), n), expected), 1e-15);
      EXPECT_LE(max_err(ml::monomial_dense(ml::MajoranaMonomial(n, s)), expected), 1e-15);
    }
}

TEST(UnitaryFromH, ZeroAndSingleMode) {
  EXPECT_LE(max_err(ml::unitary_from_h(ml::AntisymmetricGenerator::zero(2)).matrix(),
                    ref::CM::Identity(4, 4)),
            1e-14);
  const double theta = 0.8;
  Matrix j(2, 2);
  j << 0, 1, -1, 0;
  ref::CM u = ml::unitary_from_h(ml::AntisymmetricGenerator(theta / 4.0 * j)).matrix();
  ref::CM expected = (ref::C(0, -theta / 2.0) * ref::pauli('Z')).exp();
  EXPECT_LE(ml::distance_D(u, expected), 1e-7);
  EXPECT_LE(max_err(u, ref::unitary(theta / 4.0 * j)), 1e-12);
}

TEST(UnitaryFromH, ConjugationActsThroughExp4h) {
  std::mt19937_64 gen(1);
  const int n = 3;
  for (int t = 0; t < 5; ++t) {
    Matrix h = ref::random_antisymmetric(2 * n, 0.5, gen);
    ref::CM u = ml::unitary_from_h(ml::AntisymmetricGenerator(h)).matrix();
    EXPECT_LE(max_err(u, ref::unitary(h)), 1e-10);
    Matrix q = (4.0 * h).exp();
    for (int mu = 1; mu <= 2 * n; ++mu) {
      ref::CM lhs = u * ref::gamma(mu, n) * u.adjoint();
      ref::CM rhs = ref::CM::Zero(8, 8);
      for (int nu = 1; nu <= 2 * n; ++nu) rhs += q(mu - 1, nu - 1) * ref::gamma(nu, n);
      EXPECT_LE(max_err(lhs, rhs), 1e-8);
    }
  }
}

TEST(Circuit, EmptyIsIdentity) {
  EXPECT_LE(max_err(ml::unitary_from_circuit({2, {}}).matrix(), ref::CM::Identity(4, 4)), 0.0);
}

TEST(Circuit, GivensGateHasMatchgateShape) {
  ml::MatchgateCircuit c{2, {{ml::GateKind::givens, 2, 0.9}}};
  ref::CM u = ml::unitary_from_circuit(c).matrix();
  EXPECT_LE(max_err(u, (0.45 * ref::product({2, 3}, 2)).exp()), 1e-12);
  // Even block on {|00>, |11>}, odd block on {|01>, |10>}; nothing mixes them.
  for (int r : {0, 3})
    for (int col : {1, 2}) {
      EXPECT_EQ(std::abs(u(r, col)), 0.0);
      EXPECT_EQ(std::abs(u(col, r)), 0.0);
    }
  Eigen::Matrix2cd a, b;
  a << u(0, 0), u(0, 3), u(3, 0), u(3, 3);
  b << u(1, 1), u(1, 2), u(2, 1), u(2, 2);
  EXPECT_NEAR(std::abs(a.determinant() - b.determinant()), 0.0, 1e-12);
}

TEST(Circuit, CompileThenExtractRoundTrip) {
  ml::Rng rng(2);
  for (int n = 1; n <= 4; ++n)
    for (int t = 0; t < 10; ++t) {
      ml::OrthogonalMatrix q = ml::haar_orthogonal(n, rng);
      DenseUnitary u = ml::unitary_from_circuit(ml::compile_to_givens(q));
      EXPECT_LE((ml::extract_q(u) - q.matrix()).cwiseAbs().maxCoeff(), 1e-7);
      EXPECT_LE((ref::orthogonal_of(u.matrix()) - q.matrix()).cwiseAbs().maxCoeff(), 1e-7);
    }
}

TEST(ExtractQ, IdentitySwapAndGenerators) {
  EXPECT_LE((ml::extract_q(DenseUnitary::identity(2)) - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.0);
  ComplexMatrix swap = ComplexMatrix::Zero(4, 4);
  swap(0, 0) = swap(1, 2) = swap(2, 1) = swap(3, 3) = 1.0;
  Matrix q = ml::extract_q(DenseUnitary(swap));
  EXPECT_GT(ml::orthogonality_defect(q), 0.5);
  std::mt19937_64 gen(3);
  for (int n = 1; n <= 4; ++n) {
    auto g = random_generator(n, gen);
    EXPECT_LE((ml::extract_q(ml::unitary_from_h(g)) - ml::q_from_h(g).matrix()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Distance, Definitions) {
  std::mt19937_64 gen(4);
  ref::CM u = ref::random_unitary(4, gen);
  EXPECT_NEAR(ml::distance_D(u, u), 0.0, 1e-7);
  EXPECT_NEAR(ml::distance_Dplus(u, u), 0.0, 1e-7);
  const double phi = 0.6;
  ref::CM v = std::polar(1.0, phi) * u;
  EXPECT_NEAR(ml::distance_D(u, v), 0.0, 1e-7);
  EXPECT_NEAR(ml::distance_Dplus(u, v), std::sqrt(1.0 - std::cos(phi)), 1e-12);
  EXPECT_NEAR(ml::distance_D(ref::pauli('I'), ref::pauli('X')), 1.0, 1e-15);
  EXPECT_NEAR(ml::distance_Dplus(ref::pauli('I'), ref::pauli('X')), 1.0, 1e-15);
  EXPECT_NEAR(ml::distance_Dplus(ref::pauli('I'), -ref::pauli('I')), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(ml::distance_D(u, ref::pauli('X')), std::invalid_argument);
}

TEST(Decompose, BasisElements) {
  auto c = ml::pauli_decompose(DenseUnitary::identity(2));
  EXPECT_NEAR(std::abs(c[0] - 1.0), 0.0, 1e-15);
  for (std::size_t s = 1; s < c.c.size(); ++s) EXPECT_EQ(std::abs(c.c[s]), 0.0);
  ref::CM bar12 = ref::C(0, 1) * ref::product({1, 2}, 2);
  auto d = ml::pauli_decompose(bar12);
  EXPECT_NEAR(std::abs(d.at({1, 2}) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(d.squared_norm(), 1.0, 1e-12);
}

TEST(Decompose, ReconstructionAndParity) {
  std::mt19937_64 gen(5);
  for (int n = 1; n <= 3; ++n) {
    ref::CM u = ref::random_unitary(1 << n, gen);
    auto c = ml::pauli_decompose(u);
    EXPECT_NEAR(c.squared_norm(), 1.0, 1e-9);
    EXPECT_LE(max_err(ml::reconstruct(c), u), 1e-9);
  }
  auto m = ml::unitary_from_h(random_generator(2, gen, 1.0));
  auto c = ml::pauli_decompose(m);
  double odd = 0.0;
  for (std::size_t s = 0; s < c.c.size(); ++s)
    if (std::popcount(s) % 2) odd += std::norm(c.c[s]);
  EXPECT_LE(odd, 1e-10);
}

TEST(Decompose, HermitianBasisCoefficientsAreOverlaps) {
  std::mt19937_64 gen(6);
  const int n = 2;
  ref::CM u = ref::random_unitary(4, gen);
  auto c = ml::pauli_decompose(u);
  for (auto s : ref::all_subsets(2 * n)) {
    const int m = static_cast<int>(s.size());
    ref::C phase = (m * (m - 1) / 2) % 2 ? ref::C(0, 1) : ref::C(1, 0);
    ref::CM bar = phase * ref::product(s, n);
    EXPECT_NEAR(std::abs(c.at(s) - ref::normalized_trace(bar.adjoint() * u)), 0.0, 1e-12);
  }
}

TEST(Bell, PointMassAndStep1Case) {
  ref::CM g = ref::product({1, 3, 4}, 2);
  auto p = ml::bell_measurement_distribution(g);
  for (std::size_t s = 0; s < p.size(); ++s)
    EXPECT_NEAR(p[s], s == ml::mask_of({1, 3, 4}) ? 1.0 : 0.0, 1e-15);

  ml::Rng rng(7);
  ml::OrthogonalMatrix q = ml::haar_orthogonal(2, rng);
  ref::CM m = ml::gaussian_unitary(q).matrix();
  for (int mu = 1; mu <= 4; ++mu) {
    auto dist = ml::bell_measurement_distribution(m * ref::gamma(mu, 2) * m.adjoint());
    for (std::size_t s = 0; s < dist.size(); ++s) {
      if (std::popcount(s) == 1)
        EXPECT_NEAR(dist[s], std::pow(q(mu, std::countr_zero(s) + 1), 2), 1e-12);
      else
        EXPECT_NEAR(dist[s], 0.0, 1e-12);
    }
  }
}

TEST(Bell, SuperpositionSplitsEvenly) {
  ref::CM bar12 = ref::C(0, 1) * ref::product({1, 2}, 2);
  ref::CM a = (ref::CM::Identity(4, 4) + ref::C(0, 1) * bar12) / std::sqrt(2.0);
  auto p = ml::bell_measurement_distribution(a);
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[ml::mask_of({1, 2})], 0.5, 1e-15);
}

TEST(Bell, CompleteOnRandomUnitaries) {
  std::mt19937_64 gen(8);
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + t % 3;
    auto p = ml::bell_measurement_distribution(ref::random_unitary(1 << n, gen));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(Reconstruct, IdentityAction) {
  const int n = 2;
  std::vector<ComplexMatrix> action;
  for (int mu = 1; mu <= 2 * n; ++mu) action.push_back(ref::gamma(mu, n));
  auto r = ml::reconstruct_from_action(action);
  EXPECT_LE(ml::distance_D(r.w.matrix(), ref::CM::Identity(4, 4)), 1e-8);
  EXPECT_LE(r.residual, 1e-9);
}

TEST(Reconstruct, GaussianAction) {
  ml::Rng rng(9);
  const int n = 2;
  for (int t = 0; t < 5; ++t) {
    ml::OrthogonalMatrix q = ml::haar_orthogonal(n, rng);
    ref::CM m = ml::gaussian_unitary(q).matrix();
    std::vector<ComplexMatrix> action;
    for (int mu = 1; mu <= 2 * n; ++mu) action.push_back(m * ref::gamma(mu, n) * m.adjoint());
    auto r = ml::reconstruct_from_action(action);
    EXPECT_LE(ml::distance_D(r.w.matrix(), m), 1e-7);
  }
}

TEST(Reconstruct, SingleSignFlipIsMonomialTwist) {
  ml::Rng rng(10);
  const int n = 2;
  ml::OrthogonalMatrix q = ml::haar_orthogonal(n, rng);
  ref::CM m = ml::gaussian_unitary(q).matrix();
  for (int flip = 1; flip <= 2 * n; ++flip) {
    std::vector<ComplexMatrix> action;
    for (int mu = 1; mu <= 2 * n; ++mu)
      action.push_back((mu == flip ? -1.0 : 1.0) * m * ref::gamma(mu, n) * m.adjoint());
    auto r = ml::reconstruct_from_action(action);
    EXPECT_LT(r.residual, 1e-6);
    // W = M_Q gamma_R with R the complement of {flip}.
    std::vector<int> rest;
    for (int mu = 1; mu <= 2 * n; ++mu)
      if (mu != flip) rest.push_back(mu);
    EXPECT_LE(ml::distance_D(r.w.matrix(), m * ref::product(rest, n)), 1e-7);
  }
}

TEST(Reconstruct, InconsistentActionRejected) {
  const int n = 2;
  std::vector<ComplexMatrix> action(2 * n, ref::gamma(1, n));
  EXPECT_THROW(ml::reconstruct_from_action(action), ml::InconsistentActionError);
}

TEST(DistanceLemmas, MonomialAndUnitaryBounds) {
  std::mt19937_64 gen(11);
  int checked = 0;
  for (int n = 1; n <= 3; ++n)
    for (int t = 0; t < 40; ++t) {
      const int d = 1 << n;
      ref::CM u1 = ref::random_unitary(d, gen);
      const double eps = std::pow(10.0, -3.0 + 2.5 * (t % 10) / 10.0);
      ref::CM u2 = u1 * (ref::C(0, eps) * ref::random_hermitian(d, gen)).exp();
      auto c = ref::lemma_check(u1, u2, n);
      EXPECT_LE(c.worst_monomial, 2 * n * c.delta + 1e-9);
      EXPECT_LE(c.distance, 2 * n * c.delta + 1e-9);
      ++checked;
    }
  EXPECT_GE(checked, 100);
}

TEST(Limits, DenseLimitGuards) {
  EXPECT_THROW(DenseUnitary::identity(ml::dense_limit() + 1), ml::SizeLimitError);
  EXPECT_THROW(DenseUnitary(ComplexMatrix::Identity(3, 3)), std::invalid_argument);
  EXPECT_THROW(DenseUnitary(2.0 * ComplexMatrix::Identity(2, 2)), std::invalid_argument);
}

TEST(Limits, EnvironmentOverride) {
  ::setenv("MATCHLEARN_DENSE_LIMIT", "3", 1);
  EXPECT_EQ(ml::dense_limit(), 3);
  EXPECT_THROW(DenseUnitary::identity(4), ml::SizeLimitError);
  ::unsetenv("MATCHLEARN_DENSE_LIMIT");
  EXPECT_EQ(ml::dense_limit(), 6);
}

TEST(Json, ComplexMatrixRoundTrip) {
  std::mt19937_64 gen(12);
  ref::CM u = ref::random_unitary(4, gen);
  EXPECT_EQ(ml::complex_matrix_from_json(ml::complex_matrix_to_json(u)), u);
}

TEST(Canonical, LargestCoefficientRealPositive) {
  std::mt19937_64 gen(13);
  ref::CM u = std::polar(1.0, 2.0) * ref::product({1, 2}, 2);
  auto c = ml::pauli_decompose(ml::canonicalize_global_phase(u));
  ml::Complex top = c[c.argmax()];
  EXPECT_NEAR(top.imag(), 0.0, 1e-15);
  EXPECT_GT(top.real(), 0.0);
}
