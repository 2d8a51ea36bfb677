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

// Query-counted black-box access to an unknown operation M and its adjoint.
//
// Cost convention: every state preparation through M costs one M-query and
// every measurement in a basis rotated by M^dagger costs one M^dagger-query.
//
//   operation                 M   M^dagger
//   step1_sample              1   1
//   correlation_shot          1   0
//   step3_measure             1   1
//   hierarchy_phase_measure   0   1
//
// A sub-oracle for M_mu = M gamma_mu M^dagger charges its parent one M-query
// and one M^dagger-query for every query it receives.

#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "matchlearn/common.hpp"
#include "matchlearn/dense.hpp"
#include "matchlearn/gaussian.hpp"

namespace matchlearn {

enum class Backend { analytic, dense };

inline std::string to_string(Backend b) {
  return b == Backend::analytic ? "analytic" : "dense";
}

inline Backend backend_from_string(const std::string& s) {
  if (s == "analytic") return Backend::analytic;
  if (s == "dense") return Backend::dense;
  throw std::invalid_argument("unknown backend '" + s + "'");
}

struct QueryCounts {
  std::uint64_t m = 0;
  std::uint64_t mdag = 0;

  std::uint64_t total() const { return m + mdag; }
  bool operator==(const QueryCounts&) const = default;
  QueryCounts& operator+=(const QueryCounts& o) {
    m += o.m;
    mdag += o.mdag;
    return *this;
  }
  friend QueryCounts operator+(QueryCounts a, const QueryCounts& b) { return a += b; }
  friend QueryCounts operator*(std::uint64_t k, const QueryCounts& c) {
    return {k * c.m, k * c.mdag};
  }
};

inline void to_json(nlohmann::json& j, const QueryCounts& q) {
  j = {{"m", q.m}, {"mdag", q.mdag}, {"total", q.total()}};
}

inline constexpr QueryCounts kStep1Cost{1, 1};
inline constexpr QueryCounts kCorrelationCost{1, 0};
inline constexpr QueryCounts kStep3Cost{1, 1};
inline constexpr QueryCounts kPhaseMeasureCost{0, 1};

/// A measurement outcome together with the queries it consumed.
template <class T>
struct Shot {
  T outcome;
  QueryCounts cost;
};

/// Input state for a correlation measurement: |0> (mode 0) or X_l|0>.
struct Prep {
  int mode = 0;

  static Prep vacuum() { return {0}; }
  static Prep flipped(int l) { return {l}; }
  bool is_vacuum() const { return mode == 0; }
};

namespace detail {

struct CounterNode {
  QueryCounts counts;
  std::shared_ptr<CounterNode> parent;

  void charge(QueryCounts c) {
    counts += c;
    if (parent) parent->charge({c.total(), c.total()});
  }
};

/// Draws an index from a discrete distribution given as weights.
inline std::size_t sample_index(const std::vector<double>& p, Rng& rng) {
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  return dist(rng);
}

/// Multinomial counts via sequential conditional binomials.
inline std::vector<std::uint64_t> multinomial(std::uint64_t shots,
                                              const std::vector<double>& p,
                                              Rng& rng) {
  std::vector<std::uint64_t> out(p.size(), 0);
  double rest = 0.0;
  for (double x : p) rest += x;
  std::uint64_t left = shots;
  for (std::size_t i = 0; i + 1 < p.size() && left > 0; ++i) {
    double q = rest > 0.0 ? std::clamp(p[i] / rest, 0.0, 1.0) : 0.0;
    std::binomial_distribution<std::uint64_t> bin(left, q);
    out[i] = bin(rng);
    left -= out[i];
    rest -= p[i];
  }
  if (!p.empty()) out.back() += left;
  return out;
}

}  // namespace detail

/// Query-counted oracle for an unknown M with an analytic (level-2 only) or a
/// dense backend. Learners see only sampled outcomes; the exact distribution
/// methods are for validation and carry no query cost.
class UnitaryOracle {
 public:
  static UnitaryOracle analytic(const OrthogonalMatrix& q, std::uint64_t seed) {
    UnitaryOracle o(q.n_modes(), Backend::analytic, seed);
    o.q_ = q;
    return o;
  }

  static UnitaryOracle dense(const DenseUnitary& m, std::uint64_t seed) {
    UnitaryOracle o(m.n_qubits(), Backend::dense, seed);
    o.m_ = m;
    return o;
  }

  /// {backend, seed, and one of Q | h | circuit | unitary}.
  static UnitaryOracle from_json(const nlohmann::json& j) {
    Backend b = backend_from_string(j.value("backend", std::string("analytic")));
    auto seed = j.value("seed", std::uint64_t{0});
    std::optional<OrthogonalMatrix> q;
    std::optional<DenseUnitary> m;
    if (j.contains("Q")) {
      q = OrthogonalMatrix(matrix_from_json(j.at("Q")));
    } else if (j.contains("h")) {
      AntisymmetricGenerator h(matrix_from_json(j.at("h")));
      if (b == Backend::dense) m = unitary_from_h(h);
      else q = q_from_h(h);
    } else if (j.contains("circuit")) {
      MatchgateCircuit c = circuit_from_json(j.at("circuit"));
      if (b == Backend::dense) m = unitary_from_circuit(c);
      else q = OrthogonalMatrix(recompose(c));
    } else if (j.contains("unitary")) {
      if (b == Backend::analytic)
        throw std::invalid_argument("analytic backend needs Q, h or circuit");
      m = DenseUnitary(complex_matrix_from_json(j.at("unitary")));
    } else {
      throw std::invalid_argument("oracle JSON needs one of Q, h, circuit, unitary");
    }
    if (b == Backend::analytic) return analytic(*q, seed);
    return dense(m ? *m : gaussian_unitary(*q), seed);
  }

  int n_modes() const { return n_; }
  Backend backend() const { return backend_; }
  QueryCounts queries() const { return counter_->counts; }

  // -------------------------------------------------------------------------
  // Sampling operations

  /// nu with probability Q_{mu nu}^2.
  int step1_sample(int mu) {
    auto p = step1_distribution(mu);
    charge(kStep1Cost);
    return static_cast<int>(detail::sample_index(p, rng_)) + 1;
  }

  /// Outcome counts of `shots` independent step1_sample calls, index nu - 1.
  std::vector<std::uint64_t> step1_histogram(int mu, std::uint64_t shots) {
    auto p = step1_distribution(mu);
    charge(shots * kStep1Cost);
    return detail::multinomial(shots, p, rng_);
  }

  /// +1 or -1 with mean <i gamma_j gamma_k> on M|0> or M X_l|0>.
  int correlation_shot(int k, Prep prep) { return correlation_shot(1, k, prep); }

  int correlation_shot(int j, int k, Prep prep) {
    double mean = correlation_mean(j, k, prep);
    charge(kCorrelationCost);
    std::bernoulli_distribution coin((1.0 + mean) / 2.0);
    return coin(rng_) ? 1 : -1;
  }

  /// Sum of `shots` independent correlation_shot outcomes.
  std::int64_t correlation_sum(int j, int k, Prep prep, std::uint64_t shots) {
    double mean = correlation_mean(j, k, prep);
    charge(shots * kCorrelationCost);
    std::binomial_distribution<std::uint64_t> bin(
        shots, std::clamp((1.0 + mean) / 2.0, 0.0, 1.0));
    auto plus = static_cast<std::int64_t>(bin(rng_));
    return 2 * plus - static_cast<std::int64_t>(shots);
  }

  /// Samples S from |Tr(M gamma_S M_qbar^dagger)/d|^2. Above the dense limit
  /// the analytic backend returns the outcome whose conjugation signs match
  /// the row signs of Q_bar against Q.
  IndexSet step3_measure(const OrthogonalMatrix& qbar) {
    if (backend_ == Backend::analytic && n_ > dense_limit()) {
      if (qbar.n_modes() != n_) throw std::invalid_argument("step3: dimension mismatch");
      charge(kStep3Cost);
      return set_of(signed_permutation_outcome(qbar));
    }
    auto p = step3_distribution(qbar);
    charge(kStep3Cost);
    return set_of(static_cast<ModeMask>(detail::sample_index(p, rng_)));
  }

  /// Samples S from |Tr(gamma_S^dagger M^dagger W)/d|^2. Dense backend only.
  IndexSet hierarchy_phase_measure(const DenseUnitary& w) {
    if (backend_ != Backend::dense)
      throw std::invalid_argument("hierarchy_phase_measure needs a dense backend");
    if (w.n_qubits() != n_)
      throw std::invalid_argument("hierarchy_phase_measure: dimension mismatch");
    auto p = bell_measurement_distribution(m_->matrix().adjoint() * w.matrix());
    charge(kPhaseMeasureCost);
    return set_of(static_cast<ModeMask>(detail::sample_index(p, rng_)));
  }

  /// Oracle for M_mu = M gamma_mu M^dagger. Its queries are charged here too.
  UnitaryOracle conjugated_generator(int mu) {
    if (backend_ != Backend::dense)
      throw std::invalid_argument("conjugated_generator needs a dense backend");
    if (mu < 1 || mu > 2 * n_)
      throw std::invalid_argument("conjugated_generator: index out of range");
    const ComplexMatrix& m = m_->matrix();
    ComplexMatrix sub = m * monomial_times(ModeMask{1} << (mu - 1), m.adjoint());
    UnitaryOracle o(n_, Backend::dense, rng_());
    o.m_ = DenseUnitary(0.5 * (sub + sub.adjoint()));
    o.counter_->parent = counter_;
    return o;
  }

  // -------------------------------------------------------------------------
  // Exact distributions (validation only, no query cost)

  std::vector<double> step1_distribution(int mu) const {
    check_index(mu);
    std::vector<double> p(static_cast<std::size_t>(2 * n_));
    if (backend_ == Backend::analytic) {
      for (int nu = 0; nu < 2 * n_; ++nu)
        p[static_cast<std::size_t>(nu)] = std::pow(q_->matrix()(mu - 1, nu), 2);
      return p;
    }
    const ComplexMatrix& image = conjugated(mu);
    double mass = 0.0;
    for (int nu = 0; nu < 2 * n_; ++nu) {
      p[static_cast<std::size_t>(nu)] =
          std::norm(monomial_overlap(ModeMask{1} << nu, image));
      mass += p[static_cast<std::size_t>(nu)];
    }
    if (1.0 - mass > 1e-6)
      throw NotGaussianError("step1: " + std::to_string(1.0 - mass) +
                             " probability mass outside single-mode outcomes");
    return p;
  }

  double correlation_mean(int j, int k, Prep prep) const {
    check_index(j);
    check_index(k);
    if (j == k) throw std::invalid_argument("correlation: j == k");
    if (prep.mode < 0 || prep.mode > n_)
      throw std::invalid_argument("correlation: preparation mode out of range");
    double mean = 0.0;
    if (backend_ == Backend::analytic) {
      const double order = j < k ? 1.0 : -1.0;
      const IndexSet cols{std::min(j, k), std::max(j, k)};
      for (int l = 1; l <= n_; ++l) {
        double minor = conjugation_minor(q_->matrix(), {2 * l - 1, 2 * l}, cols);
        mean += (l == prep.mode ? order : -order) * minor;
      }
    } else {
      const ComplexVector& psi = prepared_state(prep.mode);
      ModeMask pair = (ModeMask{1} << (j - 1)) | (ModeMask{1} << (k - 1));
      // gamma_j gamma_k = -gamma_k gamma_j, and the mask product is ordered.
      double order = j < k ? 1.0 : -1.0;
      Complex v = psi.dot(monomial_times(pair, psi).col(0));
      mean = order * (Complex(0.0, 1.0) * v).real();
    }
    if (std::abs(mean) > 1.0 + 1e-9)
      throw InternalConsistencyError("correlation mean " + std::to_string(mean) +
                                     " outside [-1, 1]");
    return std::clamp(mean, -1.0, 1.0);
  }

  /// Outcome distribution of step3_measure, indexed by mask.
  std::vector<double> step3_distribution(const OrthogonalMatrix& qbar) const {
    if (qbar.n_modes() != n_)
      throw std::invalid_argument("step3: dimension mismatch");
    if (backend_ == Backend::analytic && n_ > dense_limit()) {
      if (n_ > 12) throw SizeLimitError("step3 distribution limited to 12 modes");
      std::vector<double> p(std::size_t{1} << (2 * n_), 0.0);
      p[static_cast<std::size_t>(signed_permutation_outcome(qbar))] = 1.0;
      return p;
    }
    DenseUnitary mbar = gaussian_unitary(qbar);
    const ComplexMatrix& m = backend_ == Backend::dense
                                 ? m_->matrix()
                                 : dense_truth().matrix();
    return bell_measurement_distribution(mbar.matrix().adjoint() * m);
  }

  /// Point-mass outcome of step3 for Q_bar = diag(t) Q, computed from the
  /// signs alone. Analytic backend only.
  IndexSet step3_signed_outcome(const OrthogonalMatrix& qbar) const {
    if (backend_ != Backend::analytic)
      throw std::logic_error("step3_signed_outcome needs the analytic backend");
    if (qbar.n_modes() != n_)
      throw std::invalid_argument("step3: dimension mismatch");
    return set_of(signed_permutation_outcome(qbar));
  }

 private:
  UnitaryOracle(int n, Backend b, std::uint64_t seed)
      : n_(n), backend_(b), rng_(seed),
        counter_(std::make_shared<detail::CounterNode>()) {
    check_mode_count(n);
  }

  void charge(QueryCounts c) { counter_->charge(c); }

  void check_index(int mu) const {
    if (mu < 1 || mu > 2 * n_)
      throw std::invalid_argument("mode index " + std::to_string(mu) +
                                  " outside [1, " + std::to_string(2 * n_) + "]");
  }

  // With Q_bar = diag(t) Q exactly, M_Qbar^dagger M_Q is a monomial gamma_P
  // whose conjugation signs reproduce t.
  ModeMask signed_permutation_outcome(const OrthogonalMatrix& qbar) const {
    ModeMask r = 0;
    for (int mu = 0; mu < 2 * n_; ++mu)
      if (qbar.matrix().row(mu).dot(q_->matrix().row(mu)) < 0.0)
        r |= ModeMask{1} << mu;
    if (std::popcount(r) % 2 == 0) return r;
    return ~r & low_bits(2 * n_);
  }

  const DenseUnitary& dense_truth() const {
    if (!m_) m_ = gaussian_unitary(*q_);
    return *m_;
  }

  const ComplexMatrix& conjugated(int mu) const {
    if (images_.empty()) images_.resize(static_cast<std::size_t>(2 * n_));
    auto& slot = images_[static_cast<std::size_t>(mu - 1)];
    if (slot.size() == 0) {
      const ComplexMatrix& m = m_->matrix();
      slot = m * monomial_times(ModeMask{1} << (mu - 1), m.adjoint());
    }
    return slot;
  }

  const ComplexVector& prepared_state(int mode) const {
    if (states_.empty()) states_.resize(static_cast<std::size_t>(n_ + 1));
    auto& slot = states_[static_cast<std::size_t>(mode)];
    if (slot.size() == 0) {
      // X_l|0> sets the bit of qubit l, counted from the most significant end.
      Eigen::Index basis = mode == 0 ? 0 : Eigen::Index{1} << (n_ - mode);
      slot = m_->matrix().col(basis);
    }
    return slot;
  }

  int n_;
  Backend backend_;
  Rng rng_;
  std::shared_ptr<detail::CounterNode> counter_;
  std::optional<OrthogonalMatrix> q_;
  mutable std::optional<DenseUnitary> m_;
  mutable std::vector<ComplexMatrix> images_;
  mutable std::vector<ComplexVector> states_;
};

}  // namespace matchlearn
