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

// Learning Gaussian (matchgate) unitaries and higher hierarchy levels from
// query access.
//
// The Gaussian protocol runs in four stages:
//   1. learn_unsigned       |Q_{mu nu}| from single-mode Bell outcomes
//   2. estimate_c           2x2 minors of row pairs against a reference column
//   3. fix_signs            entry signs relative to the reference column, then
//      resolve_pair_signs   one extra minor per row pair, then
//      repair_signs         single-entry flips that reduce |Q Q^T - I|
//   4. fix_row_signs        whole-row signs from one distinguishing shot

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "matchlearn/common.hpp"
#include "matchlearn/dense.hpp"
#include "matchlearn/gaussian.hpp"
#include "matchlearn/oracle.hpp"

namespace matchlearn {

/// How the reference column of the sign stage is chosen.
///   fixed     the configured column for every row pair
///   automatic one column maximizing min_mu |Q~_{mu j}|
///   per_pair  for each pair l, the column maximizing
///             min(|Q~_{2l-1,j}|, |Q~_{2l,j}|), with its own vacuum baseline
enum class ReferenceMode { fixed, automatic, per_pair };

inline std::string to_string(ReferenceMode m) {
  switch (m) {
    case ReferenceMode::fixed: return "fixed";
    case ReferenceMode::automatic: return "auto";
    case ReferenceMode::per_pair: return "per-pair";
  }
  return "fixed";
}

inline ReferenceMode reference_mode_from_string(const std::string& s) {
  if (s == "fixed") return ReferenceMode::fixed;
  if (s == "auto") return ReferenceMode::automatic;
  if (s == "per-pair") return ReferenceMode::per_pair;
  throw std::invalid_argument("unknown reference mode '" + s + "'");
}

struct LearnConfig {
  double eta = 0.02;
  double epsilon = 0.02;
  double fail_prob = 0.05;
  double hoeffding_constant = 0.5;
  int reference_column = 1;
  ReferenceMode reference_mode = ReferenceMode::fixed;
  double margin_threshold = 1e-4;
  bool sign_repair = true;
  // Replace every sampled statistic with its exact expectation. Only the
  // single-shot row-sign measurement is still drawn (and charged).
  bool exact_statistics = false;

  void validate() const {
    auto in_unit = [](double x) { return x > 0.0 && x <= 1.0; };
    if (!in_unit(eta)) throw std::invalid_argument("eta must lie in (0, 1]");
    if (!in_unit(epsilon)) throw std::invalid_argument("epsilon must lie in (0, 1]");
    if (!(fail_prob > 0.0 && fail_prob < 1.0))
      throw std::invalid_argument("fail_prob must lie in (0, 1)");
    if (!(hoeffding_constant > 0.0))
      throw std::invalid_argument("hoeffding_constant must be positive");
    if (reference_column < 1)
      throw std::invalid_argument("reference_column must be >= 1");
    if (!(margin_threshold >= 0.0))
      throw std::invalid_argument("margin_threshold must be nonnegative");
  }
};

inline void to_json(nlohmann::json& j, const LearnConfig& c) {
  j = {{"eta", c.eta},
       {"epsilon", c.epsilon},
       {"fail_prob", c.fail_prob},
       {"hoeffding_constant", c.hoeffding_constant},
       {"reference_column", c.reference_column},
       {"reference_mode", to_string(c.reference_mode)},
       {"margin_threshold", c.margin_threshold},
       {"sign_repair", c.sign_repair},
       {"exact_statistics", c.exact_statistics}};
}

/// Shots per row in the unsigned stage: ceil(c log(4n^2/delta) / eta^2).
inline std::uint64_t step1_shots(int n, const LearnConfig& cfg) {
  double k = cfg.hoeffding_constant * std::log(4.0 * n * n / cfg.fail_prob) /
             (cfg.eta * cfg.eta);
  return static_cast<std::uint64_t>(std::ceil(k));
}

/// Shots per correlation estimator: ceil(c log(8n^2/delta) / epsilon^2).
inline std::uint64_t correlation_shots(int n, const LearnConfig& cfg) {
  double l = cfg.hoeffding_constant * std::log(8.0 * n * n / cfg.fail_prob) /
             (cfg.epsilon * cfg.epsilon);
  return static_cast<std::uint64_t>(std::ceil(l));
}

/// Number of correlation estimators: baselines plus flipped preparations for
/// the minors, then two per pair for the pair-sign check.
inline std::uint64_t correlation_estimators(int n, const LearnConfig& cfg) {
  const auto un = static_cast<std::uint64_t>(n);
  const std::uint64_t baselines = cfg.reference_mode == ReferenceMode::per_pair ? un : 1;
  return (un + baselines) * (2 * un - 1) + 2 * un;
}

/// Exact query totals of learn_gaussian. With a shared reference column:
///   M:        2nK + (n+1)(2n-1)L + 2nL + 1
///   M^dagger: 2nK + 1
/// Per-pair references replace (n+1)(2n-1) by 2n(2n-1).
inline QueryCounts gaussian_query_total(int n, const LearnConfig& cfg) {
  if (cfg.exact_statistics) return kStep3Cost;
  const std::uint64_t k = step1_shots(n, cfg);
  const std::uint64_t l = correlation_shots(n, cfg);
  const auto un = static_cast<std::uint64_t>(n);
  QueryCounts q = (2 * un * k) * kStep1Cost;
  q += (correlation_estimators(n, cfg) * l) * kCorrelationCost;
  return q + kStep3Cost;
}

// ---------------------------------------------------------------------------
// Stage 1

struct UnsignedEstimate {
  Matrix q_tilde;
  std::uint64_t shots_per_row = 0;
};

inline UnsignedEstimate learn_unsigned(UnitaryOracle& oracle, const LearnConfig& cfg) {
  cfg.validate();
  const int n = oracle.n_modes();
  UnsignedEstimate out{Matrix::Zero(2 * n, 2 * n), 0};
  if (cfg.exact_statistics) {
    for (int mu = 1; mu <= 2 * n; ++mu) {
      auto p = oracle.step1_distribution(mu);
      for (int nu = 0; nu < 2 * n; ++nu)
        out.q_tilde(mu - 1, nu) = std::sqrt(p[static_cast<std::size_t>(nu)]);
    }
    return out;
  }
  out.shots_per_row = step1_shots(n, cfg);
  for (int mu = 1; mu <= 2 * n; ++mu) {
    auto counts = oracle.step1_histogram(mu, out.shots_per_row);
    for (int nu = 0; nu < 2 * n; ++nu)
      out.q_tilde(mu - 1, nu) =
          std::sqrt(static_cast<double>(counts[static_cast<std::size_t>(nu)]) /
                    static_cast<double>(out.shots_per_row));
  }
  return out;
}

/// Column j maximizing min over `rows` of |Q~_{mu j}|; ties go to the
/// smaller index. Rows are 0-based; an empty list means all rows.
inline int choose_reference_column(const Matrix& q_tilde, std::vector<int> rows = {}) {
  if (rows.empty())
    for (int mu = 0; mu < q_tilde.rows(); ++mu) rows.push_back(mu);
  int best = 1;
  double best_value = -1.0;
  for (int j = 0; j < q_tilde.cols(); ++j) {
    double v = std::numeric_limits<double>::infinity();
    for (int mu : rows) v = std::min(v, std::abs(q_tilde(mu, j)));
    if (v > best_value) {
      best_value = v;
      best = j + 1;
    }
  }
  return best;
}

/// Reference column of every row pair, index l - 1.
inline std::vector<int> reference_columns(const Matrix& q_tilde, const LearnConfig& cfg) {
  const int n = detail::modes_from_dim(q_tilde.rows(), "reference_columns");
  switch (cfg.reference_mode) {
    case ReferenceMode::fixed:
      if (cfg.reference_column > 2 * n)
        throw std::invalid_argument("reference column out of range");
      return std::vector<int>(static_cast<std::size_t>(n), cfg.reference_column);
    case ReferenceMode::automatic:
      return std::vector<int>(static_cast<std::size_t>(n), choose_reference_column(q_tilde));
    case ReferenceMode::per_pair: {
      std::vector<int> refs;
      for (int l = 1; l <= n; ++l)
        refs.push_back(choose_reference_column(q_tilde, {2 * l - 2, 2 * l - 1}));
      return refs;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Stage 2

/// Estimate of a correlation entry <i gamma_a gamma_b>, sampled or exact.
inline double estimate_correlation(UnitaryOracle& oracle, int a, int b, Prep prep,
                                   const LearnConfig& cfg) {
  if (cfg.exact_statistics) return oracle.correlation_mean(a, b, prep);
  const std::uint64_t shots = correlation_shots(oracle.n_modes(), cfg);
  return static_cast<double>(oracle.correlation_sum(a, b, prep, shots)) /
         static_cast<double>(shots);
}

namespace detail {

inline void check_references(const std::vector<int>& refs, int n) {
  if (refs.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("need one reference column per row pair");
  for (int j : refs)
    if (j < 1 || j > 2 * n) throw std::invalid_argument("reference column out of range");
}

}  // namespace detail

/// C~_{lk} = (Gamma^(l)_{j_l k} - Gamma^(0)_{j_l k}) / 2 as an n x 2n matrix
/// (row l - 1, column k - 1); column j_l of row l is left at zero. The vacuum
/// baseline is shared across pairs unless `per_pair_baseline` is set.
inline Matrix estimate_c(UnitaryOracle& oracle, const LearnConfig& cfg,
                         const std::vector<int>& refs, bool per_pair_baseline) {
  cfg.validate();
  const int n = oracle.n_modes();
  detail::check_references(refs, n);
  if (!per_pair_baseline && std::adjacent_find(refs.begin(), refs.end(),
                                               std::not_equal_to<>()) != refs.end())
    throw std::invalid_argument("a shared baseline needs a common reference column");
  Matrix c = Matrix::Zero(n, 2 * n);
  for (int k = 1; k <= 2 * n; ++k) {
    double shared = 0.0;
    if (!per_pair_baseline && k != refs[0])
      shared = estimate_correlation(oracle, refs[0], k, Prep::vacuum(), cfg);
    for (int l = 1; l <= n; ++l) {
      const int j = refs[static_cast<std::size_t>(l - 1)];
      if (k == j) continue;
      double base = per_pair_baseline
                        ? estimate_correlation(oracle, j, k, Prep::vacuum(), cfg)
                        : shared;
      c(l - 1, k - 1) =
          (estimate_correlation(oracle, j, k, Prep::flipped(l), cfg) - base) / 2.0;
    }
  }
  return c;
}

inline Matrix estimate_c(UnitaryOracle& oracle, const LearnConfig& cfg,
                         int reference_column = 1) {
  return estimate_c(oracle, cfg,
                    std::vector<int>(static_cast<std::size_t>(oracle.n_modes()),
                                     reference_column),
                    false);
}

// ---------------------------------------------------------------------------
// Stage 3

struct SignTable {
  Matrix s;              // entries +1 / -1; column j is +1
  std::vector<int> t;    // whole-row signs, filled by fix_row_signs
};

struct SignFix {
  Matrix q_bar;
  SignTable signs;
  Matrix margins;        // n x 2n, infinity where no sign decision was needed
  std::vector<std::string> flags;
};

/// Chooses entry signs of rows 2l-1, 2l so that the minor against column j
/// matches C~. With s_{., j} = +1 the minor is s_{2l,k} a - s_{2l-1,k} b for
/// a = Q~_{2l-1,j} Q~_{2l,k} and b = Q~_{2l,j} Q~_{2l-1,k}.
inline SignFix fix_signs(const Matrix& q_tilde, const Matrix& c_tilde,
                         const LearnConfig& cfg, const std::vector<int>& refs) {
  const int n = detail::modes_from_dim(q_tilde.rows(), "fix_signs");
  if (c_tilde.rows() != n || c_tilde.cols() != 2 * n)
    throw std::invalid_argument("fix_signs: C~ must be n x 2n");
  detail::check_references(refs, n);
  if ((q_tilde.array() < 0.0).any())
    throw std::invalid_argument("fix_signs: Q~ must be entrywise nonnegative");

  constexpr double kTie = 1e-12;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Candidate order puts (+,+) first so exact ties resolve toward it.
  constexpr std::array<std::array<int, 2>, 4> kSigns{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

  SignFix out{q_tilde, {Matrix::Ones(2 * n, 2 * n), {}}, Matrix::Constant(n, 2 * n, kInf),
              {}};
  for (int l = 1; l <= n; ++l) {
    const int r1 = 2 * l - 2, r2 = 2 * l - 1;  // 0-based rows 2l-1, 2l
    const int j = refs[static_cast<std::size_t>(l - 1)];
    for (int k = 1; k <= 2 * n; ++k) {
      if (k == j) continue;
      const double a = q_tilde(r1, j - 1) * q_tilde(r2, k - 1);
      const double b = q_tilde(r2, j - 1) * q_tilde(r1, k - 1);
      const double target = c_tilde(l - 1, k - 1);
      std::array<double, 4> value{}, dist{};
      for (std::size_t i = 0; i < 4; ++i) {
        value[i] = kSigns[i][0] * a - kSigns[i][1] * b;
        dist[i] = std::abs(value[i] - target);
      }
      std::size_t best = 0;
      for (std::size_t i = 1; i < 4; ++i)
        if (dist[i] < dist[best] - kTie) best = i;
      double margin = kInf;
      for (std::size_t i = 0; i < 4; ++i)
        if (std::abs(value[i] - value[best]) > kTie)
          margin = std::min(margin, dist[i] - dist[best]);
      out.signs.s(r2, k - 1) = kSigns[best][0];
      out.signs.s(r1, k - 1) = kSigns[best][1];
      out.margins(l - 1, k - 1) = margin;
      if (margin < cfg.margin_threshold)
        out.flags.push_back("small_sign_margin(l=" + std::to_string(l) +
                            ",k=" + std::to_string(k) + ")");
    }
  }
  out.q_bar = out.signs.s.cwiseProduct(q_tilde);
  return out;
}

inline SignFix fix_signs(const Matrix& q_tilde, const Matrix& c_tilde,
                         const LearnConfig& cfg, int reference_column = 1) {
  const int n = detail::modes_from_dim(q_tilde.rows(), "fix_signs");
  return fix_signs(q_tilde, c_tilde, cfg,
                   std::vector<int>(static_cast<std::size_t>(n), reference_column));
}

struct PairFix {
  std::vector<double> margins;
  std::vector<int> flips;  // -1 where the non-reference entries were negated
  std::vector<std::string> flags;
};

/// Stages 1 and 2 cannot tell rows (u, v) from (uF, -vF), F negating every
/// entry except column j. One more minor per pair, on two non-reference
/// columns, separates them because it changes sign under that map.
inline PairFix resolve_pair_signs(UnitaryOracle& oracle, Matrix& q_bar,
                                  const LearnConfig& cfg, const std::vector<int>& refs) {
  const int n = oracle.n_modes();
  if (n < 2) throw std::invalid_argument("resolve_pair_signs needs n >= 2");
  detail::check_references(refs, n);
  PairFix out;
  for (int l = 1; l <= n; ++l) {
    const int r1 = 2 * l - 2, r2 = 2 * l - 1;
    const int j = refs[static_cast<std::size_t>(l - 1)];
    int ba = 0, bb = 0;
    double guess = 0.0;
    for (int a = 1; a <= 2 * n; ++a)
      for (int b = a + 1; b <= 2 * n; ++b) {
        if (a == j || b == j) continue;
        double m = q_bar(r1, a - 1) * q_bar(r2, b - 1) - q_bar(r1, b - 1) * q_bar(r2, a - 1);
        if (ba == 0 || std::abs(m) > std::abs(guess)) {
          ba = a;
          bb = b;
          guess = m;
        }
      }
    double c = (estimate_correlation(oracle, ba, bb, Prep::flipped(l), cfg) -
                estimate_correlation(oracle, ba, bb, Prep::vacuum(), cfg)) /
               2.0;
    double keep = std::abs(c - guess), flip = std::abs(c + guess);
    int tau = flip < keep - 1e-12 ? -1 : 1;
    if (tau < 0)
      for (int k = 0; k < 2 * n; ++k)
        if (k != j - 1) {
          q_bar(r1, k) = -q_bar(r1, k);
          q_bar(r2, k) = -q_bar(r2, k);
        }
    double margin = std::abs(keep - flip);
    out.margins.push_back(margin);
    out.flips.push_back(tau);
    if (margin < cfg.margin_threshold)
      out.flags.push_back("small_pair_margin(l=" + std::to_string(l) + ")");
  }
  return out;
}

inline PairFix resolve_pair_signs(UnitaryOracle& oracle, Matrix& q_bar,
                                  const LearnConfig& cfg, int reference_column = 1) {
  return resolve_pair_signs(
      oracle, q_bar, cfg,
      std::vector<int>(static_cast<std::size_t>(oracle.n_modes()), reference_column));
}

/// Greedily flips single entries of Q_bar while that lowers the squared
/// Frobenius norm of Q_bar Q_bar^T - I. Row signs leave this norm unchanged,
/// so a correct Q_bar is a fixed point. Returns the flipped entries.
inline std::vector<std::pair<int, int>> repair_signs(Matrix& q_bar) {
  const Eigen::Index dim = q_bar.rows();
  Matrix g = q_bar * q_bar.transpose();
  std::vector<std::pair<int, int>> flipped;
  for (Eigen::Index iter = 0; iter < dim * dim; ++iter) {
    double best = 0.0;
    Eigen::Index bm = -1, bk = -1;
    for (Eigen::Index mu = 0; mu < dim; ++mu)
      for (Eigen::Index k = 0; k < dim; ++k) {
        const double x = q_bar(mu, k);
        double delta = 0.0;
        for (Eigen::Index nu = 0; nu < dim; ++nu) {
          if (nu == mu) continue;
          const double after = g(mu, nu) - 2.0 * x * q_bar(nu, k);
          delta += 2.0 * (after * after - g(mu, nu) * g(mu, nu));
        }
        if (delta < best - 1e-12) {
          best = delta;
          bm = mu;
          bk = k;
        }
      }
    if (bm < 0) break;
    const double x = q_bar(bm, bk);
    for (Eigen::Index nu = 0; nu < dim; ++nu) {
      if (nu == bm) continue;
      g(bm, nu) -= 2.0 * x * q_bar(nu, bk);
      g(nu, bm) = g(bm, nu);
    }
    q_bar(bm, bk) = -x;
    flipped.emplace_back(static_cast<int>(bm) + 1, static_cast<int>(bk) + 1);
  }
  return flipped;
}

// ---------------------------------------------------------------------------
// Stage 4

/// t_mu = (-1)^{|S| - [mu in S]}: the sign gamma_S gamma_mu gamma_S^dagger
/// picks up relative to gamma_mu.
inline std::vector<int> row_signs_from_outcome(const IndexSet& s, int n) {
  check_index_set(s, n);
  std::vector<int> t(static_cast<std::size_t>(2 * n));
  const int size = static_cast<int>(s.size());
  for (int mu = 1; mu <= 2 * n; ++mu)
    t[static_cast<std::size_t>(mu - 1)] = (size - (contains(s, mu) ? 1 : 0)) % 2 ? -1 : 1;
  return t;
}

struct RowFix {
  Matrix q_hat;
  IndexSet outcome;
  std::vector<int> t;
};

inline RowFix fix_row_signs(UnitaryOracle& oracle, const Matrix& q_bar) {
  const int n = oracle.n_modes();
  if (q_bar.rows() != 2 * n || q_bar.cols() != 2 * n)
    throw std::invalid_argument("fix_row_signs: dimension mismatch");
  RowFix out;
  out.outcome = oracle.step3_measure(project_orthogonal(q_bar));
  out.t = row_signs_from_outcome(out.outcome, n);
  out.q_hat = q_bar;
  for (int mu = 0; mu < 2 * n; ++mu) out.q_hat.row(mu) *= out.t[static_cast<std::size_t>(mu)];
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct LearnReport {
  int n_modes = 0;
  int level = 2;
  LearnConfig config;
  Matrix q_hat;                          // before polar projection
  std::optional<OrthogonalMatrix> q_ortho;
  std::optional<DenseUnitary> unitary;   // dense estimate when available
  QueryCounts queries;
  QueryCounts closed_form;
  std::uint64_t step1_shots_per_row = 0;
  std::uint64_t correlation_shots_per_estimator = 0;
  std::vector<int> reference_columns;
  Matrix sign_margins;
  std::vector<double> pair_margins;
  double min_margin = std::numeric_limits<double>::infinity();
  std::vector<std::string> flags;
  IndexSet step3_outcome;
  std::vector<std::pair<int, int>> sign_repairs;
  std::optional<double> reconstruction_residual;
  std::optional<double> distance_to_truth;

  bool flagged() const { return !flags.empty(); }
};

namespace detail {

inline nlohmann::json finite_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const LearnReport& r) {
  nlohmann::json margins = nlohmann::json::array();
  for (Eigen::Index l = 0; l < r.sign_margins.rows(); ++l) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < r.sign_margins.cols(); ++k)
      row.push_back(detail::finite_or_null(r.sign_margins(l, k)));
    margins.push_back(std::move(row));
  }
  j = {{"n_modes", r.n_modes},
       {"level", r.level},
       {"config", r.config},
       {"q_hat", r.q_hat.size() ? matrix_to_json(r.q_hat) : nlohmann::json(nullptr)},
       {"q_ortho", r.q_ortho ? matrix_to_json(r.q_ortho->matrix()) : nlohmann::json(nullptr)},
       {"queries", r.queries},
       {"closed_form_queries", r.closed_form},
       {"shots",
        {{"step1_per_row", r.step1_shots_per_row},
         {"correlation_per_estimator", r.correlation_shots_per_estimator}}},
       {"reference_columns", r.reference_columns},
       {"diagnostics",
        {{"sign_margins", margins},
         {"pair_margins", r.pair_margins},
         {"min_margin", detail::finite_or_null(r.min_margin)},
         {"flags", r.flags},
         {"sign_repairs", r.sign_repairs},
         {"step3_outcome", r.step3_outcome}}},
       {"distance_to_truth", r.distance_to_truth ? nlohmann::json(*r.distance_to_truth)
                                                 : nlohmann::json(nullptr)}};
  if (r.reconstruction_residual)
    j["diagnostics"]["reconstruction_residual"] = *r.reconstruction_residual;
  if (r.unitary && r.level > 2) j["unitary"] = complex_matrix_to_json(r.unitary->matrix());
}

/// Full Gaussian protocol. Requires n >= 2.
inline LearnReport learn_gaussian(UnitaryOracle& oracle, const LearnConfig& cfg) {
  cfg.validate();
  const int n = oracle.n_modes();
  if (n < 2)
    throw std::invalid_argument(
        "learn_gaussian needs n >= 2: a single mode admits no pair-sign check");
  const QueryCounts start = oracle.queries();

  LearnReport r;
  r.n_modes = n;
  r.config = cfg;
  r.closed_form = gaussian_query_total(n, cfg);

  UnsignedEstimate un = learn_unsigned(oracle, cfg);
  r.step1_shots_per_row = un.shots_per_row;
  r.correlation_shots_per_estimator = cfg.exact_statistics ? 0 : correlation_shots(n, cfg);

  const std::vector<int> refs = reference_columns(un.q_tilde, cfg);
  r.reference_columns = refs;

  Matrix c = estimate_c(oracle, cfg, refs, cfg.reference_mode == ReferenceMode::per_pair);
  SignFix sf = fix_signs(un.q_tilde, c, cfg, refs);
  PairFix pf = resolve_pair_signs(oracle, sf.q_bar, cfg, refs);
  if (cfg.sign_repair) r.sign_repairs = repair_signs(sf.q_bar);
  RowFix rf = fix_row_signs(oracle, sf.q_bar);

  r.q_hat = rf.q_hat;
  r.q_ortho = project_orthogonal(rf.q_hat);
  r.step3_outcome = rf.outcome;
  r.sign_margins = sf.margins;
  r.pair_margins = pf.margins;
  r.flags = sf.flags;
  r.flags.insert(r.flags.end(), pf.flags.begin(), pf.flags.end());
  for (Eigen::Index i = 0; i < sf.margins.size(); ++i)
    r.min_margin = std::min(r.min_margin, sf.margins.data()[i]);
  for (double m : pf.margins) r.min_margin = std::min(r.min_margin, m);

  const QueryCounts now = oracle.queries();
  r.queries = {now.m - start.m, now.mdag - start.mdag};
  if (n <= dense_limit()) r.unitary = gaussian_unitary(*r.q_ortho);
  return r;
}

// ---------------------------------------------------------------------------
// Gibbs states

/// h with correlation_of_gibbs(h) = gamma, inverting each canonical block.
/// Blocks with |g| >= 1 are clipped to `clip` and reported.
inline AntisymmetricGenerator generator_from_correlation(const Matrix& gamma,
                                                         bool* clipped = nullptr,
                                                         double clip = 1.0 - 1e-6) {
  detail::require_square(gamma, "generator_from_correlation");
  auto form = detail::normal_form(0.5 * (gamma - gamma.transpose()));
  bool any = false;
  Matrix h = detail::apply_blockwise(
      form, [](const detail::SchurBlock&) { return 0.0; },
      [&](const detail::SchurBlock& b) -> Eigen::Matrix2d {
        double g = b.imag;
        if (std::abs(g) >= 1.0) {
          any = true;
          g = std::copysign(clip, g);
        }
        return detail::generator_block(-std::atanh(g) / 2.0);
      });
  if (clipped) *clipped = any;
  return AntisymmetricGenerator(0.5 * (h - h.transpose()));
}

/// Returns the sample mean of `shots` measurements of i gamma_j gamma_k.
using ExpectationSource = std::function<double(int j, int k, std::uint64_t shots)>;

struct GibbsLearnResult {
  AntisymmetricGenerator h;
  Matrix gamma_hat;
  bool clipped = false;
  std::uint64_t samples = 0;
};

inline GibbsLearnResult learn_from_gibbs(const ExpectationSource& source, int n,
                                         const LearnConfig& cfg) {
  cfg.validate();
  check_mode_count(n);
  const std::uint64_t shots = correlation_shots(n, cfg);
  Matrix gamma = Matrix::Zero(2 * n, 2 * n);
  std::uint64_t samples = 0;
  for (int j = 1; j <= 2 * n; ++j)
    for (int k = j + 1; k <= 2 * n; ++k) {
      gamma(j - 1, k - 1) = source(j, k, shots);
      gamma(k - 1, j - 1) = -gamma(j - 1, k - 1);
      samples += shots;
    }
  bool clipped = false;
  AntisymmetricGenerator h = generator_from_correlation(gamma, &clipped);
  return {h, gamma, clipped, samples};
}

/// Measurement source backed by the dense Gibbs state of a known h.
class GibbsStateSampler {
 public:
  GibbsStateSampler(const AntisymmetricGenerator& h, std::uint64_t seed)
      : gamma_(gibbs_correlation_dense(h)), rng_(seed) {}

  const Matrix& exact() const { return gamma_; }

  double operator()(int j, int k, std::uint64_t shots) {
    double mean = gamma_(j - 1, k - 1);
    std::binomial_distribution<std::uint64_t> bin(shots,
                                                  std::clamp((1.0 + mean) / 2.0, 0.0, 1.0));
    auto plus = static_cast<double>(bin(rng_));
    return (2.0 * plus - static_cast<double>(shots)) / static_cast<double>(shots);
  }

 private:
  Matrix gamma_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Hierarchy membership

inline bool membership_level2(const DenseUnitary& u, double tol = 1e-7) {
  const int n = u.n_qubits();
  Matrix q = extract_q(u);
  if (orthogonality_defect(q) > tol) return false;
  const ComplexMatrix& m = u.matrix();
  for (int mu = 1; mu <= 2 * n; ++mu) {
    ComplexMatrix image = m * monomial_times(ModeMask{1} << (mu - 1), m.adjoint());
    for (int nu = 1; nu <= 2 * n; ++nu)
      image -= q(mu - 1, nu - 1) * monomial_matrix(ModeMask{1} << (nu - 1), n);
    if (max_abs(image) > tol) return false;
  }
  return true;
}

inline constexpr int kMaxHierarchyLevel = 4;

inline bool membership_level_k(const DenseUnitary& u, int k) {
  if (k < 2) throw std::invalid_argument("hierarchy level must be >= 2");
  if (k > kMaxHierarchyLevel)
    throw SizeLimitError("hierarchy level limited to " + std::to_string(kMaxHierarchyLevel));
  if (k == 2) return membership_level2(u);
  const ComplexMatrix& m = u.matrix();
  for (int mu = 1; mu <= 2 * u.n_qubits(); ++mu) {
    ComplexMatrix image = m * monomial_times(ModeMask{1} << (mu - 1), m.adjoint());
    if (!membership_level_k(DenseUnitary(0.5 * (image + image.adjoint())), k - 1))
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Hierarchy learning

struct PhaseAlignment {
  DenseUnitary w;
  double theta = 0.0;
  bool ambiguous = false;
};

/// Removes the unknown global phase of an estimate of a Hermitian unitary.
inline PhaseAlignment phase_align(const DenseUnitary& w_est, double tol = 1e-6) {
  CoefficientVector c = pauli_decompose(w_est);
  const Complex top = c[c.argmax()];
  if (std::abs(top) < tol)
    throw DegenerateEstimateError("phase_align: every coefficient below tolerance");
  double theta = -std::arg(top);
  Complex rot = std::polar(1.0, theta);
  bool ambiguous = false;
  if (std::abs(c[0]) > tol) {
    if ((rot * c[0]).real() < 0.0) {
      rot = -rot;
      theta += std::numbers::pi;
    }
  } else {
    ambiguous = true;
  }
  return {DenseUnitary(rot * w_est.matrix()), std::remainder(theta, 2 * std::numbers::pi),
          ambiguous};
}

/// Precision and failure budget handed to each of the 2n sub-learners.
inline LearnConfig sublevel_config(const LearnConfig& cfg, int n) {
  LearnConfig sub = cfg;
  sub.eta = cfg.eta / (4.0 * n);
  sub.epsilon = cfg.epsilon / (4.0 * n);
  sub.fail_prob = cfg.fail_prob / (2.0 * n);
  return sub;
}

/// Exact query totals of learn_hierarchy.
inline QueryCounts hierarchy_query_total(int n, int k, const LearnConfig& cfg) {
  if (k == 2) return gaussian_query_total(n, cfg);
  const std::uint64_t sub = hierarchy_query_total(n, k - 1, sublevel_config(cfg, n)).total();
  const auto un = static_cast<std::uint64_t>(n);
  return QueryCounts{2 * un * sub, 2 * un * sub} + kPhaseMeasureCost;
}

/// (4n)^{k-2} times the Gaussian total at precision eta / (4n)^{k-2}.
inline double theorem2_query_formula(int n, int k, const LearnConfig& cfg) {
  const double scale = std::pow(4.0 * n, k - 2);
  LearnConfig sub = cfg;
  sub.eta = cfg.eta / scale;
  sub.epsilon = cfg.epsilon / scale;
  return scale * static_cast<double>(gaussian_query_total(n, sub).total());
}

/// Learns M at hierarchy level k in {2, 3, 4} from a dense-backed oracle.
inline LearnReport learn_hierarchy(UnitaryOracle& oracle, int k, const LearnConfig& cfg) {
  cfg.validate();
  if (k < 2) throw std::invalid_argument("hierarchy level must be >= 2");
  if (k > kMaxHierarchyLevel)
    throw SizeLimitError("hierarchy level limited to " + std::to_string(kMaxHierarchyLevel));
  const int n = oracle.n_modes();
  if (k == 2) {
    LearnReport r = learn_gaussian(oracle, cfg);
    r.level = 2;
    return r;
  }
  if (oracle.backend() != Backend::dense)
    throw std::invalid_argument("learn_hierarchy above level 2 needs a dense backend");

  const QueryCounts start = oracle.queries();
  const LearnConfig sub_cfg = sublevel_config(cfg, n);
  LearnReport r;
  r.n_modes = n;
  r.level = k;
  r.config = cfg;
  r.closed_form = hierarchy_query_total(n, k, cfg);

  std::vector<ComplexMatrix> action;
  for (int mu = 1; mu <= 2 * n; ++mu) {
    UnitaryOracle sub = oracle.conjugated_generator(mu);
    LearnReport sr = learn_hierarchy(sub, k - 1, sub_cfg);
    if (!sr.unitary)
      throw InternalConsistencyError("sub-learner returned no dense estimate");
    PhaseAlignment pa = phase_align(*sr.unitary, 1e-3);
    if (pa.ambiguous) r.flags.push_back("phase_sign_ambiguous(mu=" + std::to_string(mu) + ")");
    for (const auto& f : sr.flags)
      r.flags.push_back("mu=" + std::to_string(mu) + ":" + f);
    r.min_margin = std::min(r.min_margin, sr.min_margin);
    action.push_back(pa.w.matrix());
  }

  ActionReconstruction rec = reconstruct_from_action(action);
  r.reconstruction_residual = rec.residual;
  if (rec.residual > 0.1)
    throw InconsistentActionError("learn_hierarchy: reconstruction residual " +
                                  std::to_string(rec.residual) + " > 0.1");

  r.step3_outcome = oracle.hierarchy_phase_measure(rec.w);
  ComplexMatrix out = rec.w.matrix() * monomial_matrix(mask_of(r.step3_outcome), n);
  r.unitary = DenseUnitary(canonicalize_global_phase(out));
  r.q_hat = extract_q(*r.unitary);

  const QueryCounts now = oracle.queries();
  r.queries = {now.m - start.m, now.mdag - start.mdag};
  return r;
}

}  // namespace matchlearn
