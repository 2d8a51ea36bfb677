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

// Seeded Monte-Carlo drivers and result persistence.
//
// Every trial draws from its own generator, seeded by split_seed over
// (master seed, n index, grid index, trial), so results do not depend on the
// thread count or on scheduling.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "matchlearn/common.hpp"
#include "matchlearn/dense.hpp"
#include "matchlearn/gaussian.hpp"
#include "matchlearn/learner.hpp"
#include "matchlearn/oracle.hpp"

#ifndef MATCHLEARN_GIT_REVISION
#define MATCHLEARN_GIT_REVISION "unknown"
#endif

namespace matchlearn {

enum class ExperimentKind { sign_bound_mc, logm_error_mc, learn_benchmark, oracle_check, compile_check };
enum class OutputFormat { jsonl, csv };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::sign_bound_mc: return "sign_bound_mc";
    case ExperimentKind::logm_error_mc: return "logm_error_mc";
    case ExperimentKind::learn_benchmark: return "learn_benchmark";
    case ExperimentKind::oracle_check: return "oracle_check";
    case ExperimentKind::compile_check: return "compile_check";
  }
  return "";
}

inline std::string to_string(OutputFormat f) { return f == OutputFormat::csv ? "csv" : "jsonl"; }

inline OutputFormat output_format_from_string(const std::string& s) {
  if (s == "jsonl") return OutputFormat::jsonl;
  if (s == "csv") return OutputFormat::csv;
  throw std::invalid_argument("unknown output format '" + s + "'");
}

/// log-spaced grid with `per_decade` points per decade, both ends included.
inline std::vector<double> log_grid(double lo, double hi, int per_decade) {
  if (!(lo > 0.0) || !(hi >= lo) || per_decade < 1)
    throw std::invalid_argument("log_grid: need 0 < lo <= hi and per_decade >= 1");
  const double decades = std::log10(hi / lo);
  const int steps = static_cast<int>(std::lround(decades * per_decade));
  std::vector<double> out;
  for (int i = 0; i <= steps; ++i)
    out.push_back(lo * std::pow(10.0, decades * i / std::max(steps, 1)));
  if (steps == 0) out.resize(1);
  return out;
}

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::learn_benchmark;
  std::vector<int> n_list{2};
  std::uint64_t trial_count = 100;
  /// kappa grid for sign_bound_mc, eta grid otherwise; empty picks a default.
  std::vector<double> grid;
  std::uint64_t seed = 1;
  std::string output_path;
  OutputFormat format = OutputFormat::jsonl;
  /// learn_benchmark settings; eta and epsilon are overridden by the grid.
  LearnConfig learn;
  double success_multiple = 5.0;
  int threads = 1;

  std::vector<double> effective_grid() const {
    if (!grid.empty()) return grid;
    switch (kind) {
      case ExperimentKind::sign_bound_mc: return log_grid(1e-6, 1e-2, 4);
      case ExperimentKind::logm_error_mc: return log_grid(1e-4, 1e-2, 2);
      case ExperimentKind::learn_benchmark: return {learn.eta};
      default: return {};
    }
  }

  void validate() const {
    if (trial_count < 1) throw std::invalid_argument("trial_count must be >= 1");
    if (n_list.empty()) throw std::invalid_argument("n_list must not be empty");
    for (int n : n_list) check_mode_count(n);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!(grid[i] > 0.0)) throw std::invalid_argument("grid values must be > 0");
      if (i > 0 && !(grid[i] > grid[i - 1]))
        throw std::invalid_argument("grid must be strictly increasing");
    }
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (!(success_multiple > 0.0)) throw std::invalid_argument("success_multiple must be > 0");
    if (kind == ExperimentKind::learn_benchmark) {
      learn.validate();
      for (int n : n_list)
        if (n < 2) throw std::invalid_argument("learn_benchmark needs n >= 2");
    }
    if (kind == ExperimentKind::logm_error_mc || kind == ExperimentKind::oracle_check)
      for (int n : n_list) require_dense(n);
  }
};

inline void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  j = {{"kind", to_string(s.kind)},
       {"n_list", s.n_list},
       {"trial_count", s.trial_count},
       {"grid", s.effective_grid()},
       {"seed", s.seed},
       {"output_path", s.output_path},
       {"format", to_string(s.format)}};
  if (s.kind == ExperimentKind::learn_benchmark) {
    j["learn"] = s.learn;
    j["success_multiple"] = s.success_multiple;
  }
}

/// One experiment's output: a numeric table with fixed column order plus a
/// JSON summary. NaN cells serialize as null.
struct ExperimentRecord {
  ExperimentSpec spec;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::string> failures;
  double wall_seconds = 0.0;
  std::string version = kVersion;
  std::string revision = MATCHLEARN_GIT_REVISION;

  bool failed() const { return !failures.empty(); }

  /// Value of `column` in row `row`.
  double at(std::size_t row, const std::string& column) const {
    auto it = std::find(columns.begin(), columns.end(), column);
    if (it == columns.end()) throw std::out_of_range("no column '" + column + "'");
    return rows.at(row)[static_cast<std::size_t>(it - columns.begin())];
  }
};

inline void to_json(nlohmann::json& j, const ExperimentRecord& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json out = nlohmann::json::array();
    for (double v : row) out.push_back(detail::finite_or_null(v));
    rows.push_back(std::move(out));
  }
  j = {{"version", r.version},
       {"revision", r.revision},
       {"spec", r.spec},
       {"columns", r.columns},
       {"rows", rows},
       {"summary", r.summary},
       {"failed", r.failed()},
       {"failures", r.failures},
       {"wall_seconds", r.wall_seconds}};
}

inline std::string format_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string record_to_csv(const ExperimentRecord& r, bool header = true) {
  std::string out;
  if (header) {
    for (std::size_t c = 0; c < r.columns.size(); ++c)
      out += (c ? "," : "") + r.columns[c];
    out += '\n';
  }
  for (const auto& row : r.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_number(row[c]);
    out += '\n';
  }
  return out;
}

/// Appends the record to `path`: one JSON line, or CSV rows with a header
/// when the file is new or empty.
inline void write_record(const ExperimentRecord& r, const std::string& path, OutputFormat format) {
  bool fresh = true;
  {
    std::ifstream probe(path, std::ios::binary | std::ios::ate);
    fresh = !probe || probe.tellg() <= 0;
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  if (format == OutputFormat::jsonl)
    out << nlohmann::json(r).dump() << '\n';
  else
    out << record_to_csv(r, fresh);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Statistics helpers

/// Nearest-rank quantile; NaN for empty input.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

struct SlopeFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  int points = 0;
  bool dropped_first_decade = false;
};

inline void to_json(nlohmann::json& j, const SlopeFit& f) {
  j = {{"slope", detail::finite_or_null(f.slope)},
       {"intercept", detail::finite_or_null(f.intercept)},
       {"points", f.points},
       {"dropped_first_decade", f.dropped_first_decade}};
}

/// Least-squares line through (log x, log y) over points with x, y > 0.
inline SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
    ++m;
  }
  SlopeFit f;
  f.points = m;
  double den = m * sxx - sx * sx;
  if (m < 2 || std::abs(den) < 1e-300) return f;
  f.slope = (m * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / m;
  return f;
}

/// Slope of log CDF against log kappa. The smallest-kappa decade is dropped
/// when fewer than 30 samples fall below its upper end.
inline SlopeFit fit_cdf_slope(const std::vector<double>& kappa,
                              const std::vector<std::uint64_t>& hits, std::uint64_t trials) {
  if (kappa.empty()) return {};
  const double decade_end = kappa.front() * 10.0 * (1.0 + 1e-9);
  std::uint64_t decade_hits = 0;
  for (std::size_t i = 0; i < kappa.size(); ++i)
    if (kappa[i] <= decade_end) decade_hits = hits[i];
  const bool drop = decade_hits < 30;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < kappa.size(); ++i) {
    if (drop && kappa[i] < kappa.front() * 10.0 * (1.0 - 1e-9)) continue;
    x.push_back(kappa[i]);
    y.push_back(static_cast<double>(hits[i]) / static_cast<double>(trials));
  }
  SlopeFit f = fit_loglog(x, y);
  f.dropped_first_decade = drop;
  return f;
}

/// Runs f(i) for i in [0, count) on `threads` workers. The first exception
/// is rethrown after all workers finish.
template <class F>
void parallel_trials(std::size_t count, int threads, F&& f) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_lock;
  std::vector<std::thread> pool;
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> g(error_lock);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace detail {

inline std::uint64_t trial_seed(std::uint64_t master, std::size_t n_index, std::size_t grid_index,
                                std::uint64_t trial) {
  return split_seed(split_seed(split_seed(master, n_index), grid_index), trial);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void require_kind(const ExperimentSpec& s, ExperimentKind k) {
  if (s.kind != k)
    throw std::invalid_argument("expected kind " + to_string(k) + ", got " + to_string(s.kind));
  s.validate();
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace detail

// ---------------------------------------------------------------------------
// Sign-decision quantities under the Haar measure

struct SignQuantities {
  double f1, f2, f3;
};

/// F1 = |Q11 Q22|, F2 = |Q21 Q12|, F3 = |Q11 Q22 - Q21 Q12|.
inline SignQuantities sign_quantities(const OrthogonalMatrix& q) {
  const Matrix& m = q.matrix();
  return {std::abs(m(0, 0) * m(1, 1)), std::abs(m(1, 0) * m(0, 1)),
          std::abs(m(0, 0) * m(1, 1) - m(1, 0) * m(0, 1))};
}

/// Columns: n, kappa, cdf_f1, cdf_f2, cdf_f3, hits_f1, hits_f2, hits_f3.
inline ExperimentRecord run_sign_bound_mc(const ExperimentSpec& spec) {
  detail::require_kind(spec, ExperimentKind::sign_bound_mc);
  detail::Stopwatch clock;
  ExperimentRecord rec;
  rec.spec = spec;
  rec.columns = {"n", "kappa", "cdf_f1", "cdf_f2", "cdf_f3", "hits_f1", "hits_f2", "hits_f3"};
  const std::vector<double> kappa = spec.effective_grid();
  nlohmann::json per_n = nlohmann::json::array();

  for (std::size_t ni = 0; ni < spec.n_list.size(); ++ni) {
    const int n = spec.n_list[ni];
    std::vector<SignQuantities> f(spec.trial_count);
    parallel_trials(f.size(), spec.threads, [&](std::size_t t) {
      Rng rng(detail::trial_seed(spec.seed, ni, 0, t));
      f[t] = sign_quantities(haar_orthogonal(n, rng));
    });
    std::array<std::vector<double>, 3> sorted;
    for (const auto& s : f) {
      sorted[0].push_back(s.f1);
      sorted[1].push_back(s.f2);
      sorted[2].push_back(s.f3);
    }
    for (auto& v : sorted) std::sort(v.begin(), v.end());
    std::array<std::vector<std::uint64_t>, 3> hits;
    for (double k : kappa)
      for (int c = 0; c < 3; ++c)
        hits[c].push_back(static_cast<std::uint64_t>(
            std::lower_bound(sorted[c].begin(), sorted[c].end(), k) - sorted[c].begin()));

    bool monotone = true;
    const auto trials = static_cast<double>(spec.trial_count);
    for (std::size_t i = 0; i < kappa.size(); ++i) {
      rec.rows.push_back({static_cast<double>(n), kappa[i], hits[0][i] / trials,
                          hits[1][i] / trials, hits[2][i] / trials,
                          static_cast<double>(hits[0][i]), static_cast<double>(hits[1][i]),
                          static_cast<double>(hits[2][i])});
      for (int c = 0; c < 3 && i > 0; ++c) monotone &= hits[c][i] >= hits[c][i - 1];
    }
    per_n.push_back({{"n", n},
                     {"slope_f1", fit_cdf_slope(kappa, hits[0], spec.trial_count)},
                     {"slope_f2", fit_cdf_slope(kappa, hits[1], spec.trial_count)},
                     {"slope_f3", fit_cdf_slope(kappa, hits[2], spec.trial_count)},
                     {"monotone", monotone}});
    if (!monotone) rec.failures.push_back("non-monotone CDF at n=" + std::to_string(n));
  }
  rec.summary["fits"] = per_n;
  rec.wall_seconds = clock.seconds();
  return rec;
}

// ---------------------------------------------------------------------------
// Error propagation through the matrix logarithm

struct PerturbationTrial {
  double distance = 0.0;
  int redraws = 0;
};

/// Adds i.i.d. uniform(-eta, eta) noise to Q, polar-projects, and returns
/// D(M_Q, M_Q') with both unitaries built as exp(iH) from the principal
/// logarithm. Throws BranchAmbiguityError when either logarithm is ambiguous.
inline double perturbed_distance(const OrthogonalMatrix& q, double eta, Rng& rng) {
  std::uniform_real_distribution<double> noise(-eta, eta);
  Matrix e(q.dim(), q.dim());
  for (Eigen::Index c = 0; c < e.cols(); ++c)
    for (Eigen::Index r = 0; r < e.rows(); ++r) e(r, c) = eta > 0.0 ? noise(rng) : 0.0;
  OrthogonalMatrix qp = project_orthogonal(q.matrix() + e);
  DenseUnitary m = unitary_from_h(h_from_q(q));
  DenseUnitary mp = unitary_from_h(h_from_q(qp));
  return distance_D(m, mp);
}

/// Columns: n, eta, trials, redraws, d_median, d_p95, d_max, p95_over_n3eta.
inline ExperimentRecord run_logm_error_mc(const ExperimentSpec& spec) {
  detail::require_kind(spec, ExperimentKind::logm_error_mc);
  detail::Stopwatch clock;
  ExperimentRecord rec;
  rec.spec = spec;
  rec.columns = {"n", "eta", "trials", "redraws", "d_median", "d_p95", "d_max", "p95_over_n3eta"};
  const std::vector<double> etas = spec.effective_grid();

  std::vector<double> fit_n, fit_eta, fit_d;
  nlohmann::json per_n = nlohmann::json::array();
  for (std::size_t ni = 0; ni < spec.n_list.size(); ++ni) {
    const int n = spec.n_list[ni];
    std::vector<double> medians;
    for (std::size_t ei = 0; ei < etas.size(); ++ei) {
      std::vector<PerturbationTrial> out(spec.trial_count);
      parallel_trials(out.size(), spec.threads, [&](std::size_t t) {
        Rng rng(detail::trial_seed(spec.seed, ni, ei, t));
        for (;;) {
          try {
            OrthogonalMatrix q = haar_special_orthogonal(n, rng);
            out[t].distance = perturbed_distance(q, etas[ei], rng);
            return;
          } catch (const BranchAmbiguityError&) {
            ++out[t].redraws;
          }
        }
      });
      std::vector<double> d;
      double redraws = 0;
      for (const auto& t : out) {
        d.push_back(t.distance);
        redraws += t.redraws;
      }
      const double med = quantile(d, 0.5), p95 = quantile(d, 0.95);
      const double n3eta = std::pow(n, 3) * etas[ei];
      rec.rows.push_back({static_cast<double>(n), etas[ei], static_cast<double>(d.size()),
                          redraws, med, p95, *std::max_element(d.begin(), d.end()),
                          p95 / n3eta});
      medians.push_back(med);
      fit_n.push_back(n);
      fit_eta.push_back(etas[ei]);
      fit_d.push_back(med);
    }
    per_n.push_back({{"n", n}, {"eta_fit", fit_loglog(etas, medians)}});
  }

  // D ~ C n^a eta^b on the medians; constant regressors are left out.
  const bool vary_n = spec.n_list.size() > 1, vary_eta = etas.size() > 1;
  const int cols = 1 + vary_n + vary_eta;
  Matrix a(static_cast<Eigen::Index>(fit_d.size()), cols);
  Vector y(static_cast<Eigen::Index>(fit_d.size()));
  Eigen::Index used = 0;
  for (std::size_t i = 0; i < fit_d.size(); ++i) {
    if (!(fit_d[i] > 0.0)) continue;
    int c = 0;
    a(used, c++) = 1.0;
    if (vary_n) a(used, c++) = std::log(fit_n[i]);
    if (vary_eta) a(used, c++) = std::log(fit_eta[i]);
    y(used++) = std::log(fit_d[i]);
  }
  nlohmann::json fit = {{"log_c", nullptr}, {"n_exponent", nullptr}, {"eta_exponent", nullptr}};
  if (used >= cols) {
    Vector coef = a.topRows(used).colPivHouseholderQr().solve(y.head(used));
    int c = 0;
    fit["log_c"] = coef(c++);
    if (vary_n) fit["n_exponent"] = coef(c++);
    if (vary_eta) fit["eta_exponent"] = coef(c++);
  }
  rec.summary["fit"] = fit;
  rec.summary["per_n"] = per_n;

  // Bound check: p95 <= 3 C n^3 eta with C calibrated at the smallest n.
  const int n0 = *std::min_element(spec.n_list.begin(), spec.n_list.end());
  nlohmann::json bound = nlohmann::json::array();
  for (std::size_t ei = 0; ei < etas.size(); ++ei) {
    double c0 = detail::kNaN, worst = 0.0;
    for (std::size_t r = 0; r < rec.rows.size(); ++r)
      if (rec.rows[r][0] == n0 && rec.rows[r][1] == etas[ei]) c0 = rec.rows[r][7];
    for (std::size_t r = 0; r < rec.rows.size(); ++r)
      if (rec.rows[r][1] == etas[ei]) worst = std::max(worst, rec.rows[r][7] / c0);
    bound.push_back({{"eta", etas[ei]},
                     {"calibration_n", n0},
                     {"c_calibrated", detail::finite_or_null(c0)},
                     {"max_ratio", detail::finite_or_null(worst)}});
  }
  rec.summary["bound_check"] = bound;
  rec.wall_seconds = clock.seconds();
  return rec;
}

// ---------------------------------------------------------------------------
// Learning benchmark

/// Columns: n, eta, epsilon, trials, success_rate, query_match_rate,
/// step1_shots, correlation_shots, m_queries, mdag_queries, flagged_rate,
/// min_margin_median, d_median, d_p95, d_max. Distances are NaN beyond the
/// dense limit.
inline ExperimentRecord run_learn_benchmark(const ExperimentSpec& spec) {
  detail::require_kind(spec, ExperimentKind::learn_benchmark);
  detail::Stopwatch clock;
  ExperimentRecord rec;
  rec.spec = spec;
  rec.columns = {"n", "eta", "epsilon", "trials", "success_rate", "query_match_rate",
                 "step1_shots", "correlation_shots", "m_queries", "mdag_queries",
                 "flagged_rate", "min_margin_median", "d_median", "d_p95", "d_max"};
  const std::vector<double> etas = spec.effective_grid();

  struct Trial {
    bool success = false, queries_match = false, flagged = false;
    double min_margin = 0.0, distance = detail::kNaN;
  };
  for (std::size_t ni = 0; ni < spec.n_list.size(); ++ni) {
    const int n = spec.n_list[ni];
    for (std::size_t ei = 0; ei < etas.size(); ++ei) {
      LearnConfig cfg = spec.learn;
      cfg.eta = etas[ei];
      cfg.epsilon = etas[ei];
      const QueryCounts closed = gaussian_query_total(n, cfg);
      std::vector<Trial> out(spec.trial_count);
      parallel_trials(out.size(), spec.threads, [&](std::size_t t) {
        const std::uint64_t s = detail::trial_seed(spec.seed, ni, ei, t);
        Rng rng(split_seed(s, 0));
        OrthogonalMatrix q = haar_orthogonal(n, rng);
        UnitaryOracle oracle = UnitaryOracle::analytic(q, split_seed(s, 1));
        LearnReport r = learn_gaussian(oracle, cfg);
        Trial& tr = out[t];
        tr.success = max_abs(Matrix(r.q_hat - q.matrix())) <= spec.success_multiple * cfg.eta;
        tr.queries_match = r.queries == closed && oracle.queries() == closed;
        tr.flagged = r.flagged();
        tr.min_margin = r.min_margin;
        if (r.unitary) tr.distance = distance_D(gaussian_unitary(q), *r.unitary);
      });
      double ok = 0, match = 0, flagged = 0;
      std::vector<double> margins, d;
      for (const auto& tr : out) {
        ok += tr.success;
        match += tr.queries_match;
        flagged += tr.flagged;
        margins.push_back(tr.min_margin);
        if (std::isfinite(tr.distance)) d.push_back(tr.distance);
      }
      const double trials = static_cast<double>(out.size());
      rec.rows.push_back({static_cast<double>(n), cfg.eta, cfg.epsilon, trials, ok / trials,
                          match / trials, static_cast<double>(step1_shots(n, cfg)),
                          static_cast<double>(correlation_shots(n, cfg)),
                          static_cast<double>(closed.m), static_cast<double>(closed.mdag),
                          flagged / trials, quantile(margins, 0.5), quantile(d, 0.5),
                          quantile(d, 0.95),
                          d.empty() ? detail::kNaN : *std::max_element(d.begin(), d.end())});
      if (match < trials)
        rec.failures.push_back("query totals differ from the closed form at n=" +
                               std::to_string(n));
    }
  }
  rec.wall_seconds = clock.seconds();
  return rec;
}

// ---------------------------------------------------------------------------
// Backend equivalence

/// Haar draw from O(2n) conditioned on the sign of the determinant.
inline OrthogonalMatrix haar_orthogonal_with_det(int n_modes, int det, Rng& rng) {
  OrthogonalMatrix q = haar_orthogonal(n_modes, rng);
  if (q.determinant() == det) return q;
  Matrix m = q.matrix();
  m.row(m.rows() - 1) *= -1.0;
  return OrthogonalMatrix(m);
}

struct BackendComparison {
  double step1_tv = 0.0;
  double correlation_tv = 0.0;
  double step3_tv = 0.0;

  double max() const { return std::max({step1_tv, correlation_tv, step3_tv}); }
};

/// Total-variation distances between the analytic and dense backends for Q.
/// Correlations compare +-1 outcome laws; step3 uses Q_bar = diag(t) Q with
/// row signs t drawn from rng.
inline BackendComparison compare_backends(const OrthogonalMatrix& q, Rng& rng) {
  const int n = q.n_modes(), dim = q.dim();
  UnitaryOracle a = UnitaryOracle::analytic(q, 0);
  UnitaryOracle d = UnitaryOracle::dense(gaussian_unitary(q), 0);
  BackendComparison out;
  for (int mu = 1; mu <= dim; ++mu) {
    auto pa = a.step1_distribution(mu), pd = d.step1_distribution(mu);
    double tv = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) tv += std::abs(pa[i] - pd[i]);
    out.step1_tv = std::max(out.step1_tv, tv / 2.0);
  }
  for (int l = 0; l <= n; ++l)
    for (int j = 1; j <= dim; ++j)
      for (int k = 1; k <= dim; ++k) {
        if (j == k) continue;
        Prep p{l};
        double diff = std::abs(a.correlation_mean(j, k, p) - d.correlation_mean(j, k, p));
        out.correlation_tv = std::max(out.correlation_tv, diff / 2.0);
      }
  std::bernoulli_distribution coin(0.5);
  Vector t(dim);
  for (int mu = 0; mu < dim; ++mu) t(mu) = coin(rng) ? -1.0 : 1.0;
  OrthogonalMatrix qbar(t.asDiagonal() * q.matrix());
  auto pd = d.step3_distribution(qbar);
  ModeMask outcome = mask_of(a.step3_signed_outcome(qbar));
  out.step3_tv = 1.0 - pd[static_cast<std::size_t>(outcome)];
  return out;
}

/// Columns: n, trials, det_minus_trials, step1_tv_max, correlation_tv_max,
/// step3_tv_max. Odd trials use det Q = -1. TV above 1e-6 fails the record.
inline ExperimentRecord run_oracle_check(const ExperimentSpec& spec) {
  detail::require_kind(spec, ExperimentKind::oracle_check);
  detail::Stopwatch clock;
  ExperimentRecord rec;
  rec.spec = spec;
  rec.columns = {"n", "trials", "det_minus_trials", "step1_tv_max", "correlation_tv_max",
                 "step3_tv_max"};
  double worst = 0.0;
  for (std::size_t ni = 0; ni < spec.n_list.size(); ++ni) {
    const int n = spec.n_list[ni];
    std::vector<BackendComparison> out(spec.trial_count);
    parallel_trials(out.size(), spec.threads, [&](std::size_t t) {
      Rng rng(detail::trial_seed(spec.seed, ni, 0, t));
      OrthogonalMatrix q = haar_orthogonal_with_det(n, t % 2 ? -1 : 1, rng);
      out[t] = compare_backends(q, rng);
    });
    BackendComparison m;
    for (const auto& c : out) {
      m.step1_tv = std::max(m.step1_tv, c.step1_tv);
      m.correlation_tv = std::max(m.correlation_tv, c.correlation_tv);
      m.step3_tv = std::max(m.step3_tv, c.step3_tv);
    }
    worst = std::max(worst, m.max());
    rec.rows.push_back({static_cast<double>(n), static_cast<double>(out.size()),
                        static_cast<double>(out.size() / 2), m.step1_tv, m.correlation_tv,
                        m.step3_tv});
  }
  rec.summary["max_tv"] = worst;
  if (worst > 1e-6) rec.failures.push_back("backend TV " + format_number(worst) + " > 1e-6");
  rec.wall_seconds = clock.seconds();
  return rec;
}

// ---------------------------------------------------------------------------
// Compiler check

/// Columns: n, trials, max_recompose_error, max_gates, gate_bound. The bound
/// is kGivensGateConstant * n^3.
inline ExperimentRecord run_compile_check(const ExperimentSpec& spec) {
  detail::require_kind(spec, ExperimentKind::compile_check);
  detail::Stopwatch clock;
  ExperimentRecord rec;
  rec.spec = spec;
  rec.columns = {"n", "trials", "max_recompose_error", "max_gates", "gate_bound"};
  for (std::size_t ni = 0; ni < spec.n_list.size(); ++ni) {
    const int n = spec.n_list[ni];
    std::vector<double> err(spec.trial_count), gates(spec.trial_count);
    parallel_trials(err.size(), spec.threads, [&](std::size_t t) {
      Rng rng(detail::trial_seed(spec.seed, ni, 0, t));
      OrthogonalMatrix q = haar_orthogonal(n, rng);
      MatchgateCircuit c = compile_to_givens(q);
      err[t] = max_abs(Matrix(recompose(c) - q.matrix()));
      gates[t] = static_cast<double>(c.gates.size());
    });
    const double e = *std::max_element(err.begin(), err.end());
    const double g = *std::max_element(gates.begin(), gates.end());
    const double bound = kGivensGateConstant * std::pow(n, 3);
    rec.rows.push_back({static_cast<double>(n), static_cast<double>(err.size()), e, g, bound});
    if (e > 1e-8) rec.failures.push_back("recomposition error at n=" + std::to_string(n));
    if (g > bound) rec.failures.push_back("gate count above bound at n=" + std::to_string(n));
  }
  rec.summary["gate_constant"] = kGivensGateConstant;
  rec.wall_seconds = clock.seconds();
  return rec;
}

inline ExperimentRecord run_experiment(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case ExperimentKind::sign_bound_mc: return run_sign_bound_mc(spec);
    case ExperimentKind::logm_error_mc: return run_logm_error_mc(spec);
    case ExperimentKind::learn_benchmark: return run_learn_benchmark(spec);
    case ExperimentKind::oracle_check: return run_oracle_check(spec);
    case ExperimentKind::compile_check: return run_compile_check(spec);
  }
  throw std::invalid_argument("unknown experiment kind");
}

}  // namespace matchlearn
