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

// Command-line front end. Exit codes: 0 success, 1 experiment failure,
// 2 usage error.

#pragma once

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "matchlearn/experiments.hpp"
#include "matchlearn/learner.hpp"

namespace matchlearn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

struct CliOptions {
  std::vector<int> n;
  double eta = 0.02;
  double epsilon = -1.0;  // follows eta unless set
  std::uint64_t seed = 1;
  std::uint64_t trials = 0;
  std::string backend = "analytic";
  std::string out;
  std::string format = "jsonl";
  double fail_prob = 0.05;
  double hoeffding_constant = 0.5;
  int reference_column = 1;
  std::string reference_mode = "fixed";
  double margin_threshold = 1e-4;
  bool no_sign_repair = false;
  bool exact_statistics = false;
  std::vector<double> grid;
  int threads = 1;
  int level = 3;
  std::string target = "swap";
  std::string input;
};

inline LearnConfig config_from(const CliOptions& o) {
  LearnConfig c;
  c.eta = o.eta;
  c.epsilon = o.epsilon > 0.0 ? o.epsilon : o.eta;
  c.fail_prob = o.fail_prob;
  c.hoeffding_constant = o.hoeffding_constant;
  c.reference_column = o.reference_column;
  c.reference_mode = reference_mode_from_string(o.reference_mode);
  c.margin_threshold = o.margin_threshold;
  c.sign_repair = !o.no_sign_repair;
  c.exact_statistics = o.exact_statistics;
  c.validate();
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read '" + path + "'");
  return nlohmann::json::parse(in);
}

inline void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
}

/// Two-qubit targets embedded on the first two qubits of n.
inline DenseUnitary named_target(const std::string& name, int n, std::uint64_t seed) {
  if (name == "gaussian") {
    Rng rng(split_seed(seed, 0));
    return gaussian_unitary(haar_orthogonal(n, rng));
  }
  if (n < 2) throw std::invalid_argument("target '" + name + "' needs n >= 2");
  ComplexMatrix g = ComplexMatrix::Identity(4, 4);
  if (name == "swap") {
    g.setZero();
    g(0, 0) = g(1, 2) = g(2, 1) = g(3, 3) = 1.0;
  } else if (name == "cz") {
    g(3, 3) = -1.0;
  } else {
    throw std::invalid_argument("unknown target '" + name + "' (swap, cz, gaussian)");
  }
  return DenseUnitary(Eigen::kroneckerProduct(g, complex_identity(n - 2)).eval());
}

inline int run_learn_gaussian(const CliOptions& o, std::ostream& out) {
  LearnConfig cfg = config_from(o);
  const int n = o.n.empty() ? 4 : o.n.front();
  std::optional<OrthogonalMatrix> truth;
  std::optional<UnitaryOracle> oracle;
  if (!o.input.empty()) {
    nlohmann::json j = read_json_file(o.input);
    if (!j.contains("backend")) j["backend"] = o.backend;
    if (!j.contains("seed")) j["seed"] = split_seed(o.seed, 1);
    oracle = UnitaryOracle::from_json(j);
    if (j.contains("Q")) truth = OrthogonalMatrix(matrix_from_json(j.at("Q")));
  } else {
    Rng rng(split_seed(o.seed, 0));
    truth = haar_orthogonal(n, rng);
    Backend b = backend_from_string(o.backend);
    oracle = b == Backend::analytic
                 ? UnitaryOracle::analytic(*truth, split_seed(o.seed, 1))
                 : UnitaryOracle::dense(gaussian_unitary(*truth), split_seed(o.seed, 1));
  }
  LearnReport r = learn_gaussian(*oracle, cfg);
  if (truth) r.distance_to_truth = max_abs(Matrix(r.q_hat - truth->matrix()));
  emit(nlohmann::json(r).dump(2) + "\n", o.out, out);
  return kExitOk;
}

inline int run_learn_hierarchy(const CliOptions& o, std::ostream& out) {
  LearnConfig cfg = config_from(o);
  const int n = o.n.empty() ? 2 : o.n.front();
  DenseUnitary target = DenseUnitary::identity(1);
  if (!o.input.empty()) {
    nlohmann::json j = read_json_file(o.input);
    target = DenseUnitary(complex_matrix_from_json(j.at("unitary")));
  } else {
    target = named_target(o.target, n, o.seed);
  }
  UnitaryOracle oracle = UnitaryOracle::dense(target, split_seed(o.seed, 1));
  LearnReport r = learn_hierarchy(oracle, o.level, cfg);
  if (r.unitary) r.distance_to_truth = distance_D(target, *r.unitary);
  emit(nlohmann::json(r).dump(2) + "\n", o.out, out);
  return kExitOk;
}

inline int run_compile(const CliOptions& o, std::ostream& out) {
  nlohmann::json j = read_json_file(o.input);
  OrthogonalMatrix q = j.contains("Q") ? OrthogonalMatrix(matrix_from_json(j.at("Q")))
                                       : q_from_h(AntisymmetricGenerator(matrix_from_json(j.at("h"))));
  MatchgateCircuit c = compile_to_givens(q);
  nlohmann::json result = {{"circuit", circuit_to_json(c)},
                           {"gate_count", c.gates.size()},
                           {"recompose_error", max_abs(Matrix(recompose(c) - q.matrix()))}};
  emit(result.dump(2) + "\n", o.out, out);
  return kExitOk;
}

inline int run_experiment_command(const CliOptions& o, ExperimentKind kind,
                                  const std::vector<int>& default_n,
                                  std::uint64_t default_trials, std::ostream& out) {
  ExperimentSpec s;
  s.kind = kind;
  s.n_list = o.n.empty() ? default_n : o.n;
  s.trial_count = o.trials ? o.trials : default_trials;
  s.seed = o.seed;
  s.output_path = o.out;
  s.format = output_format_from_string(o.format);
  s.threads = o.threads;
  s.grid = o.grid;
  if (kind == ExperimentKind::learn_benchmark) {
    s.learn = config_from(o);
    if (s.grid.empty()) s.grid = {s.learn.eta};
  }
  ExperimentRecord r = run_experiment(s);
  if (o.out.empty())
    out << (s.format == OutputFormat::jsonl ? nlohmann::json(r).dump() + "\n" : record_to_csv(r));
  else
    write_record(r, o.out, s.format);
  return r.failed() ? kExitFailure : kExitOk;
}

}  // namespace detail

/// Entry point of the matchlearn tool; flags after the subcommand are
/// accepted, and explicit flags override --config values.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"matchlearn: learning matchgate unitaries from query access", "matchlearn"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "key=value file mirroring the long flags");
  app.allow_config_extras(false);
  app.fallthrough();
  app.require_subcommand(1);

  detail::CliOptions o;
  app.add_option("--n", o.n, "mode count(s); comma separated for experiments")
      ->delimiter(',')
      ->check(CLI::Range(1, kMaxModes));
  app.add_option("--eta", o.eta, "entry precision")->check(CLI::PositiveNumber);
  app.add_option("--epsilon", o.epsilon, "correlation precision (default: eta)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--trials", o.trials, "trial count")->check(CLI::PositiveNumber);
  app.add_option("--backend", o.backend, "oracle backend")
      ->check(CLI::IsMember({"analytic", "dense"}));
  app.add_option("--out", o.out, "output file (appended); stdout when empty");
  app.add_option("--format", o.format, "experiment output format")
      ->check(CLI::IsMember({"jsonl", "csv"}));
  app.add_option("--fail-prob", o.fail_prob, "failure probability");
  app.add_option("--hoeffding-constant", o.hoeffding_constant, "shot-count multiplier");
  app.add_option("--reference-column", o.reference_column, "fixed reference column j");
  app.add_option("--reference-mode", o.reference_mode, "reference column choice")
      ->check(CLI::IsMember({"fixed", "auto", "per-pair"}));
  app.add_option("--margin-threshold", o.margin_threshold, "sign-margin flag threshold");
  app.add_flag("--no-sign-repair", o.no_sign_repair, "skip orthogonality sign repair");
  app.add_flag("--exact-statistics", o.exact_statistics, "use exact expectations");
  app.add_option("--grid", o.grid, "kappa or eta grid, comma separated")->delimiter(',');
  app.add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--level", o.level, "hierarchy level k")->check(CLI::Range(2, kMaxHierarchyLevel));
  app.add_option("--target", o.target, "hierarchy target: swap, cz or gaussian");
  app.add_option("--input", o.input, "JSON oracle or matrix file");

  auto* learn_g = app.add_subcommand("learn-gaussian", "learn a Gaussian unitary, print the report");
  auto* learn_h = app.add_subcommand("learn-hierarchy", "learn a hierarchy-level unitary");
  auto* bounds_sign = app.add_subcommand("bounds-sign", "sign-margin CDFs under the Haar measure");
  auto* bounds_error = app.add_subcommand("bounds-error", "error propagation through log Q");
  auto* bench = app.add_subcommand("bench-queries", "learning success and query totals");
  auto* oracle_check = app.add_subcommand("oracle-check", "analytic vs dense backend");
  auto* compile = app.add_subcommand("compile", "Givens compilation (check, or --input file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  try {
    if (learn_g->parsed()) return detail::run_learn_gaussian(o, out);
    if (learn_h->parsed()) return detail::run_learn_hierarchy(o, out);
    if (bounds_sign->parsed())
      return detail::run_experiment_command(o, ExperimentKind::sign_bound_mc, {4}, 100000, out);
    if (bounds_error->parsed())
      return detail::run_experiment_command(o, ExperimentKind::logm_error_mc, {2, 3, 4, 5}, 200,
                                            out);
    if (bench->parsed())
      return detail::run_experiment_command(o, ExperimentKind::learn_benchmark, {2, 3, 4}, 100,
                                            out);
    if (oracle_check->parsed())
      return detail::run_experiment_command(o, ExperimentKind::oracle_check, {2, 3}, 50, out);
    if (compile->parsed()) {
      if (!o.input.empty()) return detail::run_compile(o, out);
      return detail::run_experiment_command(o, ExperimentKind::compile_check, {2, 3, 4, 5, 6},
                                            100, out);
    }
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace matchlearn
