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

// Learns a random four-mode Gaussian unitary from sampled queries and
// compares the estimate with the hidden truth.

#include <cstdio>

#include "matchlearn/matchlearn.hpp"

int main() {
  using namespace matchlearn;

  Rng rng(2026);
  OrthogonalMatrix truth = haar_orthogonal(4, rng);
  UnitaryOracle oracle = UnitaryOracle::analytic(truth, 7);

  LearnConfig cfg;
  cfg.eta = 0.02;
  cfg.epsilon = 0.02;
  cfg.reference_mode = ReferenceMode::per_pair;

  LearnReport report = learn_gaussian(oracle, cfg);
  const double entry_error = max_abs(Matrix(report.q_hat - truth.matrix()));
  const double d = distance_D(gaussian_unitary(truth), *report.unitary);

  std::printf("queries: M=%llu  M^dagger=%llu  (closed form M=%llu  M^dagger=%llu)\n",
              static_cast<unsigned long long>(report.queries.m),
              static_cast<unsigned long long>(report.queries.mdag),
              static_cast<unsigned long long>(report.closed_form.m),
              static_cast<unsigned long long>(report.closed_form.mdag));
  std::printf("max |Q_hat - Q| = %.4f   D(M_Q, M_Q_hat) = %.4f   flags = %zu\n", entry_error, d,
              report.flags.size());

  MatchgateCircuit circuit = compile_to_givens(*report.q_ortho);
  std::printf("compiled estimate: %zu gates\n", circuit.gates.size());
  return 0;
}
