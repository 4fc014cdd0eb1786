/*
   Copyright 2026 The photonbox authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <vector>

#include "photonbox/fock.hpp"
#include "photonbox/rng.hpp"

namespace photonbox {

using OutcomeSequence = std::vector<Outcome>;

/// V_n(rho) = f(<n|rho|n>). A sub-martingale of the open-loop chain.
inline double population_convex_v(const CMatrix& rho, int n) {
  return convex_f(population(rho, n));
}

/// W_n(rho) = <n|rho|n> (1 - <n|rho|n>). Vanishes exactly on the limit set.
inline double population_spread_w(const CMatrix& rho, int n) {
  const double p = population(rho, n);
  return p * (1.0 - p);
}

struct OpenStep {
  CMatrix state;
  Outcome outcome;
};

/// One open-loop transition: sample the detection from the current state
/// (g on the low end of the uniform draw), apply the jump, repair.
inline OpenStep step_open(const FockOperators& ops, const CMatrix& rho, RngStream& rng) {
  const double pg = outcome_probability(ops, Outcome::g, rho);
  const Outcome s = rng.uniform01() < pg ? Outcome::g : Outcome::e;
  return {repair(jump_map(ops, s, rho).state), s};
}

/// |E[<n|rho'|n>] - <n|rho|n>| by exact two-outcome enumeration.
inline double martingale_check(const FockOperators& ops, const CMatrix& rho, int n) {
  const JumpResult jg = jump_map(ops, Outcome::g, rho);
  const JumpResult je = jump_map(ops, Outcome::e, rho);
  const double expected =
      jg.probability * population(jg.state, n) + je.probability * population(je.state, n);
  return std::abs(expected - population(rho, n));
}

struct SubmartingaleGap {
  double enumerated = 0.0;   // E[V_n(rho')] - V_n(rho) over both outcomes
  double closed_form = 0.0;  // Pg Pe <n|rho|n>^2 (cos^2/Pg - sin^2/Pe)^2 / 2
};

/// One-step drift of V_n, both by enumeration and by its closed form.
inline SubmartingaleGap submartingale_gap_vn(const FockOperators& ops, const CMatrix& rho,
                                             int n) {
  const JumpResult jg = jump_map(ops, Outcome::g, rho);
  const JumpResult je = jump_map(ops, Outcome::e, rho);
  SubmartingaleGap gap;
  gap.enumerated = jg.probability * population_convex_v(jg.state, n) +
                   je.probability * population_convex_v(je.state, n) -
                   population_convex_v(rho, n);
  const double p = population(rho, n);
  const double cg = ops.cos_phi(n) * ops.cos_phi(n);
  const double ce = ops.sin_phi(n) * ops.sin_phi(n);
  const double diff = cg / jg.probability - ce / je.probability;
  gap.closed_form = 0.5 * jg.probability * je.probability * p * p * diff * diff;
  return gap;
}

/// Full-rank random state A A' / tr(A A') with standard complex normal A.
inline CMatrix random_density(int dim, RngStream& rng) {
  CMatrix a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = rng.complex_gaussian();
  CMatrix rho = a * a.adjoint();
  rho /= rho.trace().real();
  return rho;
}

}  // namespace photonbox
