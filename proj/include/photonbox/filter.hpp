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

#include "photonbox/feedback.hpp"
#include "photonbox/fock.hpp"
#include "photonbox/rng.hpp"

namespace photonbox {

/// Joint system-observer state. The delay line is shared: the controls the
/// estimator emits are exactly the ones the cavity will receive.
struct JointState {
  CMatrix rho;      // physical state
  CMatrix rho_est;  // estimator state
  std::vector<Complex> betas;
};

struct JointStep {
  JointState state;
  Outcome outcome;
  Complex alpha_applied;
  Complex alpha_computed;
};

namespace detail {

struct JointHalfStep {
  CMatrix displaced_true;
  CMatrix displaced_est;
  double prob_g = 0.0;  // from the physical state only
  Complex alpha_applied;
  Complex alpha_computed;
};

inline JointHalfStep joint_half_step(const FockOperators& ops, const FeedbackParams& fp,
                                     const JointState& xi) {
  JointHalfStep half;
  const ControlState est_view{xi.rho_est, xi.betas};
  half.alpha_computed = feedback_alpha(ops, fp, est_view);
  half.alpha_applied = fp.delay == 0 ? half.alpha_computed : xi.betas.back();
  half.displaced_true = repair(apply_displacement(ops, half.alpha_applied, xi.rho));
  half.displaced_est = repair(apply_displacement(ops, half.alpha_applied, xi.rho_est));
  half.prob_g = outcome_probability(ops, Outcome::g, half.displaced_true);
  return half;
}

inline JointState joint_advance(const FockOperators& ops, const FeedbackParams& fp,
                                const JointHalfStep& half, const JointState& xi, Outcome s) {
  JointState next;
  next.rho = repair(jump_map(ops, s, half.displaced_true).state);
  next.rho_est = repair(jump_map(ops, s, half.displaced_est).state);
  if (fp.delay > 0) {
    next.betas.reserve(xi.betas.size());
    next.betas.push_back(half.alpha_computed);
    next.betas.insert(next.betas.end(), xi.betas.begin(), xi.betas.end() - 1);
  }
  return next;
}

}  // namespace detail

/// One joint transition. The outcome is drawn from the physical state; the
/// same outcome updates both matrices; the control is computed from the
/// estimator alone.
inline JointStep step_joint(const FockOperators& ops, const FeedbackParams& fp,
                            const JointState& xi, RngStream& rng) {
  const detail::JointHalfStep half = detail::joint_half_step(ops, fp, xi);
  const Outcome s = rng.uniform01() < half.prob_g ? Outcome::g : Outcome::e;
  return {detail::joint_advance(ops, fp, half, xi, s), s, half.alpha_applied,
          half.alpha_computed};
}

struct JointTransition {
  JointState state;
  double probability = 0.0;  // of the forced outcome, from the physical state
  Complex alpha_applied;
  Complex alpha_computed;
};

inline JointTransition step_joint_outcome(const FockOperators& ops, const FeedbackParams& fp,
                                          const JointState& xi, Outcome s) {
  const detail::JointHalfStep half = detail::joint_half_step(ops, fp, xi);
  const double prob = s == Outcome::g ? half.prob_g : 1.0 - half.prob_g;
  return {detail::joint_advance(ops, fp, half, xi, s), prob, half.alpha_applied,
          half.alpha_computed};
}

/// sqrt(tr((a - b)^2)) for Hermitian arguments.
inline double frobenius_distance(const CMatrix& a, const CMatrix& b) {
  return (a - b).norm();
}

/// True when every near-null eigenvector of rho_est0 is annihilated by rho0,
/// i.e. ker(rho_est0) is contained in ker(rho0).
inline bool kernel_inclusion(const CMatrix& rho_est0, const CMatrix& rho0,
                             double eigenvalue_tol = 1e-10, double image_tol = 1e-8) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (rho_est0 + rho_est0.adjoint()));
  if (es.info() != Eigen::Success)
    throw NumericalFault("kernel_inclusion: eigendecomposition failed");
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()(i) < eigenvalue_tol) {
      const CVector v = es.eigenvectors().col(i);
      if ((rho0 * v).norm() >= image_tol) return false;
    }
  }
  return true;
}

}  // namespace photonbox
