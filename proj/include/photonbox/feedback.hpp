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

#include <utility>
#include <vector>

#include "photonbox/fock.hpp"
#include "photonbox/rng.hpp"

namespace photonbox {

/// Shape of the rescue branch of the feedback law. The delayed variant
/// maximizes the product of the two conditional predictor overlaps; the
/// no-delay variant (valid only for delay 0) maximizes the single overlap
/// of the displaced state.
enum class LawVariant { delayed, no_delay };

struct FeedbackParams {
  int n_bar = 3;            // target photon number
  double epsilon = 1.0 / 7.0;
  double eta = 0.1;         // fidelity threshold between the two branches
  double alpha_max = 1.0;   // control bound of the rescue branch
  int delay = 0;            // atoms in flight between cavity and detector
  LawVariant law = LawVariant::delayed;
};

inline void validate_feedback(const FockParams& p, const FeedbackParams& fp) {
  if (fp.n_bar < 0 || fp.n_bar > p.n_max)
    throw std::invalid_argument("feedback: n_bar out of range");
  if (!(fp.epsilon > 0.0)) throw std::invalid_argument("feedback: epsilon must be positive");
  if (!(fp.eta > 0.0 && fp.eta < 1.0))
    throw std::invalid_argument("feedback: eta must lie in (0,1)");
  if (!(fp.alpha_max > 0.0))
    throw std::invalid_argument("feedback: alpha_max must be positive");
  if (fp.delay < 0) throw std::invalid_argument("feedback: delay must be >= 0");
  if (fp.law == LawVariant::no_delay && fp.delay != 0)
    throw std::invalid_argument("feedback: no_delay law requires delay 0");
}

/// Closed-loop state: cavity state plus the pending controls.
/// betas[l-1] is the control delayed l steps; betas.back() is applied next.
struct ControlState {
  CMatrix rho;
  std::vector<Complex> betas;
};

inline ControlState equilibrium_state(const FockOperators& ops, const FeedbackParams& fp) {
  return {fock_state(ops, fp.n_bar),
          std::vector<Complex>(static_cast<std::size_t>(fp.delay), Complex(0.0, 0.0))};
}

/// tr(target_proj [x, a]) reduced to the two matrix entries it touches.
inline Complex target_commutator_overlap(const FockOperators& ops, int n_bar, const CMatrix& x) {
  Complex value(0.0, 0.0);
  if (n_bar >= 1) value += std::sqrt(static_cast<double>(n_bar)) * x(n_bar, n_bar - 1);
  if (n_bar + 1 < ops.dim)
    value -= std::sqrt(static_cast<double>(n_bar + 1)) * x(n_bar + 1, n_bar);
  return value;
}

/// Average prediction of the state once all pending controls have acted,
/// together with its split over the oldest undetected atom. The split sums
/// to the prediction when delay >= 1; with no atom in flight (delay 0) the
/// branches fall back to the unnormalized post-jump states of rho itself.
struct Prediction {
  CMatrix pred;    // K_{b1} o ... o K_{bd} (rho)
  CMatrix pred_g;  // unnormalized branch conditioned on that atom in g
  CMatrix pred_e;  // same for e; pred = pred_g + pred_e for delay >= 1
};

inline CMatrix predict_state(const FockOperators& ops, const ControlState& chi) {
  CMatrix acc = chi.rho;
  for (std::size_t l = chi.betas.size(); l > 0; --l) acc = kraus(ops, chi.betas[l - 1], acc);
  return acc;
}

inline Prediction predict(const FockOperators& ops, const FeedbackParams& fp,
                          const ControlState& chi) {
  Prediction out;
  out.pred = predict_state(ops, chi);
  if (fp.delay == 0) {
    out.pred_g = chi.rho.cwiseProduct(ops.outer_gg);
    out.pred_e = chi.rho.cwiseProduct(ops.outer_ee);
    return out;
  }
  const CMatrix displaced = apply_displacement(ops, chi.betas.back(), chi.rho);
  out.pred_g = displaced.cwiseProduct(ops.outer_gg);
  out.pred_e = displaced.cwiseProduct(ops.outer_ee);
  for (std::size_t l = chi.betas.size() - 1; l > 0; --l) {
    out.pred_g = kraus(ops, chi.betas[l - 1], out.pred_g);
    out.pred_e = kraus(ops, chi.betas[l - 1], out.pred_e);
  }
  return out;
}

/// Grid argmax of a continuous objective over the disk |alpha| <= alpha_max.
///
/// Radius-major polar scan (25 radii x 64 angles) followed by three local
/// refinements shrinking the grid 5x around the incumbent. Ties keep the
/// smallest radius, then the smallest phase, so a constant objective yields
/// exactly zero.
template <class Objective>
Complex argmax_displacement(Objective&& objective, double alpha_max) {
  constexpr int n_radii = 25;
  constexpr int n_angles = 64;
  constexpr int rounds = 3;
  constexpr int span = 4;
  constexpr double shrink = 5.0;
  constexpr double two_pi = 2.0 * 3.14159265358979323846;

  double best_r = 0.0;
  double best_t = 0.0;
  double best_val = objective(Complex(0.0, 0.0));

  double dr = alpha_max / static_cast<double>(n_radii - 1);
  double dt = two_pi / static_cast<double>(n_angles);
  for (int ir = 1; ir < n_radii; ++ir) {
    const double r = static_cast<double>(ir) * dr;
    for (int it = 0; it < n_angles; ++it) {
      const double t = static_cast<double>(it) * dt;
      const double val = objective(std::polar(r, t));
      if (val > best_val) {
        best_val = val;
        best_r = r;
        best_t = t;
      }
    }
  }

  for (int round = 0; round < rounds; ++round) {
    dr /= shrink;
    dt /= shrink;
    const double center_r = best_r;
    const double center_t = best_t;
    for (int ir = -span; ir <= span; ++ir) {
      double r = center_r + static_cast<double>(ir) * dr;
      if (r < 0.0) r = 0.0;
      if (r > alpha_max) r = alpha_max;
      for (int it = -span; it <= span; ++it) {
        const double t = center_t + static_cast<double>(it) * dt;
        const double val = objective(std::polar(r, t));
        if (val > best_val) {
          best_val = val;
          best_r = r;
          best_t = t;
        }
      }
    }
  }
  if (best_r == 0.0) return Complex(0.0, 0.0);
  return std::polar(best_r, best_t);
}

/// The two-branch feedback law evaluated on the predictor.
///
/// Above the fidelity threshold the control is the gradient-like term
/// epsilon tr(target [pred, a]); below it, the bounded argmax that restores
/// a positive predictor overlap in one step.
inline Complex feedback_alpha(const FockOperators& ops, const FeedbackParams& fp,
                              const ControlState& chi) {
  const CMatrix pred = predict_state(ops, chi);
  const double fid = population(pred, fp.n_bar);
  if (fid >= fp.eta)
    return fp.epsilon * target_commutator_overlap(ops, fp.n_bar, pred);

  if (fp.law == LawVariant::no_delay) {
    const CMatrix& base = chi.rho;
    return argmax_displacement(
        [&](Complex alpha) {
          return displaced_target_overlap(displaced_target_row(ops, fp.n_bar, alpha), base);
        },
        fp.alpha_max);
  }

  const Prediction pr = predict(ops, fp, chi);
  return argmax_displacement(
      [&](Complex alpha) {
        const CRowVector row = displaced_target_row(ops, fp.n_bar, alpha);
        return displaced_target_overlap(row, pr.pred_g) *
               displaced_target_overlap(row, pr.pred_e);
      },
      fp.alpha_max);
}

struct ClosedStep {
  ControlState state;
  Outcome outcome;
  Complex alpha_applied;   // displacement injected this step
  Complex alpha_computed;  // control emitted into the delay line
};

namespace detail {

struct ClosedHalfStep {
  CMatrix displaced;
  double prob_g = 0.0;
  Complex alpha_applied;
  Complex alpha_computed;
};

inline ClosedHalfStep closed_half_step(const FockOperators& ops, const FeedbackParams& fp,
                                       const ControlState& chi) {
  ClosedHalfStep half;
  half.alpha_computed = feedback_alpha(ops, fp, chi);
  half.alpha_applied = fp.delay == 0 ? half.alpha_computed : chi.betas.back();
  half.displaced = repair(apply_displacement(ops, half.alpha_applied, chi.rho));
  half.prob_g = outcome_probability(ops, Outcome::g, half.displaced);
  return half;
}

inline ControlState closed_advance(const FockOperators& ops, const FeedbackParams& fp,
                                   const ClosedHalfStep& half, const ControlState& chi,
                                   Outcome s) {
  ControlState next;
  next.rho = repair(jump_map(ops, s, half.displaced).state);
  if (fp.delay > 0) {
    next.betas.reserve(chi.betas.size());
    next.betas.push_back(half.alpha_computed);
    next.betas.insert(next.betas.end(), chi.betas.begin(), chi.betas.end() - 1);
  }
  return next;
}

}  // namespace detail

/// One closed-loop transition: displace by the oldest pending control,
/// measure, shift the delay line with the freshly computed control.
inline ClosedStep step_closed(const FockOperators& ops, const FeedbackParams& fp,
                              const ControlState& chi, RngStream& rng) {
  const detail::ClosedHalfStep half = detail::closed_half_step(ops, fp, chi);
  const Outcome s = rng.uniform01() < half.prob_g ? Outcome::g : Outcome::e;
  return {detail::closed_advance(ops, fp, half, chi, s), s, half.alpha_applied,
          half.alpha_computed};
}

struct ClosedTransition {
  ControlState state;
  double probability = 0.0;
  Complex alpha_applied;
  Complex alpha_computed;
};

/// Deterministic transition for a forced outcome, for enumeration oracles.
inline ClosedTransition step_closed_outcome(const FockOperators& ops, const FeedbackParams& fp,
                                            const ControlState& chi, Outcome s) {
  const detail::ClosedHalfStep half = detail::closed_half_step(ops, fp, chi);
  const double prob = s == Outcome::g ? half.prob_g : 1.0 - half.prob_g;
  return {detail::closed_advance(ops, fp, half, chi, s), prob, half.alpha_applied,
          half.alpha_computed};
}

/// V(chi) = f(tr(target pred)).
inline double lyapunov_v(const FockOperators& ops, const FeedbackParams& fp,
                         const ControlState& chi) {
  return convex_f(population(predict_state(ops, chi), fp.n_bar));
}

struct DriftSlack {
  double fidelity_slack = 0.0;  // E[fid'] - fid - eps |c|^2
  double lyapunov_slack = 0.0;  // E[V'] - V - eps/2 |c|^2 - PgPe/2 (fid_g' - fid_e')^2
  double expected_fidelity = 0.0;
  double branch_gap = 0.0;      // fid_g' - fid_e'
};

/// One-step drift of the predictor fidelity and of V in the gradient branch,
/// by exact enumeration over the two outcomes.
inline DriftSlack gradient_drift_slack(const FockOperators& ops, const FeedbackParams& fp,
                              const ControlState& chi) {
  const CMatrix pred = predict_state(ops, chi);
  const double fid = population(pred, fp.n_bar);
  if (fid < fp.eta)
    throw std::invalid_argument("gradient_drift_slack: predictor fidelity below threshold");
  const Complex c = target_commutator_overlap(ops, fp.n_bar, pred);

  const ClosedTransition tg = step_closed_outcome(ops, fp, chi, Outcome::g);
  const ClosedTransition te = step_closed_outcome(ops, fp, chi, Outcome::e);
  const double fid_g = population(predict_state(ops, tg.state), fp.n_bar);
  const double fid_e = population(predict_state(ops, te.state), fp.n_bar);

  DriftSlack out;
  out.expected_fidelity = tg.probability * fid_g + te.probability * fid_e;
  out.branch_gap = fid_g - fid_e;
  const double drive = fp.epsilon * std::norm(c);
  out.fidelity_slack = out.expected_fidelity - fid - drive;
  const double expected_v =
      tg.probability * convex_f(fid_g) + te.probability * convex_f(fid_e);
  out.lyapunov_slack = expected_v - convex_f(fid) - 0.5 * drive -
                       0.5 * tg.probability * te.probability * out.branch_gap * out.branch_gap;
  return out;
}

struct RescueKick {
  double min_post_fidelity = 0.0;
  double post_fidelity_g = 0.0;
  double post_fidelity_e = 0.0;
  double branch_overlap_g = 0.0;  // tr(target D_alpha(pred_g)), unnormalized
  double branch_overlap_e = 0.0;
  Complex alpha;
};

/// Worst-case predictor fidelity after one step of the rescue branch.
inline RescueKick rescue_kick(const FockOperators& ops, const FeedbackParams& fp,
                              const ControlState& chi) {
  const Prediction pr = predict(ops, fp, chi);
  const double fid = population(pr.pred, fp.n_bar);
  if (fid >= fp.eta)
    throw std::invalid_argument("rescue_kick: predictor fidelity above threshold");

  const ClosedTransition tg = step_closed_outcome(ops, fp, chi, Outcome::g);
  const ClosedTransition te = step_closed_outcome(ops, fp, chi, Outcome::e);

  RescueKick out;
  out.alpha = tg.alpha_computed;
  out.post_fidelity_g = population(predict_state(ops, tg.state), fp.n_bar);
  out.post_fidelity_e = population(predict_state(ops, te.state), fp.n_bar);
  out.min_post_fidelity = std::min(out.post_fidelity_g, out.post_fidelity_e);
  const CRowVector row = displaced_target_row(ops, fp.n_bar, out.alpha);
  out.branch_overlap_g = displaced_target_overlap(row, pr.pred_g);
  out.branch_overlap_e = displaced_target_overlap(row, pr.pred_e);
  return out;
}

}  // namespace photonbox
