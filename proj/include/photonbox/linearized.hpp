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

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "photonbox/feedback.hpp"
#include "photonbox/fock.hpp"
#include "photonbox/rng.hpp"

namespace photonbox {

/// Tangent of the state space at a Fock fixed point: Hermitian, trace zero.
using TangentState = CMatrix;

inline constexpr double tangent_tolerance = 1e-12;

inline bool is_tangent_state(const TangentState& t) {
  return hermiticity_error(t) <= tangent_tolerance &&
         std::abs(t.trace()) <= tangent_tolerance;
}

/// Per-mode decay rates of the linearized open-loop chain around the target
/// Fock state. rate(n) applies to the off-diagonal pair (n, n_bar); the
/// largest one over n != n_bar governs the chain.
struct OpenLoopExponents {
  double lambda = 0.0;
  int argmax_n = -1;
  std::vector<double> per_n;  // per_n[n_bar] is NaN
};

inline double mode_exponent(const FockParams& p, int n_bar, int n) {
  const double cb = std::abs(std::cos(p.phi(n_bar)));
  const double sb = std::abs(std::sin(p.phi(n_bar)));
  const double cn = std::abs(std::cos(p.phi(n)));
  const double sn = std::abs(std::sin(p.phi(n)));
  return cb * cb * std::log(cn / cb) + sb * sb * std::log(sn / sb);
}

inline OpenLoopExponents open_loop_exponent(const FockParams& p, int n_bar) {
  validate_params(p);
  if (n_bar < 0 || n_bar > p.n_max)
    throw std::invalid_argument("open_loop_exponent: n_bar out of range");
  OpenLoopExponents out;
  out.per_n.assign(static_cast<std::size_t>(p.dim()),
                   std::numeric_limits<double>::quiet_NaN());
  out.lambda = -std::numeric_limits<double>::infinity();
  for (int n = 0; n <= p.n_max; ++n) {
    if (n == n_bar) continue;
    const double v = mode_exponent(p, n_bar, n);
    out.per_n[static_cast<std::size_t>(n)] = v;
    if (v > out.lambda) {
      out.lambda = v;
      out.argmax_n = n;
    }
  }
  if (!(out.lambda < 0.0))
    throw NumericalFault("open_loop_exponent: non-negative rate, degenerate parameters");
  return out;
}

/// Largest decay rate of the modes the feedback leaves untouched
/// (n outside {n_bar - 1, n_bar, n_bar + 1}). Empty when no such mode exists.
inline std::optional<double> closed_loop_decoupled_exponent(const FockParams& p, int n_bar) {
  validate_params(p);
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (int n = 0; n <= p.n_max; ++n) {
    if (n >= n_bar - 1 && n <= n_bar + 1) continue;
    best = std::max(best, mode_exponent(p, n_bar, n));
    any = true;
  }
  if (!any) return std::nullopt;
  if (!(best < 0.0))
    throw NumericalFault("closed_loop_decoupled_exponent: non-negative rate");
  return best;
}

/// Draws g with probability cos^2(phi(n_bar)).
inline Outcome sample_jump_at_target(const FockOperators& ops, int n_bar, RngStream& rng) {
  const double pg = ops.cos_phi(n_bar) * ops.cos_phi(n_bar);
  return rng.uniform01() < pg ? Outcome::g : Outcome::e;
}

/// Linearized open-loop transition A_s t A_s' - tr(A_s t A_s') target for a
/// given outcome, with A_g = M_g / cos(phi(n_bar)), A_e = M_e / sin(phi(n_bar)).
inline TangentState lin_open_apply(const FockOperators& ops, int n_bar, Outcome s,
                                   const TangentState& t) {
  const CMatrix& outer = (s == Outcome::g) ? ops.outer_gg : ops.outer_ee;
  const double scale = (s == Outcome::g) ? ops.cos_phi(n_bar) * ops.cos_phi(n_bar)
                                         : ops.sin_phi(n_bar) * ops.sin_phi(n_bar);
  TangentState next = t.cwiseProduct(outer) / scale;
  next(n_bar, n_bar) -= next.trace();
  return next;
}

inline TangentState step_lin_open(const FockOperators& ops, int n_bar, const TangentState& t,
                                  RngStream& rng) {
  return lin_open_apply(ops, n_bar, sample_jump_at_target(ops, n_bar, rng), t);
}

/// Scalar recursion coefficient of the decoupled entry (n1, n2).
inline double lin_open_entry_factor(const FockOperators& ops, int n_bar, Outcome s, int n1,
                                    int n2) {
  if (s == Outcome::g)
    return ops.cos_phi(n1) * ops.cos_phi(n2) / (ops.cos_phi(n_bar) * ops.cos_phi(n_bar));
  return ops.sin_phi(n1) * ops.sin_phi(n2) / (ops.sin_phi(n_bar) * ops.sin_phi(n_bar));
}

/// Linearized closed-loop state: tangent matrix plus control perturbations.
struct LinClosedState {
  TangentState tangent;
  std::vector<Complex> z;  // z[j-1] is the control perturbation delayed j steps
};

namespace detail {

/// Adds z_d (a' commutator) - conj(z_d) (a commutator) in place; both
/// commutators with the target projector touch four entries only.
inline void add_pending_control(CMatrix& m, int n_bar, Complex z_d) {
  const int dim = static_cast<int>(m.rows());
  if (n_bar + 1 < dim) {
    const double w = std::sqrt(static_cast<double>(n_bar + 1));
    m(n_bar + 1, n_bar) += z_d * w;
    m(n_bar, n_bar + 1) += std::conj(z_d) * w;
  }
  if (n_bar >= 1) {
    const double w = std::sqrt(static_cast<double>(n_bar));
    m(n_bar, n_bar - 1) -= z_d * w;
    m(n_bar - 1, n_bar) -= std::conj(z_d) * w;
  }
}

/// Next control perturbation
/// -eps (2n+1) sum_j cos^j(theta) z_j + eps cos^d(theta) tr(t [a, target]).
inline Complex next_control_perturbation(const FockOperators& ops, const FeedbackParams& fp,
                                         const TangentState& t,
                                         const std::vector<Complex>& z) {
  const double ct = std::cos(ops.params.theta);
  Complex weighted(0.0, 0.0);
  double cj = 1.0;
  for (const Complex& zj : z) {
    cj *= ct;
    weighted += cj * zj;
  }
  Complex drive(0.0, 0.0);
  if (fp.n_bar >= 1)
    drive += std::sqrt(static_cast<double>(fp.n_bar)) * t(fp.n_bar, fp.n_bar - 1);
  if (fp.n_bar + 1 < ops.dim)
    drive -= std::sqrt(static_cast<double>(fp.n_bar + 1)) * t(fp.n_bar + 1, fp.n_bar);
  const double cd = std::pow(ct, static_cast<double>(fp.delay));
  return -fp.epsilon * static_cast<double>(2 * fp.n_bar + 1) * weighted +
         fp.epsilon * cd * drive;
}

inline void shift_control_line(std::vector<Complex>& z, Complex fresh) {
  if (z.empty()) return;
  for (std::size_t j = z.size() - 1; j > 0; --j) z[j] = z[j - 1];
  z[0] = fresh;
}

}  // namespace detail

inline LinClosedState lin_closed_apply(const FockOperators& ops, const FeedbackParams& fp,
                                       Outcome s, const LinClosedState& state) {
  // With no delay line the fresh control perturbation acts within the step.
  const Complex pending =
      state.z.empty() ? detail::next_control_perturbation(ops, fp, state.tangent, state.z)
                      : state.z.back();
  CMatrix m = state.tangent;
  detail::add_pending_control(m, fp.n_bar, pending);
  // The pending-control entries are off-diagonal, so the trace correction of
  // the augmented matrix equals the one of the bare tangent.
  LinClosedState next;
  next.tangent = lin_open_apply(ops, fp.n_bar, s, m);
  next.z = state.z;
  detail::shift_control_line(next.z,
                             detail::next_control_perturbation(ops, fp, state.tangent, state.z));
  return next;
}

inline LinClosedState step_lin_closed(const FockOperators& ops, const FeedbackParams& fp,
                                      const LinClosedState& state, RngStream& rng) {
  return lin_closed_apply(ops, fp, sample_jump_at_target(ops, fp.n_bar, rng), state);
}

/// Reduced closed-loop chain on the controlled components:
/// x = t(n_bar, n_bar - 1), y = t(n_bar + 1, n_bar), plus the control line.
struct ReducedState {
  Complex x;
  Complex y;
  std::vector<Complex> z;
};

struct ReducedCoefficients {
  double a_g, a_e, b_g, b_e;
};

inline ReducedCoefficients reduced_coefficients(const FockOperators& ops, int n_bar) {
  if (n_bar < 1 || n_bar + 1 >= ops.dim)
    throw std::invalid_argument("reduced chain requires 1 <= n_bar <= n_max - 1");
  return {ops.cos_phi(n_bar - 1) / ops.cos_phi(n_bar),
          ops.sin_phi(n_bar - 1) / ops.sin_phi(n_bar),
          ops.cos_phi(n_bar + 1) / ops.cos_phi(n_bar),
          ops.sin_phi(n_bar + 1) / ops.sin_phi(n_bar)};
}

inline ReducedState reduced_apply(const FockOperators& ops, const FeedbackParams& fp, Outcome s,
                                  const ReducedState& state) {
  const ReducedCoefficients co = reduced_coefficients(ops, fp.n_bar);
  const double rn = std::sqrt(static_cast<double>(fp.n_bar));
  const double rn1 = std::sqrt(static_cast<double>(fp.n_bar + 1));
  const double ct = std::cos(ops.params.theta);
  Complex weighted(0.0, 0.0);
  double cj = 1.0;
  for (const Complex& zj : state.z) {
    cj *= ct;
    weighted += cj * zj;
  }
  const double cd = std::pow(ct, static_cast<double>(fp.delay));
  const Complex fresh = -fp.epsilon * static_cast<double>(2 * fp.n_bar + 1) * weighted +
                        fp.epsilon * cd * (rn * state.x - rn1 * state.y);
  const Complex z_d = state.z.empty() ? fresh : state.z.back();

  ReducedState next;
  next.x = (s == Outcome::g ? co.a_g : co.a_e) * (state.x - rn * z_d);
  next.y = (s == Outcome::g ? co.b_g : co.b_e) * (state.y + rn1 * z_d);
  next.z = state.z;
  detail::shift_control_line(next.z, fresh);
  return next;
}

inline ReducedState step_reduced(const FockOperators& ops, const FeedbackParams& fp,
                                 const ReducedState& state, RngStream& rng) {
  return reduced_apply(ops, fp, sample_jump_at_target(ops, fp.n_bar, rng), state);
}

/// Weighted norm |x| + |y| + mu (|z_1| + sigma |z_2| + ... + sigma^{d-1} |z_d|)
/// with sigma = |cos theta| and mu = (sqrt(n_bar) + sqrt(n_bar + 1)) / sigma^{d-1}.
/// Its one-step expectation contracts by sigma (1 + 2 eps (n_bar + 1)).
inline double supermartingale_norm(const FockParams& p, const FeedbackParams& fp,
                                   const ReducedState& state) {
  const double sigma = std::abs(std::cos(p.theta));
  if (!(sigma > 0.0) || !(sigma < 1.0))
    throw std::invalid_argument("supermartingale_norm: |cos theta| must lie in (0,1)");
  const double mu = (std::sqrt(static_cast<double>(fp.n_bar)) +
                     std::sqrt(static_cast<double>(fp.n_bar + 1))) /
                    std::pow(sigma, static_cast<double>(fp.delay - 1));
  double v = std::abs(state.x) + std::abs(state.y);
  double w = mu;
  for (const Complex& zj : state.z) {
    v += w * std::abs(zj);
    w *= sigma;
  }
  return v;
}

/// Gain bound under which the weighted norm is a strict super-martingale.
inline double contraction_epsilon_bound(const FockParams& p, const FeedbackParams& fp) {
  const double sigma = std::abs(std::cos(p.theta));
  return (1.0 - sigma) / (2.0 * static_cast<double>(fp.n_bar + 1));
}

/// Linearized joint system-observer state.
struct LinFilterState {
  TangentState tangent;      // physical perturbation
  TangentState tangent_est;  // estimator perturbation, drives the control
  std::vector<Complex> z;
};

inline LinFilterState lin_filter_apply(const FockOperators& ops, const FeedbackParams& fp,
                                       Outcome s, const LinFilterState& state) {
  const Complex pending =
      state.z.empty()
          ? detail::next_control_perturbation(ops, fp, state.tangent_est, state.z)
          : state.z.back();
  CMatrix m_true = state.tangent;
  CMatrix m_est = state.tangent_est;
  detail::add_pending_control(m_true, fp.n_bar, pending);
  detail::add_pending_control(m_est, fp.n_bar, pending);
  LinFilterState next;
  next.tangent = lin_open_apply(ops, fp.n_bar, s, m_true);
  next.tangent_est = lin_open_apply(ops, fp.n_bar, s, m_est);
  next.z = state.z;
  detail::shift_control_line(
      next.z, detail::next_control_perturbation(ops, fp, state.tangent_est, state.z));
  return next;
}

inline LinFilterState step_lin_filter(const FockOperators& ops, const FeedbackParams& fp,
                                      const LinFilterState& state, RngStream& rng) {
  return lin_filter_apply(ops, fp, sample_jump_at_target(ops, fp.n_bar, rng), state);
}

/// Empirical largest Lyapunov exponent: average of log norm growth with
/// per-step renormalization of the state.
template <class State, class Step, class Norm, class Scale>
double empirical_exponent(State state, long n_steps, Step&& step, Norm&& norm, Scale&& scale) {
  double m = norm(state);
  if (!(m > 0.0)) throw std::invalid_argument("empirical_exponent: zero initial state");
  scale(state, 1.0 / m);
  double acc = 0.0;
  for (long k = 0; k < n_steps; ++k) {
    state = step(state);
    m = norm(state);
    if (!(m > 0.0) || !std::isfinite(m))
      throw NumericalFault("empirical_exponent: state norm degenerated");
    acc += std::log(m);
    scale(state, 1.0 / m);
  }
  return acc / static_cast<double>(n_steps);
}

/// Random Hermitian trace-free tangent with standard normal entries.
inline TangentState random_tangent(int dim, RngStream& rng) {
  CMatrix b(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) b(i, j) = rng.complex_gaussian();
  TangentState t = 0.5 * (b + b.adjoint());
  t -= (t.trace() / static_cast<double>(dim)) * CMatrix::Identity(dim, dim);
  return t;
}

inline double max_entry_norm(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

inline double empirical_open_exponent(const FockOperators& ops, int n_bar, long n_steps,
                                      RngStream& rng) {
  return empirical_exponent(
      random_tangent(ops.dim, rng), n_steps,
      [&](const TangentState& t) { return step_lin_open(ops, n_bar, t, rng); },
      [](const TangentState& t) { return max_entry_norm(t); },
      [](TangentState& t, double c) { t *= c; });
}

inline double empirical_reduced_exponent(const FockOperators& ops, const FeedbackParams& fp,
                                         long n_steps, RngStream& rng) {
  ReducedState init{rng.complex_gaussian(), rng.complex_gaussian(),
                    std::vector<Complex>(static_cast<std::size_t>(fp.delay))};
  for (Complex& zj : init.z) zj = rng.complex_gaussian();
  return empirical_exponent(
      std::move(init), n_steps,
      [&](const ReducedState& s) { return step_reduced(ops, fp, s, rng); },
      [&](const ReducedState& s) { return supermartingale_norm(ops.params, fp, s); },
      [](ReducedState& s, double c) {
        s.x *= c;
        s.y *= c;
        for (Complex& zj : s.z) zj *= c;
      });
}

inline double empirical_closed_exponent(const FockOperators& ops, const FeedbackParams& fp,
                                        long n_steps, RngStream& rng) {
  LinClosedState init{random_tangent(ops.dim, rng),
                      std::vector<Complex>(static_cast<std::size_t>(fp.delay))};
  for (Complex& zj : init.z) zj = rng.complex_gaussian();
  return empirical_exponent(
      std::move(init), n_steps,
      [&](const LinClosedState& s) { return step_lin_closed(ops, fp, s, rng); },
      [](const LinClosedState& s) {
        double m = max_entry_norm(s.tangent);
        for (const Complex& zj : s.z) m = std::max(m, std::abs(zj));
        return m;
      },
      [](LinClosedState& s, double c) {
        s.tangent *= c;
        for (Complex& zj : s.z) zj *= c;
      });
}

inline double empirical_filter_exponent(const FockOperators& ops, const FeedbackParams& fp,
                                        long n_steps, RngStream& rng) {
  LinFilterState init{random_tangent(ops.dim, rng), random_tangent(ops.dim, rng),
                      std::vector<Complex>(static_cast<std::size_t>(fp.delay))};
  for (Complex& zj : init.z) zj = rng.complex_gaussian();
  return empirical_exponent(
      std::move(init), n_steps,
      [&](const LinFilterState& s) { return step_lin_filter(ops, fp, s, rng); },
      [](const LinFilterState& s) {
        double m = std::max(max_entry_norm(s.tangent), max_entry_norm(s.tangent_est));
        for (const Complex& zj : s.z) m = std::max(m, std::abs(zj));
        return m;
      },
      [](LinFilterState& s, double c) {
        s.tangent *= c;
        s.tangent_est *= c;
        for (Complex& zj : s.z) zj *= c;
      });
}

}  // namespace photonbox
