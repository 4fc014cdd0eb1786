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
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace photonbox {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using CRowVector = Eigen::RowVectorXcd;
using RVector = Eigen::VectorXd;

/// Raised when a simulated state leaves the valid density-matrix set or a
/// jump probability degenerates. Indicates a diverging run, not bad input.
struct NumericalFault : std::runtime_error {
  explicit NumericalFault(const std::string& what) : std::runtime_error(what) {}
};

/// Detection result of one probe atom.
enum class Outcome : int { g = 0, e = 1 };

inline char outcome_char(Outcome s) { return s == Outcome::g ? 'g' : 'e'; }

// Membership tolerances for the density-matrix set.
inline constexpr double herm_tolerance = 1e-9;
inline constexpr double trace_tolerance = 1e-9;
inline constexpr double psd_tolerance = 1e-9;
// repair() zeroes eigenvalues below the floor and refuses states below abort.
inline constexpr double repair_floor = -1e-10;
inline constexpr double repair_abort = -1e-6;
inline constexpr double degenerate_probability = 1e-14;

/// Cavity model parameters: truncation and the two Ramsey phases.
/// Phase of level n is phi(n) = phi0 + n * theta.
struct FockParams {
  int n_max = 10;
  double phi0 = std::numbers::pi / 4.0 - 0.6;
  double theta = 0.2;

  int dim() const { return n_max + 1; }
  double phi(int n) const { return phi0 + static_cast<double>(n) * theta; }
};

/// Validates invertibility of the measurement operators and non-degeneracy
/// of their spectra. Throws std::invalid_argument otherwise.
inline void validate_params(const FockParams& p) {
  if (p.n_max < 1) throw std::invalid_argument("fock: n_max must be >= 1");
  constexpr double margin = 1e-9;
  for (int n = 0; n <= p.n_max; ++n) {
    const double c = std::cos(p.phi(n));
    const double s = std::sin(p.phi(n));
    if (std::abs(c) < margin || std::abs(s) < margin)
      throw std::invalid_argument("fock: measurement operators singular at level " +
                                  std::to_string(n));
  }
  for (int m = 0; m < p.n_max; ++m) {
    const double cm = std::cos(p.phi(m));
    for (int n = m + 1; n <= p.n_max; ++n) {
      const double cn = std::cos(p.phi(n));
      if (std::abs(cm * cm - cn * cn) < margin)
        throw std::invalid_argument("fock: degenerate measurement spectrum at levels " +
                                    std::to_string(m) + "," + std::to_string(n));
    }
  }
}

/// Operators of the truncated cavity space, built once and shared.
///
/// disp_basis / disp_spectrum hold the eigendecomposition of the Hermitian
/// matrix i(a' - a); every displacement reuses it (see displacement()).
struct FockOperators {
  FockParams params;
  int dim = 0;
  CMatrix number_op;  // diag(0..n_max)
  CMatrix lowering;   // a
  CMatrix raising;    // a'
  CMatrix meas_g;     // cos(phi0 + theta N)
  CMatrix meas_e;     // sin(phi0 + theta N)
  RVector cos_phi;
  RVector sin_phi;
  CMatrix outer_gg;   // cos_phi cos_phi^T, entrywise factors of M_g . M_g
  CMatrix outer_ee;   // sin_phi sin_phi^T
  CMatrix outer_sum;  // outer_gg + outer_ee, entrywise factors of the Kraus map
  CMatrix disp_basis;
  RVector disp_spectrum;
};

inline FockOperators build_operators(const FockParams& p) {
  validate_params(p);
  const int dim = p.dim();
  FockOperators ops;
  ops.params = p;
  ops.dim = dim;

  ops.number_op = CMatrix::Zero(dim, dim);
  ops.lowering = CMatrix::Zero(dim, dim);
  for (int n = 0; n < dim; ++n) ops.number_op(n, n) = static_cast<double>(n);
  for (int n = 1; n < dim; ++n) ops.lowering(n - 1, n) = std::sqrt(static_cast<double>(n));
  ops.raising = ops.lowering.adjoint();

  ops.cos_phi = RVector(dim);
  ops.sin_phi = RVector(dim);
  for (int n = 0; n < dim; ++n) {
    ops.cos_phi(n) = std::cos(p.phi(n));
    ops.sin_phi(n) = std::sin(p.phi(n));
  }
  ops.meas_g = ops.cos_phi.cast<Complex>().asDiagonal();
  ops.meas_e = ops.sin_phi.cast<Complex>().asDiagonal();
  ops.outer_gg = (ops.cos_phi * ops.cos_phi.transpose()).cast<Complex>();
  ops.outer_ee = (ops.sin_phi * ops.sin_phi.transpose()).cast<Complex>();
  ops.outer_sum = ops.outer_gg + ops.outer_ee;

  const CMatrix generator = Complex(0.0, 1.0) * (ops.raising - ops.lowering);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(generator);
  if (es.info() != Eigen::Success)
    throw NumericalFault("fock: displacement generator eigendecomposition failed");
  ops.disp_basis = es.eigenvectors();
  ops.disp_spectrum = es.eigenvalues();
  return ops;
}

/// Unitary displacement exp(alpha a' - alpha* a).
///
/// With U = diag(e^{i n arg(alpha)}) the generator factors as
/// U (|alpha| (a' - a)) U', so one stored eigendecomposition of i(a' - a)
/// serves every amplitude.
inline CMatrix displacement(const FockOperators& ops, Complex alpha) {
  const int dim = ops.dim;
  if (alpha == Complex(0.0, 0.0)) return CMatrix::Identity(dim, dim);
  if (!std::isfinite(alpha.real()) || !std::isfinite(alpha.imag()))
    throw std::invalid_argument("displacement: non-finite amplitude");
  const double r = std::abs(alpha);
  const double th = std::arg(alpha);
  CVector rot(dim);
  for (int n = 0; n < dim; ++n) rot(n) = std::polar(1.0, -r * ops.disp_spectrum(n));
  CMatrix core = ops.disp_basis * rot.asDiagonal() * ops.disp_basis.adjoint();
  for (int m = 0; m < dim; ++m)
    for (int n = 0; n < dim; ++n)
      core(m, n) *= std::polar(1.0, static_cast<double>(m - n) * th);
  return core;
}

/// Row <n_bar| D_alpha, enough to evaluate <n_bar| D_alpha X D_alpha' |n_bar>
/// without forming the full unitary.
inline CRowVector displaced_target_row(const FockOperators& ops, int n_bar, Complex alpha) {
  const int dim = ops.dim;
  if (alpha == Complex(0.0, 0.0)) {
    CRowVector row = CRowVector::Zero(dim);
    row(n_bar) = 1.0;
    return row;
  }
  const double r = std::abs(alpha);
  const double th = std::arg(alpha);
  CRowVector t = ops.disp_basis.row(n_bar);
  for (int n = 0; n < dim; ++n) t(n) *= std::polar(1.0, -r * ops.disp_spectrum(n));
  CRowVector row = t * ops.disp_basis.adjoint();
  for (int n = 0; n < dim; ++n) row(n) *= std::polar(1.0, static_cast<double>(n_bar - n) * th);
  return row;
}

/// <n_bar| D X D' |n_bar> for a precomputed target row of D.
inline double displaced_target_overlap(const CRowVector& target_row, const CMatrix& x) {
  return (target_row * x * target_row.adjoint())(0, 0).real();
}

/// D_alpha rho D_alpha' (identity short-circuited).
inline CMatrix apply_displacement(const FockOperators& ops, Complex alpha, const CMatrix& rho) {
  if (alpha == Complex(0.0, 0.0)) return rho;
  const CMatrix d = displacement(ops, alpha);
  return d * rho * d.adjoint();
}

inline CMatrix fock_state(const FockOperators& ops, int n) {
  if (n < 0 || n >= ops.dim)
    throw std::invalid_argument("fock_state: level " + std::to_string(n) + " out of range");
  CMatrix rho = CMatrix::Zero(ops.dim, ops.dim);
  rho(n, n) = 1.0;
  return rho;
}

inline CMatrix coherent_state(const FockOperators& ops, Complex alpha) {
  const CMatrix d = displacement(ops, alpha);
  const CVector psi = d.col(0);
  return psi * psi.adjoint();
}

inline CMatrix maximally_mixed(const FockOperators& ops) {
  return CMatrix::Identity(ops.dim, ops.dim) / static_cast<double>(ops.dim);
}

/// tr(M_s rho M_s'), the probability of detecting outcome s.
inline double outcome_probability(const FockOperators& ops, Outcome s, const CMatrix& rho) {
  const RVector& c = (s == Outcome::g) ? ops.cos_phi : ops.sin_phi;
  return (c.array().square() * rho.diagonal().real().array()).sum();
}

struct JumpResult {
  CMatrix state;
  double probability = 0.0;
};

/// Normalized post-measurement state M_s rho M_s' / tr(M_s rho M_s').
inline JumpResult jump_map(const FockOperators& ops, Outcome s, const CMatrix& rho) {
  const double prob = outcome_probability(ops, s, rho);
  if (prob < degenerate_probability)
    throw NumericalFault("jump_map: degenerate outcome probability");
  const CMatrix& outer = (s == Outcome::g) ? ops.outer_gg : ops.outer_ee;
  return {rho.cwiseProduct(outer) / prob, prob};
}

/// One-step expectation channel M_g D rho D' M_g' + M_e D rho D' M_e'.
inline CMatrix kraus(const FockOperators& ops, Complex alpha, const CMatrix& rho) {
  if (alpha == Complex(0.0, 0.0)) return rho.cwiseProduct(ops.outer_sum);
  return apply_displacement(ops, alpha, rho).cwiseProduct(ops.outer_sum);
}

/// tr(a b), real for Hermitian arguments. Equals <n|rho|n> overlap when one
/// argument is a Fock projector.
inline double fidelity(const CMatrix& a, const CMatrix& b) {
  return a.cwiseProduct(b.transpose()).sum().real();
}

inline CMatrix commutator(const CMatrix& a, const CMatrix& b) { return a * b - b * a; }

/// <n|rho|n>.
inline double population(const CMatrix& rho, int n) { return rho(n, n).real(); }

/// Convex weight f(x) = (x + x^2) / 2 used by the Lyapunov functionals.
inline double convex_f(double x) { return 0.5 * (x + x * x); }

inline double hermiticity_error(const CMatrix& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline double min_eigenvalue(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline bool is_density_matrix(const CMatrix& rho) {
  if (rho.rows() != rho.cols()) return false;
  if (hermiticity_error(rho) > herm_tolerance) return false;
  if (std::abs(rho.trace() - Complex(1.0, 0.0)) > trace_tolerance) return false;
  return min_eigenvalue(0.5 * (rho + rho.adjoint())) >= -psd_tolerance;
}

/// Projects a drifted state back onto the density-matrix set: re-hermitize,
/// renormalize the trace, and zero eigenvalues below the floor. States with
/// an eigenvalue below the abort threshold are refused.
inline CMatrix repair(const CMatrix& rho) {
  const int dim = static_cast<int>(rho.rows());
  CMatrix h = 0.5 * (rho + rho.adjoint());
  const double tr = h.trace().real();
  if (!(tr > 0.1) || !std::isfinite(tr)) throw NumericalFault("repair: trace collapsed");
  h /= tr;

  // Cheap positive-definiteness probe; the eigensolver only runs when the
  // shifted Cholesky fails.
  Eigen::LLT<CMatrix> llt(h + (-repair_floor) * CMatrix::Identity(dim, dim));
  if (llt.info() == Eigen::Success) return h;

  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  if (es.info() != Eigen::Success) throw NumericalFault("repair: eigendecomposition failed");
  RVector vals = es.eigenvalues();
  if (vals.minCoeff() < repair_abort)
    throw NumericalFault("repair: state left the density-matrix set, min eigenvalue " +
                         std::to_string(vals.minCoeff()));
  for (int i = 0; i < dim; ++i)
    if (vals(i) < repair_floor) vals(i) = 0.0;
  const double sum = vals.sum();
  if (!(sum > 0.0)) throw NumericalFault("repair: spectrum collapsed");
  vals /= sum;
  return es.eigenvectors() * vals.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace photonbox
