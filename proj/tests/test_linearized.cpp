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

#include <catch2/catch.hpp>

#include "test_support.hpp"

using namespace photonbox;
using testsupport::reference_feedback;
using testsupport::reference_fock;

TEST_CASE("per-mode decay rates at the reference parameters", "[linearized]") {
  const OpenLoopExponents ex = open_loop_exponent(reference_fock(), 3);

  for (int n = 0; n <= 10; ++n) {
    if (n == 3) {
      CHECK(std::isnan(ex.per_n[n]));
      continue;
    }
    CHECK(ex.per_n[n] < 0.0);
  }

  // the target phase sits at pi/4, so the two neighbours decay alike
  CHECK(ex.per_n[2] == Approx(-0.041114509537527710).margin(1e-12));
  CHECK(std::abs(ex.per_n[2] - ex.per_n[4]) < 1e-3);

  // the slowest mode is the topmost level, whose measurement phase nearly
  // aliases the target band after crossing pi/2
  CHECK(ex.argmax_n == 10);
  CHECK(ex.lambda == Approx(-0.029757000911377396).margin(1e-12));
  for (int n = 0; n <= 10; ++n)
    if (n != 3) CHECK(ex.per_n[n] <= ex.lambda + 1e-15);
}

TEST_CASE("decoupled closed-loop rate is the max outside the controlled band",
          "[linearized]") {
  const FockParams p = reference_fock();
  const OpenLoopExponents ex = open_loop_exponent(p, 3);
  const auto decoupled = closed_loop_decoupled_exponent(p, 3);
  REQUIRE(decoupled.has_value());
  double expect = -1e300;
  for (int n = 0; n <= 10; ++n)
    if (n < 2 || n > 4) expect = std::max(expect, ex.per_n[n]);
  CHECK(*decoupled == Approx(expect).margin(1e-15));
  CHECK(*decoupled <= ex.lambda + 1e-15);
}

TEST_CASE("decoupled rate is undefined when every mode is controlled", "[linearized]") {
  FockParams p;
  p.n_max = 2;
  p.theta = 0.3;
  p.phi0 = 0.35;
  CHECK_FALSE(closed_loop_decoupled_exponent(p, 1).has_value());
}

TEST_CASE("degenerate parameters are rejected", "[linearized]") {
  FockParams p;
  p.theta = 0.0;
  CHECK_THROWS_AS(open_loop_exponent(p, 3), std::invalid_argument);
}

TEST_CASE("linearized open-loop step preserves the tangent space", "[linearized]") {
  const FockOperators ops = build_operators(reference_fock());
  RngStream rng(400, 0);

  CHECK(step_lin_open(ops, 3, CMatrix::Zero(ops.dim, ops.dim), rng).cwiseAbs().maxCoeff() ==
        0.0);

  for (int t = 0; t < 50; ++t) {
    TangentState tg = random_tangent(ops.dim, rng);
    REQUIRE(is_tangent_state(tg));
    for (Outcome s : {Outcome::g, Outcome::e}) {
      const TangentState next = lin_open_apply(ops, 3, s, tg);
      CHECK(hermiticity_error(next) < 1e-12);
      CHECK(std::abs(next.trace()) < 1e-12);
    }
  }
}

TEST_CASE("linearized open-loop step decouples entrywise", "[linearized]") {
  const FockOperators ops = build_operators(reference_fock());
  RngStream rng(401, 0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const TangentState tg = random_tangent(ops.dim, rng);
    for (Outcome s : {Outcome::g, Outcome::e}) {
      const TangentState next = lin_open_apply(ops, 3, s, tg);
      for (int n1 = 0; n1 < ops.dim; ++n1)
        for (int n2 = 0; n2 < ops.dim; ++n2) {
          if (n1 == 3 && n2 == 3) continue;
          const Complex want = lin_open_entry_factor(ops, 3, s, n1, n2) * tg(n1, n2);
          worst = std::max(worst, std::abs(next(n1, n2) - want));
        }
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("empirical open-loop exponent matches the analytic rate", "[linearized][slow]") {
  const FockOperators ops = build_operators(reference_fock());
  const OpenLoopExponents ex = open_loop_exponent(reference_fock(), 3);
  double acc = 0.0;
  const int seeds = 4;
  for (int sdx = 0; sdx < seeds; ++sdx) {
    RngStream rng(402, sdx);
    acc += empirical_open_exponent(ops, 3, 100000, rng);
  }
  const double mean = acc / seeds;
  CHECK(std::abs(mean - ex.lambda) / std::abs(ex.lambda) < 0.1);
}

TEST_CASE("reduced chain matches the full linearized closed loop", "[linearized]") {
  const FockOperators ops = build_operators(reference_fock());
  RngStream rng(403, 0);
  for (int delay : {0, 1, 5}) {
    const FeedbackParams fp = reference_feedback(delay);
    for (int t = 0; t < 30; ++t) {
      LinClosedState st{random_tangent(ops.dim, rng), std::vector<Complex>(delay)};
      for (Complex& zj : st.z) zj = rng.complex_gaussian();
      const ReducedState rs{st.tangent(3, 2), st.tangent(4, 3), st.z};
      for (Outcome s : {Outcome::g, Outcome::e}) {
        const LinClosedState f = lin_closed_apply(ops, fp, s, st);
        const ReducedState r = reduced_apply(ops, fp, s, rs);
        CHECK(std::abs(f.tangent(3, 2) - r.x) < 1e-12);
        CHECK(std::abs(f.tangent(4, 3) - r.y) < 1e-12);
        REQUIRE(f.z.size() == r.z.size());
        for (std::size_t j = 0; j < r.z.size(); ++j)
          CHECK(std::abs(f.z[j] - r.z[j]) < 1e-12);
      }
    }
  }
}

TEST_CASE("zero state is a fixed point of every linearized chain", "[linearized]") {
  const FockOperators ops = build_operators(reference_fock());
  const FeedbackParams fp = reference_feedback(5);
  const LinClosedState zero{CMatrix::Zero(ops.dim, ops.dim), std::vector<Complex>(5)};
  for (Outcome s : {Outcome::g, Outcome::e}) {
    const LinClosedState next = lin_closed_apply(ops, fp, s, zero);
    CHECK(next.tangent.cwiseAbs().maxCoeff() == 0.0);
    for (const Complex& zj : next.z) CHECK(zj == Complex(0.0, 0.0));
    const ReducedState rnext =
        reduced_apply(ops, fp, s, ReducedState{Complex(0, 0), Complex(0, 0),
                                               std::vector<Complex>(5)});
    CHECK(std::abs(rnext.x) == 0.0);
    CHECK(std::abs(rnext.y) == 0.0);
  }
}

TEST_CASE("closed-loop tangent stays Hermitian and trace-free", "[linearized]") {
  const FockOperators ops = build_operators(reference_fock());
  const FeedbackParams fp = reference_feedback(5);
  RngStream rng(404, 0);
  LinClosedState st{random_tangent(ops.dim, rng), std::vector<Complex>(5)};
  for (Complex& zj : st.z) zj = rng.complex_gaussian();
  for (int k = 0; k < 200; ++k) {
    st = step_lin_closed(ops, fp, st, rng);
    REQUIRE(hermiticity_error(st.tangent) < 1e-12);
    REQUIRE(std::abs(st.tangent.trace()) < 1e-12);
    const double m = max_entry_norm(st.tangent);
    if (m > 0.0) st.tangent /= m;  // keep the check running at unit scale
  }
}

TEST_CASE("weighted norm and its contraction", "[linearized]") {
  const FockParams p = reference_fock();
  const FockOperators ops = build_operators(p);

  ReducedState zero{Complex(0, 0), Complex(0, 0), std::vector<Complex>(1)};
  FeedbackParams fp1 = reference_feedback(1);
  CHECK(supermartingale_norm(p, fp1, zero) == 0.0);

  // mu at one step of delay and the reference target
  ReducedState unit_z{Complex(0, 0), Complex(0, 0), {Complex(1, 0)}};
  CHECK(supermartingale_norm(p, fp1, unit_z) ==
        Approx(std::sqrt(3.0) + 2.0).margin(1e-12));

  FockParams flat;
  flat.theta = 0.0;
  CHECK_THROWS_AS(supermartingale_norm(flat, fp1, unit_z), std::invalid_argument);

  // enumerated one-step expectation contracts by sigma (1 + 2 eps (n_bar+1)),
  // at the reference gain and at a gain below the contraction bound
  RngStream rng(405, 0);
  const double sigma = std::abs(std::cos(p.theta));
  for (double eps : {1.0 / 7.0, 0.002}) {
    FeedbackParams fp = reference_feedback(5);
    fp.epsilon = eps;
    const double factor = sigma * (1.0 + 2.0 * eps * (fp.n_bar + 1));
    const double pg = ops.cos_phi(3) * ops.cos_phi(3);
    for (int t = 0; t < 200; ++t) {
      ReducedState x{rng.complex_gaussian(), rng.complex_gaussian(),
                     std::vector<Complex>(5)};
      for (Complex& zj : x.z) zj = rng.complex_gaussian();
      const double expected =
          pg * supermartingale_norm(p, fp, reduced_apply(ops, fp, Outcome::g, x)) +
          (1.0 - pg) * supermartingale_norm(p, fp, reduced_apply(ops, fp, Outcome::e, x));
      REQUIRE(expected <= factor * supermartingale_norm(p, fp, x) + 1e-12);
    }
  }
  CHECK(contraction_epsilon_bound(p, fp1) ==
        Approx((1.0 - sigma) / 8.0).margin(1e-15));
}

TEST_CASE("estimator error follows the open-loop linearization", "[linearized]") {
  const FockOperators ops = build_operators(reference_fock());
  const FeedbackParams fp = reference_feedback(5);
  RngStream rng(406, 0);
  for (int t = 0; t < 30; ++t) {
    LinFilterState st{random_tangent(ops.dim, rng), random_tangent(ops.dim, rng),
                      std::vector<Complex>(5)};
    for (Complex& zj : st.z) zj = rng.complex_gaussian();
    for (Outcome s : {Outcome::g, Outcome::e}) {
      const LinFilterState next = lin_filter_apply(ops, fp, s, st);
      const TangentState want = lin_open_apply(ops, 3, s, st.tangent_est - st.tangent);
      CHECK(((next.tangent_est - next.tangent) - want).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("coincident estimator perturbation stays coincident", "[linearized]") {
  const FockOperators ops = build_operators(reference_fock());
  const FeedbackParams fp = reference_feedback(3);
  RngStream rng(407, 0);
  const TangentState tg = random_tangent(ops.dim, rng);
  LinFilterState st{tg, tg, std::vector<Complex>(3)};
  for (int k = 0; k < 50; ++k) {
    st = step_lin_filter(ops, fp, st, rng);
    REQUIRE((st.tangent_est - st.tangent).cwiseAbs().maxCoeff() < 1e-12);
    const double m = std::max(max_entry_norm(st.tangent), 1e-30);
    st.tangent /= m;
    st.tangent_est = st.tangent;
  }
}

TEST_CASE("closed-loop and filter chains decay empirically", "[linearized][slow]") {
  const FockOperators ops = build_operators(reference_fock());
  for (double eps : {1.0 / 7.0, 0.002}) {
    FeedbackParams fp = reference_feedback(5);
    fp.epsilon = eps;
    RngStream r1(408, 1), r2(408, 2), r3(408, 3);
    CHECK(empirical_reduced_exponent(ops, fp, 50000, r1) < 0.0);
    CHECK(empirical_closed_exponent(ops, fp, 50000, r2) < 0.0);
    CHECK(empirical_filter_exponent(ops, fp, 50000, r3) < 0.0);
  }
}

TEST_CASE("empirical exponent guards against a vanishing state", "[linearized]") {
  CHECK_THROWS_AS(
      empirical_exponent(
          0.0, 10, [](double x) { return 0.0 * x; }, [](double x) { return std::abs(x); },
          [](double& x, double c) { x *= c; }),
      std::invalid_argument);
}
