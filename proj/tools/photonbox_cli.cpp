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

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <photonbox/photonbox.hpp>

namespace {

using namespace photonbox;

struct CommonFlags {
  int nmax = 0;
  double phi0 = 0.0, theta = 0.0;
  int nbar = 0;
  double epsilon = 0.0, eta = 0.0, alpha_max = 0.0;
  int delay = 0;
  long steps = 0;
  int trajectories = 0;
  unsigned long long seed = 0;
  long record_every = 0;
  std::string out, config_path, law_variant, rho0, rho_est0;
  int threads = 0;

  CLI::Option* o_nmax = nullptr;
  CLI::Option* o_phi0 = nullptr;
  CLI::Option* o_theta = nullptr;
  CLI::Option* o_nbar = nullptr;
  CLI::Option* o_epsilon = nullptr;
  CLI::Option* o_eta = nullptr;
  CLI::Option* o_alpha_max = nullptr;
  CLI::Option* o_delay = nullptr;
  CLI::Option* o_steps = nullptr;
  CLI::Option* o_traj = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_record = nullptr;
  CLI::Option* o_out = nullptr;
  CLI::Option* o_config = nullptr;
  CLI::Option* o_law = nullptr;
  CLI::Option* o_rho0 = nullptr;
  CLI::Option* o_rho_est0 = nullptr;
  CLI::Option* o_threads = nullptr;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  f.o_config = cmd->add_option("--config", f.config_path, "config file (key = value lines)");
  f.o_nmax = cmd->add_option("--nmax", f.nmax, "photon number truncation");
  f.o_phi0 = cmd->add_option("--phi0", f.phi0, "Ramsey phase offset");
  f.o_theta = cmd->add_option("--theta", f.theta, "per-photon phase");
  f.o_nbar = cmd->add_option("--nbar", f.nbar, "target photon number");
  f.o_epsilon = cmd->add_option("--epsilon", f.epsilon, "feedback gain");
  f.o_eta = cmd->add_option("--eta", f.eta, "fidelity threshold of the rescue branch");
  f.o_alpha_max = cmd->add_option("--alpha-max", f.alpha_max, "control amplitude bound");
  f.o_delay = cmd->add_option("--delay", f.delay, "feedback delay in steps");
  f.o_law = cmd->add_option("--law-variant", f.law_variant,
                            "rescue objective: delayed or no_delay");
  f.o_rho0 = cmd->add_option("--rho0", f.rho0, "initial state: fock:N, coherent:RE[,IM], mixed");
  f.o_rho_est0 =
      cmd->add_option("--rho-est0", f.rho_est0, "estimator initial state (filter mode)");
  f.o_steps = cmd->add_option("--steps", f.steps, "steps per trajectory");
  f.o_traj = cmd->add_option("--trajectories", f.trajectories, "trajectories (or sample size)");
  f.o_seed = cmd->add_option("--seed", f.seed, "master seed");
  f.o_record = cmd->add_option("--record-every", f.record_every, "record stride");
  f.o_out = cmd->add_option("--out", f.out, "CSV output path");
  f.o_threads = cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
}

ExperimentConfig build_config(const CommonFlags& f, Mode mode, long default_steps,
                              int default_traj) {
  ExperimentConfig cfg;
  cfg.steps = default_steps;
  cfg.n_traj = default_traj;
  if (f.o_config->count() > 0) cfg = read_config(f.config_path);
  cfg.mode = mode;
  if (f.o_nmax->count()) cfg.fock.n_max = f.nmax;
  if (f.o_phi0->count()) cfg.fock.phi0 = f.phi0;
  if (f.o_theta->count()) cfg.fock.theta = f.theta;
  if (f.o_nbar->count()) cfg.feedback.n_bar = f.nbar;
  if (f.o_epsilon->count()) cfg.feedback.epsilon = f.epsilon;
  if (f.o_eta->count()) cfg.feedback.eta = f.eta;
  if (f.o_alpha_max->count()) cfg.feedback.alpha_max = f.alpha_max;
  if (f.o_delay->count()) cfg.feedback.delay = f.delay;
  if (f.o_law->count()) cfg.feedback.law = parse_law_variant(f.law_variant);
  if (f.o_rho0->count()) cfg.rho0 = parse_state_spec(f.rho0);
  if (f.o_rho_est0->count()) {
    cfg.rho_est0 = parse_state_spec(f.rho_est0);
    cfg.rho_est0_set = true;
  }
  if (f.o_steps->count()) cfg.steps = f.steps;
  if (f.o_traj->count()) cfg.n_traj = f.trajectories;
  if (f.o_seed->count()) cfg.seed = f.seed;
  if (f.o_record->count()) cfg.record_every = f.record_every;
  if (f.o_out->count()) cfg.out = f.out;
  return cfg;
}

int run_trajectory_mode(const ExperimentConfig& cfg, int threads) {
  const ExperimentResult result = run_experiment(cfg, threads);
  const EnsembleSummary& s = result.summary;
  std::printf("mode=%s trajectories=%d steps=%ld seed=%llu delay=%d\n",
              to_string(cfg.mode).c_str(), s.n_traj, s.steps,
              static_cast<unsigned long long>(cfg.seed), cfg.feedback.delay);
  std::printf("mean fidelity: k=0 %.6f -> k=%ld %.6f\n", s.mean_fidelity.front(),
              s.recorded_k.back(), s.mean_fidelity.back());
  if (!s.mean_frobenius.empty())
    std::printf("mean frobenius distance at k=%ld: %.6g\n", s.recorded_k.back(),
                s.mean_frobenius.back());
  std::printf("converged:");
  for (std::size_t n = 0; n < s.converged_count.size(); ++n)
    if (s.converged_count[n] > 0)
      std::printf(" n=%zu:%ld", n, s.converged_count[n]);
  std::printf(" unconverged:%ld\n", s.unconverged);
  if (!cfg.out.empty()) std::printf("wrote %s\n", cfg.out.c_str());
  return 0;
}

int run_lyapunov(const ExperimentConfig& cfg) {
  const FockOperators ops = build_operators(cfg.fock);
  const FeedbackParams& fp = cfg.feedback;
  const OpenLoopExponents ex = open_loop_exponent(cfg.fock, fp.n_bar);

  std::printf("per-mode decay rates around n_bar=%d:\n", fp.n_bar);
  for (int n = 0; n <= cfg.fock.n_max; ++n) {
    if (n == fp.n_bar) continue;
    std::printf("  n=%-2d  %+.12f%s\n", n, ex.per_n[static_cast<std::size_t>(n)],
                n == ex.argmax_n ? "   <- largest" : "");
  }
  std::printf("largest open-loop exponent: %+.12f (mode n=%d)\n", ex.lambda, ex.argmax_n);
  const auto decoupled = closed_loop_decoupled_exponent(cfg.fock, fp.n_bar);
  if (decoupled)
    std::printf("largest exponent outside the controlled band: %+.12f\n", *decoupled);
  else
    std::printf("largest exponent outside the controlled band: undefined (empty set)\n");

  const double sigma = std::abs(std::cos(cfg.fock.theta));
  const double bound = contraction_epsilon_bound(cfg.fock, fp);
  std::printf("sigma = %.9f, contraction requires epsilon < %.9f (configured %.9f%s)\n",
              sigma, bound, fp.epsilon, fp.epsilon < bound ? "" : ", NOT met");

  const long steps = cfg.steps;
  const int seeds = cfg.n_traj;
  auto average = [&](auto&& estimator, const char* name) {
    double acc = 0.0;
    for (int sdx = 0; sdx < seeds; ++sdx) {
      RngStream rng(cfg.seed, static_cast<std::uint64_t>(sdx));
      acc += estimator(rng);
    }
    std::printf("empirical %-28s %+.6f  (%d seeds x %ld steps)\n", name,
                acc / static_cast<double>(seeds), seeds, steps);
    return acc / static_cast<double>(seeds);
  };
  average([&](RngStream& rng) { return empirical_open_exponent(ops, fp.n_bar, steps, rng); },
          "open-loop exponent:");
  try {
    average([&](RngStream& rng) { return empirical_reduced_exponent(ops, fp, steps, rng); },
            "reduced closed-loop exponent:");
    average([&](RngStream& rng) { return empirical_closed_exponent(ops, fp, steps, rng); },
            "closed-loop exponent:");
    average([&](RngStream& rng) { return empirical_filter_exponent(ops, fp, steps, rng); },
            "filter exponent:");
  } catch (const std::invalid_argument& e) {
    std::printf("closed-loop estimates skipped: %s\n", e.what());
  }
  return 0;
}

int run_lemmas(const ExperimentConfig& cfg) {
  const FockOperators ops = build_operators(cfg.fock);
  const FeedbackParams& fp = cfg.feedback;
  const int samples = cfg.n_traj;
  constexpr double slack_floor = -1e-10;

  RngStream rng(cfg.seed, 0);
  double worst_fid = 1e300, worst_v = 1e300;
  int accepted = 0;
  while (accepted < samples) {
    ControlState chi{random_density(ops.dim, rng),
                     std::vector<Complex>(static_cast<std::size_t>(fp.delay))};
    for (Complex& b : chi.betas) b = rng.uniform_disk(fp.alpha_max);
    if (population(predict_state(ops, chi), fp.n_bar) < fp.eta) continue;
    ++accepted;
    const DriftSlack slack = gradient_drift_slack(ops, fp, chi);
    worst_fid = std::min(worst_fid, slack.fidelity_slack);
    worst_v = std::min(worst_v, slack.lyapunov_slack);
  }
  std::printf("gradient-branch drift oracle: %d states, d=%d, epsilon=%.9g\n", samples,
              fp.delay, fp.epsilon);
  std::printf("  worst fidelity slack  %+.3e   %s\n", worst_fid,
              worst_fid >= slack_floor ? "PASS" : "FAIL");
  std::printf("  worst lyapunov slack  %+.3e   %s\n", worst_v,
              worst_v >= slack_floor ? "PASS" : "FAIL");

  RngStream rng2(cfg.seed, 1);
  double min_post = 1e300, min_overlap = 1e300;
  accepted = 0;
  while (accepted < samples) {
    ControlState chi{random_density(ops.dim, rng2),
                     std::vector<Complex>(static_cast<std::size_t>(fp.delay))};
    for (Complex& b : chi.betas) b = rng2.uniform_disk(fp.alpha_max);
    if (population(predict_state(ops, chi), fp.n_bar) >= fp.eta) continue;
    ++accepted;
    const RescueKick kick = rescue_kick(ops, fp, chi);
    min_post = std::min(min_post, kick.min_post_fidelity);
    min_overlap = std::min(min_overlap, std::min(kick.branch_overlap_g, kick.branch_overlap_e));
  }
  std::printf("rescue-branch kick oracle: %d states, eta=%.9g, alpha_max=%.9g\n", samples,
              fp.eta, fp.alpha_max);
  std::printf("  min post fidelity     %.6f      %s (target >= 2 eta = %.6f)\n", min_post,
              min_post >= 2.0 * fp.eta ? "PASS" : "FAIL", 2.0 * fp.eta);
  std::printf("  empirical delta       %.6f      (min branch overlap)\n", min_overlap);
  std::printf("  largest eta this sample supports: %.6f\n", min_post / 2.0);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"photon-box: discrete-time QND measurement and delayed feedback simulator"};
  app.require_subcommand(1);

  CLI::App* c_open = app.add_subcommand("openloop", "measurement-only ensemble");
  CLI::App* c_closed = app.add_subcommand("closedloop", "delayed-feedback ensemble");
  CLI::App* c_filter = app.add_subcommand("filter", "system-observer ensemble");
  CLI::App* c_lyap =
      app.add_subcommand("lyapunov", "decay-rate tables and empirical exponents");
  CLI::App* c_lemmas = app.add_subcommand("lemmas", "one-step drift and kick oracles");

  CommonFlags f_open, f_closed, f_filter, f_lyap, f_lemmas;
  add_common_flags(c_open, f_open);
  add_common_flags(c_closed, f_closed);
  add_common_flags(c_filter, f_filter);
  add_common_flags(c_lyap, f_lyap);
  add_common_flags(c_lemmas, f_lemmas);

  try {
    app.parse(argc, argv);
    if (c_open->parsed())
      return run_trajectory_mode(build_config(f_open, Mode::openloop, 400, 100),
                                 f_open.threads);
    if (c_closed->parsed())
      return run_trajectory_mode(build_config(f_closed, Mode::closedloop, 400, 100),
                                 f_closed.threads);
    if (c_filter->parsed())
      return run_trajectory_mode(build_config(f_filter, Mode::filter, 400, 100),
                                 f_filter.threads);
    if (c_lyap->parsed()) {
      ExperimentConfig cfg = build_config(f_lyap, Mode::lyapunov, 100000, 20);
      validate_config(cfg);
      return run_lyapunov(cfg);
    }
    if (c_lemmas->parsed()) {
      ExperimentConfig cfg = build_config(f_lemmas, Mode::lemmas, 0, 200);
      validate_config(cfg);
      return run_lemmas(cfg);
    }
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const photonbox::NumericalFault& e) {
    std::fprintf(stderr, "numerical fault: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
