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

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <deque>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "photonbox/config.hpp"
#include "photonbox/feedback.hpp"
#include "photonbox/filter.hpp"
#include "photonbox/fock.hpp"
#include "photonbox/openloop.hpp"
#include "photonbox/rng.hpp"

namespace photonbox {

/// One recorded CSV row. Rows with traj == -1 hold the ensemble mean curve.
struct StepRow {
  long k = 0;
  int traj = 0;
  double fidelity = 0.0;
  char outcome = '-';
  double alpha_re = 0.0;
  double alpha_im = 0.0;
  double frob_dist = 0.0;
};

// A trajectory counts as converged to level n when <n|rho|n> stays above the
// threshold over the last `classification_window` recorded states.
inline constexpr double classification_threshold = 0.999;
inline constexpr int classification_window = 50;

struct EnsembleSummary {
  std::vector<long> recorded_k;
  std::vector<double> mean_fidelity;
  std::vector<double> mean_frobenius;  // filter mode only
  std::vector<long> converged_count;   // per photon number
  std::vector<double> converged_fraction;
  long unconverged = 0;
  int n_traj = 0;
  long steps = 0;
};

struct ExperimentResult {
  EnsembleSummary summary;
  std::vector<StepRow> rows;  // all trajectories, then the mean rows
  bool with_frobenius = false;
};

namespace detail {

struct TrajectoryData {
  std::vector<StepRow> rows;
  int converged_n = -1;
};

inline bool record_now(long k, long steps, long stride) {
  return k == 0 || k == steps || (k % stride) == 0;
}

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

/// Tracks the diagonals of the last `classification_window` recorded states.
class ClassificationWindow {
 public:
  explicit ClassificationWindow(int dim) : dim_(dim) {}

  void push(const CMatrix& rho) {
    diags_.push_back(rho.diagonal().real());
    if (diags_.size() > static_cast<std::size_t>(classification_window)) diags_.pop_front();
  }

  int classify() const {
    for (int n = 0; n < dim_; ++n) {
      bool all = !diags_.empty();
      for (const RVector& d : diags_) {
        if (d(n) <= classification_threshold) {
          all = false;
          break;
        }
      }
      if (all) return n;
    }
    return -1;
  }

 private:
  int dim_;
  std::deque<RVector> diags_;
};

inline TrajectoryData run_trajectory(const FockOperators& ops, const ExperimentConfig& cfg,
                                     const CMatrix& rho0, const CMatrix& rho_est0, int traj) {
  RngStream rng(cfg.seed, static_cast<std::uint64_t>(traj));
  const int n_bar = cfg.feedback.n_bar;
  TrajectoryData data;
  ClassificationWindow window(ops.dim);

  auto record = [&](long k, const CMatrix& rho, char outcome, Complex alpha, double frob) {
    StepRow row;
    row.k = k;
    row.traj = traj;
    row.fidelity = clamp01(population(rho, n_bar));
    row.outcome = outcome;
    row.alpha_re = alpha.real();
    row.alpha_im = alpha.imag();
    row.frob_dist = frob;
    data.rows.push_back(row);
    window.push(rho);
  };

  switch (cfg.mode) {
    case Mode::openloop: {
      CMatrix rho = rho0;
      record(0, rho, '-', Complex(0.0, 0.0), 0.0);
      for (long k = 1; k <= cfg.steps; ++k) {
        OpenStep step = step_open(ops, rho, rng);
        rho = std::move(step.state);
        if (record_now(k, cfg.steps, cfg.record_every))
          record(k, rho, outcome_char(step.outcome), Complex(0.0, 0.0), 0.0);
      }
      break;
    }
    case Mode::closedloop: {
      ControlState chi{rho0, std::vector<Complex>(
                                 static_cast<std::size_t>(cfg.feedback.delay))};
      record(0, chi.rho, '-', Complex(0.0, 0.0), 0.0);
      for (long k = 1; k <= cfg.steps; ++k) {
        ClosedStep step = step_closed(ops, cfg.feedback, chi, rng);
        chi = std::move(step.state);
        if (record_now(k, cfg.steps, cfg.record_every))
          record(k, chi.rho, outcome_char(step.outcome), step.alpha_applied, 0.0);
      }
      break;
    }
    case Mode::filter: {
      JointState xi{rho0, rho_est0,
                    std::vector<Complex>(static_cast<std::size_t>(cfg.feedback.delay))};
      record(0, xi.rho, '-', Complex(0.0, 0.0),
             frobenius_distance(xi.rho, xi.rho_est));
      for (long k = 1; k <= cfg.steps; ++k) {
        JointStep step = step_joint(ops, cfg.feedback, xi, rng);
        xi = std::move(step.state);
        if (record_now(k, cfg.steps, cfg.record_every))
          record(k, xi.rho, outcome_char(step.outcome), step.alpha_applied,
                 frobenius_distance(xi.rho, xi.rho_est));
      }
      break;
    }
    default:
      throw ConfigError("run_experiment handles openloop, closedloop and filter modes");
  }
  data.converged_n = window.classify();
  return data;
}

}  // namespace detail

inline void write_csv(const ExperimentResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "k,traj,fidelity,outcome,alpha_re,alpha_im";
  if (result.with_frobenius) out << ",frob_dist";
  out << "\n";
  char buf[160];
  for (const StepRow& row : result.rows) {
    int len = std::snprintf(buf, sizeof(buf), "%ld,%d,%.17g,%c,%.17g,%.17g", row.k, row.traj,
                            row.fidelity, row.outcome, row.alpha_re, row.alpha_im);
    out.write(buf, len);
    if (result.with_frobenius) {
      len = std::snprintf(buf, sizeof(buf), ",%.17g", row.frob_dist);
      out.write(buf, len);
    }
    out.put('\n');
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

/// Runs the configured ensemble. Trajectories own independent random streams
/// keyed by their index, so the result does not depend on the worker count;
/// rows and means are merged in trajectory order. Writes cfg.out when set.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int n_threads = 0) {
  validate_config(cfg);
  if (cfg.mode != Mode::openloop && cfg.mode != Mode::closedloop && cfg.mode != Mode::filter)
    throw ConfigError("run_experiment handles openloop, closedloop and filter modes");

  const FockOperators ops = build_operators(cfg.fock);
  const CMatrix rho0 = make_state(ops, cfg.rho0);
  const CMatrix rho_est0 =
      cfg.mode == Mode::filter ? make_state(ops, cfg.rho_est0) : CMatrix();

  std::vector<detail::TrajectoryData> results(static_cast<std::size_t>(cfg.n_traj));
  int workers = n_threads > 0 ? n_threads
                              : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, cfg.n_traj));

  std::atomic<int> cursor{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = cursor.fetch_add(1);
      if (i >= cfg.n_traj || failed.load()) break;
      try {
        results[static_cast<std::size_t>(i)] =
            detail::run_trajectory(ops, cfg, rho0, rho_est0, i);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        failed.store(true);
        if (failure.empty())
          failure = "trajectory " + std::to_string(i) + ": " + e.what();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw NumericalFault(failure);

  ExperimentResult result;
  result.with_frobenius = cfg.mode == Mode::filter;
  EnsembleSummary& sum = result.summary;
  sum.n_traj = cfg.n_traj;
  sum.steps = cfg.steps;
  sum.converged_count.assign(static_cast<std::size_t>(ops.dim), 0);

  const std::size_t n_recorded = results.front().rows.size();
  for (const StepRow& row : results.front().rows) sum.recorded_k.push_back(row.k);
  sum.mean_fidelity.assign(n_recorded, 0.0);
  if (result.with_frobenius) sum.mean_frobenius.assign(n_recorded, 0.0);

  for (const detail::TrajectoryData& data : results) {
    for (std::size_t i = 0; i < n_recorded; ++i) {
      sum.mean_fidelity[i] += data.rows[i].fidelity;
      if (result.with_frobenius) sum.mean_frobenius[i] += data.rows[i].frob_dist;
    }
    if (data.converged_n >= 0)
      ++sum.converged_count[static_cast<std::size_t>(data.converged_n)];
    else
      ++sum.unconverged;
    result.rows.insert(result.rows.end(), data.rows.begin(), data.rows.end());
  }
  for (double& v : sum.mean_fidelity) v /= static_cast<double>(cfg.n_traj);
  for (double& v : sum.mean_frobenius) v /= static_cast<double>(cfg.n_traj);
  sum.converged_fraction.resize(sum.converged_count.size());
  for (std::size_t n = 0; n < sum.converged_count.size(); ++n)
    sum.converged_fraction[n] =
        static_cast<double>(sum.converged_count[n]) / static_cast<double>(cfg.n_traj);

  for (std::size_t i = 0; i < n_recorded; ++i) {
    StepRow mean;
    mean.k = sum.recorded_k[i];
    mean.traj = -1;
    mean.fidelity = sum.mean_fidelity[i];
    mean.outcome = '-';
    if (result.with_frobenius) mean.frob_dist = sum.mean_frobenius[i];
    result.rows.push_back(mean);
  }

  if (!cfg.out.empty()) write_csv(result, cfg.out);
  return result;
}

/// Open-loop ensemble from an explicit initial state.
inline EnsembleSummary run_open_ensemble(const FockOperators& ops, const CMatrix& rho0,
                                         long steps, int n_traj, std::uint64_t seed,
                                         long record_every = 1) {
  ExperimentConfig cfg;
  cfg.mode = Mode::openloop;
  cfg.fock = ops.params;
  cfg.steps = steps;
  cfg.n_traj = n_traj;
  cfg.seed = seed;
  cfg.record_every = record_every;
  validate_config(cfg);

  // Reuses the trajectory runner directly so rho0 need not come from a StateSpec.
  std::vector<detail::TrajectoryData> results(static_cast<std::size_t>(n_traj));
  for (int i = 0; i < n_traj; ++i)
    results[static_cast<std::size_t>(i)] = detail::run_trajectory(ops, cfg, rho0, CMatrix(), i);

  EnsembleSummary sum;
  sum.n_traj = n_traj;
  sum.steps = steps;
  sum.converged_count.assign(static_cast<std::size_t>(ops.dim), 0);
  const std::size_t n_recorded = results.front().rows.size();
  for (const StepRow& row : results.front().rows) sum.recorded_k.push_back(row.k);
  sum.mean_fidelity.assign(n_recorded, 0.0);
  for (const detail::TrajectoryData& data : results) {
    for (std::size_t i = 0; i < n_recorded; ++i) sum.mean_fidelity[i] += data.rows[i].fidelity;
    if (data.converged_n >= 0)
      ++sum.converged_count[static_cast<std::size_t>(data.converged_n)];
    else
      ++sum.unconverged;
  }
  for (double& v : sum.mean_fidelity) v /= static_cast<double>(n_traj);
  sum.converged_fraction.resize(sum.converged_count.size());
  for (std::size_t n = 0; n < sum.converged_count.size(); ++n)
    sum.converged_fraction[n] =
        static_cast<double>(sum.converged_count[n]) / static_cast<double>(n_traj);
  return sum;
}

}  // namespace photonbox
