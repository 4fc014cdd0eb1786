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
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "photonbox/feedback.hpp"
#include "photonbox/fock.hpp"

namespace photonbox {

/// Malformed or inconsistent experiment configuration.
struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

enum class Mode { openloop, closedloop, filter, lyapunov, lemmas };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::openloop: return "openloop";
    case Mode::closedloop: return "closedloop";
    case Mode::filter: return "filter";
    case Mode::lyapunov: return "lyapunov";
    case Mode::lemmas: return "lemmas";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "openloop") return Mode::openloop;
  if (s == "closedloop") return Mode::closedloop;
  if (s == "filter") return Mode::filter;
  if (s == "lyapunov") return Mode::lyapunov;
  if (s == "lemmas") return Mode::lemmas;
  throw ConfigError("unknown mode '" + s + "'");
}

inline std::string to_string(LawVariant v) {
  return v == LawVariant::delayed ? "delayed" : "no_delay";
}

inline LawVariant parse_law_variant(const std::string& s) {
  if (s == "delayed") return LawVariant::delayed;
  if (s == "no_delay") return LawVariant::no_delay;
  throw ConfigError("unknown law_variant '" + s + "'");
}

/// Initial-state description: fock:N, coherent:RE[,IM], or mixed.
struct StateSpec {
  enum class Kind { fock, coherent, mixed };
  Kind kind = Kind::coherent;
  int n = 0;
  Complex alpha{1.7320508075688772, 0.0};

  bool operator==(const StateSpec& o) const {
    if (kind != o.kind) return false;
    if (kind == Kind::fock) return n == o.n;
    if (kind == Kind::coherent) return alpha == o.alpha;
    return true;
  }
};

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string to_string(const StateSpec& s) {
  switch (s.kind) {
    case StateSpec::Kind::fock: return "fock:" + std::to_string(s.n);
    case StateSpec::Kind::coherent:
      return "coherent:" + format_number(s.alpha.real()) + "," +
             format_number(s.alpha.imag());
    case StateSpec::Kind::mixed: return "mixed";
  }
  return "?";
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("invalid number '" + s + "' for " + what);
  }
  if (pos != s.size()) throw ConfigError("invalid number '" + s + "' for " + what);
  return v;
}

inline long parse_long(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("invalid integer '" + s + "' for " + what);
  }
  if (pos != s.size()) throw ConfigError("invalid integer '" + s + "' for " + what);
  return v;
}

inline StateSpec parse_state_spec(const std::string& s) {
  StateSpec spec;
  if (s == "mixed") {
    spec.kind = StateSpec::Kind::mixed;
    return spec;
  }
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  if (head == "fock") {
    if (colon == std::string::npos) throw ConfigError("fock state needs a level, e.g. fock:3");
    spec.kind = StateSpec::Kind::fock;
    spec.n = static_cast<int>(parse_long(s.substr(colon + 1), "fock level"));
    return spec;
  }
  if (head == "coherent") {
    if (colon == std::string::npos)
      throw ConfigError("coherent state needs an amplitude, e.g. coherent:1.7");
    spec.kind = StateSpec::Kind::coherent;
    const std::string body = s.substr(colon + 1);
    const auto comma = body.find(',');
    if (comma == std::string::npos) {
      spec.alpha = Complex(parse_double(body, "coherent amplitude"), 0.0);
    } else {
      spec.alpha = Complex(parse_double(body.substr(0, comma), "coherent amplitude"),
                           parse_double(body.substr(comma + 1), "coherent amplitude"));
    }
    return spec;
  }
  throw ConfigError("unknown state spec '" + s + "'");
}

inline CMatrix make_state(const FockOperators& ops, const StateSpec& spec) {
  switch (spec.kind) {
    case StateSpec::Kind::fock: return fock_state(ops, spec.n);
    case StateSpec::Kind::coherent: return coherent_state(ops, spec.alpha);
    case StateSpec::Kind::mixed: return maximally_mixed(ops);
  }
  throw ConfigError("unreachable state spec");
}

/// Full description of one experiment run. Serialized as a flat key = value
/// file; keys match the CLI flag names.
struct ExperimentConfig {
  Mode mode = Mode::openloop;
  FockParams fock;
  FeedbackParams feedback;
  StateSpec rho0;
  StateSpec rho_est0{StateSpec::Kind::mixed, 0, Complex(0.0, 0.0)};
  bool rho_est0_set = false;
  long steps = 400;
  int n_traj = 100;
  std::uint64_t seed = 1;
  long record_every = 1;
  std::string out;

  bool operator==(const ExperimentConfig& o) const {
    return mode == o.mode && fock.n_max == o.fock.n_max && fock.phi0 == o.fock.phi0 &&
           fock.theta == o.fock.theta && feedback.n_bar == o.feedback.n_bar &&
           feedback.epsilon == o.feedback.epsilon && feedback.eta == o.feedback.eta &&
           feedback.alpha_max == o.feedback.alpha_max && feedback.delay == o.feedback.delay &&
           feedback.law == o.feedback.law && rho0 == o.rho0 && rho_est0 == o.rho_est0 &&
           rho_est0_set == o.rho_est0_set && steps == o.steps && n_traj == o.n_traj &&
           seed == o.seed && record_every == o.record_every && out == o.out;
  }
};

/// Cross-field consistency checks beyond the per-module parameter checks.
inline void validate_config(const ExperimentConfig& cfg) {
  validate_params(cfg.fock);
  validate_feedback(cfg.fock, cfg.feedback);
  if (cfg.steps < 0) throw ConfigError("steps must be >= 0");
  if (cfg.n_traj < 1) throw ConfigError("trajectories must be >= 1");
  if (cfg.record_every < 1) throw ConfigError("record_every must be >= 1");
  if (cfg.rho_est0_set && cfg.mode != Mode::filter)
    throw ConfigError("rho_est0 is only meaningful in filter mode");
  if (cfg.rho0.kind == StateSpec::Kind::fock &&
      (cfg.rho0.n < 0 || cfg.rho0.n > cfg.fock.n_max))
    throw ConfigError("rho0 fock level out of range");
  if (cfg.rho_est0.kind == StateSpec::Kind::fock &&
      (cfg.rho_est0.n < 0 || cfg.rho_est0.n > cfg.fock.n_max))
    throw ConfigError("rho_est0 fock level out of range");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline void apply_config_key(ExperimentConfig& cfg, const std::string& key,
                             const std::string& value) {
  if (key == "mode") {
    cfg.mode = parse_mode(value);
  } else if (key == "law_variant") {
    cfg.feedback.law = parse_law_variant(value);
  } else if (key == "nmax") {
    cfg.fock.n_max = static_cast<int>(parse_long(value, key));
  } else if (key == "phi0") {
    cfg.fock.phi0 = parse_double(value, key);
  } else if (key == "theta") {
    cfg.fock.theta = parse_double(value, key);
  } else if (key == "nbar") {
    cfg.feedback.n_bar = static_cast<int>(parse_long(value, key));
  } else if (key == "epsilon") {
    cfg.feedback.epsilon = parse_double(value, key);
  } else if (key == "eta") {
    cfg.feedback.eta = parse_double(value, key);
  } else if (key == "alpha_max") {
    cfg.feedback.alpha_max = parse_double(value, key);
  } else if (key == "delay") {
    cfg.feedback.delay = static_cast<int>(parse_long(value, key));
  } else if (key == "rho0") {
    cfg.rho0 = parse_state_spec(value);
  } else if (key == "rho_est0") {
    cfg.rho_est0 = parse_state_spec(value);
    cfg.rho_est0_set = true;
  } else if (key == "steps") {
    cfg.steps = parse_long(value, key);
  } else if (key == "trajectories") {
    cfg.n_traj = static_cast<int>(parse_long(value, key));
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_long(value, key));
  } else if (key == "record_every") {
    cfg.record_every = parse_long(value, key);
  } else if (key == "out") {
    cfg.out = value;
  } else {
    throw ConfigError("unknown key '" + key + "'");
  }
}

}  // namespace detail

/// Parses a flat key = value config. '#' starts a comment; unknown keys and
/// malformed lines are reported with their line number.
inline ExperimentConfig parse_config_text(std::istream& in, const std::string& origin) {
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    try {
      detail::apply_config_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config_text(in, path);
}

inline std::string config_to_string(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "mode = " << to_string(cfg.mode) << "\n";
  out << "law_variant = " << to_string(cfg.feedback.law) << "\n";
  out << "nmax = " << cfg.fock.n_max << "\n";
  out << "phi0 = " << format_number(cfg.fock.phi0) << "\n";
  out << "theta = " << format_number(cfg.fock.theta) << "\n";
  out << "nbar = " << cfg.feedback.n_bar << "\n";
  out << "epsilon = " << format_number(cfg.feedback.epsilon) << "\n";
  out << "eta = " << format_number(cfg.feedback.eta) << "\n";
  out << "alpha_max = " << format_number(cfg.feedback.alpha_max) << "\n";
  out << "delay = " << cfg.feedback.delay << "\n";
  out << "rho0 = " << to_string(cfg.rho0) << "\n";
  if (cfg.rho_est0_set) out << "rho_est0 = " << to_string(cfg.rho_est0) << "\n";
  out << "steps = " << cfg.steps << "\n";
  out << "trajectories = " << cfg.n_traj << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "record_every = " << cfg.record_every << "\n";
  out << "out = " << cfg.out << "\n";
  return out.str();
}

inline void write_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write config file '" + path + "'");
  out << config_to_string(cfg);
  if (!out) throw std::runtime_error("failed writing config file '" + path + "'");
}

}  // namespace photonbox
