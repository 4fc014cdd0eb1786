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
#include <cstdint>
#include <random>

namespace photonbox {

namespace detail {

// One round of the splitmix64 output function.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Per-trajectory random stream.
///
/// The stream seed is derived from (master seed, stream id) with two rounds
/// of splitmix64, so trajectories can be dispatched to workers in any order
/// and still reproduce the serial run draw for draw.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : engine_(detail::splitmix64(
            detail::splitmix64(seed ^ (0xD1B54A32D192ED03ULL * (stream_id + 1))))) {}

  /// Uniform double in [0, 1) built from the top 53 bits of the generator.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (the second deviate is cached).
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * pi_ * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  /// Complex number with independent standard normal real and imaginary parts.
  std::complex<double> complex_gaussian() {
    const double re = gaussian();
    const double im = gaussian();
    return {re, im};
  }

  /// Uniform point of the closed disk |z| <= radius.
  std::complex<double> uniform_disk(double radius) {
    const double r = radius * std::sqrt(uniform01());
    const double t = 2.0 * pi_ * uniform01();
    return std::polar(r, t);
  }

  std::uint64_t raw() { return engine_(); }

 private:
  static constexpr double pi_ = 3.14159265358979323846;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace photonbox
