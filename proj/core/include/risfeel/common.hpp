// Copyright 2026 The risfeel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace risfeel {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

/// Raised for contract violations (bad shapes, out-of-domain arguments).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// SplitMix64 finalizer; used to derive independent stream seeds from
/// (master seed, task index) pairs.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix_seed(mix_seed(mix_seed(master ^ mix_seed(a)) ^ b) ^ c);
}

using Rng = std::mt19937_64;

/// Circularly-symmetric CN(0, 1) sample.
inline Complex sample_cn(Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

}  // namespace risfeel
