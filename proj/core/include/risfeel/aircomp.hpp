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

#include <cstdint>
#include <optional>
#include <vector>

#include "risfeel/beamforming.hpp"
#include "risfeel/channel.hpp"

namespace risfeel {

/// Empirical statistics of one device's update vector.
struct NormalizationStats {
  double mean = 0.0;
  double scale = 1.0;
  bool clamped = false;
};

/// Normalized symbol streams, one row per device.
///
/// Devices standardize with shared statistics (weighted pooled mean and
/// standard deviation of the per-device statistics) so that the weighted sum
/// of symbols can be inverted exactly at the receiver. Adjacent real entries
/// are packed into the real and imaginary parts of one complex symbol.
struct SymbolBlock {
  CMatrix s;  // M x ceil(d / 2)
  std::vector<NormalizationStats> device_stats;
  NormalizationStats shared;
  Eigen::Index update_length = 0;

  Eigen::Index devices() const { return s.rows(); }
  Eigen::Index symbols() const { return s.cols(); }
  bool clamped() const { return shared.clamped; }
};

struct AggregationReport {
  double mismatch_mse = 0.0;
  double noise_mse = 0.0;
  double total_mse_closed_form = 0.0;
  std::optional<double> total_mse_empirical;
  std::size_t samples = 0;
};

inline constexpr double kMinScale = 1e-12;

SymbolBlock normalize_updates(const RMatrix& updates, const AggregationWeights& w);

/// r[i] = sum_m (h_m b_m / c) s_m[i] + n[i] / c,  n ~ CN(0, sigma2).
CVector transmit_and_receive(const SymbolBlock& block, const ChannelRealization& chan,
                             const CVector& theta, const CVector& b, Complex c, double sigma2,
                             double p0, std::uint64_t seed);

/// Inverts the shared standardization and unpacks real/imag pairs; padding
/// is dropped. A perfect `received` yields exactly sum_m p_m updates[m].
RVector denormalize(const CVector& received, const SymbolBlock& block);

/// sum_m p_m s_m, the target of the over-the-air sum.
CVector ideal_symbol_sum(const SymbolBlock& block, const AggregationWeights& w);

AggregationReport closed_form_mse(const ChannelRealization& chan, const CVector& theta,
                                  const CVector& b, Complex c, const AggregationWeights& w,
                                  double sigma2);

/// Mean of |received[i] - sum_m p_m s_m[i]|^2 over fully populated symbols;
/// a zero-padded trailing symbol is excluded.
double empirical_mse(const CVector& received, const SymbolBlock& block,
                     const AggregationWeights& w);

}  // namespace risfeel
