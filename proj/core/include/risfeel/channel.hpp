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
#include <numbers>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "risfeel/common.hpp"

namespace risfeel {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

double distance(const Vec3& a, const Vec3& b);

/// Axis-aligned box; a degenerate extent on an axis pins that coordinate.
struct Box {
  Vec3 lo;
  Vec3 hi;
};

struct AntennaGains {
  double ps_dbi = 4.11;
  double device_dbi = 0.0;
  double ris_dbi = 4.11;
};

inline constexpr double kSpeedOfLight = 3.0e8;
inline constexpr double kDefaultCarrierHz = 815.0e6;
inline constexpr double kDefaultWavelength = kSpeedOfLight / kDefaultCarrierHz;

struct GeometryConfig {
  Vec3 ps_position{-50.0, 0.0, 10.0};
  Vec3 ris_position{0.0, 0.0, 10.0};
  Box device_region{{-20.0, 0.0, 0.0}, {0.0, 10.0, 0.0}};
  double carrier_wavelength = kDefaultWavelength;
  AntennaGains gains;
  double ris_element_size = 0.1 * kDefaultWavelength;  // square side, meters
  double ris_reflection_amplitude = 1.0;

  void validate() const;
};

/// Large-scale attenuation. The RIS hop uses a far-field product-distance
/// law  K * G_ps G_ris G_dev * (dx dy)^2 * A^2 / (d1^2 d2^2).
///
/// `reference_power_db` selects the unit in which channel coefficients are
/// expressed: every sampled coefficient is divided by sqrt(10^(ref/10)).
/// Noise powers must be converted with the same reference (see
/// `PathLossModel::to_reference`), which leaves every MSE unchanged.
struct PathLossModel {
  double direct_exponent = 3.0;
  double ris_constant = 1.0 / (64.0 * std::numbers::pi * std::numbers::pi * std::numbers::pi);
  double reference_power_db = 0.0;

  void validate() const;
  double reference_power() const { return db_to_linear(reference_power_db); }
  double to_reference(double power) const { return power / reference_power(); }
};

/// All channel coefficients of one coherence block.
struct ChannelRealization {
  CVector h_dp;      // M, device -> PS
  CVector h_rp;      // L, RIS -> PS
  CMatrix h_dr;      // M x L, device -> RIS
  CMatrix cascades;  // M x L, row m is g_m^T = h_rp^T diag(h_dr[m])

  static ChannelRealization from_components(CVector h_dp, CVector h_rp, CMatrix h_dr);

  Eigen::Index devices() const { return h_dp.size(); }
  Eigen::Index elements() const { return h_rp.size(); }

  /// Same devices, RIS removed.
  ChannelRealization without_ris() const;

  bool operator==(const ChannelRealization&) const = default;
};

double path_loss_direct(double distance, const GeometryConfig& geometry, const PathLossModel& model);
double path_loss_ris(double d1, double d2, const GeometryConfig& geometry, const PathLossModel& model);

std::vector<Vec3> sample_device_positions(const GeometryConfig& geometry, int m_devices,
                                          std::uint64_t seed);

/// Rayleigh fading around the large-scale losses of fixed device positions.
ChannelRealization sample_channel(const GeometryConfig& geometry, const PathLossModel& model,
                                  const std::vector<Vec3>& device_positions, int l_elements,
                                  std::uint64_t seed);

/// Positions and fading both drawn from `seed`.
ChannelRealization sample_channel(const GeometryConfig& geometry, const PathLossModel& model,
                                  int m_devices, int l_elements, std::uint64_t seed);

/// h_m(theta) = h_dp[m] + g_m^T theta.
CVector effective_channel(const ChannelRealization& chan, const CVector& theta);

/// Device placement is drawn once; small-scale fading is redrawn per block.
class ChannelProvider {
 public:
  ChannelProvider(GeometryConfig geometry, PathLossModel model, int m_devices, int l_elements,
                  std::uint64_t seed);

  ChannelRealization block(std::uint64_t index) const;
  const std::vector<Vec3>& positions() const { return positions_; }
  int devices() const { return static_cast<int>(positions_.size()); }
  int elements() const { return l_elements_; }

 private:
  GeometryConfig geometry_;
  PathLossModel model_;
  std::vector<Vec3> positions_;
  int l_elements_;
  std::uint64_t seed_;
};

nlohmann::json to_json(const ChannelRealization& chan);
nlohmann::json complex_array_json(const CVector& v);

}  // namespace risfeel
