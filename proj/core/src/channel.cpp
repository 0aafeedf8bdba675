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

#include "risfeel/channel.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace risfeel {

namespace {

constexpr double kUnitModulusTol = 1e-9;

Complex scaled_cn(Rng& rng, double power) { return std::sqrt(power) * sample_cn(rng); }

double checked_distance(const Vec3& a, const Vec3& b) {
  const double d = distance(a, b);
  if (!(d > 0.0)) throw Error("coincident positions");
  return d;
}

}  // namespace

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void GeometryConfig::validate() const {
  require(carrier_wavelength > 0.0, "geometry: carrier_wavelength must be positive");
  require(ris_element_size > 0.0, "geometry: ris_element_size must be positive");
  require(ris_reflection_amplitude > 0.0 && ris_reflection_amplitude <= 1.0,
          "geometry: ris_reflection_amplitude must lie in (0, 1]");
  require(device_region.lo.x <= device_region.hi.x && device_region.lo.y <= device_region.hi.y &&
              device_region.lo.z <= device_region.hi.z,
          "geometry: device_region lower corner exceeds upper corner");
}

void PathLossModel::validate() const {
  require(direct_exponent > 0.0, "path_loss: direct_exponent must be positive");
  require(ris_constant >= 0.0, "path_loss: ris_constant must be non-negative");
}

ChannelRealization ChannelRealization::from_components(CVector h_dp, CVector h_rp, CMatrix h_dr) {
  require(h_dr.rows() == h_dp.size() && h_dr.cols() == h_rp.size(),
          "channel: h_dr must be M x L");
  ChannelRealization c;
  c.h_dp = std::move(h_dp);
  c.h_rp = std::move(h_rp);
  c.h_dr = std::move(h_dr);
  c.cascades = c.h_dr * c.h_rp.asDiagonal();
  return c;
}

ChannelRealization ChannelRealization::without_ris() const {
  return from_components(h_dp, CVector(0), CMatrix(h_dp.size(), 0));
}

double path_loss_direct(double d, const GeometryConfig& geometry, const PathLossModel& model) {
  require(d > 0.0, "path_loss_direct: distance must be positive");
  const double g = db_to_linear(geometry.gains.ps_dbi) * db_to_linear(geometry.gains.device_dbi);
  return g * std::pow(geometry.carrier_wavelength / (4.0 * std::numbers::pi * d),
                      model.direct_exponent);
}

double path_loss_ris(double d1, double d2, const GeometryConfig& geometry,
                     const PathLossModel& model) {
  require(d1 > 0.0 && d2 > 0.0, "path_loss_ris: distances must be positive");
  const auto& g = geometry.gains;
  const double gains = db_to_linear(g.ps_dbi) * db_to_linear(g.ris_dbi) * db_to_linear(g.device_dbi);
  const double area = geometry.ris_element_size * geometry.ris_element_size;
  const double a = geometry.ris_reflection_amplitude;
  return model.ris_constant * gains * area * area * a * a / (d1 * d1 * d2 * d2);
}

std::vector<Vec3> sample_device_positions(const GeometryConfig& geometry, int m_devices,
                                          std::uint64_t seed) {
  require(m_devices >= 1, "sample_device_positions: need at least one device");
  geometry.validate();
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& r = geometry.device_region;
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(m_devices));
  for (int m = 0; m < m_devices; ++m) {
    const double x = r.lo.x + (r.hi.x - r.lo.x) * u(rng);
    const double y = r.lo.y + (r.hi.y - r.lo.y) * u(rng);
    const double z = r.lo.z + (r.hi.z - r.lo.z) * u(rng);
    out.push_back({x, y, z});
  }
  return out;
}

ChannelRealization sample_channel(const GeometryConfig& geometry, const PathLossModel& model,
                                  const std::vector<Vec3>& positions, int l_elements,
                                  std::uint64_t seed) {
  require(!positions.empty(), "sample_channel: m_devices must be >= 1");
  require(l_elements >= 0, "sample_channel: l_elements must be >= 0");
  geometry.validate();
  model.validate();

  const auto m_devices = static_cast<Eigen::Index>(positions.size());
  const Eigen::Index l = l_elements;
  const double ref = model.reference_power();
  // The cascade carries the reference once; split it evenly over both hops.
  const double hop_ref = std::sqrt(ref);

  std::vector<double> direct_loss(positions.size());
  std::vector<double> ris_loss(positions.size());
  const double d_rp = l > 0 ? checked_distance(geometry.ris_position, geometry.ps_position) : 1.0;
  for (std::size_t m = 0; m < positions.size(); ++m) {
    direct_loss[m] = path_loss_direct(checked_distance(positions[m], geometry.ps_position),
                                      geometry, model);
    if (l > 0) {
      ris_loss[m] = path_loss_ris(d_rp, checked_distance(positions[m], geometry.ris_position),
                                  geometry, model);
    }
  }

  // Per-hop split of the RIS loss: the RIS->PS hop takes a fixed share so that
  // h_rp is common to all devices while |g_ml|^2 averages to ris_loss[m].
  const double rp_loss = l > 0 ? path_loss_ris(d_rp, 1.0, geometry, model) : 1.0;
  const double rp_share = std::sqrt(rp_loss);

  Rng rng(seed);
  CVector h_dp(m_devices);
  for (Eigen::Index m = 0; m < m_devices; ++m) h_dp(m) = scaled_cn(rng, direct_loss[m] / ref);
  CVector h_rp(l);
  for (Eigen::Index i = 0; i < l; ++i) h_rp(i) = scaled_cn(rng, rp_share / hop_ref);
  CMatrix h_dr(m_devices, l);
  for (Eigen::Index m = 0; m < m_devices; ++m) {
    for (Eigen::Index i = 0; i < l; ++i) {
      h_dr(m, i) = scaled_cn(rng, ris_loss[m] / rp_share / hop_ref);
    }
  }
  return ChannelRealization::from_components(std::move(h_dp), std::move(h_rp), std::move(h_dr));
}

ChannelRealization sample_channel(const GeometryConfig& geometry, const PathLossModel& model,
                                  int m_devices, int l_elements, std::uint64_t seed) {
  require(m_devices >= 1, "sample_channel: m_devices must be >= 1");
  const auto positions = sample_device_positions(geometry, m_devices, derive_seed(seed, 0));
  return sample_channel(geometry, model, positions, l_elements, derive_seed(seed, 1));
}

CVector effective_channel(const ChannelRealization& chan, const CVector& theta) {
  require(theta.size() == chan.elements(), "effective_channel: theta length must equal L");
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    require(std::abs(std::abs(theta(i)) - 1.0) <= kUnitModulusTol,
            "effective_channel: theta entries must have unit modulus");
  }
  if (theta.size() == 0) return chan.h_dp;
  return chan.h_dp + chan.cascades * theta;
}

ChannelProvider::ChannelProvider(GeometryConfig geometry, PathLossModel model, int m_devices,
                                 int l_elements, std::uint64_t seed)
    : geometry_(std::move(geometry)),
      model_(model),
      positions_(sample_device_positions(geometry_, m_devices, derive_seed(seed, 0))),
      l_elements_(l_elements),
      seed_(seed) {}

ChannelRealization ChannelProvider::block(std::uint64_t index) const {
  return sample_channel(geometry_, model_, positions_, l_elements_, derive_seed(seed_, 1, index));
}

nlohmann::json complex_array_json(const CVector& v) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back({v(i).real(), v(i).imag()});
  return arr;
}

nlohmann::json to_json(const ChannelRealization& chan) {
  nlohmann::json j;
  j["h_dp"] = complex_array_json(chan.h_dp);
  j["h_rp"] = complex_array_json(chan.h_rp);
  auto dr = nlohmann::json::array();
  for (Eigen::Index m = 0; m < chan.h_dr.rows(); ++m) {
    dr.push_back(complex_array_json(chan.h_dr.row(m).transpose()));
  }
  j["h_dr"] = std::move(dr);
  return j;
}

}  // namespace risfeel
