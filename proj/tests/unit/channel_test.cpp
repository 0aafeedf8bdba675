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

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "risfeel/channel.hpp"
#include "test_support.hpp"

namespace risfeel {
namespace {

using testing::random_channel;
using testing::random_phases;

GeometryConfig default_geometry() { return GeometryConfig{}; }

TEST(SampleChannel, NoElementsLeavesOnlyDirectPaths) {
  const auto chan = sample_channel(default_geometry(), PathLossModel{}, 3, 0, 7);
  EXPECT_EQ(chan.h_dp.size(), 3);
  EXPECT_EQ(chan.h_rp.size(), 0);
  EXPECT_EQ(chan.h_dr.size(), 0);
  EXPECT_EQ(chan.cascades.size(), 0);
  for (Eigen::Index m = 0; m < 3; ++m) EXPECT_GT(std::abs(chan.h_dp(m)), 0.0);
}

TEST(SampleChannel, SameSeedIsBitwiseIdentical) {
  const auto a = sample_channel(default_geometry(), PathLossModel{}, 4, 6, 123);
  const auto b = sample_channel(default_geometry(), PathLossModel{}, 4, 6, 123);
  EXPECT_TRUE(a == b);
  const auto c = sample_channel(default_geometry(), PathLossModel{}, 4, 6, 124);
  EXPECT_FALSE(a == c);
}

TEST(SampleChannel, CascadeIsElementwiseProduct) {
  const auto chan = sample_channel(default_geometry(), PathLossModel{}, 2, 3, 99);
  for (Eigen::Index m = 0; m < 2; ++m) {
    for (Eigen::Index l = 0; l < 3; ++l) {
      const Complex expect = chan.h_rp(l) * chan.h_dr(m, l);
      EXPECT_EQ(chan.cascades(m, l), expect);
    }
  }
}

TEST(SampleChannel, CoincidentPositionsAreRejected) {
  GeometryConfig g = default_geometry();
  g.device_region = {g.ps_position, g.ps_position};
  try {
    sample_channel(g, PathLossModel{}, 1, 0, 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "coincident positions");
  }
}

TEST(SampleChannel, DirectVarianceMatchesPathLoss) {
  const GeometryConfig g = default_geometry();
  PathLossModel model;
  model.reference_power_db = -90.0;
  const std::vector<Vec3> pos{{-10.0, 5.0, 0.0}, {-18.0, 1.0, 0.0}};
  const int draws = 10000;
  RVector acc = RVector::Zero(2);
  for (int s = 0; s < draws; ++s) {
    const auto chan = sample_channel(g, model, pos, 0, static_cast<std::uint64_t>(s));
    for (Eigen::Index m = 0; m < 2; ++m) acc(m) += std::norm(chan.h_dp(m));
  }
  for (Eigen::Index m = 0; m < 2; ++m) {
    const double expect =
        path_loss_direct(distance(pos[static_cast<std::size_t>(m)], g.ps_position), g, model) /
        model.reference_power();
    EXPECT_NEAR(acc(m) / draws, expect, 0.05 * expect);
  }
}

TEST(SampleChannel, CascadePowerMatchesRisPathLoss) {
  const GeometryConfig g = default_geometry();
  PathLossModel model;
  model.reference_power_db = -150.0;
  const std::vector<Vec3> pos{{-5.0, 2.0, 0.0}};
  double acc = 0.0;
  const int draws = 2000;
  const int l = 8;
  for (int s = 0; s < draws; ++s) {
    const auto chan = sample_channel(g, model, pos, l, static_cast<std::uint64_t>(s));
    acc += chan.cascades.row(0).squaredNorm() / l;
  }
  const double expect = path_loss_ris(distance(g.ris_position, g.ps_position),
                                      distance(pos[0], g.ris_position), g, model) /
                        model.reference_power();
  EXPECT_NEAR(acc / draws, expect, 0.05 * expect);
}

TEST(EffectiveChannel, EmptySurfaceReturnsDirect) {
  const auto chan = random_channel(3, 0, 5);
  EXPECT_EQ(effective_channel(chan, CVector(0)), chan.h_dp);
}

TEST(EffectiveChannel, SingleElementCascade) {
  auto base = random_channel(2, 1, 6);
  const auto chan = ChannelRealization::from_components(CVector::Zero(2), base.h_rp, base.h_dr);
  const CVector h = effective_channel(chan, CVector::Ones(1));
  for (Eigen::Index m = 0; m < 2; ++m) EXPECT_LE(std::abs(h(m) - chan.h_rp(0) * chan.h_dr(m, 0)), 1e-15 * std::abs(h(m)));
}

TEST(EffectiveChannel, MatchesExplicitSums) {
  Rng rng(8);
  const auto chan = random_channel(3, 4, 8);
  const CVector theta = random_phases(4, rng);
  const CVector h = effective_channel(chan, theta);
  for (Eigen::Index m = 0; m < 3; ++m) {
    Complex acc = chan.h_dp(m);
    for (Eigen::Index l = 0; l < 4; ++l) acc += chan.h_rp(l) * chan.h_dr(m, l) * theta(l);
    EXPECT_LT(std::abs(h(m) - acc), 1e-12 * (1.0 + std::abs(acc)));
  }
}

TEST(EffectiveChannel, CascadeIdentityOnRandomInstances) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const auto chan = random_channel(5, 7, 100 + static_cast<std::uint64_t>(trial));
    const CVector theta = random_phases(7, rng);
    const CVector lhs = effective_channel(chan, theta) - chan.h_dp;
    const CVector rhs = chan.cascades * theta;
    EXPECT_LE((lhs - rhs).norm(), 1e-12 * rhs.norm());
  }
}

TEST(EffectiveChannel, RejectsBadInput) {
  const auto chan = random_channel(2, 3, 9);
  EXPECT_THROW(effective_channel(chan, CVector::Ones(2)), Error);
  CVector theta = CVector::Ones(3);
  theta(1) = 1.5;
  EXPECT_THROW(effective_channel(chan, theta), Error);
}

TEST(PathLoss, DirectUnitArgument) {
  GeometryConfig g;
  g.gains = {0.0, 0.0, 0.0};
  const double d = g.carrier_wavelength / (4.0 * std::numbers::pi);
  EXPECT_NEAR(path_loss_direct(d, g, PathLossModel{}), 1.0, 1e-12);
}

TEST(PathLoss, DirectDoublingDistance) {
  const GeometryConfig g;
  const double ratio = path_loss_direct(40.0, g, PathLossModel{}) /
                       path_loss_direct(20.0, g, PathLossModel{});
  EXPECT_NEAR(ratio, 1.0 / 8.0, 1e-14);
}

TEST(PathLoss, DirectDefaultGeometry) {
  const GeometryConfig g;
  const double d = distance({-10.0, 5.0, 0.0}, g.ps_position);
  EXPECT_NEAR(path_loss_direct(d, g, PathLossModel{}), 9.038111541465002e-10, 1e-22);
}

TEST(PathLoss, RisAbsorber) {
  GeometryConfig g;
  g.ris_reflection_amplitude = 1e-300;
  EXPECT_EQ(path_loss_ris(50.0, 20.0, g, PathLossModel{}), 0.0);
  PathLossModel silent;
  silent.ris_constant = 0.0;
  EXPECT_EQ(path_loss_ris(50.0, 20.0, GeometryConfig{}, silent), 0.0);
}

TEST(PathLoss, RisInverseSquarePerHop) {
  const GeometryConfig g;
  const double ratio = path_loss_ris(100.0, 20.0, g, PathLossModel{}) /
                       path_loss_ris(50.0, 20.0, g, PathLossModel{});
  EXPECT_NEAR(ratio, 0.25, 1e-14);
}

TEST(PathLoss, RisDefaultCoefficients) {
  EXPECT_NEAR(path_loss_ris(50.0, 20.0, GeometryConfig{}, PathLossModel{}),
              6.140800548579621e-15, 1e-27);
}

TEST(PathLoss, NonPositiveDistance) {
  EXPECT_THROW(path_loss_direct(0.0, GeometryConfig{}, PathLossModel{}), Error);
  EXPECT_THROW(path_loss_ris(-1.0, 1.0, GeometryConfig{}, PathLossModel{}), Error);
}

TEST(ChannelProvider, PositionsFixedFadingRedrawn) {
  const ChannelProvider p(GeometryConfig{}, PathLossModel{}, 3, 4, 77);
  const auto a = p.block(0);
  const auto b = p.block(1);
  EXPECT_FALSE(a == b);
  EXPECT_TRUE(a == p.block(0));
  const ChannelProvider q(GeometryConfig{}, PathLossModel{}, 3, 4, 77);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_EQ(p.positions()[m].x, q.positions()[m].x);
    EXPECT_EQ(p.positions()[m].y, q.positions()[m].y);
  }
}

TEST(ChannelJson, PairsOfReIm) {
  const auto chan = random_channel(2, 3, 4);
  const auto j = to_json(chan);
  ASSERT_EQ(j["h_dr"].size(), 2u);
  EXPECT_EQ(j["h_dr"][1][2][0].get<double>(), chan.h_dr(1, 2).real());
  EXPECT_EQ(j["h_dp"][0][1].get<double>(), chan.h_dp(0).imag());
}

}  // namespace
}  // namespace risfeel
