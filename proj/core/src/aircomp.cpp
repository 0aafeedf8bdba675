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

#include "risfeel/aircomp.hpp"

#include <cmath>

namespace risfeel {

namespace {

constexpr double kPowerSlack = 1e-9;

}  // namespace

SymbolBlock normalize_updates(const RMatrix& updates, const AggregationWeights& w) {
  const Eigen::Index m_dev = updates.rows();
  const Eigen::Index d = updates.cols();
  require(d >= 2, "normalize_updates: update length must be >= 2");
  require(w.size() == m_dev, "normalize_updates: weight count must equal device count");
  require(updates.allFinite(), "normalize_updates: updates must be finite");

  SymbolBlock block;
  block.update_length = d;
  block.device_stats.resize(static_cast<std::size_t>(m_dev));
  double pooled_mean = 0.0;
  for (Eigen::Index m = 0; m < m_dev; ++m) {
    auto& st = block.device_stats[static_cast<std::size_t>(m)];
    st.mean = updates.row(m).mean();
    const double var = (updates.row(m).array() - st.mean).square().mean();
    st.scale = std::sqrt(var);
    if (st.scale < kMinScale) {
      st.scale = kMinScale;
      st.clamped = true;
    }
    pooled_mean += w[m] * st.mean;
  }
  double pooled_var = 0.0;
  for (Eigen::Index m = 0; m < m_dev; ++m) {
    const auto& st = block.device_stats[static_cast<std::size_t>(m)];
    const double spread = st.mean - pooled_mean;
    const double var = st.clamped ? 0.0 : st.scale * st.scale;
    pooled_var += w[m] * (var + spread * spread);
  }
  block.shared.mean = pooled_mean;
  block.shared.scale = std::sqrt(pooled_var);
  if (block.shared.scale < kMinScale) {
    block.shared.scale = kMinScale;
    block.shared.clamped = true;
  }

  const Eigen::Index d_sym = (d + 1) / 2;
  block.s = CMatrix::Zero(m_dev, d_sym);
  const double inv = 1.0 / block.shared.scale;
  for (Eigen::Index m = 0; m < m_dev; ++m) {
    for (Eigen::Index i = 0; i < d_sym; ++i) {
      const double re = (updates(m, 2 * i) - pooled_mean) * inv;
      const double im = 2 * i + 1 < d ? (updates(m, 2 * i + 1) - pooled_mean) * inv : 0.0;
      block.s(m, i) = Complex(re, im);
    }
  }
  return block;
}

CVector transmit_and_receive(const SymbolBlock& block, const ChannelRealization& chan,
                             const CVector& theta, const CVector& b, Complex c, double sigma2,
                             double p0, std::uint64_t seed) {
  const Eigen::Index m_dev = block.devices();
  require(chan.devices() == m_dev && b.size() == m_dev,
          "transmit_and_receive: device count mismatch");
  require(c != Complex(0.0, 0.0), "transmit_and_receive: receive scalar must be nonzero");
  require(sigma2 >= 0.0, "transmit_and_receive: noise variance must be non-negative");
  for (Eigen::Index m = 0; m < m_dev; ++m) {
    if (std::norm(b(m)) > p0 * (1.0 + kPowerSlack)) throw Error("transmit power exceeded");
  }
  const CVector h = effective_channel(chan, theta);
  CVector gain(m_dev);
  for (Eigen::Index m = 0; m < m_dev; ++m) gain(m) = h(m) * b(m) / c;

  CVector r = block.s.transpose() * gain;
  if (sigma2 > 0.0) {
    Rng rng(seed);
    const double amp = std::sqrt(sigma2);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) += amp * sample_cn(rng) / c;
  }
  return r;
}

RVector denormalize(const CVector& received, const SymbolBlock& block) {
  const Eigen::Index d = block.update_length;
  require(received.size() == (d + 1) / 2, "denormalize: received length does not match packing");
  RVector out(d);
  const double scale = block.shared.scale;
  const double mean = block.shared.mean;
  for (Eigen::Index i = 0; i < received.size(); ++i) {
    out(2 * i) = scale * received(i).real() + mean;
    if (2 * i + 1 < d) out(2 * i + 1) = scale * received(i).imag() + mean;
  }
  return out;
}

CVector ideal_symbol_sum(const SymbolBlock& block, const AggregationWeights& w) {
  require(w.size() == block.devices(), "ideal_symbol_sum: weight count mismatch");
  return block.s.transpose() * w.values().cast<Complex>();
}

AggregationReport closed_form_mse(const ChannelRealization& chan, const CVector& theta,
                                  const CVector& b, Complex c, const AggregationWeights& w,
                                  double sigma2) {
  require(c != Complex(0.0, 0.0), "closed_form_mse: receive scalar must be nonzero");
  AggregationReport rep;
  rep.mismatch_mse = weight_mismatch(effective_channel(chan, theta), b, c, w);
  rep.noise_mse = sigma2 / std::norm(c);
  rep.total_mse_closed_form = rep.mismatch_mse + rep.noise_mse;
  return rep;
}

double empirical_mse(const CVector& received, const SymbolBlock& block,
                     const AggregationWeights& w) {
  const CVector target = ideal_symbol_sum(block, w);
  require(received.size() == target.size(), "empirical_mse: length mismatch");
  const Eigen::Index full = block.update_length / 2;
  require(full >= 1, "empirical_mse: no fully populated symbols");
  return (received.head(full) - target.head(full)).squaredNorm() / static_cast<double>(full);
}

}  // namespace risfeel
