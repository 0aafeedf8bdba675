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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "risfeel/fedlearn.hpp"

namespace risfeel {

namespace {

// Stream tags for derive_seed so that the random streams of a run never
// overlap.
enum SeedStream : std::uint64_t {
  kInit = 1,
  kDownlink = 2,
  kLocal = 3,
  kAggregate = 4,
  kPartition = 5,
};

}  // namespace

RVector local_update(const Model& model, const ModelState& global, const Dataset& data,
                     std::span<const std::size_t> rows, int local_epochs, int minibatches,
                     double learning_rate, std::uint64_t seed) {
  require(local_epochs >= 1, "local_update: local_epochs must be >= 1");
  require(minibatches >= 1, "local_update: minibatches must be >= 1");
  require(learning_rate >= 0.0, "local_update: learning rate must be non-negative");
  require(!rows.empty(), "local_update: device holds no data");
  require(global.w.size() == model.parameters(), "local_update: parameter size mismatch");

  std::vector<std::size_t> order(rows.begin(), rows.end());
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n = order.size();
  const std::size_t batches = std::min<std::size_t>(static_cast<std::size_t>(minibatches), n);

  // The displacement is accumulated directly so that a single step returns
  // exactly -eta * grad.
  RVector delta = RVector::Zero(global.w.size());
  RVector grad(global.w.size());
  for (int e = 0; e < local_epochs; ++e) {
    for (std::size_t k = 0; k < batches; ++k) {
      const std::size_t lo = k * n / batches;
      const std::size_t hi = (k + 1) * n / batches;
      grad.setZero();
      model.loss_and_gradient(global.w + delta, data,
                              std::span<const std::size_t>(order).subspan(lo, hi - lo), &grad);
      delta -= learning_rate * grad;
    }
  }
  return delta;
}

AggregationOutcome IdealBackend::aggregate(const RMatrix& updates, const AggregationWeights& w,
                                           std::uint64_t) {
  require(w.size() == updates.rows(), "ideal aggregate: weight count mismatch");
  AggregationOutcome out;
  out.aggregate = RVector::Zero(updates.cols());
  for (Eigen::Index m = 0; m < updates.rows(); ++m) out.aggregate += w[m] * updates.row(m).transpose();
  return out;
}

const char* to_string(AirScheme s) {
  switch (s) {
    case AirScheme::CsitBased: return "csit_based";
    case AirScheme::CsitFree: return "csit_free";
    case AirScheme::NoRis: return "no_ris";
  }
  return "unknown";
}

AirDesign design_air(AirScheme scheme, const ChannelRealization& chan, const AggregationWeights& w,
                     const AirSettings& settings) {
  require(settings.p0 > 0.0, "design_air: P0 must be positive");
  require(settings.sigma2 >= 0.0, "design_air: noise variance must be non-negative");
  require(settings.phase_bits >= 0, "design_air: phase_bits must be non-negative");
  const double amp = std::sqrt(settings.p0);
  AirDesign out;
  switch (scheme) {
    case AirScheme::CsitBased: {
      out.theta = chan.elements() > 0 ? csit_based_theta(chan, w, settings.p0, settings.sdr)
                                      : CVector(0);
      if (settings.phase_bits > 0) out.theta = project_discrete(out.theta, settings.phase_bits);
      std::tie(out.b, out.c) = csit_based_scalars(chan, out.theta, w, settings.p0);
      out.report = closed_form_mse(chan, out.theta, out.b, out.c, w, settings.sigma2);
      break;
    }
    case AirScheme::CsitFree: {
      out.dc = dc_solve(chan, w, settings.p0, settings.sigma2, settings.dc);
      out.theta = out.dc.theta;
      out.c = out.dc.c;
      out.feasible = out.dc.feasible;
      if (settings.phase_bits > 0) {
        out.theta = project_discrete(out.theta, settings.phase_bits);
        if (out.feasible) {
          out.c = refine_receive_scalar(chan, out.theta, w, settings.p0, settings.dc.epsilon);
          out.feasible = alignment_residual(chan, out.theta, out.c, w, settings.p0) <=
                         settings.dc.epsilon * (1.0 + 1e-6);
        }
      }
      out.b = CVector::Constant(chan.devices(), Complex(amp, 0.0));
      out.report = closed_form_mse(chan, out.theta, out.b, out.c, w, settings.sigma2);
      break;
    }
    case AirScheme::NoRis: {
      const ChannelRealization direct = chan.without_ris();
      out.theta = CVector(0);
      out.b = CVector::Constant(chan.devices(), Complex(amp, 0.0));
      out.c = mmse_receive_scalar(direct.h_dp, out.b, w, settings.sigma2);
      out.report = closed_form_mse(direct, out.theta, out.b, out.c, w, settings.sigma2);
      break;
    }
  }
  return out;
}

AirBackend::AirBackend(AirScheme scheme, AggregationWeights weights, AirSettings settings)
    : scheme_(scheme), weights_(std::move(weights)), settings_(std::move(settings)) {}

std::string AirBackend::name() const { return to_string(scheme_); }

void AirBackend::set_channel(const ChannelRealization& chan) {
  require(chan.devices() == weights_.size(), "air backend: channel device count mismatch");
  chan_ = scheme_ == AirScheme::NoRis ? chan.without_ris() : chan;
  design_ = design_air(scheme_, chan, weights_, settings_);
  ready_ = true;
}

AggregationOutcome AirBackend::aggregate(const RMatrix& updates, const AggregationWeights& w,
                                         std::uint64_t seed) {
  require(ready_, "air backend: set_channel must be called before aggregate");
  require(w.values() == weights_.values(), "air backend: weights differ from the design weights");
  const SymbolBlock block = normalize_updates(updates, w);
  const CVector r = transmit_and_receive(block, chan_, design_.theta, design_.b, design_.c,
                                         settings_.sigma2, settings_.p0, seed);
  AggregationOutcome out;
  out.aggregate = denormalize(r, block);
  out.mse = design_.report.total_mse_closed_form;
  out.feasible = design_.feasible;
  return out;
}

void TrainingConfig::validate() const {
  require(rounds >= 1, "training: rounds must be >= 1");
  require(devices >= 1, "training: devices must be >= 1");
  require(local_epochs >= 1, "training: local_epochs must be >= 1");
  require(minibatches >= 1, "training: minibatches must be >= 1");
  require(learning_rate > 0.0, "training: learning_rate must be positive");
  require(downlink_noise_variance >= 0.0, "training: downlink noise variance must be non-negative");
  require(channel_refresh_every >= 0, "training: channel_refresh_every must be non-negative");
  if (const auto* mlp = std::get_if<MlpSpec>(&model)) {
    require(mlp->hidden >= 1, "training: mlp hidden width must be >= 1");
  }
}

FederatedTask make_task(const Dataset& train, const Dataset& test, const TrainingConfig& cfg) {
  cfg.validate();
  require(train.features() == test.features(), "make_task: train/test feature mismatch");
  FederatedTask task{train, test,
                     partition_dataset(train, cfg.devices, cfg.partition,
                                       derive_seed(cfg.seed, kPartition))};
  task.test.classes = task.train.classes = std::max(train.classes, test.classes);
  return task;
}

std::vector<RoundMetrics> run_training(const TrainingConfig& cfg, const FederatedTask& task,
                                       AggregatorBackend& backend,
                                       const ChannelProvider* channels) {
  cfg.validate();
  const auto m_dev = static_cast<Eigen::Index>(cfg.devices);
  require(static_cast<Eigen::Index>(task.partition.indices.size()) == m_dev,
          "run_training: partition does not match the device count");
  if (backend.needs_channel()) {
    require(channels != nullptr, "run_training: backend needs a channel provider");
    require(channels->devices() == cfg.devices, "run_training: channel device count mismatch");
  }

  const auto model = make_model(cfg.model, task.train.features(), task.train.classes);
  ModelState state{model->initial(derive_seed(cfg.seed, kInit))};
  const AggregationWeights& weights = task.partition.weights;
  const double dl_amp = std::sqrt(cfg.downlink_noise_variance);

  std::vector<RoundMetrics> history;
  history.reserve(static_cast<std::size_t>(cfg.rounds));
  std::optional<std::uint64_t> current_block;
  RMatrix updates(m_dev, model->parameters());

  for (int t = 0; t < cfg.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const auto round = static_cast<std::uint64_t>(t);
    const std::uint64_t block =
        cfg.channel_refresh_every > 0 ? round / static_cast<std::uint64_t>(cfg.channel_refresh_every) : 0;
    if (backend.needs_channel() && current_block != block) {
      backend.set_channel(channels->block(block));
      current_block = block;
    }

    for (Eigen::Index m = 0; m < m_dev; ++m) {
      ModelState local = state;
      if (dl_amp > 0.0) {
        Rng rng(derive_seed(cfg.seed, kDownlink, round, static_cast<std::uint64_t>(m)));
        std::normal_distribution<double> normal(0.0, dl_amp);
        for (Eigen::Index i = 0; i < local.w.size(); ++i) local.w(i) += normal(rng);
      }
      updates.row(m) =
          local_update(*model, local, task.train, task.partition.indices[static_cast<std::size_t>(m)],
                       cfg.local_epochs, cfg.minibatches, cfg.learning_rate,
                       derive_seed(cfg.seed, kLocal, round, static_cast<std::uint64_t>(m)))
              .transpose();
    }

    const AggregationOutcome agg =
        backend.aggregate(updates, weights, derive_seed(cfg.seed, kAggregate, round));
    // A diverged aggregate (overflow under a failed design) leaves the
    // model untouched rather than poisoning every later round.
    if (agg.aggregate.allFinite()) state.w += agg.aggregate;

    RoundMetrics met;
    met.round = t;
    met.train_loss = evaluate(*model, state, task.train).loss;
    met.test_accuracy = evaluate(*model, state, task.test).accuracy;
    met.aggregation_mse = agg.mse;
    met.feasible = agg.feasible;
    met.channel_block = block;
    met.wallclock =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(met);
  }
  return history;
}

}  // namespace risfeel
