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
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "risfeel/fedlearn.hpp"
#include "test_support.hpp"

namespace risfeel {
namespace {

std::vector<std::size_t> all_rows(const Dataset& d) {
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

Dataset blobs(int classes, int per_class, double separation, std::uint64_t seed) {
  BlobConfig cfg;
  cfg.classes = classes;
  cfg.samples_per_class = per_class;
  cfg.features = 6;
  cfg.separation = separation;
  cfg.seed = seed;
  return make_blobs(cfg);
}

TEST(PartitionDataset, SingleDeviceHoldsEverything) {
  const Dataset d = blobs(3, 10, 1.0, 1);
  const Partition p = partition_dataset(d, 1, IidPartition{}, 2);
  EXPECT_EQ(p.indices[0].size(), d.size());
  EXPECT_EQ(p.weights[0], 1.0);
}

TEST(PartitionDataset, OneShardPerDeviceIsPureClass) {
  const Dataset d = blobs(2, 25, 1.0, 3);
  const Partition p = partition_dataset(d, 2, LabelShardPartition{1}, 4);
  std::set<int> seen;
  for (const auto& rows : p.indices) {
    std::set<int> labels;
    for (auto r : rows) labels.insert(d.y[r]);
    ASSERT_EQ(labels.size(), 1u);
    seen.insert(*labels.begin());
  }
  EXPECT_EQ(seen.size(), 2u);
}

TEST(PartitionDataset, DisjointCoverAndWeights) {
  const Dataset d = blobs(4, 13, 1.0, 5);  // 52 samples, not divisible by 5 or 15
  for (const PartitionMode& mode : {PartitionMode{IidPartition{}}, PartitionMode{LabelShardPartition{3}}}) {
    const Partition p = partition_dataset(d, 5, mode, 6);
    std::vector<int> hits(d.size(), 0);
    std::size_t total = 0;
    for (std::size_t m = 0; m < 5; ++m) {
      for (auto r : p.indices[m]) ++hits[r];
      total += p.indices[m].size();
      EXPECT_NEAR(p.weights[static_cast<Eigen::Index>(m)],
                  static_cast<double>(p.indices[m].size()) / static_cast<double>(d.size()), 1e-15);
    }
    EXPECT_EQ(total, d.size());
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_NEAR(p.weights.values().sum(), 1.0, 1e-12);
  }
}

TEST(PartitionDataset, IidClassHistogramConcentrates) {
  const Dataset d = blobs(10, 400, 1.0, 7);
  const Partition p = partition_dataset(d, 8, IidPartition{}, 8);
  for (const auto& rows : p.indices) {
    std::vector<double> count(10, 0.0);
    for (auto r : rows) count[static_cast<std::size_t>(d.y[r])] += 1.0;
    const auto n = static_cast<double>(rows.size());
    const double sigma = std::sqrt(n * 0.1 * 0.9);
    for (double c : count) EXPECT_LE(std::abs(c - 0.1 * n), 3.0 * sigma);
  }
}

TEST(LocalUpdate, ZeroLearningRateIsFrozen) {
  const Dataset d = blobs(3, 20, 1.0, 9);
  const auto model = make_model(LogisticSpec{}, d.features(), d.classes);
  const ModelState s{RVector::Random(model->parameters())};
  const auto rows = all_rows(d);
  EXPECT_EQ(local_update(*model, s, d, rows, 3, 4, 0.0, 1), RVector::Zero(model->parameters()));
}

TEST(LocalUpdate, SingleFullBatchStep) {
  const Dataset d = blobs(3, 20, 1.0, 10);
  for (const ModelSpec& spec : {ModelSpec{LogisticSpec{}}, ModelSpec{MlpSpec{5}}}) {
    const auto model = make_model(spec, d.features(), d.classes);
    const ModelState s{model->initial(3) + 0.1 * RVector::Ones(model->parameters())};
    const auto rows = all_rows(d);
    RVector grad = RVector::Zero(model->parameters());
    model->loss_and_gradient(s.w, d, rows, &grad);
    const RVector step = local_update(*model, s, d, rows, 1, 1, 0.05, 2);
    // The shuffle changes the summation order of the gradient only.
    EXPECT_LE((step + 0.05 * grad).norm(), 1e-14 * grad.norm());
  }
}

TEST(LocalUpdate, DeterministicPerSeed) {
  const Dataset d = blobs(3, 20, 1.0, 11);
  const auto model = make_model(LogisticSpec{}, d.features(), d.classes);
  const ModelState s{RVector::Zero(model->parameters())};
  const auto rows = all_rows(d);
  EXPECT_EQ(local_update(*model, s, d, rows, 2, 5, 0.1, 7), local_update(*model, s, d, rows, 2, 5, 0.1, 7));
  EXPECT_NE(local_update(*model, s, d, rows, 2, 5, 0.1, 7), local_update(*model, s, d, rows, 2, 5, 0.1, 8));
}

TEST(Gradient, MatchesCentralDifferences) {
  const Dataset d = blobs(4, 30, 1.0, 12);
  Rng rng(13);
  std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
  for (const ModelSpec& spec : {ModelSpec{LogisticSpec{}}, ModelSpec{MlpSpec{8}}}) {
    const auto model = make_model(spec, d.features(), d.classes);
    for (int draw = 0; draw < 20; ++draw) {
      const RVector w = RVector::Random(model->parameters());
      std::vector<std::size_t> rows(8);
      for (auto& r : rows) r = pick(rng);
      EXPECT_LE(testing::gradient_check(*model, w, d, rows), 1e-5) << to_string(spec);
    }
  }
}

TEST(Evaluate, UniformLogitsGiveChance) {
  const Dataset d = blobs(4, 50, 1.0, 14);
  const auto model = make_model(LogisticSpec{}, d.features(), d.classes);
  const Evaluation e = evaluate(*model, ModelState{RVector::Zero(model->parameters())}, d);
  EXPECT_NEAR(e.accuracy, 0.25, 3.0 * std::sqrt(0.25 * 0.75 / 200.0));
  EXPECT_NEAR(e.loss, std::log(4.0), 1e-12);
}

TEST(Evaluate, SingleCorrectSample) {
  Dataset d;
  d.classes = 2;
  d.x = RMatrix::Ones(1, 1);
  d.y = {1};
  const auto model = make_model(LogisticSpec{}, 1, 2);
  RVector w = RVector::Zero(model->parameters());
  w(1) = 1.0;  // class-1 weight
  const Evaluation e = evaluate(*model, ModelState{w}, d);
  EXPECT_EQ(e.accuracy, 1.0);
}

TEST(Evaluate, SeparableBlobsAreLearned) {
  const Dataset d = blobs(4, 100, 8.0, 15);
  TrainingConfig cfg;
  cfg.rounds = 30;
  cfg.devices = 4;
  cfg.local_epochs = 1;
  cfg.minibatches = 5;
  cfg.learning_rate = 0.1;
  cfg.seed = 3;
  const FederatedTask task = make_task(d, d, cfg);
  IdealBackend ideal;
  const auto hist = run_training(cfg, task, ideal, nullptr);
  EXPECT_GE(hist.back().test_accuracy, 0.99);
}

// Centralized re-implementation of the FedAvg loop with the ideal sum.
std::vector<double> monolithic_fedavg(const TrainingConfig& cfg, const FederatedTask& task) {
  const auto model = make_model(cfg.model, task.train.features(), task.train.classes);
  RVector w = model->initial(derive_seed(cfg.seed, 1));
  std::vector<double> losses;
  for (int t = 0; t < cfg.rounds; ++t) {
    RMatrix deltas(cfg.devices, w.size());
    for (int m = 0; m < cfg.devices; ++m) {
      std::vector<std::size_t> order = task.partition.indices[static_cast<std::size_t>(m)];
      Rng rng(derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(m)));
      std::shuffle(order.begin(), order.end(), rng);
      const std::size_t n = order.size();
      const std::size_t batches = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatches), n);
      RVector delta = RVector::Zero(w.size());
      for (int e = 0; e < cfg.local_epochs; ++e) {
        for (std::size_t k = 0; k < batches; ++k) {
          const std::span<const std::size_t> batch =
              std::span<const std::size_t>(order).subspan(k * n / batches, (k + 1) * n / batches - k * n / batches);
          RVector g = RVector::Zero(w.size());
          model->loss_and_gradient(w + delta, task.train, batch, &g);
          delta -= cfg.learning_rate * g;
        }
      }
      deltas.row(m) = delta.transpose();
    }
    RVector agg = RVector::Zero(w.size());
    for (int m = 0; m < cfg.devices; ++m) agg += task.partition.weights[m] * deltas.row(m).transpose();
    w += agg;
    losses.push_back(model->loss_and_gradient(w, task.train, all_rows(task.train), nullptr));
  }
  return losses;
}

TEST(RunTraining, IdealMatchesMonolithicReference) {
  const Dataset d = blobs(3, 40, 1.5, 16);
  TrainingConfig cfg;
  cfg.rounds = 5;
  cfg.devices = 4;
  cfg.local_epochs = 2;
  cfg.minibatches = 3;
  cfg.learning_rate = 0.05;
  cfg.model = MlpSpec{6};
  cfg.partition = LabelShardPartition{2};
  cfg.seed = 99;
  const FederatedTask task = make_task(d, d, cfg);
  IdealBackend ideal;
  const auto hist = run_training(cfg, task, ideal, nullptr);
  const auto ref = monolithic_fedavg(cfg, task);
  ASSERT_EQ(hist.size(), ref.size());
  for (std::size_t t = 0; t < ref.size(); ++t) EXPECT_NEAR(hist[t].train_loss, ref[t], 1e-12) << "round " << t;
}

TEST(RunTraining, SingleStep) {
  const Dataset d = blobs(2, 10, 1.0, 17);
  TrainingConfig cfg;
  cfg.rounds = 1;
  cfg.devices = 1;
  cfg.local_epochs = 1;
  cfg.minibatches = 1;
  cfg.learning_rate = 0.3;
  const FederatedTask task = make_task(d, d, cfg);
  const auto model = make_model(cfg.model, d.features(), d.classes);
  RVector w0 = model->initial(0);
  RVector g = RVector::Zero(w0.size());
  model->loss_and_gradient(w0, d, all_rows(d), &g);
  const RVector w1 = w0 - 0.3 * g;
  IdealBackend ideal;
  const auto hist = run_training(cfg, task, ideal, nullptr);
  EXPECT_NEAR(hist[0].train_loss, evaluate(*model, ModelState{w1}, d).loss, 1e-14);
}

TEST(RunTraining, HugeDownlinkNoiseStaysNearChance) {
  // Averaged over independent data sets and seeds; a single small run is
  // too noisy for a chance-level bound.
  TrainingConfig cfg;
  cfg.rounds = 20;
  cfg.devices = 4;
  cfg.local_epochs = 3;
  cfg.minibatches = 4;
  cfg.learning_rate = 0.05;
  cfg.model = MlpSpec{4};
  auto late_accuracy = [&](double variance) {
    cfg.downlink_noise_variance = variance;
    double mean = 0.0;
    for (std::uint64_t s = 1; s <= 5; ++s) {
      cfg.seed = s;
      const Dataset d = blobs(4, 60, 1.0, 18 + s);
      const FederatedTask task = make_task(d, d, cfg);
      IdealBackend ideal;
      const auto hist = run_training(cfg, task, ideal, nullptr);
      for (std::size_t t = 10; t < hist.size(); ++t) mean += hist[t].test_accuracy / 50.0;
    }
    return mean;
  };
  EXPECT_GT(late_accuracy(0.0), 0.6);
  EXPECT_LT(late_accuracy(1e4), 0.25 * 1.5);  // SNR_DL = -40 dB
}

TEST(RunTraining, DeterministicAndBounded) {
  const Dataset d = blobs(3, 30, 1.0, 19);
  TrainingConfig cfg;
  cfg.rounds = 6;
  cfg.devices = 3;
  cfg.local_epochs = 1;
  cfg.minibatches = 2;
  cfg.learning_rate = 0.1;
  cfg.downlink_noise_variance = 0.01;
  cfg.seed = 5;
  const FederatedTask task = make_task(d, d, cfg);
  IdealBackend a;
  IdealBackend b;
  const auto h1 = run_training(cfg, task, a, nullptr);
  const auto h2 = run_training(cfg, task, b, nullptr);
  for (std::size_t t = 0; t < h1.size(); ++t) {
    EXPECT_EQ(h1[t].train_loss, h2[t].train_loss);
    EXPECT_EQ(h1[t].test_accuracy, h2[t].test_accuracy);
    EXPECT_GE(h1[t].test_accuracy, 0.0);
    EXPECT_LE(h1[t].test_accuracy, 1.0);
  }
}

TEST(IdealBackend, WeightedSum) {
  Rng rng(20);
  const RMatrix u = RMatrix::Random(3, 7);
  const AggregationWeights w(RVector{{0.2, 0.5, 0.3}});
  IdealBackend ideal;
  const RVector out = ideal.aggregate(u, w, 0).aggregate;
  EXPECT_LE((out - u.transpose() * w.values()).norm(), 1e-12);
}

TEST(AirBackend, TracksIdealAggregateOnAlignedChannel) {
  const Dataset d = blobs(3, 40, 1.0, 21);
  const RMatrix u = RMatrix::Random(4, 30) * 0.01;
  const auto w = AggregationWeights::uniform(4);
  const auto chan = sample_channel(testing::desk_geometry(), testing::desk_pathloss(), 4, 16, 5);
  AirSettings settings;
  settings.sigma2 = testing::desk_pathloss().to_reference(db_to_linear(-120.0));
  AirBackend air(AirScheme::CsitBased, w, settings);
  air.set_channel(chan);
  const RVector out = air.aggregate(u, w, 1).aggregate;
  const RVector ideal = u.transpose() * w.values();
  EXPECT_LE((out - ideal).norm(), 1e-2 * ideal.norm());
  EXPECT_THROW(air.aggregate(u, AggregationWeights(RVector{{0.1, 0.2, 0.3, 0.4}}), 1), Error);
}

TEST(TrainingConfig, Validation) {
  TrainingConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrainingConfig{};
  cfg.minibatches = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace risfeel
