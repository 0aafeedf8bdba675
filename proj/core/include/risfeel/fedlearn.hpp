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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "risfeel/aircomp.hpp"
#include "risfeel/beamforming.hpp"
#include "risfeel/channel.hpp"

namespace risfeel {

// ---------------------------------------------------------------------------
// Data

struct Dataset {
  RMatrix x;            // N x D features
  std::vector<int> y;   // N labels in [0, classes)
  int classes = 0;

  std::size_t size() const { return y.size(); }
  Eigen::Index features() const { return x.cols(); }
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct BlobConfig {
  int classes = 4;
  int features = 10;
  int samples_per_class = 500;
  /// Class centers are drawn from N(0, separation^2 I); samples add N(0, I).
  double separation = 1.0;
  std::uint64_t seed = 0;
};

Dataset make_blobs(const BlobConfig& cfg);

/// Numeric CSV, optional header, last column an integer label.
Dataset load_csv(const std::string& path);

/// Deterministic shuffled split; the first `test_fraction` goes to the test set.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction,
                                             std::uint64_t seed);

struct IidPartition {};
struct LabelShardPartition {
  int shards_per_device = 1;
};
using PartitionMode = std::variant<IidPartition, LabelShardPartition>;

struct Partition {
  std::vector<std::vector<std::size_t>> indices;  // per device, rows of the dataset
  AggregationWeights weights;
};

Partition partition_dataset(const Dataset& data, int m_devices, const PartitionMode& mode,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Models

struct LogisticSpec {};
struct MlpSpec {
  int hidden = 32;
};
using ModelSpec = std::variant<LogisticSpec, MlpSpec>;

std::string to_string(const ModelSpec& spec);

/// Differentiable classifier on a flat parameter vector.
class Model {
 public:
  virtual ~Model() = default;
  virtual Eigen::Index parameters() const = 0;
  /// Initial parameter vector (deterministic per seed).
  virtual RVector initial(std::uint64_t seed) const = 0;
  /// Logits, one row per sample.
  virtual RMatrix logits(const RVector& w, const RMatrix& x) const = 0;
  /// Mean cross-entropy over `rows`; accumulates its gradient into `grad`
  /// when non-null.
  virtual double loss_and_gradient(const RVector& w, const Dataset& data,
                                   std::span<const std::size_t> rows, RVector* grad) const = 0;
};

std::unique_ptr<Model> make_model(const ModelSpec& spec, Eigen::Index features, int classes);

struct ModelState {
  RVector w;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const Model& model, const ModelState& state, const Dataset& test);

/// E epochs of sequential mini-batch gradient descent over B mini-batches of
/// the device data, returning w_local - w_global.
RVector local_update(const Model& model, const ModelState& global, const Dataset& data,
                     std::span<const std::size_t> rows, int local_epochs, int minibatches,
                     double learning_rate, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Aggregation backends

struct AggregationOutcome {
  RVector aggregate;
  double mse = 0.0;  // closed-form design MSE (0 for ideal)
  bool feasible = true;
};

class AggregatorBackend {
 public:
  virtual ~AggregatorBackend() = default;
  virtual std::string name() const = 0;
  /// Re-optimizes the transceiver design for a new channel block.
  virtual void set_channel(const ChannelRealization& chan) = 0;
  virtual bool needs_channel() const { return true; }
  virtual AggregationOutcome aggregate(const RMatrix& updates, const AggregationWeights& w,
                                       std::uint64_t seed) = 0;
};

class IdealBackend final : public AggregatorBackend {
 public:
  std::string name() const override { return "ideal"; }
  void set_channel(const ChannelRealization&) override {}
  bool needs_channel() const override { return false; }
  AggregationOutcome aggregate(const RMatrix& updates, const AggregationWeights& w,
                               std::uint64_t seed) override;
};

enum class AirScheme { CsitBased, CsitFree, NoRis };

const char* to_string(AirScheme s);

struct AirSettings {
  double p0 = 1e-2;
  double sigma2 = 1e-12;  // in channel reference units
  DcConfig dc;
  SdrConfig sdr;
  /// 0 = continuous phases, otherwise project onto a 2^bits alphabet.
  int phase_bits = 0;
};

/// Design of one air-interface scheme for one channel block.
struct AirDesign {
  CVector theta;
  CVector b;
  Complex c{1.0, 0.0};
  bool feasible = true;
  AggregationReport report;
  BeamformingSolution dc;  // populated for the CSIT-free scheme
};

/// Computes (theta, b, c) of a scheme. The weights are those of the FedAvg
/// objective; the channel for NoRis has its RIS part ignored.
AirDesign design_air(AirScheme scheme, const ChannelRealization& chan, const AggregationWeights& w,
                     const AirSettings& settings);

/// Over-the-air aggregation: normalize -> superpose -> de-normalize.
class AirBackend final : public AggregatorBackend {
 public:
  AirBackend(AirScheme scheme, AggregationWeights weights, AirSettings settings);

  std::string name() const override;
  void set_channel(const ChannelRealization& chan) override;
  AggregationOutcome aggregate(const RMatrix& updates, const AggregationWeights& w,
                               std::uint64_t seed) override;

  const AirDesign& design() const { return design_; }

 private:
  AirScheme scheme_;
  AggregationWeights weights_;
  AirSettings settings_;
  ChannelRealization chan_;
  AirDesign design_;
  bool ready_ = false;
};

// ---------------------------------------------------------------------------
// Training loop

struct TrainingConfig {
  int rounds = 100;
  int devices = 40;
  int local_epochs = 5;
  int minibatches = 100;
  double learning_rate = 1e-4;
  ModelSpec model = LogisticSpec{};
  PartitionMode partition = IidPartition{};
  double downlink_noise_variance = 0.0;
  /// Rounds per channel coherence block; 0 = static channel.
  int channel_refresh_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RoundMetrics {
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double aggregation_mse = 0.0;
  bool feasible = true;
  std::uint64_t channel_block = 0;
  double wallclock = 0.0;
};

struct FederatedTask {
  Dataset train;
  Dataset test;
  Partition partition;
};

FederatedTask make_task(const Dataset& train, const Dataset& test, const TrainingConfig& cfg);

/// Runs FedAvg. `channels` may be null only for backends that do not need a
/// channel.
std::vector<RoundMetrics> run_training(const TrainingConfig& cfg, const FederatedTask& task,
                                       AggregatorBackend& backend,
                                       const ChannelProvider* channels);

}  // namespace risfeel
