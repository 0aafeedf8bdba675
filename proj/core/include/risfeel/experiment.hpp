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
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "risfeel/fedlearn.hpp"

namespace risfeel {

/// Invalid or unknown configuration entry; `field` is the dotted key path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class ExperimentKind { TrainCurves, MseVsL, MseVsM, DiscreteBits, DownlinkSnr, OracleCheck };

const char* to_string(ExperimentKind k);

enum class Backend { Ideal, CsitBased, CsitFree, NoRis };

const char* to_string(Backend b);

struct DataConfig {
  enum class Source { Blobs, Csv } source = Source::Blobs;
  BlobConfig blobs;
  std::string csv_path;
  double test_fraction = 0.2;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::TrainCurves;
  /// L values, M values, phase bits or SNR_DL (dB) depending on `kind`.
  std::vector<double> sweep;
  int trials = 1;
  std::uint64_t seed = 0;
  std::string output = "results.csv";
  std::vector<Backend> backends{Backend::Ideal, Backend::CsitBased, Backend::CsitFree,
                                Backend::NoRis};

  int devices = 40;
  int elements = 110;
  /// Phase resolution of non-sweeping experiments; 0 = continuous.
  int phase_bits = 0;

  GeometryConfig geometry;
  PathLossModel pathloss;
  double p0 = db_to_linear(-20.0);       // W
  double sigma2 = db_to_linear(-120.0);  // W, converted to channel units on use
  DcConfig dc;
  SdrConfig sdr;
  TrainingConfig training;
  DataConfig data;

  void validate() const;
  /// Settings of the air interface in channel reference units.
  AirSettings air_settings() const;
};

/// INI-style file: [section] headers and key = value lines. Keys absent
/// from the file take their defaults; unknown keys are rejected.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

/// Canonical text form; powers are printed in dB. Parsing the output yields
/// the same configuration.
std::string print_config(const ExperimentConfig& cfg);

/// 64-bit FNV-1a of the canonical text form.
std::uint64_t config_hash(const ExperimentConfig& cfg);

/// One measurement. `round` is -1 for non-training experiments; `trial` is
/// -1 for the mean and -2 for the standard-deviation summary rows.
struct ResultRow {
  double sweep = 0.0;
  Backend backend = Backend::Ideal;
  int trial = 0;
  int round = -1;
  std::vector<double> values;
};

struct ResultTable {
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<std::string> columns;  // names of ResultRow::values
  std::vector<ResultRow> rows;       // measurements, then summaries

  void write_csv(std::ostream& os) const;
  /// Value of column `name` in `row`.
  double value(const ResultRow& row, const std::string& name) const;
};

struct RunOptions {
  int threads = 1;
  std::function<void(const std::string&)> progress;
};

ResultTable run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Largest |c|^2 over a uniform `levels`-point phase grid per element,
/// subject to the alignment residual bound; nullopt when no grid point admits a feasible c.
std::optional<double> grid_oracle_gain(const ChannelRealization& chan, const AggregationWeights& w,
                                       double p0, double epsilon, int levels);

nlohmann::json run_manifest(const ExperimentConfig& cfg, const ResultTable& table);

}  // namespace risfeel
