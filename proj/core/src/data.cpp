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
#include <fstream>
#include <numeric>
#include <sstream>

#include "risfeel/fedlearn.hpp"

namespace risfeel {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.classes = classes;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    out.y.push_back(y[rows[i]]);
  }
  return out;
}

Dataset make_blobs(const BlobConfig& cfg) {
  require(cfg.classes >= 2, "make_blobs: need at least two classes");
  require(cfg.features >= 1, "make_blobs: need at least one feature");
  require(cfg.samples_per_class >= 1, "make_blobs: need at least one sample per class");
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  RMatrix centers(cfg.classes, cfg.features);
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(k, j) = cfg.separation * normal(rng);
  }

  Dataset out;
  out.classes = cfg.classes;
  const Eigen::Index n = static_cast<Eigen::Index>(cfg.classes) * cfg.samples_per_class;
  out.x.resize(n, cfg.features);
  out.y.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int k = 0; k < cfg.classes; ++k) {
    for (int s = 0; s < cfg.samples_per_class; ++s, ++row) {
      for (Eigen::Index j = 0; j < cfg.features; ++j) out.x(row, j) = centers(k, j) + normal(rng);
      out.y.push_back(k);
    }
  }
  return out;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
      if (!numeric) break;
    }
    if (!numeric) {
      if (rows.empty() && labels.empty()) continue;  // header
      throw Error("load_csv: non-numeric value on line " + std::to_string(line_no));
    }
    if (values.size() < 2) throw Error("load_csv: need features and a label on line " + std::to_string(line_no));
    if (width == 0) width = values.size();
    if (values.size() != width) {
      throw Error("load_csv: inconsistent column count on line " + std::to_string(line_no));
    }
    const double label = values.back();
    if (label < 0.0 || label != std::floor(label)) {
      throw Error("load_csv: label must be a non-negative integer on line " + std::to_string(line_no));
    }
    labels.push_back(static_cast<int>(label));
    values.pop_back();
    rows.push_back(std::move(values));
  }
  require(!rows.empty(), "load_csv: no data rows in " + path);

  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < width; ++j) {
      out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  out.y = std::move(labels);
  out.classes = *std::max_element(out.y.begin(), out.y.end()) + 1;
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, double test_fraction,
                                             std::uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, "train_test_split: fraction must be in (0, 1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(data.size()));
  require(n_test >= 1 && n_test < data.size(), "train_test_split: split leaves an empty side");
  std::span<const std::size_t> all(order);
  return {data.subset(all.subspan(n_test)), data.subset(all.first(n_test))};
}

namespace {

/// Sizes of `parts` near-equal pieces of `n`; the remainder goes round-robin
/// to the leading pieces.
std::vector<std::size_t> even_sizes(std::size_t n, std::size_t parts) {
  std::vector<std::size_t> sizes(parts, n / parts);
  for (std::size_t i = 0; i < n % parts; ++i) ++sizes[i];
  return sizes;
}

}  // namespace

Partition partition_dataset(const Dataset& data, int m_devices, const PartitionMode& mode,
                            std::uint64_t seed) {
  require(m_devices >= 1, "partition_dataset: need at least one device");
  const auto m = static_cast<std::size_t>(m_devices);
  require(data.size() >= m, "partition_dataset: fewer samples than devices");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> parts(m);

  if (std::holds_alternative<IidPartition>(mode)) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t pos = 0;
    const auto sizes = even_sizes(order.size(), m);
    for (std::size_t d = 0; d < m; ++d) {
      parts[d].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + sizes[d]));
      pos += sizes[d];
    }
  } else {
    const int per_device = std::get<LabelShardPartition>(mode).shards_per_device;
    require(per_device >= 1, "partition_dataset: shards_per_device must be >= 1");
    const std::size_t shards = m * static_cast<std::size_t>(per_device);
    require(data.size() >= shards, "partition_dataset: fewer samples than shards");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.y[a] < data.y[b]; });
    const auto sizes = even_sizes(order.size(), shards);
    std::vector<std::size_t> shard_ids(shards);
    std::iota(shard_ids.begin(), shard_ids.end(), std::size_t{0});
    std::shuffle(shard_ids.begin(), shard_ids.end(), rng);
    std::vector<std::size_t> start(shards + 1, 0);
    for (std::size_t s = 0; s < shards; ++s) start[s + 1] = start[s] + sizes[s];
    for (std::size_t k = 0; k < shards; ++k) {
      const std::size_t shard = shard_ids[k];
      auto& dst = parts[k / static_cast<std::size_t>(per_device)];
      dst.insert(dst.end(), order.begin() + static_cast<std::ptrdiff_t>(start[shard]),
                 order.begin() + static_cast<std::ptrdiff_t>(start[shard + 1]));
    }
  }

  std::vector<std::size_t> counts;
  counts.reserve(m);
  for (const auto& p : parts) counts.push_back(p.size());
  return Partition{std::move(parts), AggregationWeights::from_counts(counts)};
}

}  // namespace risfeel
