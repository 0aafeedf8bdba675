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

#include "risfeel/fedlearn.hpp"

namespace risfeel {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

RMatrix gather(const Dataset& data, std::span<const std::size_t> rows) {
  RMatrix x(static_cast<Eigen::Index>(rows.size()), data.features());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = data.x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return x;
}

/// Mean cross-entropy; overwrites `logits` with (softmax - onehot) / n.
double softmax_cross_entropy(RMatrix& logits, const Dataset& data,
                             std::span<const std::size_t> rows) {
  const auto n = static_cast<double>(rows.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    logits.row(i).array() -= peak;
    const double log_z = std::log(logits.row(i).array().exp().sum());
    const int label = data.y[rows[static_cast<std::size_t>(i)]];
    loss -= logits(i, label) - log_z;
    logits.row(i) = (logits.row(i).array() - log_z).exp().matrix();
    logits(i, label) -= 1.0;
  }
  logits /= n;
  return loss / n;
}

class LogisticModel final : public Model {
 public:
  LogisticModel(Eigen::Index features, int classes) : d_(features), k_(classes) {}

  Eigen::Index parameters() const override { return k_ * d_ + k_; }

  RVector initial(std::uint64_t) const override { return RVector::Zero(parameters()); }

  RMatrix logits(const RVector& w, const RMatrix& x) const override {
    const ConstMap weight(w.data(), k_, d_);
    const Eigen::Map<const RVector> bias(w.data() + k_ * d_, k_);
    RMatrix out = x * weight.transpose();
    out.rowwise() += bias.transpose();
    return out;
  }

  double loss_and_gradient(const RVector& w, const Dataset& data, std::span<const std::size_t> rows,
                           RVector* grad) const override {
    const RMatrix x = gather(data, rows);
    RMatrix g = logits(w, x);
    const double loss = softmax_cross_entropy(g, data, rows);
    if (grad != nullptr) {
      MutMap dw(grad->data(), k_, d_);
      Eigen::Map<RVector> db(grad->data() + k_ * d_, k_);
      dw += g.transpose() * x;
      db += g.colwise().sum().transpose();
    }
    return loss;
  }

 private:
  Eigen::Index d_;
  Eigen::Index k_;
};

/// One hidden ReLU layer; parameters packed as [W1 (HxD), b1, W2 (KxH), b2].
class MlpModel final : public Model {
 public:
  MlpModel(Eigen::Index features, int hidden, int classes) : d_(features), h_(hidden), k_(classes) {
    require(hidden >= 1, "mlp: hidden width must be >= 1");
  }

  Eigen::Index parameters() const override { return h_ * d_ + h_ + k_ * h_ + k_; }

  RVector initial(std::uint64_t seed) const override {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    RVector w = RVector::Zero(parameters());
    const double s1 = std::sqrt(2.0 / static_cast<double>(d_));
    const double s2 = std::sqrt(1.0 / static_cast<double>(h_));
    for (Eigen::Index i = 0; i < h_ * d_; ++i) w(i) = s1 * normal(rng);
    const Eigen::Index w2 = h_ * d_ + h_;
    for (Eigen::Index i = 0; i < k_ * h_; ++i) w(w2 + i) = s2 * normal(rng);
    return w;
  }

  RMatrix logits(const RVector& w, const RMatrix& x) const override {
    RMatrix z;
    RMatrix a;
    return forward(w, x, z, a);
  }

  double loss_and_gradient(const RVector& w, const Dataset& data, std::span<const std::size_t> rows,
                           RVector* grad) const override {
    const RMatrix x = gather(data, rows);
    RMatrix z;
    RMatrix a;
    RMatrix g = forward(w, x, z, a);
    const double loss = softmax_cross_entropy(g, data, rows);
    if (grad != nullptr) {
      const Layout p = layout(w);
      MutMap dw1(grad->data(), h_, d_);
      Eigen::Map<RVector> db1(grad->data() + p.b1, h_);
      MutMap dw2(grad->data() + p.w2, k_, h_);
      Eigen::Map<RVector> db2(grad->data() + p.b2, k_);
      dw2 += g.transpose() * a;
      db2 += g.colwise().sum().transpose();
      const ConstMap w2(w.data() + p.w2, k_, h_);
      RMatrix dz = g * w2;
      dz.array() *= (z.array() > 0.0).cast<double>();
      dw1 += dz.transpose() * x;
      db1 += dz.colwise().sum().transpose();
    }
    return loss;
  }

 private:
  struct Layout {
    Eigen::Index b1, w2, b2;
  };
  Layout layout(const RVector&) const { return {h_ * d_, h_ * d_ + h_, h_ * d_ + h_ + k_ * h_}; }

  RMatrix forward(const RVector& w, const RMatrix& x, RMatrix& z, RMatrix& a) const {
    const Layout p = layout(w);
    const ConstMap w1(w.data(), h_, d_);
    const Eigen::Map<const RVector> b1(w.data() + p.b1, h_);
    const ConstMap w2(w.data() + p.w2, k_, h_);
    const Eigen::Map<const RVector> b2(w.data() + p.b2, k_);
    z = x * w1.transpose();
    z.rowwise() += b1.transpose();
    a = z.cwiseMax(0.0);
    RMatrix out = a * w2.transpose();
    out.rowwise() += b2.transpose();
    return out;
  }

  Eigen::Index d_;
  Eigen::Index h_;
  Eigen::Index k_;
};

}  // namespace

std::string to_string(const ModelSpec& spec) {
  if (std::holds_alternative<LogisticSpec>(spec)) return "logistic";
  return "mlp(" + std::to_string(std::get<MlpSpec>(spec).hidden) + ")";
}

std::unique_ptr<Model> make_model(const ModelSpec& spec, Eigen::Index features, int classes) {
  require(features >= 1 && classes >= 2, "make_model: need features >= 1 and classes >= 2");
  if (std::holds_alternative<LogisticSpec>(spec)) {
    return std::make_unique<LogisticModel>(features, classes);
  }
  return std::make_unique<MlpModel>(features, std::get<MlpSpec>(spec).hidden, classes);
}

Evaluation evaluate(const Model& model, const ModelState& state, const Dataset& test) {
  require(test.size() >= 1, "evaluate: empty test set");
  const RMatrix z = model.logits(state.w, test.x);
  double loss = 0.0;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    const double peak = z.row(i).maxCoeff(&best);
    const double log_z = peak + std::log((z.row(i).array() - peak).exp().sum());
    const int label = test.y[static_cast<std::size_t>(i)];
    loss += log_z - z(i, label);
    if (best == label) ++correct;
  }
  const auto n = static_cast<double>(test.size());
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace risfeel
