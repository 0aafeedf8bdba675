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

#include "risfeel/beamforming.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

namespace risfeel {

namespace {

constexpr double kWeightSumTol = 1e-12;
constexpr double kHomogenizationFloor = 1e-9;
constexpr double kFeasibleSlack = 1e-6;

CVector unit_modulus(const CVector& x) {
  CVector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double a = std::abs(x(i));
    out(i) = a > 0.0 ? x(i) / a : Complex(1.0, 0.0);
  }
  return out;
}

CVector random_phases(Eigen::Index l, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  CVector theta(l);
  for (Eigen::Index i = 0; i < l; ++i) theta(i) = std::polar(1.0, u(rng));
  return theta;
}

/// Congruence scaling that puts the constrained diagonal exactly at one.
CMatrix normalize_diagonal(const CMatrix& x, const std::vector<Eigen::Index>& diag) {
  RVector s = RVector::Ones(x.rows());
  for (auto l : diag) {
    const double d = x(l, l).real();
    if (d > 0.0) s(l) = 1.0 / std::sqrt(d);
  }
  return s.asDiagonal() * x * s.asDiagonal();
}

double penalized_objective(const HermitianMatrix& v, double rho, Eigen::Index c_index) {
  return rho * (v.trace() - v.spectral_norm()) - v.matrix()(c_index, c_index).real();
}

/// Unit of the c coordinate inside the lifted matrix. The estimate |c| ~
/// sqrt(P0 (||f||^2 + eps)) / ||p|| matches c p / sqrt(P0) to the direct
/// channels; dividing by sqrt(L / 4) puts V_cc on the scale of the phase
/// block's trace. Badly balanced units leave ADMM crawling.
double receive_scalar_unit(const LiftedData& lifted, const AggregationWeights& w, double p0,
                           double epsilon) {
  const auto l = static_cast<double>(lifted.g.cols() - 1);
  const double estimate = std::sqrt(p0 * (lifted.f_norm_sq + epsilon)) / w.values().norm();
  return estimate * std::sqrt(4.0 / std::max(l, 4.0));
}

double min_ratio(const CVector& h, const AggregationWeights& w) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < h.size(); ++m) best = std::min(best, std::abs(h(m)) / w[m]);
  return best;
}

}  // namespace

AggregationWeights::AggregationWeights(RVector p) : p_(std::move(p)) {
  require(p_.size() >= 1, "AggregationWeights: need at least one device");
  for (Eigen::Index m = 0; m < p_.size(); ++m) {
    require(std::isfinite(p_(m)) && p_(m) > 0.0, "AggregationWeights: weights must be positive");
  }
  require(std::abs(p_.sum() - 1.0) <= kWeightSumTol, "AggregationWeights: weights must sum to 1");
}

AggregationWeights AggregationWeights::uniform(int m_devices) {
  require(m_devices >= 1, "AggregationWeights: need at least one device");
  return AggregationWeights(RVector::Constant(m_devices, 1.0 / m_devices));
}

AggregationWeights AggregationWeights::from_counts(const std::vector<std::size_t>& counts) {
  require(!counts.empty(), "AggregationWeights: need at least one device");
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  require(total > 0.0, "AggregationWeights: empty dataset");
  RVector p(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t m = 0; m < counts.size(); ++m) {
    p(static_cast<Eigen::Index>(m)) = static_cast<double>(counts[m]) / total;
  }
  return AggregationWeights(std::move(p));
}

void DcConfig::validate() const {
  require(epsilon > 0.0, "dc: epsilon must be positive");
  require(rho > 0.0, "dc: rho must be positive");
  require(i_max >= 1, "dc: i_max must be >= 1");
  require(sdp_tol > 0.0, "dc: sdp_tol must be positive");
  require(convergence_tol >= 0.0, "dc: convergence_tol must be non-negative");
}

LiftedData build_lifted(const ChannelRealization& chan, const AggregationWeights& w, double p0) {
  require(p0 > 0.0, "build_lifted: P0 must be positive");
  require(w.size() == chan.devices(), "build_lifted: weight count must equal device count");
  const Eigen::Index m = chan.devices();
  const Eigen::Index l = chan.elements();
  LiftedData out;
  out.g.resize(m, l + 1);
  out.g.leftCols(l) = chan.cascades;
  const double root = std::sqrt(p0);
  for (Eigen::Index i = 0; i < m; ++i) out.g(i, l) = -w[i] / root;
  out.f = chan.h_dp;
  out.f_norm_sq = out.f.squaredNorm();

  CMatrix r = CMatrix::Zero(l + 2, l + 2);
  r.topLeftCorner(l + 1, l + 1) = out.g.adjoint() * out.g;
  r.topRightCorner(l + 1, 1) = out.g.adjoint() * out.f;
  r.bottomLeftCorner(1, l + 1) = out.f.adjoint() * out.g;
  out.r = HermitianMatrix(r, 1e-10);
  return out;
}

double alignment_residual(const ChannelRealization& chan, const CVector& theta, Complex c,
                          const AggregationWeights& w, double p0) {
  require(p0 > 0.0, "alignment_residual: P0 must be positive");
  require(w.size() == chan.devices(), "alignment_residual: weight count must equal device count");
  const CVector h = effective_channel(chan, theta);
  const double root = std::sqrt(p0);
  double acc = 0.0;
  for (Eigen::Index m = 0; m < h.size(); ++m) acc += std::norm(h(m) - c * w[m] / root);
  return acc;
}

double weight_mismatch(const CVector& h_eff, const CVector& b, Complex c,
                       const AggregationWeights& w) {
  require(h_eff.size() == b.size() && b.size() == w.size(), "weight_mismatch: size mismatch");
  require(c != Complex(0.0, 0.0), "weight_mismatch: receive scalar must be nonzero");
  double acc = 0.0;
  for (Eigen::Index m = 0; m < h_eff.size(); ++m) acc += std::norm(h_eff(m) * b(m) / c - w[m]);
  return acc;
}

std::pair<CVector, Complex> extract_raw(const HermitianMatrix& v) {
  require(v.dim() >= 2, "extract_solution: lifted matrix must be at least 2 x 2");
  const auto [u, lambda] = leading_eigenvector(v);
  const CVector vec = u * std::sqrt(std::max(lambda, 0.0));
  const Eigen::Index n = v.dim();
  const Complex tau = vec(n - 1);
  if (std::abs(tau) < kHomogenizationFloor) throw Error("degenerate homogenization");
  return {vec.head(n - 2) / tau, vec(n - 2) / tau};
}

std::pair<CVector, Complex> extract_solution(const HermitianMatrix& v) {
  auto [theta, c] = extract_raw(v);
  return {unit_modulus(theta), c};
}

Complex refine_receive_scalar(const ChannelRealization& chan, const CVector& theta,
                              const AggregationWeights& w, double p0, double epsilon) {
  const CVector a = effective_channel(chan, theta);
  const RVector q = w.values() / std::sqrt(p0);
  const double qq = q.squaredNorm();
  Complex qa{0.0, 0.0};
  for (Eigen::Index m = 0; m < a.size(); ++m) qa += q(m) * a(m);
  const Complex center = qa / qq;
  const double floor = std::max(0.0, a.squaredNorm() - std::norm(qa) / qq);
  if (floor > epsilon) return center;
  const double radius = std::sqrt((epsilon - floor) / qq) * (1.0 - 1e-12);
  const double mag = std::abs(center);
  if (mag == 0.0) return {radius, 0.0};
  return center * (1.0 + radius / mag);
}

Complex mmse_receive_scalar(const CVector& h_eff, const CVector& b, const AggregationWeights& w,
                            double sigma2) {
  require(h_eff.size() == b.size() && b.size() == w.size(), "mmse_receive_scalar: size mismatch");
  Complex num{0.0, 0.0};
  double den = sigma2;
  for (Eigen::Index m = 0; m < h_eff.size(); ++m) {
    const Complex e = h_eff(m) * b(m);
    num += w[m] * std::conj(e);
    den += std::norm(e);
  }
  const Complex inv = num / den;
  require(std::abs(inv) > 0.0, "mmse_receive_scalar: no signal reaches the receiver");
  return 1.0 / inv;
}

void fill_diagnostics(BeamformingSolution& sol, const ChannelRealization& chan,
                      const AggregationWeights& w, double p0, double sigma2) {
  const CVector h = effective_channel(chan, sol.theta);
  sol.residual = alignment_residual(chan, sol.theta, sol.c, w, p0);
  sol.noise_mse = sigma2 / std::norm(sol.c);
  sol.mismatch_mse = weight_mismatch(h, sol.b, sol.c, w);
}

BeamformingSolution dc_solve(const ChannelRealization& chan, const AggregationWeights& w,
                             double p0, double sigma2, const DcConfig& cfg) {
  cfg.validate();
  const Eigen::Index l = chan.elements();
  require(l >= 1, "dc_solve: need at least one RIS element");
  const LiftedData lifted = build_lifted(chan, w, p0);
  const Eigen::Index n = l + 2;
  const Eigen::Index c_index = l;

  SdpProblem prob;
  for (Eigen::Index i = 0; i < l; ++i) prob.diag_one_indices.push_back(i);
  prob.diag_one_indices.push_back(l + 1);
  const double kappa = receive_scalar_unit(lifted, w, p0, cfg.epsilon);
  {
    RVector d = RVector::Ones(n);
    d(c_index) = kappa;
    const CMatrix scaled = d.asDiagonal() * lifted.r.matrix() * d.asDiagonal();
    prob.trace_ineqs.push_back({HermitianMatrix(scaled, 1e-10), lifted.f_norm_sq, cfg.epsilon});
  }

  CMatrix reward = CMatrix::Zero(n, n);
  reward(c_index, c_index) = -1.0;

  SdpSettings settings;
  settings.tol = cfg.sdp_tol;
  settings.max_iter = cfg.sdp_max_iter;

  BeamformingSolution sol;
  sol.b = CVector::Constant(chan.devices(), Complex(std::sqrt(p0), 0.0));

  auto infeasible = [&](const std::string& why) {
    sol.theta = random_phases(l, cfg.seed);
    const CVector h = effective_channel(chan, sol.theta);
    double h_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; m < h.size(); ++m) h_min = std::min(h_min, std::abs(h(m)));
    sol.c = Complex(std::sqrt(p0) * h_min / w.values().maxCoeff(), 0.0);
    fill_diagnostics(sol, chan, w, p0, sigma2);
    sol.feasible = false;
    sol.diagnostic = why;
    return sol;
  };

  // Semidefinite relaxation (no rank penalty) provides the first iterate.
  prob.cost = HermitianMatrix(reward);
  SdpSolution sub = solve_sdp(prob, settings);
  sol.sdp_iterations += sub.iterations;
  if (sub.status == SdpStatus::Infeasible) return infeasible("alignment relaxation infeasible");

  HermitianMatrix v(normalize_diagonal(sub.x.matrix(), prob.diag_one_indices), 1e-8);
  double current = penalized_objective(v, cfg.rho, c_index);
  sol.objective_trace.push_back(current);
  SdpWarmStart warm = sub.warm;

  for (int i = 1; i <= cfg.i_max; ++i) {
    const CVector u = leading_eigenvector(v).first;
    CMatrix cost = cfg.rho * (CMatrix::Identity(n, n) - u * u.adjoint()) + reward;
    prob.cost = HermitianMatrix(0.5 * (cost + cost.adjoint()));
    sub = solve_sdp(prob, settings, &warm);
    sol.sdp_iterations += sub.iterations;
    sol.outer_iterations = i;
    if (sub.status == SdpStatus::Infeasible) return infeasible("penalized subproblem infeasible");

    HermitianMatrix next(normalize_diagonal(sub.x.matrix(), prob.diag_one_indices), 1e-8);
    const double value = penalized_objective(next, cfg.rho, c_index);
    // Accept descent steps only; an inexact solve that fails to improve the
    // majorizer means the iteration has converged at solver precision.
    if (value > current) break;
    const double change = current - value;
    v = std::move(next);
    current = value;
    sol.objective_trace.push_back(current);
    warm = sub.warm;
    if (change < cfg.convergence_tol * std::max(1.0, std::abs(current))) break;
  }

  sol.lifted_trace = v.trace();
  sol.penalty_gap = v.trace() - v.spectral_norm();

  CVector theta_raw;
  Complex c_unit;
  if (lifted.f_norm_sq == 0.0) {
    // Without direct paths the homogenizing coordinate is decoupled and
    // every common phase of (theta, c) is optimal, so the leading
    // eigenvector is used as is.
    const auto [u, lambda] = leading_eigenvector(v);
    const CVector vec = u * std::sqrt(std::max(lambda, 0.0));
    const double tau = std::abs(vec(n - 1));
    const Complex phase = tau < kHomogenizationFloor ? Complex(1.0, 0.0) : vec(n - 1) / tau;
    theta_raw = vec.head(l) / phase;
    c_unit = vec(c_index) / phase;
  } else {
    std::tie(theta_raw, c_unit) = extract_raw(v);
  }
  const Complex c_raw = kappa * c_unit;
  sol.theta = unit_modulus(theta_raw);
  {
    CVector lifted_v(n);
    lifted_v.head(l) = theta_raw;
    lifted_v(l) = c_raw;
    lifted_v(l + 1) = 1.0;
    const double before = (lifted.g * lifted_v.head(l + 1) + lifted.f).squaredNorm();
    sol.reprojection_delta = alignment_residual(chan, sol.theta, c_raw, w, p0) - before;
  }
  sol.c = refine_receive_scalar(chan, sol.theta, w, p0, cfg.epsilon);
  fill_diagnostics(sol, chan, w, p0, sigma2);
  sol.feasible = sol.residual <= cfg.epsilon * (1.0 + kFeasibleSlack);
  if (!sol.feasible) sol.diagnostic = "alignment residual exceeds epsilon after extraction";
  return sol;
}

std::pair<CVector, Complex> csit_based_scalars(const ChannelRealization& chan,
                                               const CVector& theta, const AggregationWeights& w,
                                               double p0) {
  require(p0 > 0.0, "csit_based_scalars: P0 must be positive");
  require(w.size() == chan.devices(), "csit_based_scalars: weight count must equal device count");
  const CVector h = effective_channel(chan, theta);
  double ratio = std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < h.size(); ++m) {
    if (std::abs(h(m)) == 0.0) throw Error("device in deep fade");
    const double r = std::abs(h(m)) / w[m];
    if (r < ratio) ratio = r;
  }
  const Complex c(std::sqrt(p0) * ratio, 0.0);
  CVector b(h.size());
  for (Eigen::Index m = 0; m < h.size(); ++m) b(m) = w[m] * c / h(m);
  return {b, c};
}

CVector csit_based_theta(const ChannelRealization& chan, const AggregationWeights& w, double p0,
                         const SdrConfig& cfg) {
  const Eigen::Index l = chan.elements();
  const Eigen::Index m_dev = chan.devices();
  require(l >= 1, "csit_based_theta: need at least one RIS element");
  require(w.size() == m_dev, "csit_based_theta: weight count must equal device count");
  (void)p0;  // the max-min ratio does not depend on P0

  const Eigen::Index n = l + 1;
  std::vector<CMatrix> q(static_cast<std::size_t>(m_dev));
  double t_hi = 0.0;
  for (Eigen::Index m = 0; m < m_dev; ++m) {
    CVector a(n);
    a.head(l) = chan.cascades.row(m).transpose();
    a(l) = chan.h_dp(m);
    q[static_cast<std::size_t>(m)] = a.conjugate() * a.transpose();
    const double reach = std::abs(chan.h_dp(m)) + chan.cascades.row(m).cwiseAbs().sum();
    t_hi = std::max(t_hi, reach * reach / (w[m] * w[m]));
  }

  SdpProblem prob;
  prob.cost = HermitianMatrix::zero(n);
  for (Eigen::Index i = 0; i < n; ++i) prob.diag_one_indices.push_back(i);
  for (Eigen::Index m = 0; m < m_dev; ++m) {
    prob.trace_ineqs.push_back({HermitianMatrix(-q[static_cast<std::size_t>(m)], 1e-10), 0.0, 0.0});
  }
  SdpSettings settings;
  settings.tol = cfg.sdp_tol;
  settings.max_iter = cfg.sdp_max_iter;

  CMatrix best_w = CMatrix::Identity(n, n);
  double lo = 0.0;
  double hi = t_hi;
  SdpWarmStart warm;
  bool have_warm = false;
  for (int step = 0; step < cfg.bisection_steps; ++step) {
    const double mid = 0.5 * (lo + hi);
    for (Eigen::Index m = 0; m < m_dev; ++m) {
      prob.trace_ineqs[static_cast<std::size_t>(m)].bound = -mid * w[m] * w[m];
    }
    const SdpSolution s = solve_sdp(prob, settings, have_warm ? &warm : nullptr);
    if (s.status == SdpStatus::Optimal) {
      lo = mid;
      best_w = s.x.matrix();
      warm = s.warm;
      have_warm = true;
    } else {
      hi = mid;
    }
  }

  auto score = [&](const CVector& theta) { return min_ratio(effective_channel(chan, theta), w); };
  auto candidate = [&](const CVector& xi) -> CVector {
    const Complex ref = xi(l);
    const CVector rel = std::abs(ref) > 0.0 ? CVector(xi.head(l) / ref) : CVector(xi.head(l));
    return unit_modulus(rel);
  };

  Eigen::SelfAdjointEigenSolver<CMatrix> es(HermitianMatrix(best_w, 1e-8).matrix());
  const RVector vals = es.eigenvalues().cwiseMax(0.0);
  const CMatrix factor = es.eigenvectors() * vals.cwiseSqrt().asDiagonal();

  CVector best = candidate(es.eigenvectors().col(n - 1));
  double best_score = score(best);
  Rng rng(cfg.seed);
  for (int k = 0; k < cfg.randomizations; ++k) {
    CVector r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = sample_cn(rng);
    const CVector theta = candidate(factor * r);
    const double s = score(theta);
    if (s > best_score) {
      best_score = s;
      best = theta;
    }
  }
  return best;
}

CVector project_discrete(const CVector& theta, int bits) {
  require(bits >= 1, "project_discrete: bits must be >= 1");
  require(bits < 31, "project_discrete: bits too large");
  const long levels = 1L << bits;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(levels);
  CVector out(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    double phi = std::arg(theta(i));
    if (phi < 0.0) phi += 2.0 * std::numbers::pi;
    const long lower = static_cast<long>(std::floor(phi / step));
    const double d_lower = phi - static_cast<double>(lower) * step;
    const double d_upper = static_cast<double>(lower + 1) * step - phi;
    const long lo_idx = lower % levels;
    const long hi_idx = (lower + 1) % levels;
    long pick = 0;
    if (std::abs(d_lower - d_upper) <= 1e-12) pick = std::min(lo_idx, hi_idx);
    else pick = d_lower < d_upper ? lo_idx : hi_idx;
    out(i) = std::polar(1.0, static_cast<double>(pick) * step);
    if (pick == 0) out(i) = Complex(1.0, 0.0);
  }
  return out;
}

nlohmann::json to_json(const BeamformingSolution& sol) {
  nlohmann::json j;
  j["theta"] = complex_array_json(sol.theta);
  j["c"] = {sol.c.real(), sol.c.imag()};
  j["b"] = complex_array_json(sol.b);
  j["residual"] = sol.residual;
  j["noise_mse"] = sol.noise_mse;
  j["mismatch_mse"] = sol.mismatch_mse;
  j["feasible"] = sol.feasible;
  j["penalty_gap"] = sol.penalty_gap;
  j["lifted_trace"] = sol.lifted_trace;
  j["outer_iterations"] = sol.outer_iterations;
  j["reprojection_delta"] = sol.reprojection_delta;
  j["diagnostic"] = sol.diagnostic;
  return j;
}

}  // namespace risfeel
