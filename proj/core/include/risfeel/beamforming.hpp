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
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "risfeel/channel.hpp"
#include "risfeel/sdp.hpp"

namespace risfeel {

/// Aggregation weights p_m = |D_m| / |D|.
class AggregationWeights {
 public:
  explicit AggregationWeights(RVector p);

  static AggregationWeights uniform(int m_devices);
  static AggregationWeights from_counts(const std::vector<std::size_t>& counts);

  const RVector& values() const { return p_; }
  double operator[](Eigen::Index m) const { return p_(m); }
  Eigen::Index size() const { return p_.size(); }

 private:
  RVector p_;
};

struct DcConfig {
  double epsilon = 1e-2;
  double rho = 10.0;
  int i_max = 100;
  double sdp_tol = 1e-6;
  int sdp_max_iter = 50000;
  double convergence_tol = 1e-6;
  /// Seeds the random phases returned for infeasible instances.
  std::uint64_t seed = 0;

  void validate() const;
};

struct SdrConfig {
  int bisection_steps = 30;
  int randomizations = 200;
  double sdp_tol = 1e-6;
  int sdp_max_iter = 20000;
  std::uint64_t seed = 0;
};

/// Matrices of the homogenized alignment constraint
///   || G [theta; c] + f ||^2 <= eps   <=>   v^H R v + ||f||^2 <= eps,
/// with v = [theta; c; 1].
struct LiftedData {
  CMatrix g;  // M x (L+1), row m = [g_m^T, -p_m / sqrt(P0)]
  CVector f;  // direct channels
  HermitianMatrix r;
  double f_norm_sq = 0.0;
};

struct BeamformingSolution {
  CVector theta;
  Complex c{0.0, 0.0};
  CVector b;
  double residual = 0.0;
  double noise_mse = 0.0;
  double mismatch_mse = 0.0;
  bool feasible = false;
  double penalty_gap = 0.0;
  double lifted_trace = 0.0;

  /// Penalized objective rho (tr V - ||V||_2) - V_cc after each accepted
  /// majorization step (first entry: initial relaxation).
  std::vector<double> objective_trace;
  int outer_iterations = 0;
  int sdp_iterations = 0;
  /// Alignment residual change caused by forcing |theta_l| = 1 after
  /// extraction (extracted c held fixed).
  double reprojection_delta = 0.0;
  std::string diagnostic;

  double total_mse() const { return mismatch_mse + noise_mse; }
};

LiftedData build_lifted(const ChannelRealization& chan, const AggregationWeights& w, double p0);

/// sum_m | h_m(theta) - c p_m / sqrt(P0) |^2
double alignment_residual(const ChannelRealization& chan, const CVector& theta, Complex c,
                          const AggregationWeights& w, double p0);

/// sum_m | h_m b_m / c - p_m |^2
double weight_mismatch(const CVector& h_eff, const CVector& b, Complex c,
                       const AggregationWeights& w);

/// Rank-one factor of V by its leading eigenpair, then c = v_{L+1}/v_{L+2}
/// and theta = v_{1:L}/v_{L+2}, each theta_l rescaled to unit modulus.
std::pair<CVector, Complex> extract_solution(const HermitianMatrix& v);

/// Same as extract_solution, without the unit-modulus rescaling.
std::pair<CVector, Complex> extract_raw(const HermitianMatrix& v);

/// For fixed theta: the c of largest modulus with residual <= epsilon, or the
/// residual-minimizing c when no such c exists.
Complex refine_receive_scalar(const ChannelRealization& chan, const CVector& theta,
                              const AggregationWeights& w, double p0, double epsilon);

/// MSE-minimizing receive scalar for fixed transmit scalars.
Complex mmse_receive_scalar(const CVector& h_eff, const CVector& b, const AggregationWeights& w,
                            double sigma2);

/// CSIT-free design: b_m = sqrt(P0), (theta, c) by penalized DC iterations.
/// The lifted matrix holds c in units of an upper bound on the |c| the
/// channel can support; `lifted_trace` and `penalty_gap` refer to it.
BeamformingSolution dc_solve(const ChannelRealization& chan, const AggregationWeights& w,
                             double p0, double sigma2, const DcConfig& cfg);

/// b_m = p_m c / h_m(theta) with c = sqrt(P0) min_m |h_m(theta)| / p_m.
std::pair<CVector, Complex> csit_based_scalars(const ChannelRealization& chan,
                                               const CVector& theta, const AggregationWeights& w,
                                               double p0);

/// Max-min phase design by semidefinite relaxation + bisection + Gaussian
/// randomization.
CVector csit_based_theta(const ChannelRealization& chan, const AggregationWeights& w, double p0,
                         const SdrConfig& cfg);

/// Nearest point of {exp(j 2 pi i / 2^bits)} per entry; ties go to smaller i.
CVector project_discrete(const CVector& theta, int bits);

/// Fills residual / MSE diagnostics of an arbitrary design in place.
void fill_diagnostics(BeamformingSolution& sol, const ChannelRealization& chan,
                      const AggregationWeights& w, double p0, double sigma2);

nlohmann::json to_json(const BeamformingSolution& sol);

}  // namespace risfeel
