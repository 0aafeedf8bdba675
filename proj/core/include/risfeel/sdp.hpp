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

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "risfeel/common.hpp"

namespace risfeel {

/// Dense complex Hermitian matrix. Construction checks X == X^H up to a
/// relative tolerance and then symmetrizes exactly.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;
  explicit HermitianMatrix(const CMatrix& m, double tol = 1e-12);

  static HermitianMatrix zero(Eigen::Index n);
  static HermitianMatrix identity(Eigen::Index n);

  const CMatrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  double trace() const { return m_.trace().real(); }
  /// Re tr(A B), the real inner product on Hermitian matrices.
  double inner(const HermitianMatrix& other) const;
  double min_eigenvalue() const;
  double spectral_norm() const;

 private:
  CMatrix m_;
};

/// tr(R X) + offset <= bound
struct TraceConstraint {
  HermitianMatrix matrix;
  double offset = 0.0;
  double bound = 0.0;
};

/// minimize tr(C X)  s.t.  X_ll = 1 (l in D),  tr(R_k X) + o_k <= b_k,  X PSD.
struct SdpProblem {
  HermitianMatrix cost;
  std::vector<Eigen::Index> diag_one_indices;
  std::vector<TraceConstraint> trace_ineqs;

  Eigen::Index dim() const { return cost.dim(); }
  void validate() const;
  double objective(const CMatrix& x) const;
};

enum class SdpStatus { Optimal, MaxIter, Infeasible };

const char* to_string(SdpStatus s);

struct SdpSettings {
  double tol = 1e-7;
  int max_iter = 50000;
  /// Declare infeasible once the primal residual sits flat above 10*tol for
  /// this many consecutive iterations while the constraint-side iterate has
  /// stopped moving (dual residual below a tenth of the primal one).
  int stall_window = 500;
  double initial_step = 1.0;
  bool adaptive_step = true;
  /// Over-relaxation factor in (0, 2); 1 is plain ADMM.
  double relaxation = 1.6;
  /// Optional iteration trace, CSV rows: iter,primal_res,dual_res,objective.
  std::ostream* trace = nullptr;
};

/// ADMM state carried between related solves.
struct SdpWarmStart {
  CMatrix z;
  CMatrix u;
  double step = 1.0;
};

struct SdpSolution {
  HermitianMatrix x;
  SdpStatus status = SdpStatus::MaxIter;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  double objective = 0.0;
  std::string diagnostic;
  SdpWarmStart warm;
};

/// Frobenius-nearest PSD matrix (negative eigenvalues clipped).
HermitianMatrix project_psd(const HermitianMatrix& s);
/// Validating overload for raw matrices; throws on non-Hermitian input.
HermitianMatrix project_psd(const CMatrix& s, double hermitian_tol = 1e-10);

SdpSolution solve_sdp(const SdpProblem& p, double tol, int max_iter);
SdpSolution solve_sdp(const SdpProblem& p, const SdpSettings& settings,
                      const SdpWarmStart* warm = nullptr);

/// Unit-norm eigenvector of the largest eigenvalue; its first non-negligible
/// component is made real and positive.
std::pair<CVector, double> leading_eigenvector(const HermitianMatrix& x);

}  // namespace risfeel
