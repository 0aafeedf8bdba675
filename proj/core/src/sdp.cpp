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

#include "risfeel/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace risfeel {

namespace {

double real_inner(const CMatrix& a, const CMatrix& b) {
  return (a.array() * b.array().conjugate()).sum().real();
}

CMatrix hermitian_part(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

constexpr double kDivergenceBound = 1e12;
// Iterate norm above which the direction of X is tested as a recession
// direction (an unboundedness certificate).
constexpr double kRecessionCheckNorm = 1e6;
constexpr double kRecessionTol = 1e-5;
constexpr int kAdaptEvery = 25;
constexpr int kAdaptUntil = 5000;
constexpr double kMaxStep = 1e6;
constexpr double kBalanceBand = 3.0;

/// Euclidean projection onto {Z : Z_ll = 1 (l in D), tr(R_k Z) + o_k <= b_k}.
///
/// With W the input with its D-diagonal fixed to one and R'_k the constraint
/// matrices with their D-diagonal zeroed, the projection is W - sum_k l_k R'_k
/// where l >= 0 solves a K-dimensional non-negative QP (Hildreth sweeps).
class ConstraintProjector {
 public:
  explicit ConstraintProjector(const SdpProblem& p) : diag_(p.diag_one_indices) {
    const auto k = p.trace_ineqs.size();
    masked_.reserve(k);
    full_.reserve(k);
    rhs_.reserve(k);
    for (const auto& c : p.trace_ineqs) {
      CMatrix r = c.matrix.matrix();
      full_.push_back(r);
      for (auto l : diag_) r(l, l) = 0.0;
      masked_.push_back(std::move(r));
      rhs_.push_back(c.bound - c.offset);
    }
    gram_.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        gram_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            real_inner(masked_[i], masked_[j]);
      }
    }
    lambda_ = RVector::Zero(static_cast<Eigen::Index>(k));
    // A constraint whose matrix lives on the fixed diagonal takes the same
    // value on the whole affine set; if that value violates it, the set is
    // empty.
    for (std::size_t i = 0; i < k; ++i) {
      if (gram_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) > 0.0) continue;
      double fixed = 0.0;
      for (auto l : diag_) fixed += full_[i](l, l).real();
      if (fixed > rhs_[i] + 1e-12 * (1.0 + std::abs(rhs_[i]))) empty_ = true;
    }
  }

  bool empty() const { return empty_; }

  /// True when D (unit norm) is, to tolerance, a direction along which the
  /// constraint set recedes: zero on the fixed diagonal and non-increasing
  /// in every trace constraint.
  bool recedes_along(const CMatrix& d, double tol) const {
    for (auto l : diag_) {
      if (std::abs(d(l, l).real()) > tol) return false;
    }
    for (const auto& r : full_) {
      if (real_inner(r, d) > tol * (1.0 + r.norm())) return false;
    }
    return true;
  }

  CMatrix project(const CMatrix& y) {
    CMatrix w = y;
    for (auto l : diag_) w(l, l) = 1.0;
    const auto k = static_cast<Eigen::Index>(masked_.size());
    if (k == 0) return w;

    RVector violation(k);
    bool any = false;
    for (Eigen::Index i = 0; i < k; ++i) {
      violation(i) = real_inner(full_[static_cast<std::size_t>(i)], w) - rhs_[static_cast<std::size_t>(i)];
      any = any || violation(i) > 0.0;
    }
    if (!any) return w;

    if (k == 1) {
      const double h = gram_(0, 0);
      lambda_(0) = h > 0.0 ? std::max(0.0, violation(0) / h) : 0.0;
    } else {
      // Warm-started coordinate descent on 0.5 l'Hl - v'l, l >= 0.
      for (int sweep = 0; sweep < 1000; ++sweep) {
        double change = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
          const double h = gram_(i, i);
          if (h <= 0.0) {
            lambda_(i) = 0.0;
            continue;
          }
          const double g = violation(i) - gram_.row(i).dot(lambda_);
          const double next = std::max(0.0, lambda_(i) + g / h);
          change = std::max(change, std::abs(next - lambda_(i)));
          lambda_(i) = next;
        }
        if (change <= 1e-15 * (1.0 + lambda_.cwiseAbs().maxCoeff())) break;
      }
    }
    for (Eigen::Index i = 0; i < k; ++i) {
      if (lambda_(i) != 0.0) w -= lambda_(i) * masked_[static_cast<std::size_t>(i)];
    }
    return w;
  }

 private:
  std::vector<Eigen::Index> diag_;
  std::vector<CMatrix> masked_;
  std::vector<CMatrix> full_;
  std::vector<double> rhs_;
  RMatrix gram_;
  RVector lambda_;
  bool empty_ = false;
};

/// LU factorization with partial pivoting of the tridiagonal T - shift*I,
/// used for inverse iteration.
class ShiftedTridiagonal {
 public:
  ShiftedTridiagonal(const RVector& diag, const RVector& sub, double shift, double tiny) {
    const Eigen::Index n = diag.size();
    d_ = diag.array() - shift;
    lo_ = sub;
    up_ = sub;
    up2_ = RVector::Zero(std::max<Eigen::Index>(n - 2, 0));
    swap_.assign(static_cast<std::size_t>(std::max<Eigen::Index>(n - 1, 0)), false);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      if (std::abs(d_(i)) >= std::abs(lo_(i))) {
        if (d_(i) == 0.0) d_(i) = tiny;
        const double f = lo_(i) / d_(i);
        lo_(i) = f;
        d_(i + 1) -= f * up_(i);
      } else {
        const double f = d_(i) / lo_(i);
        d_(i) = lo_(i);
        lo_(i) = f;
        const double t = up_(i);
        up_(i) = d_(i + 1);
        d_(i + 1) = t - f * d_(i + 1);
        if (i + 2 < n) {
          up2_(i) = up_(i + 1);
          up_(i + 1) = -f * up_(i + 1);
        }
        swap_[static_cast<std::size_t>(i)] = true;
      }
    }
    if (n > 0 && d_(n - 1) == 0.0) d_(n - 1) = tiny;
  }

  void solve(RVector& x) const {
    const Eigen::Index n = x.size();
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      if (swap_[static_cast<std::size_t>(i)]) std::swap(x(i), x(i + 1));
      x(i + 1) -= lo_(i) * x(i);
    }
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      double v = x(i);
      if (i + 1 < n) v -= up_(i) * x(i + 1);
      if (i + 2 < n) v -= up2_(i) * x(i + 2);
      x(i) = v / d_(i);
    }
  }

 private:
  RVector d_, lo_, up_, up2_;
  std::vector<bool> swap_;
};

/// Positive part of a Hermitian matrix. Iterates of the solvers here are
/// close to low rank, so only the positive eigenpairs are computed: the
/// matrix is reduced to real tridiagonal form, its eigenvalues found, and
/// the few positive eigenvectors obtained by inverse iteration. Clustered or
/// numerous positive eigenvalues fall back to the full tridiagonal solver.
class PsdProjector {
 public:
  explicit PsdProjector(Eigen::Index n) : tri_(n), tri_eig_(n) {}

  CMatrix operator()(const CMatrix& s) {
    const Eigen::Index n = s.rows();
    if (n <= 2) return full(s);
    tri_.compute(s);
    const RVector diag = tri_.diagonal();
    const RVector sub = tri_.subDiagonal();
    tri_eig_.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    const RVector& vals = tri_eig_.eigenvalues();
    Eigen::Index keep = 0;
    while (keep < n && vals(n - 1 - keep) > 0.0) ++keep;
    if (keep == 0) return CMatrix::Zero(n, n);

    const double scale = std::max(std::abs(vals(0)), std::abs(vals(n - 1)));
    const double min_gap = 1e-5 * scale;
    bool isolated = keep <= std::max<Eigen::Index>(2, n / 8);
    for (Eigen::Index j = n - keep; j < n && isolated; ++j) {
      const double below = vals(j) - vals(j - 1);
      const double above = j + 1 < n ? vals(j + 1) - vals(j) : min_gap;
      isolated = below >= min_gap && above >= min_gap;
    }

    RMatrix y(n, keep);
    if (isolated) {
      const double tiny = std::numeric_limits<double>::epsilon() * scale;
      for (Eigen::Index c = 0; c < keep; ++c) {
        const double lambda = vals(n - keep + c);
        const ShiftedTridiagonal lu(diag, sub, lambda, tiny);
        RVector x(n);
        for (Eigen::Index i = 0; i < n; ++i) x(i) = 1.0 + 0.1 * static_cast<double>(i % 7);
        for (int pass = 0; pass < 3; ++pass) {
          lu.solve(x);
          for (Eigen::Index p = 0; p < c; ++p) x -= y.col(p).dot(x) * y.col(p);
          x.normalize();
        }
        y.col(c) = x;
      }
    } else {
      tri_eig_.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
      y = tri_eig_.eigenvectors().rightCols(keep);
    }
    CMatrix v = y.cast<Complex>();
    v.applyOnTheLeft(tri_.matrixQ());
    const RVector w = vals.tail(keep);
    return v * w.asDiagonal() * v.adjoint();
  }

 private:
  static CMatrix full(const CMatrix& s) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(s);
    const auto& vals = es.eigenvalues();
    const Eigen::Index n = s.rows();
    Eigen::Index first = 0;
    while (first < n && vals(first) <= 0.0) ++first;
    const Eigen::Index keep = n - first;
    if (keep == 0) return CMatrix::Zero(n, n);
    const auto v = es.eigenvectors().rightCols(keep);
    const RVector w = vals.tail(keep);
    return v * w.asDiagonal() * v.adjoint();
  }

  Eigen::Tridiagonalization<CMatrix> tri_;
  Eigen::SelfAdjointEigenSolver<RMatrix> tri_eig_;
};

}  // namespace

HermitianMatrix::HermitianMatrix(const CMatrix& m, double tol) {
  require(m.rows() == m.cols(), "HermitianMatrix: matrix must be square");
  require(m.allFinite(), "HermitianMatrix: entries must be finite");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = m.size() == 0 ? 0.0 : (m - m.adjoint()).cwiseAbs().maxCoeff();
  require(asym <= tol * scale, "HermitianMatrix: input is not Hermitian");
  m_ = hermitian_part(m);
}

HermitianMatrix HermitianMatrix::zero(Eigen::Index n) { return HermitianMatrix(CMatrix::Zero(n, n)); }

HermitianMatrix HermitianMatrix::identity(Eigen::Index n) {
  return HermitianMatrix(CMatrix::Identity(n, n));
}

double HermitianMatrix::inner(const HermitianMatrix& other) const {
  require(dim() == other.dim(), "HermitianMatrix::inner: dimension mismatch");
  return real_inner(m_, other.m_);
}

double HermitianMatrix::min_eigenvalue() const {
  if (dim() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m_, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double HermitianMatrix::spectral_norm() const {
  if (dim() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m_, Eigen::EigenvaluesOnly);
  return std::max(std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(dim() - 1)));
}

void SdpProblem::validate() const {
  const auto n = dim();
  require(n >= 1, "SdpProblem: dimension must be >= 1");
  for (auto l : diag_one_indices) {
    require(l >= 0 && l < n, "SdpProblem: diagonal constraint index out of range");
  }
  for (const auto& c : trace_ineqs) {
    require(c.matrix.dim() == n, "SdpProblem: trace constraint dimension mismatch");
    require(std::isfinite(c.offset) && std::isfinite(c.bound),
            "SdpProblem: trace constraint offset/bound must be finite");
  }
}

double SdpProblem::objective(const CMatrix& x) const { return real_inner(cost.matrix(), x); }

const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::Optimal:
      return "optimal";
    case SdpStatus::MaxIter:
      return "max_iter";
    case SdpStatus::Infeasible:
      return "infeasible";
  }
  return "unknown";
}

HermitianMatrix project_psd(const HermitianMatrix& s) {
  if (s.dim() == 0) return s;
  PsdProjector projector(s.dim());
  return HermitianMatrix(hermitian_part(projector(s.matrix())), 1e-8);
}

HermitianMatrix project_psd(const CMatrix& s, double hermitian_tol) {
  return project_psd(HermitianMatrix(s, hermitian_tol));
}

SdpSolution solve_sdp(const SdpProblem& p, double tol, int max_iter) {
  SdpSettings settings;
  settings.tol = tol;
  settings.max_iter = max_iter;
  return solve_sdp(p, settings);
}

SdpSolution solve_sdp(const SdpProblem& p, const SdpSettings& settings, const SdpWarmStart* warm) {
  p.validate();
  require(settings.tol > 0.0, "solve_sdp: tol must be positive");
  require(settings.max_iter >= 1, "solve_sdp: max_iter must be >= 1");

  const Eigen::Index n = p.dim();
  const CMatrix& cost = p.cost.matrix();
  const double cost_norm = cost.norm();
  ConstraintProjector projector(p);
  PsdProjector psd(n);

  CMatrix z;
  CMatrix u;
  double step = settings.initial_step;
  if (warm != nullptr && warm->z.rows() == n && warm->u.rows() == n) {
    z = warm->z;
    u = warm->u;
    step = warm->step;
  } else {
    z = projector.project(CMatrix::Identity(n, n));
    u = CMatrix::Zero(n, n);
  }

  require(settings.relaxation > 0.0 && settings.relaxation < 2.0,
          "solve_sdp: relaxation must be in (0, 2)");
  const double alpha = settings.relaxation;
  if (settings.trace != nullptr) *settings.trace << "iter,primal_res,dual_res,objective\n";

  SdpSolution sol;
  if (projector.empty()) {
    sol.status = SdpStatus::Infeasible;
    sol.diagnostic = "constraint set empty on the fixed diagonal";
    sol.x = HermitianMatrix(hermitian_part(z), 1e-8);
    sol.warm = SdpWarmStart{z, CMatrix::Zero(n, n), step};
    return sol;
  }
  CMatrix x = z;
  double primal = std::numeric_limits<double>::infinity();
  double dual = std::numeric_limits<double>::infinity();
  double window_start_residual = std::numeric_limits<double>::infinity();
  int window_start_iter = 0;
  double objective = 0.0;
  double half_objective = 0.0;
  int it = 0;
  sol.status = SdpStatus::MaxIter;

  for (it = 1; it <= settings.max_iter; ++it) {
    x = psd(z - u - cost / step);
    CMatrix z_prev = std::move(z);
    const CMatrix x_relaxed = alpha * x + (1.0 - alpha) * z_prev;
    z = projector.project(x_relaxed + u);
    u += x_relaxed - z;

    primal = (x - z).norm();
    const double dual_raw = step * (z - z_prev).norm();
    dual = dual_raw / (1.0 + cost_norm);
    objective = real_inner(cost, x);
    if (it == settings.max_iter / 2) half_objective = objective;

    if (settings.trace != nullptr) {
      *settings.trace << it << ',' << primal << ',' << dual << ',' << objective << '\n';
    }

    if (primal < settings.tol && dual < settings.tol) {
      sol.status = SdpStatus::Optimal;
      break;
    }
    const double x_norm = x.norm();
    if (!std::isfinite(objective) || x_norm > kDivergenceBound) {
      sol.diagnostic = "objective unbounded below (iterate norm diverged)";
      break;
    }
    if (x_norm > kRecessionCheckNorm && objective < -kRecessionTol * cost_norm * x_norm &&
        projector.recedes_along(x / x_norm, kRecessionTol)) {
      sol.diagnostic = "objective unbounded below (improving recession direction)";
      break;
    }

    if (settings.adaptive_step && it % kAdaptEvery == 0 && it <= kAdaptUntil) {
      double factor = 1.0;
      // Balance the residuals relative to the iterate and dual scale.
      const double pb = primal / std::max(1.0, std::max(x.norm(), z.norm()));
      const double db = dual_raw / std::max(1.0, step * u.norm());
      if (pb > kBalanceBand * db && step < kMaxStep) factor = 2.0;
      else if (db > kBalanceBand * pb && step > 1.0 / kMaxStep) factor = 0.5;
      if (factor != 1.0) {
        step *= factor;
        u /= factor;
      }
    }

    // Infeasible problems keep a constant gap X - Z while Z itself settles;
    // slow but feasible runs keep both residuals of comparable size.
    const bool stalled = primal > 10.0 * settings.tol && dual_raw < 0.1 * primal;
    if (!stalled) {
      window_start_iter = it;
      window_start_residual = primal;
    } else if (it - window_start_iter >= settings.stall_window) {
      if (primal > 0.99 * window_start_residual) {
        sol.status = SdpStatus::Infeasible;
        sol.diagnostic = "primal residual stalled above 10*tol";
        break;
      }
      window_start_iter = it;
      window_start_residual = primal;
    }
  }

  if (sol.status == SdpStatus::MaxIter && sol.diagnostic.empty()) {
    const double drop = half_objective - objective;
    if (settings.max_iter >= 2 && drop > 1e3 * settings.tol * (1.0 + std::abs(half_objective)) &&
        dual > primal) {
      sol.diagnostic = "objective still decreasing at max_iter (possibly unbounded)";
    } else {
      sol.diagnostic = "iteration limit reached";
    }
  }

  sol.x = HermitianMatrix(hermitian_part(x), 1e-8);
  sol.primal_residual = primal;
  sol.dual_residual = dual;
  sol.iterations = std::min(it, settings.max_iter);
  sol.objective = objective;
  sol.warm = SdpWarmStart{std::move(z), std::move(u), step};
  return sol;
}

std::pair<CVector, double> leading_eigenvector(const HermitianMatrix& x) {
  require(x.dim() >= 1, "leading_eigenvector: empty matrix");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(x.matrix());
  const Eigen::Index n = x.dim();
  CVector v = es.eigenvectors().col(n - 1);
  const double lambda = es.eigenvalues()(n - 1);
  v.normalize();
  const double cutoff = 1e-12;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(v(i)) > cutoff) {
      v *= std::conj(v(i)) / std::abs(v(i));
      v(i) = std::abs(v(i));
      break;
    }
  }
  return {v, lambda};
}

}  // namespace risfeel
