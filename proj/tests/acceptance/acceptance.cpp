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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance <configs-dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "risfeel/experiment.hpp"
#include "test_support.hpp"

using namespace risfeel;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string g(double v) { return fmt("%.4g", v); }

// Objective traces of every dc_solve run in criteria 2 and 3.
std::vector<std::vector<double>> g_traces;
double g_sdp_tol = 0.0;

std::string g_config_dir;

ExperimentConfig load(const std::string& name) { return parse_config(g_config_dir + "/" + name); }

// Runs a config and returns its CSV text; the CSV is also written to the
// working directory under the configured output name.
struct Run {
  ResultTable table;
  std::string csv;
  double seconds = 0.0;
};

Run run_config(const std::string& name) {
  const ExperimentConfig cfg = load(name);
  const auto t0 = Clock::now();
  Run r;
  r.table = run_experiment(cfg);
  r.seconds = seconds_since(t0);
  std::ostringstream os;
  r.table.write_csv(os);
  r.csv = os.str();
  std::ofstream(cfg.output) << r.csv;
  return r;
}

std::map<std::string, Run> g_runs;

const Run& cached(const std::string& name) {
  auto it = g_runs.find(name);
  if (it == g_runs.end()) it = g_runs.emplace(name, run_config(name)).first;
  return it->second;
}

/// Mean-row value for (sweep, backend[, round]).
double mean_of(const ResultTable& t, double sweep, Backend b, const std::string& col, int round = -1) {
  for (const auto& r : t.rows) {
    if (r.trial == -1 && r.sweep == sweep && r.backend == b && r.round == round) return t.value(r, col);
  }
  throw Error("no summary row for sweep " + g(sweep) + " backend " + to_string(b));
}

int last_round(const ResultTable& t) {
  int last = -1;
  for (const auto& r : t.rows) last = std::max(last, r.round);
  return last;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  const auto t0 = Clock::now();
  Rng rng(20261016);
  std::uniform_int_distribution<int> m_dist(2, 10);
  std::uniform_int_distribution<int> l_dist(1, 16);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const double p0 = 1e-2;
  int bad = 0;
  double worst_mismatch = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = m_dist(rng);
    const int l = l_dist(rng);
    const auto chan = testing::random_channel(m, l, rng(), 1e-3 * u(rng), 1e-3 * u(rng));
    const CVector theta = testing::random_phases(l, rng);
    RVector p(m);
    for (int i = 0; i < m; ++i) p(i) = u(rng);
    p /= p.sum();
    const AggregationWeights w(p);
    const auto [b, c] = csit_based_scalars(chan, theta, w, p0);
    const CVector h = effective_channel(chan, theta);
    const double mismatch = weight_mismatch(h, b, c, w);
    worst_mismatch = std::max(worst_mismatch, mismatch);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < m; ++i) {
      if (std::abs(h(i)) / p(i) < std::abs(h(arg)) / p(arg)) arg = i;
    }
    bool ok = mismatch <= 1e-18;
    for (Eigen::Index i = 0; i < m; ++i) ok = ok && std::norm(b(i)) <= p0 * (1.0 + 1e-12);
    ok = ok && std::abs(std::norm(b(arg)) - p0) <= 1e-12 * p0;
    if (!ok) ++bad;
  }
  const double t = seconds_since(t0);
  return {bad == 0 && t < 10.0, "violations " + std::to_string(bad) + "/1000, max mismatch " +
                                    g(worst_mismatch) + ", " + fmt("%.2f s", t)};
}

Outcome criterion_2() {
  const ExperimentConfig cfg = load("mse_knee.ini");
  const AirSettings air = cfg.air_settings();
  g_sdp_tol = air.dc.sdp_tol;
  const auto w = AggregationWeights::uniform(8);
  const auto t0 = Clock::now();
  int feasible_instances = 0;
  int good = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto chan = sample_channel(cfg.geometry, cfg.pathloss, 8, 32,
                                     derive_seed(cfg.seed, 1000, static_cast<std::uint64_t>(trial)));
    DcConfig dc = air.dc;
    dc.seed = static_cast<std::uint64_t>(trial);
    const BeamformingSolution sol = dc_solve(chan, w, air.p0, air.sigma2, dc);
    g_traces.push_back(sol.objective_trace);
    if (sol.diagnostic == "alignment relaxation infeasible") continue;  // instance itself infeasible
    ++feasible_instances;
    const double gap = sol.penalty_gap / sol.lifted_trace;
    worst_gap = std::max(worst_gap, gap);
    if (sol.feasible && sol.residual <= dc.epsilon && sol.penalty_gap <= 1e-3 * sol.lifted_trace) ++good;
  }
  const double t = seconds_since(t0);
  const bool pass = feasible_instances > 0 && good >= 0.95 * feasible_instances && t < 300.0;
  return {pass, std::to_string(good) + "/" + std::to_string(feasible_instances) +
                    " feasible instances aligned (of 50 trials), max gap/tr " + g(worst_gap) + ", " +
                    fmt("%.1f s", t)};
}

Outcome criterion_3() {
  const ExperimentConfig cfg = load("oracle_check.ini");
  const AirSettings air = cfg.air_settings();
  const auto w = AggregationWeights::uniform(2);
  const auto t0 = Clock::now();
  int counted = 0;
  int good = 0;
  double worst = 1e300;
  for (int trial = 0; trial < 20; ++trial) {
    const auto chan = sample_channel(cfg.geometry, cfg.pathloss, 2, 3,
                                     derive_seed(cfg.seed, 2000, static_cast<std::uint64_t>(trial)));
    DcConfig dc = air.dc;
    dc.seed = static_cast<std::uint64_t>(trial);
    const BeamformingSolution sol = dc_solve(chan, w, air.p0, air.sigma2, dc);
    g_traces.push_back(sol.objective_trace);
    const auto grid = grid_oracle_gain(chan, w, air.p0, dc.epsilon, 64);
    if (!grid) continue;  // no grid point is admissible
    ++counted;
    const double ratio = sol.residual <= dc.epsilon * (1.0 + 1e-6) ? std::norm(sol.c) / *grid : 0.0;
    worst = std::min(worst, ratio);
    if (ratio >= 0.8) ++good;
  }
  const double t = seconds_since(t0);
  const bool pass = counted == 20 && good >= 18 && t < 600.0;
  return {pass, std::to_string(good) + "/" + std::to_string(counted) +
                    " trials with ratio >= 0.8 (grid-feasible trials counted), min ratio " + g(worst) +
                    ", " + fmt("%.1f s", t)};
}

Outcome criterion_4() {
  int violations = 0;
  std::size_t steps = 0;
  double worst = -1e300;
  for (const auto& tr : g_traces) {
    for (std::size_t i = 1; i < tr.size(); ++i) {
      ++steps;
      const double rise = tr[i] - tr[i - 1];
      worst = std::max(worst, rise);
      if (rise > 10.0 * g_sdp_tol) ++violations;
    }
  }
  return {violations == 0 && !g_traces.empty(),
          std::to_string(violations) + " violations over " + std::to_string(steps) + " steps in " +
              std::to_string(g_traces.size()) + " runs, largest step change " + g(worst)};
}

Outcome criterion_5() {
  const auto t0 = Clock::now();
  Rng rng(55);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p0 = 1e-2;
  const Eigen::Index n = 100000;
  int bad = 0;
  double worst_z = 0.0;
  for (int design = 0; design < 20; ++design) {
    const int m = 2 + design % 5;
    const int l = 1 + design % 7;
    const auto chan = testing::random_channel(m, l, rng(), 0.1, 0.01);
    const CVector theta = testing::random_phases(l, rng);
    CVector b(m);
    for (int i = 0; i < m; ++i) b(i) = std::polar(std::sqrt(p0 * u(rng)), 6.283 * u(rng));
    const Complex c = std::polar(0.01 + 0.05 * u(rng), 6.283 * u(rng));
    const double sigma2 = 1e-6 * (0.1 + u(rng));
    const auto w = AggregationWeights::uniform(m);

    SymbolBlock block;
    block.s.resize(m, n);
    for (int i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) block.s(i, j) = sample_cn(rng);
    }
    block.update_length = 2 * n;
    const CVector r = transmit_and_receive(block, chan, theta, b, c, sigma2, p0, rng());
    const CVector target = ideal_symbol_sum(block, w);
    const RVector err = (r - target).cwiseAbs2();
    const double mean = err.mean();
    const double se = std::sqrt((err.array() - mean).square().sum() / static_cast<double>(n - 1)) /
                      std::sqrt(static_cast<double>(n));
    const double closed = closed_form_mse(chan, theta, b, c, w, sigma2).total_mse_closed_form;
    const double z = std::abs(mean - closed) / se;
    worst_z = std::max(worst_z, z);
    if (z > 3.0) ++bad;
  }
  const double t = seconds_since(t0);
  return {bad == 0 && t < 60.0, std::to_string(bad) + "/20 designs outside 3 SE, max |z| " +
                                    g(worst_z) + ", " + fmt("%.1f s", t)};
}

Outcome criterion_6() {
  Rng rng(66);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 2 + trial % 6;
    const int d = 3 + 37 * trial;
    RVector p = RVector::Random(m).cwiseAbs().array() + 0.05;
    p /= p.sum();
    const AggregationWeights w(p);
    RMatrix updates = RMatrix::Random(m, d) * 0.01;
    updates.col(0).array() += 0.003;
    const auto chan = testing::random_channel(m, 4, rng());
    const CVector theta = testing::random_phases(4, rng);
    const auto [b, c] = csit_based_scalars(chan, theta, w, 1e-2);
    const SymbolBlock block = normalize_updates(updates, w);
    const RVector out = denormalize(transmit_and_receive(block, chan, theta, b, c, 0.0, 1e-2, 1), block);
    const RVector expect = updates.transpose() * p;
    worst = std::max(worst, (out - expect).norm() / expect.norm());
  }
  return {worst <= 1e-10, "max relative error " + g(worst) + " over 20 pipelines"};
}

Outcome criterion_7() {
  BlobConfig bc;
  bc.classes = 4;
  bc.features = 10;
  bc.samples_per_class = 50;
  bc.seed = 77;
  const Dataset data = make_blobs(bc);
  Rng rng(78);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  std::string names;
  for (const ModelSpec& spec : {ModelSpec{LogisticSpec{}}, ModelSpec{MlpSpec{16}}}) {
    const auto model = make_model(spec, data.features(), data.classes);
    names += (names.empty() ? "" : ", ") + to_string(spec);
    for (int draw = 0; draw < 100; ++draw) {
      RVector w(model->parameters());
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 0.5 * normal(rng);
      std::vector<std::size_t> rows(1 + draw % 16);
      for (auto& r : rows) r = pick(rng);
      worst = std::max(worst, testing::gradient_check(*model, w, data, rows));
    }
  }
  return {worst <= 1e-5, "max relative error " + g(worst) + " (" + names + ", 100 draws each)"};
}

Outcome criterion_8() {
  const Run& r = cached("train_curves.ini");
  const ResultTable& t = r.table;
  const int last = last_round(t);
  const double sweep = t.rows.front().sweep;
  const double ideal = mean_of(t, sweep, Backend::Ideal, "test_accuracy", last);
  const double based = mean_of(t, sweep, Backend::CsitBased, "test_accuracy", last);
  const double free = mean_of(t, sweep, Backend::CsitFree, "test_accuracy", last);
  const double none = mean_of(t, sweep, Backend::NoRis, "test_accuracy", last);
  const bool pass = std::abs(free - based) <= 0.02 && std::abs(based - ideal) <= 0.02 &&
                    std::abs(free - ideal) <= 0.02 && none <= std::min({ideal, based, free}) - 0.05 &&
                    r.seconds < 900.0;
  return {pass, "final accuracy ideal " + g(ideal) + ", csit_based " + g(based) + ", csit_free " +
                    g(free) + ", no_ris " + g(none) + ", " + fmt("%.1f s", r.seconds)};
}

Outcome criterion_9() {
  const Run& mse = cached("mse_knee.ini");
  const Run& acc = cached("train_knee.ini");
  const ExperimentConfig cfg = load("mse_knee.ini");
  const double small = cfg.sweep.front();
  const double large = cfg.sweep.back();
  std::string feas;
  for (double l : cfg.sweep) {
    feas += (feas.empty() ? "" : " ") + g(l) + ":" + g(mean_of(mse.table, l, Backend::CsitFree, "feasible"));
  }
  const double feas_small = mean_of(mse.table, small, Backend::CsitFree, "feasible");
  const double feas_large = mean_of(mse.table, large, Backend::CsitFree, "feasible");
  const double free_db = mean_of(mse.table, large, Backend::CsitFree, "mse_db");
  const double based_db = mean_of(mse.table, large, Backend::CsitBased, "mse_db");
  const int last = last_round(acc.table);
  const double l_acc = acc.table.rows.front().sweep;
  const double acc_free = mean_of(acc.table, l_acc, Backend::CsitFree, "test_accuracy", last);
  const double acc_based = mean_of(acc.table, l_acc, Backend::CsitBased, "test_accuracy", last);
  const bool pass = feas_small == 0.0 && feas_large == 1.0 && free_db - based_db <= 40.0 &&
                    std::abs(acc_free - acc_based) <= 0.02 && l_acc == large;
  return {pass, "feasible fraction by L {" + feas + "}, MSE at L=" + g(large) + " csit_free " +
                    g(free_db) + " dB vs csit_based " + g(based_db) + " dB, accuracy " + g(acc_free) +
                    " vs " + g(acc_based)};
}

// Per-trial dB loss against the continuous design of the same trial, over
// trials whose continuous design is feasible (otherwise there is no aligned
// solution to compare with).
Outcome criterion_10() {
  const Run& r = cached("discrete_bits.ini");
  const ResultTable& t = r.table;
  auto trial_value = [&](double bits, int trial, const char* col) {
    for (const auto& row : t.rows) {
      if (row.trial == trial && row.sweep == bits && row.backend == Backend::CsitFree) {
        return t.value(row, col);
      }
    }
    throw Error("no row for bits " + g(bits) + " trial " + std::to_string(trial));
  };
  const ExperimentConfig cfg = load("discrete_bits.ini");
  auto loss = [&](double bits, int* used) {
    double acc = 0.0;
    *used = 0;
    for (int trial = 0; trial < cfg.trials; ++trial) {
      if (trial_value(0, trial, "feasible") != 1.0) continue;
      acc += trial_value(bits, trial, "mse_db") - trial_value(0, trial, "mse_db");
      ++*used;
    }
    return *used > 0 ? acc / *used : INFINITY;
  };
  int used = 0;
  const double b1 = loss(1, &used);
  const double b2 = loss(2, &used);
  const double b3 = loss(3, &used);
  return {used >= 1 && b2 <= 3.0 && b3 <= 3.0,
          "mean MSE loss vs continuous: b=1 " + g(b1) + " dB, b=2 " + g(b2) + " dB, b=3 " + g(b3) +
              " dB over " + std::to_string(used) + "/" + std::to_string(cfg.trials) +
              " trials with a feasible continuous design"};
}

Outcome criterion_11() {
  const Run& r = cached("downlink_snr.ini");
  const ExperimentConfig cfg = load("downlink_snr.ini");
  const int last = last_round(r.table);
  const Backend b = cfg.backends.front();
  const double clean = mean_of(r.table, INFINITY, b, "test_accuracy", last);
  const double hi = mean_of(r.table, 10, b, "test_accuracy", last);
  const double lo = mean_of(r.table, -10, b, "test_accuracy", last);
  const double chance = 1.0 / cfg.data.blobs.classes;
  return {std::abs(hi - clean) <= 0.03 && lo < 1.5 * chance,
          "final accuracy noiseless " + g(clean) + ", +10 dB " + g(hi) + ", -10 dB " + g(lo) +
              " (1.5x chance " + g(1.5 * chance) + ")"};
}

Outcome criterion_12() {
  int same = 0;
  std::string names;
  const char* configs[] = {"train_curves.ini", "mse_knee.ini", "train_knee.ini", "discrete_bits.ini",
                           "downlink_snr.ini"};
  for (const char* name : configs) {
    const std::string first = cached(name).csv;
    const std::string second = run_config(name).csv;
    if (first == second && !first.empty()) ++same;
    else names += std::string(" ") + name;
  }
  return {same == 5, std::to_string(same) + "/5 configs byte-identical on re-run" +
                         (names.empty() ? "" : "; differing:" + names)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: acceptance <configs-dir>\n";
    return 2;
  }
  g_config_dir = argv[1];
  const std::vector<std::function<Outcome()>> criteria{
      criterion_1, criterion_2, criterion_3, criterion_4,  criterion_5,  criterion_6,
      criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
