// Copyright 2026 The DCP Authors.
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

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "dcp/class_pool.hpp"
#include "dcp/config.hpp"
#include "dcp/embed_net.hpp"
#include "dcp/eval_bench.hpp"
#include "dcp/loaders.hpp"
#include "dcp/losses.hpp"
#include "dcp/trainer.hpp"
#include "pool_oracle.hpp"
#include "test_util.hpp"

using namespace dcp;
using dcp::testing::fd_rel_error;
using dcp::testing::random_matrix;
using dcp::testing::unit_rows;

namespace {

// Tolerances.
constexpr double kGradTol = 1e-6;
constexpr double kClassifierGradTol = 1e-8;
constexpr double kReductionTol = 1e-12;
constexpr std::size_t kGradInstances = 20;
constexpr double kGradSeconds = 30.0;
constexpr double kMinAuc = 0.95;
constexpr double kMaxAucGapToFc = 0.03;
constexpr double kKAblationSlack = 0.005;
constexpr double kTrainSeconds = 300.0;
constexpr double kDcpThroughputBand = 0.10;
constexpr double kFcSlowdownMax = 0.2;
constexpr double kDcpOverFcMin = 5.0;

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %2d %-26s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<uint32_t> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<uint32_t> y(n);
  for (auto& v : y) v = static_cast<uint32_t>(rng.below(classes));
  return y;
}

Matrix dense(const ClassifierLoss& l, std::size_t n_id) {
  Matrix g(n_id, l.grad_weights.cols);
  for (std::size_t r = 0; r < l.classes.size(); ++r) {
    for (std::size_t j = 0; j < g.cols; ++j) g(l.classes[r], j) = l.grad_weights(r, j);
  }
  return g;
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double full = 0, masked = 0, pool = 0, cos = 0, mlp = 0;
  for (std::size_t t = 0; t < kGradInstances; ++t) {
    const std::size_t n_id = 3 + rng.below(20), n = 1 + rng.below(8), d = 2 + rng.below(6);
    Matrix w = random_matrix(n_id, d, rng, 0.5);
    Matrix x = random_matrix(n, d, rng);
    const auto y = random_labels(n, n_id, rng);
    auto f_full = [&] { return softmax_ce_full(w, x, y).value; };
    full = std::max(full, fd_rel_error(w, softmax_ce_grad_W(w, x, y), f_full));
    full = std::max(full, fd_rel_error(x, softmax_ce_full(w, x, y).grad_inputs, f_full));

    const QueueMask q = select_queue(n_id, std::min(n_id, n + 1 + rng.below(n_id)), y, t);
    auto f_mask = [&] { return masked_softmax_ce(w, q, x, y).value; };
    const ClassifierLoss ml = masked_softmax_ce(w, q, x, y);
    masked = std::max(masked, fd_rel_error(w, dense(ml, n_id), f_mask));
    masked = std::max(masked, fd_rel_error(x, ml.grad_inputs, f_mask));

    // Pool cross-entropy through the pooled logits, pool held constant.
    const std::size_t c = 2 + rng.below(10), k = 1 + rng.below(3), dd = 2 + rng.below(6);
    ClassPool p(c, k, dd, 1.0 + 30.0 * rng.uniform(), t);
    std::vector<uint32_t> ids(c);
    std::iota(ids.begin(), ids.end(), 0);
    p.insert_batch(ids, unit_rows(c * k, dd, rng));
    Matrix e = random_matrix(n, dd, rng, 0.3);
    std::vector<std::size_t> tg(n);
    for (auto& v : tg) v = rng.below(c);
    auto f_pool = [&] { return pool_ce(p.logits(e), tg).value; };
    pool = std::max(pool, fd_rel_error(e, p.logits_backward(pool_ce(p.logits(e), tg).grad), f_pool));

    Matrix feats = random_matrix(n, dd, rng);
    const Matrix centers = p.mean_centers();
    auto f_cos = [&] { return cos_neg(feats, centers).value; };
    cos = std::max(cos, fd_rel_error(feats, cos_neg(feats, centers).grad, f_cos));

    auto net = EmbedNet::init({2 + rng.below(15), 2 + rng.below(31), 2 + rng.below(7)}, t);
    for (auto& l : net.layers()) {
      for (auto& b : l.bias) b = 0.1 * rng.gaussian();
    }
    Matrix xin = random_matrix(n, net.input_dim(), rng);
    const Matrix up = random_matrix(n, net.output_dim(), rng);
    auto f_net = [&] { return dot(net.embed(xin).data, up.data); };
    const auto [out, trace] = forward(net, xin);
    const auto [grads, dx] = backward(net, trace, up);
    mlp = std::max(mlp, fd_rel_error(xin, dx, f_net));
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
      mlp = std::max(mlp, fd_rel_error(net.layers()[li].weight, grads.layers[li].weight, f_net));
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = full <= kClassifierGradTol && masked <= kClassifierGradTol &&
                  pool <= kGradTol && cos <= kGradTol && mlp <= kGradTol && secs < kGradSeconds;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "max rel err: full %.2e, masked %.2e (tol %.0e); pool %.2e, cos %.2e, mlp %.2e "
                "(tol %.0e); %zu instances, %.1fs",
                full, masked, kClassifierGradTol, pool, cos, mlp, kGradTol, kGradInstances, secs);
  report(1, "gradient suite", ok, buf);
}

void criterion_reductions() {
  Rng rng(202);
  double mask_gap = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n_id = 2 + rng.below(49), n = 1 + rng.below(16), d = 1 + rng.below(8);
    const Matrix w = random_matrix(n_id, d, rng), x = random_matrix(n, d, rng);
    const auto y = random_labels(n, n_id, rng);
    const QueueMask all = select_queue(n_id, n_id, y, t);
    mask_gap = std::max(mask_gap, std::abs(masked_softmax_ce(w, all, x, y).value -
                                           softmax_ce_full(w, x, y).value));
  }

  SynthConfig sc;
  sc.n_id = 200;
  sc.holdout_per_id = 0;
  const Dataset ds = generate(sc);
  TrainConfig cf;
  cf.method = Method::fc;
  cf.b_inst = 60;
  cf.b_id = 20;
  cf.holdout_per_id = 0;
  TrainConfig cp = cf;
  cp.method = Method::partial_fc;
  cp.partial_frac = 1.0;
  Trainer a(cf, ds), b(cp, ds);
  double step_gap = 0;
  for (int s = 0; s < 20; ++s) {
    const MixedBatch batch = a.next_batch();
    b.next_batch();
    step_gap = std::max(step_gap, std::abs(a.train_step_fc(batch).ce -
                                           b.train_step_partial_fc(batch, 1.0).ce));
  }
  char buf[200];
  std::snprintf(buf, sizeof buf, "masked vs full %.2e; partial-fc(r=1) vs fc %.2e over 20 steps (tol %.0e)",
                mask_gap, step_gap, kReductionTol);
  report(2, "reduction identities", mask_gap <= kReductionTol && step_gap <= kReductionTol, buf);
}

void criterion_pool_oracle() {
  bool same = true;
  std::size_t batches = 0;
  for (std::size_t c : {7u, 32u, 64u}) {
    Rng rng(303 + c);
    ClassPool pool(c, 2, 4, 1.0, 1);
    testing::ShiftPool ref(c, 2, 4);
    std::vector<uint32_t> universe(3 * c);
    std::iota(universe.begin(), universe.end(), 0);
    for (int step = 0; step < 1000; ++step, ++batches) {
      const std::size_t b = 1 + rng.below(c);
      rng.shuffle(std::span<uint32_t>(universe));
      const std::vector<uint32_t> ids(universe.begin(), universe.begin() + b);
      const Matrix f = unit_rows(b * 2, 4, rng);
      pool.insert_batch(ids, f);
      ref.insert(ids, f);
      same = same && ref.matches(pool);
    }
  }

  bool residency = true;
  for (auto [c, b] : {std::pair<std::size_t, std::size_t>{64, 8}, {60, 12}, {16, 16}}) {
    ClassPool pool(c, 1, 2, 1.0, 1);
    const std::size_t steps = 4 * c / b + 3;
    std::vector<long> in(steps * b, -1), out(steps * b, -1);
    uint32_t next = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<uint32_t> ids;
      for (std::size_t i = 0; i < b; ++i) ids.push_back(next++);
      Matrix f(b, 2);
      for (std::size_t i = 0; i < b; ++i) f(i, 0) = 1.0;
      pool.insert_batch(ids, f);
      for (uint32_t id : ids) in[id] = static_cast<long>(s);
      for (uint32_t id = 0; id < next; ++id) {
        if (out[id] < 0 && !pool.slot_of(id)) out[id] = static_cast<long>(s);
      }
    }
    for (uint32_t id = 0; id < next; ++id) {
      if (out[id] >= 0) residency = residency && out[id] - in[id] == static_cast<long>(c / b);
    }
  }
  report(3, "pool shift oracle", same && residency,
         std::to_string(batches) + " random batches at C in {7,32,64}: " +
             (same ? "bit-exact" : "MISMATCH") + "; residency C/B_id: " +
             (residency ? "exact" : "WRONG"));
}

void criterion_loaders() {
  SynthConfig sc;
  const Dataset ds = generate(sc);
  const Split sp = split_holdout(ds);

  InstanceLoader il(sp.train, 1);
  std::vector<std::size_t> seen;
  while (seen.size() < sp.train.size()) {
    const auto b = il.next(std::min<std::size_t>(256, sp.train.size() - seen.size()));
    seen.insert(seen.end(), b.begin(), b.end());
  }
  std::vector<std::size_t> sorted_train = sp.train;
  std::sort(sorted_train.begin(), sorted_train.end());
  std::sort(seen.begin(), seen.end());
  const bool inst_ok = seen == sorted_train;

  IdentityLoader idl(sp.train_by_id, 3, 2);
  std::vector<uint32_t> ids;
  while (ids.size() < ds.n_id) {
    const auto b = idl.next(std::min<std::size_t>(100, ds.n_id - ids.size()));
    ids.insert(ids.end(), b.ids.begin(), b.ids.end());
  }
  std::sort(ids.begin(), ids.end());
  bool id_ok = true;
  for (uint32_t c = 0; c < ds.n_id; ++c) id_ok = id_ok && ids[c] == c;

  TrainConfig cfg;  // b_inst 256, b_id from the 1:1 ratio
  Trainer tr(cfg, ds);
  bool sets_ok = true, ratio_ok = true;
  const std::size_t ipi = tr.sizes().images_per_identity;
  for (int s = 0; s < 50; ++s) {
    const MixedBatch mb = tr.next_batch();
    std::set<uint32_t> p, g;
    std::size_t inst = 0, idimg = 0;
    for (std::size_t r = 0; r < mb.probe_labels.size(); ++r) {
      if (mb.probe_origin[r] == RowOrigin::identity) p.insert(mb.probe_labels[r]), ++idimg;
      else ++inst;
    }
    for (std::size_t r = 0; r < mb.gallery_labels.size(); ++r) {
      if (mb.gallery_origin[r] == RowOrigin::identity) g.insert(mb.gallery_labels[r]), ++idimg;
      else ++inst;
    }
    sets_ok = sets_ok && p == g && p.size() == mb.batch_identities.size();
    ratio_ok = ratio_ok && inst == cfg.b_inst && idimg <= inst && inst - idimg < ipi;
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "instance epoch %s; identity epoch %s; probe/gallery id sets %s; "
                "1:1 ratio %zu inst : %zu id images",
                inst_ok ? "exact" : "BAD", id_ok ? "exact" : "BAD", sets_ok ? "equal" : "DIFFER",
                cfg.b_inst, tr.sizes().b_id * ipi);
  report(4, "loader coverage", inst_ok && id_ok && sets_ok && ratio_ok, buf);
}

void criterion_update_speed() {
  SynthConfig sc;
  sc.holdout_per_id = 0;
  const Dataset ds = generate(sc);
  const std::size_t m = 64;
  // Batch size that divides the sample count keeps one epoch exact.
  std::size_t b = m;
  while (ds.size() % b) --b;
  const auto one = update_speed_sim(ds, LoaderMode::instance, b, ds.size() / b, 1);
  bool counts_ok = true;
  for (uint32_t c = 0; c < ds.n_id; ++c) {
    counts_ok = counts_ok && one.counts[c] == ds.per_identity_index[c].size();
  }
  const uint64_t target = ds.k_max();
  const std::size_t epochs = (ds.k_max() + ds.k_min() - 1) / ds.k_min();
  const auto sim = update_speed_sim(ds, LoaderMode::instance, b, epochs * ds.size() / b, 1, target);
  uint32_t rare = 0, rich = 0;
  for (uint32_t c = 0; c < ds.n_id; ++c) {
    if (ds.per_identity_index[c].size() < ds.per_identity_index[rare].size()) rare = c;
    if (ds.per_identity_index[c].size() > ds.per_identity_index[rich].size()) rich = c;
  }
  const double ratio = static_cast<double>(sim.epochs_to_target[rare]) /
                       static_cast<double>(std::max<uint64_t>(1, sim.epochs_to_target[rich]));
  const double upper = static_cast<double>(ds.k_max()) / ds.k_min();
  const bool ok = counts_ok && sim.epochs_to_target[rare] > 0 && ratio >= 1.0 &&
                  ratio <= upper + 1e-12;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "per-epoch counts == k_i: %s; epochs to %llu refreshes rare/rich = %llu/%llu = %.2f "
                "in [1, %.2f]",
                counts_ok ? "yes" : "NO", static_cast<unsigned long long>(target),
                static_cast<unsigned long long>(sim.epochs_to_target[rare]),
                static_cast<unsigned long long>(sim.epochs_to_target[rich]), ratio, upper);
  report(5, "update-speed bounds", ok, buf);
}

// Desk-scale training setup shared by criteria 6, 7 and 10.
RunSpec desk_spec(Method method, std::size_t k, uint64_t seed) {
  RunSpec s;
  s.train.method = method;
  s.train.pool_c = 100;
  s.train.k = k;
  s.train.b_inst = 60;
  s.train.b_id = 20;
  s.train.epochs = 20;
  s.train.embed_dim = 32;
  s.train.seed = seed;
  s.data.n_id = 1000;
  s.data.d_in = 64;
  s.data.k_min = 2;
  s.data.k_max = 20;
  s.data.noise_sigma = 0.1;
  s.train.holdout_per_id = 2;
  return s;
}

struct DeskRun {
  TrainReport report;
  double seconds;
};

DeskRun desk_run(const RunSpec& spec, const Dataset& ds, const PairSet& pairs) {
  RunOptions ro;
  ro.eval_pairs = &pairs;
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport r = run(spec.train, ds, ro);
  return {std::move(r), seconds_since(t0)};
}

double auc(const DeskRun& r) { return r.report.eval ? r.report.eval->roc_auc : 0.0; }

}  // namespace

int main() {
  set_worker_threads(1);
  std::printf("acceptance suite (single worker thread)\n");
  criterion_gradients();
  criterion_reductions();
  criterion_pool_oracle();
  criterion_loaders();
  criterion_update_speed();

  const RunSpec base = desk_spec(Method::dcp, 2, 1);
  const Dataset ds = load_or_generate(base);
  const PairSet pairs = split_eval_pairs(ds, 900, 10000, derive_seed(1, "pairs"));

  const DeskRun dcp = desk_run(base, ds, pairs);
  const DeskRun fc = desk_run(desk_spec(Method::fc, 2, 1), ds, pairs);
  {
    const bool ok = auc(dcp) >= kMinAuc && std::abs(auc(dcp) - auc(fc)) <= kMaxAucGapToFc &&
                    dcp.seconds <= kTrainSeconds;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "dcp AUC %.4f (>= %.2f), fc AUC %.4f, gap %.4f (<= %.2f); dcp train %.1fs (<= %.0fs)",
                  auc(dcp), kMinAuc, auc(fc), std::abs(auc(dcp) - auc(fc)), kMaxAucGapToFc,
                  dcp.seconds, kTrainSeconds);
    report(6, "desk-scale quality", ok, buf);
  }

  {
    double k1_sum = 0, k2_sum = 0;
    std::string per_seed;
    for (uint64_t seed : {1, 2, 3}) {
      const double a2 = seed == 1 ? auc(dcp) : auc(desk_run(desk_spec(Method::dcp, 2, seed), ds, pairs));
      const double a1 = auc(desk_run(desk_spec(Method::dcp, 1, seed), ds, pairs));
      k1_sum += a1;
      k2_sum += a2;
      per_seed += fmt(" K2-K1=%+.4f", a2 - a1);
    }
    const double k1 = k1_sum / 3, k2 = k2_sum / 3;
    report(7, "K ablation direction", k2 >= k1 - kKAblationSlack,
           fmt("mean AUC K=2 %.4f", k2) + fmt(" vs K=1 %.4f", k1) +
               fmt(" (slack %.3f);", kKAblationSlack) + per_seed);
  }

  {
    const std::size_t c = 1000, k = 2, d = 32;
    const std::size_t expect = c * k * d * 8 + c * 8;
    bool ok = true;
    std::string detail;
    for (std::size_t n : {1000u, 10000u, 100000u, 1000000u}) {
      ok = ok && classifier_state_bytes(Method::dcp, n, c, k, d) == expect;
      ok = ok && classifier_state_bytes(Method::fc, n, c, k, d) == n * d * 8;
    }
    // Cross-check against live trainers.
    for (uint32_t n : {1000u, 10000u}) {
      SynthConfig sc;
      sc.n_id = n;
      sc.k_min = sc.k_max = 3;
      sc.d_in = 16;
      sc.holdout_per_id = 0;
      const Dataset dd = generate(sc);
      TrainConfig tc;
      tc.pool_c = c;
      tc.embed_dim = d;
      tc.holdout_per_id = 0;
      tc.b_inst = 32;
      tc.b_id = 16;
      ok = ok && Trainer(tc, dd).classifier_state_bytes() == expect;
      tc.method = Method::fc;
      ok = ok && Trainer(tc, dd).classifier_state_bytes() == std::size_t{n} * d * 8;
    }
    report(8, "memory independence", ok,
           "dcp bytes " + std::to_string(expect) +
               " at n_id 1e3..1e6 (C*K*D*8 + C*8); fc bytes n_id*D*8");
  }

  {
    BenchOptions bo = default_bench_options();
    bo.base.pool_c = 1000;
    bo.trials = 3;
    bo.min_trial_seconds = 1.0;
    const std::vector<BenchPoint> grid{
        {Method::dcp, 10000}, {Method::dcp, 100000}, {Method::fc, 10000}, {Method::fc, 100000}};
    const BenchResult br = throughput_bench(grid, bo);
    const double d4 = br.rows[0].steps_per_sec_mean, d5 = br.rows[1].steps_per_sec_mean;
    const double f4 = br.rows[2].steps_per_sec_mean, f5 = br.rows[3].steps_per_sec_mean;
    const double dcp_change = d5 / d4 - 1.0, fc_ratio = f5 / f4, speedup = d5 / f5;
    const bool ok = std::abs(dcp_change) <= kDcpThroughputBand && fc_ratio <= kFcSlowdownMax &&
                    speedup >= kDcpOverFcMin;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "dcp %.1f -> %.1f steps/s (%+.1f%%, band %.0f%%); fc %.2f -> %.2f (x%.3f <= %.1f); "
                  "dcp/fc at 1e5 %.1f (>= %.0f)",
                  d4, d5, 100 * dcp_change, 100 * kDcpThroughputBand, f4, f5, fc_ratio,
                  kFcSlowdownMax, speedup, kDcpOverFcMin);
    report(9, "throughput shape", ok, buf);
  }

  {
    const DeskRun again = desk_run(base, ds, pairs);
    bool curves = again.report.epochs.size() == dcp.report.epochs.size();
    for (std::size_t e = 0; curves && e < again.report.epochs.size(); ++e) {
      const auto &x = again.report.epochs[e], &y = dcp.report.epochs[e];
      curves = x.ce == y.ce && x.cos == y.cos && x.total == y.total && x.lr == y.lr;
    }
    const bool same_report = report_json(again.report, false) == report_json(dcp.report, false);
    report(10, "determinism", curves && same_report,
           std::string("loss curves ") + (curves ? "bit-identical" : "DIFFER") + "; reports " +
               (same_report ? "byte-identical" : "DIFFER") + " (timing fields excluded)");
  }

  std::printf("%d criteria failed\n", failures);
  return failures;
}
