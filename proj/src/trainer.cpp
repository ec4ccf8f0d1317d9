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

#include "dcp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "dcp/errors.hpp"
#include "dcp/eval_bench.hpp"
#include "dcp/rng.hpp"

namespace dcp {

namespace {

constexpr double kDivergenceBound = 1e4;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                   since)
      .count();
}

std::vector<std::size_t> net_dims(const TrainConfig& cfg, std::size_t d_in) {
  std::vector<std::size_t> dims{d_in};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.embed_dim);
  return dims;
}

std::size_t ceil_frac(double frac, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n) - 1e-9));
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::dcp: return "dcp";
    case Method::fc: return "fc";
    case Method::partial_fc: return "partial-fc";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "dcp") return Method::dcp;
  if (s == "fc") return Method::fc;
  if (s == "partial-fc") return Method::partial_fc;
  throw ConfigError("unknown method '" + s + "' (expected dcp, fc or partial-fc)");
}

void TrainConfig::validate() const {
  std::vector<std::string> errs;
  if (epochs < 1) errs.push_back("epochs must be >= 1");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) {
      errs.push_back("lr_decay_epochs must be strictly increasing");
      break;
    }
  }
  if (!lr_decay_epochs.empty() && lr_decay_epochs.back() >= epochs) {
    errs.push_back("lr_decay_epochs must be < epochs");
  }
  if (!(lr > 0.0)) errs.push_back("lr must be positive");
  if (!(lr_decay_factor > 0.0)) errs.push_back("lr_decay_factor must be positive");
  if (b_inst % 2 != 0) errs.push_back("b_inst must be even");
  if (b_id && *b_id == 0 && method == Method::dcp && !insert_instance_features) {
    errs.push_back("b_id must be positive for dcp unless insert_instance_features is set");
  }
  if (!b_id && b_inst == 0) errs.push_back("b_id must be set when b_inst is 0");
  if (b_id && *b_id == 0 && b_inst == 0) errs.push_back("batch is empty");
  if (!(pool_frac > 0.0 && pool_frac <= 1.0)) errs.push_back("pool_frac must be in (0, 1]");
  if (pool_c && *pool_c == 0) errs.push_back("pool_c must be positive");
  if (k < 1) errs.push_back("k must be >= 1");
  if (embed_dim < 1) errs.push_back("embed_dim must be >= 1");
  for (std::size_t h : hidden) {
    if (h == 0) {
      errs.push_back("hidden layer widths must be positive");
      break;
    }
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) errs.push_back("scale must be positive");
  if (!std::isfinite(cos_weight)) errs.push_back("cos_weight must be finite");
  if (!(partial_frac > 0.0 && partial_frac <= 1.0)) {
    errs.push_back("partial_frac must be in (0, 1]");
  }
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0)) {
    errs.push_back("sgd_momentum must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) errs.push_back("weight_decay must be >= 0");
  if (!(momentum_m >= 0.0 && momentum_m <= 1.0)) errs.push_back("momentum_m must be in [0, 1]");
  if (!errs.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

ResolvedSizes resolve_sizes(const TrainConfig& cfg, const Dataset& ds,
                            const Split& split) {
  cfg.validate();
  ResolvedSizes rs;
  rs.n_id = ds.n_id;
  rs.n_train = split.train.size();
  rs.images_per_identity = images_per_identity(cfg.batch_mode, cfg.k);
  rs.pool_c = cfg.pool_c ? *cfg.pool_c : std::max<std::size_t>(1, ceil_frac(cfg.pool_frac, ds.n_id));
  rs.queue_c = std::max<std::size_t>(1, ceil_frac(cfg.partial_frac, ds.n_id));
  if (cfg.b_id) {
    rs.b_id = *cfg.b_id;
  } else {
    std::size_t cap = ds.n_id;
    if (cfg.method == Method::dcp) cap = std::min(cap, rs.pool_c);
    rs.b_id = std::clamp<std::size_t>(cfg.b_inst / rs.images_per_identity, 1, cap);
  }
  if (rs.b_id > ds.n_id) {
    throw ConfigError("b_id " + std::to_string(rs.b_id) + " exceeds identity count " +
                      std::to_string(ds.n_id));
  }
  if (cfg.method == Method::dcp && rs.b_id > rs.pool_c) {
    throw ConfigError("b_id " + std::to_string(rs.b_id) + " exceeds pool capacity " +
                      std::to_string(rs.pool_c));
  }
  if (cfg.b_inst > rs.n_train) {
    throw ConfigError("b_inst " + std::to_string(cfg.b_inst) +
                      " exceeds training sample count " + std::to_string(rs.n_train));
  }
  const std::size_t per_step =
      cfg.b_inst > 0 ? cfg.b_inst : rs.b_id * rs.images_per_identity;
  rs.steps_per_epoch = (rs.n_train + per_step - 1) / per_step;
  return rs;
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  double lr = cfg.lr;
  for (std::size_t e : cfg.lr_decay_epochs) {
    if (e <= epoch) lr /= cfg.lr_decay_factor;
  }
  return lr;
}

Trainer::Trainer(const TrainConfig& cfg, const Dataset& ds)
    : cfg_(cfg),
      ds_(ds),
      split_(split_holdout(ds)),
      sizes_(resolve_sizes(cfg, ds, split_)),
      inst_loader_(split_.train, derive_seed(cfg.seed, "loader.instance")),
      id_loader_(split_.train_by_id, sizes_.images_per_identity,
                 derive_seed(cfg.seed, "loader.identity")),
      p_net_(EmbedNet::init(net_dims(cfg, ds.d_in), derive_seed(cfg.seed, "init"))),
      g_net_(p_net_),
      p_opt_(SgdState::zeros_like(p_net_)),
      sgd_{cfg.lr, cfg.sgd_momentum, cfg.weight_decay},
      queue_seed_(derive_seed(cfg.seed, "queue")) {
  if (cfg.method == Method::dcp) {
    pool_.emplace(sizes_.pool_c, cfg.k, cfg.embed_dim, cfg.scale,
                  derive_seed(cfg.seed, "pool"));
  } else {
    classifier_ = Matrix(ds.n_id, cfg.embed_dim);
    classifier_velocity_ = Matrix(ds.n_id, cfg.embed_dim);
    Rng rng(derive_seed(cfg.seed, "classifier"));
    for (auto& w : classifier_.data) w = 0.01 * rng.gaussian();
  }
}

std::size_t Trainer::classifier_state_bytes() const {
  return dcp::classifier_state_bytes(cfg_.method, ds_.n_id, sizes_.pool_c, cfg_.k,
                                     cfg_.embed_dim);
}

MixedBatch Trainer::next_batch() {
  const auto inst = inst_loader_.next(cfg_.b_inst);
  const auto ids = id_loader_.next(sizes_.b_id);
  return assemble(inst, ids, cfg_.batch_mode, cfg_.k, ds_);
}

StepStats Trainer::step() {
  const MixedBatch batch = next_batch();
  switch (cfg_.method) {
    case Method::dcp: return train_step_dcp(batch);
    case Method::fc: return train_step_fc(batch);
    case Method::partial_fc: return train_step_partial_fc(batch, cfg_.partial_frac);
  }
  return {};
}

void Trainer::check_loss(const StepStats& st) const {
  if (!std::isfinite(st.ce) || !std::isfinite(st.cos) || !std::isfinite(st.total) ||
      std::abs(st.total) > kDivergenceBound) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "training diverged at step %zu: ce=%g cos=%g total=%g lr=%g",
                  steps_, st.ce, st.cos, st.total, sgd_.lr);
    throw NumericError(buf);
  }
}

void Trainer::insert_instance_rows(const MixedBatch& batch, const Matrix& gallery_emb) {
  std::set<uint32_t> taken(batch.batch_identities.begin(), batch.batch_identities.end());
  std::map<uint32_t, std::vector<std::size_t>> groups;
  std::vector<uint32_t> order;
  for (std::size_t r = 0; r < batch.gallery_labels.size(); ++r) {
    if (batch.gallery_origin[r] != RowOrigin::instance) continue;
    const uint32_t id = batch.gallery_labels[r];
    if (taken.count(id)) continue;
    auto [it, fresh] = groups.try_emplace(id);
    if (fresh) order.push_back(id);
    it->second.push_back(r);
  }
  const std::size_t room = pool_->capacity() - batch.batch_identities.size();
  if (order.size() > room) order.resize(room);
  if (order.empty()) return;
  Matrix feats(order.size() * cfg_.k, cfg_.embed_dim);
  for (std::size_t b = 0; b < order.size(); ++b) {
    const auto& rows = groups[order[b]];
    for (std::size_t kk = 0; kk < cfg_.k; ++kk) {
      auto src = gallery_emb.row(rows[kk % rows.size()]);
      std::copy(src.begin(), src.end(), feats.row(b * cfg_.k + kk).begin());
    }
  }
  pool_->insert_batch(order, feats);
}

StepStats Trainer::train_step_dcp(const MixedBatch& batch) {
  if (!pool_) throw ConfigError("train_step_dcp needs method dcp");
  const auto t0 = std::chrono::steady_clock::now();
  StepStats st;

  // (1)-(2) gallery features refresh the pool; no gradient is kept.
  const Matrix gallery_emb = g_net_.embed(batch.gallery_inputs);
  if (cfg_.insert_instance_features) insert_instance_rows(batch, gallery_emb);
  if (!batch.batch_identities.empty()) {
    Matrix feats(batch.batch_identities.size() * cfg_.k, cfg_.embed_dim);
    for (std::size_t b = 0; b < batch.batch_identities.size(); ++b) {
      for (std::size_t kk = 0; kk < cfg_.k; ++kk) {
        auto src = gallery_emb.row(batch.gallery_layout[b][kk]);
        std::copy(src.begin(), src.end(), feats.row(b * cfg_.k + kk).begin());
      }
    }
    pool_->insert_batch(batch.batch_identities, feats);
  }

  // (3)-(4) probe features, split by pool residency.
  auto [probe_emb, trace] = forward(p_net_, batch.probe_inputs);
  const PoolPartition part = pool_->partition(batch.probe_labels);
  st.in_pool = part.in_pool.size();
  st.out_pool = part.out_pool.size();

  // (5) losses.
  LossOutput ce;
  if (!part.in_pool.empty()) {
    std::vector<std::size_t> rows, slots;
    for (auto [r, s] : part.in_pool) {
      rows.push_back(r);
      slots.push_back(s);
    }
    const Matrix in_emb = gather_rows(probe_emb, rows);
    LossOutput on_logits = pool_ce(pool_->logits(in_emb), slots, pool_->occupancy());
    ce.value = on_logits.value;
    ce.count = on_logits.count;
    ce.grad = pool_->logits_backward(on_logits.grad);
    ce.rows = std::move(rows);
  }
  LossOutput cos;
  if (!part.out_pool.empty()) {
    cos = cos_neg(gather_rows(probe_emb, part.out_pool), pool_->mean_centers(),
                  pool_->occupancy(), {cfg_.cos_reduction, cfg_.cos_hinge});
    cos.rows = part.out_pool;
  }
  const LossOutput total = total_loss(ce, cos, cfg_.cos_weight, probe_emb.rows);
  st.ce = ce.value;
  st.cos = cos.value;
  st.total = total.value;
  st.skipped_centers = cos.skipped_centers;
  check_loss(st);

  // (6)-(8) probe update, then gallery follows by moving average.
  auto [grads, dx] = backward(p_net_, trace, total.grad);
  sgd_update(p_net_, p_opt_, grads, sgd_);
  momentum_sync(g_net_, p_net_, cfg_.momentum_m);

  ++steps_;
  st.ms = elapsed_ms(t0);
  return st;
}

StepStats Trainer::classifier_step(const MixedBatch& batch, const QueueMask* mask) {
  if (classifier_.empty()) throw ConfigError("classifier step needs method fc or partial-fc");
  const auto t0 = std::chrono::steady_clock::now();
  StepStats st;

  Matrix inputs(batch.probe_inputs.rows + batch.gallery_inputs.rows, ds_.d_in);
  std::copy(batch.probe_inputs.data.begin(), batch.probe_inputs.data.end(),
            inputs.data.begin());
  std::copy(batch.gallery_inputs.data.begin(), batch.gallery_inputs.data.end(),
            inputs.data.begin() + static_cast<std::ptrdiff_t>(batch.probe_inputs.data.size()));
  std::vector<uint32_t> labels = batch.probe_labels;
  labels.insert(labels.end(), batch.gallery_labels.begin(), batch.gallery_labels.end());

  auto [emb, trace] = forward(p_net_, inputs);
  const ClassifierLoss loss = mask ? masked_softmax_ce(classifier_, *mask, emb, labels)
                                   : softmax_ce_full(classifier_, emb, labels);
  st.ce = loss.value;
  st.total = loss.value;
  st.in_pool = labels.size();
  check_loss(st);

  auto [grads, dx] = backward(p_net_, trace, loss.grad_inputs);
  sgd_update(p_net_, p_opt_, grads, sgd_);
  for (std::size_t j = 0; j < loss.classes.size(); ++j) {
    const uint32_t c = loss.classes[j];
    auto p = classifier_.row(c);
    auto v = classifier_velocity_.row(c);
    auto g = loss.grad_weights.row(j);
    for (std::size_t d = 0; d < p.size(); ++d) {
      v[d] = sgd_.momentum * v[d] + g[d] + sgd_.weight_decay * p[d];
      p[d] -= sgd_.lr * v[d];
    }
  }
  ++steps_;
  st.ms = elapsed_ms(t0);
  return st;
}

StepStats Trainer::train_step_fc(const MixedBatch& batch) {
  return classifier_step(batch, nullptr);
}

StepStats Trainer::train_step_partial_fc(const MixedBatch& batch, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw ConfigError("partial fraction must be in (0, 1]");
  const std::size_t c = std::max<std::size_t>(1, ceil_frac(r, ds_.n_id));
  std::vector<uint32_t> labels = batch.probe_labels;
  labels.insert(labels.end(), batch.gallery_labels.begin(), batch.gallery_labels.end());
  uint64_t st = queue_seed_ + steps_;
  const QueueMask mask = select_queue(ds_.n_id, c, labels, splitmix64(st));
  return classifier_step(batch, &mask);
}

TrainReport run(const TrainConfig& cfg, const Dataset& ds, const RunOptions& opts) {
  Trainer trainer(cfg, ds);
  TrainReport report;
  report.config = cfg;
  report.sizes = trainer.sizes();
  report.classifier_state_bytes = trainer.classifier_state_bytes();

  double total_ms = 0.0;
  std::size_t total_steps = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    trainer.set_lr(lr_at(epoch, cfg));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = trainer.lr();
    double ms = 0.0;
    for (std::size_t s = 0; s < trainer.sizes().steps_per_epoch; ++s) {
      const StepStats st = trainer.step();
      rec.ce += st.ce;
      rec.cos += st.cos;
      rec.total += st.total;
      ms += st.ms;
      ++rec.steps;
      if (opts.progress && cfg.log_every > 0 && trainer.steps_taken() % cfg.log_every == 0) {
        char line[256];
        std::snprintf(line, sizeof(line),
                      "step=%zu epoch=%zu lr=%.6g ce=%.6f cos=%.6f total=%.6f ms=%.3f\n",
                      trainer.steps_taken(), epoch, rec.lr, st.ce, st.cos, st.total, st.ms);
        *opts.progress << line << std::flush;
      }
    }
    const double n = static_cast<double>(rec.steps);
    rec.ce /= n;
    rec.cos /= n;
    rec.total /= n;
    rec.ms_per_step = ms / n;
    total_ms += ms;
    total_steps += rec.steps;
    report.epochs.push_back(rec);
  }
  report.ms_per_step = total_steps ? total_ms / static_cast<double>(total_steps) : 0.0;

  PairSet sampled;
  const PairSet* pairs = opts.eval_pairs;
  if (!pairs && cfg.eval_genuine > 0 && cfg.eval_impostor > 0) {
    sampled = split_eval_pairs(ds, cfg.eval_genuine, cfg.eval_impostor,
                               derive_seed(cfg.seed, "pairs"));
    pairs = &sampled;
  }
  if (pairs) {
    const VerifyResult vr = verify(trainer.probe_net(), ds, *pairs);
    report.eval = EvalSummary{vr.roc_auc, vr.tpr_at_far, pairs->genuine.size(),
                              pairs->impostor.size()};
  }

  if (!opts.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) throw PersistenceError("cannot create " + opts.out_dir + ": " + ec.message());
    const std::filesystem::path dir(opts.out_dir);
    const std::string p_path = (dir / "probe_net.dcpn").string();
    save_net(trainer.probe_net(), p_path);
    report.checkpoints.push_back(p_path);
    if (cfg.method == Method::dcp) {
      const std::string g_path = (dir / "gallery_net.dcpn").string();
      save_net(trainer.gallery_net(), g_path);
      report.checkpoints.push_back(g_path);
      const std::string t_path = (dir / "pool.dcpt").string();
      trainer.pool()->save(t_path);
      report.checkpoints.push_back(t_path);
    }
    const std::string r_path = (dir / "report.json").string();
    std::ofstream os(r_path);
    os << report_json(report) << '\n';
    if (!os) throw PersistenceError("write failed for " + r_path);
  }
  return report;
}

std::string report_json(const TrainReport& report, bool include_timing) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["method"] = method_name(report.config.method);
  j["seed"] = report.config.seed;
  j["n_id"] = report.sizes.n_id;
  j["n_train"] = report.sizes.n_train;
  j["pool_c"] = report.sizes.pool_c;
  j["k"] = report.config.k;
  j["embed_dim"] = report.config.embed_dim;
  j["b_inst"] = report.config.b_inst;
  j["b_id"] = report.sizes.b_id;
  j["queue_c"] = report.sizes.queue_c;
  j["steps_per_epoch"] = report.sizes.steps_per_epoch;
  j["classifier_state_bytes"] = report.classifier_state_bytes;
  ordered_json epochs = ordered_json::array();
  for (const auto& e : report.epochs) {
    ordered_json r;
    r["epoch"] = e.epoch;
    r["lr"] = e.lr;
    r["steps"] = e.steps;
    r["ce"] = e.ce;
    r["cos"] = e.cos;
    r["total"] = e.total;
    if (include_timing) r["ms_per_step"] = e.ms_per_step;
    epochs.push_back(r);
  }
  j["epochs"] = epochs;
  if (include_timing) j["ms_per_step"] = report.ms_per_step;
  if (report.eval) {
    ordered_json ev;
    ev["roc_auc"] = report.eval->roc_auc;
    ev["n_genuine"] = report.eval->n_genuine;
    ev["n_impostor"] = report.eval->n_impostor;
    ordered_json tprs = ordered_json::array();
    for (auto [far, tpr] : report.eval->tpr_at_far) {
      tprs.push_back({{"far", far}, {"tpr", tpr}});
    }
    ev["tpr_at_far"] = tprs;
    j["eval"] = ev;
  }
  if (!report.checkpoints.empty()) j["checkpoints"] = report.checkpoints;
  return j.dump(2);
}

}  // namespace dcp
