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

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dcp/class_pool.hpp"
#include "dcp/embed_net.hpp"
#include "dcp/loaders.hpp"
#include "dcp/losses.hpp"
#include "dcp/synth_data.hpp"

namespace dcp {

enum class Method { dcp, fc, partial_fc };

const char* method_name(Method m);
Method parse_method(const std::string& s);

struct TrainConfig {
  Method method = Method::dcp;

  // Batch composition. b_id unset means floor(b_inst / images per identity),
  // i.e. the same number of images from each loader.
  std::size_t b_inst = 256;
  std::optional<std::size_t> b_id;
  BatchMode batch_mode = BatchMode::k_fill;

  // Pool. pool_c unset means ceil(pool_frac * n_id).
  double pool_frac = 0.10;
  std::optional<std::size_t> pool_c;
  std::size_t k = 2;
  double scale = 30.0;
  bool insert_instance_features = false;

  // Network.
  std::vector<std::size_t> hidden = {128, 128};
  std::size_t embed_dim = 32;

  // Objective.
  double cos_weight = 1.0;
  CosReduction cos_reduction = CosReduction::mean;
  bool cos_hinge = false;

  // Partial-FC queue fraction r.
  double partial_frac = 0.10;

  // Schedule and optimizer.
  double lr = 0.1;
  std::vector<std::size_t> lr_decay_epochs = {10, 14, 17};
  double lr_decay_factor = 10.0;
  std::size_t epochs = 20;
  double sgd_momentum = 0.9;
  double weight_decay = 5e-4;
  // Gallery-net moving-average coefficient; 0 gives the single-net ablation.
  double momentum_m = 0.999;

  uint64_t seed = 1;
  uint32_t holdout_per_id = 2;
  std::size_t eval_genuine = 0;
  std::size_t eval_impostor = 0;
  std::size_t log_every = 0;

  // Throws ConfigError listing every violated field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Dataset-dependent sizes derived from a config.
struct ResolvedSizes {
  std::size_t n_id = 0;
  std::size_t n_train = 0;
  std::size_t pool_c = 0;
  std::size_t b_id = 0;
  std::size_t images_per_identity = 0;
  std::size_t queue_c = 0;
  std::size_t steps_per_epoch = 0;
};

ResolvedSizes resolve_sizes(const TrainConfig& cfg, const Dataset& ds,
                            const Split& split);

// Base rate divided by the decay factor once per decay epoch <= epoch.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct StepStats {
  double ce = 0.0;
  double cos = 0.0;
  double total = 0.0;
  std::size_t in_pool = 0;
  std::size_t out_pool = 0;
  std::size_t skipped_centers = 0;
  double ms = 0.0;
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const Dataset& ds);

  MixedBatch next_batch();
  // Draws the next batch and runs the configured method's step.
  StepStats step();

  // Gallery forward, pool update, probe forward, partition, losses,
  // backward, SGD on the probe net, momentum sync of the gallery net.
  StepStats train_step_dcp(const MixedBatch& batch);
  // Softmax over all n_id classifier rows, on every batch row.
  StepStats train_step_fc(const MixedBatch& batch);
  // Softmax over a queue of ceil(r * n_id) classes holding every batch label;
  // only queued classifier rows are updated.
  StepStats train_step_partial_fc(const MixedBatch& batch, double r);

  void set_lr(double lr) { sgd_.lr = lr; }
  double lr() const { return sgd_.lr; }

  const TrainConfig& config() const { return cfg_; }
  const ResolvedSizes& sizes() const { return sizes_; }
  const Split& split() const { return split_; }
  std::size_t steps_taken() const { return steps_; }

  const EmbedNet& probe_net() const { return p_net_; }
  const EmbedNet& gallery_net() const { return g_net_; }
  EmbedNet& probe_net() { return p_net_; }
  const ClassPool* pool() const { return pool_ ? &*pool_ : nullptr; }
  ClassPool* pool() { return pool_ ? &*pool_ : nullptr; }
  const Matrix& classifier() const { return classifier_; }
  Matrix& classifier() { return classifier_; }

  std::size_t classifier_state_bytes() const;

 private:
  void check_loss(const StepStats& st) const;
  void insert_instance_rows(const MixedBatch& batch, const Matrix& gallery_emb);
  StepStats classifier_step(const MixedBatch& batch, const QueueMask* mask);

  TrainConfig cfg_;
  const Dataset& ds_;
  Split split_;
  ResolvedSizes sizes_;
  InstanceLoader inst_loader_;
  IdentityLoader id_loader_;
  EmbedNet p_net_;
  EmbedNet g_net_;
  SgdState p_opt_;
  SgdParams sgd_;
  std::optional<ClassPool> pool_;
  Matrix classifier_;
  Matrix classifier_velocity_;
  uint64_t queue_seed_ = 0;
  std::size_t steps_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double ce = 0.0;
  double cos = 0.0;
  double total = 0.0;
  std::size_t steps = 0;
  double ms_per_step = 0.0;
};

struct EvalSummary {
  double roc_auc = 0.0;
  std::vector<std::pair<double, double>> tpr_at_far;
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
};

struct TrainReport {
  TrainConfig config;
  ResolvedSizes sizes;
  std::vector<EpochRecord> epochs;
  std::size_t classifier_state_bytes = 0;
  double ms_per_step = 0.0;
  std::vector<std::string> checkpoints;
  std::optional<EvalSummary> eval;
};

struct RunOptions {
  std::string out_dir;  // empty: no files written
  std::ostream* progress = nullptr;
  // Overrides the config's eval_genuine/eval_impostor pair sampling.
  const PairSet* eval_pairs = nullptr;
};

TrainReport run(const TrainConfig& cfg, const Dataset& ds, const RunOptions& opts = {});

// JSON rendering of a report. Timing fields are left out when
// include_timing is false, which makes equal-seed runs byte-identical.
std::string report_json(const TrainReport& report, bool include_timing = true);

}  // namespace dcp
