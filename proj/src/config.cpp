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

#include "dcp/config.hpp"

#include <charconv>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dcp/errors.hpp"
#include "dcp/rng.hpp"

namespace dcp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

uint64_t to_u64(const std::string& v) {
  const std::string t = trim(v);
  if (t.empty() || t[0] == '-' || t[0] == '+') throw ConfigError("expected a nonnegative integer");
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(t.c_str(), &end, 10);
  if (errno != 0 || *end != '\0') throw ConfigError("expected a nonnegative integer");
  return x;
}

double to_double(const std::string& v) {
  const std::string t = trim(v);
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(t.c_str(), &end);
  if (t.empty() || errno != 0 || *end != '\0') throw ConfigError("expected a number");
  return x;
}

bool to_bool(const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError("expected true or false");
}

std::vector<std::size_t> to_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(static_cast<std::size_t>(to_u64(item)));
  }
  return out;
}

std::optional<std::size_t> to_auto(const std::string& v) {
  if (trim(v) == "auto") return std::nullopt;
  return static_cast<std::size_t>(to_u64(v));
}

std::string show(double v) {
  // Shortest form that parses back to the same double.
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string show(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string show(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : "auto";
}

std::string show(bool b) { return b ? "true" : "false"; }

BatchMode to_batch_mode(const std::string& v) {
  const std::string t = trim(v);
  if (t == "k-fill") return BatchMode::k_fill;
  if (t == "paper-literal") return BatchMode::paper_literal;
  throw ConfigError("expected k-fill or paper-literal");
}

CosReduction to_reduction(const std::string& v) {
  const std::string t = trim(v);
  if (t == "mean") return CosReduction::mean;
  if (t == "max") return CosReduction::max;
  throw ConfigError("expected mean or max");
}

Imbalance to_imbalance(const std::string& v) {
  const std::string t = trim(v);
  if (t == "uniform") return Imbalance::uniform;
  if (t == "zipf") return Imbalance::zipf;
  throw ConfigError("expected uniform or zipf");
}

uint32_t to_u32(const std::string& v) {
  const uint64_t x = to_u64(v);
  if (x > UINT32_MAX) throw ConfigError("value too large");
  return static_cast<uint32_t>(x);
}

#define DCP_KEY(name, help, setter, getter)                                      \
  ConfigKey {                                                                    \
    name, help, [](RunSpec& s, const std::string& v) { setter; },               \
        [](const RunSpec& s) -> std::string { return getter; }                  \
  }

std::vector<ConfigKey> build_keys() {
  return {
      DCP_KEY("method", "dcp | fc | partial-fc", s.train.method = parse_method(trim(v)),
              method_name(s.train.method)),
      DCP_KEY("b_inst", "instance-loader images per step (even)",
              s.train.b_inst = to_u64(v), std::to_string(s.train.b_inst)),
      DCP_KEY("b_id", "identities per step, or auto (b_inst / images per identity)",
              s.train.b_id = to_auto(v), show(s.train.b_id)),
      DCP_KEY("batch_mode", "k-fill | paper-literal",
              s.train.batch_mode = to_batch_mode(v),
              s.train.batch_mode == BatchMode::k_fill ? "k-fill" : "paper-literal"),
      DCP_KEY("pool_frac", "pool capacity as a fraction of identities",
              s.train.pool_frac = to_double(v), show(s.train.pool_frac)),
      DCP_KEY("pool_c", "pool capacity C, or auto (ceil(pool_frac * n_id))",
              s.train.pool_c = to_auto(v), show(s.train.pool_c)),
      DCP_KEY("k", "features per pool slot", s.train.k = to_u64(v),
              std::to_string(s.train.k)),
      DCP_KEY("scale", "pool logit scale", s.train.scale = to_double(v),
              show(s.train.scale)),
      DCP_KEY("insert_instance_features", "also pool gallery-side instance rows",
              s.train.insert_instance_features = to_bool(v),
              show(s.train.insert_instance_features)),
      DCP_KEY("hidden", "hidden layer widths, comma separated",
              s.train.hidden = to_list(v), show(s.train.hidden)),
      DCP_KEY("embed_dim", "embedding dimension D", s.train.embed_dim = to_u64(v),
              std::to_string(s.train.embed_dim)),
      DCP_KEY("cos_weight", "weight of the cosine loss", s.train.cos_weight = to_double(v),
              show(s.train.cos_weight)),
      DCP_KEY("cos_reduction", "mean | max over pool centers",
              s.train.cos_reduction = to_reduction(v),
              s.train.cos_reduction == CosReduction::mean ? "mean" : "max"),
      DCP_KEY("cos_hinge", "penalize only positive cosine", s.train.cos_hinge = to_bool(v),
              show(s.train.cos_hinge)),
      DCP_KEY("partial_frac", "partial-fc queue fraction r",
              s.train.partial_frac = to_double(v), show(s.train.partial_frac)),
      DCP_KEY("lr", "initial learning rate", s.train.lr = to_double(v), show(s.train.lr)),
      DCP_KEY("lr_decay_epochs", "epochs at which lr is divided, comma separated",
              s.train.lr_decay_epochs = to_list(v), show(s.train.lr_decay_epochs)),
      DCP_KEY("lr_decay_factor", "lr divisor at each decay epoch",
              s.train.lr_decay_factor = to_double(v), show(s.train.lr_decay_factor)),
      DCP_KEY("epochs", "training epochs (instance-loader passes)",
              s.train.epochs = to_u64(v), std::to_string(s.train.epochs)),
      DCP_KEY("sgd_momentum", "SGD heavy-ball momentum",
              s.train.sgd_momentum = to_double(v), show(s.train.sgd_momentum)),
      DCP_KEY("weight_decay", "SGD weight decay", s.train.weight_decay = to_double(v),
              show(s.train.weight_decay)),
      DCP_KEY("momentum_m", "gallery-net moving-average coefficient (0: single net)",
              s.train.momentum_m = to_double(v), show(s.train.momentum_m)),
      DCP_KEY("seed", "top-level seed", s.train.seed = to_u64(v),
              std::to_string(s.train.seed)),
      DCP_KEY("holdout_per_id", "held-out samples per identity",
              s.train.holdout_per_id = to_u32(v), std::to_string(s.train.holdout_per_id)),
      DCP_KEY("eval_genuine", "genuine verification pairs (0: no eval)",
              s.train.eval_genuine = to_u64(v), std::to_string(s.train.eval_genuine)),
      DCP_KEY("eval_impostor", "impostor verification pairs (0: no eval)",
              s.train.eval_impostor = to_u64(v), std::to_string(s.train.eval_impostor)),
      DCP_KEY("log_every", "progress line every N steps (0: off)",
              s.train.log_every = to_u64(v), std::to_string(s.train.log_every)),
      DCP_KEY("data_path", "DCPD dataset file; empty generates synthetic data",
              s.data_path = trim(v), s.data_path),
      DCP_KEY("data_n_id", "synthetic identities", s.data.n_id = to_u32(v),
              std::to_string(s.data.n_id)),
      DCP_KEY("data_d_in", "synthetic input dimension", s.data.d_in = to_u32(v),
              std::to_string(s.data.d_in)),
      DCP_KEY("data_k_min", "synthetic min images per identity", s.data.k_min = to_u32(v),
              std::to_string(s.data.k_min)),
      DCP_KEY("data_k_max", "synthetic max images per identity", s.data.k_max = to_u32(v),
              std::to_string(s.data.k_max)),
      DCP_KEY("data_noise_sigma", "synthetic within-class noise",
              s.data.noise_sigma = to_double(v), show(s.data.noise_sigma)),
      DCP_KEY("data_imbalance", "uniform | zipf", s.data.imbalance = to_imbalance(v),
              s.data.imbalance == Imbalance::uniform ? "uniform" : "zipf"),
      DCP_KEY("data_zipf_exponent", "zipf exponent for data_imbalance = zipf",
              s.data.zipf_exponent = to_double(v), show(s.data.zipf_exponent)),
  };
}

#undef DCP_KEY

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void apply_override(RunSpec& spec, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name != key) continue;
    try {
      k.set(spec, value);
    } catch (const ConfigError& e) {
      throw ConfigError("key '" + key + "': " + e.what() + " (got '" + trim(value) + "')");
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunSpec parse_config_text(const std::string& text, RunSpec base) {
  std::vector<std::string> errs;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errs.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    try {
      apply_override(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      errs.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (errs.empty()) {
    try {
      base.train.validate();
    } catch (const ConfigError& e) {
      errs.push_back(e.what());
    }
  }
  if (!errs.empty()) {
    std::string msg = "config errors:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return base;
}

RunSpec load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string effective_config(const RunSpec& spec) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(spec) + "\n";
  return out;
}

SynthConfig synth_config_for(const RunSpec& spec) {
  SynthConfig sc = spec.data;
  sc.seed = derive_seed(spec.train.seed, "data");
  sc.holdout_per_id = spec.train.holdout_per_id;
  return sc;
}

Dataset load_or_generate(const RunSpec& spec) {
  if (!spec.data_path.empty()) return load_dataset(spec.data_path, spec.train.holdout_per_id);
  return generate(synth_config_for(spec));
}

}  // namespace dcp
