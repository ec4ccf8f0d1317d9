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

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dcp/synth_data.hpp"
#include "dcp/trainer.hpp"

namespace dcp {

// Everything a training run needs: the training config plus where its data
// comes from (a DCPD file, or a synthetic set generated from `data`).
struct RunSpec {
  TrainConfig train;
  SynthConfig data;
  std::string data_path;

  bool operator==(const RunSpec&) const = default;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunSpec&, const std::string&)> set;
  std::function<std::string(const RunSpec&)> get;
};

const std::vector<ConfigKey>& config_keys();

// Sets one key; throws ConfigError naming the key on unknown keys or bad
// values.
void apply_override(RunSpec& spec, const std::string& key, const std::string& value);

// Flat "key = value" text with '#' comments. Parse errors carry the line
// number; all problems are reported together.
RunSpec parse_config_text(const std::string& text, RunSpec base = {});
RunSpec load_config(const std::string& path);

// Every key with its resolved value, in registry order; parses back to the
// same RunSpec.
std::string effective_config(const RunSpec& spec);

// Synthetic generation settings for a spec; the data seed is derived from
// the run seed.
SynthConfig synth_config_for(const RunSpec& spec);
Dataset load_or_generate(const RunSpec& spec);

}  // namespace dcp
