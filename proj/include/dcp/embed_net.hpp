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
#include <string>
#include <utility>
#include <vector>

#include "dcp/matrix.hpp"

namespace dcp {

// One affine layer: weight is out x in, bias has out entries.
struct Layer {
  Matrix weight;
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

// MLP embedding network: rectifier hidden layers, a final affine layer, then
// L2 row normalization. Used for both the probe net and its momentum twin.
class EmbedNet {
 public:
  EmbedNet() = default;

  // He-style Gaussian init (variance 2 / fan_in), zero biases.
  static EmbedNet init(const std::vector<std::size_t>& dims, uint64_t seed);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t parameter_count() const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  // Forward pass without keeping a trace.
  Matrix embed(const Matrix& x) const;

  bool operator==(const EmbedNet&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<Layer> layers_;
};

struct ForwardTrace {
  // activations[0] is the input; activations[l] feeds layer l.
  std::vector<Matrix> activations;
  // Pre-activation of every layer; the last one is the raw (unnormalized)
  // output.
  std::vector<Matrix> pre;
  std::vector<double> out_norms;
  Matrix out;
};

struct Gradients {
  std::vector<Layer> layers;
};

std::pair<Matrix, ForwardTrace> forward(const EmbedNet& net, const Matrix& x);

// Returns parameter gradients and dL/dX for upstream gradient dE on the
// normalized output.
std::pair<Gradients, Matrix> backward(const EmbedNet& net,
                                      const ForwardTrace& trace,
                                      const Matrix& d_out);

struct SgdParams {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// Heavy-ball velocity buffers, shaped like the net.
struct SgdState {
  std::vector<Layer> velocity;

  static SgdState zeros_like(const EmbedNet& net);
};

// v <- momentum * v + grad + weight_decay * p;  p <- p - lr * v
void sgd_update(EmbedNet& net, SgdState& state, const Gradients& grads,
                const SgdParams& params);

// phi <- m * phi + (1 - m) * theta
void momentum_sync(EmbedNet& gallery, const EmbedNet& probe, double m);

// "DCPN" checkpoint.
void save_net(const EmbedNet& net, const std::string& path);
EmbedNet load_net(const std::string& path);

}  // namespace dcp
