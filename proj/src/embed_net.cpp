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

#include "dcp/embed_net.hpp"

#include <cmath>
#include <fstream>

#include "dcp/detail/binary_io.hpp"
#include "dcp/errors.hpp"
#include "dcp/rng.hpp"

namespace dcp {

namespace {

constexpr uint32_t kNetVersion = 1;

Matrix affine(const Matrix& a, const Layer& layer) {
  Matrix z(a.rows, layer.weight.rows);
  parallel_rows(a.rows, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      auto in = a.row(i);
      auto out = z.row(i);
      for (std::size_t o = 0; o < layer.weight.rows; ++o) {
        out[o] = dot(layer.weight.row(o), in) + layer.bias[o];
      }
    }
  });
  return z;
}

void relu_inplace(Matrix& m) {
  for (auto& v : m.data) v = v > 0.0 ? v : 0.0;
}

void check_input(const EmbedNet& net, const Matrix& x) {
  if (net.layers().empty()) throw ShapeError("network has no layers");
  if (x.cols != net.input_dim()) {
    throw ShapeError("input has " + std::to_string(x.cols) +
                     " columns, network expects " +
                     std::to_string(net.input_dim()));
  }
  if (!all_finite(x.data)) throw NumericError("non-finite network input");
}

void check_same_dims(const EmbedNet& a, const EmbedNet& b) {
  if (a.dims() != b.dims()) throw ShapeError("network dimensions differ");
}

}  // namespace

EmbedNet EmbedNet::init(const std::vector<std::size_t>& dims, uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("network needs at least two dims");
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("network dims must be positive");
  }
  EmbedNet net;
  net.dims_ = dims;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer{Matrix(dims[l + 1], dims[l]), std::vector<double>(dims[l + 1], 0.0)};
    const double sd = std::sqrt(2.0 / static_cast<double>(dims[l]));
    for (auto& w : layer.weight.data) w = sd * rng.gaussian();
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

std::size_t EmbedNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.data.size() + l.bias.size();
  return n;
}

Matrix EmbedNet::embed(const Matrix& x) const { return forward(*this, x).first; }

std::pair<Matrix, ForwardTrace> forward(const EmbedNet& net, const Matrix& x) {
  check_input(net, x);
  ForwardTrace tr;
  const auto& layers = net.layers();
  tr.activations.push_back(x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = affine(tr.activations.back(), layers[l]);
    if (l + 1 < layers.size()) {
      Matrix a = z;
      relu_inplace(a);
      tr.pre.push_back(std::move(z));
      tr.activations.push_back(std::move(a));
    } else {
      tr.pre.push_back(std::move(z));
    }
  }
  const Matrix& raw = tr.pre.back();
  tr.out = raw;
  tr.out_norms.resize(raw.rows);
  for (std::size_t i = 0; i < raw.rows; ++i) {
    const double n = normalize(tr.out.row(i));
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericError("embedding row " + std::to_string(i) +
                         " has zero or non-finite norm");
    }
    tr.out_norms[i] = n;
  }
  Matrix out = tr.out;
  return {std::move(out), std::move(tr)};
}

std::pair<Gradients, Matrix> backward(const EmbedNet& net,
                                      const ForwardTrace& trace,
                                      const Matrix& d_out) {
  const auto& layers = net.layers();
  if (trace.pre.size() != layers.size() ||
      trace.activations.size() != layers.size()) {
    throw ShapeError("trace does not match network depth");
  }
  if (d_out.rows != trace.out.rows || d_out.cols != trace.out.cols) {
    throw ShapeError("output gradient shape does not match trace");
  }

  // Through the normalization: (I - e e^T) dE / ||raw||.
  Matrix dz(d_out.rows, d_out.cols);
  for (std::size_t i = 0; i < d_out.rows; ++i) {
    auto e = trace.out.row(i);
    auto g = d_out.row(i);
    const double radial = dot(g, e);
    auto dzi = dz.row(i);
    for (std::size_t j = 0; j < g.size(); ++j) {
      dzi[j] = (g[j] - radial * e[j]) / trace.out_norms[i];
    }
  }

  Gradients grads;
  grads.layers.resize(layers.size());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Layer& layer = layers[l];
    const Matrix& a = trace.activations[l];
    Layer& g = grads.layers[l];
    g.weight = Matrix(layer.weight.rows, layer.weight.cols);
    g.bias.assign(layer.bias.size(), 0.0);
    parallel_rows(layer.weight.rows, [&](std::size_t b, std::size_t e) {
      for (std::size_t o = b; o < e; ++o) {
        auto gw = g.weight.row(o);
        double gb = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) {
          const double d = dz(i, o);
          if (d == 0.0) continue;
          axpy(d, a.row(i), gw);
          gb += d;
        }
        g.bias[o] = gb;
      }
    });

    Matrix da(a.rows, a.cols);
    parallel_rows(a.rows, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        auto dai = da.row(i);
        auto dzi = dz.row(i);
        for (std::size_t o = 0; o < layer.weight.rows; ++o) {
          if (dzi[o] != 0.0) axpy(dzi[o], layer.weight.row(o), dai);
        }
      }
    });
    if (l > 0) {
      const Matrix& z_prev = trace.pre[l - 1];
      for (std::size_t t = 0; t < da.data.size(); ++t) {
        if (!(z_prev.data[t] > 0.0)) da.data[t] = 0.0;
      }
    }
    dz = std::move(da);
  }
  return {std::move(grads), std::move(dz)};
}

SgdState SgdState::zeros_like(const EmbedNet& net) {
  SgdState st;
  for (const auto& l : net.layers()) {
    st.velocity.push_back(
        {Matrix(l.weight.rows, l.weight.cols), std::vector<double>(l.bias.size(), 0.0)});
  }
  return st;
}

namespace {

void sgd_block(std::span<double> p, std::span<double> v, std::span<const double> g,
               const SgdParams& sp) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = sp.momentum * v[i] + g[i] + sp.weight_decay * p[i];
    p[i] -= sp.lr * v[i];
  }
}

}  // namespace

void sgd_update(EmbedNet& net, SgdState& state, const Gradients& grads,
                const SgdParams& params) {
  auto& layers = net.layers();
  if (grads.layers.size() != layers.size() ||
      state.velocity.size() != layers.size()) {
    throw ShapeError("gradient/optimizer state depth mismatch");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& p = layers[l];
    auto& v = state.velocity[l];
    const auto& g = grads.layers[l];
    if (g.weight.rows != p.weight.rows || g.weight.cols != p.weight.cols ||
        g.bias.size() != p.bias.size() || v.weight.data.size() != p.weight.data.size()) {
      throw ShapeError("gradient shape mismatch at layer " + std::to_string(l));
    }
    sgd_block(p.weight.data, v.weight.data, g.weight.data, params);
    sgd_block(p.bias, v.bias, g.bias, params);
  }
}

void momentum_sync(EmbedNet& gallery, const EmbedNet& probe, double m) {
  check_same_dims(gallery, probe);
  const double w = 1.0 - m;
  auto mix = [m, w](std::span<double> dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = m * dst[i] + w * src[i];
  };
  for (std::size_t l = 0; l < gallery.layers().size(); ++l) {
    auto& g = gallery.layers()[l];
    const auto& p = probe.layers()[l];
    mix(g.weight.data, p.weight.data);
    mix(g.bias, p.bias);
  }
}

void save_net(const EmbedNet& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PersistenceError("cannot open " + path + " for writing");
  binio::put_magic(os, "DCPN");
  binio::put<uint32_t>(os, kNetVersion);
  binio::put<uint32_t>(os, static_cast<uint32_t>(net.dims().size()));
  for (std::size_t d : net.dims()) binio::put<uint64_t>(os, d);
  for (const auto& l : net.layers()) {
    binio::put_all<double>(os, l.weight.data);
    binio::put_all<double>(os, l.bias);
  }
  if (!os) throw PersistenceError("write failed for " + path);
}

EmbedNet load_net(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PersistenceError("cannot open " + path);
  binio::expect_magic(is, "DCPN");
  const auto version = binio::get<uint32_t>(is);
  if (version != kNetVersion) {
    throw PersistenceError("unsupported network version " + std::to_string(version));
  }
  const auto n = binio::get<uint32_t>(is);
  std::vector<std::size_t> dims(n);
  for (auto& d : dims) d = static_cast<std::size_t>(binio::get<uint64_t>(is));
  EmbedNet net = EmbedNet::init(dims, 0);
  for (auto& l : net.layers()) {
    binio::get_all<double>(is, l.weight.data);
    binio::get_all<double>(is, l.bias);
  }
  return net;
}

}  // namespace dcp
