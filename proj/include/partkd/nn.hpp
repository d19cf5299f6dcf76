// Copyright 2026 The partkd Authors
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

// Small dense-layer toolkit with explicit forward caches and hand-written
// backward passes. Everything runs in double precision; per-sample passes
// are single-threaded so callers can parallelize across samples and reduce
// gradients deterministically.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "partkd/common.hpp"
#include "partkd/tensor.hpp"

namespace partkd {

// ---------------------------------------------------------------- params

struct Param {
  std::string name;
  Tensor value;
};

class ParamSet {
 public:
  Tensor& add(const std::string& name, std::vector<std::int64_t> shape) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = items_.size();
    items_.push_back({name, Tensor(std::move(shape))});
    return items_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  Tensor& at(const std::string& name) { return items_[index_of(name)].value; }
  const Tensor& at(const std::string& name) const { return items_[index_of(name)].value; }

  std::size_t size() const { return items_.size(); }
  Param& operator[](std::size_t i) { return items_[i]; }
  const Param& operator[](std::size_t i) const { return items_[i]; }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
  }

 private:
  std::vector<Param> items_;
  std::map<std::string, std::size_t> index_;
};

// Gradient buffers aligned with a ParamSet by index.
struct GradBuffer {
  std::vector<Tensor> grads;

  explicit GradBuffer(const ParamSet& params) {
    grads.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      grads.emplace_back(params[i].value.shape());
  }

  void zero() {
    for (auto& g : grads) g.zero();
  }

  void add(const GradBuffer& other) {
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i].add_scaled(other.grads[i], 1.0);
  }

  bool all_finite() const {
    for (const auto& g : grads)
      if (!g.all_finite()) return false;
    return true;
  }
};

// ---------------------------------------------------------------- conv

// Temporal 1D convolution over the T axis of a (C, T, V) map, kernel laid
// out tap-major as (k, C_out, C_in). With k=1, pad=0 this doubles as the
// strided 1x1 projection used on residual paths. Backward passes take the
// forward input explicitly; callers keep activations alive between passes.

namespace nn_detail {

// gathered[c, to, v] = in[c, to*stride + offset, v], zero outside [0, T_in).
inline void gather_time(const Tensor& in, Tensor& gathered, int stride, int offset) {
  const std::int64_t c_dim = in.dim(0), t_in = in.dim(1), v_dim = in.dim(2);
  const std::int64_t t_out = gathered.dim(1);
  for (std::int64_t c = 0; c < c_dim; ++c) {
    for (std::int64_t to = 0; to < t_out; ++to) {
      const std::int64_t ti = to * stride + offset;
      double* dst = gathered.data() + (c * t_out + to) * v_dim;
      if (ti < 0 || ti >= t_in) {
        std::fill(dst, dst + v_dim, 0.0);
      } else {
        const double* src = in.data() + (c * t_in + ti) * v_dim;
        std::copy(src, src + v_dim, dst);
      }
    }
  }
}

// in_grad[c, to*stride + offset, v] += g[c, to, v]
inline void scatter_add_time(const Tensor& g, Tensor& in_grad, int stride, int offset) {
  const std::int64_t c_dim = in_grad.dim(0), t_in = in_grad.dim(1), v_dim = in_grad.dim(2);
  const std::int64_t t_out = g.dim(1);
  for (std::int64_t c = 0; c < c_dim; ++c) {
    for (std::int64_t to = 0; to < t_out; ++to) {
      const std::int64_t ti = to * stride + offset;
      if (ti < 0 || ti >= t_in) continue;
      const double* src = g.data() + (c * t_out + to) * v_dim;
      double* dst = in_grad.data() + (c * t_in + ti) * v_dim;
      for (std::int64_t v = 0; v < v_dim; ++v) dst[v] += src[v];
    }
  }
}

}  // namespace nn_detail

inline std::int64_t conv_out_length(std::int64_t t_in, int kernel, int stride, int pad) {
  return (t_in + 2 * static_cast<std::int64_t>(pad) - kernel) / stride + 1;
}

inline Tensor temporal_conv_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                                    int stride, int pad) {
  const std::int64_t kernel = w.dim(0), c_out = w.dim(1), c_in = w.dim(2);
  if (x.dim(0) != c_in) throw ShapeError("temporal conv: channel mismatch");
  const std::int64_t t_in = x.dim(1), v_dim = x.dim(2);
  const std::int64_t t_out = conv_out_length(t_in, static_cast<int>(kernel), stride, pad);
  Tensor y({c_out, t_out, v_dim});
  auto y_mat = as_matrix(y, c_out, t_out * v_dim);
  Tensor gathered({c_in, t_out, v_dim});
  for (std::int64_t d = 0; d < kernel; ++d) {
    nn_detail::gather_time(x, gathered, stride, static_cast<int>(d) - pad);
    ConstMapRM w_d(w.data() + d * c_out * c_in, c_out, c_in);
    y_mat.noalias() += w_d * as_matrix(gathered, c_in, t_out * v_dim);
  }
  for (std::int64_t c = 0; c < c_out; ++c) {
    double* row = y.data() + c * t_out * v_dim;
    const double bias = b[c];
    for (std::int64_t i = 0; i < t_out * v_dim; ++i) row[i] += bias;
  }
  return y;
}

inline Tensor temporal_conv_backward(const Tensor& dy, const Tensor& x, const Tensor& w,
                                     int stride, int pad, Tensor& dw, Tensor& db) {
  const std::int64_t kernel = w.dim(0), c_out = w.dim(1), c_in = w.dim(2);
  const std::int64_t t_in = x.dim(1), v_dim = x.dim(2), t_out = dy.dim(1);
  Tensor dx({c_in, t_in, v_dim});
  Tensor gathered({c_in, t_out, v_dim});
  Tensor dgathered({c_in, t_out, v_dim});
  auto dy_mat = as_matrix(dy, c_out, t_out * v_dim);
  for (std::int64_t d = 0; d < kernel; ++d) {
    const int offset = static_cast<int>(d) - pad;
    nn_detail::gather_time(x, gathered, stride, offset);
    MapRM dw_d(dw.data() + d * c_out * c_in, c_out, c_in);
    dw_d.noalias() += dy_mat * as_matrix(gathered, c_in, t_out * v_dim).transpose();
    ConstMapRM w_d(w.data() + d * c_out * c_in, c_out, c_in);
    as_matrix(dgathered, c_in, t_out * v_dim).noalias() =
        w_d.transpose() * dy_mat;
    nn_detail::scatter_add_time(dgathered, dx, stride, offset);
  }
  for (std::int64_t c = 0; c < c_out; ++c) {
    const double* row = dy.data() + c * t_out * v_dim;
    double acc = 0.0;
    for (std::int64_t i = 0; i < t_out * v_dim; ++i) acc += row[i];
    db[c] += acc;
  }
  return dx;
}

// ---------------------------------------------------------------- spatial

// Graph convolution: Y[:,t,:] = sum_k (W_k X[:,t,:]) (A_k ⊙ M_k) + b where
// A_k is the normalized adjacency subset and M_k the learnable edge mask.
// `lifted_out`, when given, receives the K per-subset channel lifts the
// backward pass needs.
inline Tensor spatial_conv_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                                   const std::vector<Tensor>& adjacency, const Tensor& mask,
                                   std::vector<Tensor>* lifted_out) {
  const std::int64_t kk = w.dim(0), c_out = w.dim(1), c_in = w.dim(2);
  if (x.dim(0) != c_in) throw ShapeError("spatial conv: channel mismatch");
  const std::int64_t t_dim = x.dim(1), v_dim = x.dim(2);
  if (static_cast<std::int64_t>(adjacency.size()) != kk)
    throw ShapeError("spatial conv: adjacency subset count mismatch");

  Tensor y({c_out, t_dim, v_dim});
  auto y_mat = as_matrix(y, c_out * t_dim, v_dim);
  if (lifted_out) lifted_out->assign(static_cast<std::size_t>(kk), Tensor());
  Tensor lifted({c_out, t_dim, v_dim});
  Tensor masked_adj({v_dim, v_dim});
  for (std::int64_t k = 0; k < kk; ++k) {
    ConstMapRM w_k(w.data() + k * c_out * c_in, c_out, c_in);
    as_matrix(lifted, c_out, t_dim * v_dim).noalias() =
        w_k * as_matrix(x, c_in, t_dim * v_dim);
    for (std::int64_t i = 0; i < v_dim * v_dim; ++i)
      masked_adj[i] = adjacency[static_cast<std::size_t>(k)][i] * mask[k * v_dim * v_dim + i];
    y_mat.noalias() += as_matrix(lifted, c_out * t_dim, v_dim) * as_matrix(masked_adj, v_dim, v_dim);
    if (lifted_out) (*lifted_out)[static_cast<std::size_t>(k)] = lifted;
  }
  for (std::int64_t c = 0; c < c_out; ++c) {
    double* row = y.data() + c * t_dim * v_dim;
    const double bias = b[c];
    for (std::int64_t i = 0; i < t_dim * v_dim; ++i) row[i] += bias;
  }
  return y;
}

inline Tensor spatial_conv_backward(const Tensor& dy, const Tensor& x,
                                    const std::vector<Tensor>& lifted_cache, const Tensor& w,
                                    const std::vector<Tensor>& adjacency, const Tensor& mask,
                                    Tensor& dw, Tensor& db, Tensor& dmask) {
  const std::int64_t kk = w.dim(0), c_out = w.dim(1), c_in = w.dim(2);
  const std::int64_t t_dim = x.dim(1), v_dim = x.dim(2);
  Tensor dx({c_in, t_dim, v_dim});
  Tensor dlifted({c_out, t_dim, v_dim});
  Tensor masked_adj({v_dim, v_dim});
  Tensor dmadj({v_dim, v_dim});
  auto dy_flat = as_matrix(dy, c_out * t_dim, v_dim);
  for (std::int64_t k = 0; k < kk; ++k) {
    const Tensor& lifted = lifted_cache[static_cast<std::size_t>(k)];
    for (std::int64_t i = 0; i < v_dim * v_dim; ++i)
      masked_adj[i] = adjacency[static_cast<std::size_t>(k)][i] * mask[k * v_dim * v_dim + i];
    // d(masked adjacency) and thus d(mask)
    as_matrix(dmadj, v_dim, v_dim).noalias() =
        as_matrix(lifted, c_out * t_dim, v_dim).transpose() * dy_flat;
    for (std::int64_t i = 0; i < v_dim * v_dim; ++i)
      dmask[k * v_dim * v_dim + i] += dmadj[i] * adjacency[static_cast<std::size_t>(k)][i];
    // back through the propagation
    as_matrix(dlifted, c_out * t_dim, v_dim).noalias() =
        dy_flat * as_matrix(masked_adj, v_dim, v_dim).transpose();
    // back through the channel lift
    MapRM dw_k(dw.data() + k * c_out * c_in, c_out, c_in);
    dw_k.noalias() += as_matrix(dlifted, c_out, t_dim * v_dim) *
                      as_matrix(x, c_in, t_dim * v_dim).transpose();
    ConstMapRM w_k(w.data() + k * c_out * c_in, c_out, c_in);
    as_matrix(dx, c_in, t_dim * v_dim).noalias() +=
        w_k.transpose() * as_matrix(dlifted, c_out, t_dim * v_dim);
  }
  for (std::int64_t c = 0; c < c_out; ++c) {
    const double* row = dy.data() + c * t_dim * v_dim;
    double acc = 0.0;
    for (std::int64_t i = 0; i < t_dim * v_dim; ++i) acc += row[i];
    db[c] += acc;
  }
  return dx;
}

// ---------------------------------------------------------------- norm

// Per-sample channel normalization over the (T, V) plane with learnable
// scale and shift. Keeps every forward pass independent of batch
// composition, unlike batch statistics.
inline constexpr double kNormEpsilon = 1e-5;

struct ChannelNormCache {
  Tensor xhat;                  // (C, T, V)
  std::vector<double> inv_std;  // per channel
};

inline Tensor channel_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                   ChannelNormCache* cache) {
  const std::int64_t c_dim = x.dim(0), plane = x.dim(1) * x.dim(2);
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(c_dim));
  for (std::int64_t c = 0; c < c_dim; ++c) {
    const double* row = x.data() + c * plane;
    double mean = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) mean += row[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) {
      const double d = row[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double is = 1.0 / std::sqrt(var + kNormEpsilon);
    inv_std[static_cast<std::size_t>(c)] = is;
    double* xh = xhat.data() + c * plane;
    double* out = y.data() + c * plane;
    const double g = gamma[c], b = beta[c];
    for (std::int64_t i = 0; i < plane; ++i) {
      xh[i] = (row[i] - mean) * is;
      out[i] = g * xh[i] + b;
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

inline Tensor channel_norm_backward(const Tensor& dy, const ChannelNormCache& cache,
                                    const Tensor& gamma, Tensor& dgamma, Tensor& dbeta) {
  const std::int64_t c_dim = dy.dim(0), plane = dy.dim(1) * dy.dim(2);
  Tensor dx(dy.shape());
  for (std::int64_t c = 0; c < c_dim; ++c) {
    const double* dyr = dy.data() + c * plane;
    const double* xh = cache.xhat.data() + c * plane;
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) {
      sum_dy += dyr[i];
      sum_dy_xhat += dyr[i] * xh[i];
    }
    dgamma[c] += sum_dy_xhat;
    dbeta[c] += sum_dy;
    const double g = gamma[c];
    const double is = cache.inv_std[static_cast<std::size_t>(c)];
    const double mean_dy = sum_dy / static_cast<double>(plane);
    const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(plane);
    double* dxr = dx.data() + c * plane;
    for (std::int64_t i = 0; i < plane; ++i)
      dxr[i] = g * is * (dyr[i] - mean_dy - xh[i] * mean_dy_xhat);
  }
  return dx;
}

// ---------------------------------------------------------------- relu

inline void relu_inplace(Tensor& x) {
  for (std::int64_t i = 0; i < x.size(); ++i)
    if (x[i] < 0.0) x[i] = 0.0;
}

// dy masked by the cached output (y > 0).
inline Tensor relu_backward(const Tensor& dy, const Tensor& y) {
  Tensor dx(dy.shape());
  for (std::int64_t i = 0; i < dy.size(); ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

// ---------------------------------------------------------------- sgd

// SGD with classical momentum and decoupled-from-nothing L2 weight decay:
//   v <- momentum * v + (g + weight_decay * theta);  theta <- theta - lr * v
class SgdOptimizer {
 public:
  SgdOptimizer(const ParamSet& params, double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      velocity_.emplace_back(params[i].value.shape());
  }

  void step(ParamSet& params, const GradBuffer& grads, double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& theta = params[i].value;
      Tensor& vel = velocity_[i];
      const Tensor& g = grads.grads[i];
      for (std::int64_t j = 0; j < theta.size(); ++j) {
        vel[j] = momentum_ * vel[j] + g[j] + weight_decay_ * theta[j];
        theta[j] -= lr * vel[j];
      }
    }
  }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

}  // namespace partkd
