// Copyright 2026 The ambibin Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <vector>

#include "ambibin/dsp.hpp"
#include "ambibin/tensor.hpp"

namespace ambibin::ad {

/// Eager tape. Every op computes its value immediately and records a
/// backward closure; backward() replays the tape in reverse. Values are
/// addressed by index so the node vector may reallocate freely.
class Graph {
 public:
  struct V {
    int32_t i = -1;
    bool valid() const { return i >= 0; }
  };

  V input(Tensor t, bool requires_grad = false);

  const Tensor& val(V v) const { return nodes_[v.i].value; }
  bool requires_grad(V v) const { return nodes_[v.i].requires; }

  /// Gradient of the last backward() target w.r.t. node v. Zero tensor if
  /// nothing flowed there.
  Tensor grad_of(V v) const;

  void backward(V scalar_loss);

  size_t node_count() const { return nodes_.size(); }

  // --- low-level interface used by the op builders ---
  using BackFn = std::function<void(Graph&, int32_t out)>;
  V emit(Tensor value, const std::vector<V>& parents, BackFn back);
  Tensor& grad_buffer(int32_t i);
  bool grad_present(int32_t i) const { return nodes_[i].grad_alloc; }
  const Tensor& grad_at(int32_t i) const { return nodes_[i].grad; }
  const Tensor& value_at(int32_t i) const { return nodes_[i].value; }
  bool node_requires(int32_t i) const { return nodes_[i].requires; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires = false;
    bool grad_alloc = false;
    std::vector<int32_t> parents;
    BackFn back;
  };
  std::vector<Node> nodes_;
};

using V = Graph::V;

// Elementwise / scalar
V add(Graph& g, V a, V b);
V sub(Graph& g, V a, V b);
V mul(Graph& g, V a, V b);
V scale(Graph& g, V a, double c);
V add_scalar(Graph& g, V a, double c);
V square(Graph& g, V a);
V abs_val(Graph& g, V a);           // subgradient 0 at 0
V hypot_val(Graph& g, V a, V b);    // sqrt(a^2 + b^2), subgradient 0 at origin
V sigmoid(Graph& g, V a);
V tanh_val(Graph& g, V a);
V leaky_relu(Graph& g, V a, double negative_slope);
V rsqrt_shifted(Graph& g, V a, double eps);  // 1 / sqrt(a + eps)

// Structure
V reshape(Graph& g, V a, std::vector<int64_t> shape);
V slice(Graph& g, V a, int axis, int64_t start, int64_t len);
V concat(Graph& g, const std::vector<V>& xs, int axis);
V flip_axis0(Graph& g, V a);

// Reductions
V mean_all(Graph& g, V a);  // -> shape {1}

// Dense algebra
V matmul(Graph& g, V a, V b);                 // [M,K] x [K,N]
V affine(Graph& g, V x, V w, V b);            // x[M,K] * w[K,N] + row-broadcast b[N]

// Spectral (linear maps with exact adjoints)
V stft_op(Graph& g, V x, const StftConfig& cfg);                    // [C,L] -> [C,2,T,F]
V istft_op(Graph& g, V y, const StftConfig& cfg, int64_t out_len);  // [C,2,T,F] -> [C,L]

// Convolutional
V conv2d(Graph& g, V x, V w, V b, int pad);             // x[N,C,H,W], w[F,C,k,k], stride 1
V conv_transpose2d(Graph& g, V x, V w, V b, int s);     // w[C,F,s,s], kernel = stride = s
V avg_pool2d(Graph& g, V x, int s);

struct BatchNormOut {
  V y;
  Tensor batch_mean;  // per channel
  Tensor batch_var;   // biased, per channel
};
BatchNormOut batchnorm_train(Graph& g, V x, V gamma, V beta, double eps);
V batchnorm_infer(Graph& g, V x, V gamma, V beta, const Tensor& running_mean,
                  const Tensor& running_var, double eps);

}  // namespace ambibin::ad
