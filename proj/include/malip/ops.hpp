// Copyright 2026 The malipnet Authors
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

#include <vector>

#include "malip/tensor.hpp"

namespace malip::ops {

// ---- elementwise, with numpy-style broadcasting for the binary ops ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor sigmoid(const Tensor& x);  // output clamped strictly inside (0,1)
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
/// scale * x + shift, elementwise.
Tensor affine(const Tensor& x, float scale, float shift);
/// 1 / sqrt(x + eps), elementwise.
Tensor rsqrt_shift(const Tensor& x, double eps);
/// Rows normalized to unit L2 norm over the last axis; norms and the
/// backward pass run in 64-bit, with eps under the square root.
Tensor l2_normalize_lastdim(const Tensor& x, double eps);

// ---- shape manipulation (all materialize a contiguous copy) ----

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor narrow(const Tensor& x, int axis, int64_t start, int64_t len);

// ---- reductions (accumulate in 64-bit) ----

Tensor reduce_sum(const Tensor& x, std::vector<int> axes, bool keepdim);
Tensor reduce_mean(const Tensor& x, std::vector<int> axes, bool keepdim);
/// Max over one axis; backward routes to the first max index in row-major
/// order.
Tensor reduce_max(const Tensor& x, int axis, bool keepdim);
Tensor sum_all(const Tensor& x);  // -> shape {1}

// ---- linear algebra ----

/// x: [R x In], w: [Out x In], b: [Out] or undefined. Returns [R x Out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- convolution / pooling ----

/// N-d convolution, N in {1,2,3} inferred from the weight rank.
/// x: [B x Cin x S1..SN], w: [Cout x Cin x K1..KN], b: [Cout] or undefined.
/// Zero padding; output extent = floor((in + 2*pad - kernel)/stride) + 1.
Tensor conv_nd(const Tensor& x, const Tensor& w, const Tensor& b,
               const std::vector<int64_t>& stride, const std::vector<int64_t>& padding);

enum class PoolMode { Max, Avg };

/// Pooling over the trailing spatial axes of [B x C x S1..SN].
/// Max backward routes to the argmax (first-wins); avg spreads uniformly.
Tensor pool_nd(const Tensor& x, PoolMode mode, const std::vector<int64_t>& window,
               const std::vector<int64_t>& stride);

// ---- probability ----

/// Softmax over the last axis; every entry strictly positive.
Tensor softmax_lastdim(const Tensor& x);

/// Sum over rows of -log(probs[r, target[r]]), skipping rows whose target is
/// `ignore_id`. probs: [R x V]. Returns a scalar.
Tensor nll_from_probs(const Tensor& probs, const std::vector<int64_t>& targets,
                      int64_t ignore_id);

// ---- normalization ----

/// Per-channel batch statistics of the training-mode normalization.
struct BatchNormStats {
    std::vector<double> mean, var;  // biased variance
};

/// Training-mode batch normalization over axis 1 of [B x C x ...]:
/// y = gamma * (x - mean_c) / sqrt(var_c + eps) + beta. Statistics and the
/// backward pass run in 64-bit.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        BatchNormStats* stats_out = nullptr);

/// Row lookup: table [V x E], ids of length R -> [R x E].
Tensor embedding(const Tensor& table, const std::vector<int64_t>& ids);

}  // namespace malip::ops
