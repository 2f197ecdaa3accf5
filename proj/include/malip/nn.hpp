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

#include <string>
#include <vector>

#include "malip/ops.hpp"
#include "malip/params.hpp"

namespace malip::nn {

struct LinearLayer {
    Tensor w;  // [out x in]
    Tensor b;  // [out], undefined when bias-free
};

LinearLayer make_linear(ParameterStore& store, const std::string& prefix, int64_t in, int64_t out,
                        Rng& rng, bool bias = true);

inline Tensor apply(const LinearLayer& l, const Tensor& x) { return ops::linear(x, l.w, l.b); }

struct ConvLayer {
    Tensor w;  // [cout x cin x k...]
    Tensor b;  // [cout]
    std::vector<int64_t> stride, pad;
};

ConvLayer make_conv(ParameterStore& store, const std::string& prefix, int64_t cout, int64_t cin,
                    std::vector<int64_t> kernel, std::vector<int64_t> stride,
                    std::vector<int64_t> pad, Rng& rng);

inline Tensor apply(const ConvLayer& c, const Tensor& x) {
    return ops::conv_nd(x, c.w, c.b, c.stride, c.pad);
}

/// Gated recurrent unit parameters; gate order along the 3H axis is
/// reset, update, candidate.
struct GruParams {
    Tensor w_ih;  // [3H x I]
    Tensor w_hh;  // [3H x H]
    Tensor b_ih;  // [3H]
    Tensor b_hh;  // [3H]
    int64_t hidden = 0;
};

GruParams make_gru(ParameterStore& store, const std::string& prefix, int64_t in, int64_t hidden,
                   Rng& rng);

/// One GRU step: x [B x I], h [B x H] -> new hidden state [B x H].
///   r = sigmoid(Wr x + Ur h + br), z = sigmoid(Wz x + Uz h + bz)
///   n = tanh(Wn x + r * (Un h + bn)), h' = (1-z)*n + z*h
Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p);

/// Per-channel batch normalization over a rank-5 [B x C x T x H x W] map.
/// Training mode normalizes with batch statistics and maintains running
/// averages (momentum 0.1); eval mode applies the frozen running averages.
class BatchNorm3d {
public:
    BatchNorm3d() = default;
    BatchNorm3d(ParameterStore& store, const std::string& prefix, int64_t channels);

    Tensor forward(const Tensor& x, bool training) const;

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

private:
    Tensor gamma_, beta_;              // trainable, [C]
    Tensor running_mean_, running_var_;  // buffers, [C]
    int64_t channels_ = 0;
};

}  // namespace malip::nn
