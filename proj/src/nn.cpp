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

#include "malip/nn.hpp"

namespace malip::nn {

LinearLayer make_linear(ParameterStore& store, const std::string& prefix, int64_t in, int64_t out,
                        Rng& rng, bool bias) {
    LinearLayer l;
    l.w = store.add_uniform(prefix + ".weight", {out, in}, in, rng);
    if (bias) l.b = store.add(prefix + ".bias", {out});
    return l;
}

ConvLayer make_conv(ParameterStore& store, const std::string& prefix, int64_t cout, int64_t cin,
                    std::vector<int64_t> kernel, std::vector<int64_t> stride,
                    std::vector<int64_t> pad, Rng& rng) {
    ConvLayer c;
    Shape wshape{cout, cin};
    int64_t fan_in = cin;
    for (int64_t k : kernel) {
        wshape.push_back(k);
        fan_in *= k;
    }
    c.w = store.add_uniform(prefix + ".weight", wshape, fan_in, rng);
    c.b = store.add(prefix + ".bias", {cout});
    c.stride = std::move(stride);
    c.pad = std::move(pad);
    return c;
}

GruParams make_gru(ParameterStore& store, const std::string& prefix, int64_t in, int64_t hidden,
                   Rng& rng) {
    GruParams p;
    p.w_ih = store.add_uniform(prefix + ".w_ih", {3 * hidden, in}, in, rng);
    p.w_hh = store.add_uniform(prefix + ".w_hh", {3 * hidden, hidden}, hidden, rng);
    p.b_ih = store.add(prefix + ".b_ih", {3 * hidden});
    p.b_hh = store.add(prefix + ".b_hh", {3 * hidden});
    p.hidden = hidden;
    return p;
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p) {
    check_arg(x.rank() == 2 && h.rank() == 2 && x.size(0) == h.size(0),
              "gru_cell: batch extents disagree, " + shape_str(x.shape()) + " vs " +
                  shape_str(h.shape()));
    check_arg(h.size(1) == p.hidden, "gru_cell: hidden size " + std::to_string(h.size(1)) +
                                         " does not match params (" + std::to_string(p.hidden) +
                                         ")");
    int64_t hd = p.hidden;
    Tensor gi = ops::linear(x, p.w_ih, p.b_ih);
    Tensor gh = ops::linear(h, p.w_hh, p.b_hh);
    Tensor r = ops::sigmoid(ops::add(ops::narrow(gi, 1, 0, hd), ops::narrow(gh, 1, 0, hd)));
    Tensor z = ops::sigmoid(ops::add(ops::narrow(gi, 1, hd, hd), ops::narrow(gh, 1, hd, hd)));
    Tensor n = ops::tanh(
        ops::add(ops::narrow(gi, 1, 2 * hd, hd), ops::mul(r, ops::narrow(gh, 1, 2 * hd, hd))));
    return ops::add(ops::mul(ops::affine(z, -1.0f, 1.0f), n), ops::mul(z, h));
}

BatchNorm3d::BatchNorm3d(ParameterStore& store, const std::string& prefix, int64_t channels)
    : channels_(channels) {
    gamma_ = store.add(prefix + ".gamma", {channels});
    float* g = gamma_.data();
    for (int64_t i = 0; i < channels; ++i) g[i] = 1.0f;
    beta_ = store.add(prefix + ".beta", {channels});
    running_mean_ = store.add_buffer(prefix + ".running_mean", {channels});
    running_var_ = store.add_buffer(prefix + ".running_var", {channels}, 1.0f);
}

Tensor BatchNorm3d::forward(const Tensor& x, bool training) const {
    check_arg(x.rank() == 5 && x.size(1) == channels_,
              "batchnorm: expected [B x " + std::to_string(channels_) + " x T x H x W], got " +
                  shape_str(x.shape()));
    if (!training) {
        Shape cshape{1, channels_, 1, 1, 1};
        Tensor gamma = ops::reshape(gamma_, cshape);
        Tensor beta = ops::reshape(beta_, cshape);
        Tensor rm = ops::reshape(running_mean_, cshape);
        Tensor inv = ops::reshape(ops::rsqrt_shift(running_var_, kEps), cshape);
        return ops::add(ops::mul(ops::mul(ops::sub(x, rm), inv), gamma), beta);
    }

    ops::BatchNormStats stats;
    Tensor y = ops::batch_norm_train(x, gamma_, beta_, kEps, &stats);

    // Running averages, outside the graph; unbiased variance per channel.
    int64_t n = x.numel() / channels_;
    double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    float* rm = const_cast<Tensor&>(running_mean_).data();
    float* rv = const_cast<Tensor&>(running_var_).data();
    for (int64_t c = 0; c < channels_; ++c) {
        rm[c] = static_cast<float>((1.0 - kMomentum) * rm[c] +
                                   kMomentum * stats.mean[static_cast<size_t>(c)]);
        rv[c] = static_cast<float>((1.0 - kMomentum) * rv[c] +
                                   kMomentum * stats.var[static_cast<size_t>(c)] * unbias);
    }
    return y;
}

}  // namespace malip::nn
