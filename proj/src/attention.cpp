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

#include "malip/attention.hpp"

namespace malip {

namespace {

Tensor detached(const Tensor& t) { return Tensor(t.shape(), t.values()); }

}  // namespace

void check_attention_range(const Tensor& map, const std::string& what) {
    for (float v : map.values())
        if (!(v > 0.0f && v < 1.0f))
            fail("attention weight outside (0,1) in " + what + ": " + std::to_string(v));
}

Tensor flatten_to_sequence(const Tensor& x) {
    check_arg(x.rank() == 5, "flatten_to_sequence: expected rank-5, got " + shape_str(x.shape()));
    int64_t b = x.size(0), c = x.size(1), t = x.size(2), h = x.size(3), w = x.size(4);
    return ops::reshape(ops::permute(x, {0, 2, 1, 3, 4}), {b, t, c * h * w});
}

// ---- ChannelAttention ----

ChannelAttention::ChannelAttention(ParameterStore& store, const std::string& prefix,
                                   int64_t channels, int64_t ratio, Rng& rng)
    : channels_(channels) {
    check_arg(channels >= 1, "channel attention: need at least one channel");
    check_arg(ratio >= 1, "channel attention: ratio must be positive");
    int64_t reduced = std::max<int64_t>(1, channels / ratio);
    reduce_ = nn::make_conv(store, prefix + ".reduce", reduced, channels, {1, 1, 1}, {1, 1, 1},
                            {0, 0, 0}, rng);
    restore_ = nn::make_conv(store, prefix + ".restore", channels, reduced, {1, 1, 1}, {1, 1, 1},
                             {0, 0, 0}, rng);
}

Tensor ChannelAttention::forward(const Tensor& x, Tensor* weights_out) const {
    check_arg(x.rank() == 5, "channel attention: expected rank-5, got " + shape_str(x.shape()));
    check_arg(x.size(1) == channels_, "channel attention: built for " + std::to_string(channels_) +
                                          " channels, got " + std::to_string(x.size(1)));
    std::vector<int64_t> global{x.size(2), x.size(3), x.size(4)};
    Tensor fmax = ops::pool_nd(x, ops::PoolMode::Max, global, global);
    Tensor favg = ops::pool_nd(x, ops::PoolMode::Avg, global, global);
    auto mlp = [this](const Tensor& d) {
        return nn::apply(restore_, ops::relu(nn::apply(reduce_, d)));
    };
    Tensor weights = ops::sigmoid(ops::add(mlp(fmax), mlp(favg)));  // B x C x 1 x 1 x 1
    if (weights_out) *weights_out = detached(ops::reshape(weights, {x.size(0), channels_}));
    return ops::mul(weights, x);
}

// ---- JointSTAttention ----

JointSTAttention::JointSTAttention(ParameterStore& store, const std::string& prefix, Rng& rng) {
    fuse_ = nn::make_conv(store, prefix + ".fuse", 1, 2, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
}

Tensor JointSTAttention::forward(const Tensor& x, Tensor* map_out) const {
    check_arg(x.rank() == 5, "joint attention: expected rank-5, got " + shape_str(x.shape()));
    Tensor cmax = ops::reduce_max(x, 1, true);        // B x 1 x T x H x W
    Tensor cavg = ops::reduce_mean(x, {1}, true);
    Tensor fused = nn::apply(fuse_, ops::concat({cmax, cavg}, 1));
    Tensor map = ops::sigmoid(fused);                 // B x 1 x T x H x W
    if (map_out) *map_out = detached(map);
    return ops::mul(map, x);
}

// ---- SeparateSTAttention ----

SeparateSTAttention::SeparateSTAttention(ParameterStore& store, const std::string& prefix,
                                         const AttentionConfig& cfg, Rng& rng)
    : n_(cfg.n_subbranches) {
    check_arg(n_ >= 1, "separate attention: need at least one sub-branch");
    int64_t feat = cfg.channels * cfg.height * cfg.width;
    for (int64_t i = 0; i < n_; ++i) {
        std::string tag = prefix + ".b" + std::to_string(i);
        spatial_.push_back(
            nn::make_conv(store, tag + ".spatial", 1, cfg.channels, {3, 3}, {1, 1}, {1, 1}, rng));
        temporal_.push_back(nn::make_conv(store, tag + ".temporal", 1, feat, {3}, {1}, {1}, rng));
    }
}

Tensor SeparateSTAttention::forward(const Tensor& x, std::vector<Tensor>* spatial_out,
                                    std::vector<Tensor>* temporal_out) const {
    check_arg(x.rank() == 5, "separate attention: expected rank-5, got " + shape_str(x.shape()));
    int64_t b = x.size(0), c = x.size(1), t = x.size(2), h = x.size(3), w = x.size(4);
    int64_t feat = c * h * w;

    Tensor xs = ops::reshape(ops::permute(x, {0, 2, 1, 3, 4}), {b * t, c, h, w});
    Tensor xt = ops::reshape(ops::permute(x, {0, 1, 3, 4, 2}), {b, feat, t});

    Tensor out;
    for (int64_t i = 0; i < n_; ++i) {
        Tensor a_s = ops::sigmoid(nn::apply(spatial_[static_cast<size_t>(i)], xs));  // (B*T) x 1 x H x W
        Tensor a_t = ops::sigmoid(nn::apply(temporal_[static_cast<size_t>(i)], xt)); // B x 1 x T
        if (spatial_out) spatial_out->push_back(detached(a_s));
        if (temporal_out) temporal_out->push_back(detached(a_t));

        Tensor z_s = ops::reshape(ops::mul(a_s, xs), {b, t, feat});
        Tensor z_t = ops::permute(ops::mul(a_t, xt), {0, 2, 1});  // B x T x feat
        Tensor unit = ops::l2_normalize_lastdim(ops::add(z_s, z_t), 1e-12);
        out = out.defined() ? ops::add(out, unit) : unit;
    }
    return out;
}

// ---- AttentionStack ----

AttentionStack::AttentionStack(ParameterStore& store, const AttentionConfig& cfg, Rng& rng)
    : cfg_(cfg) {
    ca_ = ChannelAttention(store, "attention.ca", cfg.channels, cfg.reduction_ratio, rng);
    jsta_ = JointSTAttention(store, "attention.jsta", rng);
    ssta_ = SeparateSTAttention(store, "attention.ssta", cfg, rng);
}

Tensor AttentionStack::apply_all(const Tensor& x, const Ablation& ablation,
                                 AttentionTrace* trace) const {
    Tensor cur = x;
    if (ablation.ca) cur = ca_.forward(cur, trace ? &trace->channel_weights : nullptr);
    if (ablation.jsta) cur = jsta_.forward(cur, trace ? &trace->joint_map : nullptr);
    Tensor out = ablation.ssta
                     ? ssta_.forward(cur, trace ? &trace->spatial_maps : nullptr,
                                     trace ? &trace->temporal_maps : nullptr)
                     : flatten_to_sequence(cur);
    if (trace) {
        if (trace->channel_weights.defined())
            check_attention_range(trace->channel_weights, "channel attention");
        if (trace->joint_map.defined()) check_attention_range(trace->joint_map, "joint attention");
        for (const Tensor& m : trace->spatial_maps) check_attention_range(m, "spatial attention");
        for (const Tensor& m : trace->temporal_maps) check_attention_range(m, "temporal attention");
    }
    return out;
}

}  // namespace malip
