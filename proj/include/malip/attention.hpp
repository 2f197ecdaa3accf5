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

#include "malip/nn.hpp"

namespace malip {

struct AttentionConfig {
    int64_t reduction_ratio = 16;  // channel bottleneck; reduced width max(1, C/r)
    int64_t n_subbranches = 3;
    // Feature-map extents the stack is built for.
    int64_t channels = 0;
    int64_t height = 0;
    int64_t width = 0;
};

/// Which purification stages to apply; a disabled stage is an identity
/// pass-through.
struct Ablation {
    bool ca = true;
    bool jsta = true;
    bool ssta = true;
};

/// Attention weights captured during a forward pass, for export and for
/// asserting the sigmoid-range invariant. Values are detached copies.
struct AttentionTrace {
    Tensor channel_weights;             // B x C
    Tensor joint_map;                   // B x 1 x T x H x W
    std::vector<Tensor> spatial_maps;   // per sub-branch, (B*T) x 1 x H x W
    std::vector<Tensor> temporal_maps;  // per sub-branch, B x 1 x T
};

/// Channel gating from globally pooled descriptors: max- and avg-pooled
/// channel vectors pass the same bottleneck MLP (two 1x1x1 convs with a ReLU
/// between), their sum gates the input channels after a sigmoid.
class ChannelAttention {
public:
    ChannelAttention() = default;
    ChannelAttention(ParameterStore& store, const std::string& prefix, int64_t channels,
                     int64_t ratio, Rng& rng);

    Tensor forward(const Tensor& x, Tensor* weights_out = nullptr) const;

private:
    nn::ConvLayer reduce_, restore_;
    int64_t channels_ = 0;
};

/// One coarse sigmoid map over all (t,h,w) positions, fused from the
/// channel-wise max and mean by a 1x1x1 conv.
class JointSTAttention {
public:
    JointSTAttention() = default;
    JointSTAttention(ParameterStore& store, const std::string& prefix, Rng& rng);

    Tensor forward(const Tensor& x, Tensor* map_out = nullptr) const;

private:
    nn::ConvLayer fuse_;
};

/// N parallel pairs of per-frame spatial maps (3x3 2D convs) and per-video
/// temporal weights (kernel-3 1D convs). Each pair's attended features are
/// summed and L2-normalized per (batch, time) feature vector, then the N
/// unit vectors are summed.
class SeparateSTAttention {
public:
    SeparateSTAttention() = default;
    SeparateSTAttention(ParameterStore& store, const std::string& prefix, const AttentionConfig& cfg,
                        Rng& rng);

    /// x: [B x C x T x H x W] -> [B x T x (C*H*W)].
    Tensor forward(const Tensor& x, std::vector<Tensor>* spatial_out = nullptr,
                   std::vector<Tensor>* temporal_out = nullptr) const;

private:
    std::vector<nn::ConvLayer> spatial_, temporal_;
    int64_t n_ = 0;
};

/// The full CA -> JSTA -> SSTA chain. With every stage ablated the input is
/// just rearranged to [B x T x (C*H*W)].
class AttentionStack {
public:
    AttentionStack() = default;
    AttentionStack(ParameterStore& store, const AttentionConfig& cfg, Rng& rng);

    Tensor apply_all(const Tensor& x, const Ablation& ablation,
                     AttentionTrace* trace = nullptr) const;

    const ChannelAttention& ca() const { return ca_; }
    const JointSTAttention& jsta() const { return jsta_; }
    const SeparateSTAttention& ssta() const { return ssta_; }

private:
    AttentionConfig cfg_;
    ChannelAttention ca_;
    JointSTAttention jsta_;
    SeparateSTAttention ssta_;
};

/// [B x C x T x H x W] -> [B x T x (C*H*W)] with (c,h,w) flattened row-major.
Tensor flatten_to_sequence(const Tensor& x);

/// Throws unless every value lies strictly inside (0,1).
void check_attention_range(const Tensor& map, const std::string& what);

}  // namespace malip
