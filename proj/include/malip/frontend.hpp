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

#include "malip/nn.hpp"

namespace malip {

struct FrontendConfig {
    /// Output channels of the three conv blocks.
    std::vector<int64_t> channels{32, 64, 96};
    int64_t in_channels = 3;
};

/// Three-layer 3D-CNN video front-end: blocks of conv3d -> BN -> ReLU ->
/// spatial max-pool. Kernels 3x5x5 / 3x5x5 / 3x3x3, all stride 1 with
/// same-size padding, pools (1,2,2). The temporal extent is preserved and
/// each spatial extent is halved per block, so [B x 3 x T x H x W] maps to
/// [B x C x T x H/8 x W/8].
class Frontend {
public:
    Frontend() = default;
    Frontend(ParameterStore& store, const FrontendConfig& cfg, Rng& rng);

    Tensor forward(const Tensor& clip, bool training) const;

    int64_t out_channels() const { return cfg_.channels.back(); }
    static constexpr int64_t kSpatialReduction = 8;

private:
    FrontendConfig cfg_;
    nn::ConvLayer conv1_, conv2_, conv3_;
    nn::BatchNorm3d bn1_, bn2_, bn3_;
};

}  // namespace malip
