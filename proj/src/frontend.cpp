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

#include "malip/frontend.hpp"

namespace malip {

Frontend::Frontend(ParameterStore& store, const FrontendConfig& cfg, Rng& rng) : cfg_(cfg) {
    check_arg(cfg.channels.size() == 3, "frontend: expected three channel widths");
    conv1_ = nn::make_conv(store, "frontend.conv1", cfg.channels[0], cfg.in_channels, {3, 5, 5},
                           {1, 1, 1}, {1, 2, 2}, rng);
    bn1_ = nn::BatchNorm3d(store, "frontend.bn1", cfg.channels[0]);
    conv2_ = nn::make_conv(store, "frontend.conv2", cfg.channels[1], cfg.channels[0], {3, 5, 5},
                           {1, 1, 1}, {1, 2, 2}, rng);
    bn2_ = nn::BatchNorm3d(store, "frontend.bn2", cfg.channels[1]);
    conv3_ = nn::make_conv(store, "frontend.conv3", cfg.channels[2], cfg.channels[1], {3, 3, 3},
                           {1, 1, 1}, {1, 1, 1}, rng);
    bn3_ = nn::BatchNorm3d(store, "frontend.bn3", cfg.channels[2]);
}

Tensor Frontend::forward(const Tensor& clip, bool training) const {
    check_arg(clip.rank() == 5, "frontend: expected rank-5 clip, got " + shape_str(clip.shape()));
    check_arg(clip.size(1) == cfg_.in_channels,
              "frontend: clip has " + std::to_string(clip.size(1)) + " channels, expected " +
                  std::to_string(cfg_.in_channels));
    check_arg(clip.size(3) % kSpatialReduction == 0 && clip.size(4) % kSpatialReduction == 0 &&
                  clip.size(3) >= kSpatialReduction && clip.size(4) >= kSpatialReduction,
              "frontend: spatial extents " + std::to_string(clip.size(3)) + "x" +
                  std::to_string(clip.size(4)) + " too small for three spatial halvings");

    const std::vector<int64_t> pool_win{1, 2, 2};
    Tensor x = ops::relu(bn1_.forward(nn::apply(conv1_, clip), training));
    x = ops::pool_nd(x, ops::PoolMode::Max, pool_win, pool_win);
    x = ops::relu(bn2_.forward(nn::apply(conv2_, x), training));
    x = ops::pool_nd(x, ops::PoolMode::Max, pool_win, pool_win);
    x = ops::relu(bn3_.forward(nn::apply(conv3_, x), training));
    x = ops::pool_nd(x, ops::PoolMode::Max, pool_win, pool_win);
    return x;
}

}  // namespace malip
