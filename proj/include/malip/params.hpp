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
#include <unordered_map>
#include <vector>

#include "malip/rng.hpp"
#include "malip/tensor.hpp"

namespace malip {

/// Registry of trainable tensors keyed by hierarchical name. Iteration
/// follows registration order, which is fixed by model construction and
/// therefore stable across runs.
class ParameterStore {
public:
    /// Registers a zero tensor with requires_grad=true. Name must be new.
    Tensor add(const std::string& name, Shape shape);

    /// Registers with uniform init in +/- sqrt(1/fan_in).
    Tensor add_uniform(const std::string& name, Shape shape, int64_t fan_in, Rng& rng);

    /// Registers a non-trainable buffer (checkpointed, skipped by optimizers).
    Tensor add_buffer(const std::string& name, Shape shape, float fill = 0.0f);

    Tensor get(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<std::string>& names() const { return names_; }
    size_t size() const { return names_.size(); }

    void zero_grads();

    /// First tensor (by registration order) holding a NaN/Inf value or
    /// gradient; empty string when everything is finite.
    std::string first_non_finite() const;

    /// Total number of scalar parameters.
    int64_t scalar_count() const;

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, Tensor> entries_;
};

/// Binary checkpoint: magic "MALPCKPT", version u32 LE, entry count u32 LE,
/// then per entry: name length u32 LE, UTF-8 name, rank u32 LE, extents
/// (u32 LE each), raw float32 LE values. Round-trips bit-exactly.
void save_checkpoint(const ParameterStore& params, const std::string& path);

/// Loads values into already-registered tensors; names and shapes must match.
void load_checkpoint(ParameterStore& params, const std::string& path);

}  // namespace malip
