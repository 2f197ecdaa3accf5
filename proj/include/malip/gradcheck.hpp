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

#include <functional>
#include <vector>

#include "malip/params.hpp"
#include "malip/rng.hpp"
#include "malip/tensor.hpp"

namespace malip {

struct GradCheckOptions {
    double eps = 1e-3;
    /// Coordinates probed per tensor; <=0 probes every coordinate.
    int64_t samples_per_tensor = 8;
    uint64_t seed = 17;
    /// When positive, coordinates whose one-sided difference quotients
    /// disagree by more than smooth_tol * max(1, |fd|) are treated as
    /// non-smooth inside the probe interval (a relu kink or pooling argmax
    /// switch straddles it, where the central difference is not a valid
    /// derivative estimate) and are resampled. The test fails if fewer than
    /// half the requested probes land on smooth coordinates.
    double smooth_tol = 0.0;
};

/// Central-difference check of the reverse-mode gradients of `f` (a
/// deterministic scalar computation) with respect to `targets`. Returns the
/// max over probed coordinates of
///   |analytic - (f(x+eps) - f(x-eps)) / (2 eps)| / max(1, |analytic|).
/// Throws if any probe produces a non-finite value.
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& targets,
                  const GradCheckOptions& opts = {});

/// Convenience overload probing every entry of a ParameterStore.
double grad_check(const std::function<Tensor()>& f, const ParameterStore& params,
                  const GradCheckOptions& opts = {});

}  // namespace malip
