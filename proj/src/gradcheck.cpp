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

#include "malip/gradcheck.hpp"

#include <cmath>

namespace malip {

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& targets,
                  const GradCheckOptions& opts) {
    check_arg(opts.eps >= 1e-5 && opts.eps <= 1e-2, "grad_check: eps outside [1e-5, 1e-2]");

    for (const Tensor& t : targets) {
        check_arg(t.defined() && t.requires_grad(), "grad_check: target without requires_grad");
        const_cast<Tensor&>(t).zero_grad();
    }

    Tensor loss = f();
    check_arg(loss.numel() == 1, "grad_check: f must return a scalar");
    if (!std::isfinite(loss.item())) fail("grad_check: non-finite loss");
    loss.backward();

    std::vector<std::vector<float>> analytic;
    analytic.reserve(targets.size());
    for (const Tensor& t : targets) {
        if (t.has_grad())
            analytic.push_back(t.grad());
        else
            analytic.emplace_back(static_cast<size_t>(t.numel()), 0.0f);
        if (!all_finite(t)) fail("grad_check: non-finite gradient for '" + t.name() + "'");
    }

    double base = loss.item();
    Rng rng(opts.seed);
    double worst = 0.0;
    autograd::NoGradGuard no_grad;
    for (size_t ti = 0; ti < targets.size(); ++ti) {
        Tensor t = targets[ti];
        int64_t n = t.numel();
        bool exhaustive = opts.samples_per_tensor <= 0 || opts.samples_per_tensor >= n;
        int64_t wanted = exhaustive ? n : opts.samples_per_tensor;
        int64_t max_attempts = opts.smooth_tol > 0 ? 8 * wanted : wanted;
        float* data = t.data();
        int64_t collected = 0;
        for (int64_t attempt = 0; attempt < max_attempts && collected < wanted; ++attempt) {
            int64_t c = exhaustive ? attempt % n : rng.uniform_int(0, n - 1);
            float saved = data[c];
            data[c] = static_cast<float>(saved + opts.eps);
            double plus = f().item();
            data[c] = static_cast<float>(saved - opts.eps);
            double minus = f().item();
            data[c] = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus))
                fail("grad_check: non-finite value while probing '" + t.name() + "'");
            double fd = (plus - minus) / (2.0 * opts.eps);
            if (opts.smooth_tol > 0) {
                double slope_p = (plus - base) / opts.eps;
                double slope_m = (base - minus) / opts.eps;
                if (std::abs(slope_p - slope_m) > opts.smooth_tol * std::max(1.0, std::abs(fd)))
                    continue;
            }
            ++collected;
            double a = analytic[ti][static_cast<size_t>(c)];
            double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
            worst = std::max(worst, err);
        }
        if (collected * 2 < wanted)
            fail("grad_check: function non-smooth at too many probed coordinates of '" +
                 t.name() + "'");
    }
    return worst;
}

double grad_check(const std::function<Tensor()>& f, const ParameterStore& params,
                  const GradCheckOptions& opts) {
    std::vector<Tensor> targets;
    targets.reserve(params.size());
    for (const auto& name : params.names()) targets.push_back(params.get(name));
    return grad_check(f, targets, opts);
}

}  // namespace malip
