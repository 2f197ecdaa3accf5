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
#include <memory>
#include <string>
#include <vector>

#include "malip/common.hpp"

namespace malip {

class Tensor;

namespace autograd {

/// One recorded operation in the reverse-mode tape. `backward` reads the
/// output's gradient and accumulates into the inputs' gradients.
struct Node {
    const char* op = "";
    std::vector<Tensor> inputs;
    std::function<void()> backward;
};

bool grad_enabled();
void set_grad_enabled(bool enabled);

/// RAII scope that disables graph recording (inference, probing).
class NoGradGuard {
public:
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

}  // namespace autograd

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
    std::shared_ptr<autograd::Node> node;  // null for leaves
    std::string name;                      // set for registered parameters
    // 64-bit value for single-element results of reductions, so loss values
    // are reported at accumulation precision. Storage stays float32.
    double precise = 0.0;
    bool has_precise = false;
};

/// Dense row-major float32 tensor; cheap shared handle. All arithmetic lives
/// in ops.hpp and records the tape needed for backward().
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int64_t size(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    float* data() { return impl_->data.data(); }
    const float* data() const { return impl_->data.data(); }
    std::vector<float>& values() { return impl_->data; }
    const std::vector<float>& values() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool rg);

    bool has_grad() const { return !impl_->grad.empty(); }
    /// Gradient buffer, allocated (zeroed) on first use.
    float* grad_data();
    const std::vector<float>& grad() const { return impl_->grad; }
    void zero_grad();

    /// Scalar fetch; tensor must hold exactly one element. Reduction results
    /// report their 64-bit accumulated value.
    double item() const;

    void set_precise(double v) {
        impl_->precise = v;
        impl_->has_precise = true;
    }
    bool has_precise() const { return impl_->has_precise; }
    /// The 64-bit value when tracked, else the stored float.
    double precise_or_value() const {
        return impl_->has_precise ? impl_->precise : static_cast<double>(impl_->data[0]);
    }

    /// Reverse-mode pass from this scalar through the recorded tape.
    void backward();

    const std::string& name() const { return impl_->name; }
    void set_name(std::string name) { impl_->name = std::move(name); }

    TensorImpl* impl() const { return impl_.get(); }
    void set_node(std::shared_ptr<autograd::Node> node) { impl_->node = std::move(node); }

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// True when every value (and gradient, if present) is finite.
bool all_finite(const Tensor& t);

/// Throws naming `what` if the tensor holds NaN/Inf values.
void check_finite(const Tensor& t, const std::string& what);

/// Per-op finite validation toggle (on in tests, off in training loops).
void set_debug_checks(bool enabled);
bool debug_checks();

}  // namespace malip
