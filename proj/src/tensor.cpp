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

#include "malip/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace malip {

namespace autograd {

namespace {
bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool enabled) { g_grad_enabled = enabled; }

}  // namespace autograd

namespace {
bool g_debug_checks = false;
}

void set_debug_checks(bool enabled) { g_debug_checks = enabled; }
bool debug_checks() { return g_debug_checks; }

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
    check_arg(numel_of(shape) == static_cast<int64_t>(data.size()),
              "tensor: shape " + shape_str(shape) + " does not match data length " +
                  std::to_string(data.size()));
    impl_ = std::make_shared<TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = static_cast<size_t>(numel_of(shape));
    return Tensor(std::move(shape), std::vector<float>(n, 0.0f), requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    auto n = static_cast<size_t>(numel_of(shape));
    return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<float>{value}, requires_grad);
}

Tensor& Tensor::set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    return *this;
}

float* Tensor::grad_data() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
    return impl_->grad.data();
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
}

double Tensor::item() const {
    check_arg(numel() == 1, "item(): tensor has " + std::to_string(numel()) + " elements");
    return impl_->has_precise ? impl_->precise : static_cast<double>(impl_->data[0]);
}

void Tensor::backward() {
    check_arg(numel() == 1, "backward(): root must be a scalar, got " + shape_str(shape()));

    // Topological order over the tape (iterative DFS, post-order).
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* t;
        size_t next_child;
    };
    std::vector<Frame> stack;
    if (impl_->node) {
        stack.push_back({impl_.get(), 0});
        visited.insert(impl_.get());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        auto& node = f.t->node;
        bool descended = false;
        while (node && f.next_child < node->inputs.size()) {
            TensorImpl* child = node->inputs[f.next_child].impl();
            ++f.next_child;
            if (child->node && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
                descended = true;
                break;
            }
        }
        if (!descended && (!node || f.next_child >= node->inputs.size())) {
            order.push_back(f.t);
            stack.pop_back();
        }
    }

    grad_data()[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* t = *it;
        if (t->node && t->node->backward) t->node->backward();
    }
}

bool all_finite(const Tensor& t) {
    for (float v : t.values())
        if (!std::isfinite(v)) return false;
    for (float v : t.grad())
        if (!std::isfinite(v)) return false;
    return true;
}

void check_finite(const Tensor& t, const std::string& what) {
    if (!all_finite(t))
        fail("non-finite values in tensor '" + (t.name().empty() ? what : t.name()) + "'");
}

}  // namespace malip
