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

#include "malip/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace malip::ops {

namespace {

constexpr float kSigmoidLo = 1.17549435e-38f;  // smallest positive normal
constexpr float kSigmoidHi = 0.99999994f;      // nextafter(1, 0)
constexpr float kProbFloor = 1e-30f;

bool wants_grad(std::initializer_list<const Tensor*> ins) {
    if (!autograd::grad_enabled()) return false;
    for (const Tensor* t : ins)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

void attach(Tensor& out, const char* op, std::vector<Tensor> inputs,
            std::function<void()> backward) {
    out.set_requires_grad(true);
    auto node = std::make_shared<autograd::Node>();
    node->op = op;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    out.set_node(std::move(node));
}

Tensor finish(Tensor out, const char* op) {
    if (debug_checks()) check_finite(out, op);
    return out;
}

// Right-aligned broadcast result shape.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (size_t i = 0; i < rank; ++i) {
        int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        check_arg(da == db || da == 1 || db == 1,
                  std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                      " are not broadcast-compatible");
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `shape` right-aligned into `rank` axes, 0 where the dim is 1.
std::vector<int64_t> bcast_strides(const Shape& shape, size_t rank) {
    Shape padded(rank, 1);
    std::copy(shape.begin(), shape.end(), padded.begin() + (rank - shape.size()));
    Shape st = strides_of(padded);
    std::vector<int64_t> out(rank);
    for (size_t i = 0; i < rank; ++i) out[i] = padded[i] == 1 ? 0 : st[i];
    return out;
}

// Walks every output index of `out_shape`, maintaining two input offsets.
template <typename F>
void for_each_bcast(const Shape& out_shape, const std::vector<int64_t>& sa,
                    const std::vector<int64_t>& sb, F&& f) {
    int rank = static_cast<int>(out_shape.size());
    int64_t n = numel_of(out_shape);
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    int64_t oa = 0, ob = 0;
    for (int64_t o = 0; o < n; ++o) {
        f(o, oa, ob);
        for (int ax = rank - 1; ax >= 0; --ax) {
            ++idx[ax];
            oa += sa[ax];
            ob += sb[ax];
            if (idx[ax] < out_shape[ax]) break;
            oa -= sa[ax] * out_shape[ax];
            ob -= sb[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* op) {
    bool grads = wants_grad({&a, &b});
    const bool same = a.shape() == b.shape();
    Tensor out;

    if (same) {
        int64_t n = a.numel();
        std::vector<float> data(static_cast<size_t>(n));
        const float* pa = a.data();
        const float* pb = b.data();
        switch (kind) {
            case BinKind::Add:
                for (int64_t i = 0; i < n; ++i) data[i] = pa[i] + pb[i];
                break;
            case BinKind::Sub:
                for (int64_t i = 0; i < n; ++i) data[i] = pa[i] - pb[i];
                break;
            case BinKind::Mul:
                for (int64_t i = 0; i < n; ++i) data[i] = pa[i] * pb[i];
                break;
        }
        out = Tensor(a.shape(), std::move(data));
    } else {
        Shape oshape = broadcast_shape(a.shape(), b.shape(), op);
        auto sa = bcast_strides(a.shape(), oshape.size());
        auto sb = bcast_strides(b.shape(), oshape.size());
        std::vector<float> data(static_cast<size_t>(numel_of(oshape)));
        const float* pa = a.data();
        const float* pb = b.data();
        switch (kind) {
            case BinKind::Add:
                for_each_bcast(oshape, sa, sb,
                               [&](int64_t o, int64_t ia, int64_t ib) { data[o] = pa[ia] + pb[ib]; });
                break;
            case BinKind::Sub:
                for_each_bcast(oshape, sa, sb,
                               [&](int64_t o, int64_t ia, int64_t ib) { data[o] = pa[ia] - pb[ib]; });
                break;
            case BinKind::Mul:
                for_each_bcast(oshape, sa, sb,
                               [&](int64_t o, int64_t ia, int64_t ib) { data[o] = pa[ia] * pb[ib]; });
                break;
        }
        out = Tensor(std::move(oshape), std::move(data));
    }

    if (a.numel() == 1 && b.numel() == 1) {
        double pa = a.precise_or_value(), pb = b.precise_or_value();
        out.set_precise(kind == BinKind::Add ? pa + pb
                                             : kind == BinKind::Sub ? pa - pb : pa * pb);
    }

    if (grads) {
        TensorImpl* o = out.impl();
        Tensor ta = a, tb = b;
        attach(out, op, {a, b}, [ta, tb, o, kind, same]() mutable {
            const float* dy = o->grad.data();
            int64_t n = static_cast<int64_t>(o->data.size());
            if (same) {
                if (ta.requires_grad()) {
                    float* ga = ta.grad_data();
                    if (kind == BinKind::Mul) {
                        const float* pb = tb.data();
                        for (int64_t i = 0; i < n; ++i) ga[i] += dy[i] * pb[i];
                    } else {
                        for (int64_t i = 0; i < n; ++i) ga[i] += dy[i];
                    }
                }
                if (tb.requires_grad()) {
                    float* gb = tb.grad_data();
                    if (kind == BinKind::Mul) {
                        const float* pa = ta.data();
                        for (int64_t i = 0; i < n; ++i) gb[i] += dy[i] * pa[i];
                    } else if (kind == BinKind::Sub) {
                        for (int64_t i = 0; i < n; ++i) gb[i] -= dy[i];
                    } else {
                        for (int64_t i = 0; i < n; ++i) gb[i] += dy[i];
                    }
                }
                return;
            }
            // Broadcast case: accumulate reduced gradients in 64-bit.
            const Shape& oshape = o->shape;
            auto sa = bcast_strides(ta.shape(), oshape.size());
            auto sb = bcast_strides(tb.shape(), oshape.size());
            std::vector<double> acc_a, acc_b;
            if (ta.requires_grad()) acc_a.assign(static_cast<size_t>(ta.numel()), 0.0);
            if (tb.requires_grad()) acc_b.assign(static_cast<size_t>(tb.numel()), 0.0);
            const float* pa = ta.data();
            const float* pb = tb.data();
            for_each_bcast(oshape, sa, sb, [&](int64_t oi, int64_t ia, int64_t ib) {
                double g = dy[oi];
                if (!acc_a.empty())
                    acc_a[ia] += kind == BinKind::Mul ? g * pb[ib] : g;
                if (!acc_b.empty()) {
                    if (kind == BinKind::Mul)
                        acc_b[ib] += g * pa[ia];
                    else if (kind == BinKind::Sub)
                        acc_b[ib] -= g;
                    else
                        acc_b[ib] += g;
                }
            });
            if (!acc_a.empty()) {
                float* ga = ta.grad_data();
                for (size_t i = 0; i < acc_a.size(); ++i) ga[i] += static_cast<float>(acc_a[i]);
            }
            if (!acc_b.empty()) {
                float* gb = tb.grad_data();
                for (size_t i = 0; i < acc_b.size(); ++i) gb[i] += static_cast<float>(acc_b[i]);
            }
        });
    }
    return finish(std::move(out), op);
}

// ---- GEMM kernels; float multiplies, block totals promoted to double ----

double block_dot(const float* a, const float* b, int64_t k) {
    constexpr int64_t kBlock = 256;
    double total = 0.0;
    int64_t i = 0;
    while (i < k) {
        int64_t end = std::min(i + kBlock, k);
        float a0 = 0.f, a1 = 0.f, a2 = 0.f, a3 = 0.f;
        int64_t j = i;
        for (; j + 4 <= end; j += 4) {
            a0 += a[j] * b[j];
            a1 += a[j + 1] * b[j + 1];
            a2 += a[j + 2] * b[j + 2];
            a3 += a[j + 3] * b[j + 3];
        }
        float tail = 0.f;
        for (; j < end; ++j) tail += a[j] * b[j];
        total += static_cast<double>(a0) + a1 + a2 + a3 + tail;
        i = end;
    }
    return total;
}

// C[m,n] = dot(A row m, B row n); A: MxK, B: NxK, C: MxN.
void gemm_nt(const float* A, const float* B, float* C, int64_t M, int64_t N, int64_t K) {
    for (int64_t m = 0; m < M; ++m) {
        const float* arow = A + m * K;
        float* crow = C + m * N;
        for (int64_t n = 0; n < N; ++n)
            crow[n] = static_cast<float>(block_dot(arow, B + n * K, K));
    }
}

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, const char* op, Fwd fwd, Bwd bwd) {
    bool grads = wants_grad({&x});
    int64_t n = x.numel();
    std::vector<float> data(static_cast<size_t>(n));
    const float* px = x.data();
    for (int64_t i = 0; i < n; ++i) data[i] = fwd(px[i]);
    Tensor out(x.shape(), std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        attach(out, op, {x}, [tx, o, bwd]() mutable {
            const float* dy = o->grad.data();
            const float* y = o->data.data();
            const float* px = tx.data();
            float* gx = tx.grad_data();
            int64_t n = static_cast<int64_t>(o->data.size());
            for (int64_t i = 0; i < n; ++i) gx[i] += bwd(dy[i], y[i], px[i]);
        });
    }
    return finish(std::move(out), op);
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, "sigmoid",
        [](float v) {
            double y = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
            return std::min(kSigmoidHi, std::max(kSigmoidLo, static_cast<float>(y)));
        },
        [](float dy, float y, float) { return dy * y * (1.0f - y); });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        x, "tanh", [](float v) { return static_cast<float>(std::tanh(static_cast<double>(v))); },
        [](float dy, float y, float) { return dy * (1.0f - y * y); });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; },
        [](float dy, float, float px) { return px > 0.0f ? dy : 0.0f; });
}

Tensor affine(const Tensor& x, float scale, float shift) {
    Tensor out = unary_op(
        x, "affine", [scale, shift](float v) { return scale * v + shift; },
        [scale](float dy, float, float) { return scale * dy; });
    if (x.numel() == 1)
        out.set_precise(static_cast<double>(scale) * x.precise_or_value() + shift);
    return out;
}

Tensor rsqrt_shift(const Tensor& x, double eps) {
    return unary_op(
        x, "rsqrt_shift",
        [eps](float v) { return static_cast<float>(1.0 / std::sqrt(static_cast<double>(v) + eps)); },
        [](float dy, float y, float) {
            double yd = y;
            return static_cast<float>(-0.5 * yd * yd * yd * dy);
        });
}

Tensor l2_normalize_lastdim(const Tensor& x, double eps) {
    check_arg(x.rank() >= 1, "l2_normalize: scalar input");
    int64_t width = x.shape().back();
    int64_t rows = x.numel() / width;
    auto inv = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    std::vector<float> data(static_cast<size_t>(x.numel()));
    const float* px = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = px + r * width;
        double ss = 0.0;
        for (int64_t i = 0; i < width; ++i) ss += static_cast<double>(xr[i]) * xr[i];
        double iv = 1.0 / std::sqrt(ss + eps);
        (*inv)[static_cast<size_t>(r)] = iv;
        float* yr = data.data() + r * width;
        for (int64_t i = 0; i < width; ++i) yr[i] = static_cast<float>(xr[i] * iv);
    }

    bool grads = wants_grad({&x});
    Tensor out(x.shape(), std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        attach(out, "l2_normalize", {x}, [tx, o, inv, rows, width]() mutable {
            const float* dy = o->grad.data();
            const float* y = o->data.data();
            float* gx = tx.grad_data();
            for (int64_t r = 0; r < rows; ++r) {
                const float* dyr = dy + r * width;
                const float* yr = y + r * width;
                double dot = 0.0;
                for (int64_t i = 0; i < width; ++i)
                    dot += static_cast<double>(dyr[i]) * yr[i];
                double iv = (*inv)[static_cast<size_t>(r)];
                float* gxr = gx + r * width;
                for (int64_t i = 0; i < width; ++i)
                    gxr[i] += static_cast<float>(iv * (dyr[i] - yr[i] * dot));
            }
        });
    }
    return finish(std::move(out), "l2_normalize");
}

// ---- shape manipulation ----

Tensor reshape(const Tensor& x, Shape shape) {
    check_arg(numel_of(shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) +
                                                " as " + shape_str(shape));
    bool grads = wants_grad({&x});
    Tensor out(std::move(shape), x.values());
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        attach(out, "reshape", {x}, [tx, o]() mutable {
            const float* dy = o->grad.data();
            float* gx = tx.grad_data();
            int64_t n = static_cast<int64_t>(o->data.size());
            for (int64_t i = 0; i < n; ++i) gx[i] += dy[i];
        });
    }
    return finish(std::move(out), "reshape");
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
    int rank = x.rank();
    check_arg(static_cast<int>(order.size()) == rank, "permute: order length mismatch");
    std::vector<bool> seen(static_cast<size_t>(rank), false);
    for (int ax : order) {
        check_arg(ax >= 0 && ax < rank && !seen[static_cast<size_t>(ax)],
                  "permute: order is not a permutation");
        seen[static_cast<size_t>(ax)] = true;
    }

    Shape in_strides = strides_of(x.shape());
    Shape oshape(static_cast<size_t>(rank));
    std::vector<int64_t> ostrides_in(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) {
        oshape[static_cast<size_t>(i)] = x.shape()[static_cast<size_t>(order[static_cast<size_t>(i)])];
        ostrides_in[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(order[static_cast<size_t>(i)])];
    }

    std::vector<int64_t> zero(static_cast<size_t>(rank), 0);
    std::vector<float> data(static_cast<size_t>(x.numel()));
    const float* px = x.data();
    for_each_bcast(oshape, ostrides_in, zero,
                   [&](int64_t o, int64_t ia, int64_t) { data[o] = px[ia]; });

    bool grads = wants_grad({&x});
    Tensor out(std::move(oshape), std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        auto strides = ostrides_in;
        attach(out, "permute", {x}, [tx, o, strides, zero]() mutable {
            const float* dy = o->grad.data();
            float* gx = tx.grad_data();
            for_each_bcast(o->shape, strides, zero,
                           [&](int64_t oi, int64_t ia, int64_t) { gx[ia] += dy[oi]; });
        });
    }
    return finish(std::move(out), "permute");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check_arg(!parts.empty(), "concat: no inputs");
    int rank = parts[0].rank();
    check_arg(axis >= 0 && axis < rank, "concat: axis out of range");
    int64_t axis_total = 0;
    for (const Tensor& p : parts) {
        check_arg(p.rank() == rank, "concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            check_arg(i == axis || p.size(i) == parts[0].size(i),
                      "concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                          shape_str(parts[0].shape()));
        axis_total += p.size(axis);
    }
    Shape oshape = parts[0].shape();
    oshape[static_cast<size_t>(axis)] = axis_total;

    int64_t outer = 1;
    for (int i = 0; i < axis; ++i) outer *= oshape[static_cast<size_t>(i)];
    int64_t inner = 1;
    for (int i = axis + 1; i < rank; ++i) inner *= oshape[static_cast<size_t>(i)];

    std::vector<float> data(static_cast<size_t>(numel_of(oshape)));
    int64_t out_row = axis_total * inner;
    int64_t col_off = 0;
    for (const Tensor& p : parts) {
        int64_t block = p.size(axis) * inner;
        const float* src = p.data();
        for (int64_t ou = 0; ou < outer; ++ou)
            std::memcpy(data.data() + ou * out_row + col_off, src + ou * block,
                        static_cast<size_t>(block) * sizeof(float));
        col_off += block;
    }

    bool grads = false;
    for (const Tensor& p : parts)
        if (p.requires_grad()) grads = true;
    grads = grads && autograd::grad_enabled();

    Tensor out(std::move(oshape), std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        std::vector<Tensor> inputs = parts;
        attach(out, "concat", parts, [inputs, o, outer, inner, out_row]() mutable {
            const float* dy = o->grad.data();
            int64_t col_off = 0;
            for (Tensor& p : inputs) {
                int64_t axis_len = p.numel() / std::max<int64_t>(1, outer * inner);
                int64_t block = axis_len * inner;
                if (p.requires_grad()) {
                    float* gp = p.grad_data();
                    for (int64_t ou = 0; ou < outer; ++ou) {
                        const float* srow = dy + ou * out_row + col_off;
                        float* drow = gp + ou * block;
                        for (int64_t i = 0; i < block; ++i) drow[i] += srow[i];
                    }
                }
                col_off += block;
            }
        });
    }
    return finish(std::move(out), "concat");
}

Tensor narrow(const Tensor& x, int axis, int64_t start, int64_t len) {
    int rank = x.rank();
    check_arg(axis >= 0 && axis < rank, "narrow: axis out of range");
    check_arg(start >= 0 && len >= 1 && start + len <= x.size(axis),
              "narrow: window [" + std::to_string(start) + "," + std::to_string(start + len) +
                  ") out of range for " + shape_str(x.shape()));

    int64_t outer = 1;
    for (int i = 0; i < axis; ++i) outer *= x.size(i);
    int64_t inner = 1;
    for (int i = axis + 1; i < rank; ++i) inner *= x.size(i);
    int64_t in_row = x.size(axis) * inner;
    int64_t block = len * inner;

    Shape oshape = x.shape();
    oshape[static_cast<size_t>(axis)] = len;
    std::vector<float> data(static_cast<size_t>(outer * block));
    const float* src = x.data();
    for (int64_t ou = 0; ou < outer; ++ou)
        std::memcpy(data.data() + ou * block, src + ou * in_row + start * inner,
                    static_cast<size_t>(block) * sizeof(float));

    bool grads = wants_grad({&x});
    Tensor out(std::move(oshape), std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        attach(out, "narrow", {x}, [tx, o, outer, inner, in_row, block, start]() mutable {
            const float* dy = o->grad.data();
            float* gx = tx.grad_data();
            for (int64_t ou = 0; ou < outer; ++ou) {
                const float* srow = dy + ou * block;
                float* drow = gx + ou * in_row + start * inner;
                for (int64_t i = 0; i < block; ++i) drow[i] += srow[i];
            }
        });
    }
    return finish(std::move(out), "narrow");
}

// ---- reductions ----

namespace {

// Output shape with reduced axes kept as size 1, plus the final shape.
struct ReducePlan {
    Shape keep_shape;
    Shape final_shape;
    std::vector<int64_t> out_stride_per_in_axis;  // 0 on reduced axes
    int64_t out_numel = 1;
    int64_t count = 1;  // elements folded into each output cell
};

ReducePlan plan_reduce(const Shape& in, std::vector<int>& axes, bool keepdim, const char* op) {
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    ReducePlan plan;
    plan.keep_shape = in;
    std::vector<bool> reduced(in.size(), false);
    for (int ax : axes) {
        check_arg(ax >= 0 && ax < static_cast<int>(in.size()),
                  std::string(op) + ": axis out of range");
        reduced[static_cast<size_t>(ax)] = true;
        plan.count *= in[static_cast<size_t>(ax)];
        plan.keep_shape[static_cast<size_t>(ax)] = 1;
    }
    plan.out_numel = numel_of(plan.keep_shape);
    Shape keep_strides = strides_of(plan.keep_shape);
    plan.out_stride_per_in_axis.resize(in.size());
    for (size_t i = 0; i < in.size(); ++i)
        plan.out_stride_per_in_axis[i] = reduced[i] ? 0 : keep_strides[i];
    if (keepdim) {
        plan.final_shape = plan.keep_shape;
    } else {
        for (size_t i = 0; i < in.size(); ++i)
            if (!reduced[i]) plan.final_shape.push_back(in[i]);
        if (plan.final_shape.empty()) plan.final_shape.push_back(1);
    }
    return plan;
}

Tensor reduce_sum_impl(const Tensor& x, std::vector<int> axes, bool keepdim, bool mean) {
    const char* op = mean ? "reduce_mean" : "reduce_sum";
    ReducePlan plan = plan_reduce(x.shape(), axes, keepdim, op);
    std::vector<double> acc(static_cast<size_t>(plan.out_numel), 0.0);
    const float* px = x.data();
    std::vector<int64_t> zero(x.shape().size(), 0);
    for_each_bcast(x.shape(), plan.out_stride_per_in_axis, zero,
                   [&](int64_t i, int64_t oi, int64_t) { acc[oi] += px[i]; });
    double scale = mean ? 1.0 / static_cast<double>(plan.count) : 1.0;
    std::vector<float> data(static_cast<size_t>(plan.out_numel));
    for (int64_t i = 0; i < plan.out_numel; ++i) data[i] = static_cast<float>(acc[i] * scale);

    bool grads = wants_grad({&x});
    Tensor out(plan.final_shape, std::move(data));
    if (plan.out_numel == 1) out.set_precise(acc[0] * scale);
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        auto out_strides = plan.out_stride_per_in_axis;
        float gscale = static_cast<float>(scale);
        attach(out, op, {x}, [tx, o, out_strides, zero, gscale]() mutable {
            const float* dy = o->grad.data();
            float* gx = tx.grad_data();
            for_each_bcast(tx.shape(), out_strides, zero,
                           [&](int64_t i, int64_t oi, int64_t) { gx[i] += gscale * dy[oi]; });
        });
    }
    return finish(std::move(out), op);
}

}  // namespace

Tensor reduce_sum(const Tensor& x, std::vector<int> axes, bool keepdim) {
    return reduce_sum_impl(x, std::move(axes), keepdim, false);
}

Tensor reduce_mean(const Tensor& x, std::vector<int> axes, bool keepdim) {
    return reduce_sum_impl(x, std::move(axes), keepdim, true);
}

Tensor reduce_max(const Tensor& x, int axis, bool keepdim) {
    std::vector<int> axes{axis};
    ReducePlan plan = plan_reduce(x.shape(), axes, keepdim, "reduce_max");
    std::vector<float> data(static_cast<size_t>(plan.out_numel),
                            -std::numeric_limits<float>::infinity());
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(plan.out_numel), -1);
    const float* px = x.data();
    std::vector<int64_t> zero(x.shape().size(), 0);
    // Row-major scan with strict > keeps the first max index on ties.
    for_each_bcast(x.shape(), plan.out_stride_per_in_axis, zero, [&](int64_t i, int64_t oi, int64_t) {
        if (px[i] > data[oi]) {
            data[oi] = px[i];
            (*argmax)[static_cast<size_t>(oi)] = i;
        }
    });

    bool grads = wants_grad({&x});
    Tensor out(plan.final_shape, std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        attach(out, "reduce_max", {x}, [tx, o, argmax]() mutable {
            const float* dy = o->grad.data();
            float* gx = tx.grad_data();
            for (size_t j = 0; j < argmax->size(); ++j) gx[(*argmax)[j]] += dy[j];
        });
    }
    return finish(std::move(out), "reduce_max");
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    const float* px = x.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) acc += px[i];

    bool grads = wants_grad({&x});
    Tensor out = Tensor::scalar(static_cast<float>(acc));
    out.set_precise(acc);
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        attach(out, "sum_all", {x}, [tx, o]() mutable {
            float g = o->grad[0];
            float* gx = tx.grad_data();
            int64_t n = tx.numel();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return finish(std::move(out), "sum_all");
}

// ---- linear ----

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_arg(x.rank() == 2 && w.rank() == 2, "linear: expected 2-d input and weight, got " +
                                                  shape_str(x.shape()) + " and " +
                                                  shape_str(w.shape()));
    int64_t rows = x.size(0), in = x.size(1), out_dim = w.size(0);
    check_arg(w.size(1) == in, "linear: weight " + shape_str(w.shape()) +
                                   " does not accept input width " + std::to_string(in));
    if (b.defined())
        check_arg(b.rank() == 1 && b.size(0) == out_dim,
                  "linear: bias " + shape_str(b.shape()) + " does not match output width " +
                      std::to_string(out_dim));

    std::vector<float> data(static_cast<size_t>(rows * out_dim));
    gemm_nt(x.data(), w.data(), data.data(), rows, out_dim, in);
    if (b.defined()) {
        const float* pb = b.data();
        for (int64_t r = 0; r < rows; ++r) {
            float* row = data.data() + r * out_dim;
            for (int64_t oidx = 0; oidx < out_dim; ++oidx) row[oidx] += pb[oidx];
        }
    }

    bool grads = wants_grad({&x, &w, &b});
    Tensor out(Shape{rows, out_dim}, std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x, tw = w, tb = b;
        attach(out, "linear", b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w},
               [tx, tw, tb, o, rows, in, out_dim]() mutable {
                   const float* dy = o->grad.data();
                   if (tx.requires_grad()) {
                       float* gx = tx.grad_data();
                       const float* pw = tw.data();
                       std::vector<double> buf(static_cast<size_t>(in));
                       for (int64_t r = 0; r < rows; ++r) {
                           std::fill(buf.begin(), buf.end(), 0.0);
                           const float* dyr = dy + r * out_dim;
                           for (int64_t oidx = 0; oidx < out_dim; ++oidx) {
                               float a = dyr[oidx];
                               if (a == 0.0f) continue;
                               const float* wrow = pw + oidx * in;
                               for (int64_t i = 0; i < in; ++i) buf[i] += static_cast<double>(a) * wrow[i];
                           }
                           float* gxr = gx + r * in;
                           for (int64_t i = 0; i < in; ++i) gxr[i] += static_cast<float>(buf[i]);
                       }
                   }
                   if (tw.requires_grad()) {
                       std::vector<double> acc(static_cast<size_t>(out_dim * in), 0.0);
                       const float* px = tx.data();
                       for (int64_t r = 0; r < rows; ++r) {
                           const float* xr = px + r * in;
                           const float* dyr = dy + r * out_dim;
                           for (int64_t oidx = 0; oidx < out_dim; ++oidx) {
                               double a = dyr[oidx];
                               if (a == 0.0) continue;
                               double* arow = acc.data() + oidx * in;
                               for (int64_t i = 0; i < in; ++i) arow[i] += a * xr[i];
                           }
                       }
                       float* gw = tw.grad_data();
                       for (size_t i = 0; i < acc.size(); ++i) gw[i] += static_cast<float>(acc[i]);
                   }
                   if (tb.defined() && tb.requires_grad()) {
                       std::vector<double> acc(static_cast<size_t>(out_dim), 0.0);
                       for (int64_t r = 0; r < rows; ++r) {
                           const float* dyr = dy + r * out_dim;
                           for (int64_t oidx = 0; oidx < out_dim; ++oidx) acc[oidx] += dyr[oidx];
                       }
                       float* gb = tb.grad_data();
                       for (int64_t oidx = 0; oidx < out_dim; ++oidx)
                           gb[oidx] += static_cast<float>(acc[oidx]);
                   }
               });
    }
    return finish(std::move(out), "linear");
}

// ---- convolution ----

namespace {

struct ConvGeom {
    int dims = 0;
    int64_t batch = 0, cin = 0, cout = 0;
    std::vector<int64_t> in_sp, kernel, out_sp, stride, pad;
    int64_t patch = 0;      // cin * prod(kernel)
    int64_t positions = 0;  // prod(out_sp)
    int64_t in_plane = 0;   // prod(in_sp)
    // Per patch column: input channel and flat spatial offsets of the tap.
    std::vector<int64_t> tap_channel;
    std::vector<std::vector<int64_t>> tap_delta;  // per dim
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, const std::vector<int64_t>& stride,
                       const std::vector<int64_t>& padding) {
    ConvGeom g;
    g.dims = w.rank() - 2;
    check_arg(g.dims >= 1 && g.dims <= 3, "conv: weight rank " + std::to_string(w.rank()) +
                                              " implies unsupported dimensionality");
    check_arg(x.rank() == g.dims + 2, "conv: input " + shape_str(x.shape()) +
                                          " incompatible with weight " + shape_str(w.shape()));
    check_arg(static_cast<int>(stride.size()) == g.dims &&
                  static_cast<int>(padding.size()) == g.dims,
              "conv: stride/padding must have one entry per spatial dim");
    g.batch = x.size(0);
    g.cin = x.size(1);
    g.cout = w.size(0);
    check_arg(w.size(1) == g.cin, "conv: input has " + std::to_string(g.cin) +
                                      " channels but weight expects " + std::to_string(w.size(1)));
    for (int d = 0; d < g.dims; ++d) {
        int64_t in = x.size(2 + d), k = w.size(2 + d), s = stride[static_cast<size_t>(d)],
                p = padding[static_cast<size_t>(d)];
        check_arg(s >= 1, "conv: stride must be positive");
        check_arg(p >= 0, "conv: padding must be non-negative");
        int64_t out = (in + 2 * p - k) / s + 1;
        check_arg(in + 2 * p >= k && out >= 1,
                  "conv: zero-size output; input " + shape_str(x.shape()) + ", kernel " +
                      shape_str(w.shape()) + ", stride/pad " + std::to_string(s) + "/" +
                      std::to_string(p) + " on dim " + std::to_string(d));
        g.in_sp.push_back(in);
        g.kernel.push_back(k);
        g.out_sp.push_back(out);
        g.stride.push_back(s);
        g.pad.push_back(p);
    }
    g.patch = g.cin;
    for (int64_t k : g.kernel) g.patch *= k;
    g.positions = 1;
    for (int64_t o : g.out_sp) g.positions *= o;
    g.in_plane = 1;
    for (int64_t s : g.in_sp) g.in_plane *= s;

    g.tap_channel.resize(static_cast<size_t>(g.patch));
    g.tap_delta.assign(static_cast<size_t>(g.dims), std::vector<int64_t>(static_cast<size_t>(g.patch)));
    std::vector<int64_t> kidx(static_cast<size_t>(g.dims), 0);
    for (int64_t col = 0; col < g.patch; ++col) {
        int64_t kvol = 1;
        for (int64_t k : g.kernel) kvol *= k;
        g.tap_channel[static_cast<size_t>(col)] = col / kvol;
        int64_t rem = col % kvol;
        for (int d = g.dims - 1; d >= 0; --d) {
            g.tap_delta[static_cast<size_t>(d)][static_cast<size_t>(col)] = rem % g.kernel[static_cast<size_t>(d)];
            rem /= g.kernel[static_cast<size_t>(d)];
        }
    }
    return g;
}

// 3-d fast path: bounds hoisted per kernel row, contiguous w-runs copied.
void im2col3d(const float* x, const ConvGeom& g, float* cols) {
    int64_t t_in = g.in_sp[0], h_in = g.in_sp[1], w_in = g.in_sp[2];
    int64_t kt = g.kernel[0], kh = g.kernel[1], kw = g.kernel[2];
    int64_t khw = kh * kw;
    float* row = cols;
    for (int64_t ot = 0; ot < g.out_sp[0]; ++ot) {
        int64_t bt = ot * g.stride[0] - g.pad[0];
        for (int64_t oh = 0; oh < g.out_sp[1]; ++oh) {
            int64_t bh = oh * g.stride[1] - g.pad[1];
            for (int64_t ow = 0; ow < g.out_sp[2]; ++ow, row += g.patch) {
                int64_t bw = ow * g.stride[2] - g.pad[2];
                int64_t w0 = std::max<int64_t>(0, -bw);
                int64_t w1 = std::max(w0, std::min(kw, w_in - bw));
                float* dst = row;
                for (int64_t ci = 0; ci < g.cin; ++ci) {
                    const float* plane = x + ci * g.in_plane;
                    for (int64_t dt = 0; dt < kt; ++dt) {
                        int64_t t = bt + dt;
                        if (t < 0 || t >= t_in) {
                            std::fill(dst, dst + khw, 0.0f);
                            dst += khw;
                            continue;
                        }
                        const float* tplane = plane + t * h_in * w_in;
                        for (int64_t dh = 0; dh < kh; ++dh) {
                            int64_t h = bh + dh;
                            if (h < 0 || h >= h_in) {
                                std::fill(dst, dst + kw, 0.0f);
                                dst += kw;
                                continue;
                            }
                            const float* src = tplane + h * w_in + bw;
                            for (int64_t i = 0; i < w0; ++i) dst[i] = 0.0f;
                            if (w1 > w0)
                                std::memcpy(dst + w0, src + w0,
                                            static_cast<size_t>(w1 - w0) * sizeof(float));
                            for (int64_t i = w1; i < kw; ++i) dst[i] = 0.0f;
                            dst += kw;
                        }
                    }
                }
            }
        }
    }
}

// Gathers one sample's patches into cols [positions x patch]; zeros for pads.
void im2col(const float* x, const ConvGeom& g, float* cols) {
    if (g.dims == 3) {
        im2col3d(x, g, cols);
        return;
    }
    Shape in_strides = strides_of(Shape(g.in_sp.begin(), g.in_sp.end()));
    std::vector<int64_t> opos(static_cast<size_t>(g.dims), 0);
    for (int64_t p = 0; p < g.positions; ++p) {
        float* row = cols + p * g.patch;
        for (int64_t col = 0; col < g.patch; ++col) {
            int64_t off = 0;
            bool inside = true;
            for (int d = 0; d < g.dims; ++d) {
                int64_t pos = opos[static_cast<size_t>(d)] * g.stride[static_cast<size_t>(d)] -
                              g.pad[static_cast<size_t>(d)] +
                              g.tap_delta[static_cast<size_t>(d)][static_cast<size_t>(col)];
                if (pos < 0 || pos >= g.in_sp[static_cast<size_t>(d)]) {
                    inside = false;
                    break;
                }
                off += pos * in_strides[static_cast<size_t>(d)];
            }
            row[col] = inside ? x[g.tap_channel[static_cast<size_t>(col)] * g.in_plane + off] : 0.0f;
        }
        for (int d = g.dims - 1; d >= 0; --d) {
            if (++opos[static_cast<size_t>(d)] < g.out_sp[static_cast<size_t>(d)]) break;
            opos[static_cast<size_t>(d)] = 0;
        }
    }
}

}  // namespace

Tensor conv_nd(const Tensor& x, const Tensor& w, const Tensor& b,
               const std::vector<int64_t>& stride, const std::vector<int64_t>& padding) {
    ConvGeom g = conv_geometry(x, w, stride, padding);
    if (b.defined())
        check_arg(b.rank() == 1 && b.size(0) == g.cout,
                  "conv: bias " + shape_str(b.shape()) + " does not match " +
                      std::to_string(g.cout) + " output channels");

    Shape oshape{g.batch, g.cout};
    for (int64_t o : g.out_sp) oshape.push_back(o);
    std::vector<float> data(static_cast<size_t>(numel_of(oshape)));
    std::vector<float> cols(static_cast<size_t>(g.positions * g.patch));
    const float* px = x.data();
    const float* pw = w.data();
    for (int64_t n = 0; n < g.batch; ++n) {
        im2col(px + n * g.cin * g.in_plane, g, cols.data());
        float* out_n = data.data() + n * g.cout * g.positions;
        gemm_nt(pw, cols.data(), out_n, g.cout, g.positions, g.patch);
        if (b.defined()) {
            const float* pb = b.data();
            for (int64_t co = 0; co < g.cout; ++co) {
                float* row = out_n + co * g.positions;
                for (int64_t p = 0; p < g.positions; ++p) row[p] += pb[co];
            }
        }
    }

    bool grads = wants_grad({&x, &w, &b});
    Tensor out(std::move(oshape), std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x, tw = w, tb = b;
        attach(out, "conv",
               b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w},
               [tx, tw, tb, o, g]() mutable {
                   const float* dy = o->grad.data();
                   const float* px = tx.data();
                   const float* pw = tw.data();
                   bool need_x = tx.requires_grad();
                   bool need_w = tw.requires_grad();
                   bool need_b = tb.defined() && tb.requires_grad();

                   std::vector<float> cols;
                   if (need_w) cols.resize(static_cast<size_t>(g.positions * g.patch));
                   std::vector<double> dw_acc;
                   if (need_w) dw_acc.assign(static_cast<size_t>(g.cout * g.patch), 0.0);
                   std::vector<double> db_acc;
                   if (need_b) db_acc.assign(static_cast<size_t>(g.cout), 0.0);
                   std::vector<double> dx_acc;
                   std::vector<float> buf;  // per-position sums are short
                   if (need_x) {
                       dx_acc.resize(static_cast<size_t>(g.cin * g.in_plane));
                       buf.resize(static_cast<size_t>(g.patch));
                   }
                   Shape in_strides = strides_of(Shape(g.in_sp.begin(), g.in_sp.end()));

                   for (int64_t n = 0; n < g.batch; ++n) {
                       const float* dyn = dy + n * g.cout * g.positions;
                       if (need_b) {
                           for (int64_t co = 0; co < g.cout; ++co) {
                               const float* row = dyn + co * g.positions;
                               for (int64_t p = 0; p < g.positions; ++p) db_acc[co] += row[p];
                           }
                       }
                       if (need_w) {
                           im2col(px + n * g.cin * g.in_plane, g, cols.data());
                           // Blocked float accumulation over positions,
                           // promoted to the double accumulator per block.
                           constexpr int64_t kBlock = 256;
                           std::vector<float> fbuf(static_cast<size_t>(g.patch));
                           for (int64_t co = 0; co < g.cout; ++co) {
                               const float* grow = dyn + co * g.positions;
                               double* arow = dw_acc.data() + co * g.patch;
                               for (int64_t p0 = 0; p0 < g.positions; p0 += kBlock) {
                                   int64_t p1 = std::min(p0 + kBlock, g.positions);
                                   std::fill(fbuf.begin(), fbuf.end(), 0.0f);
                                   for (int64_t p = p0; p < p1; ++p) {
                                       float a = grow[p];
                                       const float* crow = cols.data() + p * g.patch;
                                       for (int64_t k = 0; k < g.patch; ++k)
                                           fbuf[static_cast<size_t>(k)] += a * crow[k];
                                   }
                                   for (int64_t k = 0; k < g.patch; ++k)
                                       arow[k] += fbuf[static_cast<size_t>(k)];
                               }
                           }
                       }
                       if (need_x) {
                           std::fill(dx_acc.begin(), dx_acc.end(), 0.0);
                           std::vector<int64_t> opos(static_cast<size_t>(g.dims), 0);
                           for (int64_t p = 0; p < g.positions; ++p) {
                               std::fill(buf.begin(), buf.end(), 0.0f);
                               for (int64_t co = 0; co < g.cout; ++co) {
                                   float a = dyn[co * g.positions + p];
                                   const float* wrow = pw + co * g.patch;
                                   for (int64_t k = 0; k < g.patch; ++k) buf[k] += a * wrow[k];
                               }
                               for (int64_t col = 0; col < g.patch; ++col) {
                                   int64_t off = 0;
                                   bool inside = true;
                                   for (int d = 0; d < g.dims; ++d) {
                                       int64_t pos =
                                           opos[static_cast<size_t>(d)] * g.stride[static_cast<size_t>(d)] -
                                           g.pad[static_cast<size_t>(d)] +
                                           g.tap_delta[static_cast<size_t>(d)][static_cast<size_t>(col)];
                                       if (pos < 0 || pos >= g.in_sp[static_cast<size_t>(d)]) {
                                           inside = false;
                                           break;
                                       }
                                       off += pos * in_strides[static_cast<size_t>(d)];
                                   }
                                   if (inside)
                                       dx_acc[g.tap_channel[static_cast<size_t>(col)] * g.in_plane + off] +=
                                           buf[col];
                               }
                               for (int d = g.dims - 1; d >= 0; --d) {
                                   if (++opos[static_cast<size_t>(d)] < g.out_sp[static_cast<size_t>(d)]) break;
                                   opos[static_cast<size_t>(d)] = 0;
                               }
                           }
                           float* gx = tx.grad_data() + n * g.cin * g.in_plane;
                           for (size_t i = 0; i < dx_acc.size(); ++i)
                               gx[i] += static_cast<float>(dx_acc[i]);
                       }
                   }
                   if (need_w) {
                       float* gw = tw.grad_data();
                       for (size_t i = 0; i < dw_acc.size(); ++i) gw[i] += static_cast<float>(dw_acc[i]);
                   }
                   if (need_b) {
                       float* gb = tb.grad_data();
                       for (int64_t co = 0; co < g.cout; ++co) gb[co] += static_cast<float>(db_acc[co]);
                   }
               });
    }
    return finish(std::move(out), "conv");
}

// ---- pooling ----

Tensor pool_nd(const Tensor& x, PoolMode mode, const std::vector<int64_t>& window,
               const std::vector<int64_t>& stride) {
    int dims = static_cast<int>(window.size());
    check_arg(dims >= 1 && dims <= 3 && stride.size() == window.size(),
              "pool: window/stride must cover 1-3 spatial dims");
    check_arg(x.rank() == dims + 2,
              "pool: input " + shape_str(x.shape()) + " incompatible with " +
                  std::to_string(dims) + "-d window");

    int64_t batch = x.size(0), chans = x.size(1);
    std::vector<int64_t> in_sp, out_sp;
    for (int d = 0; d < dims; ++d) {
        int64_t in = x.size(2 + d), wdim = window[static_cast<size_t>(d)],
                s = stride[static_cast<size_t>(d)];
        check_arg(s >= 1 && wdim >= 1, "pool: window/stride must be positive");
        check_arg(wdim <= in, "pool: window " + std::to_string(wdim) + " larger than input extent " +
                                  std::to_string(in) + " on dim " + std::to_string(d));
        in_sp.push_back(in);
        out_sp.push_back((in - wdim) / s + 1);
    }
    int64_t in_plane = 1, out_plane = 1, wvol = 1;
    for (int d = 0; d < dims; ++d) {
        in_plane *= in_sp[static_cast<size_t>(d)];
        out_plane *= out_sp[static_cast<size_t>(d)];
        wvol *= window[static_cast<size_t>(d)];
    }
    Shape in_strides = strides_of(Shape(in_sp.begin(), in_sp.end()));

    Shape oshape{batch, chans};
    for (int64_t o : out_sp) oshape.push_back(o);
    std::vector<float> data(static_cast<size_t>(numel_of(oshape)));
    auto argmax = std::make_shared<std::vector<int64_t>>();
    bool grads = wants_grad({&x});
    if (mode == PoolMode::Max && grads) argmax->assign(data.size(), -1);

    const float* px = x.data();
    std::vector<int64_t> opos(static_cast<size_t>(dims), 0);
    std::vector<int64_t> wpos(static_cast<size_t>(dims), 0);
    for (int64_t bc = 0; bc < batch * chans; ++bc) {
        const float* plane = px + bc * in_plane;
        float* out_base = data.data() + bc * out_plane;
        std::fill(opos.begin(), opos.end(), 0);
        for (int64_t p = 0; p < out_plane; ++p) {
            float best = -std::numeric_limits<float>::infinity();
            int64_t best_idx = -1;
            double sum = 0.0;
            std::fill(wpos.begin(), wpos.end(), 0);
            for (int64_t wv = 0; wv < wvol; ++wv) {
                int64_t off = 0;
                for (int d = 0; d < dims; ++d)
                    off += (opos[static_cast<size_t>(d)] * stride[static_cast<size_t>(d)] +
                            wpos[static_cast<size_t>(d)]) *
                           in_strides[static_cast<size_t>(d)];
                float v = plane[off];
                if (mode == PoolMode::Max) {
                    if (v > best) {
                        best = v;
                        best_idx = bc * in_plane + off;
                    }
                } else {
                    sum += v;
                }
                for (int d = dims - 1; d >= 0; --d) {
                    if (++wpos[static_cast<size_t>(d)] < window[static_cast<size_t>(d)]) break;
                    wpos[static_cast<size_t>(d)] = 0;
                }
            }
            if (mode == PoolMode::Max) {
                out_base[p] = best;
                if (!argmax->empty()) (*argmax)[static_cast<size_t>(bc * out_plane + p)] = best_idx;
            } else {
                out_base[p] = static_cast<float>(sum / static_cast<double>(wvol));
            }
            for (int d = dims - 1; d >= 0; --d) {
                if (++opos[static_cast<size_t>(d)] < out_sp[static_cast<size_t>(d)]) break;
                opos[static_cast<size_t>(d)] = 0;
            }
        }
    }

    Tensor out(std::move(oshape), std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        auto win = window;
        auto str = stride;
        attach(out, "pool", {x}, [tx, o, argmax, mode, win, str, in_strides, in_sp, out_sp, batch,
                                  chans, in_plane, out_plane, wvol, dims]() mutable {
            const float* dy = o->grad.data();
            float* gx = tx.grad_data();
            if (mode == PoolMode::Max) {
                for (size_t j = 0; j < argmax->size(); ++j) gx[(*argmax)[j]] += dy[j];
                return;
            }
            float inv = 1.0f / static_cast<float>(wvol);
            std::vector<int64_t> opos(static_cast<size_t>(dims), 0);
            std::vector<int64_t> wpos(static_cast<size_t>(dims), 0);
            for (int64_t bc = 0; bc < batch * chans; ++bc) {
                float* gplane = gx + bc * in_plane;
                const float* dyb = dy + bc * out_plane;
                std::fill(opos.begin(), opos.end(), 0);
                for (int64_t p = 0; p < out_plane; ++p) {
                    float g = dyb[p] * inv;
                    std::fill(wpos.begin(), wpos.end(), 0);
                    for (int64_t wv = 0; wv < wvol; ++wv) {
                        int64_t off = 0;
                        for (int d = 0; d < dims; ++d)
                            off += (opos[static_cast<size_t>(d)] * str[static_cast<size_t>(d)] +
                                    wpos[static_cast<size_t>(d)]) *
                                   in_strides[static_cast<size_t>(d)];
                        gplane[off] += g;
                        for (int d = dims - 1; d >= 0; --d) {
                            if (++wpos[static_cast<size_t>(d)] < win[static_cast<size_t>(d)]) break;
                            wpos[static_cast<size_t>(d)] = 0;
                        }
                    }
                    for (int d = dims - 1; d >= 0; --d) {
                        if (++opos[static_cast<size_t>(d)] < out_sp[static_cast<size_t>(d)]) break;
                        opos[static_cast<size_t>(d)] = 0;
                    }
                }
            }
        });
    }
    return finish(std::move(out), "pool");
}

// ---- probability ----

Tensor softmax_lastdim(const Tensor& x) {
    check_arg(x.rank() >= 1, "softmax: scalar input");
    int64_t v = x.shape().back();
    int64_t rows = x.numel() / v;
    std::vector<float> data(static_cast<size_t>(x.numel()));
    const float* px = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = px + r * v;
        float* pr = data.data() + r * v;
        float m = xr[0];
        for (int64_t i = 1; i < v; ++i) m = std::max(m, xr[i]);
        double denom = 0.0;
        for (int64_t i = 0; i < v; ++i) denom += std::exp(static_cast<double>(xr[i]) - m);
        for (int64_t i = 0; i < v; ++i) {
            double p = std::exp(static_cast<double>(xr[i]) - m) / denom;
            pr[i] = std::max(kProbFloor, static_cast<float>(p));
        }
    }

    bool grads = wants_grad({&x});
    Tensor out(x.shape(), std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x;
        attach(out, "softmax", {x}, [tx, o, rows, v]() mutable {
            const float* dy = o->grad.data();
            const float* p = o->data.data();
            float* gx = tx.grad_data();
            for (int64_t r = 0; r < rows; ++r) {
                const float* dyr = dy + r * v;
                const float* pr = p + r * v;
                double dot = 0.0;
                for (int64_t i = 0; i < v; ++i) dot += static_cast<double>(dyr[i]) * pr[i];
                float* gxr = gx + r * v;
                for (int64_t i = 0; i < v; ++i)
                    gxr[i] += static_cast<float>(pr[i] * (static_cast<double>(dyr[i]) - dot));
            }
        });
    }
    return finish(std::move(out), "softmax");
}

Tensor nll_from_probs(const Tensor& probs, const std::vector<int64_t>& targets,
                      int64_t ignore_id) {
    check_arg(probs.rank() == 2, "nll: expected [rows x vocab], got " + shape_str(probs.shape()));
    int64_t rows = probs.size(0), v = probs.size(1);
    check_arg(static_cast<int64_t>(targets.size()) == rows,
              "nll: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                  " rows");
    const float* p = probs.data();
    double loss = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        int64_t t = targets[static_cast<size_t>(r)];
        if (t == ignore_id) continue;
        check_arg(t >= 0 && t < v, "nll: target id " + std::to_string(t) + " out of range [0," +
                                       std::to_string(v) + ")");
        float pv = p[r * v + t];
        if (!(pv > 0.0f)) fail("nll: zero probability at target " + std::to_string(t));
        loss -= std::log(static_cast<double>(pv));
    }

    bool grads = wants_grad({&probs});
    Tensor out = Tensor::scalar(static_cast<float>(loss));
    out.set_precise(loss);
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tp = probs;
        auto tgt = targets;
        attach(out, "nll", {probs}, [tp, o, tgt, ignore_id, v]() mutable {
            double g = o->grad[0];
            float* gp = tp.grad_data();
            const float* p = tp.data();
            for (int64_t r = 0; r < static_cast<int64_t>(tgt.size()); ++r) {
                int64_t t = tgt[static_cast<size_t>(r)];
                if (t == ignore_id) continue;
                gp[r * v + t] += static_cast<float>(-g / static_cast<double>(p[r * v + t]));
            }
        });
    }
    return finish(std::move(out), "nll");
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        BatchNormStats* stats_out) {
    check_arg(x.rank() >= 2, "batch_norm: expected rank >= 2, got " + shape_str(x.shape()));
    int64_t batch = x.size(0), chans = x.size(1);
    int64_t plane = x.numel() / (batch * chans);
    check_arg(gamma.rank() == 1 && gamma.size(0) == chans && beta.rank() == 1 &&
                  beta.size(0) == chans,
              "batch_norm: gamma/beta must be [" + std::to_string(chans) + "]");
    int64_t n = batch * plane;

    std::vector<double> mean(static_cast<size_t>(chans), 0.0);
    std::vector<double> var(static_cast<size_t>(chans), 0.0);
    const float* px = x.data();
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t c = 0; c < chans; ++c) {
            const float* row = px + (b * chans + c) * plane;
            double acc = 0.0;
            for (int64_t p = 0; p < plane; ++p) acc += row[p];
            mean[static_cast<size_t>(c)] += acc;
        }
    for (int64_t c = 0; c < chans; ++c) mean[static_cast<size_t>(c)] /= static_cast<double>(n);
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t c = 0; c < chans; ++c) {
            const float* row = px + (b * chans + c) * plane;
            double mu = mean[static_cast<size_t>(c)];
            double acc = 0.0;
            for (int64_t p = 0; p < plane; ++p) {
                double d = row[p] - mu;
                acc += d * d;
            }
            var[static_cast<size_t>(c)] += acc;
        }
    for (int64_t c = 0; c < chans; ++c) var[static_cast<size_t>(c)] /= static_cast<double>(n);

    auto inv = std::make_shared<std::vector<double>>(static_cast<size_t>(chans));
    for (int64_t c = 0; c < chans; ++c)
        (*inv)[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);

    auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(x.numel()));
    std::vector<float> data(static_cast<size_t>(x.numel()));
    const float* pg = gamma.data();
    const float* pb = beta.data();
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t c = 0; c < chans; ++c) {
            const float* row = px + (b * chans + c) * plane;
            float* hrow = xhat->data() + (b * chans + c) * plane;
            float* orow = data.data() + (b * chans + c) * plane;
            double mu = mean[static_cast<size_t>(c)];
            double iv = (*inv)[static_cast<size_t>(c)];
            double g = pg[c], be = pb[c];
            for (int64_t p = 0; p < plane; ++p) {
                double h = (row[p] - mu) * iv;
                hrow[p] = static_cast<float>(h);
                orow[p] = static_cast<float>(g * h + be);
            }
        }

    if (stats_out) {
        stats_out->mean = mean;
        stats_out->var = var;
    }

    bool grads = wants_grad({&x, &gamma, &beta});
    Tensor out(x.shape(), std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tx = x, tg = gamma, tb = beta;
        attach(out, "batch_norm", {x, gamma, beta},
               [tx, tg, tb, o, xhat, inv, batch, chans, plane, n]() mutable {
                   const float* dy = o->grad.data();
                   const float* ph = xhat->data();
                   const float* pg = tg.data();
                   // Per-channel reductions of dy and dy*xhat.
                   std::vector<double> sum_dy(static_cast<size_t>(chans), 0.0);
                   std::vector<double> sum_dyh(static_cast<size_t>(chans), 0.0);
                   for (int64_t b = 0; b < batch; ++b)
                       for (int64_t c = 0; c < chans; ++c) {
                           const float* dyr = dy + (b * chans + c) * plane;
                           const float* hr = ph + (b * chans + c) * plane;
                           double a = 0.0, ah = 0.0;
                           for (int64_t p = 0; p < plane; ++p) {
                               a += dyr[p];
                               ah += static_cast<double>(dyr[p]) * hr[p];
                           }
                           sum_dy[static_cast<size_t>(c)] += a;
                           sum_dyh[static_cast<size_t>(c)] += ah;
                       }
                   if (tg.requires_grad()) {
                       float* gg = tg.grad_data();
                       for (int64_t c = 0; c < chans; ++c)
                           gg[c] += static_cast<float>(sum_dyh[static_cast<size_t>(c)]);
                   }
                   if (tb.requires_grad()) {
                       float* gb = tb.grad_data();
                       for (int64_t c = 0; c < chans; ++c)
                           gb[c] += static_cast<float>(sum_dy[static_cast<size_t>(c)]);
                   }
                   if (tx.requires_grad()) {
                       float* gx = tx.grad_data();
                       double dn = static_cast<double>(n);
                       for (int64_t b = 0; b < batch; ++b)
                           for (int64_t c = 0; c < chans; ++c) {
                               const float* dyr = dy + (b * chans + c) * plane;
                               const float* hr = ph + (b * chans + c) * plane;
                               float* gxr = gx + (b * chans + c) * plane;
                               double g = pg[c], iv = (*inv)[static_cast<size_t>(c)];
                               double sd = sum_dy[static_cast<size_t>(c)];
                               double sdh = sum_dyh[static_cast<size_t>(c)];
                               for (int64_t p = 0; p < plane; ++p) {
                                   double t = dn * dyr[p] - sd - hr[p] * sdh;
                                   gxr[p] += static_cast<float>(g * iv * t / dn);
                               }
                           }
                   }
               });
    }
    return finish(std::move(out), "batch_norm");
}

Tensor embedding(const Tensor& table, const std::vector<int64_t>& ids) {
    check_arg(table.rank() == 2, "embedding: table must be [vocab x dim]");
    int64_t v = table.size(0), e = table.size(1);
    int64_t rows = static_cast<int64_t>(ids.size());
    std::vector<float> data(static_cast<size_t>(rows * e));
    const float* pt = table.data();
    for (int64_t r = 0; r < rows; ++r) {
        int64_t id = ids[static_cast<size_t>(r)];
        check_arg(id >= 0 && id < v, "embedding: id " + std::to_string(id) + " out of range [0," +
                                         std::to_string(v) + ")");
        std::memcpy(data.data() + r * e, pt + id * e, static_cast<size_t>(e) * sizeof(float));
    }

    bool grads = wants_grad({&table});
    Tensor out(Shape{rows, e}, std::move(data));
    if (grads) {
        TensorImpl* o = out.impl();
        Tensor tt = table;
        auto idv = ids;
        attach(out, "embedding", {table}, [tt, o, idv, e]() mutable {
            const float* dy = o->grad.data();
            float* gt = tt.grad_data();
            for (int64_t r = 0; r < static_cast<int64_t>(idv.size()); ++r) {
                float* row = gt + idv[static_cast<size_t>(r)] * e;
                const float* dyr = dy + r * e;
                for (int64_t i = 0; i < e; ++i) row[i] += dyr[i];
            }
        });
    }
    return finish(std::move(out), "embedding");
}

}  // namespace malip::ops
