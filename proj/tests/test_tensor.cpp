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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "malip/gradcheck.hpp"
#include "malip/nn.hpp"
#include "malip/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace malip;
using testutil::max_rel_diff;
using testutil::random_tensor;
using testutil::to_double;

TEST_CASE("conv1d identity kernel") {
    Tensor x({1, 1, 3}, {1, 2, 3});
    Tensor w({1, 1, 3}, {0, 1, 0});
    Tensor out = ops::conv_nd(x, w, Tensor(), {1}, {1});
    CHECK(out.shape() == Shape{1, 1, 3});
    CHECK(out.values() == std::vector<float>{1, 2, 3});
}

TEST_CASE("conv1d box kernel with zero padding") {
    Tensor x({1, 1, 3}, {1, 2, 3});
    Tensor w({1, 1, 3}, {1, 1, 1});
    Tensor out = ops::conv_nd(x, w, Tensor(), {1}, {1});
    CHECK(out.values() == std::vector<float>{3, 6, 5});
}

TEST_CASE("conv3d 1x1x1 kernel equals per-voxel channel linear map") {
    Rng rng(11);
    Tensor x = random_tensor({1, 2, 3, 4, 5}, rng);
    Tensor w = random_tensor({3, 2, 1, 1, 1}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor out = ops::conv_nd(x, w, b, {1, 1, 1}, {0, 0, 0});

    std::vector<double> expect(static_cast<size_t>(out.numel()));
    int64_t plane = 3 * 4 * 5;
    for (int64_t co = 0; co < 3; ++co)
        for (int64_t p = 0; p < plane; ++p) {
            double acc = b.data()[co];
            for (int64_t ci = 0; ci < 2; ++ci)
                acc += static_cast<double>(w.data()[co * 2 + ci]) * x.data()[ci * plane + p];
            expect[static_cast<size_t>(co * plane + p)] = acc;
        }
    CHECK(max_rel_diff(to_double(out), expect) < 1e-6);
}

TEST_CASE("conv matches scalar-loop oracle on random shapes") {
    Rng rng(12);
    std::vector<oracle::ConvSpec> cases = {
        {2, 3, 4, {7}, {3}, {1}, {1}},
        {1, 2, 3, {5, 6}, {3, 3}, {2, 1}, {1, 1}},
        {2, 3, 2, {4, 5, 6}, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
        {1, 1, 1, {8, 8, 8}, {3, 5, 5}, {1, 2, 2}, {1, 2, 2}},
    };
    for (const auto& spec : cases) {
        Shape xs{spec.batch, spec.cin};
        for (int64_t s : spec.in_sp) xs.push_back(s);
        Shape ws{spec.cout, spec.cin};
        for (int64_t k : spec.kernel) ws.push_back(k);
        Tensor x = random_tensor(xs, rng);
        Tensor w = random_tensor(ws, rng);
        Tensor b = random_tensor({spec.cout}, rng);
        Tensor out = ops::conv_nd(x, w, b, spec.stride, spec.pad);
        oracle::Vec ref = oracle::conv_ref(to_double(x), to_double(w), to_double(b), spec);
        CHECK(max_rel_diff(to_double(out), ref) < 1e-6);
    }
}

TEST_CASE("conv shape errors") {
    Tensor x({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor w({1, 3, 3}, std::vector<float>(9, 0.f));
    CHECK_THROWS_AS(ops::conv_nd(x, w, Tensor(), {1}, {0}), std::invalid_argument);

    Tensor w2({1, 2, 5}, std::vector<float>(10, 0.f));
    CHECK_THROWS_WITH_AS(ops::conv_nd(x, w2, Tensor(), {1}, {0}), doctest::Contains("zero-size"),
                         std::invalid_argument);
}

TEST_CASE("pool single window examples") {
    Tensor x({1, 1, 2, 2}, {1, 5, 3, 2});
    Tensor mx = ops::pool_nd(x, ops::PoolMode::Max, {2, 2}, {2, 2});
    CHECK(mx.numel() == 1);
    CHECK(mx.item() == 5.0);
    Tensor av = ops::pool_nd(x, ops::PoolMode::Avg, {2, 2}, {2, 2});
    CHECK(av.item() == 2.75);
}

TEST_CASE("global pooling matches scalar scan exactly") {
    Rng rng(13);
    Tensor x = random_tensor({2, 3, 4, 5, 6}, rng);
    std::vector<int64_t> win{4, 5, 6};
    Tensor mx = ops::pool_nd(x, ops::PoolMode::Max, win, win);
    Tensor av = ops::pool_nd(x, ops::PoolMode::Avg, win, win);
    int64_t plane = 4 * 5 * 6;
    for (int64_t bc = 0; bc < 6; ++bc) {
        float best = -1e30f;
        double sum = 0;
        for (int64_t p = 0; p < plane; ++p) {
            float v = x.data()[bc * plane + p];
            best = std::max(best, v);
            sum += v;
        }
        CHECK(mx.data()[bc] == best);
        CHECK(av.data()[bc] == static_cast<float>(sum / static_cast<double>(plane)));
    }
}

TEST_CASE("pool window larger than input errors") {
    Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK_THROWS_AS(ops::pool_nd(x, ops::PoolMode::Max, {3, 3}, {1, 1}), std::invalid_argument);
}

TEST_CASE("avg pool of a constant tensor returns the constant exactly") {
    Tensor x = Tensor::full({1, 2, 6, 6}, 0.37f);
    Tensor out = ops::pool_nd(x, ops::PoolMode::Avg, {3, 3}, {3, 3});
    for (float v : out.values()) CHECK(v == 0.37f);
}

TEST_CASE("max pool backward routes to the first max on ties") {
    Tensor x({1, 1, 4}, {0.5f, 2.0f, 2.0f, 1.0f});
    x.set_requires_grad(true);
    Tensor out = ops::pool_nd(x, ops::PoolMode::Max, {4}, {4});
    ops::sum_all(out).backward();
    CHECK(x.grad() == std::vector<float>{0, 1, 0, 0});
}

TEST_CASE("sigmoid fixed points and gradient at zero") {
    Tensor x = Tensor::zeros({4}, true);
    Tensor y = ops::sigmoid(x);
    for (float v : y.values()) CHECK(v == 0.5f);
    ops::sum_all(y).backward();
    for (float g : x.grad()) CHECK(g == doctest::Approx(0.25).epsilon(1e-7));
}

TEST_CASE("sigmoid output strictly inside (0,1) even when saturated") {
    Tensor x({4}, {-500.f, -100.f, 100.f, 500.f});
    Tensor y = ops::sigmoid(x);
    for (float v : y.values()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("broadcast multiply of channel map over full feature map") {
    Tensor a = Tensor::full({2, 3, 1, 1, 1}, 0.5f);
    Tensor x = Tensor::full({2, 3, 2, 2, 2}, 1.0f);
    Tensor out = ops::mul(a, x);
    CHECK(out.shape() == Shape{2, 3, 2, 2, 2});
    for (float v : out.values()) CHECK(v == 0.5f);
}

TEST_CASE("non-broadcastable shapes error") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 4});
    CHECK_THROWS_AS(ops::add(a, b), std::invalid_argument);
}

TEST_CASE("broadcast ops agree exactly with explicit tiling") {
    Rng rng(14);
    Tensor a = random_tensor({2, 3, 1, 1}, rng);
    Tensor x = random_tensor({2, 3, 4, 5}, rng);

    std::vector<float> tiled(static_cast<size_t>(x.numel()));
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t p = 0; p < 20; ++p)
                tiled[static_cast<size_t>((b * 3 + c) * 20 + p)] = a.data()[b * 3 + c];
    Tensor at(x.shape(), tiled);

    using BinOp = Tensor (*)(const Tensor&, const Tensor&);
    for (BinOp op : {static_cast<BinOp>(ops::mul), static_cast<BinOp>(ops::add),
                     static_cast<BinOp>(ops::sub)}) {
        Tensor lhs = op(a, x);
        Tensor rhs = op(at, x);
        CHECK(lhs.values() == rhs.values());
    }
}

TEST_CASE("gru_cell zero fixed point and half-state") {
    Rng rng(15);
    ParameterStore store;
    nn::GruParams p;
    p.w_ih = store.add("g.w_ih", {12, 3});
    p.w_hh = store.add("g.w_hh", {12, 4});
    p.b_ih = store.add("g.b_ih", {12});
    p.b_hh = store.add("g.b_hh", {12});
    p.hidden = 4;

    Tensor x = Tensor::zeros({2, 3});
    Tensor h0 = Tensor::zeros({2, 4});
    Tensor out = nn::gru_cell(x, h0, p);
    for (float v : out.values()) CHECK(v == 0.0f);

    Tensor hv = random_tensor({2, 4}, rng);
    Tensor out2 = nn::gru_cell(x, hv, p);
    for (int64_t i = 0; i < hv.numel(); ++i)
        CHECK(out2.data()[i] == doctest::Approx(0.5 * hv.data()[i]).epsilon(1e-6));
}

TEST_CASE("gru_cell matches scalar-loop oracle") {
    Rng rng(16);
    for (int trial = 0; trial < 5; ++trial) {
        int64_t in = 3 + trial, hidden = 2 + trial;
        ParameterStore store;
        std::string tag = "g" + std::to_string(trial);
        nn::GruParams p = nn::make_gru(store, tag, in, hidden, rng);
        for (Tensor* t : {&p.b_ih, &p.b_hh})
            for (int64_t i = 0; i < t->numel(); ++i)
                t->data()[i] = static_cast<float>(rng.uniform(-0.5, 0.5));

        Tensor x = random_tensor({1, in}, rng);
        Tensor h = random_tensor({1, hidden}, rng);
        Tensor out = nn::gru_cell(x, h, p);

        oracle::GruRef g{to_double(p.w_ih), to_double(p.w_hh), to_double(p.b_ih),
                         to_double(p.b_hh), in, hidden};
        oracle::Vec ref = oracle::gru_cell_ref(to_double(x), to_double(h), g);
        CHECK(max_rel_diff(to_double(out), ref) < 1e-6);
    }
}

TEST_CASE("gru_cell hidden-size mismatch errors") {
    Rng rng(17);
    ParameterStore store;
    nn::GruParams p = nn::make_gru(store, "g", 3, 4, rng);
    CHECK_THROWS_AS(nn::gru_cell(Tensor::zeros({2, 3}), Tensor::zeros({2, 5}), p),
                    std::invalid_argument);
}

TEST_CASE("grad_check closed form: sum of sigmoid at zero") {
    Tensor x = Tensor::zeros({6}, true);
    double err = grad_check([&]() { return ops::sum_all(ops::sigmoid(x)); }, {x});
    CHECK(err < 1e-5);
}

TEST_CASE("grad_check: sum of conv3d") {
    Rng rng(18);
    Tensor x = random_tensor({1, 2, 3, 4, 4}, rng, -0.5, 0.5, true);
    Tensor w = random_tensor({2, 2, 3, 3, 3}, rng, -0.25, 0.25, true);
    Tensor b = random_tensor({2}, rng, -0.25, 0.25, true);
    double err = grad_check(
        [&]() { return ops::sum_all(ops::conv_nd(x, w, b, {1, 1, 1}, {1, 1, 1})); }, {x, w, b});
    CHECK(err < 1e-4);
}

// Fixed-weight scalar head: distinct per-element upstream gradients without
// stacking extra float roundings onto the probed path.
static Tensor weighted_sum(const Tensor& t, uint64_t salt = 0) {
    Rng rng(0xC0FFEE ^ salt);
    Tensor w = testutil::random_tensor(t.shape(), rng, 0.15, 0.5);
    return ops::sum_all(ops::mul(t, w));
}

TEST_CASE("grad_check across every differentiable op, 5 seeds") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        Rng rng(seed * 100);
        GradCheckOptions opts;
        opts.seed = seed;
        opts.smooth_tol = 0.01;

        // binary + broadcasting
        Tensor a = random_tensor({2, 3, 1}, rng, -0.6, 0.6, true);
        Tensor b = random_tensor({2, 3, 4}, rng, -0.6, 0.6, true);
        CHECK(grad_check([&]() { return weighted_sum(ops::add(a, b)); }, {a, b}, opts) < 1e-4);
        CHECK(grad_check([&]() { return weighted_sum(ops::sub(a, b)); }, {a, b}, opts) < 1e-4);
        CHECK(grad_check([&]() { return weighted_sum(ops::mul(a, b)); }, {a, b}, opts) < 1e-4);

        // unary
        Tensor u = random_tensor({3, 4}, rng, -0.9, 0.9, true);
        CHECK(grad_check([&]() { return weighted_sum(ops::sigmoid(u)); }, {u}, opts) < 1e-4);
        CHECK(grad_check([&]() { return weighted_sum(ops::tanh(u)); }, {u}, opts) < 1e-4);
        CHECK(grad_check([&]() { return weighted_sum(ops::affine(u, 1.7f, -0.2f)); }, {u}, opts) <
              1e-4);
        Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0, true);
        CHECK(grad_check([&]() { return weighted_sum(ops::rsqrt_shift(pos, 1e-5)); }, {pos}, opts) <
              1e-4);
        Tensor nrm = random_tensor({3, 5}, rng, -0.6, 0.6, true);
        CHECK(grad_check([&]() { return weighted_sum(ops::l2_normalize_lastdim(nrm, 1e-12)); },
                         {nrm}, opts) < 1e-4);

        // shape ops
        Tensor s = random_tensor({2, 3, 4}, rng, -0.6, 0.6, true);
        CHECK(grad_check([&]() { return weighted_sum(ops::reshape(s, {4, 6})); }, {s}, opts) < 1e-4);
        CHECK(grad_check([&]() { return weighted_sum(ops::permute(s, {2, 0, 1})); }, {s}, opts) <
              1e-4);
        CHECK(grad_check([&]() { return weighted_sum(ops::narrow(s, 1, 1, 2)); }, {s}, opts) < 1e-4);
        Tensor s2 = random_tensor({2, 2, 4}, rng, -0.6, 0.6, true);
        CHECK(grad_check([&]() { return weighted_sum(ops::concat({s, s2}, 1)); }, {s, s2}, opts) <
              1e-4);

        // reductions
        CHECK(grad_check([&]() { return weighted_sum(ops::reduce_sum(s, {0, 2}, true)); }, {s},
                         opts) < 1e-4);
        CHECK(grad_check([&]() { return weighted_sum(ops::reduce_mean(s, {1}, false)); }, {s},
                         opts) < 1e-4);
        CHECK(grad_check([&]() { return weighted_sum(ops::reduce_max(s, 1, true)); }, {s}, opts) <
              1e-4);

        // linear
        Tensor x = random_tensor({3, 5}, rng, -0.6, 0.6, true);
        Tensor w = random_tensor({4, 5}, rng, -0.6, 0.6, true);
        Tensor bias = random_tensor({4}, rng, -0.6, 0.6, true);
        CHECK(grad_check([&]() { return weighted_sum(ops::linear(x, w, bias)); }, {x, w, bias},
                         opts) < 1e-4);

        // conv and pooling
        Tensor c1x = random_tensor({2, 2, 6}, rng, -0.5, 0.5, true);
        Tensor c1w = random_tensor({3, 2, 3}, rng, -0.4, 0.4, true);
        Tensor c1b = random_tensor({3}, rng, -0.4, 0.4, true);
        CHECK(grad_check([&]() { return weighted_sum(ops::conv_nd(c1x, c1w, c1b, {1}, {1})); },
                         {c1x, c1w, c1b}, opts) < 1e-4);
        Tensor c2x = random_tensor({1, 2, 4, 4}, rng, -0.5, 0.5, true);
        Tensor c2w = random_tensor({2, 2, 3, 3}, rng, -0.3, 0.3, true);
        Tensor c2b = random_tensor({2}, rng, -0.3, 0.3, true);
        CHECK(grad_check([&]() { return weighted_sum(ops::conv_nd(c2x, c2w, c2b, {2, 1}, {1, 1})); },
                         {c2x, c2w, c2b}, opts) < 1e-4);
        Tensor px = random_tensor({1, 2, 6, 6}, rng, -0.6, 0.6, true);
        CHECK(grad_check(
                  [&]() { return weighted_sum(ops::pool_nd(px, ops::PoolMode::Max, {2, 2}, {2, 2})); },
                  {px}, opts) < 1e-4);
        CHECK(grad_check(
                  [&]() { return weighted_sum(ops::pool_nd(px, ops::PoolMode::Avg, {3, 3}, {1, 1})); },
                  {px}, opts) < 1e-4);

        // softmax + nll
        Tensor logits = random_tensor({3, 5}, rng, -0.6, 0.6, true);
        std::vector<int64_t> targets{1, 0, 4};
        CHECK(grad_check(
                  [&]() { return ops::nll_from_probs(ops::softmax_lastdim(logits), targets, -1); },
                  {logits}, opts) < 1e-4);

        // embedding
        Tensor table = random_tensor({6, 4}, rng, -0.6, 0.6, true);
        std::vector<int64_t> ids{0, 3, 3, 5};
        CHECK(grad_check([&]() { return weighted_sum(ops::embedding(table, ids)); }, {table}, opts) <
              1e-4);

        // gru cell
        ParameterStore store;
        nn::GruParams gp = nn::make_gru(store, "g", 4, 3, rng);
        Tensor gx = random_tensor({2, 4}, rng, -0.6, 0.6, true);
        Tensor gh = random_tensor({2, 3}, rng, -0.6, 0.6, true);
        CHECK(grad_check([&]() { return weighted_sum(nn::gru_cell(gx, gh, gp)); },
                         {gx, gh, gp.w_ih, gp.w_hh, gp.b_ih, gp.b_hh}, opts) < 1e-4);

        // batch norm (training mode)
        ParameterStore bstore;
        nn::BatchNorm3d bn(bstore, "bn", 2);
        Tensor bgamma = bstore.get("bn.gamma");
        Tensor bbeta = bstore.get("bn.beta");
        for (int64_t i = 0; i < 2; ++i) {
            bgamma.data()[i] = static_cast<float>(rng.uniform(0.2, 0.5));
            bbeta.data()[i] = static_cast<float>(rng.uniform(-0.2, 0.2));
        }
        Tensor bx = random_tensor({2, 2, 1, 2, 2}, rng, -0.6, 0.6, true);
        CHECK(grad_check([&]() { return weighted_sum(bn.forward(bx, true)); },
                         {bx, bgamma, bbeta}, opts) < 1e-4);
    }
}

TEST_CASE("forward passes are bit-deterministic") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor x = random_tensor({2, 3, 4, 6, 6}, rng);
        Tensor w = random_tensor({4, 3, 3, 3, 3}, rng);
        Tensor b = random_tensor({4}, rng);
        Tensor y = ops::conv_nd(x, w, b, {1, 1, 1}, {1, 1, 1});
        y = ops::pool_nd(ops::sigmoid(y), ops::PoolMode::Avg, {1, 2, 2}, {1, 2, 2});
        return y.values();
    };
    CHECK(run(42) == run(42));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    Rng rng(19);
    ParameterStore store;
    store.add_uniform("layer.weight", {4, 7}, 7, rng);
    store.add_uniform("layer.bias", {4}, 4, rng);
    store.add_buffer("layer.running", {4}, 0.25f);
    store.get("layer.bias").data()[0] = -0.0f;
    store.get("layer.bias").data()[1] = 1.1754944e-38f;

    std::string path = std::filesystem::temp_directory_path() / "malip_ckpt_test.bin";
    save_checkpoint(store, path);

    ParameterStore loaded;
    loaded.add("layer.weight", {4, 7});
    loaded.add("layer.bias", {4});
    loaded.add_buffer("layer.running", {4});
    load_checkpoint(loaded, path);

    for (const auto& name : store.names()) {
        auto a = store.get(name).values();
        auto b = loaded.get(name).values();
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            uint32_t ba, bb;
            std::memcpy(&ba, &a[i], 4);
            std::memcpy(&bb, &b[i], 4);
            CHECK(ba == bb);
        }
    }

    std::string path2 = std::filesystem::temp_directory_path() / "malip_ckpt_test2.bin";
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("checkpoint rejects wrong magic") {
    std::string path = std::filesystem::temp_directory_path() / "malip_ckpt_bad.bin";
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOTMAGIC" << std::string(16, '\0');
    }
    ParameterStore store;
    store.add("w", {2});
    CHECK_THROWS_WITH_AS(load_checkpoint(store, path), doctest::Contains("magic"),
                         std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("non-finite values are detected and named") {
    Tensor t = Tensor::zeros({3});
    t.set_name("frontend.conv1.weight");
    t.data()[1] = std::numeric_limits<float>::infinity();
    CHECK(!all_finite(t));
    CHECK_THROWS_WITH_AS(check_finite(t, "x"), doctest::Contains("frontend.conv1.weight"),
                         std::runtime_error);
}

TEST_CASE("parameter store iteration order is registration order") {
    ParameterStore store;
    store.add("b.z", {1});
    store.add("a.a", {1});
    store.add("m.q", {1});
    CHECK(store.names() == std::vector<std::string>{"b.z", "a.a", "m.q"});
    CHECK_THROWS_AS(store.add("a.a", {1}), std::invalid_argument);
    CHECK_THROWS_AS(store.get("missing"), std::invalid_argument);
}
