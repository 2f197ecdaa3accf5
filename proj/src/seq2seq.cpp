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

#include "malip/seq2seq.hpp"

#include <cmath>

namespace malip {

// ---- Encoder ----

Encoder::Encoder(ParameterStore& store, const Seq2SeqConfig& cfg, Rng& rng)
    : input_dim_(cfg.input_dim) {
    int64_t h = cfg.enc_hidden;
    l0_fwd_ = nn::make_gru(store, "encoder.l0.fwd", cfg.input_dim, h, rng);
    l0_bwd_ = nn::make_gru(store, "encoder.l0.bwd", cfg.input_dim, h, rng);
    l1_fwd_ = nn::make_gru(store, "encoder.l1.fwd", 2 * h, h, rng);
    l1_bwd_ = nn::make_gru(store, "encoder.l1.bwd", 2 * h, h, rng);
}

namespace {

// Bidirectional pass over per-step inputs; returns per-step [B x 2H] concats
// plus the two terminal states.
struct BiOut {
    std::vector<Tensor> steps;
    Tensor fwd_last, bwd_first;
};

BiOut run_bidirectional(const std::vector<Tensor>& xs, const nn::GruParams& fwd,
                        const nn::GruParams& bwd) {
    int64_t t = static_cast<int64_t>(xs.size());
    int64_t batch = xs[0].size(0);
    std::vector<Tensor> hf(static_cast<size_t>(t)), hb(static_cast<size_t>(t));
    Tensor h = Tensor::zeros({batch, fwd.hidden});
    for (int64_t i = 0; i < t; ++i) {
        h = nn::gru_cell(xs[static_cast<size_t>(i)], h, fwd);
        hf[static_cast<size_t>(i)] = h;
    }
    BiOut out;
    out.fwd_last = h;
    h = Tensor::zeros({batch, bwd.hidden});
    for (int64_t i = t - 1; i >= 0; --i) {
        h = nn::gru_cell(xs[static_cast<size_t>(i)], h, bwd);
        hb[static_cast<size_t>(i)] = h;
    }
    out.bwd_first = h;
    out.steps.resize(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i)
        out.steps[static_cast<size_t>(i)] =
            ops::concat({hf[static_cast<size_t>(i)], hb[static_cast<size_t>(i)]}, 1);
    return out;
}

}  // namespace

EncoderStates Encoder::forward(const Tensor& seq) const {
    check_arg(seq.rank() == 3, "encoder: expected [B x T x F], got " + shape_str(seq.shape()));
    check_arg(seq.size(2) == input_dim_, "encoder: feature width " + std::to_string(seq.size(2)) +
                                             " does not match params (" +
                                             std::to_string(input_dim_) + ")");
    int64_t batch = seq.size(0), t = seq.size(1), f = seq.size(2);
    std::vector<Tensor> xs(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i)
        xs[static_cast<size_t>(i)] = ops::reshape(ops::narrow(seq, 1, i, 1), {batch, f});

    BiOut l0 = run_bidirectional(xs, l0_fwd_, l0_bwd_);
    BiOut l1 = run_bidirectional(l0.steps, l1_fwd_, l1_bwd_);

    std::vector<Tensor> rows(static_cast<size_t>(t));
    int64_t width = l1.steps[0].size(1);
    for (int64_t i = 0; i < t; ++i)
        rows[static_cast<size_t>(i)] = ops::reshape(l1.steps[static_cast<size_t>(i)], {1, batch, width});

    EncoderStates out;
    out.states = ops::concat(rows, 0);
    out.final = ops::concat({l1.fwd_last, l1.bwd_first}, 1);
    out.steps = t;
    out.batch = batch;
    out.width = width;
    return out;
}

// ---- AdditiveAttention ----

AdditiveAttention::AdditiveAttention(ParameterStore& store, const std::string& prefix,
                                     int64_t enc_width, int64_t dec_width, int64_t attn_dim,
                                     Rng& rng) {
    enc_proj_ = nn::make_linear(store, prefix + ".enc_proj", enc_width, attn_dim, rng, true);
    dec_proj_ = nn::make_linear(store, prefix + ".dec_proj", dec_width, attn_dim, rng, false);
    score_ = nn::make_linear(store, prefix + ".score", attn_dim, 1, rng, false);
}

std::pair<Tensor, Tensor> AdditiveAttention::attend(const Tensor& h_dec,
                                                    const EncoderStates& enc) const {
    int64_t t = enc.steps, b = enc.batch, w = enc.width;
    int64_t a = enc_proj_.w.size(0);
    // Queries may outnumber the encoder batch (beam search runs several
    // hypotheses against one sample's states); `rows` is the query count.
    int64_t rows = h_dec.size(0);
    check_arg(rows == b || b == 1, "attend: query batch " + std::to_string(rows) +
                                       " incompatible with encoder batch " + std::to_string(b));
    Tensor pe = ops::reshape(nn::apply(enc_proj_, ops::reshape(enc.states, {t * b, w})), {t, b, a});
    Tensor pd = ops::reshape(nn::apply(dec_proj_, h_dec), {1, rows, a});
    Tensor scores = nn::apply(score_, ops::reshape(ops::tanh(ops::add(pe, pd)), {t * rows, a}));
    Tensor alpha = ops::softmax_lastdim(ops::permute(ops::reshape(scores, {t, rows}), {1, 0}));
    Tensor weights = ops::reshape(ops::permute(alpha, {1, 0}), {t, rows, 1});
    Tensor ctx = ops::reduce_sum(ops::mul(weights, enc.states), {0}, false);  // rows x 2H
    return {ctx, alpha};
}

// ---- Decoder ----

Decoder::Decoder(ParameterStore& store, const Seq2SeqConfig& cfg, Rng& rng) : cfg_(cfg) {
    check_arg(cfg.vocab >= kNumReservedIds, "decoder: vocabulary must include PAD/SOS/EOS");
    embedding_ = store.add_uniform("decoder.embedding", {cfg.vocab, cfg.embed_dim}, cfg.embed_dim,
                                   rng);
    l0_ = nn::make_gru(store, "decoder.l0", cfg.embed_dim, cfg.dec_hidden, rng);
    l1_ = nn::make_gru(store, "decoder.l1", cfg.dec_hidden, cfg.dec_hidden, rng);
    attn_ = AdditiveAttention(store, "decoder.attn", 2 * cfg.enc_hidden, cfg.dec_hidden,
                              cfg.attn_dim, rng);
    out_ = nn::make_linear(store, "decoder.out", 2 * cfg.enc_hidden + cfg.dec_hidden, cfg.vocab,
                           rng, true);
    init0_ = nn::make_linear(store, "decoder.init0", 2 * cfg.enc_hidden, cfg.dec_hidden, rng, true);
    init1_ = nn::make_linear(store, "decoder.init1", 2 * cfg.enc_hidden, cfg.dec_hidden, rng, true);
}

Decoder::State Decoder::initial_state(const EncoderStates& enc) const {
    State s;
    s.h0 = ops::tanh(nn::apply(init0_, enc.final));
    s.h1 = ops::tanh(nn::apply(init1_, enc.final));
    return s;
}

Decoder::StepOut Decoder::step(const std::vector<int64_t>& prev_tokens, const State& state,
                               const EncoderStates& enc) const {
    for (int64_t id : prev_tokens)
        check_arg(id >= 0 && id < cfg_.vocab,
                  "decoder: token id " + std::to_string(id) + " out of range [0," +
                      std::to_string(cfg_.vocab) + ")");
    Tensor emb = ops::embedding(embedding_, prev_tokens);
    StepOut out;
    out.state.h0 = nn::gru_cell(emb, state.h0, l0_);
    out.state.h1 = nn::gru_cell(out.state.h0, state.h1, l1_);
    auto [ctx, alpha] = attn_.attend(out.state.h1, enc);
    out.alpha = alpha;
    Tensor logits = nn::apply(out_, ops::concat({ctx, out.state.h1}, 1));
    out.probs = ops::softmax_lastdim(logits);
    return out;
}

// ---- losses ----

Tensor nll_loss(const std::vector<Tensor>& step_probs, const std::vector<TokenIds>& targets) {
    check_arg(!step_probs.empty(), "nll_loss: no step distributions");
    int64_t batch = step_probs[0].size(0);
    check_arg(static_cast<int64_t>(targets.size()) == batch,
              "nll_loss: batch size mismatch between distributions and targets");
    size_t max_len = 0;
    for (const TokenIds& t : targets) max_len = std::max(max_len, t.size());
    check_arg(step_probs.size() >= max_len,
              "nll_loss: need one distribution per non-PAD target position");

    Tensor total;
    for (size_t i = 0; i < max_len; ++i) {
        std::vector<int64_t> step_targets(static_cast<size_t>(batch), kPadId);
        for (int64_t s = 0; s < batch; ++s) {
            const TokenIds& t = targets[static_cast<size_t>(s)];
            if (i < t.size()) step_targets[static_cast<size_t>(s)] = t[i];
        }
        Tensor step = ops::nll_from_probs(step_probs[i], step_targets, kPadId);
        total = total.defined() ? ops::add(total, step) : step;
    }
    return ops::affine(total, 1.0f / static_cast<float>(batch), 0.0f);
}

std::vector<double> per_sample_nll(const std::vector<Tensor>& step_probs,
                                   const std::vector<TokenIds>& targets) {
    int64_t batch = step_probs.empty() ? 0 : step_probs[0].size(0);
    std::vector<double> out(static_cast<size_t>(batch), 0.0);
    for (int64_t s = 0; s < batch; ++s) {
        const TokenIds& t = targets[static_cast<size_t>(s)];
        for (size_t i = 0; i < t.size() && i < step_probs.size(); ++i) {
            int64_t v = step_probs[i].size(1);
            float p = step_probs[i].data()[s * v + t[i]];
            out[static_cast<size_t>(s)] -= std::log(static_cast<double>(p));
        }
    }
    return out;
}

}  // namespace malip
