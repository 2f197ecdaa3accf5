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

#include <utility>
#include <vector>

#include "malip/nn.hpp"

namespace malip {

struct Seq2SeqConfig {
    int64_t input_dim = 0;   // width of the refined per-frame feature
    int64_t vocab = 0;
    int64_t enc_hidden = 256;  // per direction
    int64_t dec_hidden = 512;
    int64_t embed_dim = 256;
    int64_t attn_dim = 128;
};

/// Per-step encoder states plus the summary used to prime the decoder.
struct EncoderStates {
    Tensor states;  // T x B x 2H, forward/backward halves concatenated
    Tensor final;   // B x 2H: forward state at t=T-1, backward state at t=0
    int64_t steps = 0;
    int64_t batch = 0;
    int64_t width = 0;  // 2H
};

/// Two-layer bidirectional GRU over [B x T x F] feature sequences.
class Encoder {
public:
    Encoder() = default;
    Encoder(ParameterStore& store, const Seq2SeqConfig& cfg, Rng& rng);

    EncoderStates forward(const Tensor& seq) const;

private:
    nn::GruParams l0_fwd_, l0_bwd_, l1_fwd_, l1_bwd_;
    int64_t input_dim_ = 0;
};

/// score_t = v . tanh(W1 h_t^e + W2 h_d + b); alpha = softmax over t;
/// ctx = sum_t alpha_t h_t^e.
class AdditiveAttention {
public:
    AdditiveAttention() = default;
    AdditiveAttention(ParameterStore& store, const std::string& prefix, int64_t enc_width,
                      int64_t dec_width, int64_t attn_dim, Rng& rng);

    /// Returns (context [B x 2H], alpha [B x T]).
    std::pair<Tensor, Tensor> attend(const Tensor& h_dec, const EncoderStates& enc) const;

private:
    nn::LinearLayer enc_proj_;  // carries the shared bias
    nn::LinearLayer dec_proj_;
    nn::LinearLayer score_;     // [1 x attn_dim], no bias
};

/// Two-layer unidirectional GRU decoder with additive attention over the
/// encoder states; emits softmax distributions over the vocabulary.
class Decoder {
public:
    struct State {
        Tensor h0, h1;  // each B x dec_hidden
    };

    struct StepOut {
        Tensor probs;  // B x V, rows sum to 1
        State state;
        Tensor alpha;  // B x T
    };

    Decoder() = default;
    Decoder(ParameterStore& store, const Seq2SeqConfig& cfg, Rng& rng);

    /// Learned projection of the encoder summary.
    State initial_state(const EncoderStates& enc) const;

    StepOut step(const std::vector<int64_t>& prev_tokens, const State& state,
                 const EncoderStates& enc) const;

    int64_t vocab() const { return cfg_.vocab; }

private:
    Seq2SeqConfig cfg_;
    Tensor embedding_;  // V x E
    nn::GruParams l0_, l1_;
    AdditiveAttention attn_;
    nn::LinearLayer out_;           // V x (2H_enc + dec_hidden)
    nn::LinearLayer init0_, init1_;  // dec_hidden x 2H_enc
};

/// -sum_i log P(y_i) over non-PAD target positions, summed within a sample
/// and averaged over the batch. step_probs[i] is the step-i distribution
/// [B x V]; targets are per-sample sequences ending in EOS (not padded).
Tensor nll_loss(const std::vector<Tensor>& step_probs, const std::vector<TokenIds>& targets);

/// Per-sample -sum log P, computed outside the graph.
std::vector<double> per_sample_nll(const std::vector<Tensor>& step_probs,
                                   const std::vector<TokenIds>& targets);

}  // namespace malip
