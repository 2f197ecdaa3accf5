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

#include "malip/attention.hpp"
#include "malip/data.hpp"
#include "malip/frontend.hpp"
#include "malip/seq2seq.hpp"

namespace malip {

struct ModelConfig {
    FrontendConfig frontend;
    int64_t frame_h = 64;
    int64_t frame_w = 128;
    int64_t vocab = 0;
    int64_t reduction_ratio = 16;
    int64_t n_subbranches = 3;
    int64_t enc_hidden = 256;
    int64_t dec_hidden = 512;
    int64_t embed_dim = 256;
    int64_t attn_dim = 128;

    int64_t feature_h() const { return frame_h / Frontend::kSpatialReduction; }
    int64_t feature_w() const { return frame_w / Frontend::kSpatialReduction; }
    int64_t feature_dim() const {
        return frontend.channels.back() * feature_h() * feature_w();
    }
};

/// The complete lipreading network: 3D-CNN front-end, the CA/JSTA/SSTA
/// purification chain, and the attention-based GRU seq2seq decoder.
class Model {
public:
    Model(const ModelConfig& cfg, ParameterStore& store, Rng& rng);

    /// Front-end + attention chain: [B x 3 x T x H x W] -> [B x T x F].
    Tensor refine(const Tensor& clips, bool training, const Ablation& ablation,
                  AttentionTrace* trace = nullptr) const;

    EncoderStates encode(const Tensor& clips, bool training, const Ablation& ablation,
                         AttentionTrace* trace = nullptr) const;

    struct LossOut {
        Tensor loss;                           // scalar, graph-attached
        std::vector<double> per_sample;        // -sum log P per sample
        std::vector<TokenIds> decoder_inputs;  // per step, tokens fed at that step
    };

    /// Teacher-forced / scheduled-sampling forward. ss_ratio is the
    /// probability of feeding the gold previous token at each step; the rng
    /// is consumed one draw per (step, sample) regardless of the ratio.
    LossOut loss(const Batch& batch, bool training, double ss_ratio, Rng& rng,
                 const Ablation& ablation, AttentionTrace* trace = nullptr) const;

    const Decoder& decoder() const { return decoder_; }
    const Frontend& frontend() const { return frontend_; }
    const AttentionStack& attention() const { return attention_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    Frontend frontend_;
    AttentionStack attention_;
    Encoder encoder_;
    Decoder decoder_;
};

/// Builds a ModelConfig whose attention/seq2seq extents match the frontend
/// geometry for the given frame size and vocabulary.
ModelConfig make_model_config(int64_t frame_h, int64_t frame_w, int64_t vocab,
                              std::vector<int64_t> channels, int64_t reduction_ratio,
                              int64_t n_subbranches, int64_t enc_hidden, int64_t dec_hidden,
                              int64_t embed_dim, int64_t attn_dim);

}  // namespace malip
