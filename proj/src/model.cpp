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

#include "malip/model.hpp"

namespace malip {

ModelConfig make_model_config(int64_t frame_h, int64_t frame_w, int64_t vocab,
                              std::vector<int64_t> channels, int64_t reduction_ratio,
                              int64_t n_subbranches, int64_t enc_hidden, int64_t dec_hidden,
                              int64_t embed_dim, int64_t attn_dim) {
    ModelConfig cfg;
    cfg.frontend.channels = std::move(channels);
    cfg.frame_h = frame_h;
    cfg.frame_w = frame_w;
    cfg.vocab = vocab;
    cfg.reduction_ratio = reduction_ratio;
    cfg.n_subbranches = n_subbranches;
    cfg.enc_hidden = enc_hidden;
    cfg.dec_hidden = dec_hidden;
    cfg.embed_dim = embed_dim;
    cfg.attn_dim = attn_dim;
    return cfg;
}

Model::Model(const ModelConfig& cfg, ParameterStore& store, Rng& rng) : cfg_(cfg) {
    frontend_ = Frontend(store, cfg.frontend, rng);

    AttentionConfig acfg;
    acfg.reduction_ratio = cfg.reduction_ratio;
    acfg.n_subbranches = cfg.n_subbranches;
    acfg.channels = cfg.frontend.channels.back();
    acfg.height = cfg.feature_h();
    acfg.width = cfg.feature_w();
    attention_ = AttentionStack(store, acfg, rng);

    Seq2SeqConfig scfg;
    scfg.input_dim = cfg.feature_dim();
    scfg.vocab = cfg.vocab;
    scfg.enc_hidden = cfg.enc_hidden;
    scfg.dec_hidden = cfg.dec_hidden;
    scfg.embed_dim = cfg.embed_dim;
    scfg.attn_dim = cfg.attn_dim;
    encoder_ = Encoder(store, scfg, rng);
    decoder_ = Decoder(store, scfg, rng);
}

Tensor Model::refine(const Tensor& clips, bool training, const Ablation& ablation,
                     AttentionTrace* trace) const {
    Tensor features = frontend_.forward(clips, training);
    return attention_.apply_all(features, ablation, trace);
}

EncoderStates Model::encode(const Tensor& clips, bool training, const Ablation& ablation,
                            AttentionTrace* trace) const {
    return encoder_.forward(refine(clips, training, ablation, trace));
}

Model::LossOut Model::loss(const Batch& batch, bool training, double ss_ratio, Rng& rng,
                           const Ablation& ablation, AttentionTrace* trace) const {
    check_arg(ss_ratio >= 0.0 && ss_ratio <= 1.0, "loss: ss_ratio outside [0,1]");
    int64_t b = batch.clips.size(0);
    check_arg(static_cast<int64_t>(batch.labels.size()) == b, "loss: label count mismatch");

    EncoderStates enc = encode(batch.clips, training, ablation, trace);
    Decoder::State state = decoder_.initial_state(enc);

    size_t steps = 0;
    for (const TokenIds& t : batch.labels) steps = std::max(steps, t.size());
    check_arg(steps > 0, "loss: empty targets");

    LossOut out;
    std::vector<Tensor> step_probs;
    std::vector<int64_t> inputs(static_cast<size_t>(b), kSosId);
    for (size_t i = 0; i < steps; ++i) {
        out.decoder_inputs.push_back(inputs);
        Decoder::StepOut step = decoder_.step(inputs, state, enc);
        step_probs.push_back(step.probs);
        state = step.state;

        if (i + 1 < steps) {
            // Next input per sample: gold token with probability ss_ratio,
            // otherwise the model's own argmax. One draw per (step, sample)
            // keeps the rng stream identical across ratios.
            const float* probs = step.probs.data();
            int64_t v = step.probs.size(1);
            for (int64_t s = 0; s < b; ++s) {
                bool use_gold = rng.uniform() < ss_ratio;
                const TokenIds& label = batch.labels[static_cast<size_t>(s)];
                int64_t gold = i < label.size() ? label[i] : kPadId;
                if (use_gold) {
                    inputs[static_cast<size_t>(s)] = gold;
                } else {
                    const float* row = probs + s * v;
                    int64_t best = 0;
                    for (int64_t k = 1; k < v; ++k)
                        if (row[k] > row[best]) best = k;
                    inputs[static_cast<size_t>(s)] = best;
                }
            }
        }
    }

    out.loss = nll_loss(step_probs, batch.labels);
    out.per_sample = per_sample_nll(step_probs, batch.labels);
    return out;
}

}  // namespace malip
