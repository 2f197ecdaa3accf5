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

#include "malip/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "malip/metrics.hpp"

namespace malip {

Adam::Adam(ParameterStore& store, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& name : store.names()) {
        Tensor t = store.get(name);
        if (!t.requires_grad()) continue;
        params_.push_back(t);
        m_.emplace_back(static_cast<size_t>(t.numel()), 0.0f);
        v_.emplace_back(static_cast<size_t>(t.numel()), 0.0f);
    }
}

void Adam::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t p = 0; p < params_.size(); ++p) {
        Tensor& t = params_[p];
        if (!t.has_grad()) continue;
        const float* g = t.grad().data();
        float* x = t.data();
        float* m = m_[p].data();
        float* v = v_[p].data();
        int64_t n = t.numel();
        for (int64_t i = 0; i < n; ++i) {
            double gi = g[i];
            double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            double update = cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
            x[i] = static_cast<float>(x[i] - update);
        }
    }
}

double train_step(const Model& model, ParameterStore& store, Adam& opt, const Batch& batch,
                  double ss_ratio, Rng& rng, const Ablation& ablation) {
    store.zero_grads();
    Model::LossOut out = model.loss(batch, true, ss_ratio, rng, ablation);
    double loss = out.loss.item();
    if (!std::isfinite(loss)) fail("train_step: non-finite loss");
    out.loss.backward();
    std::string bad = store.first_non_finite();
    if (!bad.empty()) fail("train_step: non-finite gradient in tensor '" + bad + "'");
    opt.step();
    bad = store.first_non_finite();
    if (!bad.empty()) fail("train_step: non-finite value in tensor '" + bad + "' after update");
    return loss;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail("metrics: cannot write '" + path + "'");
    os << "epoch,split,loss,error_rate,ss_ratio,wall_seconds\n";
    char buf[160];
    for (const MetricsRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%s,%.9g,%.9g,%.9g,%.3f",
                      static_cast<long long>(r.epoch), r.split.c_str(), r.loss, r.error_rate,
                      r.ss_ratio, r.wall_seconds);
        os << buf << "\n";
    }
}

ModelConfig model_config_from(const RunConfig& cfg, int64_t frame_h, int64_t frame_w,
                              int64_t vocab) {
    return make_model_config(frame_h, frame_w, vocab, cfg.frontend_channels, cfg.ca_ratio,
                             cfg.ssta_branches, cfg.enc_hidden, cfg.dec_hidden, cfg.embed_dim,
                             cfg.attn_dim);
}

TrainedModel build_model(const RunConfig& cfg, int64_t frame_h, int64_t frame_w, int64_t vocab,
                         Rng& rng) {
    TrainedModel tm;
    tm.model_cfg = model_config_from(cfg, frame_h, frame_w, vocab);
    tm.store = std::make_shared<ParameterStore>();
    tm.model = std::make_shared<Model>(tm.model_cfg, *tm.store, rng);
    return tm;
}

double mean_loss(const Model& model, const Dataset& ds, const std::vector<int64_t>& indices,
                 int64_t batch_size, const Ablation& ablation) {
    autograd::NoGradGuard no_grad;
    Rng rng(0);  // unused at ss=1, but the interface consumes draws
    double total = 0.0;
    int64_t count = 0;
    for (size_t at = 0; at < indices.size(); at += static_cast<size_t>(batch_size)) {
        std::vector<int64_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(at),
                                   indices.begin() +
                                       static_cast<std::ptrdiff_t>(
                                           std::min(indices.size(), at + static_cast<size_t>(batch_size))));
        Batch batch = make_batch(ds, chunk);
        Model::LossOut out = model.loss(batch, false, 1.0, rng, ablation);
        for (double l : out.per_sample) total += l;
        count += static_cast<int64_t>(chunk.size());
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

double corpus_token_error_rate(const Model& model, const Dataset& ds,
                               const std::vector<int64_t>& indices, bool beam,
                               int64_t beam_width, const Ablation& ablation) {
    autograd::NoGradGuard no_grad;
    CorpusRate corpus;
    for (int64_t idx : indices) {
        Batch one = make_batch(ds, {idx});
        EncoderStates enc = model.encode(one.clips, false, ablation);
        TokenIds hyp;
        if (beam) {
            DecodeOptions opts;
            opts.beam_width = beam_width;
            hyp = beam_search(model.decoder(), enc, opts);
        } else {
            hyp = greedy_decode(model.decoder(), enc);
        }
        TokenIds ref = one.labels[0];
        if (!ref.empty() && ref.back() == kEosId) ref.pop_back();
        corpus.add(edit_distance(ref, hyp));
    }
    return corpus.rate();
}

TrainResult train_model(const RunConfig& cfg, const Dataset& ds, const Ablation& ablation,
                        bool write_files, TrainedModel* out_model, bool compute_greedy_test) {
    check_arg(!ds.samples.empty(), "train: empty dataset");
    check_arg(cfg.batch_size >= 1 && cfg.epochs >= 1, "train: bad epochs/batch size");
    int64_t frame_h = ds.samples[0].h, frame_w = ds.samples[0].w;

    Rng rng(cfg.seed);
    TrainedModel tm = build_model(cfg, frame_h, frame_w, ds.vocab_size, rng);
    Model& model = *tm.model;
    ParameterStore& store = *tm.store;

    Adam opt(store, AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});

    std::vector<int64_t> train_idx = split_indices(ds, Split::Train);
    std::vector<int64_t> val_idx = split_indices(ds, Split::Val);
    std::vector<int64_t> test_idx = split_indices(ds, Split::Test);
    check_arg(!train_idx.empty(), "train: no samples fall in the train split");

    std::vector<int64_t> train_probe(train_idx.begin(),
                                     train_idx.begin() +
                                         static_cast<std::ptrdiff_t>(
                                             std::min<size_t>(100, train_idx.size())));

    auto start = std::chrono::steady_clock::now();
    auto elapsed = [&]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    TrainResult result;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double frac = cfg.epochs > 1
                          ? static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1)
                          : 0.0;
        double ss = cfg.ss_start - (cfg.ss_start - cfg.ss_end) * frac;

        // Fisher-Yates with the run's own stream.
        std::vector<int64_t> order = train_idx;
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

        double loss_sum = 0.0;
        int64_t n_batches = 0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
            std::vector<int64_t> chunk(
                order.begin() + static_cast<std::ptrdiff_t>(at),
                order.begin() + static_cast<std::ptrdiff_t>(
                                    std::min(order.size(), at + static_cast<size_t>(cfg.batch_size))));
            Batch batch = make_batch(ds, chunk);
            loss_sum += train_step(model, store, opt, batch, ss, rng, ablation);
            ++n_batches;
        }

        double train_er = corpus_token_error_rate(model, ds, train_probe, false, 0, ablation);
        result.rows.push_back({epoch, "train", loss_sum / static_cast<double>(n_batches), train_er,
                               ss, elapsed()});
        if (!val_idx.empty()) {
            double vl = mean_loss(model, ds, val_idx, cfg.batch_size, ablation);
            double ver = corpus_token_error_rate(model, ds, val_idx, false, 0, ablation);
            result.rows.push_back({epoch, "val", vl, ver, ss, elapsed()});
        }
        std::cerr << "epoch " << epoch << " loss " << (loss_sum / std::max<int64_t>(1, n_batches))
                  << " train_er " << train_er << " ss " << ss << "\n";
    }

    if (!test_idx.empty()) {
        double tl = mean_loss(model, ds, test_idx, cfg.batch_size, ablation);
        result.test_error_rate =
            corpus_token_error_rate(model, ds, test_idx, true, cfg.beam_width, ablation);
        result.rows.push_back(
            {cfg.epochs, "test", tl, result.test_error_rate, cfg.ss_end, elapsed()});
        if (compute_greedy_test)
            result.test_error_rate_greedy =
                corpus_token_error_rate(model, ds, test_idx, false, 0, ablation);
    }

    if (write_files) {
        std::filesystem::create_directories(cfg.out_dir);
        write_metrics_csv(result.rows, cfg.out_dir + "/metrics.csv");
        write_effective_config(cfg, cfg.out_dir + "/config.effective");
        save_checkpoint(store, cfg.out_dir + "/model.ckpt");
    }
    if (out_model) *out_model = std::move(tm);
    return result;
}

}  // namespace malip
