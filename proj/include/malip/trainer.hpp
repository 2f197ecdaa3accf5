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

#include <memory>

#include "malip/config.hpp"
#include "malip/decoding.hpp"
#include "malip/model.hpp"

namespace malip {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over the trainable entries of a ParameterStore.
class Adam {
public:
    Adam(ParameterStore& store, AdamConfig cfg);
    void step();

private:
    AdamConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_, v_;
    int64_t t_ = 0;
};

/// One optimization step: forward with scheduled sampling, backward, Adam
/// update. Aborts naming the first non-finite tensor if anything blows up.
double train_step(const Model& model, ParameterStore& store, Adam& opt, const Batch& batch,
                  double ss_ratio, Rng& rng, const Ablation& ablation);

struct MetricsRow {
    int64_t epoch = 0;
    std::string split;
    double loss = 0.0;
    double error_rate = 0.0;
    double ss_ratio = 0.0;
    double wall_seconds = 0.0;
};

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

/// Model plus the store its parameters live in.
struct TrainedModel {
    ModelConfig model_cfg;
    std::shared_ptr<ParameterStore> store;
    std::shared_ptr<Model> model;
};

ModelConfig model_config_from(const RunConfig& cfg, int64_t frame_h, int64_t frame_w,
                              int64_t vocab);

TrainedModel build_model(const RunConfig& cfg, int64_t frame_h, int64_t frame_w, int64_t vocab,
                         Rng& rng);

/// Teacher-forced mean loss over the index set (eval mode, no grads).
double mean_loss(const Model& model, const Dataset& ds, const std::vector<int64_t>& indices,
                 int64_t batch_size, const Ablation& ablation);

/// Micro-averaged token error rate of decoded transcripts vs references.
double corpus_token_error_rate(const Model& model, const Dataset& ds,
                               const std::vector<int64_t>& indices, bool beam,
                               int64_t beam_width, const Ablation& ablation);

struct TrainResult {
    std::vector<MetricsRow> rows;
    double test_error_rate = 0.0;         // beam decode
    double test_error_rate_greedy = 0.0;  // filled when requested
};

/// Full training run driven by the RunConfig: deterministic given the seed.
/// When write_files is set, metrics.csv, config.effective and model.ckpt are
/// written into cfg.out_dir. The trained model is returned through out_model
/// when non-null.
TrainResult train_model(const RunConfig& cfg, const Dataset& ds, const Ablation& ablation,
                        bool write_files, TrainedModel* out_model = nullptr,
                        bool compute_greedy_test = false);

}  // namespace malip
