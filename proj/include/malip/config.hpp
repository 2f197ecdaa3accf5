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

#include <map>
#include <string>
#include <vector>

#include "malip/data.hpp"

namespace malip {

/// Run hyperparameters. Profile defaults: "cmlr" (epochs 60, batch 8,
/// lr 2e-4, N=3), "grid" (epochs 30, batch 16, lr 3e-4, N=4), both with beam
/// width 6 at full model scale; "toy" is the desk-scale profile.
struct RunConfig {
    std::string profile = "toy";
    int64_t epochs = 10;
    int64_t batch_size = 8;
    double learning_rate = 1e-3;
    int64_t ssta_branches = 3;
    int64_t beam_width = 6;
    uint64_t seed = 1;
    std::string data_path;
    std::string out_dir = "out";

    // Model scale.
    std::vector<int64_t> frontend_channels{8, 16, 24};
    int64_t enc_hidden = 64;
    int64_t dec_hidden = 96;
    int64_t embed_dim = 32;
    int64_t attn_dim = 48;
    int64_t ca_ratio = 4;

    // Scheduled sampling decays linearly across epochs.
    double ss_start = 1.0;
    double ss_end = 0.5;
};

RunConfig profile_defaults(const std::string& profile);

/// Flat key=value text ('#' comments). A "profile" key applies that
/// profile's defaults first; remaining keys override them.
RunConfig parse_config(const std::map<std::string, std::string>& kv);
RunConfig load_config_file(const std::string& path);
std::map<std::string, std::string> read_kv_file(const std::string& path);

/// Echo of the effective configuration, parseable by load_config_file.
void write_effective_config(const RunConfig& cfg, const std::string& path);

/// SynthSpec from the same key=value format (keys: vocab_size, n_samples,
/// min_tokens, max_tokens, frames_per_token, frame_h, frame_w, noise_sigma,
/// seed).
SynthSpec parse_synth_spec(const std::map<std::string, std::string>& kv);
SynthSpec load_synth_spec_file(const std::string& path);

}  // namespace malip
