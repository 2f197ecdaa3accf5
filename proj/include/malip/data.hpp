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

#include <string>
#include <vector>

#include "malip/tensor.hpp"

namespace malip {

/// Parameters of the synthetic "viseme" video task: every non-reserved token
/// renders as a distinct mouth ellipse, so transcripts are recoverable from
/// pixels alone.
struct SynthSpec {
    int64_t vocab_size = 8;       // includes PAD/SOS/EOS
    int64_t min_tokens = 2;
    int64_t max_tokens = 5;
    int64_t frames_per_token = 3;
    int64_t frame_h = 16;
    int64_t frame_w = 32;
    double noise_sigma = 0.05;
    uint64_t seed = 1;
    int64_t n_samples = 100;
};

/// One clip: grayscale frames in [0,1] plus the transcript (content tokens
/// terminated by EOS).
struct Sample {
    int64_t t = 0, h = 0, w = 0;
    std::vector<float> frames;  // t*h*w values
    TokenIds label;
};

struct Dataset {
    int64_t vocab_size = 0;
    std::vector<Sample> samples;
};

/// Renders the grayscale mouth frame for a token id (or the neutral closed
/// shape for silence when id < 0). Noise-free.
std::vector<float> render_token_frame(const SynthSpec& spec, int64_t token_id);

/// Deterministic generation: per-sample streams are derived from the master
/// seed, so the result is byte-identical for equal specs. Each clip carries
/// frames_per_token leading and trailing silence frames.
Dataset generate(const SynthSpec& spec);

/// Binary container: magic "MALPDATA", version u32 LE, sample count u32 LE,
/// vocab u32 LE; per sample: T,H,W u32 LE, frames float32 LE, label length
/// u32 LE, token ids u32 LE. Trailing bytes are an error.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Streaming access for sample-at-a-time iteration.
class DatasetReader {
public:
    explicit DatasetReader(const std::string& path);
    ~DatasetReader();
    DatasetReader(const DatasetReader&) = delete;
    DatasetReader& operator=(const DatasetReader&) = delete;

    int64_t size() const { return count_; }
    int64_t vocab_size() const { return vocab_; }

    /// Reads the next sample; false once the declared count is exhausted
    /// (after validating that no trailing bytes remain).
    bool next(Sample& out);

private:
    struct Impl;
    Impl* impl_;
    int64_t count_ = 0;
    int64_t vocab_ = 0;
};

enum class Split { Train, Val, Test };

/// Stable 80/10/10 split by hash of the sample index; independent of seeds.
Split split_of(int64_t index);

std::vector<int64_t> split_indices(const Dataset& ds, Split split);

/// A training/eval batch: clips padded with zero frames to the batch maximum
/// and replicated to 3 channels; labels stay per-sample (content + EOS).
struct Batch {
    Tensor clips;  // B x 3 x T x H x W
    std::vector<TokenIds> labels;
};

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& indices);

}  // namespace malip
