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

#include "malip/seq2seq.hpp"

namespace malip {

/// A partial decode: emitted tokens (terminal EOS included once finished),
/// their accumulated log-probability, and the recurrent state to extend from.
struct BeamHypothesis {
    TokenIds tokens;
    double log_prob = 0.0;
    Decoder::State state;
    bool finished = false;
};

struct DecodeOptions {
    int64_t beam_width = 6;
    /// 0 derives 1.5x the encoder length, capped at 200.
    int64_t max_len = 0;
    /// Final ranking by log_prob / len^length_power; raw log_prob when off.
    bool length_normalize = true;
    double length_power = 0.7;
};

int64_t default_max_len(int64_t encoder_steps);

/// Ranking score of a hypothesis under the options.
double hypothesis_score(const BeamHypothesis& h, const DecodeOptions& opts);

/// Length-bounded beam search; PAD and SOS are never emitted. Returns the
/// final candidate pool (finished plus truncated), best first. Ties break
/// toward the lexicographically smaller token sequence.
std::vector<BeamHypothesis> beam_search_hypotheses(const Decoder& decoder,
                                                   const EncoderStates& enc,
                                                   const DecodeOptions& opts);

/// Best beam-search transcript, terminal EOS stripped.
TokenIds beam_search(const Decoder& decoder, const EncoderStates& enc, const DecodeOptions& opts);

/// Argmax decoding until EOS or the length bound; deterministic.
TokenIds greedy_decode(const Decoder& decoder, const EncoderStates& enc, int64_t max_len = 0);

}  // namespace malip
