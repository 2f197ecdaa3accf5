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

#include "malip/decoding.hpp"

#include <algorithm>
#include <cmath>

namespace malip {

int64_t default_max_len(int64_t encoder_steps) {
    return std::min<int64_t>(200, std::max<int64_t>(1, (3 * encoder_steps + 1) / 2));
}

double hypothesis_score(const BeamHypothesis& h, const DecodeOptions& opts) {
    if (!opts.length_normalize) return h.log_prob;
    double len = static_cast<double>(std::max<size_t>(1, h.tokens.size()));
    return h.log_prob / std::pow(len, opts.length_power);
}

namespace {

bool lex_less(const TokenIds& a, const TokenIds& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

std::vector<BeamHypothesis> beam_search_hypotheses(const Decoder& decoder,
                                                   const EncoderStates& enc,
                                                   const DecodeOptions& opts) {
    check_arg(opts.beam_width >= 1, "beam_search: width must be at least 1");
    check_arg(enc.batch == 1, "beam_search: decode one sample at a time");
    int64_t max_len = opts.max_len > 0 ? opts.max_len : default_max_len(enc.steps);
    int64_t vocab = decoder.vocab();

    autograd::NoGradGuard no_grad;

    std::vector<BeamHypothesis> live(1);
    live[0].state = decoder.initial_state(enc);
    std::vector<BeamHypothesis> finished;

    struct Candidate {
        size_t parent;
        int64_t token;
        double log_prob;
    };

    for (int64_t step = 0; step < max_len && !live.empty(); ++step) {
        int64_t n = static_cast<int64_t>(live.size());
        std::vector<int64_t> prev(static_cast<size_t>(n));
        std::vector<Tensor> h0s, h1s;
        for (int64_t i = 0; i < n; ++i) {
            const BeamHypothesis& h = live[static_cast<size_t>(i)];
            prev[static_cast<size_t>(i)] = h.tokens.empty() ? kSosId : h.tokens.back();
            h0s.push_back(h.state.h0);
            h1s.push_back(h.state.h1);
        }
        Decoder::State stacked{ops::concat(h0s, 0), ops::concat(h1s, 0)};
        Decoder::StepOut out = decoder.step(prev, stacked, enc);

        std::vector<Candidate> cands;
        cands.reserve(static_cast<size_t>(n * (vocab - 2)));
        const float* probs = out.probs.data();
        for (int64_t i = 0; i < n; ++i) {
            double base = live[static_cast<size_t>(i)].log_prob;
            const float* row = probs + i * vocab;
            // PAD and SOS are never emitted.
            for (int64_t tok = kEosId; tok < vocab; ++tok)
                cands.push_back({static_cast<size_t>(i), tok,
                                 base + std::log(static_cast<double>(row[tok]))});
        }
        std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
            if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
            const TokenIds& ta = live[a.parent].tokens;
            const TokenIds& tb = live[b.parent].tokens;
            if (ta != tb) return lex_less(ta, tb);
            return a.token < b.token;
        });
        if (static_cast<int64_t>(cands.size()) > opts.beam_width)
            cands.resize(static_cast<size_t>(opts.beam_width));

        std::vector<BeamHypothesis> next;
        for (const Candidate& c : cands) {
            BeamHypothesis h;
            h.tokens = live[c.parent].tokens;
            h.tokens.push_back(c.token);
            h.log_prob = c.log_prob;
            h.state.h0 = ops::narrow(out.state.h0, 0, static_cast<int64_t>(c.parent), 1);
            h.state.h1 = ops::narrow(out.state.h1, 0, static_cast<int64_t>(c.parent), 1);
            h.finished = c.token == kEosId;
            if (h.finished)
                finished.push_back(std::move(h));
            else
                next.push_back(std::move(h));
        }
        live = std::move(next);
    }

    std::vector<BeamHypothesis> pool = std::move(finished);
    for (BeamHypothesis& h : live) pool.push_back(std::move(h));
    std::sort(pool.begin(), pool.end(), [&](const BeamHypothesis& a, const BeamHypothesis& b) {
        double sa = hypothesis_score(a, opts), sb = hypothesis_score(b, opts);
        if (sa != sb) return sa > sb;
        return lex_less(a.tokens, b.tokens);
    });
    return pool;
}

TokenIds beam_search(const Decoder& decoder, const EncoderStates& enc, const DecodeOptions& opts) {
    std::vector<BeamHypothesis> pool = beam_search_hypotheses(decoder, enc, opts);
    TokenIds tokens = pool.front().tokens;
    if (!tokens.empty() && tokens.back() == kEosId) tokens.pop_back();
    return tokens;
}

TokenIds greedy_decode(const Decoder& decoder, const EncoderStates& enc, int64_t max_len) {
    check_arg(enc.batch == 1, "greedy_decode: decode one sample at a time");
    if (max_len <= 0) max_len = default_max_len(enc.steps);
    int64_t vocab = decoder.vocab();

    autograd::NoGradGuard no_grad;
    Decoder::State state = decoder.initial_state(enc);
    TokenIds out;
    int64_t prev = kSosId;
    for (int64_t step = 0; step < max_len; ++step) {
        Decoder::StepOut so = decoder.step({prev}, state, enc);
        state = so.state;
        const float* row = so.probs.data();
        int64_t best = kEosId;
        for (int64_t tok = kEosId + 1; tok < vocab; ++tok)
            if (row[tok] > row[best]) best = tok;
        if (best == kEosId) break;
        out.push_back(best);
        prev = best;
    }
    return out;
}

}  // namespace malip
