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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "malip/decoding.hpp"
#include "test_util.hpp"
#include "toy_decoder.hpp"

using namespace malip;
using testutil::ToyDecoder;
using testutil::random_tensor;

TEST_CASE("a saturated EOS bias yields the empty sequence immediately") {
    ToyDecoder toy(1, 6, 4);
    Tensor wo = toy.store.get("decoder.out.weight");
    for (int64_t i = 0; i < wo.numel(); ++i) wo.data()[i] = 0.0f;
    Tensor bo = toy.store.get("decoder.out.bias");
    for (int64_t i = 0; i < bo.numel(); ++i) bo.data()[i] = 0.0f;
    bo.data()[kEosId] = 100.0f;

    CHECK(greedy_decode(toy.decoder, toy.enc).empty());
    DecodeOptions opts;
    CHECK(beam_search(toy.decoder, toy.enc, opts).empty());
}

TEST_CASE("greedy decoding is deterministic") {
    ToyDecoder toy(2, 7, 5);
    TokenIds a = greedy_decode(toy.decoder, toy.enc);
    TokenIds b = greedy_decode(toy.decoder, toy.enc);
    CHECK(a == b);
}

TEST_CASE("beam width 1 equals greedy decoding on 50 random toy models") {
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        ToyDecoder toy(seed, 3 + static_cast<int64_t>(seed % 4), 2 + static_cast<int64_t>(seed % 5),
                       1.5);
        DecodeOptions opts;
        opts.beam_width = 1;
        TokenIds beam = beam_search(toy.decoder, toy.enc, opts);
        TokenIds greedy = greedy_decode(toy.decoder, toy.enc);
        CAPTURE(seed);
        CHECK(beam == greedy);
    }
}

TEST_CASE("best final score is non-decreasing in the beam width") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        ToyDecoder toy(seed * 11, 6, 4, 1.2);
        double prev = -1e300;
        for (int64_t k : {1, 2, 4, 6}) {
            DecodeOptions opts;
            opts.beam_width = k;
            auto pool = beam_search_hypotheses(toy.decoder, toy.enc, opts);
            double best = hypothesis_score(pool.front(), opts);
            CAPTURE(seed);
            CAPTURE(k);
            CHECK(best >= prev - 1e-12);
            prev = best;
        }
    }
}

TEST_CASE("beam search with a wide beam matches exhaustive enumeration") {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        int64_t vocab = 5;  // PAD, SOS, EOS + two letters
        int64_t max_len = 2 + static_cast<int64_t>(seed % 2);
        ToyDecoder toy(seed * 13 + 1, vocab, 3, 1.5);
        DecodeOptions opts;
        opts.beam_width = 64;  // covers every live hypothesis
        opts.max_len = max_len;
        TokenIds got = beam_search(toy.decoder, toy.enc, opts);

        // Enumerate all content sequences of length <= max_len: terminated
        // ones (EOS emitted, shorter than the bound) and truncated ones at
        // exactly the bound.
        TokenIds best_seq;
        double best_score = -1e300;
        bool best_set = false;
        std::vector<TokenIds> frontier{{}};
        for (int64_t len = 0; len <= max_len; ++len) {
            std::vector<TokenIds> next;
            for (const TokenIds& seq : frontier) {
                bool terminal = static_cast<int64_t>(seq.size()) < max_len;
                double lp = toy.sequence_log_prob(seq, terminal);
                TokenIds full = seq;
                if (terminal) full.push_back(kEosId);
                double norm_len = std::max<size_t>(1, full.size());
                double score = lp / std::pow(norm_len, opts.length_power);
                if (!best_set || score > best_score ||
                    (score == best_score &&
                     std::lexicographical_compare(full.begin(), full.end(), best_seq.begin(),
                                                  best_seq.end()))) {
                    best_set = true;
                    best_score = score;
                    best_seq = full;
                }
                if (static_cast<int64_t>(seq.size()) < max_len) {
                    for (int64_t tok = kEosId + 1; tok < vocab; ++tok) {
                        TokenIds ext = seq;
                        ext.push_back(tok);
                        next.push_back(ext);
                    }
                }
            }
            frontier = std::move(next);
        }
        if (!best_seq.empty() && best_seq.back() == kEosId) best_seq.pop_back();
        CAPTURE(seed);
        CHECK(got == best_seq);
    }
}

TEST_CASE("returned sequences contain no PAD/SOS and only a terminal EOS") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        ToyDecoder toy(seed * 17, 6, 5, 1.5);
        DecodeOptions opts;
        opts.beam_width = 4;
        auto pool = beam_search_hypotheses(toy.decoder, toy.enc, opts);
        for (const auto& hyp : pool) {
            for (size_t i = 0; i < hyp.tokens.size(); ++i) {
                CHECK(hyp.tokens[i] != kPadId);
                CHECK(hyp.tokens[i] != kSosId);
                if (hyp.tokens[i] == kEosId) CHECK(i + 1 == hyp.tokens.size());
            }
        }
        TokenIds final = beam_search(toy.decoder, toy.enc, opts);
        for (int64_t tok : final) {
            CHECK(tok != kPadId);
            CHECK(tok != kSosId);
            CHECK(tok != kEosId);
        }
    }
}

TEST_CASE("stored hypothesis log-probs match recomputation from scratch") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        ToyDecoder toy(seed * 23, 6, 4, 1.2);
        DecodeOptions opts;
        opts.beam_width = 4;
        auto pool = beam_search_hypotheses(toy.decoder, toy.enc, opts);
        for (const auto& hyp : pool) {
            TokenIds content = hyp.tokens;
            bool terminated = !content.empty() && content.back() == kEosId;
            if (terminated) content.pop_back();
            double recomputed = toy.sequence_log_prob(content, terminated);
            CHECK(std::abs(recomputed - hyp.log_prob) < 1e-5);
        }
    }
}

TEST_CASE("raw log-prob ranking is available when length normalization is off") {
    ToyDecoder toy(3, 6, 4, 1.2);
    DecodeOptions opts;
    opts.beam_width = 6;
    opts.length_normalize = false;
    auto pool = beam_search_hypotheses(toy.decoder, toy.enc, opts);
    for (size_t i = 1; i < pool.size(); ++i) CHECK(pool[i - 1].log_prob >= pool[i].log_prob);
}

TEST_CASE("default length bound is 1.5x the encoder length capped at 200") {
    CHECK(default_max_len(10) == 15);
    CHECK(default_max_len(1) == 2);
    CHECK(default_max_len(500) == 200);
}
