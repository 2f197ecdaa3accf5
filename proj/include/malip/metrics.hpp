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

#include "malip/common.hpp"

namespace malip {

/// Unit-cost alignment counts between a reference and a hypothesis.
struct EditOps {
    int64_t subs = 0;
    int64_t dels = 0;  // reference tokens missing from the hypothesis
    int64_t ins = 0;   // hypothesis tokens absent from the reference
    int64_t ref_len = 0;

    int64_t total() const { return subs + dels + ins; }
};

/// Levenshtein alignment with backtrace. Among minimal-cost paths the one
/// with the most aligned (diagonal) pairs is chosen, which makes the
/// (S, D, I) decomposition unique and transpose-symmetric; the backtrace
/// preference on remaining ties is substitution, then deletion, then
/// insertion.
template <typename T>
EditOps edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
    size_t m = ref.size(), n = hyp.size();
    std::vector<int64_t> d((m + 1) * (n + 1));
    std::vector<int64_t> diag((m + 1) * (n + 1));  // aligned pairs on the best path
    auto at = [&](size_t i, size_t j) -> int64_t& { return d[i * (n + 1) + j]; };
    auto dg = [&](size_t i, size_t j) -> int64_t& { return diag[i * (n + 1) + j]; };
    for (size_t i = 0; i <= m; ++i) at(i, 0) = static_cast<int64_t>(i);
    for (size_t j = 0; j <= n; ++j) at(0, j) = static_cast<int64_t>(j);
    for (size_t i = 1; i <= m; ++i) {
        for (size_t j = 1; j <= n; ++j) {
            int64_t sub_cost = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            int64_t best = std::min(sub_cost, std::min(at(i - 1, j), at(i, j - 1)) + 1);
            int64_t best_diag = -1;
            if (sub_cost == best) best_diag = dg(i - 1, j - 1) + 1;
            if (at(i - 1, j) + 1 == best) best_diag = std::max(best_diag, dg(i - 1, j));
            if (at(i, j - 1) + 1 == best) best_diag = std::max(best_diag, dg(i, j - 1));
            at(i, j) = best;
            dg(i, j) = best_diag;
        }
    }

    EditOps ops;
    ops.ref_len = static_cast<int64_t>(m);
    size_t i = m, j = n;
    while (i > 0 || j > 0) {
        int64_t cur = at(i, j), cur_diag = dg(i, j);
        if (i > 0 && j > 0 &&
            cur == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1) &&
            cur_diag == dg(i - 1, j - 1) + 1) {
            if (ref[i - 1] != hyp[j - 1]) ++ops.subs;
            --i;
            --j;
        } else if (i > 0 && cur == at(i - 1, j) + 1 && cur_diag == dg(i - 1, j)) {
            ++ops.dels;
            --i;
        } else {
            ++ops.ins;
            --j;
        }
    }
    return ops;
}

/// (S + D + I) / N; the reference must be non-empty.
double error_rate(const EditOps& ops);

/// Micro-averaged corpus rate: total edits over total reference length.
class CorpusRate {
public:
    void add(const EditOps& ops) {
        edits_ += ops.total();
        ref_len_ += ops.ref_len;
    }
    double rate() const;
    int64_t total_edits() const { return edits_; }
    int64_t total_ref_len() const { return ref_len_; }

private:
    int64_t edits_ = 0;
    int64_t ref_len_ = 0;
};

/// One token per Unicode scalar value; throws on malformed UTF-8.
std::vector<int64_t> utf8_codepoints(const std::string& text);

/// Splits on single spaces; empty fields are dropped.
std::vector<std::string> split_words(const std::string& text);

/// Character error rate between two UTF-8 strings.
double cer(const std::string& ref, const std::string& hyp);

/// Word error rate between two space-separated strings.
double wer(const std::string& ref, const std::string& hyp);

}  // namespace malip
