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

#include "malip/metrics.hpp"

namespace malip {

double error_rate(const EditOps& ops) {
    if (ops.ref_len == 0) fail("error_rate: empty reference");
    return static_cast<double>(ops.total()) / static_cast<double>(ops.ref_len);
}

double CorpusRate::rate() const {
    if (ref_len_ == 0) fail("error_rate: empty reference");
    return static_cast<double>(edits_) / static_cast<double>(ref_len_);
}

std::vector<int64_t> utf8_codepoints(const std::string& text) {
    std::vector<int64_t> out;
    size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        int extra;
        int64_t cp;
        if (c < 0x80) {
            extra = 0;
            cp = c;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            fail("utf8: invalid lead byte at offset " + std::to_string(i));
        }
        if (i + static_cast<size_t>(extra) >= text.size())
            fail("utf8: truncated sequence at offset " + std::to_string(i));
        for (int k = 1; k <= extra; ++k) {
            unsigned char cc = static_cast<unsigned char>(text[i + static_cast<size_t>(k)]);
            if ((cc & 0xC0) != 0x80)
                fail("utf8: invalid continuation byte at offset " + std::to_string(i + static_cast<size_t>(k)));
            cp = (cp << 6) | (cc & 0x3F);
        }
        out.push_back(cp);
        i += static_cast<size_t>(extra) + 1;
    }
    return out;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double cer(const std::string& ref, const std::string& hyp) {
    return error_rate(edit_distance(utf8_codepoints(ref), utf8_codepoints(hyp)));
}

double wer(const std::string& ref, const std::string& hyp) {
    return error_rate(edit_distance(split_words(ref), split_words(hyp)));
}

}  // namespace malip
