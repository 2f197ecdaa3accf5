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

#include "malip/config.hpp"

#include <fstream>
#include <sstream>

namespace malip {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos;
        int64_t out = std::stoll(v, &pos);
        check_arg(pos == v.size(), "");
        return out;
    } catch (...) {
        throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos;
        double out = std::stod(v, &pos);
        check_arg(pos == v.size(), "");
        return out;
    } catch (...) {
        throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    }
}

std::vector<int64_t> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
    return out;
}

}  // namespace

RunConfig profile_defaults(const std::string& profile) {
    RunConfig cfg;
    cfg.profile = profile;
    if (profile == "cmlr") {
        cfg.epochs = 60;
        cfg.batch_size = 8;
        cfg.learning_rate = 0.0002;
        cfg.ssta_branches = 3;
        cfg.beam_width = 6;
        cfg.frontend_channels = {32, 64, 96};
        cfg.enc_hidden = 256;
        cfg.dec_hidden = 512;
        cfg.embed_dim = 256;
        cfg.attn_dim = 128;
        cfg.ca_ratio = 16;
    } else if (profile == "grid") {
        cfg.epochs = 30;
        cfg.batch_size = 16;
        cfg.learning_rate = 0.0003;
        cfg.ssta_branches = 4;
        cfg.beam_width = 6;
        cfg.frontend_channels = {32, 64, 96};
        cfg.enc_hidden = 256;
        cfg.dec_hidden = 512;
        cfg.embed_dim = 256;
        cfg.attn_dim = 128;
        cfg.ca_ratio = 16;
    } else if (profile == "toy") {
        // Desk-scale defaults from the struct initializers.
    } else {
        throw std::invalid_argument("config: unknown profile '" + profile + "'");
    }
    return cfg;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("config: cannot open '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        check_arg(eq != std::string::npos,
                  "config: line " + std::to_string(lineno) + " is not key=value: " + t);
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

RunConfig parse_config(const std::map<std::string, std::string>& kv) {
    std::string profile = "toy";
    if (auto it = kv.find("profile"); it != kv.end()) profile = it->second;
    RunConfig cfg = profile_defaults(profile);
    for (const auto& [key, value] : kv) {
        if (key == "profile") {
        } else if (key == "epochs") {
            cfg.epochs = to_int(key, value);
        } else if (key == "batch_size") {
            cfg.batch_size = to_int(key, value);
        } else if (key == "learning_rate") {
            cfg.learning_rate = to_double(key, value);
        } else if (key == "ssta_branches") {
            cfg.ssta_branches = to_int(key, value);
        } else if (key == "beam_width") {
            cfg.beam_width = to_int(key, value);
        } else if (key == "seed") {
            cfg.seed = static_cast<uint64_t>(to_int(key, value));
        } else if (key == "data") {
            cfg.data_path = value;
        } else if (key == "out_dir") {
            cfg.out_dir = value;
        } else if (key == "frontend_channels") {
            cfg.frontend_channels = to_int_list(key, value);
        } else if (key == "enc_hidden") {
            cfg.enc_hidden = to_int(key, value);
        } else if (key == "dec_hidden") {
            cfg.dec_hidden = to_int(key, value);
        } else if (key == "embed_dim") {
            cfg.embed_dim = to_int(key, value);
        } else if (key == "attn_dim") {
            cfg.attn_dim = to_int(key, value);
        } else if (key == "ca_ratio") {
            cfg.ca_ratio = to_int(key, value);
        } else if (key == "ss_start") {
            cfg.ss_start = to_double(key, value);
        } else if (key == "ss_end") {
            cfg.ss_end = to_double(key, value);
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) { return parse_config(read_kv_file(path)); }

void write_effective_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail("config: cannot write '" + path + "'");
    os << "profile = " << cfg.profile << "\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "learning_rate = " << cfg.learning_rate << "\n";
    os << "ssta_branches = " << cfg.ssta_branches << "\n";
    os << "beam_width = " << cfg.beam_width << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "data = " << cfg.data_path << "\n";
    os << "out_dir = " << cfg.out_dir << "\n";
    os << "frontend_channels = ";
    for (size_t i = 0; i < cfg.frontend_channels.size(); ++i)
        os << (i ? "," : "") << cfg.frontend_channels[i];
    os << "\n";
    os << "enc_hidden = " << cfg.enc_hidden << "\n";
    os << "dec_hidden = " << cfg.dec_hidden << "\n";
    os << "embed_dim = " << cfg.embed_dim << "\n";
    os << "attn_dim = " << cfg.attn_dim << "\n";
    os << "ca_ratio = " << cfg.ca_ratio << "\n";
    os << "ss_start = " << cfg.ss_start << "\n";
    os << "ss_end = " << cfg.ss_end << "\n";
}

SynthSpec parse_synth_spec(const std::map<std::string, std::string>& kv) {
    SynthSpec spec;
    for (const auto& [key, value] : kv) {
        if (key == "vocab_size") {
            spec.vocab_size = to_int(key, value);
        } else if (key == "n_samples") {
            spec.n_samples = to_int(key, value);
        } else if (key == "min_tokens") {
            spec.min_tokens = to_int(key, value);
        } else if (key == "max_tokens") {
            spec.max_tokens = to_int(key, value);
        } else if (key == "frames_per_token") {
            spec.frames_per_token = to_int(key, value);
        } else if (key == "frame_h") {
            spec.frame_h = to_int(key, value);
        } else if (key == "frame_w") {
            spec.frame_w = to_int(key, value);
        } else if (key == "noise_sigma") {
            spec.noise_sigma = to_double(key, value);
        } else if (key == "seed") {
            spec.seed = static_cast<uint64_t>(to_int(key, value));
        } else {
            throw std::invalid_argument("spec: unknown key '" + key + "'");
        }
    }
    return spec;
}

SynthSpec load_synth_spec_file(const std::string& path) {
    return parse_synth_spec(read_kv_file(path));
}

}  // namespace malip
