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

#include "malip/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace malip {

Tensor ParameterStore::add(const std::string& name, Shape shape) {
    check_arg(!entries_.count(name), "parameter '" + name + "' already registered");
    Tensor t = Tensor::zeros(std::move(shape), true);
    t.set_name(name);
    names_.push_back(name);
    entries_.emplace(name, t);
    return t;
}

Tensor ParameterStore::add_uniform(const std::string& name, Shape shape, int64_t fan_in, Rng& rng) {
    Tensor t = add(name, std::move(shape));
    double bound = std::sqrt(1.0 / static_cast<double>(std::max<int64_t>(1, fan_in)));
    float* p = t.data();
    int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i) p[i] = static_cast<float>(rng.uniform(-bound, bound));
    return t;
}

Tensor ParameterStore::add_buffer(const std::string& name, Shape shape, float fill) {
    check_arg(!entries_.count(name), "parameter '" + name + "' already registered");
    Tensor t = Tensor::full(std::move(shape), fill, false);
    t.set_name(name);
    names_.push_back(name);
    entries_.emplace(name, t);
    return t;
}

Tensor ParameterStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    check_arg(it != entries_.end(), "unknown parameter '" + name + "'");
    return it->second;
}

bool ParameterStore::contains(const std::string& name) const { return entries_.count(name) > 0; }

void ParameterStore::zero_grads() {
    for (const auto& name : names_) entries_.at(name).zero_grad();
}

std::string ParameterStore::first_non_finite() const {
    for (const auto& name : names_)
        if (!all_finite(entries_.at(name))) return name;
    return {};
}

int64_t ParameterStore::scalar_count() const {
    int64_t n = 0;
    for (const auto& name : names_) n += entries_.at(name).numel();
    return n;
}

namespace {

constexpr char kMagic[8] = {'M', 'A', 'L', 'P', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) fail("checkpoint: truncated while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, const float* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        write_u32(os, bits);
    }
}

void read_f32(std::istream& is, float* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits = read_u32(is, "tensor values");
        std::memcpy(&data[i], &bits, 4);
    }
}

}  // namespace

void save_checkpoint(const ParameterStore& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(params.size()));
    for (const auto& name : params.names()) {
        Tensor t = params.get(name);
        write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<uint32_t>(t.rank()));
        for (int64_t d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
        write_f32(os, t.data(), static_cast<size_t>(t.numel()));
    }
    if (!os) fail("checkpoint: write to '" + path + "' failed");
}

void load_checkpoint(ParameterStore& params, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail("checkpoint: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        fail("checkpoint: '" + path + "' has wrong magic");
    uint32_t version = read_u32(is, "version");
    if (version != kVersion)
        fail("checkpoint: unsupported version " + std::to_string(version));
    uint32_t count = read_u32(is, "entry count");
    if (count != params.size())
        fail("checkpoint: holds " + std::to_string(count) + " entries, model expects " +
             std::to_string(params.size()));
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = read_u32(is, "name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) fail("checkpoint: truncated while reading name");
        if (!params.contains(name)) fail("checkpoint: unknown parameter '" + name + "'");
        Tensor t = params.get(name);
        uint32_t rank = read_u32(is, "rank");
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = read_u32(is, "extent");
        if (shape != t.shape())
            fail("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                 ", model expects " + shape_str(t.shape()));
        read_f32(is, t.data(), static_cast<size_t>(t.numel()));
    }
}

}  // namespace malip
