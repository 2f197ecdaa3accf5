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

#include "malip/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "malip/rng.hpp"

namespace malip {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'L', 'P', 'D', 'A', 'T', 'A'};
constexpr uint32_t kVersion = 1;

// Mouth geometry: aperture (vertical semi-axis) x width (horizontal
// semi-axis) grid; every content token gets a distinct pair.
constexpr int kApertureLevels = 4;
constexpr int kWidthLevels = 4;
constexpr double kApertureFrac[kApertureLevels] = {0.12, 0.21, 0.30, 0.40};
constexpr double kWidthFrac[kWidthLevels] = {0.25, 0.40, 0.55, 0.70};
constexpr float kBackground = 0.08f;
constexpr float kMouth = 0.85f;

void ellipse_axes(const SynthSpec& spec, int64_t token_id, double& ry, double& rx) {
    if (token_id < 0) {  // silence: thin closed mouth
        ry = 0.05 * static_cast<double>(spec.frame_h);
        rx = 0.45 * 0.5 * static_cast<double>(spec.frame_w);
        return;
    }
    int64_t j = token_id - kNumReservedIds;
    ry = kApertureFrac[j % kApertureLevels] * static_cast<double>(spec.frame_h) * 0.5;
    rx = kWidthFrac[(j / kApertureLevels) % kWidthLevels] * 0.5 * static_cast<double>(spec.frame_w);
}

}  // namespace

std::vector<float> render_token_frame(const SynthSpec& spec, int64_t token_id) {
    double ry, rx;
    ellipse_axes(spec, token_id, ry, rx);
    double cy = 0.5 * static_cast<double>(spec.frame_h - 1);
    double cx = 0.5 * static_cast<double>(spec.frame_w - 1);
    std::vector<float> frame(static_cast<size_t>(spec.frame_h * spec.frame_w), kBackground);
    for (int64_t y = 0; y < spec.frame_h; ++y) {
        for (int64_t x = 0; x < spec.frame_w; ++x) {
            double dy = (static_cast<double>(y) - cy) / ry;
            double dx = (static_cast<double>(x) - cx) / rx;
            if (dy * dy + dx * dx <= 1.0)
                frame[static_cast<size_t>(y * spec.frame_w + x)] = kMouth;
        }
    }
    return frame;
}

Dataset generate(const SynthSpec& spec) {
    check_arg(spec.vocab_size >= 4, "generate: vocab must hold at least one content token");
    check_arg(spec.vocab_size - kNumReservedIds <= kApertureLevels * kWidthLevels,
              "generate: at most " + std::to_string(kApertureLevels * kWidthLevels) +
                  " distinct content tokens supported");
    check_arg(spec.frames_per_token >= 2, "generate: need at least 2 frames per token");
    check_arg(spec.frame_h >= 8 && spec.frame_w >= 8, "generate: degenerate frame extents");
    check_arg(spec.min_tokens >= 1 && spec.min_tokens <= spec.max_tokens,
              "generate: bad token count range");

    Dataset ds;
    ds.vocab_size = spec.vocab_size;
    ds.samples.resize(static_cast<size_t>(spec.n_samples));

    Rng master(spec.seed);
    int64_t plane = spec.frame_h * spec.frame_w;
    for (int64_t i = 0; i < spec.n_samples; ++i) {
        Rng rng = master.split(static_cast<uint64_t>(i));
        Sample& s = ds.samples[static_cast<size_t>(i)];
        int64_t n_tokens = rng.uniform_int(spec.min_tokens, spec.max_tokens);
        TokenIds tokens(static_cast<size_t>(n_tokens));
        for (int64_t k = 0; k < n_tokens; ++k)
            tokens[static_cast<size_t>(k)] = rng.uniform_int(kNumReservedIds, spec.vocab_size - 1);

        int64_t silence = spec.frames_per_token;
        s.t = spec.frames_per_token * n_tokens + 2 * silence;
        s.h = spec.frame_h;
        s.w = spec.frame_w;
        s.frames.resize(static_cast<size_t>(s.t * plane));

        std::vector<float> silent = render_token_frame(spec, -1);
        int64_t f = 0;
        auto emit = [&](const std::vector<float>& base) {
            float* dst = s.frames.data() + f * plane;
            for (int64_t p = 0; p < plane; ++p) {
                double v = base[static_cast<size_t>(p)];
                if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
                dst[p] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
            }
            ++f;
        };
        for (int64_t k = 0; k < silence; ++k) emit(silent);
        for (int64_t tok = 0; tok < n_tokens; ++tok) {
            std::vector<float> frame = render_token_frame(spec, tokens[static_cast<size_t>(tok)]);
            for (int64_t k = 0; k < spec.frames_per_token; ++k) emit(frame);
        }
        for (int64_t k = 0; k < silence; ++k) emit(silent);

        s.label = tokens;
        s.label.push_back(kEosId);
    }
    return ds;
}

// ---- binary container ----

namespace {

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

struct ByteReader {
    std::ifstream is;
    int64_t offset = 0;

    explicit ByteReader(const std::string& path) : is(path, std::ios::binary) {
        if (!is) fail("dataset: cannot open '" + path + "'");
    }

    void read(void* dst, size_t n, const char* what) {
        is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (is.gcount() != static_cast<std::streamsize>(n))
            fail("dataset: truncated while reading " + std::string(what) + " at byte " +
                 std::to_string(offset + is.gcount()));
        offset += static_cast<int64_t>(n);
    }

    uint32_t u32(const char* what) {
        unsigned char b[4];
        read(b, 4, what);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }

    float f32(const char* what) {
        uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    bool at_eof() {
        return is.peek() == std::char_traits<char>::eof();
    }
};

void read_header(ByteReader& r, int64_t& count, int64_t& vocab) {
    char magic[8];
    r.read(magic, 8, "magic");
    if (std::memcmp(magic, kMagic, 8) != 0) fail("dataset: wrong magic, not a MALPDATA file");
    uint32_t version = r.u32("version");
    if (version != kVersion) fail("dataset: unsupported version " + std::to_string(version));
    count = r.u32("sample count");
    vocab = r.u32("vocab size");
}

Sample read_sample(ByteReader& r) {
    Sample s;
    s.t = r.u32("frame count");
    s.h = r.u32("frame height");
    s.w = r.u32("frame width");
    int64_t n = s.t * s.h * s.w;
    s.frames.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) s.frames[static_cast<size_t>(i)] = r.f32("frame values");
    uint32_t len = r.u32("label length");
    s.label.resize(len);
    for (uint32_t i = 0; i < len; ++i) s.label[i] = r.u32("label ids");
    return s;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("dataset: cannot open '" + path + "' for writing");
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(ds.samples.size()));
    write_u32(os, static_cast<uint32_t>(ds.vocab_size));
    for (const Sample& s : ds.samples) {
        write_u32(os, static_cast<uint32_t>(s.t));
        write_u32(os, static_cast<uint32_t>(s.h));
        write_u32(os, static_cast<uint32_t>(s.w));
        for (float v : s.frames) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            write_u32(os, bits);
        }
        write_u32(os, static_cast<uint32_t>(s.label.size()));
        for (int64_t id : s.label) write_u32(os, static_cast<uint32_t>(id));
    }
    if (!os) fail("dataset: write to '" + path + "' failed");
}

Dataset load_dataset(const std::string& path) {
    ByteReader r(path);
    Dataset ds;
    int64_t count;
    read_header(r, count, ds.vocab_size);
    ds.samples.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) ds.samples.push_back(read_sample(r));
    if (!r.at_eof())
        fail("dataset: trailing bytes after declared payload at byte " + std::to_string(r.offset));
    return ds;
}

struct DatasetReader::Impl {
    ByteReader reader;
    int64_t next_index = 0;
    explicit Impl(const std::string& path) : reader(path) {}
};

DatasetReader::DatasetReader(const std::string& path) : impl_(new Impl(path)) {
    read_header(impl_->reader, count_, vocab_);
}

DatasetReader::~DatasetReader() { delete impl_; }

bool DatasetReader::next(Sample& out) {
    if (impl_->next_index >= count_) {
        if (!impl_->reader.at_eof())
            fail("dataset: trailing bytes after declared payload at byte " +
                 std::to_string(impl_->reader.offset));
        return false;
    }
    out = read_sample(impl_->reader);
    ++impl_->next_index;
    return true;
}

// ---- splits and batching ----

Split split_of(int64_t index) {
    uint64_t h = mix64(0x5Bd1E995u ^ static_cast<uint64_t>(index)) % 10;
    if (h < 8) return Split::Train;
    if (h == 8) return Split::Val;
    return Split::Test;
}

std::vector<int64_t> split_indices(const Dataset& ds, Split split) {
    std::vector<int64_t> out;
    for (int64_t i = 0; i < static_cast<int64_t>(ds.samples.size()); ++i)
        if (split_of(i) == split) out.push_back(i);
    return out;
}

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& indices) {
    check_arg(!indices.empty(), "make_batch: empty index list");
    int64_t t_max = 0;
    int64_t h = ds.samples[static_cast<size_t>(indices[0])].h;
    int64_t w = ds.samples[static_cast<size_t>(indices[0])].w;
    for (int64_t idx : indices) {
        const Sample& s = ds.samples[static_cast<size_t>(idx)];
        check_arg(s.h == h && s.w == w, "make_batch: mixed frame extents in batch");
        t_max = std::max(t_max, s.t);
    }
    int64_t b = static_cast<int64_t>(indices.size());
    Batch batch;
    batch.clips = Tensor::zeros({b, 3, t_max, h, w});
    float* dst = batch.clips.data();
    int64_t plane = h * w;
    for (int64_t s = 0; s < b; ++s) {
        const Sample& sample = ds.samples[static_cast<size_t>(indices[static_cast<size_t>(s)])];
        for (int64_t c = 0; c < 3; ++c) {
            float* chan = dst + ((s * 3 + c) * t_max) * plane;
            std::memcpy(chan, sample.frames.data(),
                        static_cast<size_t>(sample.t * plane) * sizeof(float));
        }
        batch.labels.push_back(sample.label);
    }
    return batch;
}

}  // namespace malip
