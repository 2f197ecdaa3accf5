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

#include "malip/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace malip {

namespace {

std::string tag(int64_t sample_id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample%04lld", static_cast<long long>(sample_id));
    return buf;
}

std::string frame_tag(int64_t f) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "f%03lld", static_cast<long long>(f));
    return buf;
}

void export_matrix(const std::string& base, const float* data, int64_t rows, int64_t cols,
                   float lo, float hi) {
    write_csv_matrix(base + ".csv", data, rows, cols);
    write_pgm(base + ".pgm", data, rows, cols, lo, hi);
}

}  // namespace

void write_pgm(const std::string& path, const float* data, int64_t rows, int64_t cols, float lo,
               float hi) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("visualize: cannot write '" + path + "'");
    os << "P5\n" << cols << " " << rows << "\n255\n";
    float span = hi > lo ? hi - lo : 1.0f;
    for (int64_t i = 0; i < rows * cols; ++i) {
        float v = (data[i] - lo) / span;
        v = std::min(1.0f, std::max(0.0f, v));
        unsigned char byte = static_cast<unsigned char>(std::lround(v * 255.0f));
        os.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

void write_csv_matrix(const std::string& path, const float* data, int64_t rows, int64_t cols) {
    std::ofstream os(path);
    if (!os) fail("visualize: cannot write '" + path + "'");
    char buf[48];
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(data[r * cols + c]));
            os << (c ? "," : "") << buf;
        }
        os << "\n";
    }
}

void export_trace(const AttentionTrace& trace, int64_t sample_id, const std::string& out_dir) {
    std::string base = out_dir + "/" + tag(sample_id);

    if (trace.channel_weights.defined()) {
        int64_t c = trace.channel_weights.size(1);
        export_matrix(base + "_ca_channels", trace.channel_weights.data(), 1, c, 0.0f, 1.0f);
    }
    if (trace.joint_map.defined()) {
        const Tensor& m = trace.joint_map;  // 1 x 1 x T x H x W
        int64_t t = m.size(2), h = m.size(3), w = m.size(4);
        for (int64_t f = 0; f < t; ++f)
            export_matrix(base + "_jsta_" + frame_tag(f), m.data() + f * h * w, h, w, 0.0f, 1.0f);
    }
    for (size_t b = 0; b < trace.spatial_maps.size(); ++b) {
        const Tensor& m = trace.spatial_maps[b];  // T x 1 x H x W for batch 1
        int64_t t = m.size(0), h = m.size(2), w = m.size(3);
        for (int64_t f = 0; f < t; ++f)
            export_matrix(base + "_ssta_spatial_b" + std::to_string(b) + "_" + frame_tag(f),
                          m.data() + f * h * w, h, w, 0.0f, 1.0f);
    }
    for (size_t b = 0; b < trace.temporal_maps.size(); ++b) {
        const Tensor& m = trace.temporal_maps[b];  // 1 x 1 x T
        int64_t t = m.size(2);
        export_matrix(base + "_ssta_temporal_b" + std::to_string(b), m.data(), 1, t, 0.0f, 1.0f);
    }
}

void export_saliency(const Model& model, const Batch& one, int64_t sample_id,
                     const Ablation& ablation, const std::string& out_dir) {
    check_arg(one.clips.size(0) == 1, "saliency: one sample at a time");
    Tensor clips(one.clips.shape(), one.clips.values());
    clips.set_requires_grad(true);
    Batch probe{clips, one.labels};
    Rng rng(0);
    Model::LossOut out = model.loss(probe, false, 1.0, rng, ablation);
    out.loss.backward();

    int64_t t = clips.size(2), h = clips.size(3), w = clips.size(4);
    int64_t plane = h * w;
    std::vector<float> sal(static_cast<size_t>(t * plane), 0.0f);
    const float* g = clips.grad().data();
    float peak = 0.0f;
    for (int64_t f = 0; f < t; ++f) {
        for (int64_t p = 0; p < plane; ++p) {
            float acc = 0.0f;
            for (int64_t c = 0; c < 3; ++c) acc += std::fabs(g[(c * t + f) * plane + p]);
            float v = acc / 3.0f;
            sal[static_cast<size_t>(f * plane + p)] = v;
            peak = std::max(peak, v);
        }
    }
    std::string base = out_dir + "/" + tag(sample_id);
    for (int64_t f = 0; f < t; ++f)
        export_matrix(base + "_saliency_" + frame_tag(f), sal.data() + f * plane, h, w, 0.0f,
                      peak > 0 ? peak : 1.0f);
}

}  // namespace malip
