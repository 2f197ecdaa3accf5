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

#include "malip/model.hpp"

namespace malip {

/// Binary 8-bit PGM (P5); values clamped to [lo, hi] and scaled to 0..255.
void write_pgm(const std::string& path, const float* data, int64_t rows, int64_t cols, float lo,
               float hi);

/// Comma-separated matrix of reals, one row per line.
void write_csv_matrix(const std::string& path, const float* data, int64_t rows, int64_t cols);

/// Exports every map of a trace for one sample as CSV + PGM pairs. Names
/// encode sample id, module, sub-branch and frame:
///   sample0003_ca_channels.{csv,pgm}
///   sample0003_jsta_f007.{csv,pgm}
///   sample0003_ssta_spatial_b1_f007.{csv,pgm}
///   sample0003_ssta_temporal_b1.{csv,pgm}
void export_trace(const AttentionTrace& trace, int64_t sample_id, const std::string& out_dir);

/// Input-gradient saliency |d loss / d pixel| of a single sample, averaged
/// over the colour channels; one frame per file, scaled by the clip maximum.
///   sample0003_saliency_f007.{csv,pgm}
void export_saliency(const Model& model, const Batch& one, int64_t sample_id,
                     const Ablation& ablation, const std::string& out_dir);

}  // namespace malip
