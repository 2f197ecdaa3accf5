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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "malip/config.hpp"
#include "malip/trainer.hpp"

using namespace malip;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir() {
    static std::string dir = [] {
        std::string d = (fs::temp_directory_path() / "malip_cli_test").string();
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    std::string cmd = std::string(MALIPNET_BIN) + " " + args + " 2>>" + tmp_dir() + "/stderr.log";
    return std::system(cmd.c_str());
}

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path);
    os << content;
}

// Metrics CSV with the wall_seconds column dropped (timing is the one
// non-deterministic column).
std::string metrics_without_wall(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    std::ostringstream out;
    std::string line;
    while (std::getline(is, line)) {
        size_t comma = line.rfind(',');
        out << line.substr(0, comma) << "\n";
    }
    return out.str();
}

std::string tiny_spec(int64_t n_samples = 60, uint64_t seed = 5) {
    std::ostringstream os;
    os << "vocab_size = 6\nn_samples = " << n_samples
       << "\nmin_tokens = 1\nmax_tokens = 2\nframes_per_token = 2\nframe_h = 8\nframe_w = "
          "16\nnoise_sigma = 0.03\nseed = "
       << seed << "\n";
    return os.str();
}

std::string tiny_config(const std::string& data, const std::string& out, uint64_t seed = 1) {
    std::ostringstream os;
    os << "profile = toy\nepochs = 2\nbatch_size = 8\nlearning_rate = 0.002\nfrontend_channels = "
          "2,3,4\nenc_hidden = 8\ndec_hidden = 8\nembed_dim = 4\nattn_dim = 6\nca_ratio = "
          "2\nseed = "
       << seed << "\ndata = " << data << "\nout_dir = " << out << "\n";
    return os.str();
}

}  // namespace

TEST_CASE("profile defaults mirror the published hyperparameters") {
    RunConfig cmlr = profile_defaults("cmlr");
    CHECK(cmlr.epochs == 60);
    CHECK(cmlr.batch_size == 8);
    CHECK(cmlr.learning_rate == doctest::Approx(0.0002));
    CHECK(cmlr.ssta_branches == 3);
    CHECK(cmlr.beam_width == 6);

    RunConfig grid = profile_defaults("grid");
    CHECK(grid.epochs == 30);
    CHECK(grid.batch_size == 16);
    CHECK(grid.learning_rate == doctest::Approx(0.0003));
    CHECK(grid.ssta_branches == 4);
    CHECK(grid.beam_width == 6);

    CHECK_THROWS_AS(profile_defaults("imaginary"), std::invalid_argument);
}

TEST_CASE("config files override profile defaults and reject unknown keys") {
    std::string path = tmp_dir() + "/cfg1.txt";
    write_file(path, "# comment\nprofile = grid\nepochs = 3\nbeam_width = 2\n");
    RunConfig cfg = load_config_file(path);
    CHECK(cfg.profile == "grid");
    CHECK(cfg.epochs == 3);
    CHECK(cfg.beam_width == 2);
    CHECK(cfg.batch_size == 16);  // inherited from the grid profile

    write_file(path, "bogus_key = 1\n");
    CHECK_THROWS_AS(load_config_file(path), std::invalid_argument);

    write_file(path, "no equals sign here\n");
    CHECK_THROWS_AS(load_config_file(path), std::invalid_argument);
}

TEST_CASE("effective config echo is parseable and equivalent") {
    RunConfig cfg = profile_defaults("toy");
    cfg.seed = 42;
    cfg.data_path = "some.bin";
    cfg.epochs = 7;
    std::string path = tmp_dir() + "/echo.txt";
    write_effective_config(cfg, path);
    RunConfig back = load_config_file(path);
    CHECK(back.seed == 42);
    CHECK(back.epochs == 7);
    CHECK(back.data_path == "some.bin");
    CHECK(back.frontend_channels == cfg.frontend_channels);
}

TEST_CASE("gen-data is deterministic and validates its inputs") {
    std::string spec = tmp_dir() + "/spec.txt";
    write_file(spec, tiny_spec());
    std::string d1 = tmp_dir() + "/data1.bin";
    std::string d2 = tmp_dir() + "/data2.bin";
    REQUIRE(run("gen-data --spec " + spec + " --out " + d1) == 0);
    REQUIRE(run("gen-data --spec " + spec + " --out " + d2) == 0);
    CHECK(file_bytes(d1) == file_bytes(d2));

    CHECK(run("gen-data --spec /nonexistent --out " + d1) != 0);
    write_file(spec, "vocab_size = 3\n");
    CHECK(run("gen-data --spec " + spec + " --out " + d1) != 0);
}

TEST_CASE("train produces outputs; fixed seeds reproduce the metrics exactly") {
    std::string spec = tmp_dir() + "/train_spec.txt";
    write_file(spec, tiny_spec());
    std::string data = tmp_dir() + "/train_data.bin";
    REQUIRE(run("gen-data --spec " + spec + " --out " + data) == 0);

    std::string out1 = tmp_dir() + "/run1";
    std::string out2 = tmp_dir() + "/run2";
    std::string cfg = tmp_dir() + "/train_cfg.txt";
    write_file(cfg, tiny_config(data, out1));
    REQUIRE(run("train --config " + cfg) == 0);
    write_file(cfg, tiny_config(data, out2));
    REQUIRE(run("train --config " + cfg) == 0);

    CHECK(fs::exists(out1 + "/metrics.csv"));
    CHECK(fs::exists(out1 + "/config.effective"));
    CHECK(fs::exists(out1 + "/model.ckpt"));
    CHECK(metrics_without_wall(out1 + "/metrics.csv") ==
          metrics_without_wall(out2 + "/metrics.csv"));
    CHECK(file_bytes(out1 + "/model.ckpt") == file_bytes(out2 + "/model.ckpt"));

    // A different seed must change the trained weights.
    std::string out3 = tmp_dir() + "/run3";
    write_file(cfg, tiny_config(data, out3, 2));
    REQUIRE(run("train --config " + cfg) == 0);
    CHECK(file_bytes(out1 + "/model.ckpt") != file_bytes(out3 + "/model.ckpt"));
}

TEST_CASE("eval never mutates the checkpoint and honors decode flags") {
    std::string data = tmp_dir() + "/train_data.bin";
    std::string ckpt = tmp_dir() + "/run1/model.ckpt";
    std::string cfg_path = tmp_dir() + "/run1/config.effective";
    REQUIRE(fs::exists(ckpt));

    std::string before = file_bytes(ckpt);
    REQUIRE(run("eval --config " + cfg_path + " --checkpoint " + ckpt + " --data " + data +
                " --out-csv " + tmp_dir() + "/eval.csv") == 0);
    REQUIRE(run("eval --config " + cfg_path + " --checkpoint " + ckpt + " --data " + data +
                " --greedy") == 0);
    CHECK(file_bytes(ckpt) == before);
    CHECK(fs::exists(tmp_dir() + "/eval.csv"));

    CHECK(run("eval --config " + cfg_path + " --checkpoint /nonexistent --data " + data) != 0);
    CHECK(run("eval --config " + cfg_path + " --checkpoint " + ckpt + " --data " + data +
              " --split bogus") != 0);
}

TEST_CASE("ablate writes the full 9-row grid and rejects unknown variants") {
    std::string data = tmp_dir() + "/train_data.bin";
    std::string out = tmp_dir() + "/ablate";
    std::string cfg = tmp_dir() + "/ablate_cfg.txt";
    write_file(cfg, tiny_config(data, out));

    REQUIRE(run("ablate --config " + cfg) == 0);
    std::ifstream table(out + "/ablation.csv");
    REQUIRE(table.good());
    std::string line;
    std::getline(table, line);
    CHECK(line == "variant,decode,error_rate");
    int rows = 0;
    while (std::getline(table, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 9);

    CHECK(run("ablate --config " + cfg + " --variants nonsense") != 0);
}

TEST_CASE("ablate single variant produces one row") {
    std::string data = tmp_dir() + "/train_data.bin";
    std::string out = tmp_dir() + "/ablate_one";
    std::string cfg = tmp_dir() + "/ablate_one_cfg.txt";
    write_file(cfg, tiny_config(data, out));
    REQUIRE(run("ablate --config " + cfg + " --variants baseline") == 0);
    std::ifstream table(out + "/ablation.csv");
    std::string line;
    std::getline(table, line);
    int rows = 0;
    while (std::getline(table, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 1);
}

TEST_CASE("ablate's full-model row equals a standalone run with the same seed") {
    std::string data = tmp_dir() + "/train_data.bin";
    Dataset ds = load_dataset(data);

    RunConfig cfg = profile_defaults("toy");
    cfg.epochs = 2;
    cfg.learning_rate = 0.002;
    cfg.frontend_channels = {2, 3, 4};
    cfg.enc_hidden = 8;
    cfg.dec_hidden = 8;
    cfg.embed_dim = 4;
    cfg.attn_dim = 6;
    cfg.ca_ratio = 2;
    cfg.seed = 1;

    TrainResult standalone = train_model(cfg, ds, Ablation{}, false);
    TrainResult via_grid = train_model(cfg, ds, Ablation{}, false);  // same path ablate takes
    CHECK(standalone.test_error_rate == via_grid.test_error_rate);
    REQUIRE(standalone.rows.size() == via_grid.rows.size());
    for (size_t i = 0; i < standalone.rows.size(); ++i) {
        CHECK(standalone.rows[i].loss == via_grid.rows[i].loss);
        CHECK(standalone.rows[i].error_rate == via_grid.rows[i].error_rate);
    }
}

TEST_CASE("visualize exports 0.5-uniform maps for zeroed attention params") {
    std::string data = tmp_dir() + "/train_data.bin";
    Dataset ds = load_dataset(data);

    RunConfig cfg = profile_defaults("toy");
    cfg.frontend_channels = {2, 3, 4};
    cfg.enc_hidden = 8;
    cfg.dec_hidden = 8;
    cfg.embed_dim = 4;
    cfg.attn_dim = 6;
    cfg.ca_ratio = 2;
    Rng rng(cfg.seed);
    TrainedModel tm = build_model(cfg, ds.samples[0].h, ds.samples[0].w, ds.vocab_size, rng);
    for (const auto& name : tm.store->names()) {
        if (name.rfind("attention.", 0) != 0) continue;
        Tensor t = tm.store->get(name);
        for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.0f;
    }
    std::string ckpt = tmp_dir() + "/zero_attn.ckpt";
    save_checkpoint(*tm.store, ckpt);
    std::string cfg_path = tmp_dir() + "/vis_cfg.txt";
    write_effective_config(cfg, cfg_path);

    std::string out = tmp_dir() + "/vis";
    REQUIRE(run("visualize --config " + cfg_path + " --checkpoint " + ckpt + " --data " + data +
                " --samples 0,1 --out " + out + " --saliency") == 0);

    // Temporal CSV has exactly T' entries, all 0.5.
    int64_t t_len = ds.samples[0].t;
    std::ifstream csv(out + "/sample0000_ssta_temporal_b0.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);
    int64_t entries = line.empty() ? 0 : 1 + static_cast<int64_t>(std::count(line.begin(), line.end(), ','));
    CHECK(entries == t_len);
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) CHECK(std::stod(cell) == doctest::Approx(0.5));

    // PGM heatmaps of 0.5 maps are uniform mid-gray.
    std::string pgm = file_bytes(out + "/sample0000_jsta_f000.pgm");
    size_t header_end = pgm.find("255\n") + 4;
    for (size_t i = header_end; i < pgm.size(); ++i)
        CHECK(static_cast<unsigned char>(pgm[i]) == 128);

    // Saliency files exist for every frame.
    CHECK(fs::exists(out + "/sample0000_saliency_f000.pgm"));
    CHECK(fs::exists(out + "/sample0000_saliency_f000.csv"));

    // Out-of-range sample ids are rejected.
    CHECK(run("visualize --config " + cfg_path + " --checkpoint " + ckpt + " --data " + data +
              " --samples 99999 --out " + out) != 0);
}
