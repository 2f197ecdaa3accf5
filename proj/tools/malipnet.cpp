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

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "malip/config.hpp"
#include "malip/trainer.hpp"
#include "malip/visualize.hpp"

namespace {

using namespace malip;

struct VariantSpec {
    std::string name;
    Ablation ablation;
};

const std::vector<VariantSpec> kAllVariants = {
    {"baseline", {false, false, false}}, {"ca", {true, false, false}},
    {"jsta", {false, true, false}},      {"ssta", {false, false, true}},
    {"ca+jsta", {true, true, false}},    {"ca+ssta", {true, false, true}},
    {"jsta+ssta", {false, true, true}},  {"full", {true, true, true}},
};

Ablation variant_by_name(const std::string& name) {
    for (const VariantSpec& v : kAllVariants)
        if (v.name == name) return v.ablation;
    throw std::invalid_argument("unknown variant '" + name + "' (expected one of baseline, ca, "
                                "jsta, ssta, ca+jsta, ca+ssta, jsta+ssta, full)");
}

RunConfig config_from_args(const std::string& config_path, const std::string& profile) {
    if (!config_path.empty()) return load_config_file(config_path);
    return profile_defaults(profile);
}

TrainedModel load_model_for(const RunConfig& cfg, const Dataset& ds,
                            const std::string& checkpoint) {
    check_arg(!ds.samples.empty(), "empty dataset");
    Rng rng(cfg.seed);
    TrainedModel tm = build_model(cfg, ds.samples[0].h, ds.samples[0].w, ds.vocab_size, rng);
    load_checkpoint(*tm.store, checkpoint);
    return tm;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path) {
    SynthSpec spec = load_synth_spec_file(spec_path);
    Dataset ds = generate(spec);
    save_dataset(ds, out_path);
    std::cerr << "wrote " << ds.samples.size() << " samples (vocab " << ds.vocab_size << ") to "
              << out_path << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    check_arg(!cfg.data_path.empty(), "train: no dataset given (config key 'data' or --data)");
    Dataset ds = load_dataset(cfg.data_path);
    TrainResult result = train_model(cfg, ds, Ablation{}, true);
    std::cerr << "test error rate (beam " << cfg.beam_width << "): " << result.test_error_rate
              << "\n";
    std::cerr << "outputs in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data_path,
             bool greedy, int64_t beam_width, const std::string& split_name,
             const std::string& out_csv) {
    Dataset ds = load_dataset(data_path);
    TrainedModel tm = load_model_for(cfg, ds, checkpoint);

    std::vector<int64_t> indices;
    if (split_name == "all") {
        for (int64_t i = 0; i < static_cast<int64_t>(ds.samples.size()); ++i) indices.push_back(i);
    } else if (split_name == "train") {
        indices = split_indices(ds, Split::Train);
    } else if (split_name == "val") {
        indices = split_indices(ds, Split::Val);
    } else if (split_name == "test") {
        indices = split_indices(ds, Split::Test);
    } else {
        throw std::invalid_argument("eval: unknown split '" + split_name + "'");
    }
    check_arg(!indices.empty(), "eval: split '" + split_name + "' is empty");

    Ablation full;
    double loss = mean_loss(*tm.model, ds, indices, 8, full);
    double er = corpus_token_error_rate(*tm.model, ds, indices, !greedy, beam_width, full);
    std::cerr << "split " << split_name << ": loss " << loss << ", error rate " << er
              << (greedy ? " (greedy)" : " (beam " + std::to_string(beam_width) + ")") << "\n";
    if (!out_csv.empty())
        write_metrics_csv({{0, split_name, loss, er, 1.0, 0.0}}, out_csv);
    return 0;
}

int cmd_ablate(const RunConfig& base_cfg, const std::vector<std::string>& variant_names,
               bool use_beam) {
    check_arg(!base_cfg.data_path.empty(), "ablate: no dataset given");
    Dataset ds = load_dataset(base_cfg.data_path);

    std::vector<std::string> names = variant_names;
    if (names.empty())
        for (const VariantSpec& v : kAllVariants) names.push_back(v.name);

    std::filesystem::create_directories(base_cfg.out_dir);
    std::ofstream table(base_cfg.out_dir + "/ablation.csv");
    if (!table) fail("ablate: cannot write ablation.csv");
    table << "variant,decode,error_rate\n";

    for (const std::string& name : names) {
        Ablation abl = variant_by_name(name);
        RunConfig cfg = base_cfg;
        cfg.out_dir = base_cfg.out_dir + "/" + name;
        std::cerr << "== variant " << name << " ==\n";
        bool greedy_row = use_beam && name == "full";
        TrainResult res = train_model(cfg, ds, abl, true, nullptr, greedy_row);
        if (!use_beam) {
            // Without beam search everywhere: re-rank row with greedy decode.
            TrainedModel tm;
            Rng rng(cfg.seed);
            tm = build_model(cfg, ds.samples[0].h, ds.samples[0].w, ds.vocab_size, rng);
            load_checkpoint(*tm.store, cfg.out_dir + "/model.ckpt");
            double er = corpus_token_error_rate(*tm.model, ds, split_indices(ds, Split::Test),
                                                false, 0, abl);
            table << name << ",greedy," << er << "\n";
            continue;
        }
        if (greedy_row)
            table << "full (w/o beam),greedy," << res.test_error_rate_greedy << "\n";
        table << name << ",beam" << cfg.beam_width << "," << res.test_error_rate << "\n";
    }
    std::cerr << "ablation table in " << base_cfg.out_dir << "/ablation.csv\n";
    return 0;
}

int cmd_visualize(const RunConfig& cfg, const std::string& checkpoint, const std::string& data_path,
                  const std::vector<int64_t>& sample_ids, const std::string& out_dir,
                  bool saliency) {
    Dataset ds = load_dataset(data_path);
    TrainedModel tm = load_model_for(cfg, ds, checkpoint);
    std::filesystem::create_directories(out_dir);

    Ablation full;
    for (int64_t id : sample_ids) {
        check_arg(id >= 0 && id < static_cast<int64_t>(ds.samples.size()),
                  "visualize: sample id " + std::to_string(id) + " out of range [0," +
                      std::to_string(ds.samples.size()) + ")");
        Batch one = make_batch(ds, {id});
        AttentionTrace trace;
        {
            autograd::NoGradGuard no_grad;
            tm.model->encode(one.clips, false, full, &trace);
        }
        export_trace(trace, id, out_dir);
        if (saliency) export_saliency(*tm.model, one, id, full, out_dir);
        std::cerr << "exported sample " << id << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MA-LipNet style lipreading: synthetic data, training, evaluation, ablation and "
                 "attention-map export"};
    app.require_subcommand(1);

    // gen-data
    std::string spec_path, gen_out;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic viseme dataset");
    gen->add_option("--spec", spec_path, "key=value spec file")->required();
    gen->add_option("--out", gen_out, "output dataset file")->required();

    // shared config options
    std::string config_path, profile = "toy";
    std::string data_path, out_dir, checkpoint, out_csv, split_name = "test";
    std::vector<std::string> variants;
    std::vector<int64_t> sample_ids;
    int64_t seed = -1, epochs = -1, batch_size = -1, beam_width = -1;
    double lr = -1.0;
    bool greedy = false, no_beam = false, saliency = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--profile", profile, "profile when no config file (cmlr|grid|toy)");
        cmd->add_option("--seed", seed, "override seed");
        cmd->add_option("--data", data_path, "override dataset path");
        cmd->add_option("--out", out_dir, "override output directory");
    };

    CLI::App* train = app.add_subcommand("train", "train the full model");
    add_common(train);
    train->add_option("--epochs", epochs, "override epochs");
    train->add_option("--batch-size", batch_size, "override batch size");
    train->add_option("--lr", lr, "override learning rate");
    train->add_option("--beam", beam_width, "override beam width");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--beam", beam_width, "beam width (default from config)");
    eval->add_flag("--greedy", greedy, "greedy decoding instead of beam search");
    eval->add_option("--split", split_name, "train|val|test|all (default test)");
    eval->add_option("--out-csv", out_csv, "write a metrics CSV row here");

    CLI::App* ablate = app.add_subcommand("ablate", "train and score attention ablations");
    add_common(ablate);
    ablate->add_option("--variants", variants,
                       "variant names (default: the full grid)")->delimiter(',');
    ablate->add_flag("--no-beam", no_beam, "greedy decoding for every row");

    CLI::App* vis = app.add_subcommand("visualize", "export attention maps for samples");
    add_common(vis);
    vis->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    vis->add_option("--samples", sample_ids, "sample ids")->delimiter(',')->required();
    vis->add_flag("--saliency", saliency, "also export input-gradient saliency");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(spec_path, gen_out);

        RunConfig cfg = config_from_args(config_path, profile);
        if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
        if (!data_path.empty()) cfg.data_path = data_path;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (epochs > 0) cfg.epochs = epochs;
        if (batch_size > 0) cfg.batch_size = batch_size;
        if (lr > 0) cfg.learning_rate = lr;
        if (beam_width > 0) cfg.beam_width = beam_width;

        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed())
            return cmd_eval(cfg, checkpoint, cfg.data_path, greedy, cfg.beam_width, split_name,
                            out_csv);
        if (ablate->parsed()) return cmd_ablate(cfg, variants, !no_beam);
        if (vis->parsed())
            return cmd_visualize(cfg, checkpoint, cfg.data_path, sample_ids,
                                 out_dir.empty() ? cfg.out_dir : out_dir, saliency);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
