// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Single entry point: pretraining, probing, ablation, mask-ratio sweeps and
// visualization over flat key=value run configs.
#include <CLI11.hpp>
#include <charconv>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "symmim/data.hpp"
#include "symmim/errors.hpp"
#include "symmim/eval.hpp"
#include "symmim/train.hpp"
#include "symmim/viz.hpp"

namespace fs = std::filesystem;
using namespace symmim;

namespace {

// --out pins the exact run directory; otherwise a fresh timestamped
// directory is created under $SYMMIM_OUT (default ./runs).
fs::path resolve_out_dir(const std::string& out_flag, const std::string& subcmd) {
    if (!out_flag.empty()) return fs::path(out_flag);
    const char* env = std::getenv("SYMMIM_OUT");
    const fs::path root = env && *env ? fs::path(env) : fs::path("runs");
    std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &utc);
    fs::path dir = root / (std::string(stamp) + "-" + subcmd);
    fs::path candidate = dir;
    for (int k = 1; fs::exists(candidate); ++k)
        candidate = dir.string() + "-" + std::to_string(k);
    return candidate;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

RunConfig load_config(const std::string& path, const std::string& seed_override) {
    RunConfig cfg = RunConfig::from_file(path);
    if (!seed_override.empty()) {
        try {
            cfg.seed = std::stoull(seed_override);
        } catch (const std::exception&) {
            throw ConfigError("--seed must be an unsigned integer");
        }
    }
    cfg.validate();
    return cfg;
}

std::vector<double> parse_ratios(const std::string& csv) {
    std::vector<double> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) {
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw ConfigError("--ratios: bad value '" + item + "'");
            }
        }
    if (out.empty()) throw ConfigError("--ratios needs at least one value");
    return out;
}

std::vector<MaskStrategy> parse_strategies(const std::string& csv) {
    std::vector<MaskStrategy> out;
    std::istringstream is(csv);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(mask_strategy_from_string(item));
    if (out.empty()) throw ConfigError("--strategies needs at least one value");
    return out;
}

struct Args {
    std::string config, data, resume, out, seed, ckpt, images, grid, phase = "even";
    std::string ratios, strategies;
    int cell = 1;
    int count = 4;
    int iters = 300;
    int probe_iters = 300;
    int checkpoint_interval = 0;
    int expected_classes = 0;
    double lr = 0.05;
    double val_fraction = 0.25;
    std::uint64_t probe_seed = 7;
    bool shuffle_labels = false;
};

int cmd_pretrain(const Args& args) {
    const RunConfig cfg = load_config(args.config, args.seed);
    const DatasetSpec data = DatasetSpec::parse(
        args.data.empty() ? "synthetic:256" : args.data, cfg.encoder.image_size);
    const fs::path out_dir = resolve_out_dir(args.out, "pretrain");
    const TrainLoopResult result = train_loop(cfg, data, out_dir, {},
                                              fs::path(args.resume),
                                              args.checkpoint_interval);
    std::cout << "run_dir: " << out_dir.string() << "\n"
              << "steps: " << result.steps_run << "\n"
              << "checkpoint: " << result.checkpoint.string() << "\n";
    return 0;
}

int cmd_probe(const Args& args) {
    const LoadedCheckpoint ck = load_checkpoint(args.ckpt);
    DatasetSpec spec = DatasetSpec::parse(args.data, ck.config.encoder.image_size);
    ProbeConfig pc;
    pc.iters = args.iters;
    pc.lr = args.lr;
    pc.val_fraction = args.val_fraction;
    pc.seed = args.probe_seed;
    pc.expected_classes = args.expected_classes;
    pc.shuffle_labels = args.shuffle_labels;
    const fs::path out_dir = resolve_out_dir(args.out, "probe");
    const Dataset dataset = Dataset::load(spec);
    const ProbeResult result = linear_probe(ck.state, dataset, pc);
    fs::create_directories(out_dir);
    write_text(out_dir / "config.txt", ck.config_text);
    char acc[32];
    const auto end = std::to_chars(acc, acc + sizeof(acc), result.accuracy).ptr;
    std::ostringstream csv;
    csv << "accuracy,n_eval,seed\n"
        << std::string(acc, end) << ',' << result.n_eval << ',' << result.seed << '\n';
    write_text(out_dir / "probe.csv", csv.str());
    std::cout << "accuracy: " << result.accuracy << " (n_eval " << result.n_eval << ")\n"
              << "run_dir: " << out_dir.string() << "\n";
    return 0;
}

int cmd_ablate(const Args& args) {
    const RunConfig cfg = load_config(args.config, args.seed);
    const DatasetSpec data = DatasetSpec::parse(
        args.data.empty() ? "synthetic-classes:128" : args.data, cfg.encoder.image_size);
    const fs::path out_dir = resolve_out_dir(args.out, "ablate");
    fs::create_directories(out_dir);
    write_text(out_dir / "config.txt", cfg.to_text());
    AblationOptions opts;
    opts.probe_iters = args.probe_iters;
    const AblationReport report = run_ablation(cfg, data, out_dir, opts);
    write_text(out_dir / "ablation.csv", report.to_csv());
    write_text(out_dir / "ablation.txt", report.formatted_table());
    std::cout << report.formatted_table() << "run_dir: " << out_dir.string() << "\n";
    return 0;
}

int cmd_mask_sweep(const Args& args) {
    const RunConfig cfg = load_config(args.config, args.seed);
    const std::vector<double> ratios = parse_ratios(args.ratios);
    const std::vector<MaskStrategy> strategies = parse_strategies(args.strategies);
    const DatasetSpec data = DatasetSpec::parse(
        args.data.empty() ? "synthetic-classes:128" : args.data, cfg.encoder.image_size);
    for (double r : ratios)
        if (!(r > 0.0 && r < 1.0)) throw ConfigError("sweep ratios must lie in (0, 1)");
    const fs::path out_dir = resolve_out_dir(args.out, "mask-sweep");
    fs::create_directories(out_dir);
    write_text(out_dir / "config.txt", cfg.to_text());
    AblationOptions opts;
    opts.probe_iters = args.probe_iters;
    const SweepReport report = masking_ratio_probe(cfg, data, ratios, strategies,
                                                   out_dir, opts);
    write_text(out_dir / "sweep.csv", report.to_csv());
    std::cout << report.to_csv() << "runs: " << report.rows.size() << "\n"
              << "run_dir: " << out_dir.string() << "\n";
    return 0;
}

int cmd_viz(const Args& args) {
    const LoadedCheckpoint ck = load_checkpoint(args.ckpt);
    DatasetSpec spec = DatasetSpec::parse(args.images, ck.config.encoder.image_size);
    const Dataset dataset = Dataset::load(spec);
    const int count = std::min(args.count, dataset.size());
    if (count < 1) throw ConfigError("viz needs at least one image");
    std::vector<int> idx(count);
    for (int i = 0; i < count; ++i) idx[i] = i;
    const fs::path out_dir = resolve_out_dir(args.out, "viz");
    fs::create_directories(out_dir);
    write_text(out_dir / "config.txt", ck.config_text);
    const auto files = render_reconstructions(ck.state, dataset.gather(idx),
                                              default_viz_specs(), out_dir);
    for (const auto& f : files) std::cout << f.string() << "\n";
    return 0;
}

int cmd_mask_show(const Args& args) {
    const auto x = args.grid.find('x');
    int h = 0, w = 0;
    try {
        if (x == std::string::npos) throw std::invalid_argument("no separator");
        h = std::stoi(args.grid.substr(0, x));
        w = std::stoi(args.grid.substr(x + 1));
    } catch (const std::exception&) {
        throw ConfigError("--grid must look like HxW, e.g. 4x4");
    }
    const TokenMask mask =
        checkerboard_mask(h, w, args.cell, parity_from_string(args.phase));
    std::cout << mask.serialize();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SymMIM: symmetric-masking self-supervised pretraining laboratory"};
    app.require_subcommand(1);
    Args args;

    auto* pretrain = app.add_subcommand("pretrain", "train a dual-encoder model");
    pretrain->add_option("--config", args.config, "run config file")->required();
    pretrain->add_option("--data", args.data, "dataset spec (default synthetic:256)");
    pretrain->add_option("--resume", args.resume, "checkpoint to resume from");
    pretrain->add_option("--out", args.out, "exact output directory");
    pretrain->add_option("--seed", args.seed, "override the config seed");
    pretrain->add_option("--checkpoint-interval", args.checkpoint_interval,
                         "also checkpoint every N steps");

    auto* probe = app.add_subcommand("probe", "linear probe a checkpoint");
    probe->add_option("--ckpt", args.ckpt, "checkpoint file")->required();
    probe->add_option("--data", args.data, "labeled dataset spec")->required();
    probe->add_option("--out", args.out, "exact output directory");
    probe->add_option("--iters", args.iters, "probe training iterations");
    probe->add_option("--lr", args.lr, "probe learning rate");
    probe->add_option("--val-fraction", args.val_fraction, "held-out fraction");
    probe->add_option("--probe-seed", args.probe_seed, "probe split seed");
    probe->add_option("--expected-classes", args.expected_classes,
                      "required class count (0 = any)");
    probe->add_flag("--shuffle-labels", args.shuffle_labels,
                    "chance-level control with permuted labels");

    auto* ablate = app.add_subcommand("ablate", "loss-term ablation (4 runs)");
    ablate->add_option("--config", args.config, "run config file")->required();
    ablate->add_option("--data", args.data, "labeled dataset spec");
    ablate->add_option("--out", args.out, "exact output directory");
    ablate->add_option("--seed", args.seed, "override the config seed");
    ablate->add_option("--probe-iters", args.probe_iters, "probe iterations per run");

    auto* sweep = app.add_subcommand("mask-sweep", "strategy x ratio probe sweep");
    sweep->add_option("--config", args.config, "run config file")->required();
    sweep->add_option("--ratios", args.ratios, "comma-separated ratios")->required();
    sweep->add_option("--strategies", args.strategies, "comma-separated strategies")
        ->required();
    sweep->add_option("--data", args.data, "labeled dataset spec");
    sweep->add_option("--out", args.out, "exact output directory");
    sweep->add_option("--seed", args.seed, "override the config seed");
    sweep->add_option("--probe-iters", args.probe_iters, "probe iterations per run");

    auto* viz = app.add_subcommand("viz", "reconstruction grids for the mask types");
    viz->add_option("--ckpt", args.ckpt, "checkpoint file")->required();
    viz->add_option("--images", args.images, "dataset spec for source images")->required();
    viz->add_option("--count", args.count, "number of images per grid");
    viz->add_option("--out", args.out, "exact output directory");

    auto* show = app.add_subcommand("mask-show", "print a checkerboard mask");
    show->add_option("--grid", args.grid, "token grid as HxW")->required();
    show->add_option("--cell", args.cell, "cell size in tokens");
    show->add_option("--phase", args.phase, "even|odd");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (pretrain->parsed()) return cmd_pretrain(args);
        if (probe->parsed()) return cmd_probe(args);
        if (ablate->parsed()) return cmd_ablate(args);
        if (sweep->parsed()) return cmd_mask_sweep(args);
        if (viz->parsed()) return cmd_viz(args);
        if (show->parsed()) return cmd_mask_show(args);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
