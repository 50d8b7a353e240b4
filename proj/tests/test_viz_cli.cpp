// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "symmim/data.hpp"
#include "symmim/errors.hpp"
#include "symmim/eval.hpp"
#include "symmim/viz.hpp"
#include "testutil.hpp"

using namespace symmim;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("symmim_viz_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunConfig viz_config() {
    RunConfig cfg;
    cfg.encoder.depth = 1;
    cfg.encoder.dim = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.mlp_ratio = 2.0;
    cfg.encoder.token_patch_size = 2;
    cfg.encoder.image_size = 16;  // 8x8 grid so cell 4 divides it
    cfg.heads.proj_hidden = 32;
    cfg.heads.proj_out = 8;
    cfg.heads.pred_hidden = 32;
    cfg.heads.pred_out = 8;
    cfg.total_steps = 2;
    cfg.warmup_steps = 1;
    cfg.batch_size = 2;
    cfg.seed = 11;
    return cfg;
}

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CommandResult run_cli(const std::string& args) {
    const std::string cmd = std::string(SYMMIM_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CommandResult result;
    char buf[4096];
    while (size_t got = fread(buf, 1, sizeof(buf), pipe)) result.output.append(buf, got);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

}  // namespace

TEST_CASE("render_mask draws the predicate black-on-white") {
    const fs::path dir = temp_dir("mask");
    const TokenMask cb = checkerboard_mask(2, 2, 1, Parity::even);
    const fs::path file = render_mask(cb, 1, dir / "cb.ppm");
    const auto img = testutil::independent_read_p6(file);
    CHECK(img.w == 2);
    CHECK(img.h == 2);
    // Masked (even parity) cells are black, visible white.
    const unsigned char expect[4] = {0, 255, 255, 0};
    for (int i = 0; i < 4; ++i)
        for (int ch = 0; ch < 3; ++ch) REQUIRE(img.rgb[i * 3 + ch] == expect[i]);

    const fs::path all_file = render_mask(random_mask(3, 3, 1.0, 0), 2, dir / "all.ppm");
    const auto all = testutil::independent_read_p6(all_file);
    CHECK(all.w == 6);
    CHECK(all.h == 6);
    for (unsigned char b : all.rgb) REQUIRE(b == 0);
}

TEST_CASE("reconstruction grids compose originals at visible pixels") {
    const RunConfig cfg = viz_config();
    DualEncoderState state = DualEncoderState::init(cfg.encoder, cfg.heads, cfg.seed);
    DatasetSpec data;
    data.source = DataSource::synthetic;
    data.limit = 3;
    data.seed = 2;
    data.image_size = cfg.encoder.image_size;
    const Dataset ds = Dataset::load(data);
    const ImageBatch images = ds.gather({0, 1, 2});

    const fs::path dir = temp_dir("recon");
    const auto files = render_reconstructions(state, images, default_viz_specs(), dir);
    REQUIRE(files.size() == 4);

    const int h = images.h, w = images.w, grid = cfg.encoder.grid();
    const int p = cfg.encoder.token_patch_size;
    const auto specs = default_viz_specs();
    for (size_t si = 0; si < files.size(); ++si) {
        const auto img = testutil::independent_read_p6(files[si]);
        // Layout: one row per input image, three panels wide.
        REQUIRE(img.h == images.n * h);
        REQUIRE(img.w == 3 * w);
        const TokenMask mask = build_viz_mask(specs[si], grid);
        for (int i = 0; i < images.n; ++i)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int tok = (y / p) * grid + (x / p);
                    if (mask.bits()[tok]) continue;
                    for (int ch = 0; ch < 3; ++ch) {
                        // Visible pixels in the reconstruction panel equal
                        // the original panel bit-exactly.
                        const unsigned char orig =
                            img.rgb[((i * h + y) * img.w + x) * 3 + ch];
                        const unsigned char recon =
                            img.rgb[((i * h + y) * img.w + 2 * w + x) * 3 + ch];
                        REQUIRE(recon == orig);
                        // Masked-input panel shows untouched pixels too.
                        const unsigned char masked_panel =
                            img.rgb[((i * h + y) * img.w + w + x) * 3 + ch];
                        REQUIRE(masked_panel == orig);
                    }
                }
    }
}

TEST_CASE("all-visible mask reproduces the original bit-exactly") {
    const RunConfig cfg = viz_config();
    DualEncoderState state = DualEncoderState::init(cfg.encoder, cfg.heads, cfg.seed);
    DatasetSpec data;
    data.source = DataSource::synthetic;
    data.limit = 1;
    data.seed = 3;
    data.image_size = cfg.encoder.image_size;
    const ImageBatch images = Dataset::load(data).gather({0});

    VizMaskSpec none;
    none.strategy = MaskStrategy::random;
    none.ratio = 0.0;
    const fs::path dir = temp_dir("identity");
    const auto files = render_reconstructions(state, images, {none}, dir);
    const auto img = testutil::independent_read_p6(files[0]);
    const int h = images.h, w = images.w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                REQUIRE(img.rgb[(y * img.w + 2 * w + x) * 3 + ch] ==
                        img.rgb[(y * img.w + x) * 3 + ch]);
}

TEST_CASE("default viz specs mirror the four panel analogs") {
    const auto specs = default_viz_specs();
    REQUIRE(specs.size() == 4);
    CHECK(specs[0].strategy == MaskStrategy::random);
    CHECK(specs[0].ratio == 0.75);
    CHECK(specs[1].strategy == MaskStrategy::checkerboard);
    CHECK(specs[1].cell == 1);
    CHECK(specs[2].cell == 2);
    CHECK(specs[3].cell == 4);
}

TEST_CASE("viz rejects mismatched geometry") {
    const RunConfig cfg = viz_config();
    DualEncoderState state = DualEncoderState::init(cfg.encoder, cfg.heads, cfg.seed);
    ImageBatch wrong = ImageBatch::zeros(1, 3, 8, 8);
    CHECK_THROWS_AS(
        render_reconstructions(state, wrong, default_viz_specs(), temp_dir("geom")),
        ConfigError);
}

TEST_CASE("cli: mask-show prints the text serialization") {
    const auto result = run_cli("mask-show --grid 4x4 --cell 1 --phase even");
    CHECK(result.exit_code == 0);
    CHECK(result.output == "4 4 checkerboard 1 even 0.5 0\n1010\n0101\n1010\n0101\n");
    const auto odd = run_cli("mask-show --grid 4x4 --cell 1 --phase odd");
    CHECK(odd.output == "4 4 checkerboard 1 odd 0.5 0\n0101\n1010\n0101\n1010\n");
}

TEST_CASE("cli: unknown subcommands and flags exit 1 with usage text") {
    const auto unknown = run_cli("frobnicate");
    CHECK(unknown.exit_code == 1);
    CHECK(unknown.output.find("Usage") != std::string::npos);
    const auto badflag = run_cli("mask-show --grid 4x4 --bogus 1");
    CHECK(badflag.exit_code == 1);
    const auto baddim = run_cli("mask-show --grid 5x5 --cell 2");
    CHECK(baddim.exit_code == 1);
    CHECK(baddim.output.find("does not divide") != std::string::npos);
}

TEST_CASE("cli: pretrain validates the config before writing anything") {
    const fs::path dir = temp_dir("cli_validate");
    const fs::path cfg_path = dir / "bad.cfg";
    {
        RunConfig cfg = viz_config();
        std::string text = cfg.to_text();
        // small_cell >= large_cell violates the invariant.
        const auto pos = text.find("small_cell = 1");
        text.replace(pos, 14, "small_cell = 2");
        std::ofstream out(cfg_path);
        out << text;
    }
    const fs::path out_dir = dir / "run";
    const auto result = run_cli("pretrain --config " + cfg_path.string() + " --out " +
                                out_dir.string());
    CHECK(result.exit_code == 1);
    CHECK(result.output.find("small_cell must be < large_cell") != std::string::npos);
    CHECK_FALSE(fs::exists(out_dir));
}

TEST_CASE("cli: pretrain then viz and probe round-trip through files") {
    const fs::path dir = temp_dir("cli_e2e");
    const fs::path cfg_path = dir / "run.cfg";
    {
        std::ofstream out(cfg_path);
        out << viz_config().to_text();
    }
    const fs::path run_dir = dir / "run";
    const auto pre = run_cli("pretrain --config " + cfg_path.string() +
                             " --data synthetic:8 --out " + run_dir.string());
    CHECK(pre.exit_code == 0);
    CHECK(fs::exists(run_dir / "config.txt"));
    CHECK(fs::exists(run_dir / "metrics.csv"));
    const fs::path ckpt = run_dir / "checkpoint_final.ckpt";
    REQUIRE(fs::exists(ckpt));

    // The seed override is reflected in the echoed config.
    const fs::path seeded_dir = dir / "seeded";
    const auto seeded = run_cli("pretrain --config " + cfg_path.string() +
                                " --data synthetic:8 --seed 999 --out " +
                                seeded_dir.string());
    CHECK(seeded.exit_code == 0);
    std::ifstream echo(seeded_dir / "config.txt");
    std::stringstream ss;
    ss << echo.rdbuf();
    CHECK(ss.str().find("seed = 999") != std::string::npos);

    const fs::path viz_dir = dir / "viz";
    const auto viz = run_cli("viz --ckpt " + ckpt.string() +
                             " --images synthetic:4 --count 2 --out " + viz_dir.string());
    CHECK(viz.exit_code == 0);
    int ppm_count = 0;
    for (const auto& entry : fs::directory_iterator(viz_dir))
        if (entry.path().extension() == ".ppm") {
            ++ppm_count;
            const auto img = testutil::independent_read_p6(entry.path());
            CHECK(img.w == 3 * 16);
            CHECK(img.h == 2 * 16);
        }
    CHECK(ppm_count == 4);

    const fs::path probe_dir = dir / "probe";
    const auto probe = run_cli("probe --ckpt " + ckpt.string() +
                               " --data synthetic-classes:32 --iters 80 --out " +
                               probe_dir.string());
    CHECK(probe.exit_code == 0);
    CHECK(probe.output.find("accuracy:") != std::string::npos);
    CHECK(fs::exists(probe_dir / "probe.csv"));

    // Runtime failure (missing checkpoint) exits 2.
    const auto missing = run_cli("probe --ckpt /nonexistent.ckpt --data synthetic-classes:16");
    CHECK(missing.exit_code == 2);
}
