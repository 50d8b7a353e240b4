// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#include "symmim/viz.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "symmim/data.hpp"
#include "symmim/errors.hpp"
#include "symmim/patch.hpp"

namespace symmim {

namespace fs = std::filesystem;

std::string VizMaskSpec::label() const {
    std::ostringstream os;
    os << to_string(strategy);
    if (strategy == MaskStrategy::checkerboard)
        os << "_cell" << cell << "_" << to_string(phase);
    else
        os << "_r" << static_cast<int>(std::lround(ratio * 100));
    return os.str();
}

std::vector<VizMaskSpec> default_viz_specs() {
    VizMaskSpec random;
    random.strategy = MaskStrategy::random;
    random.ratio = 0.75;
    random.seed = 17;
    VizMaskSpec tiny, small, large;
    tiny.cell = 1;
    small.cell = 2;
    large.cell = 4;
    return {random, tiny, small, large};
}

TokenMask build_viz_mask(const VizMaskSpec& spec, int grid) {
    switch (spec.strategy) {
        case MaskStrategy::checkerboard:
            return checkerboard_mask(grid, grid, spec.cell, spec.phase);
        case MaskStrategy::random:
            return random_mask(grid, grid, spec.ratio, spec.seed);
        case MaskStrategy::block:
            return block_mask(grid, grid, spec.ratio, spec.seed);
        case MaskStrategy::central:
            return central_mask(grid, grid, spec.ratio);
        case MaskStrategy::derived:
            break;
    }
    throw ConfigError("derived masks cannot be rendered from a spec");
}

namespace {

// Copies a (3, h, w) planar image into a panel of the grid canvas.
void blit(std::vector<double>& canvas, int canvas_h, int canvas_w,
          const std::vector<double>& img, int h, int w, int row, int panel) {
    const size_t canvas_plane = static_cast<size_t>(canvas_h) * canvas_w;
    const size_t img_plane = static_cast<size_t>(h) * w;
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                canvas[ch * canvas_plane + (row * h + y) * static_cast<size_t>(canvas_w) +
                       panel * w + x] = img[ch * img_plane + y * static_cast<size_t>(w) + x];
}

std::vector<double> slice_image(const ImageBatch& batch, int i) {
    const size_t per = static_cast<size_t>(batch.c) * batch.h * batch.w;
    return std::vector<double>(batch.v.begin() + i * per, batch.v.begin() + (i + 1) * per);
}

}  // namespace

std::vector<fs::path> render_reconstructions(const DualEncoderState& state,
                                             const ImageBatch& images,
                                             const std::vector<VizMaskSpec>& specs,
                                             const fs::path& out_dir) {
    const EncoderConfig& enc = state.encoder;
    if (images.h != enc.image_size || images.w != enc.image_size || images.c != 3)
        throw ConfigError("viz: image geometry does not match the checkpoint config");
    const int p = enc.token_patch_size;
    const int grid = enc.grid();
    fs::create_directories(out_dir);

    auto& params = const_cast<ParamStore&>(state.theta_q);
    const PatchBatch patches = patchify(images, p);
    std::vector<fs::path> files;
    for (const auto& spec : specs) {
        const TokenMask mask = build_viz_mask(spec, grid);
        ad::Graph g(/*recording=*/false);
        ad::Node* emb = model::embed_patches(g, params, patches);
        ad::Node* seq = model::substitute_and_position(g, params, emb, {mask});
        ad::Node* feats = model::encode(g, params, enc, seq);
        ad::Node* pred = model::reconstruct(g, params, feats);

        PatchBatch pred_patches = patches;
        pred_patches.v = pred->val;
        const ImageBatch recon_raw = unpatchify(pred_patches, p);

        const int h = images.h, w = images.w;
        const int canvas_h = images.n * h;
        const int canvas_w = 3 * w;
        std::vector<double> canvas(static_cast<size_t>(3) * canvas_h * canvas_w, 0.0);
        for (int i = 0; i < images.n; ++i) {
            const std::vector<double> original = slice_image(images, i);

            // Masked input: mid-gray over masked patches.
            std::vector<double> masked = original;
            const size_t plane = static_cast<size_t>(h) * w;
            for (int tok = 0; tok < mask.size(); ++tok) {
                if (!mask.bits()[tok]) continue;
                const int gr = tok / grid, gc = tok % grid;
                for (int ch = 0; ch < 3; ++ch)
                    for (int y = gr * p; y < (gr + 1) * p; ++y)
                        for (int x = gc * p; x < (gc + 1) * p; ++x)
                            masked[ch * plane + y * static_cast<size_t>(w) + x] = 0.5;
            }

            // Composition: original at visible positions, prediction at
            // masked ones.
            std::vector<double> recon = original;
            for (int tok = 0; tok < mask.size(); ++tok) {
                if (!mask.bits()[tok]) continue;
                const int gr = tok / grid, gc = tok % grid;
                for (int ch = 0; ch < 3; ++ch)
                    for (int y = gr * p; y < (gr + 1) * p; ++y)
                        for (int x = gc * p; x < (gc + 1) * p; ++x)
                            recon[ch * plane + y * static_cast<size_t>(w) + x] = std::clamp(
                                recon_raw.at(i, ch, y, x), 0.0, 1.0);
            }

            blit(canvas, canvas_h, canvas_w, original, h, w, i, 0);
            blit(canvas, canvas_h, canvas_w, masked, h, w, i, 1);
            blit(canvas, canvas_h, canvas_w, recon, h, w, i, 2);
        }
        const fs::path file = out_dir / ("recon_" + spec.label() + ".ppm");
        write_ppm(file, canvas, canvas_h, canvas_w);
        files.push_back(file);
    }
    return files;
}

fs::path render_mask(const TokenMask& mask, int pixels_per_token, const fs::path& file) {
    if (pixels_per_token < 1) throw ConfigError("render_mask: pixel scale must be >= 1");
    const int h = mask.grid_h() * pixels_per_token;
    const int w = mask.grid_w() * pixels_per_token;
    std::vector<double> img(static_cast<size_t>(3) * h * w, 0.0);
    const size_t plane = static_cast<size_t>(h) * w;
    for (int r = 0; r < mask.grid_h(); ++r)
        for (int c = 0; c < mask.grid_w(); ++c) {
            const double v = mask.at(r, c) ? 0.0 : 1.0;
            for (int ch = 0; ch < 3; ++ch)
                for (int y = r * pixels_per_token; y < (r + 1) * pixels_per_token; ++y)
                    for (int x = c * pixels_per_token; x < (c + 1) * pixels_per_token; ++x)
                        img[ch * plane + y * static_cast<size_t>(w) + x] = v;
        }
    write_ppm(file, img, h, w);
    return file;
}

}  // namespace symmim
