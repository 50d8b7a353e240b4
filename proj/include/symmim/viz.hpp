// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "symmim/model.hpp"
#include "symmim/train.hpp"

namespace symmim {

struct VizMaskSpec {
    MaskStrategy strategy = MaskStrategy::checkerboard;
    double ratio = 0.5;     // random/block/central
    int cell = 1;           // checkerboard
    Parity phase = Parity::even;
    std::uint64_t seed = 0;

    std::string label() const;
};

// The four panel analogs: random at 0.75, then checkerboard cells 1, 2, 4.
std::vector<VizMaskSpec> default_viz_specs();

TokenMask build_viz_mask(const VizMaskSpec& spec, int grid);

// One PPM per mask spec: each input image contributes a row of
// [original | masked input | reconstruction], so the file is
// (n_images * h) x (3 * w) pixels. Masked input paints masked patches
// mid-gray; the reconstruction keeps original pixels at visible positions
// and predicted pixels at masked ones.
std::vector<std::filesystem::path> render_reconstructions(
    const DualEncoderState& state, const ImageBatch& images,
    const std::vector<VizMaskSpec>& specs, const std::filesystem::path& out_dir);

// Black = masked, white = visible; p pixels per token cell.
std::filesystem::path render_mask(const TokenMask& mask, int pixels_per_token,
                                  const std::filesystem::path& file);

}  // namespace symmim
