// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "symmim/mask.hpp"

namespace symmim {

// Batch of images, values in [0, 1], layout (n, c, h, w) row-major.
struct ImageBatch {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    static ImageBatch zeros(int n, int c, int h, int w);
    double& at(int i, int ch, int y, int x) {
        return v[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
    }
    double at(int i, int ch, int y, int x) const {
        return v[((static_cast<size_t>(i) * c + ch) * h + y) * w + x];
    }
};

// Patch-token decomposition, layout (n, t, d_patch) row-major. Tokens are
// ordered row-major over the lattice (top-left token first); each token is
// the flattened c x p x p sub-image with component index ch*p*p + py*p + px.
struct PatchBatch {
    int n = 0;
    int t = 0;
    int d_patch = 0;
    int grid_h = 0;
    int grid_w = 0;
    std::vector<double> v;

    static PatchBatch zeros(int n, int grid_h, int grid_w, int d_patch);
    double& at(int i, int tok, int comp) {
        return v[(static_cast<size_t>(i) * t + tok) * d_patch + comp];
    }
    double at(int i, int tok, int comp) const {
        return v[(static_cast<size_t>(i) * t + tok) * d_patch + comp];
    }
};

PatchBatch patchify(const ImageBatch& images, int patch_size);
ImageBatch unpatchify(const PatchBatch& patches, int patch_size, int channels = 3);

// Substitutes mask_token at masked positions of an embedded sequence
// (n, t, dim) stored flat; visible positions pass through. One mask may be
// shared by the whole batch or one mask supplied per sample.
std::vector<double> apply_mask_values(const std::vector<double>& embedded,
                                      int n, int t, int dim,
                                      const std::vector<TokenMask>& masks,
                                      const std::vector<double>& mask_token);

}  // namespace symmim
