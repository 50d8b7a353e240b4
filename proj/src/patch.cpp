// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#include "symmim/patch.hpp"

#include <string>

#include "symmim/errors.hpp"

namespace symmim {

ImageBatch ImageBatch::zeros(int n, int c, int h, int w) {
    ImageBatch b;
    b.n = n;
    b.c = c;
    b.h = h;
    b.w = w;
    b.v.assign(static_cast<size_t>(n) * c * h * w, 0.0);
    return b;
}

PatchBatch PatchBatch::zeros(int n, int grid_h, int grid_w, int d_patch) {
    PatchBatch p;
    p.n = n;
    p.grid_h = grid_h;
    p.grid_w = grid_w;
    p.t = grid_h * grid_w;
    p.d_patch = d_patch;
    p.v.assign(static_cast<size_t>(n) * p.t * d_patch, 0.0);
    return p;
}

PatchBatch patchify(const ImageBatch& images, int patch_size) {
    const int p = patch_size;
    if (p <= 0) throw ConfigError("patch size must be positive");
    if (images.h % p != 0)
        throw ConfigError("patch size " + std::to_string(p) +
                          " does not divide image height " + std::to_string(images.h));
    if (images.w % p != 0)
        throw ConfigError("patch size " + std::to_string(p) +
                          " does not divide image width " + std::to_string(images.w));
    const int gh = images.h / p;
    const int gw = images.w / p;
    PatchBatch out = PatchBatch::zeros(images.n, gh, gw, images.c * p * p);
    for (int i = 0; i < images.n; ++i)
        for (int gr = 0; gr < gh; ++gr)
            for (int gc = 0; gc < gw; ++gc) {
                const int tok = gr * gw + gc;
                for (int ch = 0; ch < images.c; ++ch)
                    for (int py = 0; py < p; ++py)
                        for (int px = 0; px < p; ++px)
                            out.at(i, tok, ch * p * p + py * p + px) =
                                images.at(i, ch, gr * p + py, gc * p + px);
            }
    return out;
}

ImageBatch unpatchify(const PatchBatch& patches, int patch_size, int channels) {
    const int p = patch_size;
    if (p <= 0) throw ConfigError("patch size must be positive");
    if (patches.d_patch != channels * p * p)
        throw ConfigError("d_patch " + std::to_string(patches.d_patch) +
                          " != channels * p^2 = " + std::to_string(channels * p * p));
    ImageBatch out = ImageBatch::zeros(patches.n, channels,
                                       patches.grid_h * p, patches.grid_w * p);
    for (int i = 0; i < patches.n; ++i)
        for (int gr = 0; gr < patches.grid_h; ++gr)
            for (int gc = 0; gc < patches.grid_w; ++gc) {
                const int tok = gr * patches.grid_w + gc;
                for (int ch = 0; ch < channels; ++ch)
                    for (int py = 0; py < p; ++py)
                        for (int px = 0; px < p; ++px)
                            out.at(i, ch, gr * p + py, gc * p + px) =
                                patches.at(i, tok, ch * p * p + py * p + px);
            }
    return out;
}

std::vector<double> apply_mask_values(const std::vector<double>& embedded,
                                      int n, int t, int dim,
                                      const std::vector<TokenMask>& masks,
                                      const std::vector<double>& mask_token) {
    if (masks.empty() || (static_cast<int>(masks.size()) != 1 &&
                          static_cast<int>(masks.size()) != n))
        throw ConfigError("apply_mask: need one mask or one per sample");
    if (static_cast<int>(mask_token.size()) != dim)
        throw ConfigError("apply_mask: mask token dim mismatch");
    for (const auto& m : masks)
        if (m.size() != t)
            throw ConfigError("apply_mask: mask grid does not match token count");
    if (embedded.size() != static_cast<size_t>(n) * t * dim)
        throw ConfigError("apply_mask: embedded sequence shape mismatch");
    std::vector<double> out = embedded;
    for (int i = 0; i < n; ++i) {
        const TokenMask& m = masks[masks.size() == 1 ? 0 : i];
        for (int tok = 0; tok < t; ++tok) {
            if (!m.bits()[tok]) continue;
            double* dst = out.data() + (static_cast<size_t>(i) * t + tok) * dim;
            for (int d = 0; d < dim; ++d) dst[d] = mask_token[d];
        }
    }
    return out;
}

}  // namespace symmim
