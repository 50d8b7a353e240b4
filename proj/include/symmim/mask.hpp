// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace symmim {

enum class MaskStrategy { checkerboard, random, block, central, derived };
enum class Parity { even, odd };

std::string to_string(MaskStrategy s);
std::string to_string(Parity p);
MaskStrategy mask_strategy_from_string(const std::string& s);
Parity parity_from_string(const std::string& s);

// Which fields are meaningful depends on strategy. Sentinels for the rest:
// cell_size = 0, seed = 0, phase = even, ratio_target = actual target
// (0.5 for checkerboard, 0 for derived masks).
struct MaskProvenance {
    MaskStrategy strategy = MaskStrategy::derived;
    int cell_size = 0;
    Parity phase = Parity::even;
    double ratio_target = 0.0;
    std::uint64_t seed = 0;
};

// Boolean grid over the token lattice; true = masked.
class TokenMask {
public:
    TokenMask() = default;
    TokenMask(int grid_h, int grid_w, std::vector<std::uint8_t> bits,
              MaskProvenance prov);

    int grid_h() const { return grid_h_; }
    int grid_w() const { return grid_w_; }
    int size() const { return grid_h_ * grid_w_; }
    bool at(int row, int col) const { return bits_[row * grid_w_ + col] != 0; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }
    const MaskProvenance& provenance() const { return prov_; }

    int masked_count() const;
    double ratio() const;
    TokenMask complement() const;

    // Flat row-major indices of masked tokens, ascending.
    std::vector<int> masked_indices() const;

    // One-line header "h w strategy cell phase ratio seed" followed by
    // grid_h rows of '0'/'1' characters ('1' = masked).
    std::string serialize() const;
    static TokenMask deserialize(const std::string& text);

private:
    int grid_h_ = 0;
    int grid_w_ = 0;
    std::vector<std::uint8_t> bits_;
    MaskProvenance prov_;
};

// bits[i][j] = (((i / cell) + (j / cell)) % 2 == phase). cell_size must
// divide both grid dimensions; violations raise ConfigError naming the
// offending dimension.
TokenMask checkerboard_mask(int grid_h, int grid_w, int cell_size, Parity phase);

// Exactly round(ratio * N) tokens masked, sampled without replacement by a
// partial Fisher-Yates shuffle over flat indices with std::mt19937_64(seed)
// and draws j = i + rng() % (N - i). The draw is pinned so an independent
// implementation reproduces the mask bit-exactly.
TokenMask random_mask(int grid_h, int grid_w, double ratio, std::uint64_t seed);

// Places square blocks of side max(1, min(grid_h, grid_w) / 4) at uniform
// top-left corners (row = rng() % (grid_h - b + 1), then col likewise) until
// the masked count first reaches >= round(ratio * N), then stops. Overshoot
// is at most b^2 - 1.
TokenMask block_mask(int grid_h, int grid_w, double ratio, std::uint64_t seed);
int block_mask_side(int grid_h, int grid_w);

// Centered square of side floor(sqrt(ratio * N)), top-left at
// ((grid_h - side) / 2, (grid_w - side) / 2). Deterministic.
TokenMask central_mask(int grid_h, int grid_w, double ratio);

// Elementwise AND; provenance marked derived. Grids must match.
TokenMask intersect(const TokenMask& a, const TokenMask& b);

struct MaskStats {
    double ratio = 0.0;
    // Histogram of maximal horizontal runs of masked tokens: length -> count.
    std::map<int, int> run_length_histogram;
    // Fraction of masked tokens with at least one masked 4-neighbor.
    double adjacency_fraction = 0.0;
};

MaskStats mask_stats(const TokenMask& mask);

}  // namespace symmim
