// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#include "symmim/mask.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "symmim/errors.hpp"

namespace symmim {

std::string to_string(MaskStrategy s) {
    switch (s) {
        case MaskStrategy::checkerboard: return "checkerboard";
        case MaskStrategy::random: return "random";
        case MaskStrategy::block: return "block";
        case MaskStrategy::central: return "central";
        case MaskStrategy::derived: return "derived";
    }
    return "derived";
}

std::string to_string(Parity p) {
    return p == Parity::even ? "even" : "odd";
}

MaskStrategy mask_strategy_from_string(const std::string& s) {
    if (s == "checkerboard") return MaskStrategy::checkerboard;
    if (s == "random") return MaskStrategy::random;
    if (s == "block") return MaskStrategy::block;
    if (s == "central") return MaskStrategy::central;
    if (s == "derived") return MaskStrategy::derived;
    throw ConfigError("unknown mask strategy: " + s);
}

Parity parity_from_string(const std::string& s) {
    if (s == "even") return Parity::even;
    if (s == "odd") return Parity::odd;
    throw ConfigError("unknown parity: " + s + " (expected even|odd)");
}

TokenMask::TokenMask(int grid_h, int grid_w, std::vector<std::uint8_t> bits,
                     MaskProvenance prov)
    : grid_h_(grid_h), grid_w_(grid_w), bits_(std::move(bits)), prov_(prov) {
    if (grid_h_ <= 0 || grid_w_ <= 0)
        throw ConfigError("mask grid dimensions must be positive");
    if (static_cast<int>(bits_.size()) != grid_h_ * grid_w_)
        throw ConfigError("mask bit count does not match grid");
}

int TokenMask::masked_count() const {
    int n = 0;
    for (auto b : bits_) n += (b != 0);
    return n;
}

double TokenMask::ratio() const {
    return static_cast<double>(masked_count()) / size();
}

TokenMask TokenMask::complement() const {
    std::vector<std::uint8_t> inv(bits_.size());
    for (size_t i = 0; i < bits_.size(); ++i) inv[i] = bits_[i] ? 0 : 1;
    MaskProvenance prov;
    prov.strategy = MaskStrategy::derived;
    prov.ratio_target = 1.0 - prov_.ratio_target;
    return TokenMask(grid_h_, grid_w_, std::move(inv), prov);
}

std::vector<int> TokenMask::masked_indices() const {
    std::vector<int> idx;
    idx.reserve(bits_.size());
    for (int i = 0; i < size(); ++i)
        if (bits_[i]) idx.push_back(i);
    return idx;
}

std::string TokenMask::serialize() const {
    std::ostringstream os;
    os << grid_h_ << ' ' << grid_w_ << ' ' << to_string(prov_.strategy) << ' '
       << prov_.cell_size << ' ' << to_string(prov_.phase) << ' ';
    // Shortest round-trip decimal for the ratio keeps the format bit-exact.
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), prov_.ratio_target);
    os.write(buf, res.ptr - buf);
    os << ' ' << prov_.seed << '\n';
    for (int r = 0; r < grid_h_; ++r) {
        for (int c = 0; c < grid_w_; ++c) os << (at(r, c) ? '1' : '0');
        os << '\n';
    }
    return os.str();
}

TokenMask TokenMask::deserialize(const std::string& text) {
    std::istringstream is(text);
    int h = 0, w = 0, cell = 0;
    std::string strategy, phase;
    double ratio = 0.0;
    std::uint64_t seed = 0;
    if (!(is >> h >> w >> strategy >> cell >> phase >> ratio >> seed))
        throw ConfigError("malformed mask header");
    MaskProvenance prov;
    prov.strategy = mask_strategy_from_string(strategy);
    prov.cell_size = cell;
    prov.phase = parity_from_string(phase);
    prov.ratio_target = ratio;
    prov.seed = seed;
    std::vector<std::uint8_t> bits;
    bits.reserve(static_cast<size_t>(h) * w);
    std::string row;
    for (int r = 0; r < h; ++r) {
        if (!(is >> row) || static_cast<int>(row.size()) != w)
            throw ConfigError("malformed mask row " + std::to_string(r));
        for (char ch : row) {
            if (ch != '0' && ch != '1')
                throw ConfigError("mask rows must contain only 0/1");
            bits.push_back(ch == '1' ? 1 : 0);
        }
    }
    return TokenMask(h, w, std::move(bits), prov);
}

TokenMask checkerboard_mask(int grid_h, int grid_w, int cell_size, Parity phase) {
    if (cell_size < 1) throw ConfigError("cell_size must be >= 1");
    if (grid_h <= 0 || grid_w <= 0)
        throw ConfigError("mask grid dimensions must be positive");
    if (grid_h % cell_size != 0)
        throw ConfigError("cell_size " + std::to_string(cell_size) +
                          " does not divide grid_h " + std::to_string(grid_h));
    if (grid_w % cell_size != 0)
        throw ConfigError("cell_size " + std::to_string(cell_size) +
                          " does not divide grid_w " + std::to_string(grid_w));
    const int want = phase == Parity::even ? 0 : 1;
    std::vector<std::uint8_t> bits(static_cast<size_t>(grid_h) * grid_w);
    for (int i = 0; i < grid_h; ++i)
        for (int j = 0; j < grid_w; ++j)
            bits[i * grid_w + j] =
                ((i / cell_size + j / cell_size) % 2 == want) ? 1 : 0;
    MaskProvenance prov;
    prov.strategy = MaskStrategy::checkerboard;
    prov.cell_size = cell_size;
    prov.phase = phase;
    prov.ratio_target = 0.5;
    prov.seed = 0;
    return TokenMask(grid_h, grid_w, std::move(bits), prov);
}

namespace {

void check_ratio(double ratio) {
    if (!(ratio >= 0.0 && ratio <= 1.0))
        throw ConfigError("mask ratio must be in [0, 1]");
}

int round_count(double ratio, int n) {
    return static_cast<int>(std::lround(ratio * n));
}

}  // namespace

TokenMask random_mask(int grid_h, int grid_w, double ratio, std::uint64_t seed) {
    check_ratio(ratio);
    if (grid_h <= 0 || grid_w <= 0)
        throw ConfigError("mask grid dimensions must be positive");
    const int n = grid_h * grid_w;
    const int k = round_count(ratio, n);
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(n - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<std::uint8_t> bits(n, 0);
    for (int i = 0; i < k; ++i) bits[idx[i]] = 1;
    MaskProvenance prov;
    prov.strategy = MaskStrategy::random;
    prov.ratio_target = ratio;
    prov.seed = seed;
    return TokenMask(grid_h, grid_w, std::move(bits), prov);
}

int block_mask_side(int grid_h, int grid_w) {
    return std::max(1, std::min(grid_h, grid_w) / 4);
}

TokenMask block_mask(int grid_h, int grid_w, double ratio, std::uint64_t seed) {
    check_ratio(ratio);
    if (grid_h <= 0 || grid_w <= 0)
        throw ConfigError("mask grid dimensions must be positive");
    const int n = grid_h * grid_w;
    const int target = round_count(ratio, n);
    const int b = block_mask_side(grid_h, grid_w);
    std::vector<std::uint8_t> bits(n, 0);
    int count = 0;
    std::mt19937_64 rng(seed);
    while (count < target) {
        const int r0 = static_cast<int>(rng() % static_cast<std::uint64_t>(grid_h - b + 1));
        const int c0 = static_cast<int>(rng() % static_cast<std::uint64_t>(grid_w - b + 1));
        for (int r = r0; r < r0 + b; ++r)
            for (int c = c0; c < c0 + b; ++c) {
                auto& bit = bits[r * grid_w + c];
                if (!bit) {
                    bit = 1;
                    ++count;
                }
            }
    }
    MaskProvenance prov;
    prov.strategy = MaskStrategy::block;
    prov.ratio_target = ratio;
    prov.seed = seed;
    return TokenMask(grid_h, grid_w, std::move(bits), prov);
}

TokenMask central_mask(int grid_h, int grid_w, double ratio) {
    check_ratio(ratio);
    if (grid_h <= 0 || grid_w <= 0)
        throw ConfigError("mask grid dimensions must be positive");
    const int n = grid_h * grid_w;
    const int side = static_cast<int>(std::floor(std::sqrt(ratio * n)));
    const int r0 = (grid_h - side) / 2;
    const int c0 = (grid_w - side) / 2;
    std::vector<std::uint8_t> bits(n, 0);
    for (int r = r0; r < r0 + side && r < grid_h; ++r)
        for (int c = c0; c < c0 + side && c < grid_w; ++c)
            if (r >= 0 && c >= 0) bits[r * grid_w + c] = 1;
    MaskProvenance prov;
    prov.strategy = MaskStrategy::central;
    prov.ratio_target = ratio;
    prov.seed = 0;
    return TokenMask(grid_h, grid_w, std::move(bits), prov);
}

TokenMask intersect(const TokenMask& a, const TokenMask& b) {
    if (a.grid_h() != b.grid_h() || a.grid_w() != b.grid_w())
        throw ConfigError("intersect: mask grids differ (" +
                          std::to_string(a.grid_h()) + "x" + std::to_string(a.grid_w()) +
                          " vs " + std::to_string(b.grid_h()) + "x" +
                          std::to_string(b.grid_w()) + ")");
    std::vector<std::uint8_t> bits(a.bits().size());
    for (size_t i = 0; i < bits.size(); ++i)
        bits[i] = (a.bits()[i] && b.bits()[i]) ? 1 : 0;
    MaskProvenance prov;
    prov.strategy = MaskStrategy::derived;
    return TokenMask(a.grid_h(), a.grid_w(), std::move(bits), prov);
}

MaskStats mask_stats(const TokenMask& mask) {
    MaskStats stats;
    stats.ratio = mask.ratio();
    const int h = mask.grid_h();
    const int w = mask.grid_w();
    for (int r = 0; r < h; ++r) {
        int run = 0;
        for (int c = 0; c < w; ++c) {
            if (mask.at(r, c)) {
                ++run;
            } else if (run > 0) {
                ++stats.run_length_histogram[run];
                run = 0;
            }
        }
        if (run > 0) ++stats.run_length_histogram[run];
    }
    int masked = 0;
    int with_neighbor = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (!mask.at(r, c)) continue;
            ++masked;
            const bool touch = (r > 0 && mask.at(r - 1, c)) ||
                               (r + 1 < h && mask.at(r + 1, c)) ||
                               (c > 0 && mask.at(r, c - 1)) ||
                               (c + 1 < w && mask.at(r, c + 1));
            if (touch) ++with_neighbor;
        }
    stats.adjacency_fraction =
        masked == 0 ? 0.0 : static_cast<double>(with_neighbor) / masked;
    return stats;
}

}  // namespace symmim
