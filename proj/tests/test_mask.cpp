// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "symmim/errors.hpp"
#include "symmim/mask.hpp"
#include "testutil.hpp"

using namespace symmim;

namespace {

// Brute-force enumeration of the checkerboard predicate, independent of the
// generator.
int enumerate_checkerboard_count(int h, int w, int cell, Parity phase) {
    const int want = phase == Parity::even ? 0 : 1;
    int count = 0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if ((i / cell + j / cell) % 2 == want) ++count;
    return count;
}

}  // namespace

TEST_CASE("checkerboard 4x4 cell1 even masks exactly half") {
    const TokenMask m = checkerboard_mask(4, 4, 1, Parity::even);
    CHECK(m.masked_count() == 8);
    CHECK(m.ratio() == 0.5);
    CHECK(m.at(0, 0));
    CHECK_FALSE(m.at(0, 1));
}

TEST_CASE("checkerboard odd phase is the bitwise complement of even") {
    const TokenMask even = checkerboard_mask(4, 4, 1, Parity::even);
    const TokenMask odd = checkerboard_mask(4, 4, 1, Parity::odd);
    for (int i = 0; i < even.size(); ++i)
        CHECK(even.bits()[i] == (odd.bits()[i] ? 0 : 1));
}

TEST_CASE("checkerboard 14x14 cell2 per-band counts and enumerated total") {
    const TokenMask m = checkerboard_mask(14, 14, 2, Parity::even);
    // Each 2-row band alternates 8 and 6 masked tokens per row.
    for (int r = 0; r < 14; ++r) {
        int row_count = 0;
        for (int c = 0; c < 14; ++c) row_count += m.at(r, c);
        CHECK(row_count == ((r / 2) % 2 == 0 ? 8 : 6));
    }
    const int oracle = enumerate_checkerboard_count(14, 14, 2, Parity::even);
    CHECK(oracle == 100);  // frozen from the enumeration oracle
    CHECK(m.masked_count() == oracle);
}

TEST_CASE("checkerboard rejects non-divisible cell sizes naming the dimension") {
    CHECK_THROWS_WITH_AS(checkerboard_mask(14, 15, 3, Parity::even),
                         doctest::Contains("grid_h 14"), ConfigError);
    CHECK_THROWS_WITH_AS(checkerboard_mask(15, 14, 3, Parity::even),
                         doctest::Contains("grid_w 14"), ConfigError);
    CHECK_THROWS_AS(checkerboard_mask(4, 4, 0, Parity::even), ConfigError);
}

TEST_CASE("random mask ratio extremes") {
    CHECK(random_mask(4, 4, 0.0, 123).masked_count() == 0);
    CHECK(random_mask(4, 4, 1.0, 123).masked_count() == 16);
    CHECK_THROWS_AS(random_mask(4, 4, 1.5, 0), ConfigError);
}

TEST_CASE("random mask positions match the reference sampler") {
    const std::uint64_t seed = 20240917;
    const TokenMask m = random_mask(4, 4, 0.75, seed);
    CHECK(m.masked_count() == 12);
    const std::vector<int> expected = testutil::reference_sample(16, 12, seed);
    const std::set<int> expected_set(expected.begin(), expected.end());
    for (int i = 0; i < 16; ++i)
        CHECK(static_cast<bool>(m.bits()[i]) == (expected_set.count(i) != 0));
    // Same seed, same mask.
    CHECK(random_mask(4, 4, 0.75, seed).bits() == m.bits());
}

TEST_CASE("central mask geometry") {
    const TokenMask m = central_mask(4, 4, 0.25);
    CHECK(m.masked_count() == 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(m.at(r, c) == (r >= 1 && r <= 2 && c >= 1 && c <= 2));
    CHECK(central_mask(7, 9, 0.0).masked_count() == 0);
}

TEST_CASE("block mask stops at first overshoot and replays under its seed") {
    const std::uint64_t seed = 77;
    const TokenMask m = block_mask(8, 8, 0.5, seed);
    const int side = block_mask_side(8, 8);
    CHECK(side == 2);
    CHECK(m.masked_count() >= 32);
    CHECK(m.masked_count() <= 32 + side * side - 1);
    const auto oracle = testutil::reference_block_mask(8, 8, 0.5, seed, side);
    CHECK(m.bits() == oracle);
}

TEST_CASE("intersect trivial algebra") {
    const TokenMask m = random_mask(6, 6, 0.4, 5);
    const TokenMask empty = intersect(m, m.complement());
    CHECK(empty.masked_count() == 0);
    CHECK(intersect(m, m).bits() == m.bits());
    CHECK(intersect(m, m).provenance().strategy == MaskStrategy::derived);
    CHECK_THROWS_AS(intersect(m, random_mask(6, 5, 0.4, 5)), ConfigError);
}

TEST_CASE("intersect of cell-1 and cell-2 checkerboards on 8x8 has 16 tokens") {
    const TokenMask small = checkerboard_mask(8, 8, 1, Parity::even);
    const TokenMask large = checkerboard_mask(8, 8, 2, Parity::even);
    int oracle = 0;  // brute force over all 64 positions
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            if ((i + j) % 2 == 0 && (i / 2 + j / 2) % 2 == 0) ++oracle;
    CHECK(oracle == 16);
    CHECK(intersect(small, large).masked_count() == oracle);
}

TEST_CASE("mask_stats ratio and adjacency") {
    const TokenMask all = random_mask(4, 4, 1.0, 0);
    const MaskStats s_all = mask_stats(all);
    CHECK(s_all.ratio == 1.0);
    CHECK(s_all.adjacency_fraction == 1.0);

    // Parity lattice: no masked token has a like-parity 4-neighbor.
    const MaskStats s_cb1 = mask_stats(checkerboard_mask(6, 6, 1, Parity::even));
    CHECK(s_cb1.adjacency_fraction == 0.0);

    const MaskStats s_cb2 = mask_stats(checkerboard_mask(8, 8, 2, Parity::even));
    CHECK(s_cb2.adjacency_fraction == 1.0);

    // Horizontal run histogram of the cell-2 pattern: every row crosses two
    // masked cells of width 2.
    auto hist = s_cb2.run_length_histogram;
    CHECK(hist[2] == 16);
    CHECK(hist.size() == 1);
}

TEST_CASE("serialization round-trips and matches the documented text") {
    const TokenMask m = checkerboard_mask(4, 4, 1, Parity::even);
    CHECK(m.serialize() ==
          "4 4 checkerboard 1 even 0.5 0\n1010\n0101\n1010\n0101\n");
    const TokenMask back = TokenMask::deserialize(m.serialize());
    CHECK(back.bits() == m.bits());
    CHECK(back.provenance().strategy == MaskStrategy::checkerboard);
    CHECK(back.provenance().cell_size == 1);

    const TokenMask r = random_mask(5, 7, 0.3, 99);
    const TokenMask r2 = TokenMask::deserialize(r.serialize());
    CHECK(r2.bits() == r.bits());
    CHECK(r2.provenance().seed == 99);
    CHECK(r2.provenance().ratio_target == 0.3);
    CHECK_THROWS_AS(TokenMask::deserialize("nonsense"), ConfigError);
}

TEST_CASE("property: parity complement, exact half, cell-shift flip") {
    std::mt19937_64 rng(4242);
    for (int iter = 0; iter < 50; ++iter) {
        const int cell = 1 + static_cast<int>(rng() % 3);
        const int ch = 1 + static_cast<int>(rng() % 6);
        const int cw = 1 + static_cast<int>(rng() % 6);
        const int h = cell * ch;
        const int w = cell * cw;
        const TokenMask even = checkerboard_mask(h, w, cell, Parity::even);
        const TokenMask odd = checkerboard_mask(h, w, cell, Parity::odd);
        for (int i = 0; i < even.size(); ++i)
            REQUIRE(even.bits()[i] == (odd.bits()[i] ? 0 : 1));
        if ((ch * cw) % 2 == 0) REQUIRE(even.ratio() == 0.5);
        REQUIRE(std::abs(even.ratio() - 0.5) <=
                static_cast<double>(cell) * cell / (h * w) + 1e-12);

        // Toroidal shift by one cell along rows flips parity iff the
        // cell-lattice height is even.
        if (ch % 2 == 0) {
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    REQUIRE(even.at((i + cell) % h, j) == !even.at(i, j));
        }
        if (cw % 2 == 0) {
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    REQUIRE(even.at(i, (j + cell) % w) == !even.at(i, j));
        }
    }
}

TEST_CASE("property: intersect is commutative, associative, idempotent") {
    std::mt19937_64 rng(99);
    for (int iter = 0; iter < 30; ++iter) {
        const int h = 2 + static_cast<int>(rng() % 7);
        const int w = 2 + static_cast<int>(rng() % 7);
        const TokenMask a = random_mask(h, w, 0.3, rng());
        const TokenMask b = random_mask(h, w, 0.6, rng());
        const TokenMask c = block_mask(h, w, 0.4, rng());
        REQUIRE(intersect(a, b).bits() == intersect(b, a).bits());
        REQUIRE(intersect(intersect(a, b), c).bits() == intersect(a, intersect(b, c)).bits());
        REQUIRE(intersect(a, a).bits() == a.bits());
        REQUIRE(intersect(a, b).ratio() <= std::min(a.ratio(), b.ratio()) + 1e-12);
    }
}
