// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "symmim/patch.hpp"

namespace symmim {

enum class DataSource { synthetic, image_folder, cifar_binary };

enum class SplitSide { all, train, val };

struct DatasetSpec {
    DataSource source = DataSource::synthetic;
    std::string root;  // directory or file for non-synthetic sources
    int image_size = 32;
    std::optional<int> limit;
    std::uint64_t seed = 0;

    // synthetic only: 0 = unlabeled smooth fields, 2 = the separable
    // two-class set (class = sign of a fixed linear functional).
    int classes = 0;

    // Deterministic holdout carried by the spec itself so a split result is
    // just another spec.
    SplitSide side = SplitSide::all;
    double split_fraction = 1.0;
    std::uint64_t split_seed = 0;

    // Parse "synthetic:N", "synthetic-classes:N", "ppm:DIR", "cifar:PATH"
    // (with optional "@SEED" suffix on the synthetic forms).
    static DatasetSpec parse(const std::string& text, int image_size);
};

// Disjoint, exhaustive, seed-deterministic split of the spec's index set.
std::pair<DatasetSpec, DatasetSpec> train_val_split(const DatasetSpec& spec,
                                                    double fraction,
                                                    std::uint64_t seed);

// Materialized corpus. Loading applies limit, then the split side.
class Dataset {
public:
    static Dataset load(const DatasetSpec& spec);

    int size() const { return static_cast<int>(items_.size()); }
    int image_size() const { return image_size_; }
    int channels() const { return 3; }
    bool labeled() const { return num_classes_ > 0; }
    int num_classes() const { return num_classes_; }
    int label(int i) const { return labels_[i]; }
    int skipped_files() const { return skipped_; }

    ImageBatch gather(const std::vector<int>& indices) const;
    ImageBatch image(int i) const { return gather({i}); }

private:
    int image_size_ = 0;
    int num_classes_ = 0;
    int skipped_ = 0;
    std::vector<std::vector<double>> items_;  // each c*h*w, values in [0,1]
    std::vector<int> labels_;
};

// Batch index order for one epoch: seeded shuffle of 0..n-1 chopped into
// consecutive batches; the final batch carries the remainder.
std::vector<std::vector<int>> epoch_batches(int n, int batch_size,
                                            std::uint64_t shuffle_seed,
                                            std::int64_t epoch);

// Single synthetic image: seeded smooth random field (sum of a few random
// 2-D sinusoids), values in [0, 1]. Item identity depends only on
// (seed, index).
std::vector<double> synthetic_field(int image_size, std::uint64_t seed, int index);

// Bilinear resize with half-pixel corner alignment:
// src = (dst + 0.5) * (src_size / dst_size) - 0.5, clamped.
std::vector<double> resize_bilinear(const std::vector<double>& src, int channels,
                                    int src_h, int src_w, int dst_h, int dst_w);

// P6 PPM, exact header "P6\n<w> <h>\n255\n", 8-bit RGB.
void write_ppm(const std::filesystem::path& path, const std::vector<double>& rgb,
               int h, int w);
std::vector<double> read_ppm(const std::filesystem::path& path, int* h, int* w);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace symmim
