// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#include "symmim/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "symmim/errors.hpp"

namespace symmim {

namespace fs = std::filesystem;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

DatasetSpec DatasetSpec::parse(const std::string& text, int image_size) {
    DatasetSpec spec;
    spec.image_size = image_size;
    std::string body = text;
    try {
        const auto at = body.find('@');
        if (at != std::string::npos) {
            spec.seed = std::stoull(body.substr(at + 1));
            body = body.substr(0, at);
        }
    } catch (const std::exception&) {
        throw ConfigError("dataset spec '" + text + "': bad @SEED suffix");
    }
    const auto colon = body.find(':');
    const std::string kind = colon == std::string::npos ? body : body.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : body.substr(colon + 1);
    if (kind == "synthetic" || kind == "synthetic-classes") {
        spec.source = DataSource::synthetic;
        spec.classes = kind == "synthetic-classes" ? 2 : 0;
        try {
            spec.limit = arg.empty() ? 256 : std::stoi(arg);
        } catch (const std::exception&) {
            throw ConfigError("dataset spec '" + text + "': bad count");
        }
    } else if (kind == "ppm") {
        if (arg.empty()) throw ConfigError("ppm dataset needs a directory: ppm:DIR");
        spec.source = DataSource::image_folder;
        spec.root = arg;
    } else if (kind == "cifar") {
        if (arg.empty()) throw ConfigError("cifar dataset needs a path: cifar:PATH");
        spec.source = DataSource::cifar_binary;
        spec.root = arg;
    } else {
        throw ConfigError("unknown dataset spec '" + text +
                          "' (expected synthetic[:N], synthetic-classes[:N], ppm:DIR, cifar:PATH)");
    }
    return spec;
}

std::pair<DatasetSpec, DatasetSpec> train_val_split(const DatasetSpec& spec,
                                                    double fraction,
                                                    std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("split fraction must be in (0, 1)");
    if (spec.side != SplitSide::all)
        throw ConfigError("dataset spec is already a split side");
    DatasetSpec train = spec;
    DatasetSpec val = spec;
    train.side = SplitSide::train;
    val.side = SplitSide::val;
    train.split_fraction = val.split_fraction = fraction;
    train.split_seed = val.split_seed = seed;
    return {train, val};
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925;

// Fixed per-channel pattern defining the two-class linear functional.
constexpr double kClassPattern[3] = {1.0, -0.4, -0.8};
constexpr double kClassMargin = 0.15;

std::vector<double> two_class_image(int image_size, std::uint64_t seed, int index,
                                    int* label_out) {
    std::vector<double> base = synthetic_field(image_size, seed, index);
    // Compress the field into [0.25, 0.75] to leave headroom for the shift.
    for (auto& v : base) v = 0.25 + 0.5 * v;
    const int plane = image_size * image_size;
    double dot = 0.0;
    double pp = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        for (int i = 0; i < plane; ++i) dot += kClassPattern[ch] * base[ch * plane + i];
        pp += kClassPattern[ch] * kClassPattern[ch] * plane;
    }
    // Remove the base's component along the pattern, then shift by exactly
    // +/- margin along it; the class is the sign of the functional.
    const int sign = index % 2 == 0 ? 1 : -1;
    const double coef = -dot / pp + sign * kClassMargin;
    for (int ch = 0; ch < 3; ++ch)
        for (int i = 0; i < plane; ++i) {
            double v = base[ch * plane + i] + coef * kClassPattern[ch];
            base[ch * plane + i] = std::clamp(v, 0.0, 1.0);
        }
    *label_out = sign > 0 ? 1 : 0;
    return base;
}

std::vector<std::string> list_files(const std::string& root, const std::string& ext) {
    if (!fs::exists(root)) throw ConfigError("dataset root does not exist: " + root);
    std::vector<std::string> files;
    if (fs::is_regular_file(root)) {
        files.push_back(root);
        return files;
    }
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        if (ext.empty() || entry.path().extension() == ext)
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::vector<double> synthetic_field(int image_size, std::uint64_t seed, int index) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
    std::uniform_real_distribution<double> amp(0.05, 0.14);
    std::uniform_real_distribution<double> freq(0.5, 2.5);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    constexpr int kWaves = 4;
    double a[kWaves], fx[kWaves], fy[kWaves], ph[kWaves][3];
    for (int j = 0; j < kWaves; ++j) {
        a[j] = amp(rng);
        fx[j] = freq(rng);
        fy[j] = freq(rng);
        for (int ch = 0; ch < 3; ++ch) ph[j][ch] = phase(rng);
    }
    const int s = image_size;
    std::vector<double> img(static_cast<size_t>(3) * s * s);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                double v = 0.5;
                for (int j = 0; j < kWaves; ++j)
                    v += a[j] * std::sin(kTwoPi * (fx[j] * x / s + fy[j] * y / s) +
                                         ph[j][ch]);
                img[(static_cast<size_t>(ch) * s + y) * s + x] = std::clamp(v, 0.0, 1.0);
            }
    return img;
}

std::vector<double> resize_bilinear(const std::vector<double>& src, int channels,
                                    int src_h, int src_w, int dst_h, int dst_w) {
    if (src_h == dst_h && src_w == dst_w) return src;
    std::vector<double> dst(static_cast<size_t>(channels) * dst_h * dst_w);
    const double sy = static_cast<double>(src_h) / dst_h;
    const double sx = static_cast<double>(src_w) / dst_w;
    for (int ch = 0; ch < channels; ++ch) {
        const double* plane = src.data() + static_cast<size_t>(ch) * src_h * src_w;
        for (int y = 0; y < dst_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            fy = std::clamp(fy, 0.0, static_cast<double>(src_h - 1));
            const int y0 = static_cast<int>(std::floor(fy));
            const int y1 = std::min(y0 + 1, src_h - 1);
            const double wy = fy - y0;
            for (int x = 0; x < dst_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                fx = std::clamp(fx, 0.0, static_cast<double>(src_w - 1));
                const int x0 = static_cast<int>(std::floor(fx));
                const int x1 = std::min(x0 + 1, src_w - 1);
                const double wx = fx - x0;
                const double top = plane[y0 * src_w + x0] * (1 - wx) +
                                   plane[y0 * src_w + x1] * wx;
                const double bot = plane[y1 * src_w + x0] * (1 - wx) +
                                   plane[y1 * src_w + x1] * wx;
                dst[(static_cast<size_t>(ch) * dst_h + y) * dst_w + x] =
                    top * (1 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

void write_ppm(const fs::path& path, const std::vector<double>& rgb, int h, int w) {
    if (rgb.size() != static_cast<size_t>(3) * h * w)
        throw ConfigError("write_ppm: buffer size does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "P6\n" << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    const size_t plane = static_cast<size_t>(h) * w;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = std::clamp(rgb[ch * plane + y * w + x], 0.0, 1.0);
                row[x * 3 + ch] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw std::runtime_error("short write: " + path.string());
}

std::vector<double> read_ppm(const fs::path& path, int* h_out, int* w_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || w <= 0 || h <= 0)
        throw std::runtime_error("not a P6 PPM: " + path.string());
    if (maxval != 255)
        throw std::runtime_error("unsupported PPM maxval (expected 255): " + path.string());
    in.get();  // single whitespace after header
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw std::runtime_error("truncated PPM: " + path.string());
    std::vector<double> img(raw.size());
    const size_t plane = static_cast<size_t>(h) * w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                img[ch * plane + y * w + x] =
                    raw[(static_cast<size_t>(y) * w + x) * 3 + ch] / 255.0;
    if (h_out) *h_out = h;
    if (w_out) *w_out = w;
    return img;
}

Dataset Dataset::load(const DatasetSpec& spec) {
    Dataset ds;
    ds.image_size_ = spec.image_size;
    std::vector<std::vector<double>> items;
    std::vector<int> labels;
    int num_classes = 0;

    switch (spec.source) {
        case DataSource::synthetic: {
            const int total = spec.limit.value_or(256);
            if (total <= 0) throw ConfigError("synthetic dataset needs limit > 0");
            num_classes = spec.classes;
            for (int i = 0; i < total; ++i) {
                if (spec.classes == 2) {
                    int label = 0;
                    items.push_back(two_class_image(spec.image_size, spec.seed, i, &label));
                    labels.push_back(label);
                } else {
                    items.push_back(synthetic_field(spec.image_size, spec.seed, i));
                    labels.push_back(0);
                }
            }
            break;
        }
        case DataSource::image_folder: {
            for (const auto& file : list_files(spec.root, ".ppm")) {
                try {
                    int h = 0, w = 0;
                    auto img = read_ppm(file, &h, &w);
                    items.push_back(resize_bilinear(img, 3, h, w, spec.image_size,
                                                    spec.image_size));
                    labels.push_back(0);
                } catch (const std::exception& e) {
                    std::cerr << "warning: skipping " << file << ": " << e.what() << "\n";
                    ++ds.skipped_;
                }
            }
            break;
        }
        case DataSource::cifar_binary: {
            constexpr int kRecord = 3073;  // label byte + 3 * 1024 pixel bytes
            num_classes = 10;
            for (const auto& file : list_files(spec.root, ".bin")) {
                std::ifstream in(file, std::ios::binary);
                if (!in) {
                    std::cerr << "warning: skipping unreadable " << file << "\n";
                    ++ds.skipped_;
                    continue;
                }
                std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
                if (buf.empty() || buf.size() % kRecord != 0) {
                    std::cerr << "warning: skipping " << file
                              << ": size is not a multiple of " << kRecord << "\n";
                    ++ds.skipped_;
                    continue;
                }
                const size_t records = buf.size() / kRecord;
                for (size_t r = 0; r < records; ++r) {
                    const auto* rec = reinterpret_cast<const unsigned char*>(
                        buf.data() + r * kRecord);
                    labels.push_back(rec[0]);
                    std::vector<double> img(3 * 1024);
                    for (int i = 0; i < 3 * 1024; ++i) img[i] = rec[1 + i] / 255.0;
                    items.push_back(resize_bilinear(img, 3, 32, 32, spec.image_size,
                                                    spec.image_size));
                }
            }
            break;
        }
    }

    if (spec.limit && spec.source != DataSource::synthetic) {
        const int lim = *spec.limit;
        if (lim > static_cast<int>(items.size()))
            throw ConfigError("limit " + std::to_string(lim) + " exceeds corpus size " +
                              std::to_string(items.size()));
        items.resize(lim);
        labels.resize(lim);
    }
    if (items.empty()) throw ConfigError("empty dataset");

    std::vector<int> selected(items.size());
    for (size_t i = 0; i < selected.size(); ++i) selected[i] = static_cast<int>(i);
    if (spec.side != SplitSide::all) {
        std::mt19937_64 rng(spec.split_seed);
        std::shuffle(selected.begin(), selected.end(), rng);
        const int k = static_cast<int>(
            std::lround(spec.split_fraction * static_cast<double>(selected.size())));
        std::vector<int> side(spec.side == SplitSide::train
                                  ? std::vector<int>(selected.begin(), selected.begin() + k)
                                  : std::vector<int>(selected.begin() + k, selected.end()));
        std::sort(side.begin(), side.end());
        selected = std::move(side);
        if (selected.empty()) throw ConfigError("split side is empty");
    }

    for (int idx : selected) {
        ds.items_.push_back(std::move(items[idx]));
        ds.labels_.push_back(labels[idx]);
    }
    ds.num_classes_ = num_classes;
    return ds;
}

ImageBatch Dataset::gather(const std::vector<int>& indices) const {
    ImageBatch batch = ImageBatch::zeros(static_cast<int>(indices.size()), 3,
                                         image_size_, image_size_);
    const size_t per = static_cast<size_t>(3) * image_size_ * image_size_;
    for (size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || idx >= size()) throw ConfigError("dataset index out of range");
        std::copy(items_[idx].begin(), items_[idx].end(), batch.v.begin() + i * per);
    }
    return batch;
}

std::vector<std::vector<int>> epoch_batches(int n, int batch_size,
                                            std::uint64_t shuffle_seed,
                                            std::int64_t epoch) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(mix_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(start + batch_size, n);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

}  // namespace symmim
