// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "symmim/train.hpp"

namespace symmim {

struct ProbeConfig {
    int iters = 300;
    double lr = 0.05;
    double val_fraction = 0.25;
    std::uint64_t seed = 7;
    int expected_classes = 0;  // 0 = accept whatever the dataset declares
    bool shuffle_labels = false;  // chance-level control
};

struct ProbeResult {
    std::string config_id;
    double accuracy = 0.0;
    int n_eval = 0;
    std::uint64_t seed = 0;
};

// Plain multinomial logistic regression; features (n, d) row-major. Returns
// held-out accuracy given a disjoint eval set. Deterministic in (features,
// labels, cfg).
struct LinearClassifier {
    int dim = 0;
    int classes = 0;
    std::vector<double> weight;  // (dim, classes)
    std::vector<double> bias;    // (classes)

    int predict_one(const double* feature) const;
};

LinearClassifier train_linear_classifier(const std::vector<double>& features, int n,
                                         int dim, const std::vector<int>& labels,
                                         int classes, int iters, double lr);

double classifier_accuracy(const LinearClassifier& clf, const std::vector<double>& features,
                           int n, const std::vector<int>& labels);

// Mean-pooled per-token features of the frozen online backbone, full visible
// sequence (no mask substitution). Rows are dataset order.
std::vector<double> backbone_features(const DualEncoderState& state,
                                      const Dataset& dataset, int batch_size = 32);

// Freeze theta_q, fit an affine probe on mean-pooled features, report
// held-out accuracy over a seed-deterministic split.
ProbeResult linear_probe(const DualEncoderState& state, const Dataset& labeled,
                         const ProbeConfig& cfg);

struct AblationRow {
    LossFlags flags;
    ProbeResult probe;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    std::string formatted_table() const;
    std::string to_csv() const;
};

struct AblationOptions {
    int probe_iters = 300;
    double probe_lr = 0.05;
    std::uint64_t probe_seed = 7;
};

// Four pretraining runs differing only in loss_flags, in the fixed order
// {rec1}, {rec1,rec2}, {rec1,con}, {rec1,rec2,con}, each followed by a
// linear probe. Configs are audited to differ in nothing but the flags.
AblationReport run_ablation(const RunConfig& base_cfg, const DatasetSpec& data,
                            const std::filesystem::path& out_dir,
                            const AblationOptions& opts = {});

// The canonical flag rows, in report order.
std::vector<LossFlags> ablation_flag_rows();

// true iff the two configs differ only in loss_flags.* lines.
bool configs_differ_only_in_loss_flags(const RunConfig& a, const RunConfig& b);

struct SweepRow {
    MaskStrategy strategy = MaskStrategy::random;
    double ratio = 0.0;
    double accuracy = 0.0;
    int steps = 0;
    std::uint64_t seed = 0;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::string to_csv() const;
    static std::vector<SweepRow> parse_csv(const std::string& text);
};

// One short pretrain+probe per (strategy, ratio) pair; checkerboard ignores
// the ratio list and contributes exactly one run at its fixed 0.5.
SweepReport masking_ratio_probe(const RunConfig& base_cfg, const DatasetSpec& data,
                                const std::vector<double>& ratios,
                                const std::vector<MaskStrategy>& strategies,
                                const std::filesystem::path& out_dir,
                                const AblationOptions& opts = {});

}  // namespace symmim
