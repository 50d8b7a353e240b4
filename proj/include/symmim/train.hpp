// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "symmim/data.hpp"
#include "symmim/losses.hpp"
#include "symmim/model.hpp"

namespace symmim {

struct RunConfig {
    EncoderConfig encoder;
    HeadsConfig heads;
    int small_cell = 1;
    int large_cell = 2;
    double tau = 0.1;
    double lambda = 1.0;
    double m_base = 0.996;
    double lr = 1e-3;
    double weight_decay = 0.05;
    int warmup_steps = 10;
    int total_steps = 200;
    int batch_size = 8;
    std::uint64_t seed = 42;
    LossFlags loss_flags;

    void validate() const;

    // Flat "key = value" text, fixed key order; parse rejects unknown keys.
    std::string to_text() const;
    static RunConfig parse(const std::string& text);
    static RunConfig from_file(const std::filesystem::path& path);
    std::uint64_t text_hash() const;
};

// Cosine decay to zero after linear warmup.
double lr_at_step(const RunConfig& cfg, std::int64_t step);

// Decoupled weight decay; moments keyed by parameter name. Decay applies to
// rank >= 2 weights except the positional table.
class AdamW {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
    };

    AdamW() = default;
    explicit AdamW(Options opts) : opts_(opts) {}

    void step(ParamStore& params, double lr);
    std::int64_t steps_taken() const { return t_; }
    const Options& options() const { return opts_; }

    std::map<std::string, std::vector<double>>& moments_m() { return m_; }
    std::map<std::string, std::vector<double>>& moments_v() { return v_; }
    void set_steps_taken(std::int64_t t) { t_ = t; }

private:
    Options opts_;
    std::int64_t t_ = 0;
    std::map<std::string, std::vector<double>> m_;
    std::map<std::string, std::vector<double>> v_;
};

// How a training run draws its two branch masks. Checkerboard uses the
// config cell sizes and ignores ratio; the baselines use ratio and draw
// fresh seeds from the per-step stream (central is deterministic).
struct TrainPolicy {
    MaskStrategy strategy = MaskStrategy::checkerboard;
    double ratio = 0.5;
    KeyScope key_scope = KeyScope::same_image;
};

struct StepRecord {
    std::int64_t step = 0;  // 1-based count of completed steps
    LossBreakdown loss;
    double m = 0.0;
    double lr = 0.0;
    double wall_ms = 0.0;
};

// Momentum-side constants for one step, computed without a tape: projector
// keys and/or the reconstruction target (momentum features through the
// online head, both under stop-gradient).
void momentum_forward(DualEncoderState& state, const RunConfig& cfg,
                      const PatchBatch& patches, const std::vector<TokenMask>& m2,
                      bool want_keys, bool want_pixels, ad::Array* keys,
                      ad::Array* momentum_pixels);

// The online forward and combined loss on an existing graph; the momentum
// side enters as precomputed constants. This is the differentiable function
// the optimizer sees, shared by train_step and the gradient checks.
CombinedLoss online_forward_loss(ad::Graph& g, DualEncoderState& state,
                                 const RunConfig& cfg, const PatchBatch& patches,
                                 const std::vector<TokenMask>& m1,
                                 const std::vector<TokenMask>& m2,
                                 const ad::Array* momentum_pixels, const ad::Array* keys,
                                 KeyScope scope, const DropPathPlan* drop = nullptr);

// The per-step branch masks, drawn from the (cfg.seed, step) stream.
void draw_step_masks(const RunConfig& cfg, const TrainPolicy& policy, int batch,
                     std::int64_t step, std::vector<TokenMask>* m1,
                     std::vector<TokenMask>* m2);

// One optimization step: draw branch masks, run the online and momentum
// forwards, combine the losses, update theta_q, then EMA theta_k. The
// per-step randomness is derived from (cfg.seed, step), so resumed runs
// replay the same stream.
StepRecord train_step(DualEncoderState& state, AdamW& opt, const ImageBatch& batch,
                      const RunConfig& cfg, const TrainPolicy& policy = {});

constexpr const char* kMetricsHeader = "step,rec1,rec2,con,total,m,lr,wall_ms";

std::string metrics_csv_row(const StepRecord& rec);

struct TrainLoopResult {
    std::filesystem::path checkpoint;
    std::filesystem::path metrics_csv;
    std::int64_t steps_run = 0;
    double first_window_mean = 0.0;  // mean total over the first 10 steps
    double last_window_mean = 0.0;   // mean total over the last 10 steps
};

// Runs (total_steps - already completed) steps, appending one CSV row per
// step and writing the final checkpoint. resume must point at a checkpoint
// written with a config whose canonical text matches cfg exactly.
TrainLoopResult train_loop(const RunConfig& cfg, const DatasetSpec& data,
                           const std::filesystem::path& out_dir,
                           const TrainPolicy& policy = {},
                           const std::filesystem::path& resume = {},
                           int checkpoint_interval = 0);

// Versioned checkpoint container: magic, version, config echo, step counter,
// optimizer step counter, then four length-prefixed named float64 array
// sections (theta_q, theta_k, adam_m, adam_v).
void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg,
                     const DualEncoderState& state, const AdamW& opt);

struct LoadedCheckpoint {
    RunConfig config;
    std::string config_text;
    DualEncoderState state;
    AdamW opt;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace symmim
