// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "symmim/autodiff.hpp"
#include "symmim/mask.hpp"
#include "symmim/patch.hpp"

namespace symmim {

struct EncoderConfig {
    int depth = 4;
    int dim = 64;
    int heads = 4;
    double mlp_ratio = 4.0;
    int token_patch_size = 4;
    int image_size = 32;
    double drop_path = 0.0;

    int grid() const { return image_size / token_patch_size; }
    int tokens() const { return grid() * grid(); }
    int d_patch() const { return 3 * token_patch_size * token_patch_size; }
    int mlp_hidden() const { return static_cast<int>(dim * mlp_ratio); }
    void validate() const;
};

struct HeadsConfig {
    int proj_layers = 3;
    int proj_hidden = 256;
    int proj_out = 64;
    int pred_layers = 2;
    int pred_hidden = 256;
    int pred_out = 64;

    void validate() const;
};

// Paper-scale profile: 3-layer projector with 4096 hidden and 256 out,
// 2-layer predictor to the same space. Too heavy for the CPU test budget;
// kept as a named preset.
HeadsConfig paper_faithful_heads();

// Ordered, named parameter tree. Registration order is the canonical
// iteration order everywhere (init, EMA, optimizer, checkpoints, hashing).
class ParamStore {
public:
    ad::Parameter& add(const std::string& name, std::vector<int> shape);
    ad::Parameter& get(const std::string& name);
    const ad::Parameter& get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    size_t count() const { return order_.size(); }
    std::int64_t total_elements() const;
    void zero_grad();

    // FNV-1a over the raw float64 bytes of every parameter, in order.
    std::uint64_t value_hash() const;
    double grad_abs_sum() const;

private:
    std::map<std::string, std::unique_ptr<ad::Parameter>> params_;
    std::vector<std::string> order_;
};

// Online parameter tree theta_q: backbone (patch embed, positional table,
// mask token, transformer blocks) plus projector, predictor and the linear
// reconstruction head.
void init_online_params(ParamStore& store, const EncoderConfig& enc,
                        const HeadsConfig& heads, std::uint64_t seed);

// Momentum tree theta_k: structural copy of the backbone + projector subtree
// of theta_q (same names, same shapes, values copied).
void make_momentum_params(const ParamStore& theta_q, ParamStore& theta_k);

// true for names in the EMA-tracked subtree (backbone.* and projector.*).
bool in_momentum_subtree(const std::string& name);

// Throws ConfigError unless theta_k is structurally isomorphic to the
// backbone+projector subtree of theta_q.
void check_momentum_isomorphism(const ParamStore& theta_q, const ParamStore& theta_k);

struct DualEncoderState {
    EncoderConfig encoder;
    HeadsConfig heads;
    ParamStore theta_q;
    ParamStore theta_k;
    double m = 0.996;
    std::int64_t step = 0;

    static DualEncoderState init(const EncoderConfig& enc, const HeadsConfig& heads,
                                 std::uint64_t seed);
};

// theta_k <- m * theta_k + (1 - m) * theta_q over the tracked subtree;
// online parameters untouched, step incremented.
void ema_update(DualEncoderState& state);

// Cosine ramp from m_base at step 0 to 1.0 at total_steps.
double momentum_schedule(std::int64_t step, std::int64_t total_steps, double m_base);

// Stochastic-depth plan for one forward pass: keep[layer][sample].
struct DropPathPlan {
    double rate = 0.0;
    std::vector<std::vector<std::uint8_t>> keep;

    static DropPathPlan draw(const EncoderConfig& enc, int batch, std::mt19937_64& rng);
};

// Forward pieces. All take the parameter tree they should read from, so the
// same code runs the online and the momentum branch.
namespace model {

// PatchBatch -> linear patch embedding (n, t, dim).
ad::Node* embed_patches(ad::Graph& g, ParamStore& params, const PatchBatch& patches);

// Mask-token substitution then positional table, in that order.
ad::Node* substitute_and_position(ad::Graph& g, ParamStore& params, ad::Node* embedded,
                                  const std::vector<TokenMask>& masks);

// Pre-norm ViT over (n, t, dim); per-token features, no class token.
ad::Node* encode(ad::Graph& g, ParamStore& params, const EncoderConfig& enc,
                 ad::Node* tokens, const DropPathPlan* drop = nullptr);

// Linear head from features to flattened pixel patches.
ad::Node* reconstruct(ad::Graph& g, ParamStore& params, ad::Node* features);

// Per-token MLP heads; hidden layers ReLU, output layer linear.
ad::Node* project(ad::Graph& g, ParamStore& params, const HeadsConfig& heads,
                  ad::Node* features);
ad::Node* predict(ad::Graph& g, ParamStore& params, const HeadsConfig& heads,
                  ad::Node* embeddings);

}  // namespace model

}  // namespace symmim
