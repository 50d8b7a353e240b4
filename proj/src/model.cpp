// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#include "symmim/model.hpp"

#include <cmath>
#include <cstring>

#include "symmim/errors.hpp"

namespace symmim {

void EncoderConfig::validate() const {
    if (depth < 1) throw ConfigError("encoder.depth must be >= 1");
    if (dim < 1) throw ConfigError("encoder.dim must be >= 1");
    if (heads < 1) throw ConfigError("encoder.heads must be >= 1");
    if (dim % heads != 0)
        throw ConfigError("encoder.dim must be divisible by encoder.heads");
    if (mlp_ratio <= 0) throw ConfigError("encoder.mlp_ratio must be positive");
    if (token_patch_size < 1) throw ConfigError("encoder.token_patch_size must be >= 1");
    if (image_size % token_patch_size != 0)
        throw ConfigError("encoder.token_patch_size must divide encoder.image_size");
    if (drop_path < 0.0 || drop_path >= 1.0)
        throw ConfigError("encoder.drop_path must be in [0, 1)");
}

void HeadsConfig::validate() const {
    if (proj_layers < 1 || pred_layers < 1)
        throw ConfigError("head layer counts must be >= 1");
    if (proj_hidden < 1 || pred_hidden < 1 || proj_out < 1 || pred_out < 1)
        throw ConfigError("head dims must be >= 1");
    if (proj_out != pred_out)
        throw ConfigError("heads.proj_out must equal heads.pred_out (shared contrastive space)");
}

HeadsConfig paper_faithful_heads() {
    HeadsConfig h;
    h.proj_layers = 3;
    h.proj_hidden = 4096;
    h.proj_out = 256;
    h.pred_layers = 2;
    h.pred_hidden = 4096;
    h.pred_out = 256;
    return h;
}

ad::Parameter& ParamStore::add(const std::string& name, std::vector<int> shape) {
    if (params_.count(name)) throw ConfigError("duplicate parameter: " + name);
    auto p = std::make_unique<ad::Parameter>(name, ad::Array::zeros(std::move(shape)));
    ad::Parameter& ref = *p;
    params_[name] = std::move(p);
    order_.push_back(name);
    return ref;
}

ad::Parameter& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return *it->second;
}

const ad::Parameter& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return *it->second;
}

bool ParamStore::has(const std::string& name) const { return params_.count(name) != 0; }

std::int64_t ParamStore::total_elements() const {
    std::int64_t n = 0;
    for (const auto& name : order_) n += get(name).value.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (const auto& name : order_) get(name).zero_grad();
}

std::uint64_t ParamStore::value_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& name : order_) {
        const auto& param = get(name);
        mix(name.data(), name.size());
        mix(param.value.v.data(), param.value.v.size() * sizeof(double));
    }
    return h;
}

double ParamStore::grad_abs_sum() const {
    double s = 0.0;
    for (const auto& name : order_)
        for (double v : get(name).grad.v) s += std::abs(v);
    return s;
}

namespace {

// Truncated normal: resample outside +/- 2 sigma.
void fill_trunc_normal(ad::Parameter& p, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : p.value.v) {
        double x = dist(rng);
        while (std::abs(x) > 2.0 * stddev) x = dist(rng);
        v = x;
    }
}

void fill_const(ad::Parameter& p, double c) {
    std::fill(p.value.v.begin(), p.value.v.end(), c);
}

void add_linear(ParamStore& s, const std::string& prefix, int din, int dout,
                std::mt19937_64& rng) {
    // Xavier-scaled truncated normal; 0.02 would starve signal propagation
    // at short desk-scale schedules.
    const double stddev = std::sqrt(2.0 / (din + dout));
    fill_trunc_normal(s.add(prefix + ".weight", {din, dout}), rng, stddev);
    fill_const(s.add(prefix + ".bias", {dout}), 0.0);
}

void add_norm(ParamStore& s, const std::string& prefix, int dim) {
    fill_const(s.add(prefix + ".gamma", {dim}), 1.0);
    fill_const(s.add(prefix + ".beta", {dim}), 0.0);
}

void add_mlp_head(ParamStore& s, const std::string& prefix, int layers, int din,
                  int hidden, int dout, std::mt19937_64& rng) {
    for (int l = 0; l < layers; ++l) {
        const int in = l == 0 ? din : hidden;
        const int out = l == layers - 1 ? dout : hidden;
        add_linear(s, prefix + "." + std::to_string(l), in, out, rng);
    }
}

}  // namespace

void init_online_params(ParamStore& store, const EncoderConfig& enc,
                        const HeadsConfig& heads, std::uint64_t seed) {
    enc.validate();
    heads.validate();
    std::mt19937_64 rng(seed);
    add_linear(store, "backbone.patch_embed", enc.d_patch(), enc.dim, rng);
    fill_trunc_normal(store.add("backbone.mask_token", {enc.dim}), rng, 0.02);
    fill_trunc_normal(store.add("backbone.pos_embed", {enc.tokens(), enc.dim}), rng, 0.02);
    for (int i = 0; i < enc.depth; ++i) {
        const std::string b = "backbone.blocks." + std::to_string(i);
        add_norm(store, b + ".ln1", enc.dim);
        add_linear(store, b + ".attn.qkv", enc.dim, 3 * enc.dim, rng);
        add_linear(store, b + ".attn.proj", enc.dim, enc.dim, rng);
        add_norm(store, b + ".ln2", enc.dim);
        add_linear(store, b + ".mlp.fc1", enc.dim, enc.mlp_hidden(), rng);
        add_linear(store, b + ".mlp.fc2", enc.mlp_hidden(), enc.dim, rng);
    }
    add_mlp_head(store, "projector", heads.proj_layers, enc.dim, heads.proj_hidden,
                 heads.proj_out, rng);
    add_mlp_head(store, "predictor", heads.pred_layers, heads.proj_out,
                 heads.pred_hidden, heads.pred_out, rng);
    add_linear(store, "rec_head", enc.dim, enc.d_patch(), rng);
}

bool in_momentum_subtree(const std::string& name) {
    return name.rfind("backbone.", 0) == 0 || name.rfind("projector.", 0) == 0;
}

void make_momentum_params(const ParamStore& theta_q, ParamStore& theta_k) {
    for (const auto& name : theta_q.names()) {
        if (!in_momentum_subtree(name)) continue;
        const auto& src = theta_q.get(name);
        auto& dst = theta_k.add(name, src.value.shape);
        dst.value.v = src.value.v;
    }
}

void check_momentum_isomorphism(const ParamStore& theta_q, const ParamStore& theta_k) {
    std::vector<std::string> expected;
    for (const auto& name : theta_q.names())
        if (in_momentum_subtree(name)) expected.push_back(name);
    if (expected != theta_k.names())
        throw ConfigError("momentum tree is not isomorphic to the online backbone+projector subtree");
    for (const auto& name : expected)
        if (theta_q.get(name).value.shape != theta_k.get(name).value.shape)
            throw ConfigError("momentum parameter shape mismatch: " + name);
}

DualEncoderState DualEncoderState::init(const EncoderConfig& enc,
                                        const HeadsConfig& heads, std::uint64_t seed) {
    DualEncoderState s;
    s.encoder = enc;
    s.heads = heads;
    init_online_params(s.theta_q, enc, heads, seed);
    make_momentum_params(s.theta_q, s.theta_k);
    s.step = 0;
    return s;
}

void ema_update(DualEncoderState& state) {
    const double m = state.m;
    if (!(m >= 0.0 && m <= 1.0))
        throw ConfigError("momentum coefficient must be in [0, 1]");
    for (const auto& name : state.theta_k.names()) {
        auto& k = state.theta_k.get(name).value.v;
        const auto& q = state.theta_q.get(name).value.v;
        for (size_t i = 0; i < k.size(); ++i) k[i] = m * k[i] + (1.0 - m) * q[i];
    }
    ++state.step;
}

double momentum_schedule(std::int64_t step, std::int64_t total_steps, double m_base) {
    if (total_steps < 1) throw ConfigError("momentum_schedule: total_steps must be >= 1");
    if (step < 0 || step > total_steps)
        throw ConfigError("momentum_schedule: step out of range");
    const double phase = static_cast<double>(step) / static_cast<double>(total_steps);
    return 1.0 - (1.0 - m_base) * (std::cos(M_PI * phase) + 1.0) / 2.0;
}

DropPathPlan DropPathPlan::draw(const EncoderConfig& enc, int batch,
                                std::mt19937_64& rng) {
    DropPathPlan plan;
    plan.rate = enc.drop_path;
    if (enc.drop_path <= 0.0) return plan;
    plan.keep.resize(enc.depth);
    for (int l = 0; l < enc.depth; ++l) {
        plan.keep[l].resize(batch);
        for (int i = 0; i < batch; ++i) {
            const double u = static_cast<double>(rng()) /
                             static_cast<double>(std::mt19937_64::max());
            plan.keep[l][i] = u >= enc.drop_path ? 1 : 0;
        }
    }
    return plan;
}

namespace model {

using ad::Graph;
using ad::Node;

Node* embed_patches(Graph& g, ParamStore& params, const PatchBatch& patches) {
    Node* x = g.input({patches.n, patches.t, patches.d_patch}, patches.v);
    return ad::linear(g, x, g.leaf(params.get("backbone.patch_embed.weight")),
                      g.leaf(params.get("backbone.patch_embed.bias")));
}

Node* substitute_and_position(Graph& g, ParamStore& params, Node* embedded,
                              const std::vector<TokenMask>& masks) {
    Node* x = embedded;
    if (!masks.empty())
        x = ad::substitute_masked(g, x, masks, g.leaf(params.get("backbone.mask_token")));
    return ad::add_rows(g, x, g.leaf(params.get("backbone.pos_embed")));
}

namespace {

Node* attention(Graph& g, ParamStore& params, const EncoderConfig& enc,
                const std::string& prefix, Node* x) {
    Node* qkv = ad::linear(g, x, g.leaf(params.get(prefix + ".qkv.weight")),
                           g.leaf(params.get(prefix + ".qkv.bias")));
    Node* q = ad::to_heads(g, ad::slice_last(g, qkv, 0, enc.dim), enc.heads);
    Node* k = ad::to_heads(g, ad::slice_last(g, qkv, enc.dim, enc.dim), enc.heads);
    Node* v = ad::to_heads(g, ad::slice_last(g, qkv, 2 * enc.dim, enc.dim), enc.heads);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(enc.dim / enc.heads));
    Node* scores = ad::scale(g, ad::bmm(g, q, k, /*transpose_b=*/true), inv_sqrt_dh);
    Node* probs = ad::softmax_last(g, scores);
    Node* ctx = ad::from_heads(g, ad::bmm(g, probs, v), enc.heads);
    return ad::linear(g, ctx, g.leaf(params.get(prefix + ".proj.weight")),
                      g.leaf(params.get(prefix + ".proj.bias")));
}

}  // namespace

Node* encode(Graph& g, ParamStore& params, const EncoderConfig& enc, Node* tokens,
             const DropPathPlan* drop) {
    if (tokens->shape.size() != 3 || tokens->shape[2] != enc.dim)
        throw ConfigError("encode: expected (n, t, dim) token sequence");
    const bool dropping = drop && drop->rate > 0.0;
    const double keep_scale = dropping ? 1.0 / (1.0 - drop->rate) : 1.0;
    Node* x = tokens;
    for (int i = 0; i < enc.depth; ++i) {
        const std::string b = "backbone.blocks." + std::to_string(i);
        Node* h = ad::layer_norm(g, x, g.leaf(params.get(b + ".ln1.gamma")),
                                 g.leaf(params.get(b + ".ln1.beta")));
        Node* attn_out = attention(g, params, enc, b + ".attn", h);
        x = ad::residual_add(g, x, attn_out, dropping ? &drop->keep[i] : nullptr,
                             keep_scale);
        Node* h2 = ad::layer_norm(g, x, g.leaf(params.get(b + ".ln2.gamma")),
                                  g.leaf(params.get(b + ".ln2.beta")));
        Node* mlp_out =
            ad::linear(g, ad::gelu(g, ad::linear(g, h2, g.leaf(params.get(b + ".mlp.fc1.weight")),
                                                 g.leaf(params.get(b + ".mlp.fc1.bias")))),
                       g.leaf(params.get(b + ".mlp.fc2.weight")),
                       g.leaf(params.get(b + ".mlp.fc2.bias")));
        x = ad::residual_add(g, x, mlp_out, dropping ? &drop->keep[i] : nullptr,
                             keep_scale);
    }
    return x;
}

Node* reconstruct(Graph& g, ParamStore& params, Node* features) {
    return ad::linear(g, features, g.leaf(params.get("rec_head.weight")),
                      g.leaf(params.get("rec_head.bias")));
}

namespace {

Node* mlp_head(Graph& g, ParamStore& params, const std::string& prefix, int layers,
               Node* x) {
    Node* h = x;
    for (int l = 0; l < layers; ++l) {
        const std::string p = prefix + "." + std::to_string(l);
        h = ad::linear(g, h, g.leaf(params.get(p + ".weight")),
                       g.leaf(params.get(p + ".bias")));
        if (l + 1 < layers) h = ad::relu(g, h);
    }
    return h;
}

}  // namespace

Node* project(Graph& g, ParamStore& params, const HeadsConfig& heads, Node* features) {
    return mlp_head(g, params, "projector", heads.proj_layers, features);
}

Node* predict(Graph& g, ParamStore& params, const HeadsConfig& heads, Node* embeddings) {
    return mlp_head(g, params, "predictor", heads.pred_layers, embeddings);
}

}  // namespace model

}  // namespace symmim
