// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#include "symmim/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "symmim/errors.hpp"
#include "symmim/patch.hpp"

namespace symmim {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

void RunConfig::validate() const {
    encoder.validate();
    heads.validate();
    if (small_cell < 1) throw ConfigError("small_cell must be >= 1");
    if (large_cell < 1) throw ConfigError("large_cell must be >= 1");
    if (small_cell >= large_cell) throw ConfigError("small_cell must be < large_cell");
    const int grid = encoder.grid();
    if (grid % small_cell != 0)
        throw ConfigError("small_cell " + std::to_string(small_cell) +
                          " does not divide the token grid " + std::to_string(grid));
    if (grid % large_cell != 0)
        throw ConfigError("large_cell " + std::to_string(large_cell) +
                          " does not divide the token grid " + std::to_string(grid));
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (!(m_base >= 0.0 && m_base < 1.0)) throw ConfigError("m_base must be in [0, 1)");
    if (lr < 0.0) throw ConfigError("lr must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!loss_flags.rec1 && !loss_flags.rec2 && !loss_flags.con)
        throw ConfigError("loss_flags must enable at least one term");
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    os << "encoder.depth = " << encoder.depth << '\n';
    os << "encoder.dim = " << encoder.dim << '\n';
    os << "encoder.heads = " << encoder.heads << '\n';
    os << "encoder.mlp_ratio = " << fmt_double(encoder.mlp_ratio) << '\n';
    os << "encoder.token_patch_size = " << encoder.token_patch_size << '\n';
    os << "encoder.image_size = " << encoder.image_size << '\n';
    os << "encoder.drop_path = " << fmt_double(encoder.drop_path) << '\n';
    os << "heads.proj_layers = " << heads.proj_layers << '\n';
    os << "heads.proj_hidden = " << heads.proj_hidden << '\n';
    os << "heads.proj_out = " << heads.proj_out << '\n';
    os << "heads.pred_layers = " << heads.pred_layers << '\n';
    os << "heads.pred_hidden = " << heads.pred_hidden << '\n';
    os << "heads.pred_out = " << heads.pred_out << '\n';
    os << "small_cell = " << small_cell << '\n';
    os << "large_cell = " << large_cell << '\n';
    os << "tau = " << fmt_double(tau) << '\n';
    os << "lambda = " << fmt_double(lambda) << '\n';
    os << "m_base = " << fmt_double(m_base) << '\n';
    os << "lr = " << fmt_double(lr) << '\n';
    os << "weight_decay = " << fmt_double(weight_decay) << '\n';
    os << "warmup_steps = " << warmup_steps << '\n';
    os << "total_steps = " << total_steps << '\n';
    os << "batch_size = " << batch_size << '\n';
    os << "seed = " << seed << '\n';
    os << "loss_flags.rec1 = " << (loss_flags.rec1 ? "true" : "false") << '\n';
    os << "loss_flags.rec2 = " << (loss_flags.rec2 ? "true" : "false") << '\n';
    os << "loss_flags.con = " << (loss_flags.con ? "true" : "false") << '\n';
    return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, std::function<void(const std::string&)>> setters;
    auto set_int = [](int& dst) {
        return [&dst](const std::string& v) { dst = std::stoi(v); };
    };
    auto set_double = [](double& dst) {
        return [&dst](const std::string& v) { dst = std::stod(v); };
    };
    setters["encoder.depth"] = set_int(cfg.encoder.depth);
    setters["encoder.dim"] = set_int(cfg.encoder.dim);
    setters["encoder.heads"] = set_int(cfg.encoder.heads);
    setters["encoder.mlp_ratio"] = set_double(cfg.encoder.mlp_ratio);
    setters["encoder.token_patch_size"] = set_int(cfg.encoder.token_patch_size);
    setters["encoder.image_size"] = set_int(cfg.encoder.image_size);
    setters["encoder.drop_path"] = set_double(cfg.encoder.drop_path);
    setters["heads.proj_layers"] = set_int(cfg.heads.proj_layers);
    setters["heads.proj_hidden"] = set_int(cfg.heads.proj_hidden);
    setters["heads.proj_out"] = set_int(cfg.heads.proj_out);
    setters["heads.pred_layers"] = set_int(cfg.heads.pred_layers);
    setters["heads.pred_hidden"] = set_int(cfg.heads.pred_hidden);
    setters["heads.pred_out"] = set_int(cfg.heads.pred_out);
    setters["small_cell"] = set_int(cfg.small_cell);
    setters["large_cell"] = set_int(cfg.large_cell);
    setters["tau"] = set_double(cfg.tau);
    setters["lambda"] = set_double(cfg.lambda);
    setters["m_base"] = set_double(cfg.m_base);
    setters["lr"] = set_double(cfg.lr);
    setters["weight_decay"] = set_double(cfg.weight_decay);
    setters["warmup_steps"] = set_int(cfg.warmup_steps);
    setters["total_steps"] = set_int(cfg.total_steps);
    setters["batch_size"] = set_int(cfg.batch_size);
    setters["seed"] = [&cfg](const std::string& v) { cfg.seed = std::stoull(v); };
    setters["loss_flags.rec1"] = [&cfg](const std::string& v) {
        cfg.loss_flags.rec1 = parse_bool("loss_flags.rec1", v);
    };
    setters["loss_flags.rec2"] = [&cfg](const std::string& v) {
        cfg.loss_flags.rec2 = parse_bool("loss_flags.rec2", v);
    };
    setters["loss_flags.con"] = [&cfg](const std::string& v) {
        cfg.loss_flags.con = parse_bool("loss_flags.con", v);
    };

    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected 'key = value'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        auto it = setters.find(key);
        if (it == setters.end())
            throw ConfigError("unknown config key '" + key + "' (line " +
                              std::to_string(line_no) + ")");
        try {
            it->second(value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': bad value '" + value + "'");
        }
    }
    return cfg;
}

RunConfig RunConfig::from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::uint64_t RunConfig::text_hash() const { return fnv1a(to_text()); }

double lr_at_step(const RunConfig& cfg, std::int64_t step) {
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
        return cfg.lr * static_cast<double>(step + 1) / cfg.warmup_steps;
    const std::int64_t decay_span = cfg.total_steps - cfg.warmup_steps;
    if (decay_span <= 0) return cfg.lr;
    const double phase =
        static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(decay_span);
    return cfg.lr * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, phase)));
}

namespace {

bool decays(const std::string& name, const std::vector<int>& shape) {
    return shape.size() >= 2 && name != "backbone.pos_embed";
}

}  // namespace

void AdamW::step(ParamStore& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (const auto& name : params.names()) {
        auto& p = params.get(name);
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) m.assign(p.value.v.size(), 0.0);
        if (v.empty()) v.assign(p.value.v.size(), 0.0);
        const bool decay = decays(name, p.value.shape) && opts_.weight_decay > 0.0;
        for (size_t i = 0; i < p.value.v.size(); ++i) {
            const double g = p.grad.v[i];
            m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
            v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
            if (decay) p.value.v[i] -= lr * opts_.weight_decay * p.value.v[i];
        }
    }
}

namespace {

// Branch masks for one step. Checkerboard draws a phase per sample; the
// seeded baselines draw a seed per sample; central is shared.
std::vector<TokenMask> draw_branch_masks(const RunConfig& cfg, const TrainPolicy& policy,
                                         int cell, int batch, std::mt19937_64& rng) {
    const int grid = cfg.encoder.grid();
    std::vector<TokenMask> masks;
    switch (policy.strategy) {
        case MaskStrategy::checkerboard:
            masks.reserve(batch);
            for (int i = 0; i < batch; ++i)
                masks.push_back(checkerboard_mask(
                    grid, grid, cell, (rng() & 1) == 0 ? Parity::even : Parity::odd));
            break;
        case MaskStrategy::random:
            masks.reserve(batch);
            for (int i = 0; i < batch; ++i)
                masks.push_back(random_mask(grid, grid, policy.ratio, rng()));
            break;
        case MaskStrategy::block:
            masks.reserve(batch);
            for (int i = 0; i < batch; ++i)
                masks.push_back(block_mask(grid, grid, policy.ratio, rng()));
            break;
        case MaskStrategy::central:
            masks.push_back(central_mask(grid, grid, policy.ratio));
            break;
        case MaskStrategy::derived:
            throw ConfigError("derived masks cannot drive training");
    }
    return masks;
}

}  // namespace

void draw_step_masks(const RunConfig& cfg, const TrainPolicy& policy, int batch,
                     std::int64_t step, std::vector<TokenMask>* m1,
                     std::vector<TokenMask>* m2) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));
    m1->clear();
    m2->clear();
    for (int i = 0; i < batch; ++i) {
        // Interleaved per-sample draws, online branch first.
        auto one = draw_branch_masks(cfg, policy, cfg.small_cell, 1, rng);
        auto two = draw_branch_masks(cfg, policy, cfg.large_cell, 1, rng);
        if (policy.strategy == MaskStrategy::central) {
            *m1 = std::move(one);
            *m2 = std::move(two);
            return;  // deterministic and shared across the batch
        }
        m1->push_back(std::move(one[0]));
        m2->push_back(std::move(two[0]));
    }
}

void momentum_forward(DualEncoderState& state, const RunConfig& cfg,
                      const PatchBatch& patches, const std::vector<TokenMask>& m2,
                      bool want_keys, bool want_pixels, ad::Array* keys,
                      ad::Array* momentum_pixels) {
    ad::Graph gk(/*recording=*/false);
    ad::Node* emb = model::embed_patches(gk, state.theta_k, patches);
    ad::Node* seq = model::substitute_and_position(gk, state.theta_k, emb, m2);
    ad::Node* feats = model::encode(gk, state.theta_k, cfg.encoder, seq);
    if (want_keys) {
        ad::Node* proj = model::project(gk, state.theta_k, state.heads, feats);
        *keys = ad::Array(proj->shape, proj->val);
    }
    if (want_pixels) {
        // theta_k holds no reconstruction head; the online head serves the
        // momentum path under stop-gradient.
        ad::Node* rec = model::reconstruct(gk, state.theta_q, feats);
        *momentum_pixels = ad::Array(rec->shape, rec->val);
    }
}

CombinedLoss online_forward_loss(ad::Graph& g, DualEncoderState& state,
                                 const RunConfig& cfg, const PatchBatch& patches,
                                 const std::vector<TokenMask>& m1,
                                 const std::vector<TokenMask>& m2,
                                 const ad::Array* momentum_pixels, const ad::Array* keys,
                                 KeyScope scope, const DropPathPlan* drop) {
    const int n = patches.n;
    const int t = patches.t;
    const ad::Array target({patches.n, patches.t, patches.d_patch}, patches.v);

    ad::Node* emb = model::embed_patches(g, state.theta_q, patches);
    ad::Node* seq = model::substitute_and_position(g, state.theta_q, emb, m1);
    ad::Node* feats = model::encode(g, state.theta_q, cfg.encoder, seq,
                                    drop && drop->rate > 0.0 ? drop : nullptr);

    ad::Node* rec1 = nullptr;
    ad::Node* rec2 = nullptr;
    ad::Node* con = nullptr;
    bool rec2_empty = false;
    if (cfg.loss_flags.rec1 || cfg.loss_flags.rec2) {
        ad::Node* pred_pixels = model::reconstruct(g, state.theta_q, feats);
        if (cfg.loss_flags.rec1) rec1 = loss_rec1(g, pred_pixels, target, m1);
        if (cfg.loss_flags.rec2) {
            if (!momentum_pixels)
                throw ConfigError("online_forward_loss: rec2 needs momentum pixels");
            rec2 = loss_rec2(g, pred_pixels, *momentum_pixels, m1, m2, &rec2_empty);
        }
    }
    if (cfg.loss_flags.con) {
        if (!keys) throw ConfigError("online_forward_loss: con needs momentum keys");
        const std::vector<int> rows = masked_rows(m1, n, t);
        std::vector<int> q_sample(rows.size()), q_token(rows.size());
        for (size_t i = 0; i < rows.size(); ++i) {
            q_sample[i] = rows[i] / t;
            q_token[i] = rows[i] % t;
        }
        ad::Node* feats2d = ad::reshape(g, feats, {n * t, cfg.encoder.dim});
        ad::Node* masked_feats = ad::gather_rows(g, feats2d, rows);
        ad::Node* proj = model::project(g, state.theta_q, state.heads, masked_feats);
        ad::Node* queries = model::predict(g, state.theta_q, state.heads, proj);
        ContrastiveConfig ccfg;
        ccfg.tau = cfg.tau;
        ccfg.key_scope = scope;
        con = info_nce(g, queries, q_sample, q_token, *keys, ccfg);
    }
    return total_loss(g, rec1, rec2, con, cfg.lambda, cfg.loss_flags, rec2_empty);
}

StepRecord train_step(DualEncoderState& state, AdamW& opt, const ImageBatch& batch,
                      const RunConfig& cfg, const TrainPolicy& policy) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::int64_t step = state.step;

    const int n = batch.n;
    std::vector<TokenMask> m1, m2;
    draw_step_masks(cfg, policy, n, step, &m1, &m2);

    const PatchBatch patches = patchify(batch, cfg.encoder.token_patch_size);

    // Momentum branch constants; skipped when neither loss consumes them
    // (rec1-only runs are single-branch).
    ad::Array keys;
    ad::Array momentum_pixels;
    if (cfg.loss_flags.rec2 || cfg.loss_flags.con)
        momentum_forward(state, cfg, patches, m2, cfg.loss_flags.con,
                         cfg.loss_flags.rec2, &keys, &momentum_pixels);

    ad::Graph g(/*recording=*/true);
    std::mt19937_64 drop_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step) ^ 0x5eed));
    const DropPathPlan drop = DropPathPlan::draw(cfg.encoder, n, drop_rng);
    CombinedLoss combined = online_forward_loss(
        g, state, cfg, patches, m1, m2, cfg.loss_flags.rec2 ? &momentum_pixels : nullptr,
        cfg.loss_flags.con ? &keys : nullptr, policy.key_scope,
        drop.rate > 0.0 ? &drop : nullptr);
    if (!std::isfinite(combined.breakdown.total))
        throw std::runtime_error("non-finite loss at step " + std::to_string(step));

    state.theta_q.zero_grad();
    g.backward(combined.total);
    const double lr = lr_at_step(cfg, step);
    opt.step(state.theta_q, lr);

    state.m = momentum_schedule(step, cfg.total_steps > 0 ? cfg.total_steps : 1,
                                cfg.m_base);
    ema_update(state);  // increments state.step

    StepRecord rec;
    rec.step = state.step;
    rec.loss = combined.breakdown;
    rec.m = state.m;
    rec.lr = lr;
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    return rec;
}

std::string metrics_csv_row(const StepRecord& rec) {
    std::ostringstream os;
    os << rec.step << ',' << fmt_double(rec.loss.rec1) << ',' << fmt_double(rec.loss.rec2)
       << ',' << fmt_double(rec.loss.con) << ',' << fmt_double(rec.loss.total) << ','
       << fmt_double(rec.m) << ',' << fmt_double(rec.lr) << ',' << fmt_double(rec.wall_ms);
    return os.str();
}

namespace {

constexpr char kMagic[8] = {'S', 'Y', 'M', 'M', 'I', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::string read_str(std::istream& is) {
    const std::uint32_t len = read_u32(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    return s;
}

void write_array(std::ostream& os, const std::string& name, const std::vector<int>& shape,
                 const std::vector<double>& data) {
    write_str(os, name);
    write_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) write_u64(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
}

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

NamedArray read_array(std::istream& is) {
    NamedArray a;
    a.name = read_str(is);
    const std::uint32_t ndim = read_u32(is);
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        const std::uint64_t d = read_u64(is);
        a.shape.push_back(static_cast<int>(d));
        count *= d;
    }
    a.data.resize(count);
    is.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    return a;
}

void write_param_section(std::ostream& os, const std::string& tag, const ParamStore& store) {
    write_str(os, tag);
    write_u64(os, store.count());
    for (const auto& name : store.names()) {
        const auto& p = store.get(name);
        write_array(os, name, p.value.shape, p.value.v);
    }
}

}  // namespace

void save_checkpoint(const fs::path& path, const RunConfig& cfg,
                     const DualEncoderState& state, const AdamW& opt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path.string());
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kVersion);
    write_str(os, cfg.to_text());
    write_u64(os, static_cast<std::uint64_t>(state.step));
    write_u64(os, static_cast<std::uint64_t>(const_cast<AdamW&>(opt).steps_taken()));
    write_param_section(os, "theta_q", state.theta_q);
    write_param_section(os, "theta_k", state.theta_k);
    auto& m = const_cast<AdamW&>(opt).moments_m();
    auto& v = const_cast<AdamW&>(opt).moments_v();
    write_str(os, "adam_m");
    write_u64(os, m.size());
    for (const auto& [name, data] : m)
        write_array(os, name, {static_cast<int>(data.size())}, data);
    write_str(os, "adam_v");
    write_u64(os, v.size());
    for (const auto& [name, data] : v)
        write_array(os, name, {static_cast<int>(data.size())}, data);
    if (!os) throw std::runtime_error("short checkpoint write: " + path.string());
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path.string());
    const std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    LoadedCheckpoint out;
    out.config_text = read_str(is);
    out.config = RunConfig::parse(out.config_text);
    out.state.encoder = out.config.encoder;
    out.state.heads = out.config.heads;
    out.state.step = static_cast<std::int64_t>(read_u64(is));
    out.state.m = out.config.m_base;
    const std::int64_t adam_t = static_cast<std::int64_t>(read_u64(is));

    auto read_section = [&is](const std::string& expect, ParamStore& store) {
        const std::string tag = read_str(is);
        if (tag != expect)
            throw std::runtime_error("checkpoint section '" + tag + "', expected '" +
                                     expect + "'");
        const std::uint64_t count = read_u64(is);
        for (std::uint64_t i = 0; i < count; ++i) {
            NamedArray a = read_array(is);
            auto& p = store.add(a.name, a.shape);
            p.value.v = std::move(a.data);
        }
    };
    read_section("theta_q", out.state.theta_q);
    read_section("theta_k", out.state.theta_k);
    check_momentum_isomorphism(out.state.theta_q, out.state.theta_k);

    AdamW::Options opts;
    opts.weight_decay = out.config.weight_decay;
    out.opt = AdamW(opts);
    out.opt.set_steps_taken(adam_t);
    for (const std::string expect : {"adam_m", "adam_v"}) {
        const std::string tag = read_str(is);
        if (tag != expect)
            throw std::runtime_error("checkpoint section '" + tag + "', expected '" +
                                     expect + "'");
        const std::uint64_t count = read_u64(is);
        auto& dst = expect == "adam_m" ? out.opt.moments_m() : out.opt.moments_v();
        for (std::uint64_t i = 0; i < count; ++i) {
            NamedArray a = read_array(is);
            dst[a.name] = std::move(a.data);
        }
    }
    if (!is) throw std::runtime_error("truncated checkpoint: " + path.string());
    return out;
}

TrainLoopResult train_loop(const RunConfig& cfg, const DatasetSpec& data,
                           const fs::path& out_dir, const TrainPolicy& policy,
                           const fs::path& resume, int checkpoint_interval) {
    cfg.validate();
    DatasetSpec spec = data;
    spec.image_size = cfg.encoder.image_size;
    const Dataset dataset = Dataset::load(spec);

    fs::create_directories(out_dir);
    DualEncoderState state;
    AdamW::Options opts;
    opts.weight_decay = cfg.weight_decay;
    AdamW opt(opts);
    bool resumed = false;
    if (!resume.empty()) {
        LoadedCheckpoint ck = load_checkpoint(resume);
        if (ck.config_text != cfg.to_text())
            throw ConfigError(
                "resume config mismatch: checkpoint hash " +
                std::to_string(fnv1a(ck.config_text)) + " != config hash " +
                std::to_string(cfg.text_hash()));
        state = std::move(ck.state);
        opt = std::move(ck.opt);
        resumed = true;
    } else {
        state = DualEncoderState::init(cfg.encoder, cfg.heads, cfg.seed);
        state.m = cfg.m_base;
    }

    const fs::path config_echo = out_dir / "config.txt";
    {
        std::ofstream os(config_echo);
        os << cfg.to_text();
    }
    const fs::path metrics_path = out_dir / "metrics.csv";
    std::ofstream metrics;
    if (resumed && fs::exists(metrics_path)) {
        metrics.open(metrics_path, std::ios::app);
    } else {
        metrics.open(metrics_path);
        metrics << kMetricsHeader << '\n';
    }
    if (!metrics) throw std::runtime_error("cannot open metrics CSV");

    const int n = dataset.size();
    const std::int64_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<std::vector<int>> epoch;
    std::int64_t cached_epoch = -1;

    TrainLoopResult result;
    result.metrics_csv = metrics_path;
    std::vector<double> first_window, last_window;
    for (std::int64_t step = state.step; step < cfg.total_steps; ++step) {
        const std::int64_t e = step / batches_per_epoch;
        if (e != cached_epoch) {
            epoch = epoch_batches(n, cfg.batch_size, cfg.seed, e);
            cached_epoch = e;
        }
        const ImageBatch batch = dataset.gather(epoch[step % batches_per_epoch]);
        StepRecord rec;
        try {
            rec = train_step(state, opt, batch, cfg, policy);
        } catch (const std::exception&) {
            save_checkpoint(out_dir / "diagnostic.ckpt", cfg, state, opt);
            throw;
        }
        metrics << metrics_csv_row(rec) << '\n';
        metrics.flush();
        ++result.steps_run;
        if (rec.step <= 10) first_window.push_back(rec.loss.total);
        last_window.push_back(rec.loss.total);
        if (last_window.size() > 10) last_window.erase(last_window.begin());
        if (checkpoint_interval > 0 && rec.step % checkpoint_interval == 0)
            save_checkpoint(out_dir / ("checkpoint_" + std::to_string(rec.step) + ".ckpt"),
                            cfg, state, opt);
    }

    auto mean = [](const std::vector<double>& xs) {
        if (xs.empty()) return 0.0;
        double s = 0.0;
        for (double x : xs) s += x;
        return s / static_cast<double>(xs.size());
    };
    result.first_window_mean = mean(first_window);
    result.last_window_mean = mean(last_window);
    result.checkpoint = out_dir / "checkpoint_final.ckpt";
    save_checkpoint(result.checkpoint, cfg, state, opt);
    return result;
}

}  // namespace symmim
