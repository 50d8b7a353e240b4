// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#include "symmim/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "symmim/errors.hpp"

namespace symmim {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

int LinearClassifier::predict_one(const double* feature) const {
    int best = 0;
    double best_score = -1e300;
    for (int c = 0; c < classes; ++c) {
        double s = bias[c];
        for (int j = 0; j < dim; ++j) s += feature[j] * weight[j * classes + c];
        if (s > best_score) {
            best_score = s;
            best = c;
        }
    }
    return best;
}

LinearClassifier train_linear_classifier(const std::vector<double>& features, int n,
                                         int dim, const std::vector<int>& labels,
                                         int classes, int iters, double lr) {
    if (n <= 0 || static_cast<int>(labels.size()) != n)
        throw ConfigError("classifier: labels must match feature rows");
    if (classes < 2) throw ConfigError("classifier: need at least 2 classes");
    for (int l : labels)
        if (l < 0 || l >= classes) throw ConfigError("classifier: label out of range");

    ParamStore store;
    store.add("probe.weight", {dim, classes});
    store.add("probe.bias", {classes});
    AdamW opt{AdamW::Options{}};
    for (int it = 0; it < iters; ++it) {
        ad::Graph g;
        ad::Node* x = g.input({n, dim}, features);
        ad::Node* logits = ad::linear(g, x, g.leaf(store.get("probe.weight")),
                                      g.leaf(store.get("probe.bias")));
        ad::Node* logp = ad::log_softmax_last(g, logits);
        ad::Node* nll = ad::nll_positive_sum(g, logp, labels);
        ad::Node* loss = ad::sum_scaled(g, {nll}, 1.0 / n);
        store.zero_grad();
        g.backward(loss);
        opt.step(store, lr);
    }
    LinearClassifier clf;
    clf.dim = dim;
    clf.classes = classes;
    clf.weight = store.get("probe.weight").value.v;
    clf.bias = store.get("probe.bias").value.v;
    return clf;
}

double classifier_accuracy(const LinearClassifier& clf, const std::vector<double>& features,
                           int n, const std::vector<int>& labels) {
    if (n == 0) throw ConfigError("classifier_accuracy: empty eval set");
    int hits = 0;
    for (int i = 0; i < n; ++i)
        if (clf.predict_one(features.data() + static_cast<size_t>(i) * clf.dim) == labels[i])
            ++hits;
    return static_cast<double>(hits) / n;
}

std::vector<double> backbone_features(const DualEncoderState& state,
                                      const Dataset& dataset, int batch_size) {
    const EncoderConfig& enc = state.encoder;
    const int dim = enc.dim;
    const int t = enc.tokens();
    std::vector<double> out(static_cast<size_t>(dataset.size()) * dim);
    // const_cast: forward passes only read parameter values.
    auto& params = const_cast<ParamStore&>(state.theta_q);
    for (int start = 0; start < dataset.size(); start += batch_size) {
        const int end = std::min(start + batch_size, dataset.size());
        std::vector<int> idx(end - start);
        for (int i = start; i < end; ++i) idx[i - start] = i;
        const ImageBatch images = dataset.gather(idx);
        const PatchBatch patches = patchify(images, enc.token_patch_size);
        ad::Graph g(/*recording=*/false);
        ad::Node* emb = model::embed_patches(g, params, patches);
        ad::Node* seq = model::substitute_and_position(g, params, emb, {});
        ad::Node* feats = model::encode(g, params, enc, seq);
        for (int i = 0; i < end - start; ++i)
            for (int j = 0; j < dim; ++j) {
                double s = 0.0;
                for (int tok = 0; tok < t; ++tok)
                    s += feats->val[(static_cast<size_t>(i) * t + tok) * dim + j];
                out[static_cast<size_t>(start + i) * dim + j] = s / t;
            }
    }
    return out;
}

ProbeResult linear_probe(const DualEncoderState& state, const Dataset& labeled,
                         const ProbeConfig& cfg) {
    if (!labeled.labeled()) throw ConfigError("linear_probe: dataset has no labels");
    if (cfg.expected_classes > 0 && labeled.num_classes() != cfg.expected_classes)
        throw ConfigError("linear_probe: class count mismatch (dataset " +
                          std::to_string(labeled.num_classes()) + ", expected " +
                          std::to_string(cfg.expected_classes) + ")");
    if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0))
        throw ConfigError("linear_probe: val_fraction must be in (0, 1)");
    const int n = labeled.size();
    const int dim = state.encoder.dim;
    const std::vector<double> features = backbone_features(state, labeled);

    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = labeled.label(i);
    if (cfg.shuffle_labels) {
        std::mt19937_64 rng(mix_seed(cfg.seed, 0x1abe1));
        std::shuffle(labels.begin(), labels.end(), rng);
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const int n_train = static_cast<int>(std::lround((1.0 - cfg.val_fraction) * n));
    if (n_train < 1 || n_train >= n)
        throw ConfigError("linear_probe: split leaves an empty side");

    auto gather_feat = [&](int from, int to) {
        std::vector<double> xs(static_cast<size_t>(to - from) * dim);
        std::vector<int> ys(to - from);
        for (int i = from; i < to; ++i) {
            std::copy(features.begin() + static_cast<size_t>(order[i]) * dim,
                      features.begin() + static_cast<size_t>(order[i] + 1) * dim,
                      xs.begin() + static_cast<size_t>(i - from) * dim);
            ys[i - from] = labels[order[i]];
        }
        return std::make_pair(xs, ys);
    };
    auto [train_x, train_y] = gather_feat(0, n_train);
    auto [val_x, val_y] = gather_feat(n_train, n);

    const LinearClassifier clf = train_linear_classifier(
        train_x, n_train, dim, train_y, labeled.num_classes(), cfg.iters, cfg.lr);
    ProbeResult result;
    result.accuracy = classifier_accuracy(clf, val_x, n - n_train, val_y);
    result.n_eval = n - n_train;
    result.seed = cfg.seed;
    return result;
}

std::vector<LossFlags> ablation_flag_rows() {
    return {
        {true, false, false},
        {true, true, false},
        {true, false, true},
        {true, true, true},
    };
}

bool configs_differ_only_in_loss_flags(const RunConfig& a, const RunConfig& b) {
    auto strip = [](const std::string& text) {
        std::istringstream is(text);
        std::ostringstream os;
        std::string line;
        while (std::getline(is, line))
            if (line.rfind("loss_flags.", 0) != 0) os << line << '\n';
        return os.str();
    };
    return strip(a.to_text()) == strip(b.to_text());
}

std::string AblationReport::formatted_table() const {
    std::ostringstream os;
    os << "rec1  rec2  con   accuracy  n_eval\n";
    for (const auto& row : rows) {
        os << (row.flags.rec1 ? "yes " : "no  ") << "  "
           << (row.flags.rec2 ? "yes " : "no  ") << "  "
           << (row.flags.con ? "yes " : "no  ") << "  " << fmt_double(row.probe.accuracy)
           << "  " << row.probe.n_eval << '\n';
    }
    return os.str();
}

std::string AblationReport::to_csv() const {
    std::ostringstream os;
    os << "rec1,rec2,con,accuracy,n_eval,seed\n";
    for (const auto& row : rows)
        os << (row.flags.rec1 ? "true" : "false") << ','
           << (row.flags.rec2 ? "true" : "false") << ','
           << (row.flags.con ? "true" : "false") << ',' << fmt_double(row.probe.accuracy)
           << ',' << row.probe.n_eval << ',' << row.probe.seed << '\n';
    return os.str();
}

AblationReport run_ablation(const RunConfig& base_cfg, const DatasetSpec& data,
                            const fs::path& out_dir, const AblationOptions& opts) {
    base_cfg.validate();
    AblationReport report;
    const auto flag_rows = ablation_flag_rows();
    for (size_t i = 0; i < flag_rows.size(); ++i) {
        RunConfig cfg = base_cfg;
        cfg.loss_flags = flag_rows[i];
        if (!configs_differ_only_in_loss_flags(base_cfg, cfg))
            throw std::runtime_error("ablation config audit failed");
        const fs::path run_dir = out_dir / ("row" + std::to_string(i));
        const TrainLoopResult trained = train_loop(cfg, data, run_dir);
        const LoadedCheckpoint ck = load_checkpoint(trained.checkpoint);
        DatasetSpec labeled = data;
        labeled.image_size = cfg.encoder.image_size;
        const Dataset dataset = Dataset::load(labeled);
        ProbeConfig pc;
        pc.iters = opts.probe_iters;
        pc.lr = opts.probe_lr;
        pc.seed = opts.probe_seed;
        AblationRow row;
        row.flags = flag_rows[i];
        row.probe = linear_probe(ck.state, dataset, pc);
        row.probe.config_id = "row" + std::to_string(i);
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string SweepReport::to_csv() const {
    std::ostringstream os;
    os << "strategy,ratio,accuracy,steps,seed\n";
    for (const auto& row : rows)
        os << to_string(row.strategy) << ',' << fmt_double(row.ratio) << ','
           << fmt_double(row.accuracy) << ',' << row.steps << ',' << row.seed << '\n';
    return os.str();
}

std::vector<SweepRow> SweepReport::parse_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "strategy,ratio,accuracy,steps,seed")
        throw ConfigError("sweep CSV: bad header");
    std::vector<SweepRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string strategy, ratio, accuracy, steps, seed;
        if (!std::getline(ls, strategy, ',') || !std::getline(ls, ratio, ',') ||
            !std::getline(ls, accuracy, ',') || !std::getline(ls, steps, ',') ||
            !std::getline(ls, seed, ','))
            throw ConfigError("sweep CSV: malformed row '" + line + "'");
        SweepRow row;
        row.strategy = mask_strategy_from_string(strategy);
        try {
            row.ratio = std::stod(ratio);
            row.accuracy = std::stod(accuracy);
            row.steps = std::stoi(steps);
            row.seed = std::stoull(seed);
        } catch (const std::exception&) {
            throw ConfigError("sweep CSV: bad numeric field in '" + line + "'");
        }
        rows.push_back(row);
    }
    return rows;
}

SweepReport masking_ratio_probe(const RunConfig& base_cfg, const DatasetSpec& data,
                                const std::vector<double>& ratios,
                                const std::vector<MaskStrategy>& strategies,
                                const fs::path& out_dir, const AblationOptions& opts) {
    base_cfg.validate();
    for (double r : ratios)
        if (!(r > 0.0 && r < 1.0))
            throw ConfigError("sweep ratios must lie in (0, 1)");
    for (MaskStrategy s : strategies)
        if (s == MaskStrategy::derived)
            throw ConfigError("derived is not a sweepable strategy");

    SweepReport report;
    int run_id = 0;
    auto one_run = [&](MaskStrategy strategy, double ratio) {
        TrainPolicy policy;
        policy.strategy = strategy;
        policy.ratio = ratio;
        const fs::path run_dir =
            out_dir / ("run" + std::to_string(run_id++) + "_" + to_string(strategy));
        const TrainLoopResult trained = train_loop(base_cfg, data, run_dir, policy);
        const LoadedCheckpoint ck = load_checkpoint(trained.checkpoint);
        DatasetSpec labeled = data;
        labeled.image_size = base_cfg.encoder.image_size;
        const Dataset dataset = Dataset::load(labeled);
        ProbeConfig pc;
        pc.iters = opts.probe_iters;
        pc.lr = opts.probe_lr;
        pc.seed = opts.probe_seed;
        SweepRow row;
        row.strategy = strategy;
        row.ratio = ratio;
        row.accuracy = linear_probe(ck.state, dataset, pc).accuracy;
        row.steps = base_cfg.total_steps;
        row.seed = base_cfg.seed;
        report.rows.push_back(row);
    };
    for (MaskStrategy strategy : strategies) {
        if (strategy == MaskStrategy::checkerboard) {
            one_run(strategy, 0.5);  // fixed ratio: exactly one run
        } else {
            for (double r : ratios) one_run(strategy, r);
        }
    }
    return report;
}

}  // namespace symmim
