// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#include "symmim/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "symmim/errors.hpp"

namespace symmim {

std::string to_string(KeyScope s) {
    return s == KeyScope::same_image ? "same_image" : "batch";
}

KeyScope key_scope_from_string(const std::string& s) {
    if (s == "same_image") return KeyScope::same_image;
    if (s == "batch") return KeyScope::batch;
    throw ConfigError("unknown key_scope: " + s);
}

void ContrastiveConfig::validate() const {
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
}

std::vector<int> masked_rows(const std::vector<TokenMask>& masks, int n, int t) {
    if (masks.empty() ||
        (static_cast<int>(masks.size()) != 1 && static_cast<int>(masks.size()) != n))
        throw ConfigError("masked_rows: need one mask or one per sample");
    std::vector<int> rows;
    for (int i = 0; i < n; ++i) {
        const TokenMask& m = masks[masks.size() == 1 ? 0 : i];
        if (m.size() != t) throw ConfigError("masked_rows: mask grid mismatch");
        for (int tok = 0; tok < t; ++tok)
            if (m.bits()[tok]) rows.push_back(i * t + tok);
    }
    return rows;
}

ad::Node* loss_rec1(ad::Graph& g, ad::Node* pred_pixels, const ad::Array& target_pixels,
                    const std::vector<TokenMask>& m1) {
    if (pred_pixels->shape.size() != 3) throw ConfigError("loss_rec1: expected (n,t,d)");
    const int n = pred_pixels->shape[0];
    const int t = pred_pixels->shape[1];
    const std::vector<int> rows = masked_rows(m1, n, t);
    if (rows.empty())
        throw ConfigError("loss_rec1: mask M1 is empty (training misconfiguration)");
    return ad::masked_l1(g, pred_pixels, target_pixels, rows);
}

ad::Node* loss_rec2(ad::Graph& g, ad::Node* online_pixels, const ad::Array& momentum_pixels,
                    const std::vector<TokenMask>& m1, const std::vector<TokenMask>& m2,
                    bool* empty_intersection) {
    if (online_pixels->shape.size() != 3) throw ConfigError("loss_rec2: expected (n,t,d)");
    const int n = online_pixels->shape[0];
    const int t = online_pixels->shape[1];
    if (m1.size() != m2.size() && m1.size() != 1 && m2.size() != 1)
        throw ConfigError("loss_rec2: mask lists disagree");
    std::vector<TokenMask> both;
    const size_t count = std::max(m1.size(), m2.size());
    both.reserve(count);
    for (size_t i = 0; i < count; ++i)
        both.push_back(intersect(m1[m1.size() == 1 ? 0 : i], m2[m2.size() == 1 ? 0 : i]));
    const std::vector<int> rows = masked_rows(both, n, t);
    if (empty_intersection) *empty_intersection = rows.empty();
    if (rows.empty()) return nullptr;
    return ad::masked_l1(g, online_pixels, momentum_pixels, rows);
}

ad::Node* info_nce(ad::Graph& g, ad::Node* queries, const std::vector<int>& query_sample,
                   const std::vector<int>& query_token, const ad::Array& keys,
                   const ContrastiveConfig& cfg) {
    cfg.validate();
    if (queries->shape.size() != 2) throw ConfigError("info_nce: queries must be (Q, d)");
    if (keys.shape.size() != 3) throw ConfigError("info_nce: keys must be (n, t, d)");
    const int q_count = queries->shape[0];
    const int d = queries->shape[1];
    const int n = keys.shape[0];
    const int t = keys.shape[1];
    if (keys.shape[2] != d) throw ConfigError("info_nce: embedding dims differ");
    if (static_cast<int>(query_sample.size()) != q_count ||
        static_cast<int>(query_token.size()) != q_count)
        throw ConfigError("info_nce: query index metadata mismatch");
    if (q_count == 0) throw ConfigError("info_nce: no queries");
    const int k_in_scope = cfg.key_scope == KeyScope::same_image ? t : n * t;
    if (k_in_scope < 2) throw ConfigError("info_nce: need at least 2 keys");

    // Keys are the stop-gradient side: normalized as plain values.
    ad::Array keys_hat = keys;
    for (int r = 0; r < n * t; ++r) {
        double* kr = keys_hat.v.data() + static_cast<size_t>(r) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += kr[j] * kr[j];
        const double norm = std::sqrt(s);
        if (!(norm > 1e-300))
            throw std::runtime_error("info_nce: zero-norm key vector");
        for (int j = 0; j < d; ++j) kr[j] /= norm;
    }

    ad::Node* q_hat = ad::l2_normalize_last(g, queries);
    const double inv_tau = 1.0 / cfg.tau;

    std::vector<ad::Node*> terms;
    if (cfg.key_scope == KeyScope::batch) {
        ad::Array flat_keys({n * t, d}, keys_hat.v);
        ad::Node* logits =
            ad::scale(g, ad::matmul_nt_const(g, q_hat, flat_keys), inv_tau);
        ad::Node* logp = ad::log_softmax_last(g, logits);
        std::vector<int> positives(q_count);
        for (int r = 0; r < q_count; ++r)
            positives[r] = query_sample[r] * t + query_token[r];
        terms.push_back(ad::nll_positive_sum(g, logp, std::move(positives)));
    } else {
        for (int i = 0; i < n; ++i) {
            std::vector<int> rows;
            std::vector<int> positives;
            for (int r = 0; r < q_count; ++r)
                if (query_sample[r] == i) {
                    rows.push_back(r);
                    positives.push_back(query_token[r]);
                }
            if (rows.empty()) continue;
            ad::Node* qi = ad::gather_rows(g, q_hat, rows);
            ad::Array ki({t, d},
                         std::vector<double>(keys_hat.v.begin() + static_cast<size_t>(i) * t * d,
                                             keys_hat.v.begin() + static_cast<size_t>(i + 1) * t * d));
            ad::Node* logits = ad::scale(g, ad::matmul_nt_const(g, qi, ki), inv_tau);
            ad::Node* logp = ad::log_softmax_last(g, logits);
            terms.push_back(ad::nll_positive_sum(g, logp, std::move(positives)));
        }
    }
    return ad::sum_scaled(g, terms, 1.0 / q_count);
}

CombinedLoss total_loss(ad::Graph& g, ad::Node* rec1, ad::Node* rec2, ad::Node* con,
                        double lambda, const LossFlags& flags,
                        bool rec2_empty_intersection) {
    CombinedLoss out;
    out.breakdown.lambda = lambda;
    out.breakdown.rec2_empty_intersection = rec2_empty_intersection;
    std::vector<ad::Node*> terms;
    if (flags.rec1 && rec1) {
        out.breakdown.rec1 = rec1->val[0];
        terms.push_back(rec1);
    }
    if (flags.rec2 && rec2) {
        out.breakdown.rec2 = rec2->val[0];
        terms.push_back(rec2);
    }
    if (flags.con && con) {
        out.breakdown.con = con->val[0];
        terms.push_back(ad::scale(g, con, lambda));
    }
    if (terms.empty())
        throw ConfigError("total_loss: no active loss terms");
    out.total = ad::sum_scaled(g, terms, 1.0);
    out.breakdown.total = out.total->val[0];
    for (double v : {out.breakdown.rec1, out.breakdown.rec2, out.breakdown.con,
                     out.breakdown.total})
        if (!std::isfinite(v)) throw std::runtime_error("total_loss: non-finite loss term");
    return out;
}

}  // namespace symmim
