// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "symmim/autodiff.hpp"
#include "symmim/mask.hpp"
#include "symmim/patch.hpp"

namespace symmim {

struct LossFlags {
    bool rec1 = true;
    bool rec2 = true;
    bool con = true;
};

enum class KeyScope { same_image, batch };

std::string to_string(KeyScope s);
KeyScope key_scope_from_string(const std::string& s);

struct ContrastiveConfig {
    double tau = 0.1;
    KeyScope key_scope = KeyScope::same_image;

    void validate() const;
};

struct LossBreakdown {
    double rec1 = 0.0;
    double rec2 = 0.0;
    double con = 0.0;
    double lambda = 1.0;
    double total = 0.0;
    bool rec2_empty_intersection = false;
};

// Flat (sample * t + token) rows selected by per-sample (or shared) masks.
std::vector<int> masked_rows(const std::vector<TokenMask>& masks, int n, int t);

// Mean absolute error over tokens j in M1; error on empty M1 (training
// misconfiguration).
ad::Node* loss_rec1(ad::Graph& g, ad::Node* pred_pixels, const ad::Array& target_pixels,
                    const std::vector<TokenMask>& m1);

// Mean absolute error between the online reconstruction and the detached
// momentum reconstruction over j in M1 AND M2. Returns nullptr and sets
// *empty_intersection when the intersection is empty (caller reports 0).
ad::Node* loss_rec2(ad::Graph& g, ad::Node* online_pixels, const ad::Array& momentum_pixels,
                    const std::vector<TokenMask>& m1, const std::vector<TokenMask>& m2,
                    bool* empty_intersection);

// Per-token InfoNCE. queries (Q, d) are online embeddings after the
// predictor at masked positions; query_sample / query_token give each row's
// (sample, token). keys (n, t, d) are detached momentum projections covering
// every token. The positive for (i, j) is the key at the same (i, j);
// negatives are the other keys in scope. Logits are cosine similarity / tau;
// gradient flows only into queries.
ad::Node* info_nce(ad::Graph& g, ad::Node* queries, const std::vector<int>& query_sample,
                   const std::vector<int>& query_token, const ad::Array& keys,
                   const ContrastiveConfig& cfg);

// total = rec1 + rec2 + lambda * con over the active flags. Inactive or
// absent terms contribute zero and are reported as zero.
struct CombinedLoss {
    ad::Node* total = nullptr;
    LossBreakdown breakdown;
};

CombinedLoss total_loss(ad::Graph& g, ad::Node* rec1, ad::Node* rec2, ad::Node* con,
                        double lambda, const LossFlags& flags,
                        bool rec2_empty_intersection = false);

}  // namespace symmim
