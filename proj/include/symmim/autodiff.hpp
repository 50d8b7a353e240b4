// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode tape autodiff on dense double tensors. Creation order is the
// topological order, so backward() is a single reverse sweep over the tape.
// Gradients are exact analytic derivatives; the test suite checks every op
// against central finite differences.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "symmim/mask.hpp"

namespace symmim::ad {

struct Array {
    std::vector<int> shape;
    std::vector<double> v;

    Array() = default;
    Array(std::vector<int> s, std::vector<double> data)
        : shape(std::move(s)), v(std::move(data)) {}
    static Array zeros(std::vector<int> s);
    std::int64_t numel() const;
    int dim(int i) const { return shape[i]; }
    int rank() const { return static_cast<int>(shape.size()); }
};

std::int64_t numel(const std::vector<int>& shape);

// Persistent named tensor with a gradient accumulator.
struct Parameter {
    std::string name;
    Array value;
    Array grad;  // same shape, zero between steps

    Parameter() = default;
    Parameter(std::string n, Array val)
        : name(std::move(n)), value(std::move(val)) {
        grad = Array::zeros(value.shape);
    }
    void zero_grad();
};

struct Node {
    std::vector<int> shape;
    std::vector<double> val;
    std::vector<double> grad;  // allocated iff needs_grad
    bool needs_grad = false;
    std::function<void(Node&)> back;
    Parameter* src = nullptr;

    std::int64_t numel() const { return static_cast<std::int64_t>(val.size()); }
    int dim(int i) const { return shape[i]; }
};

class Graph {
public:
    explicit Graph(bool recording = true) : recording_(recording) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return recording_; }
    Node* make(std::vector<int> shape);

    // Leaf bound to a parameter: value copied in, gradient flushed back to
    // the parameter accumulator by backward().
    Node* leaf(Parameter& p);
    // Constant input; never receives gradient.
    Node* input(std::vector<int> shape, std::vector<double> data);

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. loss must be
    // scalar. Parameter gradients are accumulated (+=).
    void backward(Node* loss);

private:
    std::deque<Node> nodes_;
    bool recording_ = true;
};

// Elementwise and broadcast arithmetic.
Node* add(Graph& g, Node* a, Node* b);
Node* sub(Graph& g, Node* a, Node* b);
Node* mul(Graph& g, Node* a, Node* b);
Node* scale(Graph& g, Node* a, double s);
// x (..., d) + bias (d)
Node* add_bias(Graph& g, Node* x, Node* bias);
// x (n, t, d) + pos (t, d), broadcast over the batch
Node* add_rows(Graph& g, Node* x, Node* rows);
// x + keep_scale * branch, with optional per-sample keep mask (stochastic
// depth); keep == nullptr means plain residual add.
Node* residual_add(Graph& g, Node* x, Node* branch,
                   const std::vector<std::uint8_t>* keep, double keep_scale);

// y = x W + b over the last dim; x (..., din), W (din, dout), b (dout) or null.
Node* linear(Graph& g, Node* x, Node* w, Node* b);

Node* relu(Graph& g, Node* x);
Node* gelu(Graph& g, Node* x);
Node* layer_norm(Graph& g, Node* x, Node* gamma, Node* beta, double eps = 1e-6);
Node* softmax_last(Graph& g, Node* x);
Node* log_softmax_last(Graph& g, Node* x);
// Rowwise x / ||x||_2 over the last dim; throws on a zero-norm row.
Node* l2_normalize_last(Graph& g, Node* x);

// (n, t, d) -> (n*heads, t, d/heads) and back.
Node* to_heads(Graph& g, Node* x, int heads);
Node* from_heads(Graph& g, Node* x, int heads);
Node* slice_last(Graph& g, Node* x, int offset, int size);
Node* reshape(Graph& g, Node* x, std::vector<int> shape);

// Batched matmul: a (B, m, k) x b (B, k, n) -> (B, m, n); transpose_b makes
// b (B, n, k) and computes a b^T.
Node* bmm(Graph& g, Node* a, Node* b, bool transpose_b = false);
// a (m, k) x constant B, transposed: (m, k) x (n, k)^T -> (m, n). No
// gradient flows into B (stop-gradient side of the contrastive loss).
Node* matmul_nt_const(Graph& g, Node* a, const Array& b);

// x (rows, d) gathered to (idx.size(), d); backward scatter-adds.
Node* gather_rows(Graph& g, Node* x, std::vector<int> idx);

// Embedded sequence (n, t, d): masked positions replaced by mask_token.
// masks has 1 (shared) or n entries.
Node* substitute_masked(Graph& g, Node* x, const std::vector<TokenMask>& masks,
                        Node* mask_token);

// Mean absolute error between pred (n, t, d) and a constant target over the
// selected flat token rows (sample * t + token); averages over
// rows.size() * d components.
Node* masked_l1(Graph& g, Node* pred, const Array& target,
                const std::vector<int>& rows);

// Sum over rows q of -logp[q, positive[q]].
Node* nll_positive_sum(Graph& g, Node* logp, std::vector<int> positive);

// scale * (t0 + t1 + ...) over scalar nodes.
Node* sum_scaled(Graph& g, const std::vector<Node*>& terms, double s);

Node* mean_all(Graph& g, Node* x);

}  // namespace symmim::ad
