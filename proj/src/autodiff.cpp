// Copyright (c) 2026 symmim contributors
// SPDX-License-Identifier: Apache-2.0
#include "symmim/autodiff.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "symmim/errors.hpp"

namespace symmim::ad {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C = beta*C + alpha * op(A) op(B), all row-major dense.
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A,
          const double* B, double beta, double* C) {
    Eigen::Map<const RowMat> a(A, ta ? k : m, ta ? m : k);
    Eigen::Map<const RowMat> b(B, tb ? n : k, tb ? k : n);
    Eigen::Map<RowMat> c(C, m, n);
    if (beta == 0.0)
        c.setZero();
    else if (beta != 1.0)
        c *= beta;
    if (!ta && !tb)
        c.noalias() += alpha * (a * b);
    else if (ta && !tb)
        c.noalias() += alpha * (a.transpose() * b);
    else if (!ta && tb)
        c.noalias() += alpha * (a * b.transpose());
    else
        c.noalias() += alpha * (a.transpose() * b.transpose());
}

void check_same_shape(const Node* a, const Node* b, const char* op) {
    if (a->shape != b->shape)
        throw ConfigError(std::string(op) + ": shape mismatch");
}

int last_dim(const Node* x) { return x->shape.back(); }

int leading_rows(const Node* x) {
    return static_cast<int>(x->numel() / last_dim(x));
}

}  // namespace

Array Array::zeros(std::vector<int> s) {
    Array a;
    a.shape = std::move(s);
    a.v.assign(static_cast<size_t>(ad::numel(a.shape)), 0.0);
    return a;
}

std::int64_t Array::numel() const { return ad::numel(shape); }

std::int64_t numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

void Parameter::zero_grad() {
    std::fill(grad.v.begin(), grad.v.end(), 0.0);
}

Node* Graph::make(std::vector<int> shape) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.shape = std::move(shape);
    n.val.assign(static_cast<size_t>(numel(n.shape)), 0.0);
    return &n;
}

Node* Graph::leaf(Parameter& p) {
    Node* n = make(p.value.shape);
    n->val = p.value.v;
    n->src = &p;
    if (recording_) {
        n->needs_grad = true;
        n->grad.assign(n->val.size(), 0.0);
    }
    return n;
}

Node* Graph::input(std::vector<int> shape, std::vector<double> data) {
    Node* n = make(std::move(shape));
    if (static_cast<std::int64_t>(data.size()) != n->numel())
        throw ConfigError("input: data size does not match shape");
    n->val = std::move(data);
    return n;
}

void Graph::backward(Node* loss) {
    if (loss->numel() != 1)
        throw std::runtime_error("backward: loss must be scalar");
    if (!loss->needs_grad)
        throw std::runtime_error("backward: loss does not depend on parameters");
    loss->grad.assign(1, 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->needs_grad && it->back) it->back(*it);
    }
    for (auto& n : nodes_) {
        if (n.src && n.needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i)
                n.src->grad.v[i] += n.grad[i];
    }
}

namespace {

Node* unary_result(Graph& g, Node* x) {
    Node* out = g.make(x->shape);
    out->needs_grad = g.recording() && x->needs_grad;
    if (out->needs_grad) out->grad.assign(out->val.size(), 0.0);
    return out;
}

Node* op_result(Graph& g, std::vector<int> shape,
                std::initializer_list<Node*> parents) {
    Node* out = g.make(std::move(shape));
    bool need = false;
    for (Node* p : parents) need = need || (p && p->needs_grad);
    out->needs_grad = g.recording() && need;
    if (out->needs_grad) out->grad.assign(out->val.size(), 0.0);
    return out;
}

}  // namespace

Node* add(Graph& g, Node* a, Node* b) {
    check_same_shape(a, b, "add");
    Node* out = op_result(g, a->shape, {a, b});
    for (size_t i = 0; i < out->val.size(); ++i) out->val[i] = a->val[i] + b->val[i];
    if (out->needs_grad)
        out->back = [a, b](Node& self) {
            if (a->needs_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
            if (b->needs_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
        };
    return out;
}

Node* sub(Graph& g, Node* a, Node* b) {
    check_same_shape(a, b, "sub");
    Node* out = op_result(g, a->shape, {a, b});
    for (size_t i = 0; i < out->val.size(); ++i) out->val[i] = a->val[i] - b->val[i];
    if (out->needs_grad)
        out->back = [a, b](Node& self) {
            if (a->needs_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
            if (b->needs_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) b->grad[i] -= self.grad[i];
        };
    return out;
}

Node* mul(Graph& g, Node* a, Node* b) {
    check_same_shape(a, b, "mul");
    Node* out = op_result(g, a->shape, {a, b});
    for (size_t i = 0; i < out->val.size(); ++i) out->val[i] = a->val[i] * b->val[i];
    if (out->needs_grad)
        out->back = [a, b](Node& self) {
            if (a->needs_grad)
                for (size_t i = 0; i < self.grad.size(); ++i)
                    a->grad[i] += self.grad[i] * b->val[i];
            if (b->needs_grad)
                for (size_t i = 0; i < self.grad.size(); ++i)
                    b->grad[i] += self.grad[i] * a->val[i];
        };
    return out;
}

Node* scale(Graph& g, Node* a, double s) {
    Node* out = unary_result(g, a);
    for (size_t i = 0; i < out->val.size(); ++i) out->val[i] = a->val[i] * s;
    if (out->needs_grad)
        out->back = [a, s](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * s;
        };
    return out;
}

Node* add_bias(Graph& g, Node* x, Node* bias) {
    const int d = last_dim(x);
    if (bias->numel() != d) throw ConfigError("add_bias: bias dim mismatch");
    const int rows = leading_rows(x);
    Node* out = op_result(g, x->shape, {x, bias});
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j)
            out->val[static_cast<size_t>(r) * d + j] =
                x->val[static_cast<size_t>(r) * d + j] + bias->val[j];
    if (out->needs_grad)
        out->back = [x, bias, rows, d](Node& self) {
            if (x->needs_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
            if (bias->needs_grad)
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < d; ++j)
                        bias->grad[j] += self.grad[static_cast<size_t>(r) * d + j];
        };
    return out;
}

Node* add_rows(Graph& g, Node* x, Node* rows) {
    if (x->shape.size() != 3 || rows->shape.size() != 2 ||
        x->shape[1] != rows->shape[0] || x->shape[2] != rows->shape[1])
        throw ConfigError("add_rows: expected x (n,t,d) and rows (t,d)");
    const int n = x->shape[0];
    const std::int64_t td = rows->numel();
    Node* out = op_result(g, x->shape, {x, rows});
    for (int i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < td; ++j)
            out->val[i * td + j] = x->val[i * td + j] + rows->val[j];
    if (out->needs_grad)
        out->back = [x, rows, n, td](Node& self) {
            if (x->needs_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
            if (rows->needs_grad)
                for (int i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < td; ++j)
                        rows->grad[j] += self.grad[i * td + j];
        };
    return out;
}

Node* residual_add(Graph& g, Node* x, Node* branch,
                   const std::vector<std::uint8_t>* keep, double keep_scale) {
    check_same_shape(x, branch, "residual_add");
    if (!keep) return add(g, x, branch);
    if (x->shape.empty() || static_cast<int>(keep->size()) != x->shape[0])
        throw ConfigError("residual_add: keep mask must have one entry per sample");
    const std::int64_t per = x->numel() / x->shape[0];
    Node* out = op_result(g, x->shape, {x, branch});
    std::vector<std::uint8_t> keep_copy = *keep;
    for (int i = 0; i < x->shape[0]; ++i) {
        const double s = keep_copy[i] ? keep_scale : 0.0;
        for (std::int64_t j = 0; j < per; ++j)
            out->val[i * per + j] = x->val[i * per + j] + s * branch->val[i * per + j];
    }
    if (out->needs_grad)
        out->back = [x, branch, keep_copy, keep_scale, per](Node& self) {
            if (x->needs_grad)
                for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
            if (branch->needs_grad)
                for (size_t i = 0; i < keep_copy.size(); ++i) {
                    const double s = keep_copy[i] ? keep_scale : 0.0;
                    if (s == 0.0) continue;
                    for (std::int64_t j = 0; j < per; ++j)
                        branch->grad[i * per + j] += s * self.grad[i * per + j];
                }
        };
    return out;
}

Node* linear(Graph& g, Node* x, Node* w, Node* b) {
    if (w->shape.size() != 2) throw ConfigError("linear: weight must be 2-D");
    const int din = w->shape[0];
    const int dout = w->shape[1];
    if (last_dim(x) != din) throw ConfigError("linear: input dim mismatch");
    if (b && b->numel() != dout) throw ConfigError("linear: bias dim mismatch");
    const int rows = leading_rows(x);
    std::vector<int> out_shape = x->shape;
    out_shape.back() = dout;
    Node* out = op_result(g, std::move(out_shape), {x, w, b});
    gemm(false, false, rows, dout, din, 1.0, x->val.data(), w->val.data(), 0.0,
         out->val.data());
    if (b)
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < dout; ++j)
                out->val[static_cast<size_t>(r) * dout + j] += b->val[j];
    if (out->needs_grad)
        out->back = [x, w, b, rows, din, dout](Node& self) {
            if (x->needs_grad)
                gemm(false, true, rows, din, dout, 1.0, self.grad.data(),
                     w->val.data(), 1.0, x->grad.data());
            if (w->needs_grad)
                gemm(true, false, din, dout, rows, 1.0, x->val.data(),
                     self.grad.data(), 1.0, w->grad.data());
            if (b && b->needs_grad)
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < dout; ++j)
                        b->grad[j] += self.grad[static_cast<size_t>(r) * dout + j];
        };
    return out;
}

Node* relu(Graph& g, Node* x) {
    Node* out = unary_result(g, x);
    for (size_t i = 0; i < out->val.size(); ++i)
        out->val[i] = x->val[i] > 0.0 ? x->val[i] : 0.0;
    if (out->needs_grad)
        out->back = [x](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (x->val[i] > 0.0) x->grad[i] += self.grad[i];
        };
    return out;
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Node* gelu(Graph& g, Node* x) {
    Node* out = unary_result(g, x);
    for (size_t i = 0; i < out->val.size(); ++i) {
        const double v = x->val[i];
        out->val[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    if (out->needs_grad)
        out->back = [x](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const double v = x->val[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                x->grad[i] += self.grad[i] * (cdf + v * pdf);
            }
        };
    return out;
}

Node* layer_norm(Graph& g, Node* x, Node* gamma, Node* beta, double eps) {
    const int d = last_dim(x);
    if (gamma->numel() != d || beta->numel() != d)
        throw ConfigError("layer_norm: affine params must match last dim");
    const int rows = leading_rows(x);
    Node* out = op_result(g, x->shape, {x, gamma, beta});
    std::vector<double> istd(rows);
    std::vector<double> mu(rows);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x->val.data() + static_cast<size_t>(r) * d;
        double m = 0.0;
        for (int j = 0; j < d; ++j) m += xr[j];
        m /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - m) * (xr[j] - m);
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        mu[r] = m;
        istd[r] = is;
        double* yr = out->val.data() + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j)
            yr[j] = gamma->val[j] * ((xr[j] - m) * is) + beta->val[j];
    }
    if (out->needs_grad)
        out->back = [x, gamma, beta, rows, d, mu, istd](Node& self) {
            for (int r = 0; r < rows; ++r) {
                const double* xr = x->val.data() + static_cast<size_t>(r) * d;
                const double* gr = self.grad.data() + static_cast<size_t>(r) * d;
                const double is = istd[r];
                const double m = mu[r];
                double sum_dxhat = 0.0;
                double sum_dxhat_xhat = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double xhat = (xr[j] - m) * is;
                    const double dxhat = gr[j] * gamma->val[j];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    if (gamma->needs_grad) gamma->grad[j] += gr[j] * xhat;
                    if (beta->needs_grad) beta->grad[j] += gr[j];
                }
                if (x->needs_grad) {
                    const double inv_d = 1.0 / d;
                    for (int j = 0; j < d; ++j) {
                        const double xhat = (xr[j] - m) * is;
                        const double dxhat = gr[j] * gamma->val[j];
                        x->grad[static_cast<size_t>(r) * d + j] +=
                            is * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
                    }
                }
            }
        };
    return out;
}

Node* softmax_last(Graph& g, Node* x) {
    const int d = last_dim(x);
    const int rows = leading_rows(x);
    Node* out = unary_result(g, x);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x->val.data() + static_cast<size_t>(r) * d;
        double* yr = out->val.data() + static_cast<size_t>(r) * d;
        double mx = xr[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        const double iz = 1.0 / z;
        for (int j = 0; j < d; ++j) yr[j] *= iz;
    }
    if (out->needs_grad)
        out->back = [x, rows, d](Node& self) {
            for (int r = 0; r < rows; ++r) {
                const double* yr = self.val.data() + static_cast<size_t>(r) * d;
                const double* gr = self.grad.data() + static_cast<size_t>(r) * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += gr[j] * yr[j];
                for (int j = 0; j < d; ++j)
                    x->grad[static_cast<size_t>(r) * d + j] += yr[j] * (gr[j] - dot);
            }
        };
    return out;
}

Node* log_softmax_last(Graph& g, Node* x) {
    const int d = last_dim(x);
    const int rows = leading_rows(x);
    Node* out = unary_result(g, x);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x->val.data() + static_cast<size_t>(r) * d;
        double* yr = out->val.data() + static_cast<size_t>(r) * d;
        double mx = xr[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (int j = 0; j < d; ++j) z += std::exp(xr[j] - mx);
        const double lse = mx + std::log(z);
        for (int j = 0; j < d; ++j) yr[j] = xr[j] - lse;
    }
    if (out->needs_grad)
        out->back = [x, rows, d](Node& self) {
            for (int r = 0; r < rows; ++r) {
                const double* yr = self.val.data() + static_cast<size_t>(r) * d;
                const double* gr = self.grad.data() + static_cast<size_t>(r) * d;
                double sum = 0.0;
                for (int j = 0; j < d; ++j) sum += gr[j];
                for (int j = 0; j < d; ++j)
                    x->grad[static_cast<size_t>(r) * d + j] +=
                        gr[j] - std::exp(yr[j]) * sum;
            }
        };
    return out;
}

Node* l2_normalize_last(Graph& g, Node* x) {
    const int d = last_dim(x);
    const int rows = leading_rows(x);
    Node* out = unary_result(g, x);
    std::vector<double> inv_norm(rows);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x->val.data() + static_cast<size_t>(r) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += xr[j] * xr[j];
        const double norm = std::sqrt(s);
        if (!(norm > 1e-300))
            throw std::runtime_error("l2_normalize: zero-norm vector");
        inv_norm[r] = 1.0 / norm;
        double* yr = out->val.data() + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) yr[j] = xr[j] * inv_norm[r];
    }
    if (out->needs_grad)
        out->back = [x, rows, d, inv_norm](Node& self) {
            for (int r = 0; r < rows; ++r) {
                const double* yr = self.val.data() + static_cast<size_t>(r) * d;
                const double* gr = self.grad.data() + static_cast<size_t>(r) * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += gr[j] * yr[j];
                for (int j = 0; j < d; ++j)
                    x->grad[static_cast<size_t>(r) * d + j] +=
                        inv_norm[r] * (gr[j] - yr[j] * dot);
            }
        };
    return out;
}

Node* to_heads(Graph& g, Node* x, int heads) {
    if (x->shape.size() != 3) throw ConfigError("to_heads: expected (n,t,d)");
    const int n = x->shape[0], t = x->shape[1], d = x->shape[2];
    if (d % heads != 0) throw ConfigError("to_heads: heads must divide dim");
    const int dh = d / heads;
    Node* out = op_result(g, {n * heads, t, dh}, {x});
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < heads; ++a)
            for (int tt = 0; tt < t; ++tt)
                for (int j = 0; j < dh; ++j)
                    out->val[((static_cast<size_t>(i) * heads + a) * t + tt) * dh + j] =
                        x->val[(static_cast<size_t>(i) * t + tt) * d + a * dh + j];
    if (out->needs_grad)
        out->back = [x, n, t, d, heads, dh](Node& self) {
            for (int i = 0; i < n; ++i)
                for (int a = 0; a < heads; ++a)
                    for (int tt = 0; tt < t; ++tt)
                        for (int j = 0; j < dh; ++j)
                            x->grad[(static_cast<size_t>(i) * t + tt) * d + a * dh + j] +=
                                self.grad[((static_cast<size_t>(i) * heads + a) * t + tt) * dh + j];
        };
    return out;
}

Node* from_heads(Graph& g, Node* x, int heads) {
    if (x->shape.size() != 3) throw ConfigError("from_heads: expected (n*h,t,dh)");
    const int nh = x->shape[0], t = x->shape[1], dh = x->shape[2];
    if (nh % heads != 0) throw ConfigError("from_heads: batch not divisible by heads");
    const int n = nh / heads;
    const int d = dh * heads;
    Node* out = op_result(g, {n, t, d}, {x});
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < heads; ++a)
            for (int tt = 0; tt < t; ++tt)
                for (int j = 0; j < dh; ++j)
                    out->val[(static_cast<size_t>(i) * t + tt) * d + a * dh + j] =
                        x->val[((static_cast<size_t>(i) * heads + a) * t + tt) * dh + j];
    if (out->needs_grad)
        out->back = [x, n, t, d, heads, dh](Node& self) {
            for (int i = 0; i < n; ++i)
                for (int a = 0; a < heads; ++a)
                    for (int tt = 0; tt < t; ++tt)
                        for (int j = 0; j < dh; ++j)
                            x->grad[((static_cast<size_t>(i) * heads + a) * t + tt) * dh + j] +=
                                self.grad[(static_cast<size_t>(i) * t + tt) * d + a * dh + j];
        };
    return out;
}

Node* slice_last(Graph& g, Node* x, int offset, int size) {
    const int d = last_dim(x);
    if (offset < 0 || size <= 0 || offset + size > d)
        throw ConfigError("slice_last: range out of bounds");
    const int rows = leading_rows(x);
    std::vector<int> shape = x->shape;
    shape.back() = size;
    Node* out = op_result(g, std::move(shape), {x});
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < size; ++j)
            out->val[static_cast<size_t>(r) * size + j] =
                x->val[static_cast<size_t>(r) * d + offset + j];
    if (out->needs_grad)
        out->back = [x, rows, d, offset, size](Node& self) {
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < size; ++j)
                    x->grad[static_cast<size_t>(r) * d + offset + j] +=
                        self.grad[static_cast<size_t>(r) * size + j];
        };
    return out;
}

Node* reshape(Graph& g, Node* x, std::vector<int> shape) {
    if (numel(shape) != x->numel()) throw ConfigError("reshape: element count mismatch");
    Node* out = op_result(g, std::move(shape), {x});
    out->val = x->val;
    if (out->needs_grad)
        out->back = [x](Node& self) {
            for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
        };
    return out;
}

Node* bmm(Graph& g, Node* a, Node* b, bool transpose_b) {
    if (a->shape.size() != 3 || b->shape.size() != 3 || a->shape[0] != b->shape[0])
        throw ConfigError("bmm: expected matching 3-D batches");
    const int B = a->shape[0], m = a->shape[1], k = a->shape[2];
    const int n = transpose_b ? b->shape[1] : b->shape[2];
    const int bk = transpose_b ? b->shape[2] : b->shape[1];
    if (bk != k) throw ConfigError("bmm: inner dims mismatch");
    Node* out = op_result(g, {B, m, n}, {a, b});
    const std::int64_t sa = static_cast<std::int64_t>(m) * k;
    const std::int64_t sb = static_cast<std::int64_t>(b->shape[1]) * b->shape[2];
    const std::int64_t sc = static_cast<std::int64_t>(m) * n;
    for (int i = 0; i < B; ++i)
        gemm(false, transpose_b, m, n, k, 1.0, a->val.data() + i * sa,
             b->val.data() + i * sb, 0.0, out->val.data() + i * sc);
    if (out->needs_grad)
        out->back = [a, b, transpose_b, B, m, n, k, sa, sb, sc](Node& self) {
            for (int i = 0; i < B; ++i) {
                const double* dc = self.grad.data() + i * sc;
                if (a->needs_grad)
                    gemm(false, !transpose_b, m, k, n, 1.0, dc,
                         b->val.data() + i * sb, 1.0, a->grad.data() + i * sa);
                if (b->needs_grad) {
                    if (transpose_b)
                        // dB = dC^T A for C = A B^T
                        gemm(true, false, n, k, m, 1.0, dc, a->val.data() + i * sa,
                             1.0, b->grad.data() + i * sb);
                    else
                        gemm(true, false, k, n, m, 1.0, a->val.data() + i * sa, dc,
                             1.0, b->grad.data() + i * sb);
                }
            }
        };
    return out;
}

Node* matmul_nt_const(Graph& g, Node* a, const Array& b) {
    if (a->shape.size() != 2 || b.shape.size() != 2 || a->shape[1] != b.shape[1])
        throw ConfigError("matmul_nt_const: expected (m,k) x (n,k)");
    const int m = a->shape[0], k = a->shape[1], n = b.shape[0];
    Node* out = op_result(g, {m, n}, {a});
    gemm(false, true, m, n, k, 1.0, a->val.data(), b.v.data(), 0.0, out->val.data());
    if (out->needs_grad) {
        std::vector<double> bval = b.v;
        out->back = [a, bval, m, n, k](Node& self) {
            gemm(false, false, m, k, n, 1.0, self.grad.data(), bval.data(), 1.0,
                 a->grad.data());
        };
    }
    return out;
}

Node* gather_rows(Graph& g, Node* x, std::vector<int> idx) {
    if (x->shape.size() != 2) throw ConfigError("gather_rows: expected (rows, d)");
    const int d = x->shape[1];
    for (int i : idx)
        if (i < 0 || i >= x->shape[0]) throw ConfigError("gather_rows: index out of range");
    Node* out = op_result(g, {static_cast<int>(idx.size()), d}, {x});
    for (size_t q = 0; q < idx.size(); ++q)
        for (int j = 0; j < d; ++j)
            out->val[q * d + j] = x->val[static_cast<size_t>(idx[q]) * d + j];
    if (out->needs_grad)
        out->back = [x, idx, d](Node& self) {
            for (size_t q = 0; q < idx.size(); ++q)
                for (int j = 0; j < d; ++j)
                    x->grad[static_cast<size_t>(idx[q]) * d + j] += self.grad[q * d + j];
        };
    return out;
}

Node* substitute_masked(Graph& g, Node* x, const std::vector<TokenMask>& masks,
                        Node* mask_token) {
    if (x->shape.size() != 3) throw ConfigError("substitute_masked: expected (n,t,d)");
    const int n = x->shape[0], t = x->shape[1], d = x->shape[2];
    if (mask_token->numel() != d)
        throw ConfigError("substitute_masked: mask token dim mismatch");
    if (masks.empty() ||
        (static_cast<int>(masks.size()) != 1 && static_cast<int>(masks.size()) != n))
        throw ConfigError("substitute_masked: need one mask or one per sample");
    for (const auto& m : masks)
        if (m.size() != t)
            throw ConfigError("substitute_masked: mask grid does not match tokens");
    Node* out = op_result(g, x->shape, {x, mask_token});
    std::vector<std::uint8_t> masked(static_cast<size_t>(n) * t);
    for (int i = 0; i < n; ++i) {
        const TokenMask& m = masks[masks.size() == 1 ? 0 : i];
        for (int tt = 0; tt < t; ++tt)
            masked[static_cast<size_t>(i) * t + tt] = m.bits()[tt];
    }
    for (int i = 0; i < n; ++i)
        for (int tt = 0; tt < t; ++tt) {
            double* dst = out->val.data() + (static_cast<size_t>(i) * t + tt) * d;
            if (masked[static_cast<size_t>(i) * t + tt]) {
                for (int j = 0; j < d; ++j) dst[j] = mask_token->val[j];
            } else {
                const double* srcp = x->val.data() + (static_cast<size_t>(i) * t + tt) * d;
                for (int j = 0; j < d; ++j) dst[j] = srcp[j];
            }
        }
    if (out->needs_grad)
        out->back = [x, mask_token, masked, n, t, d](Node& self) {
            for (int i = 0; i < n; ++i)
                for (int tt = 0; tt < t; ++tt) {
                    const double* gsrc =
                        self.grad.data() + (static_cast<size_t>(i) * t + tt) * d;
                    if (masked[static_cast<size_t>(i) * t + tt]) {
                        if (mask_token->needs_grad)
                            for (int j = 0; j < d; ++j) mask_token->grad[j] += gsrc[j];
                    } else if (x->needs_grad) {
                        double* gdst = x->grad.data() + (static_cast<size_t>(i) * t + tt) * d;
                        for (int j = 0; j < d; ++j) gdst[j] += gsrc[j];
                    }
                }
        };
    return out;
}

Node* masked_l1(Graph& g, Node* pred, const Array& target,
                const std::vector<int>& rows) {
    if (pred->shape.size() != 3) throw ConfigError("masked_l1: expected (n,t,d)");
    if (pred->shape != target.shape) throw ConfigError("masked_l1: target shape mismatch");
    if (rows.empty()) throw ConfigError("masked_l1: empty masked index set");
    const int d = pred->shape[2];
    const int total_rows = pred->shape[0] * pred->shape[1];
    for (int r : rows)
        if (r < 0 || r >= total_rows) throw ConfigError("masked_l1: row out of range");
    Node* out = op_result(g, {1}, {pred});
    const double inv = 1.0 / (static_cast<double>(rows.size()) * d);
    double acc = 0.0;
    for (int r : rows) {
        const double* p = pred->val.data() + static_cast<size_t>(r) * d;
        const double* tgt = target.v.data() + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) acc += std::abs(p[j] - tgt[j]);
    }
    out->val[0] = acc * inv;
    if (out->needs_grad) {
        std::vector<int> rows_copy = rows;
        std::vector<double> tval = target.v;
        out->back = [pred, rows_copy, tval, d, inv](Node& self) {
            const double go = self.grad[0] * inv;
            for (int r : rows_copy) {
                const double* p = pred->val.data() + static_cast<size_t>(r) * d;
                const double* tgt = tval.data() + static_cast<size_t>(r) * d;
                double* gp = pred->grad.data() + static_cast<size_t>(r) * d;
                for (int j = 0; j < d; ++j) {
                    const double diff = p[j] - tgt[j];
                    if (diff > 0.0)
                        gp[j] += go;
                    else if (diff < 0.0)
                        gp[j] -= go;
                }
            }
        };
    }
    return out;
}

Node* nll_positive_sum(Graph& g, Node* logp, std::vector<int> positive) {
    if (logp->shape.size() != 2) throw ConfigError("nll_positive_sum: expected (q,k)");
    const int q = logp->shape[0], k = logp->shape[1];
    if (static_cast<int>(positive.size()) != q)
        throw ConfigError("nll_positive_sum: one positive per query required");
    for (int p : positive)
        if (p < 0 || p >= k) throw ConfigError("nll_positive_sum: positive out of range");
    Node* out = op_result(g, {1}, {logp});
    double acc = 0.0;
    for (int r = 0; r < q; ++r) acc -= logp->val[static_cast<size_t>(r) * k + positive[r]];
    out->val[0] = acc;
    if (out->needs_grad)
        out->back = [logp, positive, k](Node& self) {
            for (size_t r = 0; r < positive.size(); ++r)
                logp->grad[r * k + positive[r]] -= self.grad[0];
        };
    return out;
}

Node* sum_scaled(Graph& g, const std::vector<Node*>& terms, double s) {
    if (terms.empty()) throw ConfigError("sum_scaled: no terms");
    for (Node* t : terms)
        if (t->numel() != 1) throw ConfigError("sum_scaled: terms must be scalar");
    Node* out = g.make({1});
    bool need = false;
    for (Node* t : terms) need = need || t->needs_grad;
    out->needs_grad = g.recording() && need;
    if (out->needs_grad) out->grad.assign(1, 0.0);
    double acc = 0.0;
    for (Node* t : terms) acc += t->val[0];
    out->val[0] = acc * s;
    if (out->needs_grad) {
        std::vector<Node*> terms_copy = terms;
        out->back = [terms_copy, s](Node& self) {
            for (Node* t : terms_copy)
                if (t->needs_grad) t->grad[0] += self.grad[0] * s;
        };
    }
    return out;
}

Node* mean_all(Graph& g, Node* x) {
    Node* out = op_result(g, {1}, {x});
    double acc = 0.0;
    for (double v : x->val) acc += v;
    out->val[0] = acc / x->numel();
    if (out->needs_grad)
        out->back = [x](Node& self) {
            const double go = self.grad[0] / x->numel();
            for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += go;
        };
    return out;
}

}  // namespace symmim::ad
