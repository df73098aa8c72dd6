#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dirlearn/tensor.hpp"

namespace dirlearn::ag {

// Reverse-mode automatic differentiation over Tensor values. Nodes form a DAG;
// each op computes its value eagerly and, when any input requires gradients,
// installs a closure that scatters the incoming gradient to its inputs.

struct Node {
    Tensor val;
    Tensor grad;  // allocated by backward() for nodes that require grad
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
    bool requires_grad = false;
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& val() const { return n_->val; }
    const Tensor& grad() const { return n_->grad; }
    bool requires_grad() const { return n_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return n_; }

    const std::vector<int>& shape() const { return n_->val.shape(); }
    double item() const { return n_->val.item(); }

private:
    std::shared_ptr<Node> n_;
};

inline Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return Var(n);
}

inline Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

inline Var leaf(const Tensor& t, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val = t;
    n->requires_grad = requires_grad;
    return Var(n);
}

namespace detail {

inline Var make_op(Tensor val, std::vector<Var> inputs, std::function<void(Node&)> bp) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    bool rg = false;
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) {
        rg = rg || in.node()->requires_grad;
        n->parents.push_back(in.node());
    }
    n->requires_grad = rg;
    if (rg) n->backprop = std::move(bp);
    return Var(n);
}

inline bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a.val(), b.val(), "add");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
    return detail::make_op(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t p = 0; p < 2; ++p)
            if (detail::wants(self, p)) {
                Tensor& g = self.parents[p]->grad;
                for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
            }
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a.val(), b.val(), "sub");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b.val()[i];
    return detail::make_op(std::move(out), {a, b}, [](Node& self) {
        if (detail::wants(self, 0)) {
            Tensor& g = self.parents[0]->grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (detail::wants(self, 1)) {
            Tensor& g = self.parents[1]->grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a.val(), b.val(), "mul");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b.val()[i];
    return detail::make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& av = self.parents[0]->val;
        const Tensor& bv = self.parents[1]->val;
        if (detail::wants(self, 0)) {
            Tensor& g = self.parents[0]->grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bv[i];
        }
        if (detail::wants(self, 1)) {
            Tensor& g = self.parents[1]->grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * av[i];
        }
    });
}

inline Var div(const Var& a, const Var& b) {
    check_same_shape(a.val(), b.val(), "div");
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= b.val()[i];
    return detail::make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& av = self.parents[0]->val;
        const Tensor& bv = self.parents[1]->val;
        if (detail::wants(self, 0)) {
            Tensor& g = self.parents[0]->grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] / bv[i];
        }
        if (detail::wants(self, 1)) {
            Tensor& g = self.parents[1]->grad;
            for (std::int64_t i = 0; i < g.numel(); ++i)
                g[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return detail::make_op(std::move(out), {a}, [s](Node& self) {
        if (!detail::wants(self, 0)) return;
        Tensor& g = self.parents[0]->grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
    });
}

inline Var add_const(const Var& a, double c) {
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    return detail::make_op(std::move(out), {a}, [](Node& self) {
        if (!detail::wants(self, 0)) return;
        Tensor& g = self.parents[0]->grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

namespace detail {

template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = f(out[i]);
    return make_op(std::move(out), {a}, [df](Node& self) {
        if (!wants(self, 0)) return;
        const Tensor& x = self.parents[0]->val;
        const Tensor& y = self.val;
        Tensor& g = self.parents[0]->grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * df(x[i], y[i]);
    });
}

}  // namespace detail

inline double sigmoid_s(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus_s(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline Var exp_(const Var& a) {
    return detail::unary(a, [](double x) { return std::exp(x); },
                         [](double, double y) { return y; });
}

inline Var log_(const Var& a) {
    return detail::unary(a, [](double x) { return std::log(x); },
                         [](double x, double) { return 1.0 / x; });
}

inline Var square(const Var& a) {
    return detail::unary(a, [](double x) { return x * x; },
                         [](double x, double) { return 2.0 * x; });
}

inline Var abs_(const Var& a) {
    return detail::unary(a, [](double x) { return std::fabs(x); },
                         [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var sigmoid(const Var& a) {
    return detail::unary(a, [](double x) { return sigmoid_s(x); },
                         [](double, double y) { return y * (1.0 - y); });
}

inline Var softplus(const Var& a) {
    return detail::unary(a, [](double x) { return softplus_s(x); },
                         [](double x, double) { return sigmoid_s(x); });
}

// x * sigmoid(x); smooth everywhere, which keeps finite-difference gradient
// checks clean where relu kinks would not be.
inline Var silu(const Var& a) {
    return detail::unary(a, [](double x) { return x * sigmoid_s(x); },
                         [](double x, double) {
                             const double s = sigmoid_s(x);
                             return s * (1.0 + x * (1.0 - s));
                         });
}

inline Var clamp(const Var& a, double lo, double hi) {
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(std::max(out[i], lo), hi);
    return detail::make_op(std::move(out), {a}, [lo, hi](Node& self) {
        if (!detail::wants(self, 0)) return;
        const Tensor& x = self.parents[0]->val;
        Tensor& g = self.parents[0]->grad;
        for (std::int64_t i = 0; i < g.numel(); ++i)
            if (x[i] >= lo && x[i] <= hi) g[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions and shape ops
// ---------------------------------------------------------------------------

inline Var sum(const Var& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.val().numel(); ++i) s += a.val()[i];
    return detail::make_op(Tensor::scalar(s), {a}, [](Node& self) {
        if (!detail::wants(self, 0)) return;
        Tensor& g = self.parents[0]->grad;
        const double gy = self.grad[0];
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += gy;
    });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.val().numel())); }

inline Var reshape(const Var& a, std::vector<int> shape) {
    if (Tensor::count(shape) != a.val().numel())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out(shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.val()[i];
    return detail::make_op(std::move(out), {a}, [](Node& self) {
        if (!detail::wants(self, 0)) return;
        Tensor& g = self.parents[0]->grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

// Global average pool (N,C,H,W) -> (N,C).
inline Var gap(const Var& a) {
    const Tensor& x = a.val();
    if (x.dim() != 4) throw std::invalid_argument("gap: expected NCHW");
    const int N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    Tensor out({N, C});
    const double inv = 1.0 / (static_cast<double>(H) * W);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            const double* p = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
            for (int i = 0; i < H * W; ++i) s += p[i];
            out[static_cast<std::int64_t>(n) * C + c] = s * inv;
        }
    return detail::make_op(std::move(out), {a}, [N, C, H, W, inv](Node& self) {
        if (!detail::wants(self, 0)) return;
        Tensor& g = self.parents[0]->grad;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const double gy = self.grad[static_cast<std::int64_t>(n) * C + c] * inv;
                double* p = g.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
                for (int i = 0; i < H * W; ++i) p[i] += gy;
            }
    });
}

inline Var concat_cols(const Var& a, const Var& b) {
    const Tensor& x = a.val();
    const Tensor& y = b.val();
    if (x.dim() != 2 || y.dim() != 2 || x.size(0) != y.size(0))
        throw std::invalid_argument("concat_cols: expected (N,F) with equal N");
    const int N = x.size(0), F1 = x.size(1), F2 = y.size(1);
    Tensor out({N, F1 + F2});
    for (int n = 0; n < N; ++n) {
        for (int i = 0; i < F1; ++i) out[static_cast<std::int64_t>(n) * (F1 + F2) + i] = x[static_cast<std::int64_t>(n) * F1 + i];
        for (int i = 0; i < F2; ++i) out[static_cast<std::int64_t>(n) * (F1 + F2) + F1 + i] = y[static_cast<std::int64_t>(n) * F2 + i];
    }
    return detail::make_op(std::move(out), {a, b}, [N, F1, F2](Node& self) {
        for (int n = 0; n < N; ++n) {
            if (detail::wants(self, 0)) {
                Tensor& g = self.parents[0]->grad;
                for (int i = 0; i < F1; ++i)
                    g[static_cast<std::int64_t>(n) * F1 + i] += self.grad[static_cast<std::int64_t>(n) * (F1 + F2) + i];
            }
            if (detail::wants(self, 1)) {
                Tensor& g = self.parents[1]->grad;
                for (int i = 0; i < F2; ++i)
                    g[static_cast<std::int64_t>(n) * F2 + i] += self.grad[static_cast<std::int64_t>(n) * (F1 + F2) + F1 + i];
            }
        }
    });
}

inline Var concat_channels(const Var& a, const Var& b) {
    const Tensor& x = a.val();
    const Tensor& y = b.val();
    if (x.dim() != 4 || y.dim() != 4 || x.size(0) != y.size(0) || x.size(2) != y.size(2) ||
        x.size(3) != y.size(3))
        throw std::invalid_argument("concat_channels: incompatible shapes");
    const int N = x.size(0), C1 = x.size(1), C2 = y.size(1), H = x.size(2), W = x.size(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor out({N, C1 + C2, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy_n(x.data() + n * C1 * plane, C1 * plane, out.data() + static_cast<std::int64_t>(n) * (C1 + C2) * plane);
        std::copy_n(y.data() + n * C2 * plane, C2 * plane,
                    out.data() + static_cast<std::int64_t>(n) * (C1 + C2) * plane + C1 * plane);
    }
    return detail::make_op(std::move(out), {a, b}, [N, C1, C2, plane](Node& self) {
        for (int n = 0; n < N; ++n) {
            const double* go = self.grad.data() + static_cast<std::int64_t>(n) * (C1 + C2) * plane;
            if (detail::wants(self, 0)) {
                double* g = self.parents[0]->grad.data() + n * C1 * plane;
                for (std::int64_t i = 0; i < C1 * plane; ++i) g[i] += go[i];
            }
            if (detail::wants(self, 1)) {
                double* g = self.parents[1]->grad.data() + n * C2 * plane;
                for (std::int64_t i = 0; i < C2 * plane; ++i) g[i] += go[C1 * plane + i];
            }
        }
    });
}

// Multiply every channel of f (N,C,H,W) by a one-channel map m (N,1,H,W).
inline Var scale_by_map(const Var& f, const Var& m) {
    const Tensor& x = f.val();
    const Tensor& a = m.val();
    if (x.dim() != 4 || a.dim() != 4 || a.size(1) != 1 || x.size(0) != a.size(0) ||
        x.size(2) != a.size(2) || x.size(3) != a.size(3))
        throw std::invalid_argument("scale_by_map: incompatible shapes");
    const int N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor out = x;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            double* po = out.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
            const double* pm = a.data() + n * plane;
            for (std::int64_t i = 0; i < plane; ++i) po[i] *= pm[i];
        }
    return detail::make_op(std::move(out), {f, m}, [N, C, plane](Node& self) {
        const Tensor& x = self.parents[0]->val;
        const Tensor& a = self.parents[1]->val;
        for (int n = 0; n < N; ++n) {
            const double* pm = a.data() + n * plane;
            for (int c = 0; c < C; ++c) {
                const double* go = self.grad.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
                const double* px = x.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
                if (detail::wants(self, 0)) {
                    double* gf = self.parents[0]->grad.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) gf[i] += go[i] * pm[i];
                }
                if (detail::wants(self, 1)) {
                    double* gm = self.parents[1]->grad.data() + n * plane;
                    for (std::int64_t i = 0; i < plane; ++i) gm[i] += go[i] * px[i];
                }
            }
        }
    });
}

// Reorder the batch dimension: out[i] = x[perm[i]].
inline Var permute_batch(const Var& a, std::vector<int> perm) {
    const Tensor& x = a.val();
    const int N = x.size(0);
    if (static_cast<int>(perm.size()) != N) throw std::invalid_argument("permute_batch: perm size");
    const std::int64_t stride = x.numel() / N;
    Tensor out(x.shape());
    for (int i = 0; i < N; ++i)
        std::copy_n(x.data() + perm[i] * stride, stride, out.data() + i * stride);
    return detail::make_op(std::move(out), {a}, [perm, stride, N](Node& self) {
        if (!detail::wants(self, 0)) return;
        Tensor& g = self.parents[0]->grad;
        for (int i = 0; i < N; ++i) {
            double* gp = g.data() + perm[i] * stride;
            const double* go = self.grad.data() + i * stride;
            for (std::int64_t j = 0; j < stride; ++j) gp[j] += go[j];
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM), upsampling, linear
// ---------------------------------------------------------------------------

namespace detail {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

inline void im2col(const double* im, int C, int H, int W, int kh, int kw, int stride, int pad,
                   int Ho, int Wo, double* cols) {
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                double* row = cols + ((static_cast<std::int64_t>(c) * kh + ki) * kw + kj) *
                                         (static_cast<std::int64_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    double* dst = row + static_cast<std::int64_t>(oy) * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + Wo, 0.0);
                        continue;
                    }
                    const double* src = im + (static_cast<std::int64_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        dst[ox] = (ix < 0 || ix >= W) ? 0.0 : src[ix];
                    }
                }
            }
}

inline void col2im(const double* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
                   int Ho, int Wo, double* im) {
    for (int c = 0; c < C; ++c)
        for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
                const double* row = cols + ((static_cast<std::int64_t>(c) * kh + ki) * kw + kj) *
                                               (static_cast<std::int64_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= H) continue;
                    double* dst = im + (static_cast<std::int64_t>(c) * H + iy) * W;
                    const double* src = row + static_cast<std::int64_t>(oy) * Wo;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                }
            }
}

}  // namespace detail

// 2-D convolution, x (N,C,H,W), w (O,C,kh,kw), b (O). Zero padding.
inline Var conv2d(const Var& xv, const Var& wv, const Var& bv, int stride, int pad) {
    const Tensor& x = xv.val();
    const Tensor& w = wv.val();
    const Tensor& b = bv.val();
    if (x.dim() != 4 || w.dim() != 4) throw std::invalid_argument("conv2d: expected 4-D x and w");
    if (x.size(1) != w.size(1)) throw std::invalid_argument("conv2d: channel mismatch");
    if (b.numel() != w.size(0)) throw std::invalid_argument("conv2d: bias size");
    const int N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    const int O = w.size(0), kh = w.size(2), kw = w.size(3);
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");
    const std::int64_t ckk = static_cast<std::int64_t>(C) * kh * kw;
    const std::int64_t owo = static_cast<std::int64_t>(Ho) * Wo;

    Tensor out({N, O, Ho, Wo});
    std::vector<double> cols(static_cast<std::size_t>(ckk * owo));
    detail::CMapRM Wm(w.data(), O, ckk);
    for (int n = 0; n < N; ++n) {
        detail::im2col(x.data() + static_cast<std::int64_t>(n) * C * H * W, C, H, W, kh, kw, stride,
                       pad, Ho, Wo, cols.data());
        detail::MapRM Om(out.data() + static_cast<std::int64_t>(n) * O * owo, O, owo);
        detail::CMapRM Cm(cols.data(), ckk, owo);
        Om.noalias() = Wm * Cm;
        for (int o = 0; o < O; ++o) Om.row(o).array() += b[o];
    }

    return detail::make_op(std::move(out), {xv, wv, bv},
                           [N, C, H, W, O, kh, kw, stride, pad, Ho, Wo, ckk, owo](Node& self) {
        const Tensor& x = self.parents[0]->val;
        const Tensor& w = self.parents[1]->val;
        std::vector<double> cols(static_cast<std::size_t>(ckk * owo));
        std::vector<double> dcols;
        const bool want_x = detail::wants(self, 0);
        const bool want_w = detail::wants(self, 1);
        const bool want_b = detail::wants(self, 2);
        if (want_x) dcols.resize(static_cast<std::size_t>(ckk * owo));
        detail::CMapRM Wm(w.data(), O, ckk);
        for (int n = 0; n < N; ++n) {
            detail::CMapRM dOm(self.grad.data() + static_cast<std::int64_t>(n) * O * owo, O, owo);
            if (want_w || want_x)
                detail::im2col(x.data() + static_cast<std::int64_t>(n) * C * H * W, C, H, W, kh, kw,
                               stride, pad, Ho, Wo, cols.data());
            if (want_w) {
                detail::MapRM dWm(self.parents[1]->grad.data(), O, ckk);
                detail::CMapRM Cm(cols.data(), ckk, owo);
                dWm.noalias() += dOm * Cm.transpose();
            }
            if (want_b) {
                Tensor& db = self.parents[2]->grad;
                for (int o = 0; o < O; ++o) db[o] += dOm.row(o).sum();
            }
            if (want_x) {
                detail::MapRM dCm(dcols.data(), ckk, owo);
                dCm.noalias() = Wm.transpose() * dOm;
                detail::col2im(dcols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                               self.parents[0]->grad.data() + static_cast<std::int64_t>(n) * C * H * W);
            }
        }
    });
}

// Nearest-neighbour 2x upsampling.
inline Var upsample2x(const Var& a) {
    const Tensor& x = a.val();
    if (x.dim() != 4) throw std::invalid_argument("upsample2x: expected NCHW");
    const int N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
    Tensor out({N, C, 2 * H, 2 * W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* src = x.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
            double* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * 4 * H * W;
            for (int y = 0; y < 2 * H; ++y)
                for (int xw = 0; xw < 2 * W; ++xw)
                    dst[static_cast<std::int64_t>(y) * 2 * W + xw] = src[static_cast<std::int64_t>(y / 2) * W + xw / 2];
        }
    return detail::make_op(std::move(out), {a}, [N, C, H, W](Node& self) {
        if (!detail::wants(self, 0)) return;
        Tensor& g = self.parents[0]->grad;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                double* gs = g.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
                const double* go = self.grad.data() + (static_cast<std::int64_t>(n) * C + c) * 4 * H * W;
                for (int y = 0; y < 2 * H; ++y)
                    for (int xw = 0; xw < 2 * W; ++xw)
                        gs[static_cast<std::int64_t>(y / 2) * W + xw / 2] += go[static_cast<std::int64_t>(y) * 2 * W + xw];
            }
    });
}

// Fully connected layer: x (N,F), w (O,F), b (O) -> (N,O).
inline Var linear(const Var& xv, const Var& wv, const Var& bv) {
    const Tensor& x = xv.val();
    const Tensor& w = wv.val();
    const Tensor& b = bv.val();
    if (x.dim() != 2 || w.dim() != 2 || x.size(1) != w.size(1))
        throw std::invalid_argument("linear: shape mismatch");
    const int N = x.size(0), F = x.size(1), O = w.size(0);
    Tensor out({N, O});
    detail::CMapRM Xm(x.data(), N, F), Wm(w.data(), O, F);
    detail::MapRM Om(out.data(), N, O);
    Om.noalias() = Xm * Wm.transpose();
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o) out[static_cast<std::int64_t>(n) * O + o] += b[o];
    return detail::make_op(std::move(out), {xv, wv, bv}, [N, F, O](Node& self) {
        const Tensor& x = self.parents[0]->val;
        const Tensor& w = self.parents[1]->val;
        detail::CMapRM dOm(self.grad.data(), N, O);
        if (detail::wants(self, 0)) {
            detail::MapRM dXm(self.parents[0]->grad.data(), N, F);
            detail::CMapRM Wm(w.data(), O, F);
            dXm.noalias() += dOm * Wm;
        }
        if (detail::wants(self, 1)) {
            detail::MapRM dWm(self.parents[1]->grad.data(), O, F);
            detail::CMapRM Xm(x.data(), N, F);
            dWm.noalias() += dOm.transpose() * Xm;
        }
        if (detail::wants(self, 2)) {
            Tensor& db = self.parents[2]->grad;
            for (int o = 0; o < O; ++o) db[o] += dOm.col(o).sum();
        }
    });
}

// Grouped convolution with per-sample runtime kernels: f (N,C,H,W) convolved
// with kern (N,K,k,k); channel c uses kernel group c/(C/K). Stride 1, same
// padding. Both inputs participate in the gradient.
inline Var adaptive_group_conv(const Var& fv, const Var& kv) {
    const Tensor& f = fv.val();
    const Tensor& k = kv.val();
    if (f.dim() != 4 || k.dim() != 4 || f.size(0) != k.size(0))
        throw std::invalid_argument("adaptive_group_conv: incompatible shapes");
    if (k.size(2) != k.size(3)) throw std::invalid_argument("adaptive_group_conv: square kernels only");
    const int N = f.size(0), C = f.size(1), H = f.size(2), W = f.size(3);
    const int K = k.size(1), ks = k.size(2), pad = ks / 2;
    if (C % K != 0) throw std::invalid_argument("adaptive_group_conv: K must divide C");
    const int gw = C / K;

    Tensor out({N, C, H, W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* src = f.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
            const double* kk = k.data() + (static_cast<std::int64_t>(n) * K + c / gw) * ks * ks;
            double* dst = out.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double s = 0.0;
                    for (int ki = 0; ki < ks; ++ki) {
                        const int iy = y + ki - pad;
                        if (iy < 0 || iy >= H) continue;
                        for (int kj = 0; kj < ks; ++kj) {
                            const int ix = x + kj - pad;
                            if (ix < 0 || ix >= W) continue;
                            s += src[static_cast<std::int64_t>(iy) * W + ix] * kk[ki * ks + kj];
                        }
                    }
                    dst[static_cast<std::int64_t>(y) * W + x] = s;
                }
        }

    return detail::make_op(std::move(out), {fv, kv}, [N, C, H, W, K, ks, pad, gw](Node& self) {
        const Tensor& f = self.parents[0]->val;
        const Tensor& k = self.parents[1]->val;
        const bool want_f = detail::wants(self, 0);
        const bool want_k = detail::wants(self, 1);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * H * W;
                const std::int64_t koff = (static_cast<std::int64_t>(n) * K + c / gw) * ks * ks;
                const double* go = self.grad.data() + off;
                const double* src = f.data() + off;
                const double* kk = k.data() + koff;
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        const double gy = go[static_cast<std::int64_t>(y) * W + x];
                        if (gy == 0.0) continue;
                        for (int ki = 0; ki < ks; ++ki) {
                            const int iy = y + ki - pad;
                            if (iy < 0 || iy >= H) continue;
                            for (int kj = 0; kj < ks; ++kj) {
                                const int ix = x + kj - pad;
                                if (ix < 0 || ix >= W) continue;
                                if (want_f)
                                    self.parents[0]->grad.data()[off + static_cast<std::int64_t>(iy) * W + ix] +=
                                        gy * kk[ki * ks + kj];
                                if (want_k)
                                    self.parents[1]->grad.data()[koff + ki * ks + kj] +=
                                        gy * src[static_cast<std::int64_t>(iy) * W + ix];
                            }
                        }
                    }
            }
    });
}

// Mean cross-entropy over the batch from raw logits (N,K).
inline Var cross_entropy_mean(const Var& logits, std::vector<int> labels) {
    const Tensor& x = logits.val();
    if (x.dim() != 2) throw std::invalid_argument("cross_entropy_mean: expected (N,K)");
    const int N = x.size(0), K = x.size(1);
    if (static_cast<int>(labels.size()) != N)
        throw std::invalid_argument("cross_entropy_mean: label count");
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        const double* row = x.data() + static_cast<std::int64_t>(n) * K;
        double m = row[0];
        for (int j = 1; j < K; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (int j = 0; j < K; ++j) s += std::exp(row[j] - m);
        loss += m + std::log(s) - row[labels[static_cast<std::size_t>(n)]];
    }
    loss /= N;
    return detail::make_op(Tensor::scalar(loss), {logits},
                           [labels = std::move(labels), N, K](Node& self) {
        if (!detail::wants(self, 0)) return;
        const Tensor& x = self.parents[0]->val;
        Tensor& g = self.parents[0]->grad;
        const double gy = self.grad[0] / N;
        for (int n = 0; n < N; ++n) {
            const double* row = x.data() + static_cast<std::int64_t>(n) * K;
            double m = row[0];
            for (int j = 1; j < K; ++j) m = std::max(m, row[j]);
            double s = 0.0;
            for (int j = 0; j < K; ++j) s += std::exp(row[j] - m);
            for (int j = 0; j < K; ++j) {
                double p = std::exp(row[j] - m) / s;
                g[static_cast<std::int64_t>(n) * K + j] +=
                    gy * (p - (j == labels[static_cast<std::size_t>(n)] ? 1.0 : 0.0));
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

inline void backward(const Var& root) {
    if (root.val().numel() != 1) throw std::logic_error("backward: root must be scalar");
    if (!root.node()->requires_grad) return;

    // Post-order DFS; reversed afterwards so consumers run before producers.
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        bool descended = false;
        while (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (descended) continue;
        topo.push_back(node);
        stack.pop_back();
    }

    for (Node* n : topo) n->grad = Tensor::zeros(n->val.shape());
    root.node()->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

}  // namespace dirlearn::ag
