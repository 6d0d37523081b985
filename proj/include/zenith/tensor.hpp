#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "zenith/common.hpp"
#include "zenith/gemm.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Dense f64 tensor with reverse-mode autodiff. A Tensor is a handle to a
// graph node; ops record parent links and a local-gradient closure, and
// backward() replays the records in reverse topological order. Storage is
// row-major and shared between reshape views, so reshape/flatten never
// copies or computes.
// ---------------------------------------------------------------------------

struct TensorNode {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backfn;

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

    double* grad_ptr() {
        if (grad.size() != static_cast<std::size_t>(numel())) grad.assign(numel(), 0.0);
        return grad.data();
    }
};

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

// Scoped forward-only mode: ops run but record nothing.
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return make(std::move(shape), 0.0, requires_grad);
    }

    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false) {
        return make(std::move(shape), value, requires_grad);
    }

    static Tensor scalar(double value) {
        Tensor t = make({1}, value, false);
        return t;
    }

    static Tensor from_data(std::vector<int> shape, std::vector<double> values, bool requires_grad = false) {
        Tensor t;
        t.node = std::make_shared<TensorNode>();
        t.node->shape = std::move(shape);
        t.node->data = std::make_shared<std::vector<double>>(std::move(values));
        t.node->requires_grad = requires_grad;
        if (t.numel() != static_cast<std::int64_t>(t.node->data->size()))
            throw config_error("tensor: data length does not match shape");
        return t;
    }

    bool defined() const { return node != nullptr; }
    const std::vector<int>& shape() const { return node->shape; }
    int ndim() const { return static_cast<int>(node->shape.size()); }
    int dim(int i) const { return node->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return node->numel(); }

    double* data() { return node->data->data(); }
    const double* data() const { return node->data->data(); }
    const void* storage_ptr() const { return static_cast<const void*>(node->data.get()); }

    bool requires_grad() const { return node->requires_grad; }

    const std::vector<double>& grad() const { return node->grad; }
    double* grad_ptr() { return node->grad_ptr(); }

    void zero_grad() { node->grad.assign(node->numel(), 0.0); }

    double item() const {
        if (numel() != 1) throw input_error("item: tensor is not scalar");
        return (*node->data)[0];
    }

    // Metadata-only view: shares the underlying storage.
    Tensor reshape(std::vector<int> new_shape) const {
        std::int64_t n = 1;
        for (int d : new_shape) n *= d;
        if (n != numel()) throw config_error("reshape: element count mismatch");
        Tensor out;
        out.node = std::make_shared<TensorNode>();
        out.node->shape = std::move(new_shape);
        out.node->data = node->data;
        if (grad_mode() && node->requires_grad) {
            out.node->requires_grad = true;
            out.node->parents = {node};
            TensorNode* on = out.node.get();
            auto pn = node;
            out.node->backfn = [on, pn]() {
                double* pg = pn->grad_ptr();
                const double* g = on->grad_ptr();
                const std::int64_t n2 = pn->numel();
                for (std::int64_t i = 0; i < n2; ++i) pg[i] += g[i];
            };
        }
        return out;
    }

    std::shared_ptr<TensorNode> node;

  private:
    static Tensor make(std::vector<int> shape, double fill, bool requires_grad) {
        Tensor t;
        t.node = std::make_shared<TensorNode>();
        t.node->shape = std::move(shape);
        std::int64_t n = t.node->numel();
        t.node->data = std::make_shared<std::vector<double>>(n, fill);
        t.node->requires_grad = requires_grad;
        return t;
    }
};

inline Tensor rand_uniform(std::vector<int> shape, Rng& rng, double bound, bool requires_grad) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    double* d = t.data();
    for (std::int64_t i = 0; i < t.numel(); ++i) d[i] = rng_uniform(rng, -bound, bound);
    return t;
}

// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))
inline Tensor xavier_uniform(std::vector<int> shape, Rng& rng, int fan_in, int fan_out, bool requires_grad) {
    return rand_uniform(std::move(shape), rng, std::sqrt(6.0 / (fan_in + fan_out)), requires_grad);
}

namespace detail {

inline bool wants_grad(std::initializer_list<const Tensor*> inputs) {
    if (!grad_mode()) return false;
    for (const Tensor* t : inputs)
        if (t->node->requires_grad) return true;
    return false;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) throw config_error(std::string(op) + ": shape mismatch");
}

inline std::int64_t rows_before_lastdim(const Tensor& t) {
    return t.numel() / t.dim(t.ndim() - 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (detail::wants_grad({&a, &b})) {
        out.node->requires_grad = true;
        out.node->parents = {a.node, b.node};
        TensorNode* on = out.node.get();
        auto an = a.node, bn = b.node;
        out.node->backfn = [on, an, bn, n]() {
            const double* g = on->grad_ptr();
            if (an->requires_grad) {
                double* ga = an->grad_ptr();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                double* gb = bn->grad_ptr();
                for (std::int64_t i = 0; i < n; ++i) gb[i] += g[i];
            }
        };
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    if (detail::wants_grad({&a, &b})) {
        out.node->requires_grad = true;
        out.node->parents = {a.node, b.node};
        TensorNode* on = out.node.get();
        auto an = a.node, bn = b.node;
        out.node->backfn = [on, an, bn, n]() {
            const double* g = on->grad_ptr();
            if (an->requires_grad) {
                double* ga = an->grad_ptr();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                double* gb = bn->grad_ptr();
                for (std::int64_t i = 0; i < n; ++i) gb[i] -= g[i];
            }
        };
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (detail::wants_grad({&a, &b})) {
        out.node->requires_grad = true;
        out.node->parents = {a.node, b.node};
        TensorNode* on = out.node.get();
        auto an = a.node, bn = b.node;
        out.node->backfn = [on, an, bn, n]() {
            const double* g = on->grad_ptr();
            const double* pa2 = an->data->data();
            const double* pb2 = bn->data->data();
            if (an->requires_grad) {
                double* ga = an->grad_ptr();
                for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
            }
            if (bn->requires_grad) {
                double* gb = bn->grad_ptr();
                for (std::int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
            }
        };
    }
    return out;
}

inline Tensor scalar_mul(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * s;
    if (detail::wants_grad({&a})) {
        out.node->requires_grad = true;
        out.node->parents = {a.node};
        TensorNode* on = out.node.get();
        auto an = a.node;
        out.node->backfn = [on, an, s, n]() {
            const double* g = on->grad_ptr();
            double* ga = an->grad_ptr();
            for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * s;
        };
    }
    return out;
}

// x[..., D] + v[D], v broadcast over leading axes
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    const int d = x.dim(x.ndim() - 1);
    if (v.ndim() != 1 || v.dim(0) != d) throw config_error("add_rowvec: vector length mismatch");
    const std::int64_t rows = detail::rows_before_lastdim(x);
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    const double* pv = v.data();
    double* po = out.data();
    for (std::int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) po[r * d + j] = px[r * d + j] + pv[j];
    if (detail::wants_grad({&x, &v})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node, v.node};
        TensorNode* on = out.node.get();
        auto xn = x.node, vn = v.node;
        out.node->backfn = [on, xn, vn, rows, d]() {
            const double* g = on->grad_ptr();
            if (xn->requires_grad) {
                double* gx = xn->grad_ptr();
                const std::int64_t n = rows * d;
                for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i];
            }
            if (vn->requires_grad) {
                double* gv = vn->grad_ptr();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (int j = 0; j < d; ++j) gv[j] += g[r * d + j];
            }
        };
    }
    return out;
}

inline Tensor swish(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const double s = 1.0 / (1.0 + std::exp(-px[i]));
        po[i] = px[i] * s;
    }
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        out.node->backfn = [on, xn, n]() {
            const double* g = on->grad_ptr();
            const double* px2 = xn->data->data();
            double* gx = xn->grad_ptr();
            for (std::int64_t i = 0; i < n; ++i) {
                const double s = 1.0 / (1.0 + std::exp(-px2[i]));
                gx[i] += g[i] * (s * (1.0 + px2[i] * (1.0 - s)));
            }
        };
    }
    return out;
}

inline Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = 1.0 / (1.0 + std::exp(-px[i]));
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        auto od = out.node->data;
        out.node->backfn = [on, xn, od, n]() {
            const double* g = on->grad_ptr();
            const double* y = od->data();
            double* gx = xn->grad_ptr();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        };
    }
    return out;
}

inline Tensor square(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] * px[i];
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        out.node->backfn = [on, xn, n]() {
            const double* g = on->grad_ptr();
            const double* px2 = xn->data->data();
            double* gx = xn->grad_ptr();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += 2.0 * px2[i] * g[i];
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw config_error("matmul: expects 2-d operands");
    if (a.dim(1) != b.dim(0))
        throw config_error("matmul: inner dimensions " + format_int(a.dim(1)) + " and " +
                           format_int(b.dim(0)) + " do not match");
    const int m = a.dim(0), n = a.dim(1), p = b.dim(1);
    Tensor out = Tensor::zeros({m, p});
    gemm_nn(a.data(), n, b.data(), p, out.data(), p, m, n, p, false);
    if (detail::wants_grad({&a, &b})) {
        out.node->requires_grad = true;
        out.node->parents = {a.node, b.node};
        TensorNode* on = out.node.get();
        auto an = a.node, bn = b.node;
        out.node->backfn = [on, an, bn, m, n, p]() {
            const double* g = on->grad_ptr();
            if (an->requires_grad)
                gemm_nt(g, p, bn->data->data(), p, an->grad_ptr(), n, m, p, n, true);
            if (bn->requires_grad)
                gemm_tn(an->data->data(), n, g, p, bn->grad_ptr(), p, m, n, p, true);
        };
    }
    return out;
}

// Grouped batched matmul: one packed dispatch over all pairs. Semantically
// identical to calling matmul per pair.
inline std::vector<Tensor> grouped_matmul(const std::vector<Tensor>& lhs, const std::vector<Tensor>& rhs) {
    if (lhs.size() != rhs.size())
        throw config_error("grouped_matmul: list lengths differ (" + format_int(lhs.size()) + " vs " +
                           format_int(rhs.size()) + ")");
    const std::size_t groups = lhs.size();
    std::vector<Tensor> out(groups);
    std::vector<GemmGroup> specs(groups);
    for (std::size_t i = 0; i < groups; ++i) {
        const Tensor& a = lhs[i];
        const Tensor& b = rhs[i];
        if (a.ndim() != 2 || b.ndim() != 2)
            throw config_error("grouped_matmul: pair " + format_int(i) + " is not 2-d");
        if (a.dim(1) != b.dim(0))
            throw config_error("grouped_matmul: inner dimension mismatch at pair " + format_int(i) +
                               " (" + format_int(a.dim(1)) + " vs " + format_int(b.dim(0)) + ")");
        out[i] = Tensor::zeros({a.dim(0), b.dim(1)});
        specs[i] = {a.data(), a.dim(1), b.data(), b.dim(1), out[i].data(), b.dim(1),
                    a.dim(0), a.dim(1), b.dim(1)};
    }
    grouped_gemm(specs, GemmKind::nn, false);
    for (std::size_t i = 0; i < groups; ++i) {
        const Tensor& a = lhs[i];
        const Tensor& b = rhs[i];
        if (detail::wants_grad({&a, &b})) {
            out[i].node->requires_grad = true;
            out[i].node->parents = {a.node, b.node};
            TensorNode* on = out[i].node.get();
            auto an = a.node, bn = b.node;
            const int m = a.dim(0), n = a.dim(1), p = b.dim(1);
            out[i].node->backfn = [on, an, bn, m, n, p]() {
                const double* g = on->grad_ptr();
                if (an->requires_grad)
                    gemm_nt(g, p, bn->data->data(), p, an->grad_ptr(), n, m, p, n, true);
                if (bn->requires_grad)
                    gemm_tn(an->data->data(), n, g, p, bn->grad_ptr(), p, m, n, p, true);
            };
        }
    }
    return out;
}

// X[B,T,n] with one weight matrix [n,p] per slice of axis 1 -> [B,T,p].
// The T slice products run as a single grouped dispatch with strided views,
// so no packing copies are made.
inline Tensor stacked_matmul(const Tensor& x, const std::vector<Tensor>& weights) {
    if (x.ndim() != 3) throw config_error("stacked_matmul: expects [B,T,n] input");
    const int batch = x.dim(0), t = x.dim(1), n = x.dim(2);
    if (static_cast<int>(weights.size()) != t)
        throw config_error("stacked_matmul: weight count " + format_int(weights.size()) +
                           " does not match token count " + format_int(t));
    for (int i = 0; i < t; ++i)
        if (weights[i].ndim() != 2 || weights[i].dim(0) != n)
            throw config_error("stacked_matmul: weight " + format_int(i) + " has wrong input dim");
    const int p = weights[0].dim(1);
    for (int i = 1; i < t; ++i)
        if (weights[i].dim(1) != p) throw config_error("stacked_matmul: inconsistent output dims");

    Tensor out = Tensor::zeros({batch, t, p});
    std::vector<GemmGroup> specs(t);
    for (int i = 0; i < t; ++i)
        specs[i] = {x.data() + static_cast<std::int64_t>(i) * n, static_cast<std::int64_t>(t) * n,
                    weights[i].data(), p,
                    out.data() + static_cast<std::int64_t>(i) * p, static_cast<std::int64_t>(t) * p,
                    batch, n, p};
    grouped_gemm(specs, GemmKind::nn, false);

    bool any = x.requires_grad();
    for (const Tensor& w : weights) any = any || w.requires_grad();
    if (grad_mode() && any) {
        out.node->requires_grad = true;
        out.node->parents.reserve(1 + weights.size());
        out.node->parents.push_back(x.node);
        std::vector<std::shared_ptr<TensorNode>> wn(weights.size());
        for (std::size_t i = 0; i < weights.size(); ++i) {
            wn[i] = weights[i].node;
            out.node->parents.push_back(weights[i].node);
        }
        TensorNode* on = out.node.get();
        auto xn = x.node;
        out.node->backfn = [on, xn, wn = std::move(wn), batch, t, n, p]() {
            const double* g = on->grad_ptr();
            const std::int64_t ldx = static_cast<std::int64_t>(t) * n;
            const std::int64_t ldg = static_cast<std::int64_t>(t) * p;
            if (xn->requires_grad) {
                std::vector<GemmGroup> dx(t);
                double* gx = xn->grad_ptr();
                for (int i = 0; i < t; ++i)
                    dx[i] = {g + static_cast<std::int64_t>(i) * p, ldg,
                             wn[i]->data->data(), p,
                             gx + static_cast<std::int64_t>(i) * n, ldx, batch, p, n};
                grouped_gemm(dx, GemmKind::nt, true);
            }
            std::vector<GemmGroup> dw;
            dw.reserve(t);
            const double* px = xn->data->data();
            for (int i = 0; i < t; ++i) {
                if (!wn[i]->requires_grad) continue;
                dw.push_back({px + static_cast<std::int64_t>(i) * n, ldx,
                              g + static_cast<std::int64_t>(i) * p, ldg,
                              wn[i]->grad_ptr(), p, batch, n, p});
            }
            if (!dw.empty()) grouped_gemm(dw, GemmKind::tn, true);
        };
    }
    return out;
}

// A[G,m,n] * B[G,n,p] -> [G,m,p], one grouped dispatch.
inline Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw config_error("bmm: incompatible shapes");
    const int groups = a.dim(0), m = a.dim(1), n = a.dim(2), p = b.dim(2);
    Tensor out = Tensor::zeros({groups, m, p});
    std::vector<GemmGroup> specs(groups);
    for (int i = 0; i < groups; ++i)
        specs[i] = {a.data() + static_cast<std::int64_t>(i) * m * n, n,
                    b.data() + static_cast<std::int64_t>(i) * n * p, p,
                    out.data() + static_cast<std::int64_t>(i) * m * p, p, m, n, p};
    grouped_gemm(specs, GemmKind::nn, false);
    if (detail::wants_grad({&a, &b})) {
        out.node->requires_grad = true;
        out.node->parents = {a.node, b.node};
        TensorNode* on = out.node.get();
        auto an = a.node, bn = b.node;
        out.node->backfn = [on, an, bn, groups, m, n, p]() {
            const double* g = on->grad_ptr();
            if (an->requires_grad) {
                std::vector<GemmGroup> da(groups);
                double* ga = an->grad_ptr();
                const double* pb = bn->data->data();
                for (int i = 0; i < groups; ++i)
                    da[i] = {g + static_cast<std::int64_t>(i) * m * p, p,
                             pb + static_cast<std::int64_t>(i) * n * p, p,
                             ga + static_cast<std::int64_t>(i) * m * n, n, m, p, n};
                grouped_gemm(da, GemmKind::nt, true);
            }
            if (bn->requires_grad) {
                std::vector<GemmGroup> db(groups);
                double* gb = bn->grad_ptr();
                const double* pa = an->data->data();
                for (int i = 0; i < groups; ++i)
                    db[i] = {pa + static_cast<std::int64_t>(i) * m * n, n,
                             g + static_cast<std::int64_t>(i) * m * p, p,
                             gb + static_cast<std::int64_t>(i) * n * p, p, m, n, p};
                grouped_gemm(db, GemmKind::tn, true);
            }
        };
    }
    return out;
}

// A[G,m,n] * B[G,p,n]^T -> [G,m,p], one grouped dispatch.
inline Tensor bmm_nt(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
        throw config_error("bmm_nt: incompatible shapes");
    const int groups = a.dim(0), m = a.dim(1), n = a.dim(2), p = b.dim(1);
    Tensor out = Tensor::zeros({groups, m, p});
    std::vector<GemmGroup> specs(groups);
    for (int i = 0; i < groups; ++i)
        specs[i] = {a.data() + static_cast<std::int64_t>(i) * m * n, n,
                    b.data() + static_cast<std::int64_t>(i) * p * n, n,
                    out.data() + static_cast<std::int64_t>(i) * m * p, p, m, n, p};
    grouped_gemm(specs, GemmKind::nt, false);
    if (detail::wants_grad({&a, &b})) {
        out.node->requires_grad = true;
        out.node->parents = {a.node, b.node};
        TensorNode* on = out.node.get();
        auto an = a.node, bn = b.node;
        out.node->backfn = [on, an, bn, groups, m, n, p]() {
            const double* g = on->grad_ptr();
            if (an->requires_grad) {
                std::vector<GemmGroup> da(groups);
                double* ga = an->grad_ptr();
                const double* pb = bn->data->data();
                for (int i = 0; i < groups; ++i)
                    da[i] = {g + static_cast<std::int64_t>(i) * m * p, p,
                             pb + static_cast<std::int64_t>(i) * p * n, n,
                             ga + static_cast<std::int64_t>(i) * m * n, n, m, p, n};
                grouped_gemm(da, GemmKind::nn, true);
            }
            if (bn->requires_grad) {
                std::vector<GemmGroup> db(groups);
                double* gb = bn->grad_ptr();
                const double* pa = an->data->data();
                for (int i = 0; i < groups; ++i)
                    db[i] = {g + static_cast<std::int64_t>(i) * m * p, p,
                             pa + static_cast<std::int64_t>(i) * m * n, n,
                             gb + static_cast<std::int64_t>(i) * p * n, n, m, p, n};
                grouped_gemm(db, GemmKind::tn, true);
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalization and softmax family (all over the last axis)
// ---------------------------------------------------------------------------

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
    const int d = x.dim(x.ndim() - 1);
    if (gain.numel() != d || bias.numel() != d)
        throw config_error("layer_norm: gain/bias length must equal last dimension");
    if (eps < 1e-12) eps = 1e-12;  // division-by-zero guard
    const std::int64_t rows = detail::rows_before_lastdim(x);
    Tensor out = Tensor::zeros(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(rows * d);
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    const double* px = x.data();
    const double* pg = gain.data();
    const double* pb = bias.data();
    double* po = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = px + r * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        double* xh = xhat->data() + r * d;
        double* yr = po + r * d;
        for (int j = 0; j < d; ++j) {
            xh[j] = (xr[j] - mean) * inv;
            yr[j] = pg[j] * xh[j] + pb[j];
        }
    }
    if (detail::wants_grad({&x, &gain, &bias})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node, gain.node, bias.node};
        TensorNode* on = out.node.get();
        auto xn = x.node, gn = gain.node, bn = bias.node;
        out.node->backfn = [on, xn, gn, bn, xhat, inv_std, rows, d]() {
            const double* g = on->grad_ptr();
            const double* pg2 = gn->data->data();
            double* gx = xn->requires_grad ? xn->grad_ptr() : nullptr;
            double* gg = gn->requires_grad ? gn->grad_ptr() : nullptr;
            double* gb = bn->requires_grad ? bn->grad_ptr() : nullptr;
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* gr = g + r * d;
                const double* xh = xhat->data() + r * d;
                if (gg || gb) {
                    for (int j = 0; j < d; ++j) {
                        if (gg) gg[j] += gr[j] * xh[j];
                        if (gb) gb[j] += gr[j];
                    }
                }
                if (gx) {
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double dxh = gr[j] * pg2[j];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh[j];
                    }
                    const double inv = (*inv_std)[r];
                    const double m1 = sum_dxhat / d;
                    const double m2 = sum_dxhat_xhat / d;
                    double* gxr = gx + r * d;
                    for (int j = 0; j < d; ++j)
                        gxr[j] += inv * (gr[j] * pg2[j] - m1 - xh[j] * m2);
                }
            }
        };
    }
    return out;
}

inline Tensor softmax_lastdim(const Tensor& x) {
    const int d = x.dim(x.ndim() - 1);
    const std::int64_t rows = detail::rows_before_lastdim(x);
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = px + r * d;
        double* yr = po + r * d;
        double mx = xr[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        const double invz = 1.0 / z;
        for (int j = 0; j < d; ++j) yr[j] *= invz;
    }
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        auto od = out.node->data;
        out.node->backfn = [on, xn, od, rows, d]() {
            const double* g = on->grad_ptr();
            const double* y = od->data();
            double* gx = xn->grad_ptr();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* gr = g + r * d;
                const double* yr = y + r * d;
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += gr[j] * yr[j];
                double* gxr = gx + r * d;
                for (int j = 0; j < d; ++j) gxr[j] += yr[j] * (gr[j] - dot);
            }
        };
    }
    return out;
}

// ln(sum_j exp(x[..., j])), numerically stable; drops the last axis.
inline Tensor logsumexp_lastdim(const Tensor& x) {
    const int d = x.dim(x.ndim() - 1);
    const std::int64_t rows = detail::rows_before_lastdim(x);
    std::vector<int> out_shape(x.shape().begin(), x.shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    Tensor out = Tensor::zeros(out_shape);
    const double* px = x.data();
    double* po = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = px + r * d;
        double mx = xr[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (int j = 0; j < d; ++j) z += std::exp(xr[j] - mx);
        po[r] = mx + std::log(z);
    }
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        auto od = out.node->data;
        out.node->backfn = [on, xn, od, rows, d]() {
            const double* g = on->grad_ptr();
            const double* lse = od->data();
            const double* px2 = xn->data->data();
            double* gx = xn->grad_ptr();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* xr = px2 + r * d;
                double* gxr = gx + r * d;
                for (int j = 0; j < d; ++j) gxr[j] += g[r] * std::exp(xr[j] - lse[r]);
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions and row-wise helpers
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
    Tensor out = Tensor::zeros({1});
    const double* px = x.data();
    const std::int64_t n = x.numel();
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += px[i];
    out.data()[0] = s;
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        out.node->backfn = [on, xn, n]() {
            const double g = on->grad_ptr()[0];
            double* gx = xn->grad_ptr();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
        };
    }
    return out;
}

inline Tensor mean_all(const Tensor& x) {
    return scalar_mul(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// [N,E] -> [E], mean over rows
inline Tensor column_mean(const Tensor& x) {
    if (x.ndim() != 2) throw config_error("column_mean: expects 2-d input");
    const std::int64_t n = x.dim(0);
    const int e = x.dim(1);
    Tensor out = Tensor::zeros({e});
    const double* px = x.data();
    double* po = out.data();
    for (std::int64_t r = 0; r < n; ++r)
        for (int j = 0; j < e; ++j) po[j] += px[r * e + j];
    for (int j = 0; j < e; ++j) po[j] /= static_cast<double>(n);
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        out.node->backfn = [on, xn, n, e]() {
            const double* g = on->grad_ptr();
            double* gx = xn->grad_ptr();
            const double inv = 1.0 / static_cast<double>(n);
            for (std::int64_t r = 0; r < n; ++r)
                for (int j = 0; j < e; ++j) gx[r * e + j] += g[j] * inv;
        };
    }
    return out;
}

// [N,m] -> [N], sum over the last axis
inline Tensor row_sum(const Tensor& x) {
    if (x.ndim() != 2) throw config_error("row_sum: expects 2-d input");
    const std::int64_t n = x.dim(0);
    const int m = x.dim(1);
    Tensor out = Tensor::zeros({static_cast<int>(n)});
    const double* px = x.data();
    double* po = out.data();
    for (std::int64_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += px[r * m + j];
        po[r] = s;
    }
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        out.node->backfn = [on, xn, n, m]() {
            const double* g = on->grad_ptr();
            double* gx = xn->grad_ptr();
            for (std::int64_t r = 0; r < n; ++r)
                for (int j = 0; j < m; ++j) gx[r * m + j] += g[r];
        };
    }
    return out;
}

// y[r,:] = x[r,:] * s[r]
inline Tensor scale_rows(const Tensor& x, const Tensor& s) {
    if (x.ndim() != 2 || s.ndim() != 1 || s.dim(0) != x.dim(0))
        throw config_error("scale_rows: scale length must equal row count");
    const std::int64_t n = x.dim(0);
    const int m = x.dim(1);
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    const double* ps = s.data();
    double* po = out.data();
    for (std::int64_t r = 0; r < n; ++r)
        for (int j = 0; j < m; ++j) po[r * m + j] = px[r * m + j] * ps[r];
    if (detail::wants_grad({&x, &s})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node, s.node};
        TensorNode* on = out.node.get();
        auto xn = x.node, sn = s.node;
        out.node->backfn = [on, xn, sn, n, m]() {
            const double* g = on->grad_ptr();
            const double* px2 = xn->data->data();
            const double* ps2 = sn->data->data();
            if (xn->requires_grad) {
                double* gx = xn->grad_ptr();
                for (std::int64_t r = 0; r < n; ++r)
                    for (int j = 0; j < m; ++j) gx[r * m + j] += g[r * m + j] * ps2[r];
            }
            if (sn->requires_grad) {
                double* gs = sn->grad_ptr();
                for (std::int64_t r = 0; r < n; ++r) {
                    double acc = 0.0;
                    for (int j = 0; j < m; ++j) acc += g[r * m + j] * px2[r * m + j];
                    gs[r] += acc;
                }
            }
        };
    }
    return out;
}

// y[r,:] = x[r,:] / s[r]
inline Tensor div_rows(const Tensor& x, const Tensor& s) {
    if (x.ndim() != 2 || s.ndim() != 1 || s.dim(0) != x.dim(0))
        throw config_error("div_rows: divisor length must equal row count");
    const std::int64_t n = x.dim(0);
    const int m = x.dim(1);
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    const double* ps = s.data();
    double* po = out.data();
    for (std::int64_t r = 0; r < n; ++r) {
        const double inv = 1.0 / ps[r];
        for (int j = 0; j < m; ++j) po[r * m + j] = px[r * m + j] * inv;
    }
    if (detail::wants_grad({&x, &s})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node, s.node};
        TensorNode* on = out.node.get();
        auto xn = x.node, sn = s.node;
        auto od = out.node->data;
        out.node->backfn = [on, xn, sn, od, n, m]() {
            const double* g = on->grad_ptr();
            const double* y = od->data();
            const double* ps2 = sn->data->data();
            if (xn->requires_grad) {
                double* gx = xn->grad_ptr();
                for (std::int64_t r = 0; r < n; ++r) {
                    const double inv = 1.0 / ps2[r];
                    for (int j = 0; j < m; ++j) gx[r * m + j] += g[r * m + j] * inv;
                }
            }
            if (sn->requires_grad) {
                double* gs = sn->grad_ptr();
                for (std::int64_t r = 0; r < n; ++r) {
                    double acc = 0.0;
                    for (int j = 0; j < m; ++j) acc += g[r * m + j] * y[r * m + j];
                    gs[r] -= acc / ps2[r];
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Concatenation / slicing / pooling
// ---------------------------------------------------------------------------

inline Tensor concat_lastdim(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw config_error("concat_lastdim: empty list");
    const std::int64_t rows = detail::rows_before_lastdim(parts[0]);
    int total = 0;
    for (const Tensor& p : parts) {
        if (detail::rows_before_lastdim(p) != rows)
            throw config_error("concat_lastdim: leading dimensions differ");
        total += p.dim(p.ndim() - 1);
    }
    std::vector<int> shape = parts[0].shape();
    shape.back() = total;
    Tensor out = Tensor::zeros(shape);
    double* po = out.data();
    int off = 0;
    for (const Tensor& p : parts) {
        const int d = p.dim(p.ndim() - 1);
        const double* pp = p.data();
        for (std::int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < d; ++j) po[r * total + off + j] = pp[r * d + j];
        off += d;
    }
    bool any = false;
    for (const Tensor& p : parts) any = any || p.requires_grad();
    if (grad_mode() && any) {
        out.node->requires_grad = true;
        std::vector<std::shared_ptr<TensorNode>> pn(parts.size());
        std::vector<int> dims(parts.size());
        for (std::size_t i = 0; i < parts.size(); ++i) {
            pn[i] = parts[i].node;
            dims[i] = parts[i].dim(parts[i].ndim() - 1);
            out.node->parents.push_back(parts[i].node);
        }
        TensorNode* on = out.node.get();
        out.node->backfn = [on, pn = std::move(pn), dims = std::move(dims), rows, total]() {
            const double* g = on->grad_ptr();
            int off2 = 0;
            for (std::size_t i = 0; i < pn.size(); ++i) {
                const int d = dims[i];
                if (pn[i]->requires_grad) {
                    double* gp = pn[i]->grad_ptr();
                    for (std::int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < d; ++j) gp[r * d + j] += g[r * total + off2 + j];
                }
                off2 += d;
            }
        };
    }
    return out;
}

// Concatenate [B,Ti,D] blocks along the token axis.
inline Tensor concat_axis1(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw config_error("concat_axis1: empty list");
    const int batch = parts[0].dim(0);
    const int d = parts[0].dim(2);
    int total_t = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != 3 || p.dim(0) != batch || p.dim(2) != d)
            throw config_error("concat_axis1: incompatible block shapes");
        total_t += p.dim(1);
    }
    Tensor out = Tensor::zeros({batch, total_t, d});
    double* po = out.data();
    int t_off = 0;
    for (const Tensor& p : parts) {
        const int t = p.dim(1);
        const double* pp = p.data();
        for (int b = 0; b < batch; ++b)
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < d; ++j)
                    po[(static_cast<std::int64_t>(b) * total_t + t_off + i) * d + j] =
                        pp[(static_cast<std::int64_t>(b) * t + i) * d + j];
        t_off += t;
    }
    bool any = false;
    for (const Tensor& p : parts) any = any || p.requires_grad();
    if (grad_mode() && any) {
        out.node->requires_grad = true;
        std::vector<std::shared_ptr<TensorNode>> pn(parts.size());
        std::vector<int> ts(parts.size());
        for (std::size_t i = 0; i < parts.size(); ++i) {
            pn[i] = parts[i].node;
            ts[i] = parts[i].dim(1);
            out.node->parents.push_back(parts[i].node);
        }
        TensorNode* on = out.node.get();
        out.node->backfn = [on, pn = std::move(pn), ts = std::move(ts), batch, total_t, d]() {
            const double* g = on->grad_ptr();
            int t_off2 = 0;
            for (std::size_t i = 0; i < pn.size(); ++i) {
                const int t = ts[i];
                if (pn[i]->requires_grad) {
                    double* gp = pn[i]->grad_ptr();
                    for (int b = 0; b < batch; ++b)
                        for (int k = 0; k < t; ++k)
                            for (int j = 0; j < d; ++j)
                                gp[(static_cast<std::int64_t>(b) * t + k) * d + j] +=
                                    g[(static_cast<std::int64_t>(b) * total_t + t_off2 + k) * d + j];
                }
                t_off2 += t;
            }
        };
    }
    return out;
}

inline Tensor slice_axis1(const Tensor& x, int lo, int hi) {
    if (x.ndim() != 3 || lo < 0 || hi > x.dim(1) || lo >= hi)
        throw config_error("slice_axis1: invalid range");
    const int batch = x.dim(0), t = x.dim(1), d = x.dim(2);
    const int span = hi - lo;
    Tensor out = Tensor::zeros({batch, span, d});
    const double* px = x.data();
    double* po = out.data();
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < span; ++i)
            for (int j = 0; j < d; ++j)
                po[(static_cast<std::int64_t>(b) * span + i) * d + j] =
                    px[(static_cast<std::int64_t>(b) * t + lo + i) * d + j];
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        out.node->backfn = [on, xn, batch, t, d, lo, span]() {
            const double* g = on->grad_ptr();
            double* gx = xn->grad_ptr();
            for (int b = 0; b < batch; ++b)
                for (int i = 0; i < span; ++i)
                    for (int j = 0; j < d; ++j)
                        gx[(static_cast<std::int64_t>(b) * t + lo + i) * d + j] +=
                            g[(static_cast<std::int64_t>(b) * span + i) * d + j];
        };
    }
    return out;
}

// [B,T,D] -> [B,T/block,D], mean over consecutive token blocks.
inline Tensor mean_pool_axis1(const Tensor& x, int block) {
    if (x.ndim() != 3 || block < 1 || x.dim(1) % block != 0)
        throw config_error("mean_pool_axis1: block must divide the token count");
    const int batch = x.dim(0), t = x.dim(1), d = x.dim(2);
    const int t_out = t / block;
    Tensor out = Tensor::zeros({batch, t_out, d});
    const double* px = x.data();
    double* po = out.data();
    const double inv = 1.0 / block;
    for (int b = 0; b < batch; ++b)
        for (int i = 0; i < t; ++i) {
            const double* src = px + (static_cast<std::int64_t>(b) * t + i) * d;
            double* dst = po + (static_cast<std::int64_t>(b) * t_out + i / block) * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j] * inv;
        }
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        out.node->backfn = [on, xn, batch, t, d, t_out, inv]() {
            const double* g = on->grad_ptr();
            double* gx = xn->grad_ptr();
            const int block2 = t / t_out;
            for (int b = 0; b < batch; ++b)
                for (int i = 0; i < t; ++i) {
                    const double* gsrc = g + (static_cast<std::int64_t>(b) * t_out + i / block2) * d;
                    double* gdst = gx + (static_cast<std::int64_t>(b) * t + i) * d;
                    for (int j = 0; j < d; ++j) gdst[j] += gsrc[j] * inv;
                }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lookup / gather / scatter
// ---------------------------------------------------------------------------

inline Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& indices) {
    if (table.ndim() != 2) throw config_error("embedding_lookup: table must be 2-d");
    const std::int64_t vocab = table.dim(0);
    const int d = table.dim(1);
    for (std::size_t i = 0; i < indices.size(); ++i)
        if (indices[i] < 0 || indices[i] >= vocab)
            throw input_error("embedding_lookup: index " + format_int(indices[i]) +
                              " out of vocabulary " + format_int(vocab));
    Tensor out = Tensor::zeros({static_cast<int>(indices.size()), d});
    const double* pt = table.data();
    double* po = out.data();
    for (std::size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < d; ++j) po[i * d + j] = pt[indices[i] * d + j];
    if (detail::wants_grad({&table})) {
        out.node->requires_grad = true;
        out.node->parents = {table.node};
        TensorNode* on = out.node.get();
        auto tn = table.node;
        auto idx = std::make_shared<std::vector<std::int64_t>>(indices);
        out.node->backfn = [on, tn, idx, d]() {
            const double* g = on->grad_ptr();
            double* gt = tn->grad_ptr();
            for (std::size_t i = 0; i < idx->size(); ++i)
                for (int j = 0; j < d; ++j) gt[(*idx)[i] * d + j] += g[i * d + j];
        };
    }
    return out;
}

// y[r,:] = values[r] * w + b, for scalar (dense) feature values.
inline Tensor dense_lift(const std::vector<double>& values, const Tensor& w, const Tensor& b) {
    if (w.ndim() != 1 || b.ndim() != 1 || w.dim(0) != b.dim(0))
        throw config_error("dense_lift: weight/bias shape mismatch");
    const int d = w.dim(0);
    const int n = static_cast<int>(values.size());
    Tensor out = Tensor::zeros({n, d});
    const double* pw = w.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int r = 0; r < n; ++r)
        for (int j = 0; j < d; ++j) po[r * d + j] = values[r] * pw[j] + pb[j];
    if (detail::wants_grad({&w, &b})) {
        out.node->requires_grad = true;
        out.node->parents = {w.node, b.node};
        TensorNode* on = out.node.get();
        auto wn = w.node, bn = b.node;
        auto vals = std::make_shared<std::vector<double>>(values);
        out.node->backfn = [on, wn, bn, vals, n, d]() {
            const double* g = on->grad_ptr();
            if (wn->requires_grad) {
                double* gw = wn->grad_ptr();
                for (int r = 0; r < n; ++r)
                    for (int j = 0; j < d; ++j) gw[j] += (*vals)[r] * g[r * d + j];
            }
            if (bn->requires_grad) {
                double* gb = bn->grad_ptr();
                for (int r = 0; r < n; ++r)
                    for (int j = 0; j < d; ++j) gb[j] += g[r * d + j];
            }
        };
    }
    return out;
}

inline Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& indices) {
    if (x.ndim() != 2) throw config_error("gather_rows: expects 2-d input");
    const std::int64_t n = x.dim(0);
    const int d = x.dim(1);
    for (std::int64_t i : indices)
        if (i < 0 || i >= n) throw input_error("gather_rows: row index out of range");
    Tensor out = Tensor::zeros({static_cast<int>(indices.size()), d});
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < d; ++j) po[i * d + j] = px[indices[i] * d + j];
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        auto idx = std::make_shared<std::vector<std::int64_t>>(indices);
        out.node->backfn = [on, xn, idx, d]() {
            const double* g = on->grad_ptr();
            double* gx = xn->grad_ptr();
            for (std::size_t i = 0; i < idx->size(); ++i)
                for (int j = 0; j < d; ++j) gx[(*idx)[i] * d + j] += g[i * d + j];
        };
    }
    return out;
}

// Gather individual elements from a tensor viewed as flat storage.
inline Tensor gather_scalars(const Tensor& x, const std::vector<std::int64_t>& indices) {
    const std::int64_t n = x.numel();
    for (std::int64_t i : indices)
        if (i < 0 || i >= n) throw input_error("gather_scalars: index out of range");
    Tensor out = Tensor::zeros({static_cast<int>(indices.size())});
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < indices.size(); ++i) po[i] = px[indices[i]];
    if (detail::wants_grad({&x})) {
        out.node->requires_grad = true;
        out.node->parents = {x.node};
        TensorNode* on = out.node.get();
        auto xn = x.node;
        auto idx = std::make_shared<std::vector<std::int64_t>>(indices);
        out.node->backfn = [on, xn, idx]() {
            const double* g = on->grad_ptr();
            double* gx = xn->grad_ptr();
            for (std::size_t i = 0; i < idx->size(); ++i) gx[(*idx)[i]] += g[i];
        };
    }
    return out;
}

// out[n_rows, D] = sum over groups of scatter(rows_g at indices_g). Row sets
// may overlap; overlapping rows accumulate.
inline Tensor index_add_rows(int n_rows, int d,
                             const std::vector<Tensor>& row_groups,
                             const std::vector<std::vector<std::int64_t>>& index_groups) {
    if (row_groups.size() != index_groups.size())
        throw config_error("index_add_rows: group count mismatch");
    Tensor out = Tensor::zeros({n_rows, d});
    double* po = out.data();
    for (std::size_t gi = 0; gi < row_groups.size(); ++gi) {
        const Tensor& rows = row_groups[gi];
        const auto& idx = index_groups[gi];
        if (rows.ndim() != 2 || rows.dim(1) != d || rows.dim(0) != static_cast<int>(idx.size()))
            throw config_error("index_add_rows: bad group " + format_int(gi));
        const double* pr = rows.data();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= n_rows) throw input_error("index_add_rows: index out of range");
            double* dst = po + idx[i] * d;
            for (int j = 0; j < d; ++j) dst[j] += pr[i * d + j];
        }
    }
    bool any = false;
    for (const Tensor& r : row_groups) any = any || r.requires_grad();
    if (grad_mode() && any) {
        out.node->requires_grad = true;
        std::vector<std::shared_ptr<TensorNode>> pn(row_groups.size());
        for (std::size_t i = 0; i < row_groups.size(); ++i) {
            pn[i] = row_groups[i].node;
            out.node->parents.push_back(row_groups[i].node);
        }
        TensorNode* on = out.node.get();
        auto idx_copy = std::make_shared<std::vector<std::vector<std::int64_t>>>(index_groups);
        out.node->backfn = [on, pn = std::move(pn), idx_copy, d]() {
            const double* g = on->grad_ptr();
            for (std::size_t gi = 0; gi < pn.size(); ++gi) {
                if (!pn[gi]->requires_grad) continue;
                double* gr = pn[gi]->grad_ptr();
                const auto& idx = (*idx_copy)[gi];
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    const double* src = g + idx[i] * d;
                    for (int j = 0; j < d; ++j) gr[i * d + j] += src[j];
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Loss heads
// ---------------------------------------------------------------------------

// mean over n of [max(z,0) - y*z + log(1 + exp(-|z|))]; the stable form of
// binary cross-entropy applied to sigmoid(z).
inline Tensor bce_with_logits_mean(const Tensor& logits, const std::vector<double>& labels) {
    if (logits.numel() != static_cast<std::int64_t>(labels.size()))
        throw config_error("bce_with_logits_mean: logits/labels length mismatch");
    const std::int64_t n = logits.numel();
    Tensor out = Tensor::zeros({1});
    const double* pz = logits.data();
    double loss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double z = pz[i];
        loss += std::max(z, 0.0) - labels[i] * z + std::log1p(std::exp(-std::abs(z)));
    }
    out.data()[0] = loss / static_cast<double>(n);
    if (detail::wants_grad({&logits})) {
        out.node->requires_grad = true;
        out.node->parents = {logits.node};
        TensorNode* on = out.node.get();
        auto zn = logits.node;
        auto y = std::make_shared<std::vector<double>>(labels);
        out.node->backfn = [on, zn, y, n]() {
            const double g = on->grad_ptr()[0];
            const double* pz2 = zn->data->data();
            double* gz = zn->grad_ptr();
            const double inv = 1.0 / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i) {
                const double s = 1.0 / (1.0 + std::exp(-pz2[i]));
                gz[i] += g * (s - (*y)[i]) * inv;
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw input_error("backward: loss must be a scalar tensor");
    if (!loss.node->requires_grad)
        throw input_error("backward: loss does not depend on any differentiable leaf");

    // Iterative post-order DFS; finish order is a topological order because
    // parents always finish before the node that references them.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(loss.node.get(), 0);
    visited.insert(loss.node.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node->grad_ptr()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        (*it)->grad_ptr();  // ensure allocated even if no child wrote to it
        if ((*it)->backfn) (*it)->backfn();
    }
}

}  // namespace zenith
