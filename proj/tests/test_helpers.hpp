#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "zenith/tensor.hpp"

namespace testutil {

// Reference matmul, written independently of the gemm kernels on purpose:
// plain i/j/k triple loop over dense row-major buffers.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                        int m, int n, int p) {
    std::vector<double> c(static_cast<std::size_t>(m) * p, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k)
                acc += a[static_cast<std::size_t>(i) * n + k] * b[static_cast<std::size_t>(k) * p + j];
            c[static_cast<std::size_t>(i) * p + j] = acc;
        }
    return c;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

inline std::vector<double> random_values(zenith::Rng& rng, std::int64_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = zenith::rng_uniform(rng, -scale, scale);
    return v;
}

inline zenith::Tensor random_tensor(zenith::Rng& rng, std::vector<int> shape, bool requires_grad = true,
                                    double scale = 1.0) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return zenith::Tensor::from_data(std::move(shape), random_values(rng, n, scale), requires_grad);
}

// Central finite differences against the autodiff gradient already stored in
// `leaf.grad()`. Returns the worst relative error over (strided) elements.
inline double fd_max_rel_err(const std::function<double()>& f, zenith::Tensor leaf,
                             double h = 1e-4, std::int64_t stride = 1) {
    zenith::NoGradGuard forward_only;
    double worst = 0.0;
    double* d = leaf.data();
    const std::vector<double>& g = leaf.grad();
    for (std::int64_t i = 0; i < leaf.numel(); i += stride) {
        const double keep = d[i];
        d[i] = keep + h;
        const double fp = f();
        d[i] = keep - h;
        const double fm = f();
        d[i] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        worst = std::max(worst, rel_err(g[i], fd));
    }
    return worst;
}

// Five-point central differences (error O(h^4)) for deep graphs whose third
// derivatives make the plain central difference too noisy at h = 1e-4.
inline double fd5_max_rel_err(const std::function<double()>& f, zenith::Tensor leaf,
                              double h = 1e-4, std::int64_t stride = 1) {
    zenith::NoGradGuard forward_only;
    double worst = 0.0;
    double* d = leaf.data();
    const std::vector<double>& g = leaf.grad();
    for (std::int64_t i = 0; i < leaf.numel(); i += stride) {
        const double keep = d[i];
        const auto at = [&](double delta) {
            d[i] = keep + delta;
            return f();
        };
        const double fd =
            (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
        d[i] = keep;
        worst = std::max(worst, rel_err(g[i], fd));
    }
    return worst;
}

// Builds the loss twice: once recorded for backward, then repeatedly in
// forward-only mode while perturbing each leaf element.
inline void expect_grads_match(const std::function<zenith::Tensor()>& build,
                               std::vector<zenith::Tensor> leaves, double tol = 1e-6,
                               std::int64_t stride = 1) {
    for (auto& l : leaves) l.zero_grad();
    zenith::Tensor loss = build();
    zenith::backward(loss);
    auto f = [&build]() {
        zenith::NoGradGuard forward_only;
        return build().item();
    };
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const double err = fd_max_rel_err(f, leaves[li], 1e-4, stride);
        EXPECT_LE(err, tol) << "finite-difference mismatch on leaf " << li;
    }
}

inline void expect_all_near(const double* got, const double* want, std::int64_t n, double tol) {
    for (std::int64_t i = 0; i < n; ++i)
        ASSERT_NEAR(got[i], want[i], tol) << "at flat index " << i;
}

}  // namespace testutil
