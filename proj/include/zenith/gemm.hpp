#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace zenith {

// Tally of multiply-add work done by the GEMM kernels, 2 flops per
// multiply-add. Tests use it to compare analytical cost formulas against
// what a forward pass actually executed.
struct FlopCounter {
    bool active = false;
    std::int64_t matmul_flops = 0;
};

inline FlopCounter& flop_counter() {
    thread_local FlopCounter counter;
    return counter;
}

inline void flop_count_matmul(int m, int n, int p) {
    auto& c = flop_counter();
    if (c.active) c.matmul_flops += 2ll * m * n * p;
}

// ---------------------------------------------------------------------------
// Row-major GEMM kernels with explicit leading strides. `acc` keeps the
// existing contents of C and accumulates into it.
// ---------------------------------------------------------------------------

// C[m x p] (+)= A[m x n] * B[n x p]
inline void gemm_nn(const double* a, std::int64_t lda, const double* b, std::int64_t ldb,
                    double* c, std::int64_t ldc, int m, int n, int p, bool acc) {
    flop_count_matmul(m, n, p);
    for (int i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        if (!acc) std::fill(crow, crow + p, 0.0);
        const double* arow = a + i * lda;
        for (int k = 0; k < n; ++k) {
            const double av = arow[k];
            const double* brow = b + k * ldb;
            for (int j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x p] (+)= A[m x n] * B[p x n]^T
inline void gemm_nt(const double* a, std::int64_t lda, const double* b, std::int64_t ldb,
                    double* c, std::int64_t ldc, int m, int n, int p, bool acc) {
    flop_count_matmul(m, n, p);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        double* crow = c + i * ldc;
        for (int j = 0; j < p; ++j) {
            const double* brow = b + j * ldb;
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += arow[k] * brow[k];
            if (acc) crow[j] += s; else crow[j] = s;
        }
    }
}

// C[n x p] (+)= A[m x n]^T * B[m x p]
inline void gemm_tn(const double* a, std::int64_t lda, const double* b, std::int64_t ldb,
                    double* c, std::int64_t ldc, int m, int n, int p, bool acc) {
    flop_count_matmul(n, m, p);
    if (!acc) {
        for (int i = 0; i < n; ++i) std::fill(c + i * ldc, c + i * ldc + p, 0.0);
    }
    for (int k = 0; k < m; ++k) {
        const double* arow = a + k * lda;
        const double* brow = b + k * ldb;
        for (int i = 0; i < n; ++i) {
            const double av = arow[i];
            double* crow = c + i * ldc;
            for (int j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Grouped dispatch. One call walks a packed table of group descriptors, which
// is the software stand-in for a batched GEMM primitive: the per-group work
// is issued from a single loop over precomputed offsets rather than from
// separate call sites.
// ---------------------------------------------------------------------------

enum class GemmKind { nn, nt, tn };

struct GemmGroup {
    const double* a;
    std::int64_t lda;
    const double* b;
    std::int64_t ldb;
    double* c;
    std::int64_t ldc;
    int m, n, p;
};

inline void grouped_gemm(const std::vector<GemmGroup>& groups, GemmKind kind, bool acc) {
    switch (kind) {
        case GemmKind::nn:
            for (const auto& g : groups) gemm_nn(g.a, g.lda, g.b, g.ldb, g.c, g.ldc, g.m, g.n, g.p, acc);
            break;
        case GemmKind::nt:
            for (const auto& g : groups) gemm_nt(g.a, g.lda, g.b, g.ldb, g.c, g.ldc, g.m, g.n, g.p, acc);
            break;
        case GemmKind::tn:
            for (const auto& g : groups) gemm_tn(g.a, g.lda, g.b, g.ldb, g.c, g.ldc, g.m, g.n, g.p, acc);
            break;
    }
}

}  // namespace zenith
