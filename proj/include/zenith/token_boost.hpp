#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "zenith/common.hpp"
#include "zenith/tensor.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Token Boost: the per-token transformation half of a layer. The base
// variant uses a gated feed-forward (SwiGLU) with a distinct parameter set
// per token; the ++ variant routes each token through a sparse mixture of
// expert SwiGLUs via a per-token gate. Shared-weight counterparts of both
// exist for the heterogeneity ablation.
// ---------------------------------------------------------------------------

struct TswigluParams {
    std::vector<Tensor> w1, w2;  // per token [D, r]
    std::vector<Tensor> w3;      // per token [r, D]
};

inline TswigluParams init_tswiglu_params(int tokens, int token_dim, int hidden, Rng& rng) {
    TswigluParams p;
    for (int i = 0; i < tokens; ++i) {
        p.w1.push_back(xavier_uniform({token_dim, hidden}, rng, token_dim, hidden, true));
        p.w2.push_back(xavier_uniform({token_dim, hidden}, rng, token_dim, hidden, true));
        p.w3.push_back(xavier_uniform({hidden, token_dim}, rng, hidden, token_dim, true));
    }
    return p;
}

// X_TB [B,T,D] -> O_TB [B,T,D]; token i goes through its own W1/W2/W3.
inline Tensor tswiglu_forward(const Tensor& x, const TswigluParams& p) {
    if (x.ndim() != 3) throw config_error("tswiglu_forward: expects [B,T,D] input");
    if (p.w1.size() != static_cast<std::size_t>(x.dim(1)))
        throw config_error("tswiglu_forward: parameter sets do not match token count");
    Tensor a = stacked_matmul(x, p.w1);
    Tensor b = stacked_matmul(x, p.w2);
    return stacked_matmul(mul(swish(a), b), p.w3);
}

// Shared-weight ablation counterpart: one SwiGLU applied to every token.
struct SharedSwigluParams {
    Tensor w1, w2;  // [D, r]
    Tensor w3;      // [r, D]
};

inline SharedSwigluParams init_shared_swiglu_params(int token_dim, int hidden, Rng& rng) {
    SharedSwigluParams p;
    p.w1 = xavier_uniform({token_dim, hidden}, rng, token_dim, hidden, true);
    p.w2 = xavier_uniform({token_dim, hidden}, rng, token_dim, hidden, true);
    p.w3 = xavier_uniform({hidden, token_dim}, rng, hidden, token_dim, true);
    return p;
}

// SwiGLU on flat rows [N, D] -> [N, D]
inline Tensor swiglu_apply(const Tensor& rows, const Tensor& w1, const Tensor& w2, const Tensor& w3) {
    return matmul(mul(swish(matmul(rows, w1)), matmul(rows, w2)), w3);
}

inline Tensor shared_swiglu_forward(const Tensor& x, const SharedSwigluParams& p) {
    if (x.ndim() != 3) throw config_error("shared_swiglu_forward: expects [B,T,D] input");
    const int batch = x.dim(0), t = x.dim(1), d = x.dim(2);
    Tensor flat = x.reshape({batch * t, d});
    return swiglu_apply(flat, p.w1, p.w2, p.w3).reshape({batch, t, d});
}

// ---------------------------------------------------------------------------
// TSMoE
// ---------------------------------------------------------------------------

struct SwigluExpert {
    Tensor w1, w2;  // [D, r]
    Tensor w3;      // [r, D]
};

struct TsmoeParams {
    std::vector<Tensor> routers;       // per token [D, E_s]; exactly one entry when shared
    std::vector<SwigluExpert> shared;  // E_c always-on experts
    std::vector<SwigluExpert> sparse;  // E_s routed experts
    int active = 1;                    // E_a
    bool shared_router = false;
};

inline TsmoeParams init_tsmoe_params(int tokens, int token_dim, int hidden, int shared_experts,
                                     int sparse_experts, int active_experts, bool shared_router,
                                     Rng& rng) {
    if (sparse_experts < 1 || active_experts < 1 || active_experts > sparse_experts)
        throw config_error("tsmoe: need 1 <= E_a <= E_s");
    if (shared_experts < 0) throw config_error("tsmoe: E_c must be >= 0");
    TsmoeParams p;
    p.active = active_experts;
    p.shared_router = shared_router;
    const int router_count = shared_router ? 1 : tokens;
    for (int i = 0; i < router_count; ++i)
        p.routers.push_back(
            xavier_uniform({token_dim, sparse_experts}, rng, token_dim, sparse_experts, true));
    for (int e = 0; e < shared_experts; ++e)
        p.shared.push_back({xavier_uniform({token_dim, hidden}, rng, token_dim, hidden, true),
                            xavier_uniform({token_dim, hidden}, rng, token_dim, hidden, true),
                            xavier_uniform({hidden, token_dim}, rng, hidden, token_dim, true)});
    for (int e = 0; e < sparse_experts; ++e)
        p.sparse.push_back({xavier_uniform({token_dim, hidden}, rng, token_dim, hidden, true),
                            xavier_uniform({token_dim, hidden}, rng, token_dim, hidden, true),
                            xavier_uniform({hidden, token_dim}, rng, hidden, token_dim, true)});
    return p;
}

// Routing record for one batch. Graph-connected pieces (logits, probs,
// pi_bar) feed the auxiliary losses; the dispatch itself (expert_rows) is a
// hard, non-differentiable selection.
struct RouterTrace {
    Tensor logits;   // [B*T, E_s]
    Tensor probs;    // [B*T, E_s], softmax over experts
    Tensor pi_bar;   // [E_s], mean probability per expert
    std::vector<std::vector<std::int64_t>> expert_rows;  // rows routed to each expert
    std::vector<double> f;                               // loads, f_i = |rows_i| / (B*T)
    std::int64_t positions = 0;                          // B*T
    int batch = 0;
    int tokens = 0;
    int sparse_experts = 0;
    int active = 0;

    // mask m_{pos,e} as 0/1, reconstructed from the dispatch lists
    bool selected(std::int64_t pos, int expert) const {
        const auto& rows = expert_rows[static_cast<std::size_t>(expert)];
        return std::binary_search(rows.begin(), rows.end(), pos);
    }
};

// X_TB [B,T,D] -> RouterTrace. Top-E_a selection by logit, ties broken in
// favor of the lower expert index.
inline RouterTrace route_tokens(const Tensor& x, const TsmoeParams& p) {
    if (x.ndim() != 3) throw config_error("route_tokens: expects [B,T,D] input");
    const int batch = x.dim(0), t = x.dim(1), d = x.dim(2);
    const int e_s = static_cast<int>(p.sparse.size());
    if (!p.shared_router && static_cast<int>(p.routers.size()) != t)
        throw config_error("route_tokens: router count does not match token count");

    RouterTrace trace;
    trace.batch = batch;
    trace.tokens = t;
    trace.sparse_experts = e_s;
    trace.active = p.active;
    trace.positions = static_cast<std::int64_t>(batch) * t;

    if (p.shared_router) {
        trace.logits = matmul(x.reshape({batch * t, d}), p.routers[0]);
    } else {
        trace.logits = stacked_matmul(x, p.routers).reshape({batch * t, e_s});
    }
    trace.probs = softmax_lastdim(trace.logits);
    trace.pi_bar = column_mean(trace.probs);

    trace.expert_rows.assign(static_cast<std::size_t>(e_s), {});
    const double* z = trace.logits.data();
    std::vector<int> idx(static_cast<std::size_t>(e_s));
    for (std::int64_t pos = 0; pos < trace.positions; ++pos) {
        std::iota(idx.begin(), idx.end(), 0);
        const double* row = z + pos * e_s;
        std::partial_sort(idx.begin(), idx.begin() + p.active, idx.end(), [row](int a, int b) {
            if (row[a] != row[b]) return row[a] > row[b];
            return a < b;
        });
        for (int r = 0; r < p.active; ++r)
            trace.expert_rows[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])].push_back(pos);
    }
    trace.f.assign(static_cast<std::size_t>(e_s), 0.0);
    for (int e = 0; e < e_s; ++e)
        trace.f[static_cast<std::size_t>(e)] =
            static_cast<double>(trace.expert_rows[static_cast<std::size_t>(e)].size()) /
            static_cast<double>(trace.positions);
    return trace;
}

// X_TB [B,T,D] -> O_TB [B,T,D]. Shared experts always run, unweighted;
// activated sparse experts run on their routed rows only, weighted by the
// softmax probabilities renormalized over the activated set (or unweighted
// when the literal-formula flag is set).
inline Tensor tsmoe_forward(const Tensor& x, const TsmoeParams& p, const RouterTrace& trace,
                            bool unweighted_experts = false) {
    if (x.ndim() != 3) throw config_error("tsmoe_forward: expects [B,T,D] input");
    const int batch = x.dim(0), t = x.dim(1), d = x.dim(2);
    const std::int64_t n = static_cast<std::int64_t>(batch) * t;
    if (trace.positions != n || trace.sparse_experts != static_cast<int>(p.sparse.size()))
        throw config_error("tsmoe_forward: trace does not match input/params");
    Tensor flat = x.reshape({batch, t, d}).reshape({batch * t, d});

    // renormalization denominator per position: sum of activated probabilities
    Tensor denom;
    if (!unweighted_experts) {
        std::vector<Tensor> prob_groups;
        std::vector<std::vector<std::int64_t>> row_groups;
        for (int e = 0; e < trace.sparse_experts; ++e) {
            const auto& rows = trace.expert_rows[static_cast<std::size_t>(e)];
            if (rows.empty()) continue;
            std::vector<std::int64_t> flat_idx(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                flat_idx[i] = rows[i] * trace.sparse_experts + e;
            prob_groups.push_back(
                gather_scalars(trace.probs, flat_idx).reshape({static_cast<int>(rows.size()), 1}));
            row_groups.push_back(rows);
        }
        denom = index_add_rows(static_cast<int>(n), 1, prob_groups, row_groups);  // [n,1]
    }

    std::vector<Tensor> out_groups;
    std::vector<std::vector<std::int64_t>> out_rows;
    for (int e = 0; e < trace.sparse_experts; ++e) {
        const auto& rows = trace.expert_rows[static_cast<std::size_t>(e)];
        if (rows.empty()) continue;
        const SwigluExpert& ex = p.sparse[static_cast<std::size_t>(e)];
        Tensor gathered = gather_rows(flat, rows);
        Tensor y = swiglu_apply(gathered, ex.w1, ex.w2, ex.w3);
        if (!unweighted_experts) {
            std::vector<std::int64_t> flat_idx(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                flat_idx[i] = rows[i] * trace.sparse_experts + e;
            Tensor pi = gather_scalars(trace.probs, flat_idx);          // [m]
            Tensor dn = gather_scalars(denom, rows);                    // [m]
            Tensor gate = div_rows(pi.reshape({static_cast<int>(rows.size()), 1}), dn)
                              .reshape({static_cast<int>(rows.size())});
            y = scale_rows(y, gate);
        }
        out_groups.push_back(y);
        out_rows.push_back(rows);
    }
    Tensor out = index_add_rows(static_cast<int>(n), d, out_groups, out_rows);

    for (const SwigluExpert& ex : p.shared)
        out = add(out, swiglu_apply(flat, ex.w1, ex.w2, ex.w3));
    return out.reshape({batch, t, d});
}

// ---------------------------------------------------------------------------
// Auxiliary router losses. Both are exactly the printed formulas; gradient
// flows only through the probability terms (loads f are constants).
// ---------------------------------------------------------------------------

// L = alpha * (1/(B*T*E_s)) * sum_i (f_i / E_a) * pi_bar_i
inline Tensor load_balance_loss(const RouterTrace& trace, double alpha) {
    const int e_s = trace.sparse_experts;
    const double prefactor =
        alpha / (static_cast<double>(trace.batch) * trace.tokens * e_s * trace.active);
    std::vector<double> w(static_cast<std::size_t>(e_s));
    for (int e = 0; e < e_s; ++e) w[static_cast<std::size_t>(e)] = prefactor * trace.f[static_cast<std::size_t>(e)];
    Tensor weights = Tensor::from_data({e_s}, std::move(w), false);
    return sum_all(mul(trace.pi_bar, weights));
}

// L = beta * (1/(B*T)) * sum_{positions} [ln sum_i exp(z_i)]^2
inline Tensor z_loss(const RouterTrace& trace, double beta) {
    Tensor lse = logsumexp_lastdim(trace.logits);  // [B*T]
    return scalar_mul(mean_all(square(lse)), beta);
}

// ---------------------------------------------------------------------------
// Token regeneration: restore the layer to T tokens and close the residual.
// O = Norm(concat(O_TB, W_regen * last T-T_hat input tokens) + X). With
// T == T_hat (the ++ variant, or fused == input count) no tokens are
// regenerated and this reduces to Norm(O_TB + X).
// ---------------------------------------------------------------------------

struct RegenParams {
    Tensor w;          // [D, D]; undefined when T == T_hat
    Tensor norm_gain;  // [D]
    Tensor norm_bias;  // [D]
};

inline RegenParams init_regen_params(int tokens, int fused_tokens, int token_dim, Rng& rng) {
    RegenParams p;
    if (fused_tokens < tokens)
        p.w = xavier_uniform({token_dim, token_dim}, rng, token_dim, token_dim, true);
    p.norm_gain = Tensor::full({token_dim}, 1.0, true);
    p.norm_bias = Tensor::zeros({token_dim}, true);
    return p;
}

inline Tensor token_regeneration(const Tensor& x, const Tensor& o_tb, const RegenParams& p) {
    if (x.ndim() != 3 || o_tb.ndim() != 3 || x.dim(0) != o_tb.dim(0) || x.dim(2) != o_tb.dim(2))
        throw config_error("token_regeneration: incompatible shapes");
    const int batch = x.dim(0), t = x.dim(1), t_hat = o_tb.dim(1), d = x.dim(2);
    if (t_hat > t) throw config_error("token_regeneration: more fused tokens than input tokens");
    Tensor restored = o_tb;
    if (t_hat < t) {
        if (!p.w.defined())
            throw config_error("token_regeneration: missing regeneration weights for T > T_hat");
        Tensor tail = slice_axis1(x, t_hat, t);  // [B, T-T_hat, D]
        Tensor regen =
            matmul(tail.reshape({batch * (t - t_hat), d}), p.w).reshape({batch, t - t_hat, d});
        restored = concat_axis1({o_tb, regen});
    }
    return layer_norm(add(restored, x), p.norm_gain, p.norm_bias);
}

}  // namespace zenith
