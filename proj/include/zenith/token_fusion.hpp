#pragma once

#include <cmath>
#include <vector>

#include "zenith/common.hpp"
#include "zenith/tensor.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Token Fusion: the inter-token interaction half of a layer. Two flavors:
//  - interaction + retokenize (the base variant): O1 = X X^T X W_R, shape
//    [T,k], reshaped without computation into [T_hat, D] tokens, plus a
//    pooled residual path and a post-residual norm. No softmax and no
//    1/sqrt(d) scaling unless the optional softmax flag is set.
//  - tokenwise multi-head attention (the ++ variant): every token owns its
//    per-head q/k/v projections; scores are scaled by 1/sqrt(d_k) and again
//    applied without softmax by default.
// ---------------------------------------------------------------------------

// [T,k] or [B,T,k] -> [T_hat,D] or [B,T_hat,D]. Pure metadata reshape:
// shares storage, performs zero arithmetic.
inline Tensor retokenize(const Tensor& o1, int token_dim) {
    if (o1.ndim() == 2) {
        const std::int64_t total = static_cast<std::int64_t>(o1.dim(0)) * o1.dim(1);
        if (total % token_dim != 0)
            throw config_error("retokenize: T*k = " + format_int(total) + " not divisible by D = " +
                               format_int(token_dim));
        return o1.reshape({static_cast<int>(total / token_dim), token_dim});
    }
    if (o1.ndim() == 3) {
        const std::int64_t total = static_cast<std::int64_t>(o1.dim(1)) * o1.dim(2);
        if (total % token_dim != 0)
            throw config_error("retokenize: T*k = " + format_int(total) + " not divisible by D = " +
                               format_int(token_dim));
        return o1.reshape({o1.dim(0), static_cast<int>(total / token_dim), token_dim});
    }
    throw config_error("retokenize: expects a 2-d or 3-d input");
}

struct RsaParams {
    Tensor w_r;         // [D, k]
    Tensor residual_w;  // [D, D], shared across tokens on the residual path
    Tensor norm_gain;   // [D]
    Tensor norm_bias;   // [D]
};

inline RsaParams init_rsa_params(int token_dim, int fusion_dim, Rng& rng) {
    RsaParams p;
    p.w_r = xavier_uniform({token_dim, fusion_dim}, rng, token_dim, fusion_dim, true);
    p.residual_w = xavier_uniform({token_dim, token_dim}, rng, token_dim, token_dim, true);
    p.norm_gain = Tensor::full({token_dim}, 1.0, true);
    p.norm_bias = Tensor::zeros({token_dim}, true);
    return p;
}

// X [B,T,D] -> X_TB [B,T_hat,D]
inline Tensor rsa_forward(const Tensor& x, const RsaParams& p, int fused_tokens, bool use_softmax) {
    if (x.ndim() != 3) throw config_error("rsa_forward: expects [B,T,D] input");
    const int batch = x.dim(0), t = x.dim(1), d = x.dim(2);
    const int k = p.w_r.dim(1);
    if (p.w_r.dim(0) != d) throw config_error("rsa_forward: W_R rows must equal D");
    if (t * k != fused_tokens * d)
        throw config_error("rsa_forward: T*k = " + format_int(static_cast<std::int64_t>(t) * k) +
                           " must equal T_hat*D = " +
                           format_int(static_cast<std::int64_t>(fused_tokens) * d));
    if (fused_tokens < 1 || t % fused_tokens != 0)
        throw config_error("rsa_forward: T_hat must divide T for the pooled residual path");

    Tensor scores = bmm_nt(x, x);  // [B,T,T]
    if (use_softmax) scores = softmax_lastdim(scores);
    Tensor mixed = bmm(scores, x);  // [B,T,D]
    Tensor o1 = matmul(mixed.reshape({batch * t, d}), p.w_r).reshape({batch, t, k});
    Tensor o_tf = retokenize(o1, d);  // [B,T_hat,D], computation-free

    Tensor lifted = matmul(x.reshape({batch * t, d}), p.residual_w).reshape({batch, t, d});
    Tensor residual = mean_pool_axis1(lifted, t / fused_tokens);  // [B,T_hat,D]
    return layer_norm(add(o_tf, residual), p.norm_gain, p.norm_bias);
}

struct TmhsaParams {
    // token-major, head-minor: q[i*H + h] is token i, head h, each [D, d_k]
    std::vector<Tensor> q, k, v;
    Tensor norm_gain;  // [D]
    Tensor norm_bias;  // [D]
    int heads = 1;
};

inline TmhsaParams init_tmhsa_params(int tokens, int token_dim, int heads, Rng& rng) {
    if (heads < 1 || token_dim % heads != 0)
        throw config_error("tmhsa: head count " + format_int(heads) + " must divide D = " +
                           format_int(token_dim));
    const int d_k = token_dim / heads;
    TmhsaParams p;
    p.heads = heads;
    for (int i = 0; i < tokens; ++i)
        for (int h = 0; h < heads; ++h) {
            p.q.push_back(xavier_uniform({token_dim, d_k}, rng, token_dim, d_k, true));
            p.k.push_back(xavier_uniform({token_dim, d_k}, rng, token_dim, d_k, true));
            p.v.push_back(xavier_uniform({token_dim, d_k}, rng, token_dim, d_k, true));
        }
    p.norm_gain = Tensor::full({token_dim}, 1.0, true);
    p.norm_bias = Tensor::zeros({token_dim}, true);
    return p;
}

// X [B,T,D] -> X_TB [B,T,D]; token count preserved (no retokenization here).
inline Tensor tmhsa_forward(const Tensor& x, const TmhsaParams& p, bool use_softmax) {
    if (x.ndim() != 3) throw config_error("tmhsa_forward: expects [B,T,D] input");
    const int t = x.dim(1), d = x.dim(2);
    const int heads = p.heads;
    if (d % heads != 0) throw config_error("tmhsa_forward: H must divide D");
    const int d_k = d / heads;
    if (static_cast<int>(p.q.size()) != t * heads)
        throw config_error("tmhsa_forward: projection count does not match T*H");

    const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(heads));
    std::vector<Tensor> wq(static_cast<std::size_t>(t)), wk(static_cast<std::size_t>(t)),
        wv(static_cast<std::size_t>(t));
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < t; ++i) {
            wq[static_cast<std::size_t>(i)] = p.q[static_cast<std::size_t>(i) * heads + h];
            wk[static_cast<std::size_t>(i)] = p.k[static_cast<std::size_t>(i) * heads + h];
            wv[static_cast<std::size_t>(i)] = p.v[static_cast<std::size_t>(i) * heads + h];
        }
        Tensor qh = stacked_matmul(x, wq);  // [B,T,d_k]
        Tensor kh = stacked_matmul(x, wk);
        Tensor vh = stacked_matmul(x, wv);
        Tensor scores = scalar_mul(bmm_nt(qh, kh), scale);  // [B,T,T]
        if (use_softmax) scores = softmax_lastdim(scores);
        head_outputs.push_back(bmm(scores, vh));  // [B,T,d_k]
    }
    Tensor o_tf = heads == 1 ? head_outputs[0] : concat_lastdim(head_outputs);  // [B,T,D]
    return layer_norm(add(o_tf, x), p.norm_gain, p.norm_bias);
}

}  // namespace zenith
