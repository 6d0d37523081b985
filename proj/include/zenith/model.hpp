#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zenith/common.hpp"
#include "zenith/featurizer.hpp"
#include "zenith/token_boost.hpp"
#include "zenith/token_fusion.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Model assembly: tokenizer -> L x (Token Fusion -> Token Boost -> token
// regeneration) -> prediction head. Two variants share the skeleton:
//   "zenith":    retokenized self-attention + per-token gated feed-forward
//   "zenith_pp": tokenwise multi-head attention + tokenwise sparse MoE
// ---------------------------------------------------------------------------

struct ModelConfig {
    std::string variant = "zenith";  // "zenith" | "zenith_pp"
    int layers = 1;                  // stacked interaction layers
    int tokens = 8;                  // T, tokens entering every layer
    int token_dim = 64;              // D
    int fusion_dim = 32;             // k, attention output width (zenith)
    int fused_tokens = 4;            // tokens after retokenization (zenith)
    int boost_hidden = 64;           // r, feed-forward / expert hidden width
    int heads = 2;                   // attention heads (zenith_pp)
    int shared_experts = 1;          // always-on experts (zenith_pp)
    int sparse_experts = 4;          // routed experts (zenith_pp)
    int active_experts = 2;          // experts activated per token (zenith_pp)
    int head_hidden = 256;           // prediction-head hidden width
    bool attention_softmax = false;  // optional softmax on attention scores
    bool unweighted_experts = false; // literal unweighted expert sum
    bool shared_token_boost = false; // heterogeneity ablation: shared weights
    std::uint64_t seed = 1;

    bool is_pp() const { return variant == "zenith_pp"; }

    // tokens flowing through Token Boost (the fused count for zenith)
    int boost_tokens() const { return is_pp() ? tokens : fused_tokens; }

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (variant != "zenith" && variant != "zenith_pp")
            out.push_back("variant must be \"zenith\" or \"zenith_pp\", got \"" + variant + "\"");
        if (layers < 1) out.push_back("layers must be >= 1, got " + format_int(layers));
        if (tokens < 1) out.push_back("tokens must be >= 1, got " + format_int(tokens));
        if (token_dim < 1) out.push_back("token_dim must be >= 1, got " + format_int(token_dim));
        if (boost_hidden < 1)
            out.push_back("boost_hidden must be >= 1, got " + format_int(boost_hidden));
        if (head_hidden < 1)
            out.push_back("head_hidden must be >= 1, got " + format_int(head_hidden));
        if (variant == "zenith") {
            if (fusion_dim < 1)
                out.push_back("fusion_dim must be >= 1, got " + format_int(fusion_dim));
            if (fused_tokens < 1)
                out.push_back("fused_tokens must be >= 1, got " + format_int(fused_tokens));
            if (fusion_dim >= 1 && fused_tokens >= 1 && tokens >= 1 && token_dim >= 1) {
                if (static_cast<std::int64_t>(tokens) * fusion_dim !=
                    static_cast<std::int64_t>(fused_tokens) * token_dim)
                    out.push_back("retokenization requires tokens*fusion_dim == "
                                  "fused_tokens*token_dim: " +
                                  format_int(static_cast<std::int64_t>(tokens) * fusion_dim) +
                                  " != " +
                                  format_int(static_cast<std::int64_t>(fused_tokens) * token_dim));
                if (fused_tokens > tokens || tokens % fused_tokens != 0)
                    out.push_back("fused_tokens must divide tokens: " + format_int(fused_tokens) +
                                  " does not divide " + format_int(tokens));
            }
        }
        if (variant == "zenith_pp") {
            if (heads < 1) out.push_back("heads must be >= 1, got " + format_int(heads));
            if (heads >= 1 && token_dim >= 1 && token_dim % heads != 0)
                out.push_back("heads must divide token_dim: " + format_int(heads) +
                              " does not divide " + format_int(token_dim));
            if (sparse_experts < 1)
                out.push_back("sparse_experts must be >= 1, got " + format_int(sparse_experts));
            if (active_experts < 1 || active_experts > sparse_experts)
                out.push_back("active_experts must satisfy 1 <= active_experts <= sparse_experts, "
                              "got " +
                              format_int(active_experts) + " of " + format_int(sparse_experts));
            if (shared_experts < 0)
                out.push_back("shared_experts must be >= 0, got " + format_int(shared_experts));
        }
        return out;
    }

    void validate() const {
        const auto problems = violations();
        if (problems.empty()) return;
        std::string msg = "model config invalid:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw config_error(msg);
    }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    nlohmann::json o;
    o["variant"] = c.variant;
    o["layers"] = c.layers;
    o["tokens"] = c.tokens;
    o["token_dim"] = c.token_dim;
    o["fusion_dim"] = c.fusion_dim;
    o["fused_tokens"] = c.fused_tokens;
    o["boost_hidden"] = c.boost_hidden;
    o["heads"] = c.heads;
    o["shared_experts"] = c.shared_experts;
    o["sparse_experts"] = c.sparse_experts;
    o["active_experts"] = c.active_experts;
    o["head_hidden"] = c.head_hidden;
    o["attention_softmax"] = c.attention_softmax;
    o["unweighted_experts"] = c.unweighted_experts;
    o["shared_token_boost"] = c.shared_token_boost;
    o["seed"] = c.seed;
    return o;
}

namespace detail {

// unknown keys in config files are hard errors (silent typos poison sweeps)
inline void reject_unknown_keys(const nlohmann::json& o, const std::vector<std::string>& known,
                                const std::string& context) {
    if (!o.is_object()) throw config_error(context + ": expected a JSON object");
    for (auto it = o.begin(); it != o.end(); ++it) {
        bool ok = false;
        for (const auto& k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw config_error(context + ": unknown key \"" + it.key() + "\"");
    }
}

}  // namespace detail

inline ModelConfig model_config_from_json(const nlohmann::json& o) {
    detail::reject_unknown_keys(
        o,
        {"variant", "layers", "tokens", "token_dim", "fusion_dim", "fused_tokens", "boost_hidden",
         "heads", "shared_experts", "sparse_experts", "active_experts", "head_hidden",
         "attention_softmax", "unweighted_experts", "shared_token_boost", "seed"},
        "model config");
    ModelConfig c;
    try {
        if (o.contains("variant")) c.variant = o["variant"].get<std::string>();
        if (o.contains("layers")) c.layers = o["layers"].get<int>();
        if (o.contains("tokens")) c.tokens = o["tokens"].get<int>();
        if (o.contains("token_dim")) c.token_dim = o["token_dim"].get<int>();
        if (o.contains("fusion_dim")) c.fusion_dim = o["fusion_dim"].get<int>();
        if (o.contains("fused_tokens")) c.fused_tokens = o["fused_tokens"].get<int>();
        if (o.contains("boost_hidden")) c.boost_hidden = o["boost_hidden"].get<int>();
        if (o.contains("heads")) c.heads = o["heads"].get<int>();
        if (o.contains("shared_experts")) c.shared_experts = o["shared_experts"].get<int>();
        if (o.contains("sparse_experts")) c.sparse_experts = o["sparse_experts"].get<int>();
        if (o.contains("active_experts")) c.active_experts = o["active_experts"].get<int>();
        if (o.contains("head_hidden")) c.head_hidden = o["head_hidden"].get<int>();
        if (o.contains("attention_softmax")) c.attention_softmax = o["attention_softmax"].get<bool>();
        if (o.contains("unweighted_experts"))
            c.unweighted_experts = o["unweighted_experts"].get<bool>();
        if (o.contains("shared_token_boost"))
            c.shared_token_boost = o["shared_token_boost"].get<bool>();
        if (o.contains("seed")) c.seed = o["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("model config: ") + e.what());
    }
    return c;
}

// parameters of one interaction layer; the variant decides which members are
// populated
struct LayerParams {
    RsaParams rsa;                    // zenith fusion
    TmhsaParams tmhsa;                // zenith_pp fusion
    TswigluParams tswiglu;            // zenith boost (tokenwise)
    SharedSwigluParams shared_swiglu; // zenith boost (shared ablation)
    TsmoeParams tsmoe;                // zenith_pp boost
    RegenParams regen;                // regeneration map + closing norm
};

struct ZenithModel {
    ModelConfig cfg;
    FeatureSchema schema;
    TokenPlan plan;
    std::vector<FeatureTable> tables;
    std::vector<TokenProjection> projections;
    std::vector<LayerParams> layers;
    Tensor head_w1, head_b1;  // [T*D, h], [h]
    Tensor head_w2, head_b2;  // [h, 1], [1]
};

inline ZenithModel build_model(const ModelConfig& cfg, const FeatureSchema& schema,
                               const TokenPlan& plan) {
    cfg.validate();
    schema.validate();
    {
        const auto problems = validate_token_plan(schema, plan);
        if (!problems.empty()) {
            std::string msg = "token plan invalid:";
            for (const auto& p : problems) msg += "\n  - " + p;
            throw config_error(msg);
        }
    }
    if (plan.token_count() != cfg.tokens)
        throw config_error("model expects " + format_int(cfg.tokens) +
                           " tokens but the token plan produces " +
                           format_int(plan.token_count()));

    ZenithModel m;
    m.cfg = cfg;
    m.schema = schema;
    m.plan = plan;
    Rng rng(cfg.seed);
    m.tables = init_feature_tables(schema, rng);
    m.projections = init_token_projections(schema, plan, cfg.token_dim, rng);
    for (int l = 0; l < cfg.layers; ++l) {
        LayerParams lp;
        if (cfg.is_pp()) {
            lp.tmhsa = init_tmhsa_params(cfg.tokens, cfg.token_dim, cfg.heads, rng);
            lp.tsmoe = init_tsmoe_params(cfg.tokens, cfg.token_dim, cfg.boost_hidden,
                                         cfg.shared_experts, cfg.sparse_experts,
                                         cfg.active_experts, cfg.shared_token_boost, rng);
            lp.regen = init_regen_params(cfg.tokens, cfg.tokens, cfg.token_dim, rng);
        } else {
            lp.rsa = init_rsa_params(cfg.token_dim, cfg.fusion_dim, rng);
            if (cfg.shared_token_boost)
                lp.shared_swiglu =
                    init_shared_swiglu_params(cfg.token_dim, cfg.boost_hidden, rng);
            else
                lp.tswiglu = init_tswiglu_params(cfg.fused_tokens, cfg.token_dim,
                                                 cfg.boost_hidden, rng);
            lp.regen = init_regen_params(cfg.tokens, cfg.fused_tokens, cfg.token_dim, rng);
        }
        m.layers.push_back(std::move(lp));
    }
    const int flat = cfg.tokens * cfg.token_dim;
    m.head_w1 = xavier_uniform({flat, cfg.head_hidden}, rng, flat, cfg.head_hidden, true);
    m.head_b1 = Tensor::zeros({cfg.head_hidden}, true);
    m.head_w2 = xavier_uniform({cfg.head_hidden, 1}, rng, cfg.head_hidden, 1, true);
    m.head_b2 = Tensor::zeros({1}, true);
    return m;
}

// all trainable tensors in declaration order; the order defines the
// checkpoint payload layout and the optimizer slot mapping
inline std::vector<Tensor> model_parameters(ZenithModel& m) {
    std::vector<Tensor> out;
    for (auto& t : m.tables) {
        if (t.table.defined()) {
            out.push_back(t.table);
        } else {
            out.push_back(t.lift_w);
            out.push_back(t.lift_b);
        }
    }
    for (auto& p : m.projections) {
        out.push_back(p.w1);
        out.push_back(p.b1);
        out.push_back(p.w2);
        out.push_back(p.b2);
    }
    for (auto& lp : m.layers) {
        if (m.cfg.is_pp()) {
            for (auto& w : lp.tmhsa.q) out.push_back(w);
            for (auto& w : lp.tmhsa.k) out.push_back(w);
            for (auto& w : lp.tmhsa.v) out.push_back(w);
            out.push_back(lp.tmhsa.norm_gain);
            out.push_back(lp.tmhsa.norm_bias);
            for (auto& r : lp.tsmoe.routers) out.push_back(r);
            for (auto& e : lp.tsmoe.shared) {
                out.push_back(e.w1);
                out.push_back(e.w2);
                out.push_back(e.w3);
            }
            for (auto& e : lp.tsmoe.sparse) {
                out.push_back(e.w1);
                out.push_back(e.w2);
                out.push_back(e.w3);
            }
        } else {
            out.push_back(lp.rsa.w_r);
            out.push_back(lp.rsa.residual_w);
            out.push_back(lp.rsa.norm_gain);
            out.push_back(lp.rsa.norm_bias);
            if (m.cfg.shared_token_boost) {
                out.push_back(lp.shared_swiglu.w1);
                out.push_back(lp.shared_swiglu.w2);
                out.push_back(lp.shared_swiglu.w3);
            } else {
                for (auto& w : lp.tswiglu.w1) out.push_back(w);
                for (auto& w : lp.tswiglu.w2) out.push_back(w);
                for (auto& w : lp.tswiglu.w3) out.push_back(w);
            }
        }
        if (lp.regen.w.defined()) out.push_back(lp.regen.w);
        out.push_back(lp.regen.norm_gain);
        out.push_back(lp.regen.norm_bias);
    }
    out.push_back(m.head_w1);
    out.push_back(m.head_b1);
    out.push_back(m.head_w2);
    out.push_back(m.head_b2);
    return out;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct ForwardResult {
    Tensor logits;  // [B]
    Tensor probs;   // [B], sigmoid(logits)
    std::vector<RouterTrace> traces;    // one per layer (zenith_pp only)
    std::vector<Tensor> layer_outputs;  // per layer [B,T,D] when captured
};

inline ForwardResult model_forward(const ZenithModel& m, const ExampleBatch& batch,
                                   bool capture_layers = false) {
    const std::vector<Tensor> embeds = embed_batch(m.schema, batch, m.tables);
    Tensor x = build_prime_tokens(embeds, m.plan, m.projections);

    ForwardResult r;
    for (const LayerParams& lp : m.layers) {
        Tensor fused, boosted;
        if (m.cfg.is_pp()) {
            fused = tmhsa_forward(x, lp.tmhsa, m.cfg.attention_softmax);
            RouterTrace trace = route_tokens(fused, lp.tsmoe);
            boosted = tsmoe_forward(fused, lp.tsmoe, trace, m.cfg.unweighted_experts);
            r.traces.push_back(std::move(trace));
        } else {
            fused = rsa_forward(x, lp.rsa, m.cfg.fused_tokens, m.cfg.attention_softmax);
            boosted = m.cfg.shared_token_boost ? shared_swiglu_forward(fused, lp.shared_swiglu)
                                               : tswiglu_forward(fused, lp.tswiglu);
        }
        x = token_regeneration(x, boosted, lp.regen);
        if (capture_layers) r.layer_outputs.push_back(x);
    }

    const int b = x.dim(0);
    Tensor flat = x.reshape({b, m.cfg.tokens * m.cfg.token_dim});
    Tensor hidden = swish(add_rowvec(matmul(flat, m.head_w1), m.head_b1));
    r.logits = add_rowvec(matmul(hidden, m.head_w2), m.head_b2).reshape({b});
    r.probs = sigmoid(r.logits);
    return r;
}

inline Tensor model_predict(const ZenithModel& m, const ExampleBatch& batch) {
    NoGradGuard guard;
    return model_forward(m, batch).probs;
}

// ---------------------------------------------------------------------------
// Parameter / FLOP accounting. Convention: FLOP counts cover matrix products
// only, at 2 ops per multiply-add (2*m*n*p for an m x n by n x p product);
// elementwise work is excluded so the figures match GEMM instrumentation
// exactly.
// ---------------------------------------------------------------------------

struct CostReport {
    std::string variant;
    int layers = 0;
    std::int64_t embedding_params = 0;
    std::int64_t tokenizer_params = 0;
    std::int64_t fusion_params_per_layer = 0;
    std::int64_t boost_params_per_layer = 0;
    std::int64_t regen_params_per_layer = 0;
    std::int64_t interaction_params_per_layer = 0;  // fusion + boost + regen
    std::int64_t norm_params_per_layer = 0;
    std::int64_t head_params = 0;
    std::int64_t total_params = 0;
    std::int64_t activated_params = 0;  // == total unless sparse routing
    std::int64_t tokenizer_flops = 0;   // per example
    std::int64_t layer_flops = 0;       // per example, per layer
    std::int64_t head_flops = 0;        // per example
    std::int64_t flops_per_example = 0;

    nlohmann::json to_json() const {
        nlohmann::json o;
        o["variant"] = variant;
        o["layers"] = layers;
        o["params"]["embedding"] = embedding_params;
        o["params"]["tokenizer"] = tokenizer_params;
        o["params"]["fusion_per_layer"] = fusion_params_per_layer;
        o["params"]["boost_per_layer"] = boost_params_per_layer;
        o["params"]["regen_per_layer"] = regen_params_per_layer;
        o["params"]["interaction_per_layer"] = interaction_params_per_layer;
        o["params"]["norm_per_layer"] = norm_params_per_layer;
        o["params"]["head"] = head_params;
        o["params"]["total"] = total_params;
        o["params"]["activated"] = activated_params;
        o["flops_per_example"]["tokenizer"] = tokenizer_flops;
        o["flops_per_example"]["per_layer"] = layer_flops;
        o["flops_per_example"]["head"] = head_flops;
        o["flops_per_example"]["total"] = flops_per_example;
        o["flop_convention"] = "matrix products only, 2 ops per multiply-add";
        return o;
    }
};

// closed-form accounting for the interaction layers and head alone (no
// feature schema involved)
inline CostReport count_params(const ModelConfig& cfg) {
    cfg.validate();
    CostReport r;
    r.variant = cfg.variant;
    r.layers = cfg.layers;
    const std::int64_t t = cfg.tokens, d = cfg.token_dim, hid = cfg.boost_hidden;
    const std::int64_t bt = cfg.boost_tokens();
    if (cfg.is_pp()) {
        r.fusion_params_per_layer = 3 * t * d * d;
        const std::int64_t router = (cfg.shared_token_boost ? 1 : t) * d * cfg.sparse_experts;
        r.boost_params_per_layer =
            router + 3 * d * hid * (cfg.shared_experts + cfg.sparse_experts);
        r.regen_params_per_layer = 0;
    } else {
        r.fusion_params_per_layer = d * cfg.fusion_dim + d * d;
        r.boost_params_per_layer = 3 * (cfg.shared_token_boost ? 1 : bt) * d * hid;
        r.regen_params_per_layer = cfg.fused_tokens < cfg.tokens ? d * d : 0;
    }
    r.interaction_params_per_layer =
        r.fusion_params_per_layer + r.boost_params_per_layer + r.regen_params_per_layer;
    r.norm_params_per_layer = 4 * d;  // fusion norm + regeneration norm, gain and bias each
    r.head_params = t * d * cfg.head_hidden + 2 * cfg.head_hidden + 1;
    r.total_params =
        cfg.layers * (r.interaction_params_per_layer + r.norm_params_per_layer) + r.head_params;
    r.activated_params = r.total_params;
    if (cfg.is_pp())
        r.activated_params -=
            cfg.layers * 3 * d * hid * (cfg.sparse_experts - cfg.active_experts);

    // per-example forward matrix-product FLOPs
    if (cfg.is_pp()) {
        r.layer_flops = 6 * t * d * d + 4 * t * t * d + 2 * t * d * cfg.sparse_experts +
                        6 * (cfg.shared_experts + cfg.active_experts) * t * d * hid;
    } else {
        r.layer_flops = 4 * t * t * d + 2 * t * d * cfg.fusion_dim + 2 * t * d * d +
                        6 * bt * d * hid +
                        (cfg.fused_tokens < cfg.tokens ? 2 * (t - cfg.fused_tokens) * d * d : 0);
    }
    r.head_flops = 2 * (t * d * cfg.head_hidden + cfg.head_hidden);
    r.flops_per_example = cfg.layers * r.layer_flops + r.head_flops;
    return r;
}

// full accounting including the feature pipeline; the plan must produce
// exactly cfg.tokens tokens
inline CostReport count_params(const ModelConfig& cfg, const FeatureSchema& schema,
                               const TokenPlan& plan) {
    if (plan.token_count() != cfg.tokens)
        throw config_error("count_params: model expects " + format_int(cfg.tokens) +
                           " tokens but the token plan produces " +
                           format_int(plan.token_count()));
    CostReport r = count_params(cfg);
    for (const FeatureSpec& f : schema.features)
        r.embedding_params += f.sparse() ? f.vocab * f.dim : 2 * f.dim;
    const std::int64_t d = cfg.token_dim;
    for (int tk = 0; tk < plan.token_count(); ++tk) {
        const std::int64_t in = plan.input_dim(schema, tk);
        r.tokenizer_params += in * 2 * d + 2 * d + 2 * d * d + d;
        r.tokenizer_flops += 4 * in * d + 4 * d * d;
    }
    r.total_params += r.embedding_params + r.tokenizer_params;
    r.activated_params += r.embedding_params + r.tokenizer_params;
    r.flops_per_example += r.tokenizer_flops;
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "ZNTH", u32 format version, JSON config block (model
// config + schema + token plan), u64 value count, raw f64 payload in
// model_parameters() order. Byte layout is native-endian.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw io_error("checkpoint '" + path + "': truncated");
    return v;
}

}  // namespace detail

inline void save_checkpoint(ZenithModel& m, const std::string& path) {
    nlohmann::json meta;
    meta["model"] = model_config_to_json(m.cfg);
    meta["schema"] = schema_to_json(m.schema);
    meta["token_plan"] = token_plan_to_json(m.plan);
    const std::string meta_str = meta.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("checkpoint: cannot write '" + path + "'");
    out.write("ZNTH", 4);
    detail::write_pod<std::uint32_t>(out, detail::kCheckpointVersion);
    detail::write_pod<std::uint64_t>(out, meta_str.size());
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    const std::vector<Tensor> params = model_parameters(m);
    std::uint64_t values = 0;
    for (const Tensor& p : params) values += static_cast<std::uint64_t>(p.numel());
    detail::write_pod<std::uint64_t>(out, values);
    for (const Tensor& p : params)
        out.write(reinterpret_cast<const char*>(p.data()),
                  static_cast<std::streamsize>(sizeof(double) * p.numel()));
    if (!out) throw io_error("checkpoint: write failed for '" + path + "'");
}

inline ZenithModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("checkpoint: cannot read '" + path + "'");
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ZNTH", 4) != 0)
        throw io_error("checkpoint '" + path + "': bad magic bytes");
    const auto version = detail::read_pod<std::uint32_t>(in, path);
    if (version != detail::kCheckpointVersion)
        throw io_error("checkpoint '" + path + "': unsupported format version " +
                       format_int(version));
    const auto meta_len = detail::read_pod<std::uint64_t>(in, path);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw io_error("checkpoint '" + path + "': truncated config block");

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_str);
    } catch (const nlohmann::json::exception& e) {
        throw io_error("checkpoint '" + path + "': config block is not valid JSON: " + e.what());
    }
    const ModelConfig cfg = model_config_from_json(meta.at("model"));
    const FeatureSchema schema = schema_from_json(meta.at("schema"));
    const TokenPlan plan = token_plan_from_json(meta.at("token_plan"), schema);
    ZenithModel m = build_model(cfg, schema, plan);

    const auto values = detail::read_pod<std::uint64_t>(in, path);
    std::vector<Tensor> params = model_parameters(m);
    std::uint64_t expected = 0;
    for (const Tensor& p : params) expected += static_cast<std::uint64_t>(p.numel());
    if (values != expected)
        throw io_error("checkpoint '" + path + "': payload holds " + format_int(values) +
                       " values but the config implies " + format_int(expected));
    for (Tensor& p : params) {
        in.read(reinterpret_cast<char*>(p.data()),
                static_cast<std::streamsize>(sizeof(double) * p.numel()));
        if (!in) throw io_error("checkpoint '" + path + "': truncated payload");
    }
    in.peek();
    if (!in.eof()) throw io_error("checkpoint '" + path + "': trailing bytes after payload");
    return m;
}

}  // namespace zenith
