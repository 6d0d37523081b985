#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "zenith/common.hpp"
#include "zenith/tensor.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Feature schema and the token plan that partitions features into prime
// tokens. Three tokenization rules govern a valid plan:
//   rule 1: id-kind features get a token of their own
//   rule 2: every feature belongs to exactly one token, whole
//   rule 3: when one semantic group spans several tokens, the per-token
//           member counts differ by at most 1 (balanced information load)
// ---------------------------------------------------------------------------

enum class FeatureKind { id, categorical, dense };

inline const char* feature_kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::id: return "id";
        case FeatureKind::categorical: return "categorical";
        case FeatureKind::dense: return "dense";
    }
    return "?";
}

inline FeatureKind feature_kind_from(const std::string& s) {
    if (s == "id") return FeatureKind::id;
    if (s == "categorical") return FeatureKind::categorical;
    if (s == "dense") return FeatureKind::dense;
    throw config_error("unknown feature kind '" + s + "'");
}

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::categorical;
    std::int64_t vocab = 0;  // sparse kinds only
    int dim = 1;             // embedding dimension
    std::string group;       // semantic group label

    bool sparse() const { return kind != FeatureKind::dense; }
};

struct FeatureSchema {
    std::vector<FeatureSpec> features;

    int feature_count() const { return static_cast<int>(features.size()); }

    void validate() const {
        std::vector<std::string> problems;
        if (features.empty()) problems.push_back("schema has no features (K >= 1 required)");
        std::set<std::string> seen;
        for (std::size_t i = 0; i < features.size(); ++i) {
            const FeatureSpec& f = features[i];
            if (f.name.empty()) problems.push_back("feature " + format_int(i) + " has empty name");
            if (!seen.insert(f.name).second) problems.push_back("duplicate feature name '" + f.name + "'");
            if (f.sparse() && f.vocab < 2)
                problems.push_back("sparse feature '" + f.name + "' needs vocabulary >= 2");
            if (f.dim < 1) problems.push_back("feature '" + f.name + "' needs embedding dim >= 1");
            if (f.group.empty()) problems.push_back("feature '" + f.name + "' has no semantic group");
        }
        if (!problems.empty()) {
            std::string msg = "invalid schema:";
            for (const auto& p : problems) msg += "\n  - " + p;
            throw config_error(msg);
        }
    }
};

struct TokenPlan {
    std::vector<std::vector<int>> members;  // feature indices per token

    int token_count() const { return static_cast<int>(members.size()); }

    int input_dim(const FeatureSchema& schema, int token) const {
        int d = 0;
        for (int f : members[static_cast<std::size_t>(token)])
            d += schema.features[static_cast<std::size_t>(f)].dim;
        return d;
    }
};

// Returns every violated tokenization rule; empty means the plan is valid.
inline std::vector<std::string> validate_token_plan(const FeatureSchema& schema, const TokenPlan& plan) {
    std::vector<std::string> violations;
    const int k = schema.feature_count();

    std::vector<int> appearances(static_cast<std::size_t>(k), 0);
    for (std::size_t t = 0; t < plan.members.size(); ++t) {
        if (plan.members[t].empty())
            violations.push_back("token " + format_int(t) + " has no member features");
        for (int f : plan.members[t]) {
            if (f < 0 || f >= k) {
                violations.push_back("token " + format_int(t) + " references unknown feature index " +
                                     format_int(f));
                continue;
            }
            ++appearances[static_cast<std::size_t>(f)];
            if (schema.features[static_cast<std::size_t>(f)].kind == FeatureKind::id &&
                plan.members[t].size() > 1)
                violations.push_back("rule 1: id feature '" + schema.features[static_cast<std::size_t>(f)].name +
                                     "' shares token " + format_int(t) + " with " +
                                     format_int(plan.members[t].size() - 1) + " other feature(s)");
        }
    }
    for (int f = 0; f < k; ++f) {
        if (appearances[static_cast<std::size_t>(f)] == 0)
            violations.push_back("rule 2: feature '" + schema.features[static_cast<std::size_t>(f)].name +
                                 "' is not assigned to any token");
        else if (appearances[static_cast<std::size_t>(f)] > 1)
            violations.push_back("rule 2: feature '" + schema.features[static_cast<std::size_t>(f)].name +
                                 "' appears in " + format_int(appearances[static_cast<std::size_t>(f)]) +
                                 " tokens");
    }

    // rule 3 over non-id features, per semantic group
    std::map<std::string, std::vector<int>> group_token_counts;
    for (std::size_t t = 0; t < plan.members.size(); ++t) {
        std::map<std::string, int> counts;
        for (int f : plan.members[t]) {
            if (f < 0 || f >= k) continue;
            const FeatureSpec& spec = schema.features[static_cast<std::size_t>(f)];
            if (spec.kind != FeatureKind::id) ++counts[spec.group];
        }
        for (const auto& [group, count] : counts) group_token_counts[group].push_back(count);
    }
    for (const auto& [group, counts] : group_token_counts) {
        int lo = counts[0], hi = counts[0];
        for (int c : counts) {
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
        if (hi - lo > 1) {
            std::string sizes;
            for (std::size_t i = 0; i < counts.size(); ++i)
                sizes += (i ? "," : "") + format_int(counts[i]);
            violations.push_back("rule 3: semantic group '" + group +
                                 "' is split into tokens with unbalanced sizes {" + sizes + "}");
        }
    }
    return violations;
}

// id features get their own token; remaining features are grouped by their
// semantic label in order of first appearance.
inline TokenPlan default_token_plan(const FeatureSchema& schema) {
    TokenPlan plan;
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<int>> grouped;
    for (int f = 0; f < schema.feature_count(); ++f) {
        const FeatureSpec& spec = schema.features[static_cast<std::size_t>(f)];
        if (spec.kind == FeatureKind::id) {
            plan.members.push_back({f});
        } else {
            if (!grouped.count(spec.group)) group_order.push_back(spec.group);
            grouped[spec.group].push_back(f);
        }
    }
    for (const std::string& g : group_order) plan.members.push_back(grouped[g]);
    return plan;
}

// Desk-scale default: 2 id features, 18 categoricals in 5 semantic groups,
// 4 dense features -> K=24 features, T=8 tokens.
inline FeatureSchema default_desk_schema() {
    FeatureSchema schema;
    schema.features.push_back({"user_id", FeatureKind::id, 10000, 8, "user"});
    schema.features.push_back({"item_id", FeatureKind::id, 5000, 8, "item"});
    const int group_sizes[5] = {4, 4, 4, 3, 3};
    for (int g = 0; g < 5; ++g)
        for (int j = 0; j < group_sizes[g]; ++j)
            schema.features.push_back({"cat_g" + format_int(g) + "_" + format_int(j),
                                       FeatureKind::categorical, 20, 4, "g" + format_int(g)});
    for (int j = 0; j < 4; ++j)
        schema.features.push_back({"dense_" + format_int(j), FeatureKind::dense, 0, 2, "dense"});
    schema.validate();
    return schema;
}

// ---------------------------------------------------------------------------
// Batches and embedding
// ---------------------------------------------------------------------------

struct ExampleBatch {
    std::int64_t size = 0;
    std::vector<std::vector<std::int64_t>> sparse;  // [K][B]; empty for dense features
    std::vector<std::vector<double>> dense;         // [K][B]; empty for sparse features
    std::vector<std::int64_t> user_id;              // grouping key per example
    std::vector<double> label;                      // 0/1
};

inline void validate_batch(const FeatureSchema& schema, const ExampleBatch& batch) {
    if (batch.size < 1) throw input_error("batch: B >= 1 required");
    if (static_cast<int>(batch.sparse.size()) != schema.feature_count() ||
        static_cast<int>(batch.dense.size()) != schema.feature_count())
        throw input_error("batch: feature column count does not match schema");
    for (double y : batch.label)
        if (y != 0.0 && y != 1.0) throw input_error("batch: labels must be 0 or 1");
    for (int f = 0; f < schema.feature_count(); ++f) {
        const FeatureSpec& spec = schema.features[static_cast<std::size_t>(f)];
        const auto& col_s = batch.sparse[static_cast<std::size_t>(f)];
        const auto& col_d = batch.dense[static_cast<std::size_t>(f)];
        if (spec.sparse()) {
            if (static_cast<std::int64_t>(col_s.size()) != batch.size)
                throw input_error("batch: sparse column '" + spec.name + "' has wrong length");
            for (std::int64_t v : col_s)
                if (v < 0 || v >= spec.vocab)
                    throw input_error("batch: value " + format_int(v) + " out of vocabulary for '" +
                                      spec.name + "'");
        } else if (static_cast<std::int64_t>(col_d.size()) != batch.size) {
            throw input_error("batch: dense column '" + spec.name + "' has wrong length");
        }
    }
}

// Per-feature learnable parameters: a table row per vocabulary entry for
// sparse kinds, an affine lift (value*w + b) for dense kinds.
struct FeatureTable {
    Tensor table;   // [vocab, dim], sparse kinds
    Tensor lift_w;  // [dim], dense kind
    Tensor lift_b;  // [dim]
};

inline std::vector<FeatureTable> init_feature_tables(const FeatureSchema& schema, Rng& rng) {
    std::vector<FeatureTable> tables;
    tables.reserve(schema.features.size());
    for (const FeatureSpec& f : schema.features) {
        FeatureTable t;
        if (f.sparse()) {
            t.table = xavier_uniform({static_cast<int>(f.vocab), f.dim}, rng,
                                     static_cast<int>(f.vocab), f.dim, true);
        } else {
            t.lift_w = xavier_uniform({f.dim}, rng, 1, f.dim, true);
            t.lift_b = Tensor::zeros({f.dim}, true);
        }
        tables.push_back(t);
    }
    return tables;
}

// One [B, dim] embedding per feature.
inline std::vector<Tensor> embed_batch(const FeatureSchema& schema, const ExampleBatch& batch,
                                       const std::vector<FeatureTable>& tables) {
    if (tables.size() != schema.features.size())
        throw config_error("embed_batch: table count does not match schema");
    std::vector<Tensor> out;
    out.reserve(schema.features.size());
    for (int f = 0; f < schema.feature_count(); ++f) {
        const FeatureSpec& spec = schema.features[static_cast<std::size_t>(f)];
        const FeatureTable& t = tables[static_cast<std::size_t>(f)];
        if (spec.sparse()) {
            const auto& idx = batch.sparse[static_cast<std::size_t>(f)];
            for (std::int64_t v : idx)
                if (v < 0 || v >= spec.vocab)
                    throw input_error("embed_batch: index " + format_int(v) +
                                      " out of vocabulary for feature '" + spec.name + "'");
            out.push_back(embedding_lookup(t.table, idx));
        } else {
            out.push_back(dense_lift(batch.dense[static_cast<std::size_t>(f)], t.lift_w, t.lift_b));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prime tokenization: concat member embeddings, project through a one-hidden
// layer MLP (width 2D, Swish) to the shared token dimension D.
// ---------------------------------------------------------------------------

struct TokenProjection {
    Tensor w1;  // [in, 2D]
    Tensor b1;  // [2D]
    Tensor w2;  // [2D, D]
    Tensor b2;  // [D]
};

inline std::vector<TokenProjection> init_token_projections(const FeatureSchema& schema,
                                                           const TokenPlan& plan, int token_dim,
                                                           Rng& rng) {
    std::vector<TokenProjection> projs;
    projs.reserve(plan.members.size());
    const int hidden = 2 * token_dim;
    for (int t = 0; t < plan.token_count(); ++t) {
        const int in = plan.input_dim(schema, t);
        TokenProjection p;
        p.w1 = xavier_uniform({in, hidden}, rng, in, hidden, true);
        p.b1 = Tensor::zeros({hidden}, true);
        p.w2 = xavier_uniform({hidden, token_dim}, rng, hidden, token_dim, true);
        p.b2 = Tensor::zeros({token_dim}, true);
        projs.push_back(p);
    }
    return projs;
}

// embeddings: per-feature [B, dim] list -> TokenMatrix [B, T, D]
inline Tensor build_prime_tokens(const std::vector<Tensor>& embeddings, const TokenPlan& plan,
                                 const std::vector<TokenProjection>& projections) {
    if (projections.size() != plan.members.size())
        throw config_error("build_prime_tokens: projection count does not match plan");
    std::vector<Tensor> tokens;
    tokens.reserve(plan.members.size());
    for (int t = 0; t < plan.token_count(); ++t) {
        std::vector<Tensor> parts;
        for (int f : plan.members[static_cast<std::size_t>(t)]) {
            if (f < 0 || f >= static_cast<int>(embeddings.size()))
                throw config_error("build_prime_tokens: plan references missing embedding " +
                                   format_int(f));
            parts.push_back(embeddings[static_cast<std::size_t>(f)]);
        }
        Tensor cat = parts.size() == 1 ? parts[0] : concat_lastdim(parts);
        const TokenProjection& p = projections[static_cast<std::size_t>(t)];
        if (cat.dim(1) != p.w1.dim(0))
            throw config_error("build_prime_tokens: token " + format_int(t) + " input dim " +
                               format_int(cat.dim(1)) + " does not match projection " +
                               format_int(p.w1.dim(0)));
        Tensor hidden = swish(add_rowvec(matmul(cat, p.w1), p.b1));
        Tensor token = add_rowvec(matmul(hidden, p.w2), p.b2);  // [B, D]
        const int batch = token.dim(0);
        tokens.push_back(token.reshape({batch, 1, token.dim(1)}));
    }
    return concat_axis1(tokens);
}

// ---------------------------------------------------------------------------
// Serialization (dataset sidecars, checkpoints, config files)
// ---------------------------------------------------------------------------

inline nlohmann::json schema_to_json(const FeatureSchema& schema) {
    nlohmann::json arr = nlohmann::json::array();
    for (const FeatureSpec& f : schema.features) {
        nlohmann::json o;
        o["name"] = f.name;
        o["kind"] = feature_kind_name(f.kind);
        o["vocab"] = f.vocab;
        o["dim"] = f.dim;
        o["group"] = f.group;
        arr.push_back(o);
    }
    return arr;
}

inline FeatureSchema schema_from_json(const nlohmann::json& arr) {
    FeatureSchema schema;
    for (const auto& o : arr) {
        FeatureSpec f;
        f.name = o.at("name").get<std::string>();
        f.kind = feature_kind_from(o.at("kind").get<std::string>());
        f.vocab = o.at("vocab").get<std::int64_t>();
        f.dim = o.at("dim").get<int>();
        f.group = o.at("group").get<std::string>();
        schema.features.push_back(f);
    }
    schema.validate();
    return schema;
}

inline nlohmann::json token_plan_to_json(const TokenPlan& plan) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& members : plan.members) arr.push_back(members);
    return arr;
}

inline TokenPlan token_plan_from_json(const nlohmann::json& arr, const FeatureSchema& schema) {
    TokenPlan plan;
    for (const auto& members : arr) plan.members.push_back(members.get<std::vector<int>>());
    const auto problems = validate_token_plan(schema, plan);
    if (!problems.empty()) {
        std::string msg = "token plan invalid:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw config_error(msg);
    }
    return plan;
}

}  // namespace zenith
