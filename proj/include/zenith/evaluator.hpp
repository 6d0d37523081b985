#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "zenith/datagen.hpp"
#include "zenith/metrics.hpp"
#include "zenith/model.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Evaluation report and the token-similarity probe used to quantify how
// heterogeneous the per-layer token representations stay.
// ---------------------------------------------------------------------------

struct EvalReport {
    double auc_value = 0.0;
    double uauc_value = 0.0;
    double logloss_value = 0.0;
    std::int64_t n_examples = 0;
    std::int64_t users_scored = 0;
    std::int64_t users_skipped = 0;
    std::vector<double> layer_mean_abs_cos;  // filled by evaluate_with_probe

    nlohmann::json to_json() const {
        nlohmann::json o;
        o["auc"] = auc_value;
        o["uauc"] = uauc_value;
        o["logloss"] = logloss_value;
        o["n_examples"] = n_examples;
        o["n_users_scored"] = users_scored;
        o["n_users_skipped"] = users_skipped;
        if (!layer_mean_abs_cos.empty()) o["layer_mean_abs_cos"] = layer_mean_abs_cos;
        return o;
    }
};

struct SimilarityMatrix {
    int layer = 1;   // 1-based layer index
    int tokens = 0;  // matrix is tokens x tokens
    std::vector<double> values;
    bool zero_norm_seen = false;

    double at(int i, int j) const {
        return values[static_cast<std::size_t>(i) * tokens + static_cast<std::size_t>(j)];
    }

    double mean_off_diagonal() const {
        if (tokens < 2) return 0.0;
        double s = 0.0;
        for (int i = 0; i < tokens; ++i)
            for (int j = 0; j < tokens; ++j)
                if (i != j) s += at(i, j);
        return s / static_cast<double>(static_cast<std::int64_t>(tokens) * (tokens - 1));
    }

    std::string to_csv() const {
        std::string out;
        for (int i = 0; i < tokens; ++i) {
            for (int j = 0; j < tokens; ++j) {
                if (j) out += ',';
                out += format_double(at(i, j));
            }
            out += '\n';
        }
        return out;
    }
};

namespace detail {

// batch-mean pairwise |cos| of token rows in a captured [B,T,D] activation
inline SimilarityMatrix similarity_of_output(const Tensor& out, int layer) {
    SimilarityMatrix sim;
    sim.layer = layer;
    const int b = out.dim(0), t = out.dim(1), d = out.dim(2);
    sim.tokens = t;
    sim.values.assign(static_cast<std::size_t>(t) * t, 0.0);
    const double* p = out.data();
    std::vector<double> norms(static_cast<std::size_t>(t));
    for (int ex = 0; ex < b; ++ex) {
        const double* rows = p + static_cast<std::int64_t>(ex) * t * d;
        for (int i = 0; i < t; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += rows[i * d + j] * rows[i * d + j];
            norms[static_cast<std::size_t>(i)] = std::sqrt(s);
        }
        for (int i = 0; i < t; ++i) {
            for (int j = i; j < t; ++j) {
                double value;
                if (norms[static_cast<std::size_t>(i)] == 0.0 ||
                    norms[static_cast<std::size_t>(j)] == 0.0) {
                    value = 0.0;  // zero-norm token: pair reported as 0, flagged
                    sim.zero_norm_seen = true;
                } else if (i == j) {
                    value = 1.0;
                } else {
                    double dot = 0.0;
                    for (int c = 0; c < d; ++c) dot += rows[i * d + c] * rows[j * d + c];
                    value = std::abs(dot) /
                            (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
                }
                sim.values[static_cast<std::size_t>(i) * t + j] += value;
                if (i != j) sim.values[static_cast<std::size_t>(j) * t + i] += value;
            }
        }
    }
    for (double& v : sim.values) v /= static_cast<double>(b);
    return sim;
}

}  // namespace detail

// |cos| similarity of the token pairs in the given layer's output (1-based),
// averaged over the batch
inline SimilarityMatrix token_similarity_probe(const ZenithModel& m, const ExampleBatch& batch,
                                               int layer) {
    if (layer < 1 || layer > m.cfg.layers)
        throw input_error("token_similarity_probe: layer " + format_int(layer) +
                          " outside 1.." + format_int(m.cfg.layers));
    NoGradGuard guard;
    ForwardResult fr = model_forward(m, batch, true);
    return detail::similarity_of_output(fr.layer_outputs[static_cast<std::size_t>(layer - 1)],
                                        layer);
}

// ---------------------------------------------------------------------------
// Metric evaluation over a dataset, batched. Works for any model providing
// model_forward.
// ---------------------------------------------------------------------------

namespace detail {

template <typename ModelT>
void collect_predictions(const ModelT& m, const Dataset& data, int batch_size,
                         std::vector<double>& probs, std::vector<std::int64_t>& users,
                         std::vector<double>& labels) {
    NoGradGuard guard;
    std::vector<std::int64_t> rows;
    for (std::int64_t start = 0; start < data.size(); start += batch_size) {
        const std::int64_t stop = std::min<std::int64_t>(start + batch_size, data.size());
        rows.resize(static_cast<std::size_t>(stop - start));
        std::iota(rows.begin(), rows.end(), start);
        const ExampleBatch batch = data.slice_batch(rows);
        ForwardResult fr = model_forward(m, batch);
        const double* p = fr.probs.data();
        for (std::int64_t i = 0; i < stop - start; ++i) {
            probs.push_back(p[i]);
            users.push_back(batch.user_id[static_cast<std::size_t>(i)]);
            labels.push_back(batch.label[static_cast<std::size_t>(i)]);
        }
    }
}

}  // namespace detail

template <typename ModelT>
EvalReport evaluate_model(const ModelT& m, const Dataset& data, int batch_size = 512) {
    if (data.size() < 1) throw input_error("evaluate_model: empty dataset");
    std::vector<double> probs, labels;
    std::vector<std::int64_t> users;
    detail::collect_predictions(m, data, batch_size, probs, users, labels);

    EvalReport report;
    report.n_examples = data.size();
    report.auc_value = auc(probs, labels);
    const UaucResult u = uauc(probs, labels, users);
    report.uauc_value = u.value;
    report.users_scored = u.users_scored;
    report.users_skipped = u.users_skipped;
    report.logloss_value = logloss(probs, labels);
    return report;
}

// evaluation plus the per-layer heterogeneity probe on the first probe_rows
// examples
inline EvalReport evaluate_with_probe(const ZenithModel& m, const Dataset& data,
                                      int batch_size = 512, int probe_rows = 256) {
    EvalReport report = evaluate_model(m, data, batch_size);
    const std::int64_t n = std::min<std::int64_t>(probe_rows, data.size());
    std::vector<std::int64_t> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    const ExampleBatch batch = data.slice_batch(rows);
    for (int layer = 1; layer <= m.cfg.layers; ++layer)
        report.layer_mean_abs_cos.push_back(
            token_similarity_probe(m, batch, layer).mean_off_diagonal());
    return report;
}

// ---------------------------------------------------------------------------
// Baselines for the learning-gap acceptance check. Both train under the same
// loop/optimizer as the main model.
// ---------------------------------------------------------------------------

// logistic regression on raw one-hot/dense features: one scalar weight per
// vocabulary entry plus a scalar slope/intercept pair per dense feature
struct LogisticModel {
    FeatureSchema schema;
    std::vector<FeatureTable> tables;  // dim-1 weight tables
    Tensor bias;                       // [1]
};

inline LogisticModel build_logistic_model(const FeatureSchema& schema) {
    schema.validate();
    LogisticModel m;
    m.schema = schema;
    for (const FeatureSpec& f : schema.features) {
        FeatureTable t;
        if (f.sparse()) {
            t.table = Tensor::zeros({static_cast<int>(f.vocab), 1}, true);
        } else {
            t.lift_w = Tensor::zeros({1}, true);
            t.lift_b = Tensor::zeros({1}, true);
        }
        m.tables.push_back(std::move(t));
    }
    m.bias = Tensor::zeros({1}, true);
    return m;
}

inline std::vector<Tensor> model_parameters(LogisticModel& m) {
    std::vector<Tensor> out;
    for (auto& t : m.tables) {
        if (t.table.defined()) {
            out.push_back(t.table);
        } else {
            out.push_back(t.lift_w);
            out.push_back(t.lift_b);
        }
    }
    out.push_back(m.bias);
    return out;
}

inline ForwardResult model_forward(const LogisticModel& m, const ExampleBatch& batch) {
    // dim-1 tables turn the embedding machinery into per-feature scalar terms
    const std::vector<Tensor> terms = embed_batch(m.schema, batch, m.tables);
    Tensor sum = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) sum = add(sum, terms[i]);
    const int b = sum.dim(0);
    ForwardResult r;
    r.logits = add_rowvec(sum, m.bias).reshape({b});
    r.probs = sigmoid(r.logits);
    return r;
}

// plain 2-layer MLP over the concatenated feature embeddings (no token
// structure, no interaction layers)
struct MlpModel {
    FeatureSchema schema;
    std::vector<FeatureTable> tables;
    Tensor w1, b1;  // [sum_dim, hidden], [hidden]
    Tensor w2, b2;  // [hidden, 1], [1]
};

inline MlpModel build_mlp_model(const FeatureSchema& schema, int hidden, std::uint64_t seed) {
    schema.validate();
    if (hidden < 1) throw config_error("mlp baseline: hidden width must be >= 1");
    MlpModel m;
    m.schema = schema;
    Rng rng(seed);
    m.tables = init_feature_tables(schema, rng);
    int sum_dim = 0;
    for (const FeatureSpec& f : schema.features) sum_dim += f.dim;
    m.w1 = xavier_uniform({sum_dim, hidden}, rng, sum_dim, hidden, true);
    m.b1 = Tensor::zeros({hidden}, true);
    m.w2 = xavier_uniform({hidden, 1}, rng, hidden, 1, true);
    m.b2 = Tensor::zeros({1}, true);
    return m;
}

inline std::vector<Tensor> model_parameters(MlpModel& m) {
    std::vector<Tensor> out;
    for (auto& t : m.tables) {
        if (t.table.defined()) {
            out.push_back(t.table);
        } else {
            out.push_back(t.lift_w);
            out.push_back(t.lift_b);
        }
    }
    out.push_back(m.w1);
    out.push_back(m.b1);
    out.push_back(m.w2);
    out.push_back(m.b2);
    return out;
}

inline ForwardResult model_forward(const MlpModel& m, const ExampleBatch& batch) {
    const std::vector<Tensor> embeds = embed_batch(m.schema, batch, m.tables);
    Tensor cat = embeds.size() == 1 ? embeds[0] : concat_lastdim(embeds);
    Tensor hidden = swish(add_rowvec(matmul(cat, m.w1), m.b1));
    const int b = cat.dim(0);
    ForwardResult r;
    r.logits = add_rowvec(matmul(hidden, m.w2), m.b2).reshape({b});
    r.probs = sigmoid(r.logits);
    return r;
}

}  // namespace zenith
