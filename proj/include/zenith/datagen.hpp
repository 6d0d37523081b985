#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zenith/common.hpp"
#include "zenith/featurizer.hpp"
#include "zenith/metrics.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Synthetic CTR generator. Labels come from a factorization-machine style
// ground truth: logit = bias + sum over planted pairs (i<j) of
// coeff[i,j] * <u_i(x_i), u_j(x_j)> plus optional Gaussian noise, where the
// u's are fixed random latent embeddings. There are no main effects, so a
// linear model cannot beat chance while interaction models can -- that gap
// is what the end-to-end acceptance check measures.
// ---------------------------------------------------------------------------

struct GroundTruthSpec {
    int latent_dim = 8;
    double bias = 0.0;
    double noise_temp = 0.0;     // stddev of logit noise
    std::uint64_t seed = 1;      // fixes the latent embeddings
    std::vector<double> coeff;   // K*K row-major, symmetric, zero diagonal

    double coeff_at(int i, int j, int k) const {
        return coeff[static_cast<std::size_t>(i) * k + j];
    }

    void set_coeff(int i, int j, int k, double c) {
        coeff[static_cast<std::size_t>(i) * k + j] = c;
        coeff[static_cast<std::size_t>(j) * k + i] = c;
    }

    void validate(int k) const {
        if (latent_dim < 1) throw config_error("ground truth: latent_dim >= 1 required");
        if (noise_temp < 0) throw config_error("ground truth: noise_temp must be >= 0");
        if (static_cast<std::int64_t>(coeff.size()) != static_cast<std::int64_t>(k) * k)
            throw config_error("ground truth: coefficient matrix must be K x K");
        for (int i = 0; i < k; ++i) {
            if (coeff_at(i, i, k) != 0.0)
                throw config_error("ground truth: coefficient diagonal must be zero");
            for (int j = 0; j < i; ++j)
                if (coeff_at(i, j, k) != coeff_at(j, i, k))
                    throw config_error("ground truth: coefficient matrix must be symmetric");
        }
    }
};

// Planted interactions across categorical/dense features (id features left
// out: their vocabularies are too large to estimate from a single desk-scale
// pass, which would make the Bayes bound unreachable by construction).
inline GroundTruthSpec default_ground_truth(const FeatureSchema& schema, double strength = 1.0,
                                            std::uint64_t seed = 1) {
    const int k = schema.feature_count();
    GroundTruthSpec spec;
    spec.seed = seed;
    spec.coeff.assign(static_cast<std::size_t>(k) * k, 0.0);
    std::vector<int> eligible;
    for (int f = 0; f < k; ++f)
        if (schema.features[static_cast<std::size_t>(f)].kind != FeatureKind::id) eligible.push_back(f);
    // a chain plus a few long-range pairs, all at the same magnitude
    for (std::size_t i = 0; i + 1 < eligible.size(); i += 2)
        spec.set_coeff(eligible[i], eligible[i + 1], k, strength);
    for (std::size_t i = 0; i + 5 < eligible.size(); i += 5)
        spec.set_coeff(eligible[i], eligible[i + 5], k, strength);
    return spec;
}

namespace detail {

struct LatentModel {
    // sparse feature: vocab*latent_dim values; dense feature: latent_dim values
    std::vector<std::vector<double>> u;
};

inline LatentModel build_latents(const FeatureSchema& schema, const GroundTruthSpec& spec) {
    LatentModel m;
    Rng rng(spec.seed);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
    for (const FeatureSpec& f : schema.features) {
        const std::int64_t rows = f.sparse() ? f.vocab : 1;
        std::vector<double> v(static_cast<std::size_t>(rows) * spec.latent_dim);
        for (auto& x : v) x = rng_normal(rng) * inv_sqrt;
        m.u.push_back(std::move(v));
    }
    return m;
}

// one example's feature values; sparse and dense slots both sized K
struct DrawnExample {
    std::vector<std::int64_t> sparse;
    std::vector<double> dense;
};

inline void draw_example(const FeatureSchema& schema, Rng& rng, DrawnExample& ex) {
    const int k = schema.feature_count();
    ex.sparse.assign(static_cast<std::size_t>(k), 0);
    ex.dense.assign(static_cast<std::size_t>(k), 0.0);
    for (int f = 0; f < k; ++f) {
        const FeatureSpec& spec = schema.features[static_cast<std::size_t>(f)];
        if (spec.sparse())
            ex.sparse[static_cast<std::size_t>(f)] = rng_index(rng, spec.vocab);
        else
            ex.dense[static_cast<std::size_t>(f)] = rng_normal(rng);
    }
}

inline double true_logit(const FeatureSchema& schema, const GroundTruthSpec& spec,
                         const LatentModel& latents, const DrawnExample& ex) {
    const int k = schema.feature_count();
    const int dl = spec.latent_dim;
    double s = spec.bias;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            const double c = spec.coeff_at(i, j, k);
            if (c == 0.0) continue;
            const double* ui = latents.u[static_cast<std::size_t>(i)].data() +
                               (schema.features[static_cast<std::size_t>(i)].sparse()
                                    ? ex.sparse[static_cast<std::size_t>(i)] * dl
                                    : 0);
            const double* uj = latents.u[static_cast<std::size_t>(j)].data() +
                               (schema.features[static_cast<std::size_t>(j)].sparse()
                                    ? ex.sparse[static_cast<std::size_t>(j)] * dl
                                    : 0);
            double dot = 0.0;
            for (int d = 0; d < dl; ++d) dot += ui[d] * uj[d];
            const double scale_i = schema.features[static_cast<std::size_t>(i)].sparse()
                                       ? 1.0
                                       : ex.dense[static_cast<std::size_t>(i)];
            const double scale_j = schema.features[static_cast<std::size_t>(j)].sparse()
                                       ? 1.0
                                       : ex.dense[static_cast<std::size_t>(j)];
            s += c * dot * scale_i * scale_j;
        }
    }
    return s;
}

}  // namespace detail

inline nlohmann::json ground_truth_to_json(const GroundTruthSpec& spec, int k) {
    nlohmann::json o;
    o["latent_dim"] = spec.latent_dim;
    o["bias"] = spec.bias;
    o["noise_temp"] = spec.noise_temp;
    o["seed"] = spec.seed;
    nlohmann::json pairs = nlohmann::json::array();
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j)
            if (spec.coeff_at(i, j, k) != 0.0)
                pairs.push_back({i, j, spec.coeff_at(i, j, k)});
    o["coeff_pairs"] = pairs;
    return o;
}

inline GroundTruthSpec ground_truth_from_json(const nlohmann::json& o, int k) {
    GroundTruthSpec spec;
    spec.latent_dim = o.at("latent_dim").get<int>();
    spec.bias = o.at("bias").get<double>();
    spec.noise_temp = o.at("noise_temp").get<double>();
    spec.seed = o.at("seed").get<std::uint64_t>();
    spec.coeff.assign(static_cast<std::size_t>(k) * k, 0.0);
    for (const auto& p : o.at("coeff_pairs"))
        spec.set_coeff(p.at(0).get<int>(), p.at(1).get<int>(), k, p.at(2).get<double>());
    spec.validate(k);
    return spec;
}

struct GenerateReport {
    std::int64_t n = 0;
    double positive_rate = 0.0;
    double bayes_auc = 0.0;  // NaN when the Bayes sample is single-class
    std::int64_t bayes_samples = 0;
};

// Writes the CSV dataset plus a <path>.meta.json sidecar. Byte-identical
// output for identical (schema, spec, n, seed).
inline GenerateReport generate_dataset(const FeatureSchema& schema, const GroundTruthSpec& spec,
                                       std::int64_t n, std::uint64_t seed, const std::string& path,
                                       std::int64_t bayes_samples = 100000) {
    if (n < 1) throw config_error("generate_dataset: n >= 1 required");
    schema.validate();
    spec.validate(schema.feature_count());
    const detail::LatentModel latents = detail::build_latents(schema, spec);
    const int k = schema.feature_count();

    int user_feature = -1;
    for (int f = 0; f < k; ++f)
        if (schema.features[static_cast<std::size_t>(f)].kind == FeatureKind::id) {
            user_feature = f;
            break;
        }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("generate_dataset: cannot write '" + path + "'");
    std::string line = "user_id";
    for (int f = 0; f < k; ++f) line += ",f_" + format_int(f);
    line += ",label\n";
    out << line;

    Rng rng(seed);
    detail::DrawnExample ex;
    std::int64_t positives = 0;
    for (std::int64_t row = 0; row < n; ++row) {
        detail::draw_example(schema, rng, ex);
        double s = detail::true_logit(schema, spec, latents, ex);
        if (spec.noise_temp > 0.0) s += spec.noise_temp * rng_normal(rng);
        const double p = 1.0 / (1.0 + std::exp(-s));
        const double y = rng_uniform01(rng) < p ? 1.0 : 0.0;
        positives += (y == 1.0) ? 1 : 0;

        line.clear();
        line += format_int(user_feature >= 0 ? ex.sparse[static_cast<std::size_t>(user_feature)] : row);
        for (int f = 0; f < k; ++f) {
            line += ',';
            if (schema.features[static_cast<std::size_t>(f)].sparse())
                line += format_int(ex.sparse[static_cast<std::size_t>(f)]);
            else
                line += format_double(ex.dense[static_cast<std::size_t>(f)]);
        }
        line += y == 1.0 ? ",1\n" : ",0\n";
        out << line;
    }
    if (!out) throw io_error("generate_dataset: write failed for '" + path + "'");
    out.close();

    // Monte-Carlo Bayes bound: fresh examples scored by the noiseless true
    // logit (the Bayes-optimal ranking), labels drawn the same way as above.
    GenerateReport report;
    report.n = n;
    report.positive_rate = static_cast<double>(positives) / static_cast<double>(n);
    report.bayes_samples = bayes_samples;
    {
        Rng brng(seed ^ 0x517cc1b727220a95ULL);
        std::vector<double> scores(static_cast<std::size_t>(bayes_samples));
        std::vector<double> labels(static_cast<std::size_t>(bayes_samples));
        for (std::int64_t i = 0; i < bayes_samples; ++i) {
            detail::draw_example(schema, brng, ex);
            const double s = detail::true_logit(schema, spec, latents, ex);
            double noisy = s;
            if (spec.noise_temp > 0.0) noisy += spec.noise_temp * rng_normal(brng);
            scores[static_cast<std::size_t>(i)] = s;
            labels[static_cast<std::size_t>(i)] =
                rng_uniform01(brng) < 1.0 / (1.0 + std::exp(-noisy)) ? 1.0 : 0.0;
        }
        try {
            report.bayes_auc = auc(scores, labels);
        } catch (const input_error&) {
            report.bayes_auc = std::nan("");  // single-class sample (saturated bias)
        }
    }

    nlohmann::json meta;
    meta["n"] = report.n;
    meta["seed"] = seed;
    meta["positive_rate"] = report.positive_rate;
    if (std::isnan(report.bayes_auc))
        meta["bayes_auc"] = nullptr;
    else
        meta["bayes_auc"] = report.bayes_auc;
    meta["bayes_samples"] = report.bayes_samples;
    meta["schema"] = schema_to_json(schema);
    meta["ground_truth"] = ground_truth_to_json(spec, k);
    std::ofstream meta_out(path + ".meta.json", std::ios::binary);
    if (!meta_out) throw io_error("generate_dataset: cannot write '" + path + ".meta.json'");
    meta_out << meta.dump(2) << "\n";
    meta_out.close();
    return report;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

struct Dataset {
    FeatureSchema schema;
    std::vector<std::vector<std::int64_t>> sparse_cols;  // [K][n]
    std::vector<std::vector<double>> dense_cols;
    std::vector<std::int64_t> user_ids;
    std::vector<double> labels;

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }

    ExampleBatch slice_batch(const std::vector<std::int64_t>& rows) const {
        ExampleBatch b;
        b.size = static_cast<std::int64_t>(rows.size());
        const int k = schema.feature_count();
        b.sparse.resize(static_cast<std::size_t>(k));
        b.dense.resize(static_cast<std::size_t>(k));
        for (int f = 0; f < k; ++f) {
            if (schema.features[static_cast<std::size_t>(f)].sparse()) {
                auto& col = b.sparse[static_cast<std::size_t>(f)];
                col.reserve(rows.size());
                for (std::int64_t r : rows) col.push_back(sparse_cols[static_cast<std::size_t>(f)][r]);
            } else {
                auto& col = b.dense[static_cast<std::size_t>(f)];
                col.reserve(rows.size());
                for (std::int64_t r : rows) col.push_back(dense_cols[static_cast<std::size_t>(f)][r]);
            }
        }
        b.user_id.reserve(rows.size());
        b.label.reserve(rows.size());
        for (std::int64_t r : rows) {
            b.user_id.push_back(user_ids[r]);
            b.label.push_back(labels[r]);
        }
        return b;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

inline std::int64_t parse_int_field(const std::string& s, std::int64_t line_no) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw input_error("dataset line " + format_int(line_no) + ": bad integer '" + s + "'");
    return v;
}

inline double parse_double_field(const std::string& s, std::int64_t line_no) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw input_error("dataset line " + format_int(line_no) + ": bad number '" + s + "'");
    return v;
}

}  // namespace detail

inline Dataset load_dataset(const FeatureSchema& schema, const std::string& path) {
    schema.validate();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("load_dataset: cannot read '" + path + "'");
    const int k = schema.feature_count();

    std::string expected_header = "user_id";
    for (int f = 0; f < k; ++f) expected_header += ",f_" + format_int(f);
    expected_header += ",label";

    std::string line;
    if (!std::getline(in, line)) throw input_error("load_dataset: empty file '" + path + "'");
    if (line != expected_header)
        throw input_error("load_dataset: header mismatch in '" + path + "' (want '" +
                          expected_header + "')");

    Dataset ds;
    ds.schema = schema;
    ds.sparse_cols.resize(static_cast<std::size_t>(k));
    ds.dense_cols.resize(static_cast<std::size_t>(k));
    std::int64_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        if (static_cast<int>(fields.size()) != k + 2)
            throw input_error("dataset line " + format_int(line_no) + ": expected " +
                              format_int(k + 2) + " fields, got " + format_int(fields.size()));
        ds.user_ids.push_back(detail::parse_int_field(fields[0], line_no));
        for (int f = 0; f < k; ++f) {
            const FeatureSpec& spec = schema.features[static_cast<std::size_t>(f)];
            const std::string& cell = fields[static_cast<std::size_t>(f) + 1];
            if (spec.sparse()) {
                const std::int64_t v = detail::parse_int_field(cell, line_no);
                if (v < 0 || v >= spec.vocab)
                    throw input_error("dataset line " + format_int(line_no) + ": value " +
                                      format_int(v) + " out of vocabulary for '" + spec.name + "'");
                ds.sparse_cols[static_cast<std::size_t>(f)].push_back(v);
            } else {
                ds.dense_cols[static_cast<std::size_t>(f)].push_back(
                    detail::parse_double_field(cell, line_no));
            }
        }
        const std::string& label_cell = fields[static_cast<std::size_t>(k) + 1];
        if (label_cell == "1")
            ds.labels.push_back(1.0);
        else if (label_cell == "0")
            ds.labels.push_back(0.0);
        else
            throw input_error("dataset line " + format_int(line_no) + ": label must be 0 or 1");
    }
    if (ds.labels.empty()) throw input_error("load_dataset: no data rows in '" + path + "'");
    return ds;
}

}  // namespace zenith
