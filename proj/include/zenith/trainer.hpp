#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "zenith/common.hpp"
#include "zenith/datagen.hpp"
#include "zenith/model.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Training loop: single-pass streaming over a seeded shuffle, linear
// learning-rate warmup, second-moment-EMA optimizer, task loss plus router
// auxiliary losses. Bit-deterministic for a fixed seed in single-worker mode.
// ---------------------------------------------------------------------------

struct TrainConfig {
    double base_lr = 0.01;
    double decay = 0.99999;             // second-moment EMA decay
    double accumulator_init = 0.015625; // starting value of every accumulator
    int warmup_steps = 1000;            // 0 disables warmup (constant base_lr)
    int total_steps = 5000;
    int batch_size = 256;
    double load_balance_coeff = 1e-2;   // weight on the router load-balance loss
    double z_loss_coeff = 1e-3;         // weight on the router z-loss
    std::uint64_t seed = 1;
    bool use_adam = false;              // fallback optimizer for sanity runs

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (!(base_lr > 0.0)) out.push_back("base_lr must be > 0");
        if (!(decay > 0.0 && decay < 1.0)) out.push_back("decay must lie in (0, 1)");
        if (!(accumulator_init > 0.0)) out.push_back("accumulator_init must be > 0");
        if (warmup_steps < 0) out.push_back("warmup_steps must be >= 0");
        if (total_steps < 1) out.push_back("total_steps must be >= 1");
        if (warmup_steps > total_steps)
            out.push_back("warmup_steps must be <= total_steps: " + format_int(warmup_steps) +
                          " > " + format_int(total_steps));
        if (batch_size < 1) out.push_back("batch_size must be >= 1");
        if (load_balance_coeff < 0.0) out.push_back("load_balance_coeff must be >= 0");
        if (z_loss_coeff < 0.0) out.push_back("z_loss_coeff must be >= 0");
        return out;
    }

    void validate() const {
        const auto problems = violations();
        if (problems.empty()) return;
        std::string msg = "train config invalid:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw config_error(msg);
    }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json o;
    o["base_lr"] = c.base_lr;
    o["decay"] = c.decay;
    o["accumulator_init"] = c.accumulator_init;
    o["warmup_steps"] = c.warmup_steps;
    o["total_steps"] = c.total_steps;
    o["batch_size"] = c.batch_size;
    o["load_balance_coeff"] = c.load_balance_coeff;
    o["z_loss_coeff"] = c.z_loss_coeff;
    o["seed"] = c.seed;
    o["use_adam"] = c.use_adam;
    return o;
}

inline TrainConfig train_config_from_json(const nlohmann::json& o) {
    detail::reject_unknown_keys(o,
                                {"base_lr", "decay", "accumulator_init", "warmup_steps",
                                 "total_steps", "batch_size", "load_balance_coeff", "z_loss_coeff",
                                 "seed", "use_adam"},
                                "train config");
    TrainConfig c;
    try {
        if (o.contains("base_lr")) c.base_lr = o["base_lr"].get<double>();
        if (o.contains("decay")) c.decay = o["decay"].get<double>();
        if (o.contains("accumulator_init")) c.accumulator_init = o["accumulator_init"].get<double>();
        if (o.contains("warmup_steps")) c.warmup_steps = o["warmup_steps"].get<int>();
        if (o.contains("total_steps")) c.total_steps = o["total_steps"].get<int>();
        if (o.contains("batch_size")) c.batch_size = o["batch_size"].get<int>();
        if (o.contains("load_balance_coeff"))
            c.load_balance_coeff = o["load_balance_coeff"].get<double>();
        if (o.contains("z_loss_coeff")) c.z_loss_coeff = o["z_loss_coeff"].get<double>();
        if (o.contains("seed")) c.seed = o["seed"].get<std::uint64_t>();
        if (o.contains("use_adam")) c.use_adam = o["use_adam"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("train config: ") + e.what());
    }
    return c;
}

// ZENITH_SEED overrides any configured seed when set
inline std::uint64_t resolve_seed(std::uint64_t config_seed) {
    const char* env = std::getenv("ZENITH_SEED");
    if (!env || !*env) return config_seed;
    std::uint64_t v = 0;
    const char* end = env + std::strlen(env);
    auto [p, ec] = std::from_chars(env, end, v);
    if (ec != std::errc() || p != end)
        throw config_error("ZENITH_SEED must be an unsigned integer, got '" + std::string(env) +
                           "'");
    return v;
}

// ---------------------------------------------------------------------------
// Learning-rate warmup: starts at 0.1% of the base rate, ramps linearly to
// the base rate at warmup_steps, constant afterwards.
// ---------------------------------------------------------------------------

inline double warmup_lr(int step, const TrainConfig& cfg) {
    if (step < 0) throw input_error("warmup_lr: step must be >= 0");
    if (step >= cfg.warmup_steps) return cfg.base_lr;
    const double start = 0.001;
    const double frac = static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    return cfg.base_lr * (start + (1.0 - start) * frac);
}

// ---------------------------------------------------------------------------
// Optimizer: v <- decay*v + (1-decay)*g^2; theta <- theta - lr*g/(sqrt(v)+eps)
// with every accumulator starting at accumulator_init. The Adam fallback is
// the textbook rule with bias correction (accumulators start at zero there).
// ---------------------------------------------------------------------------

struct OptimizerState {
    std::vector<std::vector<double>> second_moment;
    std::vector<std::vector<double>> first_moment;  // Adam only
    std::int64_t step = 0;
};

inline OptimizerState init_optimizer_state(const std::vector<Tensor>& params,
                                           const TrainConfig& cfg) {
    OptimizerState st;
    for (const Tensor& p : params) {
        st.second_moment.emplace_back(static_cast<std::size_t>(p.numel()),
                                      cfg.use_adam ? 0.0 : cfg.accumulator_init);
        if (cfg.use_adam) st.first_moment.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
    return st;
}

// applies one update; returns false (touching nothing) when any gradient is
// non-finite. Parameters with no gradient recorded are treated as g = 0.
inline bool optimizer_step(std::vector<Tensor>& params, OptimizerState& st,
                           const TrainConfig& cfg, double lr) {
    if (params.size() != st.second_moment.size())
        throw config_error("optimizer_step: state does not match parameter list");
    for (const Tensor& p : params)
        for (double g : p.grad())
            if (!std::isfinite(g)) return false;

    constexpr double eps = 1e-8;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        const std::int64_t n = p.numel();
        const std::vector<double>& grad = p.grad();
        const bool has_grad = !grad.empty();
        double* theta = p.data();
        std::vector<double>& v = st.second_moment[i];
        if (cfg.use_adam) {
            std::vector<double>& mo = st.first_moment[i];
            const double b1 = 0.9, b2 = 0.999;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step + 1));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step + 1));
            for (std::int64_t j = 0; j < n; ++j) {
                const double g = has_grad ? grad[static_cast<std::size_t>(j)] : 0.0;
                mo[static_cast<std::size_t>(j)] = b1 * mo[static_cast<std::size_t>(j)] + (1.0 - b1) * g;
                v[static_cast<std::size_t>(j)] = b2 * v[static_cast<std::size_t>(j)] + (1.0 - b2) * g * g;
                theta[j] -= lr * (mo[static_cast<std::size_t>(j)] / c1) /
                            (std::sqrt(v[static_cast<std::size_t>(j)] / c2) + eps);
            }
        } else {
            for (std::int64_t j = 0; j < n; ++j) {
                const double g = has_grad ? grad[static_cast<std::size_t>(j)] : 0.0;
                double& vj = v[static_cast<std::size_t>(j)];
                vj = cfg.decay * vj + (1.0 - cfg.decay) * g * g;
                if (!(vj > 0.0))
                    throw std::runtime_error("optimizer accumulator lost positivity");
                theta[j] -= lr * g / (std::sqrt(vj) + eps);
            }
        }
        for (std::int64_t j = 0; j < n; ++j)
            if (!std::isfinite(theta[j]))
                throw std::runtime_error("optimizer produced a non-finite parameter");
    }
    ++st.step;
    return true;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
    int steps_run = 0;
    bool early_stop = false;  // dataset exhausted before total_steps
    int aborted_steps = 0;    // steps skipped on non-finite gradients
    std::vector<double> task_losses;  // one entry per executed step
    // per-layer per-expert load, averaged over the last 10% of steps
    std::vector<std::vector<double>> tail_mean_loads;

    double mean_task_loss_first_tenth() const {
        const std::size_t k = std::max<std::size_t>(1, task_losses.size() / 10);
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += task_losses[i];
        return s / static_cast<double>(k);
    }

    double mean_task_loss_last_tenth() const {
        const std::size_t k = std::max<std::size_t>(1, task_losses.size() / 10);
        double s = 0.0;
        for (std::size_t i = task_losses.size() - k; i < task_losses.size(); ++i)
            s += task_losses[i];
        return s / static_cast<double>(k);
    }

    // coefficient of variation of expert loads, averaged over layers
    double load_cv() const {
        if (tail_mean_loads.empty()) return 0.0;
        double cv_sum = 0.0;
        for (const auto& loads : tail_mean_loads) {
            double mean = 0.0;
            for (double f : loads) mean += f;
            mean /= static_cast<double>(loads.size());
            double var = 0.0;
            for (double f : loads) var += (f - mean) * (f - mean);
            var /= static_cast<double>(loads.size());
            cv_sum += mean > 0.0 ? std::sqrt(var) / mean : 0.0;
        }
        return cv_sum / static_cast<double>(tail_mean_loads.size());
    }
};

namespace detail {

// cheap per-step sanity checks of the routing contract
inline void check_router_invariants(const RouterTrace& trace) {
    const int e_s = trace.sparse_experts;
    const double* probs = trace.probs.data();
    for (std::int64_t pos = 0; pos < trace.positions; ++pos) {
        double s = 0.0;
        for (int e = 0; e < e_s; ++e) s += probs[pos * e_s + e];
        if (std::abs(s - 1.0) > 1e-9)
            throw std::runtime_error("router invariant violated: probabilities sum to " +
                                     format_double(s));
    }
    std::int64_t routed = 0;
    double f_sum = 0.0;
    for (int e = 0; e < e_s; ++e) {
        routed += static_cast<std::int64_t>(trace.expert_rows[static_cast<std::size_t>(e)].size());
        f_sum += trace.f[static_cast<std::size_t>(e)];
    }
    if (routed != trace.positions * trace.active)
        throw std::runtime_error("router invariant violated: " + format_int(routed) +
                                 " assignments for " + format_int(trace.positions) +
                                 " positions with " + format_int(trace.active) + " active");
    if (std::abs(f_sum - static_cast<double>(trace.active)) > 1e-12)
        throw std::runtime_error("router invariant violated: loads sum to " +
                                 format_double(f_sum));
}

}  // namespace detail

// single pass over a seeded shuffle of the dataset. Works for any model that
// provides model_forward(model, batch) -> ForwardResult and
// model_parameters(model) -> std::vector<Tensor>.
template <typename ModelT>
TrainResult train_model(ModelT& model, const Dataset& data, const TrainConfig& cfg,
                        const std::string& log_path = "") {
    cfg.validate();
    const std::uint64_t seed = resolve_seed(cfg.seed);

    std::vector<std::int64_t> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);
    {
        Rng rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::binary);
        if (!log) throw io_error("train: cannot write log '" + log_path + "'");
        log << "step,lr,task_loss,load_loss,z_loss,max_expert_load\n";
    }

    std::vector<Tensor> params = model_parameters(model);
    OptimizerState state = init_optimizer_state(params, cfg);

    TrainResult result;
    const int tail_start = cfg.total_steps - std::max(1, cfg.total_steps / 10);
    std::vector<std::vector<double>> tail_sums;
    int tail_count = 0;

    std::vector<std::int64_t> rows(static_cast<std::size_t>(cfg.batch_size));
    for (int step = 0; step < cfg.total_steps; ++step) {
        const std::int64_t offset = static_cast<std::int64_t>(step) * cfg.batch_size;
        if (offset + cfg.batch_size > data.size()) {
            result.early_stop = true;
            break;
        }
        for (int i = 0; i < cfg.batch_size; ++i)
            rows[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(offset + i)];
        const ExampleBatch batch = data.slice_batch(rows);

        ForwardResult fr = model_forward(model, batch);
        Tensor task = bce_with_logits_mean(fr.logits, batch.label);

        Tensor total = task;
        double load_value = 0.0, z_value = 0.0, max_load = 0.0;
        if (!fr.traces.empty()) {
            Tensor load_sum, z_sum;
            for (const RouterTrace& trace : fr.traces) {
                detail::check_router_invariants(trace);
                Tensor l = load_balance_loss(trace, cfg.load_balance_coeff);
                Tensor z = z_loss(trace, cfg.z_loss_coeff);
                load_sum = load_sum.defined() ? add(load_sum, l) : l;
                z_sum = z_sum.defined() ? add(z_sum, z) : z;
                for (double f : trace.f) max_load = std::max(max_load, f);
            }
            load_value = load_sum.item();
            z_value = z_sum.item();
            total = add(total, add(load_sum, z_sum));
        }

        for (Tensor& p : params) p.zero_grad();
        backward(total);

        const double lr = warmup_lr(step, cfg);
        if (!optimizer_step(params, state, cfg, lr)) ++result.aborted_steps;

        const double task_value = task.item();
        result.task_losses.push_back(task_value);
        ++result.steps_run;

        if (log.is_open()) {
            log << step << ',' << format_double(lr) << ',' << format_double(task_value) << ','
                << format_double(load_value) << ',' << format_double(z_value) << ','
                << format_double(max_load) << '\n';
        }

        if (step >= tail_start && !fr.traces.empty()) {
            if (tail_sums.empty())
                tail_sums.assign(fr.traces.size(), {});
            for (std::size_t l = 0; l < fr.traces.size(); ++l) {
                if (tail_sums[l].empty()) tail_sums[l].assign(fr.traces[l].f.size(), 0.0);
                for (std::size_t e = 0; e < fr.traces[l].f.size(); ++e)
                    tail_sums[l][e] += fr.traces[l].f[e];
            }
            ++tail_count;
        }
    }

    if (tail_count > 0) {
        result.tail_mean_loads = tail_sums;
        for (auto& loads : result.tail_mean_loads)
            for (double& f : loads) f /= static_cast<double>(tail_count);
    }
    if (log.is_open()) {
        log.close();
        if (!log) throw io_error("train: write failed for log '" + log_path + "'");
    }
    return result;
}

}  // namespace zenith
