#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "test_helpers.hpp"
#include "zenith/trainer.hpp"

using zenith::Dataset;
using zenith::FeatureKind;
using zenith::FeatureSchema;
using zenith::ModelConfig;
using zenith::OptimizerState;
using zenith::Tensor;
using zenith::TrainConfig;
using zenith::TrainResult;
using zenith::ZenithModel;

namespace {

FeatureSchema ids_schema(int t, std::int64_t vocab = 11, int dim = 4) {
    FeatureSchema s;
    for (int i = 0; i < t; ++i)
        s.features.push_back({"id_" + zenith::format_int(i), FeatureKind::id, vocab, dim,
                              "g" + zenith::format_int(i)});
    return s;
}

Dataset random_dataset(const FeatureSchema& schema, std::int64_t n, std::uint64_t seed) {
    Dataset d;
    d.schema = schema;
    const int k = schema.feature_count();
    d.sparse_cols.resize(static_cast<std::size_t>(k));
    d.dense_cols.resize(static_cast<std::size_t>(k));
    zenith::Rng rng(seed);
    for (int f = 0; f < k; ++f) {
        const auto& spec = schema.features[static_cast<std::size_t>(f)];
        for (std::int64_t i = 0; i < n; ++i) {
            if (spec.sparse())
                d.sparse_cols[static_cast<std::size_t>(f)].push_back(
                    zenith::rng_index(rng, spec.vocab));
            else
                d.dense_cols[static_cast<std::size_t>(f)].push_back(zenith::rng_normal(rng));
        }
    }
    for (std::int64_t i = 0; i < n; ++i) {
        d.user_ids.push_back(i % 7);
        d.labels.push_back(static_cast<double>(zenith::rng_index(rng, 2)));
    }
    return d;
}

ModelConfig tiny_zenith() {
    ModelConfig c;
    c.variant = "zenith";
    c.layers = 1;
    c.tokens = 4;
    c.token_dim = 8;
    c.fusion_dim = 8;
    c.fused_tokens = 4;
    c.boost_hidden = 8;
    c.head_hidden = 6;
    c.seed = 7;
    return c;
}

ModelConfig tiny_pp() {
    ModelConfig c;
    c.variant = "zenith_pp";
    c.layers = 2;
    c.tokens = 4;
    c.token_dim = 8;
    c.heads = 2;
    c.shared_experts = 1;
    c.sparse_experts = 4;
    c.active_experts = 2;
    c.boost_hidden = 8;
    c.head_hidden = 6;
    c.seed = 7;
    return c;
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    EXPECT_TRUE(in.good()) << path;
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::vector<std::string> split_csv_row(const std::string& row) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = row.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(row.substr(start));
            break;
        }
        cells.push_back(row.substr(start, comma - start));
        start = comma + 1;
    }
    return cells;
}

struct EnvSeedGuard {
    EnvSeedGuard() { unsetenv("ZENITH_SEED"); }
    ~EnvSeedGuard() { unsetenv("ZENITH_SEED"); }
};

}  // namespace

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

TEST(TrainConfig, ValidatesRanges) {
    TrainConfig c;
    EXPECT_TRUE(c.violations().empty());
    c.decay = 1.0;
    c.warmup_steps = 9000;  // > total_steps
    c.batch_size = 0;
    const auto v = c.violations();
    EXPECT_EQ(v.size(), 3u);
    EXPECT_THROW(c.validate(), zenith::config_error);
}

TEST(TrainConfig, JsonRoundTripAndUnknownKey) {
    TrainConfig c;
    c.base_lr = 0.02;
    c.warmup_steps = 50;
    c.total_steps = 200;
    c.batch_size = 32;
    c.load_balance_coeff = 0.5;
    c.z_loss_coeff = 0.25;
    c.seed = 12;
    c.use_adam = true;
    const TrainConfig back = zenith::train_config_from_json(zenith::train_config_to_json(c));
    EXPECT_EQ(back.base_lr, c.base_lr);
    EXPECT_EQ(back.warmup_steps, c.warmup_steps);
    EXPECT_EQ(back.total_steps, c.total_steps);
    EXPECT_EQ(back.batch_size, c.batch_size);
    EXPECT_EQ(back.load_balance_coeff, c.load_balance_coeff);
    EXPECT_EQ(back.z_loss_coeff, c.z_loss_coeff);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.use_adam, c.use_adam);

    nlohmann::json bad = zenith::train_config_to_json(c);
    bad["learning_rate"] = 0.1;
    try {
        zenith::train_config_from_json(bad);
        FAIL() << "expected config_error";
    } catch (const zenith::config_error& e) {
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    }
}

TEST(TrainConfig, SeedEnvironmentOverride) {
    EnvSeedGuard guard;
    EXPECT_EQ(zenith::resolve_seed(5), 5u);
    setenv("ZENITH_SEED", "77", 1);
    EXPECT_EQ(zenith::resolve_seed(5), 77u);
    setenv("ZENITH_SEED", "", 1);
    EXPECT_EQ(zenith::resolve_seed(5), 5u);
    setenv("ZENITH_SEED", "12x", 1);
    EXPECT_THROW(zenith::resolve_seed(5), zenith::config_error);
    setenv("ZENITH_SEED", "banana", 1);
    EXPECT_THROW(zenith::resolve_seed(5), zenith::config_error);
}

// ---------------------------------------------------------------------------
// Warmup schedule
// ---------------------------------------------------------------------------

TEST(Warmup, RampEndpointsAndMidpoint) {
    TrainConfig c;
    c.base_lr = 0.01;
    c.warmup_steps = 1000;
    c.total_steps = 5000;
    EXPECT_NEAR(zenith::warmup_lr(0, c), 0.00001, 1e-18);
    EXPECT_NEAR(zenith::warmup_lr(500, c), 0.005005, 1e-15);  // (lr0 + base)/2
    EXPECT_EQ(zenith::warmup_lr(1000, c), 0.01);
    EXPECT_EQ(zenith::warmup_lr(5000, c), 0.01);
}

TEST(Warmup, MonotoneThenConstant) {
    TrainConfig c;
    c.base_lr = 0.02;
    c.warmup_steps = 137;
    c.total_steps = 1000;
    double prev = -1.0;
    for (int s = 0; s <= 137; ++s) {
        const double lr = zenith::warmup_lr(s, c);
        EXPECT_GE(lr, prev) << "step " << s;
        prev = lr;
    }
    EXPECT_EQ(prev, 0.02);
    for (int s = 138; s < 300; ++s) EXPECT_EQ(zenith::warmup_lr(s, c), 0.02);
}

TEST(Warmup, DisabledMeansConstantBaseRate) {
    TrainConfig c;
    c.base_lr = 0.4;
    c.warmup_steps = 0;
    EXPECT_EQ(zenith::warmup_lr(0, c), 0.4);
    EXPECT_EQ(zenith::warmup_lr(1, c), 0.4);
    EXPECT_EQ(zenith::warmup_lr(999, c), 0.4);
}

TEST(Warmup, NegativeStepThrows) {
    TrainConfig c;
    EXPECT_THROW(zenith::warmup_lr(-1, c), zenith::input_error);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

TEST(Optimizer, SingleStepHandArithmetic) {
    TrainConfig c;
    c.decay = 0.9;
    c.accumulator_init = 0.015625;
    std::vector<Tensor> params = {Tensor::from_data({1}, {0.5}, true)};
    params[0].grad_ptr()[0] = 1.0;
    OptimizerState st = zenith::init_optimizer_state(params, c);
    ASSERT_EQ(st.second_moment.size(), 1u);
    EXPECT_EQ(st.second_moment[0][0], 0.015625);

    ASSERT_TRUE(zenith::optimizer_step(params, st, c, 0.1));
    const double v = 0.9 * 0.015625 + (1.0 - 0.9) * 1.0 * 1.0;
    EXPECT_NEAR(st.second_moment[0][0], 0.1140625, 1e-15);
    EXPECT_EQ(st.second_moment[0][0], v);
    const double delta = -0.1 * 1.0 / (std::sqrt(v) + 1e-8);
    EXPECT_EQ(params[0].data()[0], 0.5 + delta);
    EXPECT_NEAR(delta, -0.2960875, 1e-5);
    EXPECT_EQ(st.step, 1);
}

TEST(Optimizer, ZeroGradientLeavesParametersWhileVDecays) {
    TrainConfig c;
    c.decay = 0.5;
    c.accumulator_init = 1.0;
    std::vector<Tensor> params = {Tensor::from_data({2}, {3.0, -4.0}, true)};
    params[0].zero_grad();  // explicit zeros
    OptimizerState st = zenith::init_optimizer_state(params, c);
    for (int i = 0; i < 3; ++i) ASSERT_TRUE(zenith::optimizer_step(params, st, c, 0.1));
    EXPECT_EQ(params[0].data()[0], 3.0);
    EXPECT_EQ(params[0].data()[1], -4.0);
    EXPECT_EQ(st.second_moment[0][0], 0.125);  // 0.5^3
    EXPECT_EQ(st.second_moment[0][1], 0.125);
}

TEST(Optimizer, MissingGradientActsAsZero) {
    TrainConfig c;
    c.decay = 0.5;
    c.accumulator_init = 1.0;
    std::vector<Tensor> params = {Tensor::from_data({1}, {2.0}, true)};  // grad never touched
    OptimizerState st = zenith::init_optimizer_state(params, c);
    ASSERT_TRUE(params[0].grad().empty());
    ASSERT_TRUE(zenith::optimizer_step(params, st, c, 0.1));
    EXPECT_EQ(params[0].data()[0], 2.0);
    EXPECT_EQ(st.second_moment[0][0], 0.5);
}

TEST(Optimizer, ConstantGradientDrivesVToItsSquare) {
    TrainConfig c;
    c.decay = 0.9;
    c.accumulator_init = 0.015625;
    std::vector<Tensor> params = {Tensor::from_data({1}, {0.0}, true)};
    OptimizerState st = zenith::init_optimizer_state(params, c);
    for (int i = 0; i < 400; ++i) {
        params[0].grad_ptr()[0] = 2.0;
        ASSERT_TRUE(zenith::optimizer_step(params, st, c, 0.01));
    }
    EXPECT_NEAR(st.second_moment[0][0], 4.0, 1e-12);
    EXPECT_LT(params[0].data()[0], 0.0);  // moved against the gradient throughout
}

TEST(Optimizer, NonFiniteGradientAbortsWithoutSideEffects) {
    TrainConfig c;
    std::vector<Tensor> params = {Tensor::from_data({1}, {1.0}, true),
                                  Tensor::from_data({2}, {2.0, 3.0}, true)};
    params[0].grad_ptr()[0] = 0.5;
    params[1].grad_ptr()[0] = std::nan("");
    params[1].grad_ptr()[1] = 0.5;
    OptimizerState st = zenith::init_optimizer_state(params, c);
    EXPECT_FALSE(zenith::optimizer_step(params, st, c, 0.1));
    EXPECT_EQ(params[0].data()[0], 1.0);
    EXPECT_EQ(params[1].data()[0], 2.0);
    EXPECT_EQ(params[1].data()[1], 3.0);
    EXPECT_EQ(st.second_moment[0][0], c.accumulator_init);
    EXPECT_EQ(st.step, 0);

    params[1].grad_ptr()[0] = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(zenith::optimizer_step(params, st, c, 0.1));
    EXPECT_EQ(st.step, 0);
}

TEST(Optimizer, AdamFallbackFirstStepClosedForm) {
    TrainConfig c;
    c.use_adam = true;
    std::vector<Tensor> params = {Tensor::from_data({1}, {0.5}, true)};
    params[0].grad_ptr()[0] = 1.0;
    OptimizerState st = zenith::init_optimizer_state(params, c);
    EXPECT_EQ(st.second_moment[0][0], 0.0);  // Adam starts from zero
    ASSERT_TRUE(zenith::optimizer_step(params, st, c, 0.1));
    // bias-corrected m-hat and v-hat are exactly g on the first step
    EXPECT_NEAR(params[0].data()[0], 0.5 - 0.1, 1e-8);
}

TEST(Optimizer, MismatchedStateIsRejected) {
    TrainConfig c;
    std::vector<Tensor> two = {Tensor::zeros({1}, true), Tensor::zeros({1}, true)};
    OptimizerState st = zenith::init_optimizer_state(two, c);
    std::vector<Tensor> one = {two[0]};
    EXPECT_THROW(zenith::optimizer_step(one, st, c, 0.1), zenith::config_error);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TEST(TrainLoop, RunsRequestedStepsAndLogsSchema) {
    EnvSeedGuard guard;
    const FeatureSchema schema = ids_schema(4);
    const Dataset data = random_dataset(schema, 100, 3);
    ZenithModel model =
        zenith::build_model(tiny_zenith(), schema, zenith::default_token_plan(schema));
    TrainConfig cfg;
    cfg.total_steps = 10;
    cfg.batch_size = 8;
    cfg.warmup_steps = 4;
    cfg.seed = 9;
    const std::string log_path = testing::TempDir() + "train_log_zenith.csv";
    const TrainResult result = zenith::train_model(model, data, cfg, log_path);

    EXPECT_EQ(result.steps_run, 10);
    EXPECT_FALSE(result.early_stop);
    EXPECT_EQ(result.aborted_steps, 0);
    ASSERT_EQ(result.task_losses.size(), 10u);
    for (double l : result.task_losses) EXPECT_TRUE(std::isfinite(l));
    EXPECT_TRUE(result.tail_mean_loads.empty());  // no routers in this variant

    const auto lines = split_lines(read_file_bytes(log_path));
    ASSERT_EQ(lines.size(), 11u);
    EXPECT_EQ(lines[0], "step,lr,task_loss,load_loss,z_loss,max_expert_load");
    for (int s = 0; s < 10; ++s) {
        const auto cells = split_csv_row(lines[static_cast<std::size_t>(s + 1)]);
        ASSERT_EQ(cells.size(), 6u);
        EXPECT_EQ(cells[0], zenith::format_int(s));
        EXPECT_EQ(cells[1], zenith::format_double(zenith::warmup_lr(s, cfg)));
        EXPECT_EQ(cells[3], "0");  // no router, no auxiliary loss
        EXPECT_EQ(cells[4], "0");
        EXPECT_EQ(cells[5], "0");
    }
    std::remove(log_path.c_str());
}

TEST(TrainLoop, StopsEarlyWhenDataRunsOut) {
    EnvSeedGuard guard;
    const FeatureSchema schema = ids_schema(4);
    const Dataset data = random_dataset(schema, 100, 4);
    ZenithModel model =
        zenith::build_model(tiny_zenith(), schema, zenith::default_token_plan(schema));
    TrainConfig cfg;
    cfg.total_steps = 20;
    cfg.batch_size = 8;
    cfg.warmup_steps = 0;
    const TrainResult result = zenith::train_model(model, data, cfg);
    EXPECT_EQ(result.steps_run, 12);  // 12 full batches of 8 fit in 100 rows
    EXPECT_TRUE(result.early_stop);
}

TEST(TrainLoop, BitDeterministicAcrossRuns) {
    EnvSeedGuard guard;
    const FeatureSchema schema = ids_schema(4);
    const Dataset data = random_dataset(schema, 80, 5);
    const zenith::TokenPlan plan = zenith::default_token_plan(schema);
    TrainConfig cfg;
    cfg.total_steps = 6;
    cfg.batch_size = 8;
    cfg.warmup_steps = 2;
    cfg.seed = 21;

    const std::string log_a = testing::TempDir() + "det_a.csv";
    const std::string log_b = testing::TempDir() + "det_b.csv";
    ZenithModel a = zenith::build_model(tiny_pp(), schema, plan);
    ZenithModel b = zenith::build_model(tiny_pp(), schema, plan);
    zenith::train_model(a, data, cfg, log_a);
    zenith::train_model(b, data, cfg, log_b);

    auto pa = zenith::model_parameters(a);
    auto pb = zenith::model_parameters(b);
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::int64_t j = 0; j < pa[i].numel(); ++j)
            ASSERT_EQ(pa[i].data()[j], pb[i].data()[j]) << "param " << i;
    EXPECT_EQ(read_file_bytes(log_a), read_file_bytes(log_b));
    std::remove(log_a.c_str());
    std::remove(log_b.c_str());
}

TEST(TrainLoop, SeedChangesTheTrajectory) {
    EnvSeedGuard guard;
    const FeatureSchema schema = ids_schema(4);
    const Dataset data = random_dataset(schema, 80, 5);
    const zenith::TokenPlan plan = zenith::default_token_plan(schema);
    TrainConfig cfg;
    cfg.total_steps = 4;
    cfg.batch_size = 8;
    cfg.warmup_steps = 0;
    cfg.seed = 1;
    ZenithModel a = zenith::build_model(tiny_zenith(), schema, plan);
    const TrainResult ra = zenith::train_model(a, data, cfg);
    cfg.seed = 2;
    ZenithModel b = zenith::build_model(tiny_zenith(), schema, plan);
    const TrainResult rb = zenith::train_model(b, data, cfg);
    EXPECT_NE(ra.task_losses, rb.task_losses);  // different shuffle, different batches
}

TEST(TrainLoop, EnvironmentSeedOverridesConfigSeed) {
    EnvSeedGuard guard;
    const FeatureSchema schema = ids_schema(4);
    const Dataset data = random_dataset(schema, 80, 5);
    const zenith::TokenPlan plan = zenith::default_token_plan(schema);
    TrainConfig cfg;
    cfg.total_steps = 4;
    cfg.batch_size = 8;
    cfg.warmup_steps = 0;
    cfg.seed = 1;

    ZenithModel a = zenith::build_model(tiny_zenith(), schema, plan);
    setenv("ZENITH_SEED", "2", 1);
    const TrainResult with_env = zenith::train_model(a, data, cfg);
    unsetenv("ZENITH_SEED");

    cfg.seed = 2;
    ZenithModel b = zenith::build_model(tiny_zenith(), schema, plan);
    const TrainResult plain = zenith::train_model(b, data, cfg);
    EXPECT_EQ(with_env.task_losses, plain.task_losses);
}

TEST(TrainLoop, RouterColumnsPopulatedForSparseVariant) {
    EnvSeedGuard guard;
    const FeatureSchema schema = ids_schema(4);
    const Dataset data = random_dataset(schema, 100, 6);
    ZenithModel model = zenith::build_model(tiny_pp(), schema, zenith::default_token_plan(schema));
    TrainConfig cfg;
    cfg.total_steps = 10;
    cfg.batch_size = 8;
    cfg.warmup_steps = 0;
    const std::string log_path = testing::TempDir() + "train_log_pp.csv";
    const TrainResult result = zenith::train_model(model, data, cfg, log_path);

    // two routed layers with four experts each
    ASSERT_EQ(result.tail_mean_loads.size(), 2u);
    for (const auto& loads : result.tail_mean_loads) {
        ASSERT_EQ(loads.size(), 4u);
        double sum = 0.0;
        for (double f : loads) sum += f;
        EXPECT_NEAR(sum, 2.0, 1e-12);  // sum of loads equals active experts
    }
    EXPECT_GE(result.load_cv(), 0.0);

    const auto lines = split_lines(read_file_bytes(log_path));
    ASSERT_EQ(lines.size(), 11u);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split_csv_row(lines[i]);
        ASSERT_EQ(cells.size(), 6u);
        EXPECT_NE(cells[3], "0");  // auxiliary losses engaged
        EXPECT_NE(cells[4], "0");
        EXPECT_GT(std::stod(cells[5]), 0.0);
    }
    std::remove(log_path.c_str());
}

TEST(TrainLoop, ZeroCoefficientsLogExactZeroAuxLosses) {
    EnvSeedGuard guard;
    const FeatureSchema schema = ids_schema(4);
    const Dataset data = random_dataset(schema, 60, 6);
    ZenithModel model = zenith::build_model(tiny_pp(), schema, zenith::default_token_plan(schema));
    TrainConfig cfg;
    cfg.total_steps = 5;
    cfg.batch_size = 8;
    cfg.warmup_steps = 0;
    cfg.load_balance_coeff = 0.0;
    cfg.z_loss_coeff = 0.0;
    const std::string log_path = testing::TempDir() + "train_log_noaux.csv";
    zenith::train_model(model, data, cfg, log_path);
    const auto lines = split_lines(read_file_bytes(log_path));
    ASSERT_EQ(lines.size(), 6u);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split_csv_row(lines[i]);
        EXPECT_EQ(cells[3], "0");
        EXPECT_EQ(cells[4], "0");
        EXPECT_GT(std::stod(cells[5]), 0.0);  // loads still tracked
    }
    std::remove(log_path.c_str());
}

TEST(TrainLoop, RejectsInvalidConfig) {
    EnvSeedGuard guard;
    const FeatureSchema schema = ids_schema(4);
    const Dataset data = random_dataset(schema, 40, 6);
    ZenithModel model =
        zenith::build_model(tiny_zenith(), schema, zenith::default_token_plan(schema));
    TrainConfig cfg;
    cfg.batch_size = -3;
    EXPECT_THROW(zenith::train_model(model, data, cfg), zenith::config_error);
}

// ---------------------------------------------------------------------------
// TrainResult helpers
// ---------------------------------------------------------------------------

TEST(TrainResultHelpers, TenthMeansAndLoadCv) {
    TrainResult r;
    for (int i = 1; i <= 20; ++i) r.task_losses.push_back(static_cast<double>(i));
    EXPECT_EQ(r.mean_task_loss_first_tenth(), 1.5);  // mean of {1, 2}
    EXPECT_EQ(r.mean_task_loss_last_tenth(), 19.5);  // mean of {19, 20}

    r.tail_mean_loads = {{1.0, 1.0, 1.0, 1.0}};
    EXPECT_EQ(r.load_cv(), 0.0);
    r.tail_mean_loads = {{2.0, 0.0, 0.0, 0.0}};
    EXPECT_NEAR(r.load_cv(), std::sqrt(3.0), 1e-12);
    r.tail_mean_loads = {{1.0, 1.0}, {3.0, 1.0}};
    EXPECT_NEAR(r.load_cv(), 0.25, 1e-12);  // (0 + 0.5)/2
}

TEST(TrainResultHelpers, SingleLossStillAverages) {
    TrainResult r;
    r.task_losses = {0.7};
    EXPECT_EQ(r.mean_task_loss_first_tenth(), 0.7);
    EXPECT_EQ(r.mean_task_loss_last_tenth(), 0.7);
    EXPECT_EQ(r.load_cv(), 0.0);
}
