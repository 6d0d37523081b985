#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "zenith/common.hpp"
#include "zenith/metrics.hpp"

namespace {

// Exhaustive pair enumeration; the independent oracle for auc.
double auc_by_pairs(const std::vector<double>& s, const std::vector<double>& y) {
    double credit = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[i] != 1.0 || y[j] != 0.0) continue;
            ++pairs;
            if (s[i] > s[j]) credit += 1.0;
            else if (s[i] == s[j]) credit += 0.5;
        }
    return credit / static_cast<double>(pairs);
}

}  // namespace

TEST(Auc, SpecExamples) {
    EXPECT_EQ(zenith::auc({0.9, 0.8, 0.1}, {1, 1, 0}), 1.0);
    EXPECT_EQ(zenith::auc({0.8, 0.7, 0.3, 0.2}, {1, 0, 0, 1}), 0.5);
    EXPECT_EQ(zenith::auc({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}), 0.5);  // all ties
    EXPECT_THROW(zenith::auc({0.1, 0.2}, {1, 1}), zenith::input_error);
    EXPECT_THROW(zenith::auc({0.1, 0.2}, {0, 0}), zenith::input_error);
}

TEST(Auc, MatchesPairEnumerationExactly) {
    zenith::Rng rng(51);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(zenith::rng_index(rng, 40));
        std::vector<double> s(n), y(n);
        bool pos = false, neg = false;
        for (int i = 0; i < n; ++i) {
            // quantized scores so ties actually occur
            s[i] = static_cast<double>(zenith::rng_index(rng, 8)) / 8.0;
            y[i] = zenith::rng_uniform01(rng) < 0.5 ? 1.0 : 0.0;
            (y[i] == 1.0 ? pos : neg) = true;
        }
        if (!pos) y[0] = 1.0;
        if (!neg) y[1] = 0.0;
        EXPECT_EQ(zenith::auc(s, y), auc_by_pairs(s, y)) << "trial " << trial;
    }
}

TEST(Auc, InvariantUnderStrictlyIncreasingTransforms) {
    zenith::Rng rng(52);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 10 + static_cast<int>(zenith::rng_index(rng, 30));
        std::vector<double> s(n), y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = zenith::rng_uniform(rng, -1.0, 1.0);
            y[i] = zenith::rng_uniform01(rng) < 0.4 ? 1.0 : 0.0;
        }
        y[0] = 1.0;
        y[1] = 0.0;
        const double base = zenith::auc(s, y);
        std::vector<double> affine(n), expo(n), cubic(n);
        for (int i = 0; i < n; ++i) {
            affine[i] = 1.5 * s[i] + 0.25;
            expo[i] = std::exp(s[i]);
            cubic[i] = s[i] * s[i] * s[i];
        }
        EXPECT_EQ(zenith::auc(affine, y), base);
        EXPECT_EQ(zenith::auc(expo, y), base);
        EXPECT_EQ(zenith::auc(cubic, y), base);
    }
}

TEST(Uauc, SpecExamples) {
    // one user: uauc == auc
    std::vector<double> s = {0.9, 0.2, 0.6};
    std::vector<double> y = {1, 0, 0};
    auto r = zenith::uauc(s, y, {7, 7, 7});
    EXPECT_EQ(r.value, zenith::auc(s, y));
    EXPECT_EQ(r.users_scored, 1);
    EXPECT_EQ(r.users_skipped, 0);

    // users with per-user AUCs 1.0 and 0.5 -> mean 0.75
    s = {0.9, 0.1, 0.5, 0.5};
    y = {1, 0, 1, 0};
    r = zenith::uauc(s, y, {1, 1, 2, 2});
    EXPECT_EQ(r.value, 0.75);

    // single-class users skipped, counted
    s = {0.9, 0.1, 0.8, 0.7};
    y = {1, 0, 1, 1};
    r = zenith::uauc(s, y, {1, 1, 2, 2});
    EXPECT_EQ(r.value, 1.0);
    EXPECT_EQ(r.users_scored, 1);
    EXPECT_EQ(r.users_skipped, 1);

    EXPECT_THROW(zenith::uauc({0.1, 0.2}, {1, 1}, {1, 1}), zenith::input_error);
}

TEST(Uauc, MatchesPerUserLoopOnRandomBatches) {
    zenith::Rng rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 200;
        std::vector<double> s(n), y(n);
        std::vector<std::int64_t> u(n);
        for (int i = 0; i < n; ++i) {
            s[i] = zenith::rng_uniform01(rng);
            y[i] = zenith::rng_uniform01(rng) < 0.5 ? 1.0 : 0.0;
            u[i] = zenith::rng_index(rng, 50);
        }
        // oracle: iterate users in sorted order (the same deterministic
        // order the implementation commits to), plain per-user auc loop
        std::map<std::int64_t, std::vector<int>> rows;
        for (int i = 0; i < n; ++i) rows[u[i]].push_back(i);
        double total = 0.0;
        std::int64_t scored = 0, skipped = 0;
        for (const auto& [user, idx] : rows) {
            std::vector<double> us, uy;
            for (int i : idx) {
                us.push_back(s[i]);
                uy.push_back(y[i]);
            }
            bool pos = false, neg = false;
            for (double v : uy) (v == 1.0 ? pos : neg) = true;
            if (!pos || !neg) {
                ++skipped;
                continue;
            }
            total += auc_by_pairs(us, uy);
            ++scored;
        }
        const auto r = zenith::uauc(s, y, u);
        EXPECT_EQ(r.value, total / static_cast<double>(scored)) << "trial " << trial;
        EXPECT_EQ(r.users_scored, scored);
        EXPECT_EQ(r.users_skipped, skipped);
    }
}

TEST(LogLoss, SpecExamplesAndOracle) {
    EXPECT_NEAR(zenith::logloss({0.5, 0.5, 0.5}, {1, 0, 1}), std::log(2.0), 1e-15);
    // perfect confident predictions, clamped at 1e-7
    const double clamped = zenith::logloss({1.0, 0.0}, {1, 0});
    EXPECT_NEAR(clamped, -std::log(1.0 - 1e-7), 1e-12);
    EXPECT_LT(clamped, 1e-6);

    zenith::Rng rng(54);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(zenith::rng_index(rng, 30));
        std::vector<double> p(n), y(n);
        for (int i = 0; i < n; ++i) {
            p[i] = zenith::rng_uniform01(rng);
            y[i] = zenith::rng_uniform01(rng) < 0.5 ? 1.0 : 0.0;
        }
        double want = 0.0;
        for (int i = 0; i < n; ++i) {
            const double q = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
            want += -(y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q));
        }
        want /= n;
        EXPECT_EQ(zenith::logloss(p, y), want) << "trial " << trial;
    }
}
