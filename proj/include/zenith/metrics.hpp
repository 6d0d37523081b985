#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "zenith/common.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Ranking metrics. AUC uses the rank-sum statistic with half-credit for
// ties; because every intermediate value is a multiple of 1/2 it matches
// exhaustive pair enumeration exactly, not just within tolerance.
// ---------------------------------------------------------------------------

inline double auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    if (scores.size() != labels.size()) throw input_error("auc: scores/labels length mismatch");
    const std::int64_t n = static_cast<std::int64_t>(scores.size());
    std::int64_t n_pos = 0;
    for (double y : labels) n_pos += (y == 1.0) ? 1 : 0;
    const std::int64_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw input_error("auc: needs at least one positive and one negative label");

    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::int64_t a, std::int64_t b) { return scores[a] < scores[b]; });

    // average rank within each tied block; ranks are 1-based
    double rank_sum_pos = 0.0;
    std::int64_t i = 0;
    while (i < n) {
        std::int64_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
        for (std::int64_t t = i; t < j; ++t)
            if (labels[order[t]] == 1.0) rank_sum_pos += avg_rank;
        i = j;
    }
    const double numer = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return numer / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct UaucResult {
    double value = 0.0;
    std::int64_t users_scored = 0;   // users with both classes
    std::int64_t users_skipped = 0;  // single-class users
};

// Unweighted mean of per-user AUC over users that have both classes; users
// are visited in sorted id order so the accumulation order is deterministic.
inline UaucResult uauc(const std::vector<double>& scores, const std::vector<double>& labels,
                       const std::vector<std::int64_t>& user_ids) {
    if (scores.size() != labels.size() || scores.size() != user_ids.size())
        throw input_error("uauc: input length mismatch");
    std::map<std::int64_t, std::vector<std::int64_t>> by_user;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(scores.size()); ++i)
        by_user[user_ids[i]].push_back(i);

    UaucResult res;
    double total = 0.0;
    for (const auto& [user, rows] : by_user) {
        bool has_pos = false, has_neg = false;
        for (std::int64_t r : rows) {
            if (labels[r] == 1.0) has_pos = true;
            else has_neg = true;
        }
        if (!has_pos || !has_neg) {
            ++res.users_skipped;
            continue;
        }
        std::vector<double> s, y;
        s.reserve(rows.size());
        y.reserve(rows.size());
        for (std::int64_t r : rows) {
            s.push_back(scores[r]);
            y.push_back(labels[r]);
        }
        total += auc(s, y);
        ++res.users_scored;
    }
    if (res.users_scored == 0) throw input_error("uauc: no user has both classes");
    res.value = total / static_cast<double>(res.users_scored);
    return res;
}

inline double logloss(const std::vector<double>& probs, const std::vector<double>& labels) {
    if (probs.size() != labels.size()) throw input_error("logloss: probs/labels length mismatch");
    if (probs.empty()) throw input_error("logloss: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], 1e-7, 1.0 - 1e-7);
        total += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    return total / static_cast<double>(probs.size());
}

}  // namespace zenith
