#pragma once

// Robust aggregation rules. Every rule breaks distance/score/value ties by
// ascending agent index, and every mean is summed in ascending agent-index order.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cefl/core.hpp"

namespace cefl {

enum class RuleKind { CE, Krum, CWTM, Median, Mean };

inline const char* to_string(RuleKind r) {
    switch (r) {
        case RuleKind::CE: return "ce";
        case RuleKind::Krum: return "krum";
        case RuleKind::CWTM: return "cwtm";
        case RuleKind::Median: return "median";
        case RuleKind::Mean: return "mean";
    }
    return "?";
}

inline RuleKind parse_rule(const std::string& s) {
    for (auto r : {RuleKind::CE, RuleKind::Krum, RuleKind::CWTM, RuleKind::Median, RuleKind::Mean})
        if (s == to_string(r)) return r;
    throw ConfigError("unknown aggregation rule '" + s + "'");
}

/// Result of one filter application.
///
/// Set-based rules (ce, krum, mean) partition the agents into `kept` and
/// `discarded`, both sorted ascending. Coordinate-wise rules (cwtm, median) leave
/// both empty and set `coordinatewise`.
struct FilterVerdict {
    std::vector<AgentIndex> kept;
    std::vector<AgentIndex> discarded;
    ParamVector output;
    bool coordinatewise = false;

    friend bool operator==(const FilterVerdict&, const FilterVerdict&) = default;
};

namespace detail {

inline void require_nonempty_same_dim(std::span<const ParamVector> subs) {
    if (subs.empty()) throw ConfigError("aggregation needs at least one submission");
    for (const auto& s : subs)
        if (s.dim() != subs.front().dim()) throw ConfigError("submissions differ in dimension");
}

/// Keeps the `keep` entries with smallest (score, index); the rest are discarded.
inline FilterVerdict select_lowest(std::span<const ParamVector> subs, const std::vector<double>& score,
                                   std::size_t keep) {
    std::vector<AgentIndex> order(subs.size());
    std::iota(order.begin(), order.end(), AgentIndex{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](AgentIndex a, AgentIndex b) { return score[a] < score[b]; });
    FilterVerdict v;
    v.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    v.discarded.assign(order.begin() + static_cast<std::ptrdiff_t>(keep), order.end());
    std::sort(v.kept.begin(), v.kept.end());
    std::sort(v.discarded.begin(), v.discarded.end());
    v.output = mean_of(subs, v.kept);
    return v;
}

}  // namespace detail

/// Comparative elimination: drop the f submissions farthest from xbar, average the rest.
inline FilterVerdict ce_filter(const ParamVector& xbar, std::span<const ParamVector> submissions, std::size_t f) {
    detail::require_nonempty_same_dim(submissions);
    if (f >= submissions.size()) throw ConfigError("ce: f must be smaller than the number of agents");
    std::vector<double> dist(submissions.size());
    for (std::size_t i = 0; i < submissions.size(); ++i) dist[i] = sq_dist(xbar, submissions[i]);
    return detail::select_lowest(submissions, dist, submissions.size() - f);
}

/// multi-KRUM: score each agent by the summed squared distance to its N - f - 2
/// nearest peers and average the `select` lowest-scoring agents.
inline FilterVerdict multi_krum(std::span<const ParamVector> submissions, std::size_t f, std::size_t select) {
    detail::require_nonempty_same_dim(submissions);
    const std::size_t n = submissions.size();
    if (n < f + 3) throw ConfigError("krum: need N - f - 2 >= 1");
    if (select < 1 || select > n) throw ConfigError("krum: selection size must be in [1, N]");
    const std::size_t neighbors = n - f - 2;
    std::vector<double> score(n, 0.0);
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) row.push_back(sq_dist(submissions[i], submissions[j]));
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbors), row.end());
        for (std::size_t m = 0; m < neighbors; ++m) score[i] += row[m];
    }
    return detail::select_lowest(submissions, score, select);
}

/// Coordinate-wise trimmed mean: per coordinate drop the f smallest and f largest values.
inline FilterVerdict cwtm(std::span<const ParamVector> submissions, std::size_t f) {
    detail::require_nonempty_same_dim(submissions);
    const std::size_t n = submissions.size();
    if (n <= 2 * f) throw ConfigError("cwtm: need N - 2f >= 1");
    const std::size_t d = submissions.front().dim();
    FilterVerdict v;
    v.coordinatewise = true;
    v.output = ParamVector(d);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = submissions[i][j];
        std::sort(col.begin(), col.end());
        double s = 0.0;
        for (std::size_t i = f; i < n - f; ++i) s += col[i];
        v.output[j] = s / static_cast<double>(n - 2 * f);
    }
    return v;
}

/// Coordinate-wise median; for even N the midpoint of the two middle values.
inline FilterVerdict cw_median(std::span<const ParamVector> submissions) {
    detail::require_nonempty_same_dim(submissions);
    const std::size_t n = submissions.size();
    const std::size_t d = submissions.front().dim();
    FilterVerdict v;
    v.coordinatewise = true;
    v.output = ParamVector(d);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = submissions[i][j];
        std::sort(col.begin(), col.end());
        v.output[j] = (n % 2 == 1) ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return v;
}

inline FilterVerdict plain_mean(std::span<const ParamVector> submissions) {
    detail::require_nonempty_same_dim(submissions);
    FilterVerdict v;
    v.kept.resize(submissions.size());
    std::iota(v.kept.begin(), v.kept.end(), AgentIndex{0});
    v.output = mean_of(submissions, v.kept);
    return v;
}

struct RuleSpec {
    RuleKind kind = RuleKind::CE;
    std::optional<std::size_t> krum_select;  // default N - f

    friend bool operator==(const RuleSpec&, const RuleSpec&) = default;
};

/// Throws ConfigError when the rule cannot run with N agents and bound f.
inline void check_rule_preconditions(const RuleSpec& rule, std::size_t n, std::size_t f) {
    switch (rule.kind) {
        case RuleKind::CE:
            if (f >= n) throw ConfigError("ce: f must be smaller than N");
            break;
        case RuleKind::Krum: {
            if (n < f + 3) throw ConfigError("krum: need N - f - 2 >= 1");
            const std::size_t m = rule.krum_select.value_or(n - f);
            if (m < 1 || m > n) throw ConfigError("krum: selection size must be in [1, N]");
            break;
        }
        case RuleKind::CWTM:
            if (n <= 2 * f) throw ConfigError("cwtm: need N - 2f >= 1");
            break;
        case RuleKind::Median:
        case RuleKind::Mean:
            if (n < 1) throw ConfigError("rule needs at least one agent");
            break;
    }
}

inline FilterVerdict apply_rule(const RuleSpec& rule, const ParamVector& xbar,
                                std::span<const ParamVector> submissions, std::size_t f) {
    switch (rule.kind) {
        case RuleKind::CE: return ce_filter(xbar, submissions, f);
        case RuleKind::Krum:
            return multi_krum(submissions, f, rule.krum_select.value_or(submissions.size() - f));
        case RuleKind::CWTM: return cwtm(submissions, f);
        case RuleKind::Median: return cw_median(submissions);
        case RuleKind::Mean: return plain_mean(submissions);
    }
    throw ContractViolation("unhandled rule");
}

}  // namespace cefl
