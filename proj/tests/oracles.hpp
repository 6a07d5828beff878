#pragma once

// Reference implementations used only by tests. They share no code path with the
// production filters beyond the vector type.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cefl/aggregation.hpp"
#include "cefl/rng.hpp"

namespace cefl::testing {

/// Comparative elimination by exhaustive enumeration of every (N - f)-subset. The kept
/// subset is the unique one whose members all precede every non-member in the
/// (distance, index) order.
inline FilterVerdict oracle_ce(const ParamVector& xbar, std::span<const ParamVector> subs, std::size_t f) {
    const std::size_t n = subs.size();
    if (n > 12) throw ConfigError("oracle_ce: N too large for enumeration");
    if (f >= n) throw ConfigError("oracle_ce: f must be below N");
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < xbar.dim(); ++j) s += (subs[i][j] - xbar[j]) * (subs[i][j] - xbar[j]);
        dist[i] = s;
    }
    auto precedes = [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
    std::size_t found = 0;
    FilterVerdict v;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) != n - f) continue;
        bool ok = true;
        for (std::size_t a = 0; a < n && ok; ++a)
            for (std::size_t b = 0; b < n && ok; ++b)
                if ((mask >> a & 1u) && !(mask >> b & 1u) && !precedes(a, b)) ok = false;
        if (!ok) continue;
        ++found;
        v.kept.clear();
        v.discarded.clear();
        for (std::size_t i = 0; i < n; ++i) (mask >> i & 1u ? v.kept : v.discarded).push_back(i);
    }
    if (found != 1) throw std::logic_error("oracle_ce: kept subset is not unique");
    ParamVector acc(xbar.dim());
    for (std::size_t i : v.kept)
        for (std::size_t j = 0; j < acc.dim(); ++j) acc[j] += subs[i][j];
    for (std::size_t j = 0; j < acc.dim(); ++j) acc[j] *= 1.0 / static_cast<double>(v.kept.size());
    v.output = acc;
    return v;
}

/// Small deterministic generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed, std::uint64_t salt = 0) : stream_(RngKey{seed, salt, 0, 0, 0, StreamTag::Init}) {}

    double uniform(double lo, double hi) { return lo + (hi - lo) * stream_.uniform_open(); }
    double normal() { return stream_.normal(); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(stream_.below(n)); }

    ParamVector vec(std::size_t d, double scale = 1.0) {
        ParamVector v(d);
        for (std::size_t j = 0; j < d; ++j) v[j] = scale * normal();
        return v;
    }

private:
    RngStream stream_;
};

/// Random CE instances; with `inject_ties` some submissions repeat distances to xbar
/// exactly, including at the cut.
struct CeCase {
    ParamVector xbar;
    std::vector<ParamVector> subs;
    std::size_t f = 0;
};

inline CeCase random_ce_case(Gen& g, std::size_t n, std::size_t d, bool inject_ties) {
    CeCase c;
    c.f = g.index((n - 1) / 2 + 1);
    c.xbar = g.vec(d);
    for (std::size_t i = 0; i < n; ++i) c.subs.push_back(c.xbar + g.vec(d));
    if (inject_ties) {
        // mirror some submissions through xbar: identical distance, different vector
        const std::size_t copies = 1 + g.index(n / 2);
        for (std::size_t t = 0; t < copies; ++t) {
            const std::size_t src = g.index(n), dst = g.index(n);
            if (src == dst) continue;
            ParamVector mirrored = c.xbar;
            mirrored *= 2.0;
            mirrored -= c.subs[src];
            c.subs[dst] = (g.index(2) == 0) ? c.subs[src] : mirrored;
        }
    }
    return c;
}

}  // namespace cefl::testing
