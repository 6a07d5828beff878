#pragma once

// Counter-based random streams.
//
// Every draw in a simulation is addressed by an RngKey. The key is hashed into
// a Philox4x32-10 key/counter pair; the stream position then advances only the
// low counter words. Nothing is shared between streams, so work can be split
// across threads in any order without changing a single bit of output.
//
// Normals use the inverse-CDF method (Acklam's rational approximation, relative
// error below 1.2e-9) on one 53-bit uniform per normal. The algorithm is fixed
// so golden trajectories stay valid across platforms with a correctly rounded
// sqrt and a faithful log.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "cefl/core.hpp"

namespace cefl {

enum class StreamTag : std::uint32_t {
    SampleDraw = 1,
    Init = 2,
    Attack = 3,
};

struct RngKey {
    std::uint64_t seed = 0;
    std::uint64_t run = 0;
    std::uint64_t agent = 0;
    std::uint64_t round = 0;
    std::uint64_t local_step = 0;
    StreamTag stream = StreamTag::SampleDraw;

    RngKey with_run(std::uint64_t r) const { auto k = *this; k.run = r; return k; }
    RngKey with_agent(std::uint64_t a) const { auto k = *this; k.agent = a; return k; }
    RngKey with_round(std::uint64_t r) const { auto k = *this; k.round = r; return k; }
    RngKey with_step(std::uint64_t t) const { auto k = *this; k.local_step = t; return k; }
    RngKey with_stream(StreamTag s) const { auto k = *this; k.stream = s; return k; }

    friend bool operator==(const RngKey&, const RngKey&) = default;
};

struct SimulationId {
    std::uint64_t seed = 0;
    std::uint64_t run_index = 0;
    std::string label;

    RngKey key(StreamTag stream) const { return RngKey{seed, run_index, 0, 0, 0, stream}; }
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
    return splitmix64(h ^ splitmix64(v));
}

using PhiloxBlock = std::array<std::uint32_t, 4>;

constexpr PhiloxBlock philox4x32_10(PhiloxBlock ctr, std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

/// Inverse of the standard normal CDF for p in (0, 1).
inline double inverse_normal_cdf(double p) noexcept {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    constexpr double p_high = 1.0 - p_low;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > p_high) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

/// Sequential reader over the stream addressed by one RngKey.
class RngStream {
public:
    explicit RngStream(const RngKey& key) noexcept {
        const std::uint64_t k = detail::splitmix64(key.seed ^ 0x6A09E667F3BCC908ULL);
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
        std::uint64_t h = detail::splitmix64(static_cast<std::uint64_t>(key.stream));
        h = detail::hash_combine(h, key.run);
        h = detail::hash_combine(h, key.agent);
        h = detail::hash_combine(h, key.round);
        h = detail::hash_combine(h, key.local_step);
        address_ = h;
    }

    std::uint64_t next_u64() noexcept {
        if (lane_ == 2) refill();
        return buffer_[lane_++];
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform_open() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() noexcept { return detail::inverse_normal_cdf(uniform_open()); }

    /// Uniform integer in [0, n) by rejection, n > 0.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t u;
        do {
            u = next_u64();
        } while (u >= limit);
        return u % n;
    }

private:
    void refill() noexcept {
        const detail::PhiloxBlock ctr = {static_cast<std::uint32_t>(block_),
                                         static_cast<std::uint32_t>(block_ >> 32),
                                         static_cast<std::uint32_t>(address_),
                                         static_cast<std::uint32_t>(address_ >> 32)};
        const auto out = detail::philox4x32_10(ctr, key_);
        buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
        buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
        ++block_;
        lane_ = 0;
    }

    std::array<std::uint32_t, 2> key_{};
    std::uint64_t address_ = 0;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int lane_ = 2;
};

/// mean + stddev * z with z standard normal, drawn from the start of the key's stream.
inline ParamVector draw_gaussian(const RngKey& key, std::size_t dim, const ParamVector& mean,
                                 double stddev) {
    if (mean.dim() != dim) throw ConfigError("draw_gaussian: mean has wrong dimension");
    if (!(stddev >= 0.0)) throw ConfigError("draw_gaussian: stddev must be nonnegative");
    ParamVector out = mean;
    if (stddev == 0.0) return out;
    RngStream stream(key);
    for (std::size_t j = 0; j < dim; ++j) out[j] += stddev * stream.normal();
    return out;
}

}  // namespace cefl
