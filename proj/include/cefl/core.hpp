#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cefl/errors.hpp"

namespace cefl {

using AgentIndex = std::size_t;

/// Dense real vector of model parameters or gradients. Dimension is fixed at construction.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    ParamVector(std::initializer_list<double> values) : data_(values) {}
    explicit ParamVector(std::vector<double> values) : data_(std::move(values)) {}

    std::size_t dim() const noexcept { return data_.size(); }
    double operator[](std::size_t j) const { return data_[j]; }
    double& operator[](std::size_t j) { return data_[j]; }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }
    const std::vector<double>& raw() const noexcept { return data_; }

    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double sq_norm() const noexcept {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return s;
    }

    double norm() const noexcept { return std::sqrt(sq_norm()); }

    ParamVector& operator+=(const ParamVector& other);
    ParamVector& operator-=(const ParamVector& other);
    ParamVector& operator*=(double c) noexcept {
        for (double& v : data_) v *= c;
        return *this;
    }

    /// this += c * other
    ParamVector& axpy(double c, const ParamVector& other);

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    std::vector<double> data_;
};

inline void require_same_dim(const ParamVector& a, const ParamVector& b) {
    if (a.dim() != b.dim())
        throw ConfigError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()));
}

inline ParamVector& ParamVector::operator+=(const ParamVector& other) {
    require_same_dim(*this, other);
    for (std::size_t j = 0; j < data_.size(); ++j) data_[j] += other.data_[j];
    return *this;
}

inline ParamVector& ParamVector::operator-=(const ParamVector& other) {
    require_same_dim(*this, other);
    for (std::size_t j = 0; j < data_.size(); ++j) data_[j] -= other.data_[j];
    return *this;
}

inline ParamVector& ParamVector::axpy(double c, const ParamVector& other) {
    require_same_dim(*this, other);
    for (std::size_t j = 0; j < data_.size(); ++j) data_[j] += c * other.data_[j];
    return *this;
}

inline ParamVector vec_add(ParamVector a, const ParamVector& b) { return a += b; }
inline ParamVector vec_sub(ParamVector a, const ParamVector& b) { return a -= b; }

inline ParamVector vec_scale(ParamVector a, double c) {
    if (!std::isfinite(c)) throw ConfigError("vec_scale: non-finite scale factor");
    return a *= c;
}

inline ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
inline ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
inline ParamVector operator*(double c, ParamVector a) noexcept { return a *= c; }

inline double dot(const ParamVector& a, const ParamVector& b) {
    require_same_dim(a, b);
    double s = 0.0;
    for (std::size_t j = 0; j < a.dim(); ++j) s += a[j] * b[j];
    return s;
}

/// Squared Euclidean distance; order-equivalent to the distance itself.
inline double sq_dist(const ParamVector& a, const ParamVector& b) {
    require_same_dim(a, b);
    double s = 0.0;
    for (std::size_t j = 0; j < a.dim(); ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

/// Arithmetic mean of the selected vectors, summed in the order given.
inline ParamVector mean_of(std::span<const ParamVector> vectors, std::span<const AgentIndex> which) {
    if (which.empty()) throw ContractViolation("mean_of: empty selection");
    ParamVector acc(vectors[which.front()].dim());
    for (AgentIndex i : which) acc += vectors[i];
    acc *= 1.0 / static_cast<double>(which.size());
    return acc;
}

inline ParamVector mean_of(std::span<const ParamVector> vectors) {
    if (vectors.empty()) throw ContractViolation("mean_of: no vectors");
    ParamVector acc(vectors.front().dim());
    for (const auto& v : vectors) acc += v;
    acc *= 1.0 / static_cast<double>(vectors.size());
    return acc;
}

}  // namespace cefl
