#pragma once

// Quadratic optimization instances for the honest agents.
//
// Agent i holds q_i(x) = 1/2 (x - c_i)^T A_i (x - c_i) with A_i symmetric PSD.
// Generated instances put every center c_i at the honest minimizer x*, which is
// the constructive way of getting 2f-redundancy: every subset sum of q_i is then
// minimized at x* because every term is.
//
// Stochastic gradients are A_i (x - c_i) + (c_i - X) for a data point
// X = c_i + noise_std * Z, Z ~ N(0, I). For the identity form this is the
// mean-estimation gradient x - X. The noise bound is sigma^2 = dim * noise_std^2.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cefl/core.hpp"
#include "cefl/rng.hpp"

namespace cefl {

/// Symmetric positive-semidefinite matrix, stored as a diagonal or as a dense row-major block.
class QuadraticForm {
public:
    static QuadraticForm identity(std::size_t dim) { return diagonal(std::vector<double>(dim, 1.0)); }

    static QuadraticForm diagonal(std::vector<double> diag) {
        QuadraticForm q;
        q.dim_ = diag.size();
        q.diag_ = std::move(diag);
        return q;
    }

    /// Dense symmetric matrix, row-major; asymmetry beyond 1e-12 is rejected.
    static QuadraticForm full(std::size_t dim, std::vector<double> row_major) {
        if (row_major.size() != dim * dim) throw ConfigError("full form: expected dim*dim entries");
        for (std::size_t r = 0; r < dim; ++r)
            for (std::size_t c = r + 1; c < dim; ++c)
                if (std::abs(row_major[r * dim + c] - row_major[c * dim + r]) > 1e-12)
                    throw ConfigError("full form: matrix is not symmetric");
        QuadraticForm q;
        q.dim_ = dim;
        q.full_ = std::move(row_major);
        return q;
    }

    std::size_t dim() const noexcept { return dim_; }
    bool is_diagonal() const noexcept { return full_.empty(); }
    const std::vector<double>& diag() const noexcept { return diag_; }
    const std::vector<double>& full_entries() const noexcept { return full_; }

    ParamVector apply(const ParamVector& v) const {
        if (v.dim() != dim_) throw ConfigError("quadratic form: dimension mismatch");
        ParamVector out(dim_);
        if (is_diagonal()) {
            for (std::size_t j = 0; j < dim_; ++j) out[j] = diag_[j] * v[j];
        } else {
            for (std::size_t r = 0; r < dim_; ++r) {
                double s = 0.0;
                for (std::size_t c = 0; c < dim_; ++c) s += full_[r * dim_ + c] * v[c];
                out[r] = s;
            }
        }
        return out;
    }

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim_),
                                                  static_cast<Eigen::Index>(dim_));
        for (std::size_t r = 0; r < dim_; ++r)
            for (std::size_t c = 0; c < dim_; ++c)
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    is_diagonal() ? (r == c ? diag_[r] : 0.0) : full_[r * dim_ + c];
        return m;
    }

    /// (min, max) eigenvalue.
    std::pair<double, double> eigen_range() const {
        if (is_diagonal()) {
            const auto [lo, hi] = std::minmax_element(diag_.begin(), diag_.end());
            return {*lo, *hi};
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(), Eigen::EigenvaluesOnly);
        return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
    }

    friend bool operator==(const QuadraticForm&, const QuadraticForm&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> diag_;
    std::vector<double> full_;
};

struct AgentCost {
    QuadraticForm curvature;
    ParamVector center;
};

enum class ProblemKind { MeanEstimation, Heterogeneous, Custom };

inline const char* to_string(ProblemKind k) {
    switch (k) {
        case ProblemKind::MeanEstimation: return "mean-estimation";
        case ProblemKind::Heterogeneous: return "heterogeneous";
        case ProblemKind::Custom: return "custom";
    }
    return "?";
}

class ProblemInstance {
public:
    ProblemInstance(ProblemKind kind, std::vector<AgentCost> agents, ParamVector minimizer, double mu,
                    double lip, double noise_std)
        : kind_(kind),
          agents_(std::move(agents)),
          minimizer_(std::move(minimizer)),
          mu_(mu),
          lip_(lip),
          noise_std_(noise_std) {
        if (agents_.empty()) throw ConfigError("instance needs at least one honest agent");
        if (minimizer_.dim() == 0) throw ConfigError("dimension must be at least 1");
        if (!minimizer_.all_finite()) throw ConfigError("minimizer must be finite");
        if (!(noise_std_ >= 0.0) || !std::isfinite(noise_std_))
            throw ConfigError("noise_std must be finite and nonnegative");
        for (const auto& a : agents_) {
            if (a.curvature.dim() != dim() || a.center.dim() != dim())
                throw ConfigError("agent cost dimension differs from instance dimension");
            if (a.curvature.eigen_range().first < -1e-12)
                throw ConfigError("invalid instance: quadratic form is not positive semidefinite");
        }
    }

    ProblemKind kind() const noexcept { return kind_; }
    std::size_t dim() const noexcept { return minimizer_.dim(); }
    std::size_t n_honest() const noexcept { return agents_.size(); }
    const std::vector<AgentCost>& agents() const noexcept { return agents_; }
    const AgentCost& agent(std::size_t honest_ordinal) const {
        if (honest_ordinal >= agents_.size())
            throw ContractViolation("agent " + std::to_string(honest_ordinal) +
                                    " is not an honest agent of this instance");
        return agents_[honest_ordinal];
    }
    const ParamVector& minimizer() const noexcept { return minimizer_; }
    double mu() const noexcept { return mu_; }
    double lip() const noexcept { return lip_; }
    double noise_std() const noexcept { return noise_std_; }
    /// Exact per-sample gradient-noise bound, dim * noise_std^2.
    double sigma_sq() const noexcept { return static_cast<double>(dim()) * noise_std_ * noise_std_; }

    /// Average of the honest quadratic forms as a dense matrix.
    Eigen::MatrixXd average_form() const {
        Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim()),
                                                    static_cast<Eigen::Index>(dim()));
        for (const auto& a : agents_) avg += a.curvature.dense();
        return avg / static_cast<double>(agents_.size());
    }

    /// Same curvatures, with every center and the minimizer scaled by c.
    ProblemInstance shifted(double c) const {
        std::vector<AgentCost> moved = agents_;
        for (auto& a : moved) a.center *= c;
        return ProblemInstance(kind_, std::move(moved), c * minimizer_, mu_, lip_, noise_std_);
    }

    /// Throws ConfigError naming the first broken invariant.
    void validate(double tol = 1e-12) const {
        if (!(mu_ > 0.0) || !(mu_ <= lip_)) throw ConfigError("instance requires 0 < mu <= lip");
        for (std::size_t i = 0; i < agents_.size(); ++i) {
            const auto [lo, hi] = agents_[i].curvature.eigen_range();
            if (lo < -tol) throw ConfigError("agent " + std::to_string(i) + ": form not PSD");
            if (hi > lip_ * (1.0 + tol)) throw ConfigError("agent " + std::to_string(i) + ": eigenvalue above lip");
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(average_form(), Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < mu_ * (1.0 - tol) - tol)
            throw ConfigError("average form has smallest eigenvalue below mu");
        const double scale = std::max(1.0, lip_ * minimizer_.norm());
        for (std::size_t i = 0; i < agents_.size(); ++i) {
            const auto g = agents_[i].curvature.apply(minimizer_ - agents_[i].center);
            if (g.norm() > tol * scale)
                throw ConfigError("agent " + std::to_string(i) + ": gradient at minimizer is nonzero");
        }
    }

    friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;

private:
    ProblemKind kind_;
    std::vector<AgentCost> agents_;
    ParamVector minimizer_;
    double mu_;
    double lip_;
    double noise_std_;
};

/// Every agent holds 1/2 ||x - x*||^2; mu = lip = 1.
inline ProblemInstance make_mean_estimation(std::size_t dim, std::size_t n_honest, double noise_std,
                                            const ParamVector& minimizer) {
    if (dim < 1) throw ConfigError("dim must be at least 1");
    if (minimizer.dim() != dim) throw ConfigError("minimizer dimension differs from dim");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be nonnegative");
    std::vector<AgentCost> agents(n_honest, AgentCost{QuadraticForm::identity(dim), minimizer});
    return ProblemInstance(ProblemKind::MeanEstimation, std::move(agents), minimizer, 1.0, 1.0, noise_std);
}

/// Diagonal forms with entries in [0, lip], some exactly zero, adjusted so that the
/// average's smallest eigenvalue is exactly mu. All agents share the minimizer.
inline ProblemInstance make_heterogeneous_quadratic(std::size_t dim, std::size_t n_honest, double mu,
                                                    double lip, const ParamVector& minimizer,
                                                    const RngKey& key, double noise_std = 0.0) {
    if (dim < 1 || n_honest < 1) throw ConfigError("dim and n_honest must be at least 1");
    if (!(mu > 0.0) || !(mu <= lip) || !std::isfinite(lip))
        throw ConfigError("infeasible curvature bounds: need 0 < mu <= lip");
    if (minimizer.dim() != dim) throw ConfigError("minimizer dimension differs from dim");

    std::vector<std::vector<double>> diag(n_honest, std::vector<double>(dim, lip));
    if (mu < lip) {
        RngStream stream(key.with_stream(StreamTag::Init));
        for (std::size_t j = 0; j < dim; ++j) {
            for (std::size_t i = 0; i < n_honest; ++i) {
                // one agent per coordinate keeps a nonzero entry so the average can be lifted
                const bool may_zero = n_honest > 1 && i != j % n_honest;
                const double u = stream.uniform_open();
                const double v = stream.uniform_open();
                diag[i][j] = (may_zero && u < 0.25) ? 0.0 : lip * v;
            }
        }
        std::vector<double> avg(dim, 0.0);
        for (std::size_t j = 0; j < dim; ++j) {
            for (std::size_t i = 0; i < n_honest; ++i) avg[j] += diag[i][j];
            avg[j] /= static_cast<double>(n_honest);
        }
        const std::size_t pinned = static_cast<std::size_t>(
            std::min_element(avg.begin(), avg.end()) - avg.begin());
        for (std::size_t j = 0; j < dim; ++j) {
            if (avg[j] > mu && j == pinned) {
                for (std::size_t i = 0; i < n_honest; ++i) diag[i][j] *= mu / avg[j];
            } else if (avg[j] < mu) {
                // lift nonzero entries toward lip; fall back to lifting all of them
                double headroom = 0.0;
                for (std::size_t i = 0; i < n_honest; ++i)
                    if (diag[i][j] > 0.0) headroom += lip - diag[i][j];
                headroom /= static_cast<double>(n_honest);
                const bool keep_zeros = headroom >= mu - avg[j] && headroom > 0.0;
                if (!keep_zeros) headroom = lip - avg[j];
                const double t = (mu - avg[j]) / headroom;
                for (std::size_t i = 0; i < n_honest; ++i)
                    if (!keep_zeros || diag[i][j] > 0.0) diag[i][j] += t * (lip - diag[i][j]);
            }
        }
    }
    std::vector<AgentCost> agents;
    agents.reserve(n_honest);
    for (auto& d : diag) agents.push_back(AgentCost{QuadraticForm::diagonal(std::move(d)), minimizer});
    ProblemInstance inst(ProblemKind::Heterogeneous, std::move(agents), minimizer, mu, lip, noise_std);
    inst.validate(1e-9);
    return inst;
}

inline ParamVector grad_deterministic(const ProblemInstance& inst, std::size_t agent, const ParamVector& x) {
    const auto& a = inst.agent(agent);
    return a.curvature.apply(x - a.center);
}

/// Mini-batch stochastic gradient with fresh Gaussian data drawn from the key's stream.
inline ParamVector grad_stochastic(const ProblemInstance& inst, std::size_t agent, const ParamVector& x,
                                   const RngKey& key, std::size_t batch = 1) {
    if (batch < 1) throw ConfigError("batch must be at least 1");
    ParamVector g = grad_deterministic(inst, agent, x);
    if (inst.noise_std() == 0.0) return g;
    RngStream stream(key);
    ParamVector noise(inst.dim());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < inst.dim(); ++j) noise[j] += stream.normal();
    g.axpy(-inst.noise_std() / static_cast<double>(batch), noise);
    return g;
}

/// A finite set of data points for one agent, X = center + stddev * Z.
struct SamplePool {
    std::vector<ParamVector> points;
    ParamVector mean;
    double stddev = 0.0;

    std::size_t size() const noexcept { return points.size(); }
};

inline SamplePool build_pool(const ProblemInstance& inst, std::size_t agent, const RngKey& key,
                             std::size_t size) {
    if (size < 1) throw ConfigError("samples_per_agent must be at least 1");
    const auto& a = inst.agent(agent);
    SamplePool pool{{}, a.center, inst.noise_std()};
    pool.points.reserve(size);
    RngStream stream(key);
    for (std::size_t s = 0; s < size; ++s) {
        ParamVector p = a.center;
        for (std::size_t j = 0; j < inst.dim(); ++j) p[j] += inst.noise_std() * stream.normal();
        pool.points.push_back(std::move(p));
    }
    return pool;
}

/// Mini-batch stochastic gradient over points picked uniformly (with replacement) from the pool.
inline ParamVector grad_from_pool(const ProblemInstance& inst, std::size_t agent, const ParamVector& x,
                                  const SamplePool& pool, const RngKey& key, std::size_t batch = 1) {
    if (batch < 1) throw ConfigError("batch must be at least 1");
    if (pool.points.empty()) throw ContractViolation("empty sample pool");
    const auto& a = inst.agent(agent);
    ParamVector g = a.curvature.apply(x - a.center);
    RngStream stream(key);
    ParamVector offset(inst.dim());
    for (std::size_t b = 0; b < batch; ++b) offset += pool.points[stream.below(pool.size())];
    offset *= 1.0 / static_cast<double>(batch);
    g += a.center;
    g -= offset;
    return g;
}

enum class RedundancyMode { SharedMinimizer, Exhaustive };

struct RedundancyReport {
    bool pass = false;
    RedundancyMode mode = RedundancyMode::SharedMinimizer;
    std::size_t subsets_checked = 0;
    std::vector<std::size_t> failing_subset;
    std::string detail;
};

namespace detail {

inline double subset_cost(const ProblemInstance& inst, const std::vector<std::size_t>& subset,
                          const Eigen::VectorXd& x) {
    double v = 0.0;
    for (std::size_t i : subset) {
        const auto& a = inst.agents()[i];
        Eigen::VectorXd diff = x - Eigen::Map<const Eigen::VectorXd>(
                                       a.center.raw().data(), static_cast<Eigen::Index>(inst.dim()));
        v += 0.5 * diff.dot(a.curvature.dense() * diff);
    }
    return v;
}

}  // namespace detail

/// Checks 2f-redundancy. SharedMinimizer verifies grad q_i(x*) = 0 for every honest i,
/// which suffices for quadratics. Exhaustive (|H| <= 12) solves every subset of size
/// >= |H| - f and confirms x* attains that subset's minimum.
inline RedundancyReport check_redundancy(const ProblemInstance& inst, std::size_t f,
                                         RedundancyMode mode = RedundancyMode::SharedMinimizer) {
    const std::size_t n = inst.n_honest();
    if (f >= n) throw ConfigError("check_redundancy: need f < |H|");
    for (const auto& a : inst.agents())
        if (a.curvature.eigen_range().first < -1e-12)
            throw ConfigError("invalid instance: quadratic form is not positive semidefinite");

    RedundancyReport rep;
    rep.mode = mode;
    const ParamVector& xs = inst.minimizer();
    if (mode == RedundancyMode::SharedMinimizer) {
        const double tol = 1e-12 * std::max(1.0, inst.lip() * xs.norm());
        for (std::size_t i = 0; i < n; ++i) {
            ++rep.subsets_checked;
            const double g = grad_deterministic(inst, i, xs).norm();
            if (g > tol) {
                rep.failing_subset = {i};
                rep.detail = "agent " + std::to_string(i) + " has gradient norm " + std::to_string(g) +
                             " at the honest minimizer";
                return rep;
            }
        }
        rep.pass = true;
        return rep;
    }

    if (n > 12) throw ConfigError("exhaustive redundancy check is limited to |H| <= 12");
    const std::size_t min_size = std::max<std::size_t>(1, n - f);
    const auto d = static_cast<Eigen::Index>(inst.dim());
    const Eigen::Map<const Eigen::VectorXd> xstar(xs.raw().data(), d);
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        std::vector<std::size_t> subset;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1u << i)) subset.push_back(i);
        if (subset.size() < min_size) continue;
        ++rep.subsets_checked;
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
        for (std::size_t i : subset) {
            const auto& a = inst.agents()[i];
            const Eigen::MatrixXd A = a.curvature.dense();
            hess += A;
            rhs += A * Eigen::Map<const Eigen::VectorXd>(a.center.raw().data(), d);
        }
        const Eigen::VectorXd x_sub = hess.completeOrthogonalDecomposition().solve(rhs);
        const double at_star = detail::subset_cost(inst, subset, xstar);
        const double best = detail::subset_cost(inst, subset, x_sub);
        if (at_star - best > 1e-9 * (1.0 + std::abs(best))) {
            rep.failing_subset = subset;
            rep.detail = "subset minimum " + std::to_string(best) + " below value at honest minimizer " +
                         std::to_string(at_star);
            return rep;
        }
    }
    rep.pass = true;
    return rep;
}

}  // namespace cefl
