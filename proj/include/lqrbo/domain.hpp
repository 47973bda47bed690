#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "lqrbo/linear_control.hpp"
#include "lqrbo/random.hpp"

namespace lqrbo {

/// Axis-aligned box in BO coordinates.
struct BoxDomain {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    BoxDomain() = default;
    BoxDomain(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size()) throw std::invalid_argument("BoxDomain: bound size mismatch");
        if ((lower.array() > upper.array()).any()) throw std::invalid_argument("BoxDomain: lower > upper");
        if (!lower.allFinite() || !upper.allFinite()) throw std::invalid_argument("BoxDomain: non-finite bound");
    }

    static BoxDomain unit(Eigen::Index dim) {
        return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
    }

    Eigen::Index dim() const { return lower.size(); }
    Eigen::VectorXd extent() const { return upper - lower; }
    Eigen::VectorXd center() const { return 0.5 * (lower + upper); }

    bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
        return ((x.array() >= lower.array() - tol) && (x.array() <= upper.array() + tol)).all();
    }
    bool contains(const BoxDomain& other, double tol = 0.0) const {
        return ((other.lower.array() >= lower.array() - tol) && (other.upper.array() <= upper.array() + tol)).all();
    }

    Eigen::VectorXd clamp(const Eigen::VectorXd& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

    /// Map into [0,1]^d; zero-extent dimensions map to 0.5.
    Eigen::VectorXd normalize(const Eigen::VectorXd& x) const {
        Eigen::VectorXd u(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double e = upper(i) - lower(i);
            u(i) = e > 0.0 ? (x(i) - lower(i)) / e : 0.5;
        }
        return u;
    }
    Eigen::VectorXd denormalize(const Eigen::VectorXd& u) const {
        return lower + u.cwiseProduct(extent());
    }

    /// Sum of log extents (log volume).
    double log_volume() const { return extent().array().log().sum(); }

    bool operator==(const BoxDomain& o) const { return lower == o.lower && upper == o.upper; }
};

enum class ReparamKind { Identity, Pca, Rembo };

inline std::string to_string(ReparamKind k) {
    switch (k) {
        case ReparamKind::Identity: return "identity";
        case ReparamKind::Pca: return "pca";
        case ReparamKind::Rembo: return "rembo";
    }
    return "identity";
}

inline ReparamKind reparam_kind_from_string(const std::string& s) {
    if (s == "identity") return ReparamKind::Identity;
    if (s == "pca") return ReparamKind::Pca;
    if (s == "rembo") return ReparamKind::Rembo;
    throw std::invalid_argument("unknown reparameterization kind: " + s);
}

/// Affine map between BO coordinates and policy parameters.
///   identity: theta = offset + theta_bo
///   pca:      theta = offset + T' embed(theta_bo), T rows are eigenvectors,
///             inactive eigen-directions are pinned to zero
///   rembo:    theta = clip(offset + E theta_bo, clip_lower, clip_upper), E is n_theta x d_e
struct AffineReparameterization {
    ReparamKind kind = ReparamKind::Identity;
    Eigen::VectorXd offset;
    Eigen::MatrixXd transform;
    Eigen::VectorXd scales;
    std::vector<bool> active_dims;
    Eigen::VectorXd clip_lower;  ///< rembo only
    Eigen::VectorXd clip_upper;

    Eigen::Index policy_dim() const { return offset.size(); }
    Eigen::Index bo_dim() const {
        if (kind == ReparamKind::Rembo) return transform.cols();
        return static_cast<Eigen::Index>(std::count(active_dims.begin(), active_dims.end(), true));
    }

    static AffineReparameterization identity(const Eigen::VectorXd& offset, const Eigen::VectorXd& scales) {
        AffineReparameterization r;
        r.kind = ReparamKind::Identity;
        r.offset = offset;
        r.transform = Eigen::MatrixXd::Identity(offset.size(), offset.size());
        r.scales = scales;
        r.active_dims.assign(static_cast<std::size_t>(offset.size()), true);
        return r;
    }
};

inline Eigen::VectorXd to_policy_params(const AffineReparameterization& r, const Eigen::VectorXd& theta_bo) {
    if (theta_bo.size() != r.bo_dim()) throw std::invalid_argument("to_policy_params: BO vector has wrong length");
    switch (r.kind) {
        case ReparamKind::Identity: return r.offset + theta_bo;
        case ReparamKind::Pca: {
            Eigen::VectorXd full = Eigen::VectorXd::Zero(r.policy_dim());
            Eigen::Index k = 0;
            for (std::size_t i = 0; i < r.active_dims.size(); ++i)
                if (r.active_dims[i]) full(static_cast<Eigen::Index>(i)) = theta_bo(k++);
            return r.offset + r.transform.transpose() * full;
        }
        case ReparamKind::Rembo: {
            const Eigen::VectorXd raw = r.offset + r.transform * theta_bo;
            return raw.cwiseMax(r.clip_lower).cwiseMin(r.clip_upper);
        }
    }
    return r.offset;
}

/// Inverse map. Exact for identity and for pca on the active subspace; a
/// least-squares preimage (ignoring clipping) for rembo.
inline Eigen::VectorXd from_policy_params(const AffineReparameterization& r, const Eigen::VectorXd& theta) {
    if (theta.size() != r.policy_dim()) throw std::invalid_argument("from_policy_params: policy vector has wrong length");
    switch (r.kind) {
        case ReparamKind::Identity: return theta - r.offset;
        case ReparamKind::Pca: {
            const Eigen::VectorXd full = r.transform * (theta - r.offset);
            Eigen::VectorXd out(r.bo_dim());
            Eigen::Index k = 0;
            for (std::size_t i = 0; i < r.active_dims.size(); ++i)
                if (r.active_dims[i]) out(k++) = full(static_cast<Eigen::Index>(i));
            return out;
        }
        case ReparamKind::Rembo:
            return r.transform.completeOrthogonalDecomposition().solve(theta - r.offset);
    }
    return theta;
}

/// Rows are sampled parameter vectors (row-major vec(K) for gains).
struct GainSampleSet {
    Eigen::MatrixXd samples;
    int failed = 0;  ///< models for which no gain could be computed

    Eigen::Index count() const { return samples.rows(); }
    Eigen::Index dim() const { return samples.cols(); }

    Eigen::VectorXd mean() const { return samples.colwise().mean().transpose(); }

    /// Maximum-likelihood (divide by n) covariance.
    Eigen::MatrixXd covariance() const {
        const Eigen::MatrixXd centered = samples.rowwise() - samples.colwise().mean();
        return centered.transpose() * centered / static_cast<double>(samples.rows());
    }
};

class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One vec(K) row per model whose LQR gain exists; failures are skipped and counted.
inline GainSampleSet sample_gain_distribution(const std::vector<LinearDynamics>& models, const CostWeights& w) {
    if (models.empty()) throw std::invalid_argument("sample_gain_distribution: no models");
    std::vector<Eigen::VectorXd> rows;
    rows.reserve(models.size());
    int failed = 0;
    for (const auto& m : models) {
        try {
            rows.push_back(vec_row_major(dlqr(m, w)));
        } catch (const RiccatiError&) {
            ++failed;
        }
    }
    if (rows.size() < 2 || static_cast<double>(rows.size()) < 0.1 * static_cast<double>(models.size())) {
        throw DomainError("TooFewSamples: only " + std::to_string(rows.size()) + " of " +
                          std::to_string(models.size()) + " models yield an LQR gain");
    }
    GainSampleSet set;
    set.failed = failed;
    set.samples.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) set.samples.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    return set;
}

struct DomainResult {
    BoxDomain box;
    AffineReparameterization reparam;
};

/// Per-coordinate moment matching; box [mu - beta sigma, mu + beta sigma] in
/// BO coordinates theta_bo = theta - mu. sigma below 1e-8 max(1, |mu|) is floored.
inline DomainResult independence_domain(const GainSampleSet& samples, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    if (samples.count() < 2) throw DomainError("independence_domain needs at least two samples");
    const Eigen::VectorXd mu = samples.mean();
    Eigen::VectorXd sigma = samples.covariance().diagonal().cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        const double floor = 1e-8 * std::max(1.0, std::abs(mu(i)));
        if (sigma(i) < floor) sigma(i) = floor;
    }
    return {BoxDomain(-beta * sigma, beta * sigma), AffineReparameterization::identity(mu, sigma)};
}

/// Same box as independence_domain, expressed in absolute policy coordinates.
inline BoxDomain independence_box_absolute(const DomainResult& indep) {
    return {indep.reparam.offset + indep.box.lower, indep.reparam.offset + indep.box.upper};
}

enum class PcaScale { SqrtEigenvalue, Eigenvalue };

/// Box in the eigenspace of the sample covariance. Scales are sorted
/// descending; directions with scale < truncation * max scale are inactive.
inline DomainResult pca_domain(const GainSampleSet& samples, double beta, double truncation = 1e-6,
                               PcaScale scale_mode = PcaScale::SqrtEigenvalue) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    if (!(truncation >= 0.0 && truncation < 1.0)) throw std::invalid_argument("truncation must be in [0, 1)");
    if (samples.count() < 2) throw DomainError("pca_domain needs at least two samples");

    const Eigen::MatrixXd cov = samples.covariance();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::Index n = cov.rows();

    AffineReparameterization r;
    r.kind = ReparamKind::Pca;
    r.offset = samples.mean();
    r.transform.resize(n, n);
    r.scales.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index src = n - 1 - i;  // eigenvalues come ascending
        r.transform.row(i) = es.eigenvectors().col(src).transpose();
        const double ev = std::max(es.eigenvalues()(src), 0.0);
        r.scales(i) = scale_mode == PcaScale::SqrtEigenvalue ? std::sqrt(ev) : ev;
    }
    const double max_scale = r.scales.maxCoeff();
    r.active_dims.resize(static_cast<std::size_t>(n));
    std::vector<double> half;
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool active = r.scales(i) >= truncation * max_scale;
        r.active_dims[static_cast<std::size_t>(i)] = active;
        if (active) half.push_back(beta * r.scales(i));
    }
    const Eigen::Map<const Eigen::VectorXd> h(half.data(), static_cast<Eigen::Index>(half.size()));
    return {BoxDomain(-h, h), r};
}

/// Random linear embedding of dimension d_e. The i.i.d. standard normal matrix
/// acts on coordinates normalized to the clipping box (half-width per row), so
/// the BO box [-scale, scale]^d_e maps onto the clipping box the same way the
/// canonical [-1, 1]^D formulation does.
inline DomainResult rembo_embedding(Eigen::Index n_theta, Eigen::Index d_e, const Eigen::VectorXd& offset, double scale,
                                    std::uint64_t seed, const Eigen::VectorXd& clip_lower,
                                    const Eigen::VectorXd& clip_upper) {
    if (d_e < 1 || d_e > n_theta) throw std::invalid_argument("rembo_embedding requires 1 <= d_e <= n_theta");
    if (offset.size() != n_theta || clip_lower.size() != n_theta || clip_upper.size() != n_theta) {
        throw std::invalid_argument("rembo_embedding: size mismatch");
    }
    if (!(scale > 0.0)) throw std::invalid_argument("rembo scale must be positive");
    Rng rng(seed);
    Eigen::MatrixXd E(n_theta, d_e);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index c = 0; c < d_e; ++c)
        for (Eigen::Index r = 0; r < n_theta; ++r) E(r, c) = normal(rng);
    const Eigen::VectorXd half = 0.5 * (clip_upper - clip_lower);

    AffineReparameterization r;
    r.kind = ReparamKind::Rembo;
    r.offset = offset;
    r.transform = half.asDiagonal() * E;
    r.scales = Eigen::VectorXd::Constant(d_e, scale);
    r.active_dims.assign(static_cast<std::size_t>(d_e), true);
    r.clip_lower = clip_lower;
    r.clip_upper = clip_upper;
    return {BoxDomain(Eigen::VectorXd::Constant(d_e, -scale), Eigen::VectorXd::Constant(d_e, scale)), r};
}

/// REMBO with an explicit embedding matrix (no normalization applied).
inline DomainResult rembo_from_matrix(const Eigen::MatrixXd& embedding, const Eigen::VectorXd& offset, double scale,
                                      const Eigen::VectorXd& clip_lower, const Eigen::VectorXd& clip_upper) {
    AffineReparameterization r;
    r.kind = ReparamKind::Rembo;
    r.offset = offset;
    r.transform = embedding;
    r.scales = Eigen::VectorXd::Constant(embedding.cols(), scale);
    r.active_dims.assign(static_cast<std::size_t>(embedding.cols()), true);
    r.clip_lower = clip_lower;
    r.clip_upper = clip_upper;
    const auto d = embedding.cols();
    return {BoxDomain(Eigen::VectorXd::Constant(d, -scale), Eigen::VectorXd::Constant(d, scale)), r};
}

/// Manual box in absolute policy coordinates (offset zero).
inline DomainResult manual_domain(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    BoxDomain box(lower, upper);
    return {box, AffineReparameterization::identity(Eigen::VectorXd::Zero(lower.size()), 0.5 * box.extent())};
}

/// Widens a box about its center by `factor` per dimension.
inline BoxDomain widen(const BoxDomain& box, double factor) {
    const Eigen::VectorXd c = box.center();
    const Eigen::VectorXd h = 0.5 * factor * box.extent();
    return {c - h, c + h};
}

}  // namespace lqrbo
