#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lqrbo/domain.hpp"
#include "lqrbo/gp.hpp"

namespace lqrbo {

struct DdaConfig {
    double gamma = 0.3;
    double boundary_tol = 0.01;       ///< fraction of the per-dimension extent
    double min_step_fraction = 0.05;  ///< lower bound on a step, fraction of the extent
    double max_total_growth = 20.0;   ///< cap on extent relative to the initial extent

    void validate() const {
        if (!(gamma > 0.0)) throw std::invalid_argument("DDA gamma must be positive");
        if (!(boundary_tol > 0.0 && boundary_tol < 0.5)) throw std::invalid_argument("DDA boundary_tol must be in (0, 0.5)");
        if (!(min_step_fraction >= 0.0)) throw std::invalid_argument("DDA min_step_fraction must be >= 0");
        if (!(max_total_growth >= 1.0)) throw std::invalid_argument("DDA max_total_growth must be >= 1");
    }
};

struct VdConfig {
    double factor = 2.0;
    int period = 3;

    void validate() const {
        if (!(factor > 1.0)) throw std::invalid_argument("VD factor must exceed 1");
        if (period < 1) throw std::invalid_argument("VD period must be >= 1");
    }
};

enum class BoundarySide { Lower, Upper };

struct BoundaryHit {
    Eigen::Index dim;
    BoundarySide side;

    bool operator==(const BoundaryHit&) const = default;
};

/// Dimensions in which `point` lies within tol * extent of a face. Zero-extent
/// dimensions are never reported.
inline std::vector<BoundaryHit> detect_boundary(const Eigen::VectorXd& point, const BoxDomain& box, double tol) {
    if (point.size() != box.dim()) throw std::invalid_argument("detect_boundary: dimension mismatch");
    std::vector<BoundaryHit> hits;
    for (Eigen::Index i = 0; i < box.dim(); ++i) {
        const double extent = box.upper(i) - box.lower(i);
        if (!(extent > 0.0)) continue;
        if (point(i) - box.lower(i) <= tol * extent) hits.push_back({i, BoundarySide::Lower});
        if (box.upper(i) - point(i) <= tol * extent) hits.push_back({i, BoundarySide::Upper});
    }
    return hits;
}

/// Grows the faces the estimated optimum touches. The GP lives in coordinates
/// normalized to `box`, so gradient, lengthscale and extent are all unitless
/// there: step = gamma * |dmu/du_i| * lengthscale_i (in units of the extent),
/// floored at min_step_fraction, then rescaled by the raw extent.
/// `optimum` is in raw coordinates; `initial_extent` bounds cumulative growth.
inline BoxDomain dda_step(const BoxDomain& box, const GpPosterior& gp, const Eigen::VectorXd& optimum,
                          const DdaConfig& config, const Eigen::VectorXd& initial_extent) {
    config.validate();
    if (gp.dim() != box.dim() || initial_extent.size() != box.dim()) throw std::invalid_argument("dda_step: dimension mismatch");
    const auto hits = detect_boundary(optimum, box, config.boundary_tol);
    if (hits.empty()) return box;

    const Eigen::VectorXd u = box.normalize(optimum);
    const Eigen::VectorXd grad = gp.mean_gradient(u);
    const Eigen::VectorXd& ls = gp.hyperparams().lengthscales;

    BoxDomain out = box;
    for (const auto& h : hits) {
        const Eigen::Index i = h.dim;
        const double extent = box.upper(i) - box.lower(i);
        double step = std::max(config.gamma * std::abs(grad(i)) * ls(i), config.min_step_fraction) * extent;
        const double room = config.max_total_growth * initial_extent(i) - (out.upper(i) - out.lower(i));
        step = std::clamp(step, 0.0, std::max(room, 0.0));
        if (h.side == BoundarySide::Upper) out.upper(i) += step;
        else out.lower(i) -= step;
    }
    return out;
}

/// Every `period` iterations the volume is multiplied by `factor`,
/// isotropically about the center.
inline BoxDomain vd_step(const BoxDomain& box, int iteration, const VdConfig& config) {
    config.validate();
    if (iteration < 1) throw std::invalid_argument("vd_step: iteration must be >= 1");
    if (iteration % config.period != 0) return box;
    const double per_dim = std::pow(config.factor, 1.0 / static_cast<double>(box.dim()));
    return widen(box, per_dim);
}

}  // namespace lqrbo
