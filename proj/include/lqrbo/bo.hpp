#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "lqrbo/adaptation.hpp"
#include "lqrbo/domain.hpp"
#include "lqrbo/gp.hpp"
#include "lqrbo/random.hpp"

namespace lqrbo {

/// UCB for cost minimization: alpha = -mean + kappa * sd.
struct AcquisitionConfig {
    double kappa = 2.0;
    int multistarts = 32;
    int local_steps = 100;
};

inline double acquisition_value(const GpPosterior& gp, const Eigen::VectorXd& x, const AcquisitionConfig& config) {
    const auto p = gp.predict(x);
    return -p.mean + config.kappa * std::sqrt(p.variance);
}

namespace detail {

struct ValueAndGradient {
    double value;
    Eigen::VectorXd gradient;
};

/// Projected ascent along the normalized gradient with an adaptive step,
/// run from every start. Returns the best end point; ties keep the earliest start.
template <typename F>
Eigen::VectorXd multistart_ascent(F&& f, const BoxDomain& box, const std::vector<Eigen::VectorXd>& starts, int steps) {
    const Eigen::VectorXd extent = box.extent();
    Eigen::VectorXd best = box.center();
    double best_value = -std::numeric_limits<double>::infinity();
    for (const auto& start : starts) {
        Eigen::VectorXd x = box.clamp(start);
        ValueAndGradient cur = f(x);
        double step = 0.1;  // fraction of the box extent
        for (int s = 0; s < steps && step > 1e-10; ++s) {
            const Eigen::VectorXd g = cur.gradient.cwiseProduct(extent);
            const double norm = g.norm();
            if (!(norm > 0.0) || !std::isfinite(norm)) break;
            const Eigen::VectorXd trial = box.clamp(x + (step / norm) * g.cwiseProduct(extent));
            if ((trial - x).cwiseAbs().maxCoeff() == 0.0) break;
            ValueAndGradient next = f(trial);
            if (next.value > cur.value) {
                x = trial;
                cur = std::move(next);
                step = std::min(step * 2.0, 0.5);
            } else {
                step *= 0.5;
            }
        }
        if (cur.value > best_value) {
            best_value = cur.value;
            best = x;
        }
    }
    return best;
}

inline std::vector<Eigen::VectorXd> make_starts(const BoxDomain& box, int multistarts, std::uint64_t seed,
                                                const std::vector<Eigen::VectorXd>& extra) {
    Rng rng(seed);
    std::vector<Eigen::VectorXd> starts;
    for (int i = 0; i < multistarts; ++i) starts.push_back(uniform_in(rng, box.lower, box.upper));
    for (const auto& e : extra) starts.push_back(box.clamp(e));
    starts.push_back(box.center());
    return starts;
}

}  // namespace detail

/// Multistart projected-gradient maximization of UCB over `box`.
/// Starts: `multistarts` uniform draws, then `extra_starts`, then the box center.
inline Eigen::VectorXd maximize_acquisition(const GpPosterior& gp, const BoxDomain& box, const AcquisitionConfig& config,
                                            std::uint64_t seed, const std::vector<Eigen::VectorXd>& extra_starts = {}) {
    const double kappa = config.kappa;
    auto f = [&](const Eigen::VectorXd& x) {
        const auto p = gp.predict_with_gradient(x);
        const double sd = std::sqrt(p.variance);
        detail::ValueAndGradient vg{-p.mean + kappa * sd, -p.mean_gradient};
        if (kappa > 0.0 && sd > 1e-12) vg.gradient += kappa * p.variance_gradient / (2.0 * sd);
        return vg;
    };
    return detail::multistart_ascent(f, box, detail::make_starts(box, config.multistarts, seed, extra_starts),
                                     config.local_steps);
}

/// Minimizer of the posterior mean over `box`, same search budget as the acquisition.
inline Eigen::VectorXd estimated_optimum(const GpPosterior& gp, const BoxDomain& box, const AcquisitionConfig& config,
                                         std::uint64_t seed, const std::vector<Eigen::VectorXd>& extra_starts = {}) {
    auto f = [&](const Eigen::VectorXd& x) {
        const auto p = gp.predict_with_gradient(x);
        return detail::ValueAndGradient{-p.mean, -p.mean_gradient};
    };
    return detail::multistart_ascent(f, box, detail::make_starts(box, config.multistarts, seed, extra_starts),
                                     config.local_steps);
}

struct BoSettings {
    AcquisitionConfig acquisition;
    int gp_restarts = 5;
    double cost_epsilon = 1e-12;
    HyperparamFitOptions fit;
};

struct Observation {
    Eigen::VectorXd theta_tilde;  ///< raw BO coordinates
    Eigen::VectorXd theta;        ///< policy parameters
    double cost = 0.0;
    bool failed = false;
};

/// One line of the optimization history.
struct HistoryRecord {
    int iter = 0;  ///< 0 for the initial design
    Eigen::VectorXd theta_tilde;
    Eigen::VectorXd theta;
    double cost = 0.0;
    double incumbent_cost = 0.0;
    Eigen::VectorXd domain_lower;
    Eigen::VectorXd domain_upper;
};

/// Returns nullopt (or a non-finite value) when the policy cannot be evaluated.
using Objective = std::function<std::optional<double>(const Eigen::VectorXd& theta)>;

struct BoState {
    BoxDomain domain;
    Eigen::VectorXd initial_extent;
    AffineReparameterization reparam;
    BoSettings settings;
    std::vector<Observation> observations;
    std::vector<HistoryRecord> history;
    std::shared_ptr<const GpPosterior> gp;  ///< trained on inputs normalized to `domain`
    std::optional<KernelHyperparams> hyperparams;
    std::size_t incumbent = 0;
    int iteration = 0;
    std::uint64_t seed = 0;
    std::optional<double> failure_cost;

    double incumbent_cost() const {
        return observations.empty() ? std::numeric_limits<double>::infinity() : observations[incumbent].cost;
    }
    const Eigen::VectorXd& incumbent_theta_tilde() const { return observations.at(incumbent).theta_tilde; }
    const Eigen::VectorXd& incumbent_theta() const { return observations.at(incumbent).theta; }
};

namespace detail {

enum SeedStream : std::uint64_t { kFit = 0, kAcquisition = 1, kOptimum = 2, kFallback = 3 };

inline std::uint64_t stream_seed(const BoState& s, SeedStream stream) {
    return split_seed(split_seed(s.seed, static_cast<std::uint64_t>(s.iteration)), stream);
}

inline GpDataset build_dataset(const BoState& s) {
    const auto n = static_cast<Eigen::Index>(s.observations.size());
    GpDataset data;
    data.inputs.resize(n, s.domain.dim());
    data.targets.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = s.observations[static_cast<std::size_t>(i)];
        data.inputs.row(i) = s.domain.normalize(o.theta_tilde).transpose();
        data.targets(i) = std::log(o.cost + s.settings.cost_epsilon);
    }
    if (n > 0) {
        const double mean = data.targets.mean();
        double sd = std::sqrt((data.targets.array() - mean).square().mean());
        if (!(sd > 1e-12)) sd = 1.0;
        data.targets = (data.targets.array() - mean) / sd;
    }
    return merge_duplicates(data);
}

inline double penalty_for(const BoState& s) {
    if (s.failure_cost) return *s.failure_cost;
    double worst = 0.0;
    bool any = false;
    for (const auto& o : s.observations) {
        if (!o.failed) {
            worst = any ? std::max(worst, o.cost) : o.cost;
            any = true;
        }
    }
    return any ? worst : 1.0;
}

inline void record(BoState& s, const Eigen::VectorXd& theta_tilde, const Objective& objective) {
    Observation o;
    o.theta_tilde = theta_tilde;
    o.theta = to_policy_params(s.reparam, theta_tilde);
    const auto cost = objective(o.theta);
    if (!cost || !std::isfinite(*cost) || *cost < 0.0) {
        o.failed = true;
        o.cost = penalty_for(s);
    } else {
        o.cost = *cost;
    }
    s.observations.push_back(o);
    const std::size_t idx = s.observations.size() - 1;
    if (idx == 0 || o.cost < s.observations[s.incumbent].cost) s.incumbent = idx;
    s.history.push_back({s.iteration, o.theta_tilde, o.theta, o.cost, s.incumbent_cost(), s.domain.lower, s.domain.upper});
}

}  // namespace detail

/// Refits hyperparameters and rebuilds the posterior against the current box.
inline void refresh_gp(BoState& s) {
    GpDataset data = detail::build_dataset(s);
    if (data.size() == 0) {
        s.gp = std::make_shared<GpPosterior>(
            data, KernelHyperparams{1.0, Eigen::VectorXd::Constant(s.domain.dim(), 0.3), 1e-6});
        return;
    }
    const auto hp = fit_hyperparameters(data, s.settings.gp_restarts, detail::stream_seed(s, detail::kFit),
                                        s.hyperparams, s.settings.fit);
    s.hyperparams = hp;
    s.gp = std::make_shared<GpPosterior>(std::move(data), hp);
}

/// Evaluates the initial design (points in raw BO coordinates, clamped into the box).
inline BoState make_bo_state(const BoxDomain& domain, const AffineReparameterization& reparam, const BoSettings& settings,
                             std::uint64_t seed, const Objective& objective,
                             const std::vector<Eigen::VectorXd>& initial_points,
                             std::optional<double> failure_cost = std::nullopt) {
    if (domain.dim() != reparam.bo_dim()) throw std::invalid_argument("make_bo_state: box and reparameterization disagree");
    BoState s;
    s.domain = domain;
    s.initial_extent = domain.extent();
    s.reparam = reparam;
    s.settings = settings;
    s.seed = seed;
    s.failure_cost = failure_cost;
    for (const auto& p : initial_points) detail::record(s, domain.clamp(p), objective);
    refresh_gp(s);
    return s;
}

/// One proposal, evaluation and refit.
inline BoState bo_step(BoState s, const Objective& objective) {
    s.iteration += 1;
    const BoxDomain unit = BoxDomain::unit(s.domain.dim());
    std::vector<Eigen::VectorXd> extra;
    if (!s.observations.empty()) extra.push_back(s.domain.normalize(s.incumbent_theta_tilde()));
    Eigen::VectorXd u = maximize_acquisition(*s.gp, unit, s.settings.acquisition,
                                             detail::stream_seed(s, detail::kAcquisition), extra);
    // never re-propose an evaluated point
    for (const auto& o : s.observations) {
        if ((s.domain.normalize(o.theta_tilde) - u).cwiseAbs().maxCoeff() < 1e-9) {
            Rng rng(detail::stream_seed(s, detail::kFallback));
            u = uniform_in(rng, unit.lower, unit.upper);
            break;
        }
    }
    detail::record(s, s.domain.clamp(s.domain.denormalize(u)), objective);
    refresh_gp(s);
    return s;
}

using AdaptationStrategy = std::variant<std::monostate, DdaConfig, VdConfig>;

/// Minimizer of the posterior mean in raw BO coordinates.
inline Eigen::VectorXd estimated_optimum_raw(const BoState& s) {
    const BoxDomain unit = BoxDomain::unit(s.domain.dim());
    std::vector<Eigen::VectorXd> extra;
    if (!s.observations.empty()) extra.push_back(s.domain.normalize(s.incumbent_theta_tilde()));
    const Eigen::VectorXd u =
        estimated_optimum(*s.gp, unit, s.settings.acquisition, detail::stream_seed(s, detail::kOptimum), extra);
    return s.domain.clamp(s.domain.denormalize(u));
}

/// Applies the adaptation strategy after a step; returns true when the box changed.
inline bool adapt_domain(BoState& s, const AdaptationStrategy& adaptation) {
    BoxDomain next = s.domain;
    if (const auto* dda = std::get_if<DdaConfig>(&adaptation)) {
        if (s.observations.size() < 3) return false;
        next = dda_step(s.domain, *s.gp, estimated_optimum_raw(s), *dda, s.initial_extent);
    } else if (const auto* vd = std::get_if<VdConfig>(&adaptation)) {
        next = vd_step(s.domain, s.iteration, *vd);
    }
    if (next == s.domain) return false;
    s.domain = next;
    refresh_gp(s);
    return true;
}

/// `budget` BO steps, adapting the domain after each one.
inline BoState run_bo(BoState s, const Objective& objective, int budget, const AdaptationStrategy& adaptation = {}) {
    if (budget < 0) throw std::invalid_argument("run_bo: negative budget");
    for (int b = 0; b < budget; ++b) {
        s = bo_step(std::move(s), objective);
        adapt_domain(s, adaptation);
    }
    return s;
}

}  // namespace lqrbo
