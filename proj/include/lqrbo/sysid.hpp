#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lqrbo/linear_control.hpp"
#include "lqrbo/plants.hpp"
#include "lqrbo/random.hpp"

namespace lqrbo {

/// One uninterrupted recording: states[t], inputs[t] for t = 0..T. The input
/// on the last row is not applied and carries no information.
struct Episode {
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> inputs;

    std::size_t transitions() const { return states.empty() ? 0 : states.size() - 1; }
};

struct TrajectoryData {
    int n_x = 0;
    int n_u = 0;
    double dt = 0.0;
    std::vector<Episode> episodes;

    std::size_t transition_count() const {
        std::size_t n = 0;
        for (const auto& e : episodes) n += e.transitions();
        return n;
    }

    /// Regressors z_t = [x_t; u_t] as rows and targets x_{t+1} as rows.
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> regression_matrices() const {
        const auto n = static_cast<Eigen::Index>(transition_count());
        Eigen::MatrixXd Z(n, n_x + n_u), Y(n, n_x);
        Eigen::Index row = 0;
        for (const auto& e : episodes) {
            for (std::size_t t = 0; t + 1 < e.states.size(); ++t, ++row) {
                Z.row(row).head(n_x) = e.states[t].transpose();
                Z.row(row).tail(n_u) = e.inputs[t].transpose();
                Y.row(row) = e.states[t + 1].transpose();
            }
        }
        return {Z, Y};
    }
};

class SysIdError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Optional closed-loop pilot used while exciting the plant: returns a nominal
/// input for state x at time t (seconds). Random excitation is added on top.
using ExcitationPilot = std::function<Eigen::VectorXd(const Eigen::VectorXd& x, double t)>;

struct ExcitationProtocol {
    double duration_s = 5.0;
    int repetitions = 1;
    double dt = 0.01;
    Eigen::VectorXd x0;                ///< empty means the origin
    Eigen::VectorXd x0_spread;         ///< each repetition starts uniformly in x0 +- spread; empty means exactly x0
    double input_fraction = 1.0;       ///< excitation uniform in this fraction of the actuator range
    std::optional<int> stop_state;     ///< stop a repetition once |x[stop_state]| exceeds stop_threshold
    double stop_threshold = 0.0;
    Eigen::VectorXd noise_cov;         ///< per-step process noise (diagonal), empty means none
    ExcitationPilot pilot;
};

/// Runs the protocol; deterministic given the seed.
inline TrajectoryData collect_excitation_data(const PlantModel& plant, const ExcitationProtocol& protocol,
                                              std::uint64_t seed) {
    TrajectoryData data;
    data.n_x = plant.state_dim();
    data.n_u = plant.input_dim();
    data.dt = protocol.dt;

    const Eigen::VectorXd lo = plant.input_lower(), hi = plant.input_upper();
    const Eigen::VectorXd mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo) * protocol.input_fraction;
    const int steps = static_cast<int>(std::lround(protocol.duration_s / protocol.dt));
    const Eigen::VectorXd noise_std = protocol.noise_cov.size() == 0 ? Eigen::VectorXd::Zero(data.n_x)
                                                                     : Eigen::VectorXd(protocol.noise_cov.cwiseSqrt());

    auto stopped = [&](const Eigen::VectorXd& x) {
        return protocol.stop_state && std::abs(x(*protocol.stop_state)) > protocol.stop_threshold;
    };

    for (int rep = 0; rep < protocol.repetitions; ++rep) {
        Rng rng(split_seed(seed, static_cast<std::uint64_t>(rep)));
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        Episode ep;
        Eigen::VectorXd x = protocol.x0.size() == 0 ? Eigen::VectorXd::Zero(data.n_x) : protocol.x0;
        if (protocol.x0_spread.size() == data.n_x) x += protocol.x0_spread.cwiseProduct(uniform_in(rng, -Eigen::VectorXd::Ones(data.n_x), Eigen::VectorXd::Ones(data.n_x)));
        if (stopped(x) || plant.diverged(x)) continue;
        for (int t = 0; t < steps; ++t) {
            Eigen::VectorXd u(data.n_u);
            for (int i = 0; i < data.n_u; ++i) u(i) = mid(i) + half(i) * unit(rng);
            if (protocol.pilot) u += protocol.pilot(x, t * protocol.dt);
            u = plant.clip_input(u);
            Eigen::VectorXd next = plant.step(x, u, protocol.dt) + noise_std.cwiseProduct(standard_normal(rng, data.n_x));
            if (plant.diverged(next)) break;
            ep.states.push_back(x);
            ep.inputs.push_back(u);
            x = std::move(next);
            if (stopped(x)) break;
        }
        if (ep.states.empty()) continue;
        ep.states.push_back(x);
        ep.inputs.push_back(Eigen::VectorXd::Zero(data.n_u));
        data.episodes.push_back(std::move(ep));
    }
    if (data.transition_count() == 0) throw SysIdError("EmptyData: excitation produced no transitions");
    return data;
}

/// Gaussian over vec([A B]) in row-major order: entries [j*(n_x+n_u), (j+1)*(n_x+n_u))
/// hold row j of [A B]. The covariance is block diagonal across rows.
struct ModelPosterior {
    int n_x = 0;
    int n_u = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    Eigen::VectorXd noise_variance;  ///< per output dimension
    bool rank_deficient = false;     ///< regressor Gram condition number above 1e12

    LinearDynamics map_model() const { return model_from_stacked(mean); }

    LinearDynamics model_from_stacked(const Eigen::Ref<const Eigen::VectorXd>& v) const {
        const Eigen::MatrixXd AB = unvec_row_major(v, n_x, n_x + n_u);
        return {AB.leftCols(n_x), AB.rightCols(n_u)};
    }
};

struct NoiseVarianceMode {
    /// empty: estimate per dimension from ridge residuals
    Eigen::VectorXd fixed;

    static NoiseVarianceMode estimate() { return {}; }
    bool estimating() const { return fixed.size() == 0; }
};

/// Bayesian linear regression of x_{t+1} on [x_t; u_t], one independent
/// regression per output row with prior N(0, prior_precision^{-1} I).
/// Fewer than n_x + n_u transitions is rejected unless `allow_underdetermined`,
/// in which case the posterior falls back toward the prior.
inline ModelPosterior fit_bayesian_linear_model(const TrajectoryData& data, double prior_precision = 1e-6,
                                                const NoiseVarianceMode& noise = NoiseVarianceMode::estimate(),
                                                bool allow_underdetermined = false) {
    if (!(prior_precision > 0.0)) throw std::invalid_argument("prior_precision must be positive");
    const int nx = data.n_x, nu = data.n_u, nz = nx + nu;
    if (!allow_underdetermined && data.transition_count() < static_cast<std::size_t>(nz)) {
        throw SysIdError("at least n_x + n_u transitions are required to fit a model");
    }
    if (!noise.estimating() && noise.fixed.size() != nx) throw std::invalid_argument("noise variance size mismatch");

    ModelPosterior post;
    post.n_x = nx;
    post.n_u = nu;
    post.mean = Eigen::VectorXd::Zero(nx * nz);
    post.covariance = Eigen::MatrixXd::Zero(nx * nz, nx * nz);
    post.noise_variance = Eigen::VectorXd::Ones(nx);

    const auto [Z, Y] = data.regression_matrices();
    const auto n = Z.rows();
    const Eigen::MatrixXd gram = Z.transpose() * Z;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(nz, nz);

    if (n > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
        post.rank_deficient = !(lo > 0.0) || hi / lo > 1e12;
    }

    const Eigen::LDLT<Eigen::MatrixXd> ridge(gram + prior_precision * eye);
    for (int j = 0; j < nx; ++j) {
        const Eigen::VectorXd y = Y.col(j);
        double s2 = 1.0;
        if (!noise.estimating()) {
            s2 = noise.fixed(j);
        } else if (n > 0) {
            const Eigen::VectorXd w = ridge.solve(Z.transpose() * y);
            s2 = std::max((y - Z * w).squaredNorm() / static_cast<double>(n), 1e-12);
        }
        post.noise_variance(j) = s2;
        // precision = alpha I + Z'Z / s2, so covariance = s2 (Z'Z + alpha s2 I)^{-1}
        const Eigen::LDLT<Eigen::MatrixXd> sys(gram + prior_precision * s2 * eye);
        post.mean.segment(j * nz, nz) = sys.solve(Z.transpose() * y);
        Eigen::MatrixXd cov = s2 * sys.solve(eye);
        post.covariance.block(j * nz, j * nz, nz, nz) = 0.5 * (cov + cov.transpose());
    }
    return post;
}

/// n_s independent draws from N(mean, covariance), deterministic given seed.
inline std::vector<LinearDynamics> sample_models(const ModelPosterior& post, int n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("n_samples must be positive");
    const auto dim = post.mean.size();
    Eigen::MatrixXd sym = 0.5 * (post.covariance + post.covariance.transpose());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sym);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < -1e-12).any()) {
        sym.diagonal().array() += 1e-10;
        ldlt.compute(sym);
    }
    // covariance = P' L D L' P  =>  factor = P' L sqrt(D)
    const Eigen::VectorXd sqrt_d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd L = ldlt.matrixL();
    Eigen::MatrixXd factor = L * sqrt_d.asDiagonal();
    factor = ldlt.transpositionsP().transpose() * factor;

    Rng rng(seed);
    std::vector<LinearDynamics> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        const Eigen::VectorXd draw = post.mean + factor * standard_normal(rng, dim);
        out.push_back(post.model_from_stacked(draw));
    }
    return out;
}

}  // namespace lqrbo
