#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "lqrbo/lqrbo.hpp"

namespace lqrbo::testing {

/// Fixed-seed case generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

    Eigen::VectorXd vector(Eigen::Index n, double lo, double hi) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
        return v;
    }
    Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd m(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal();
        return m;
    }
    Eigen::MatrixXd spd(Eigen::Index n, double floor = 0.1) {
        const Eigen::MatrixXd M = gaussian(n, n);
        return M * M.transpose() + floor * Eigen::MatrixXd::Identity(n, n);
    }

    /// Random (A, B) with a full-rank controllability matrix.
    LinearDynamics controllable_system(int nx, int nu, double spread = 1.2) {
        for (;;) {
            LinearDynamics d{gaussian(nx, nx) * (spread / std::sqrt(static_cast<double>(nx))), gaussian(nx, nu)};
            Eigen::MatrixXd ctrb(nx, nx * nu);
            Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(nx, nx);
            for (int k = 0; k < nx; ++k) {
                ctrb.middleCols(k * nu, nu) = Ak * d.B;
                Ak = Ak * d.A;
            }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(ctrb);
            if (svd.singularValues().minCoeff() > 1e-3 * svd.singularValues().maxCoeff()) return d;
        }
    }

    /// Gain samples: n draws of a correlated Gaussian in `dim` dimensions.
    GainSampleSet gain_samples(int n, int dim) {
        const Eigen::MatrixXd L = gaussian(dim, dim);
        const Eigen::VectorXd mu = vector(dim, -3.0, 3.0);
        GainSampleSet s;
        s.samples.resize(n, dim);
        for (int i = 0; i < n; ++i) s.samples.row(i) = (mu + L * gaussian(dim, 1)).transpose();
        return s;
    }

    Rng& rng() { return rng_; }

private:
    Rng rng_;
};

/// Value iteration written in Joseph form, independent of solve_dare's update:
/// P <- Q + K'RK + (A - BK)' P (A - BK), K the greedy gain for the current P.
inline Eigen::MatrixXd value_iteration_dare(const LinearDynamics& d, const CostWeights& w, int iterations = 200000,
                                            double tol = 1e-13) {
    Eigen::MatrixXd P = w.Q;
    for (int k = 0; k < iterations; ++k) {
        const Eigen::MatrixXd K = (w.R + d.B.transpose() * P * d.B).inverse() * d.B.transpose() * P * d.A;
        const Eigen::MatrixXd Acl = d.A - d.B * K;
        Eigen::MatrixXd next = w.Q + K.transpose() * w.R * K + Acl.transpose() * P * Acl;
        next = 0.5 * (next + next.transpose()).eval();
        const double change = (next - P).cwiseAbs().maxCoeff();
        P = next;
        if (change < tol * std::max(1.0, P.cwiseAbs().maxCoeff())) break;
    }
    return P;
}

inline GpDataset random_dataset(Gen& g, int n, int d) {
    GpDataset data;
    data.inputs.resize(n, d);
    for (int i = 0; i < n; ++i) data.inputs.row(i) = g.vector(d, 0.0, 1.0).transpose();
    data.targets.resize(n);
    for (int i = 0; i < n; ++i) data.targets(i) = std::sin(3.0 * data.inputs.row(i).sum()) + 0.1 * g.normal();
    return data;
}

inline KernelHyperparams random_hyperparams(Gen& g, int d) {
    return {g.uniform(0.3, 3.0), g.vector(d, 0.1, 1.0), g.uniform(1e-4, 1e-2)};
}

}  // namespace lqrbo::testing
