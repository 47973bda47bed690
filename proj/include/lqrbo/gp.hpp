#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lqrbo/random.hpp"

namespace lqrbo {

/// Squared-exponential ARD kernel parameters.
struct KernelHyperparams {
    double signal_variance = 1.0;
    Eigen::VectorXd lengthscales;
    double noise_variance = 1e-6;

    Eigen::Index dim() const { return lengthscales.size(); }

    /// [log sf2, log l_1 .. log l_d, log sn2]
    Eigen::VectorXd to_log() const {
        Eigen::VectorXd p(dim() + 2);
        p(0) = std::log(signal_variance);
        p.segment(1, dim()) = lengthscales.array().log().matrix();
        p(dim() + 1) = std::log(noise_variance);
        return p;
    }
    static KernelHyperparams from_log(const Eigen::VectorXd& p) {
        const auto d = p.size() - 2;
        return {std::exp(p(0)), p.segment(1, d).array().exp().matrix(), std::exp(p(d + 1))};
    }
};

struct HyperparamBounds {
    double lengthscale_min = 1e-3, lengthscale_max = 10.0;
    double signal_min = 1e-6, signal_max = 1e3;
    double noise_min = 1e-8, noise_max = 1.0;

    std::pair<Eigen::VectorXd, Eigen::VectorXd> log_bounds(Eigen::Index d) const {
        Eigen::VectorXd lo(d + 2), hi(d + 2);
        lo(0) = std::log(signal_min);
        hi(0) = std::log(signal_max);
        lo.segment(1, d).setConstant(std::log(lengthscale_min));
        hi.segment(1, d).setConstant(std::log(lengthscale_max));
        lo(d + 1) = std::log(noise_min);
        hi(d + 1) = std::log(noise_max);
        return {lo, hi};
    }
};

/// Rows of `inputs` are points.
struct GpDataset {
    Eigen::MatrixXd inputs;
    Eigen::VectorXd targets;

    Eigen::Index size() const { return inputs.rows(); }
    Eigen::Index dim() const { return inputs.cols(); }
};

/// Rows closer than `tol` (max-norm) to an earlier row are merged, averaging targets.
inline GpDataset merge_duplicates(const GpDataset& data, double tol = 1e-12) {
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> sums;
    std::vector<int> counts;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const Eigen::VectorXd x = data.inputs.row(i).transpose();
        bool merged = false;
        for (std::size_t j = 0; j < xs.size(); ++j) {
            if ((xs[j] - x).cwiseAbs().maxCoeff() <= tol) {
                sums[j] += data.targets(i);
                ++counts[j];
                merged = true;
                break;
            }
        }
        if (!merged) {
            xs.push_back(x);
            sums.push_back(data.targets(i));
            counts.push_back(1);
        }
    }
    GpDataset out;
    out.inputs.resize(static_cast<Eigen::Index>(xs.size()), data.dim());
    out.targets.resize(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t j = 0; j < xs.size(); ++j) {
        out.inputs.row(static_cast<Eigen::Index>(j)) = xs[j].transpose();
        out.targets(static_cast<Eigen::Index>(j)) = sums[j] / counts[j];
    }
    return out;
}

class CholeskyFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline Eigen::MatrixXd se_ard_gram(const Eigen::MatrixXd& X, const KernelHyperparams& hp) {
    const Eigen::MatrixXd S = X * hp.lengthscales.cwiseInverse().asDiagonal();
    const Eigen::VectorXd sq = S.rowwise().squaredNorm();
    Eigen::MatrixXd D = (-2.0 * S * S.transpose()).colwise() + sq;
    D.rowwise() += sq.transpose();
    return hp.signal_variance * (-0.5 * D.array().max(0.0)).exp().matrix();
}

inline Eigen::VectorXd se_ard_cross(const Eigen::MatrixXd& X, const Eigen::VectorXd& x, const KernelHyperparams& hp) {
    const Eigen::VectorXd inv_l = hp.lengthscales.cwiseInverse();
    Eigen::VectorXd k(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double r2 = (X.row(i).transpose() - x).cwiseProduct(inv_l).squaredNorm();
        k(i) = hp.signal_variance * std::exp(-0.5 * r2);
    }
    return k;
}

struct Factorization {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
};

/// Cholesky of K, escalating diagonal jitter from 1e-10 up to 1e-4.
inline Factorization factorize(const Eigen::MatrixXd& K) {
    Factorization f;
    f.llt.compute(K);
    if (f.llt.info() == Eigen::Success) return f;
    for (double jitter = 1e-10; jitter <= 1e-4 * 1.0001; jitter *= 10.0) {
        Eigen::MatrixXd Kj = K;
        Kj.diagonal().array() += jitter;
        f.llt.compute(Kj);
        if (f.llt.info() == Eigen::Success) {
            f.jitter = jitter;
            return f;
        }
    }
    throw CholeskyFailure("kernel matrix is not positive definite even with jitter 1e-4");
}

}  // namespace detail

struct GpPrediction {
    double mean = 0.0;
    double variance = 0.0;
};

/// Mean, variance and their input gradients at one point.
struct GpPredictionWithGradient {
    double mean = 0.0;
    double variance = 0.0;
    Eigen::VectorXd mean_gradient;
    Eigen::VectorXd variance_gradient;
};

/// Zero-mean GP posterior with SE-ARD kernel. Immutable after construction.
class GpPosterior {
public:
    GpPosterior(GpDataset data, KernelHyperparams hp) : data_(std::move(data)), hp_(std::move(hp)) {
        if (hp_.lengthscales.size() != data_.dim()) throw std::invalid_argument("GpPosterior: lengthscale count mismatch");
        if (data_.size() == 0) return;
        Eigen::MatrixXd K = detail::se_ard_gram(data_.inputs, hp_);
        K.diagonal().array() += hp_.noise_variance;
        auto f = detail::factorize(K);
        jitter_ = f.jitter;
        L_ = f.llt.matrixL();
        alpha_ = f.llt.solve(data_.targets);
    }

    const GpDataset& dataset() const { return data_; }
    const KernelHyperparams& hyperparams() const { return hp_; }
    Eigen::Index dim() const { return data_.dim(); }
    double jitter() const { return jitter_; }
    const Eigen::MatrixXd& cholesky_factor() const { return L_; }
    const Eigen::VectorXd& weights() const { return alpha_; }

    GpPrediction predict(const Eigen::VectorXd& x) const {
        check(x);
        if (data_.size() == 0) return {0.0, hp_.signal_variance};
        const Eigen::VectorXd k = detail::se_ard_cross(data_.inputs, x, hp_);
        const Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(k);
        return {k.dot(alpha_), std::max(0.0, hp_.signal_variance - v.squaredNorm())};
    }

    Eigen::VectorXd mean_gradient(const Eigen::VectorXd& x) const {
        check(x);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
        if (data_.size() == 0) return g;
        const Eigen::VectorXd k = detail::se_ard_cross(data_.inputs, x, hp_);
        const Eigen::VectorXd inv_l2 = hp_.lengthscales.array().square().inverse().matrix();
        for (Eigen::Index i = 0; i < data_.size(); ++i) {
            g -= alpha_(i) * k(i) * (x - data_.inputs.row(i).transpose()).cwiseProduct(inv_l2);
        }
        return g;
    }

    GpPredictionWithGradient predict_with_gradient(const Eigen::VectorXd& x) const {
        check(x);
        GpPredictionWithGradient out;
        out.mean_gradient = Eigen::VectorXd::Zero(x.size());
        out.variance_gradient = Eigen::VectorXd::Zero(x.size());
        if (data_.size() == 0) {
            out.variance = hp_.signal_variance;
            return out;
        }
        const Eigen::VectorXd k = detail::se_ard_cross(data_.inputs, x, hp_);
        const Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(k);
        const Eigen::VectorXd kinv_k = L_.transpose().triangularView<Eigen::Upper>().solve(v);
        out.mean = k.dot(alpha_);
        out.variance = std::max(0.0, hp_.signal_variance - v.squaredNorm());
        const Eigen::VectorXd inv_l2 = hp_.lengthscales.array().square().inverse().matrix();
        // d k_i / dx = -k_i (x - x_i) / l^2
        for (Eigen::Index i = 0; i < data_.size(); ++i) {
            const Eigen::VectorXd dk = -k(i) * (x - data_.inputs.row(i).transpose()).cwiseProduct(inv_l2);
            out.mean_gradient += alpha_(i) * dk;
            out.variance_gradient -= 2.0 * kinv_k(i) * dk;
        }
        return out;
    }

private:
    void check(const Eigen::VectorXd& x) const {
        if (x.size() != data_.dim()) throw std::invalid_argument("GpPosterior: query dimension mismatch");
    }

    GpDataset data_;
    KernelHyperparams hp_;
    Eigen::MatrixXd L_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
};

struct LmlResult {
    double value = 0.0;
    Eigen::VectorXd gradient;  ///< w.r.t. [log sf2, log l_1..d, log sn2]
};

/// Gaussian log evidence and its gradient w.r.t. log-hyperparameters.
inline LmlResult log_marginal_likelihood_with_gradient(const GpDataset& data, const KernelHyperparams& hp) {
    if (data.size() == 0) throw std::invalid_argument("log_marginal_likelihood: empty dataset");
    const Eigen::Index n = data.size(), d = data.dim();
    const Eigen::MatrixXd Kf = detail::se_ard_gram(data.inputs, hp);
    Eigen::MatrixXd K = Kf;
    K.diagonal().array() += hp.noise_variance;
    const auto f = detail::factorize(K);
    const Eigen::VectorXd alpha = f.llt.solve(data.targets);
    const Eigen::MatrixXd L = f.llt.matrixL();

    LmlResult r;
    r.value = -0.5 * data.targets.dot(alpha) - L.diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    // dLML/dp = 0.5 tr(W dK/dp), W = alpha alpha' - K^{-1}
    const Eigen::MatrixXd W = alpha * alpha.transpose() - f.llt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd WK = W.cwiseProduct(Kf);
    r.gradient.resize(d + 2);
    r.gradient(0) = 0.5 * WK.sum();
    for (Eigen::Index j = 0; j < d; ++j) {
        const double inv_l2 = 1.0 / (hp.lengthscales(j) * hp.lengthscales(j));
        double acc = 0.0;
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = a + 1; b < n; ++b) {
                const double diff = data.inputs(a, j) - data.inputs(b, j);
                acc += WK(a, b) * diff * diff;
            }
        }
        r.gradient(1 + j) = acc * inv_l2;  // symmetric: 2 * 0.5 * upper triangle
    }
    r.gradient(d + 1) = 0.5 * hp.noise_variance * W.trace();
    return r;
}

inline double log_marginal_likelihood(const GpDataset& data, const KernelHyperparams& hp) {
    if (data.size() == 0) throw std::invalid_argument("log_marginal_likelihood: empty dataset");
    Eigen::MatrixXd K = detail::se_ard_gram(data.inputs, hp);
    K.diagonal().array() += hp.noise_variance;
    const auto f = detail::factorize(K);
    const Eigen::MatrixXd L = f.llt.matrixL();
    return -0.5 * data.targets.dot(f.llt.solve(data.targets)) - L.diagonal().array().log().sum() -
           0.5 * static_cast<double>(data.size()) * std::log(2.0 * std::numbers::pi);
}

struct HyperparamFitOptions {
    HyperparamBounds bounds;
    int max_iterations = 120;
    double initial_step = 0.5;  ///< in log units
};

/// Evidence maximization in log-parameter space by projected Rprop ascent from
/// `restarts` log-uniform random starts plus one start at `previous` (or a
/// default guess). Deterministic given the seed.
inline KernelHyperparams fit_hyperparameters(const GpDataset& data, int restarts, std::uint64_t seed,
                                             const std::optional<KernelHyperparams>& previous = std::nullopt,
                                             const HyperparamFitOptions& opts = {}) {
    if (data.size() == 0) throw std::invalid_argument("fit_hyperparameters: empty dataset");
    const Eigen::Index d = data.dim();
    const auto [lo, hi] = opts.bounds.log_bounds(d);

    std::vector<Eigen::VectorXd> starts;
    if (previous && previous->dim() == d) {
        starts.push_back(previous->to_log().cwiseMax(lo).cwiseMin(hi));
    } else {
        KernelHyperparams guess{1.0, Eigen::VectorXd::Constant(d, 0.3), 1e-3};
        starts.push_back(guess.to_log());
    }
    Rng rng(seed);
    for (int r = 0; r < restarts; ++r) starts.push_back(uniform_in(rng, lo, hi));

    auto evaluate = [&](const Eigen::VectorXd& p) -> std::optional<LmlResult> {
        try {
            auto res = log_marginal_likelihood_with_gradient(data, KernelHyperparams::from_log(p));
            if (!std::isfinite(res.value) || !res.gradient.allFinite()) return std::nullopt;
            return res;
        } catch (const CholeskyFailure&) {
            return std::nullopt;
        }
    };

    Eigen::VectorXd best_p = starts.front();
    double best_value = -std::numeric_limits<double>::infinity();

    for (const auto& start : starts) {
        Eigen::VectorXd p = start;
        auto cur = evaluate(p);
        if (!cur) continue;
        Eigen::VectorXd step = Eigen::VectorXd::Constant(d + 2, opts.initial_step);
        Eigen::VectorXd prev_grad = Eigen::VectorXd::Zero(d + 2);
        double run_best = cur->value;
        Eigen::VectorXd run_best_p = p;
        int stall = 0;
        for (int it = 0; it < opts.max_iterations; ++it) {
            // iRprop-: on a sign change shrink the step and skip that coordinate once
            Eigen::VectorXd g = cur->gradient;
            Eigen::VectorXd next = p;
            for (Eigen::Index i = 0; i < d + 2; ++i) {
                const double s = g(i) * prev_grad(i);
                if (s > 0) {
                    step(i) = std::min(step(i) * 1.2, 1.0);
                } else if (s < 0) {
                    step(i) = std::max(step(i) * 0.5, 1e-6);
                    g(i) = 0.0;
                }
                if (g(i) > 0) next(i) += step(i);
                else if (g(i) < 0) next(i) -= step(i);
            }
            next = next.cwiseMax(lo).cwiseMin(hi);
            auto trial = evaluate(next);
            if (!trial) {
                step *= 0.5;
                prev_grad.setZero();
                if (step.maxCoeff() < 1e-6) break;
                continue;
            }
            prev_grad = g;
            const double improvement = trial->value - run_best;
            p = next;
            cur = trial;
            if (cur->value > run_best) {
                run_best = cur->value;
                run_best_p = p;
            }
            stall = improvement < 1e-6 ? stall + 1 : 0;
            if (stall >= 10 || step.maxCoeff() < 1e-5) break;
        }
        if (run_best > best_value) {
            best_value = run_best;
            best_p = run_best_p;
        }
    }
    return KernelHyperparams::from_log(best_p.cwiseMax(lo).cwiseMin(hi));
}

}  // namespace lqrbo
