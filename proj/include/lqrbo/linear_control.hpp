#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace lqrbo {

/// Discrete-time state-space model x' = A x + B u.
struct LinearDynamics {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;

    int state_dim() const { return static_cast<int>(A.rows()); }
    int input_dim() const { return static_cast<int>(B.cols()); }
};

/// Quadratic stage cost x'Qx + u'Ru.
struct CostWeights {
    Eigen::MatrixXd Q;
    Eigen::MatrixXd R;
};

/// State feedback u = -K x, K is n_u x n_x.
using GainMatrix = Eigen::MatrixXd;

class RiccatiError : public std::runtime_error {
public:
    enum class Kind { NonConvergent, NonFinite, InvalidInput };

    RiccatiError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct DareOptions {
    double tolerance = 1e-10;
    int max_iterations = 100000;
};

namespace detail {

inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

inline void check_dimensions(const LinearDynamics& dyn, const CostWeights& w) {
    const auto nx = dyn.A.rows();
    const auto nu = dyn.B.cols();
    if (dyn.A.cols() != nx || dyn.B.rows() != nx || w.Q.rows() != nx || w.Q.cols() != nx ||
        w.R.rows() != nu || w.R.cols() != nu) {
        throw RiccatiError(RiccatiError::Kind::InvalidInput, "dimension mismatch between (A, B) and (Q, R)");
    }
    if (!all_finite(dyn.A) || !all_finite(dyn.B) || !all_finite(w.Q) || !all_finite(w.R)) {
        throw RiccatiError(RiccatiError::Kind::NonFinite, "non-finite entries in model or weights");
    }
}

}  // namespace detail

/// Row-major flattening, the vectorization used for gains and AB parameters.
inline Eigen::VectorXd vec_row_major(const Eigen::MatrixXd& m) {
    Eigen::VectorXd v(m.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) v(r * m.cols() + c) = m(r, c);
    return v;
}

inline Eigen::MatrixXd unvec_row_major(const Eigen::Ref<const Eigen::VectorXd>& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols) throw std::invalid_argument("unvec_row_major: size mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v(r * cols + c);
    return m;
}

/// Fixed point of P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA by iterating the
/// recursion from P = Q. Converged when max|P_{k+1} - P_k| < tol * max(1, max|P_k|).
inline Eigen::MatrixXd solve_dare(const LinearDynamics& dyn, const CostWeights& w, const DareOptions& opts = {}) {
    detail::check_dimensions(dyn, w);
    const Eigen::MatrixXd& A = dyn.A;
    const Eigen::MatrixXd& B = dyn.B;
    const Eigen::MatrixXd At = A.transpose();
    const Eigen::MatrixXd Bt = B.transpose();

    Eigen::MatrixXd P = 0.5 * (w.Q + w.Q.transpose());
    for (int k = 0; k < opts.max_iterations; ++k) {
        const Eigen::MatrixXd PA = P * A;
        const Eigen::MatrixXd PB = P * B;
        const Eigen::MatrixXd S = w.R + Bt * PB;
        const Eigen::MatrixXd G = S.ldlt().solve(Bt * PA);
        Eigen::MatrixXd next = w.Q + At * PA - At * PB * G;
        next = 0.5 * (next + next.transpose()).eval();
        if (!detail::all_finite(next)) {
            throw RiccatiError(RiccatiError::Kind::NonFinite, "Riccati iteration overflowed");
        }
        const double change = (next - P).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
        P = std::move(next);
        if (change < opts.tolerance * scale) return P;
    }
    throw RiccatiError(RiccatiError::Kind::NonConvergent,
                       "Riccati iteration did not converge within " + std::to_string(opts.max_iterations) + " iterations");
}

/// Infinite-horizon discrete LQR gain K = (R + B'PB)^{-1} B'PA.
inline GainMatrix dlqr(const LinearDynamics& dyn, const CostWeights& w, const DareOptions& opts = {}) {
    const Eigen::MatrixXd P = solve_dare(dyn, w, opts);
    const Eigen::MatrixXd S = w.R + dyn.B.transpose() * P * dyn.B;
    GainMatrix K = S.ldlt().solve(dyn.B.transpose() * P * dyn.A);
    if (!K.allFinite()) throw RiccatiError(RiccatiError::Kind::NonFinite, "LQR gain is not finite");
    return K;
}

/// max |eig(A - BK)|
inline double spectral_radius(const LinearDynamics& dyn, const GainMatrix& K) {
    if (K.rows() != dyn.B.cols() || K.cols() != dyn.A.rows()) {
        throw std::invalid_argument("spectral_radius: gain dimension mismatch");
    }
    const Eigen::MatrixXd closed = dyn.A - dyn.B * K;
    Eigen::EigenSolver<Eigen::MatrixXd> es(closed, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// AB parameter vector: vec(A) row-major followed by vec(B) row-major.
inline Eigen::VectorXd ab_params_from_model(const LinearDynamics& dyn) {
    Eigen::VectorXd theta(dyn.A.size() + dyn.B.size());
    theta << vec_row_major(dyn.A), vec_row_major(dyn.B);
    return theta;
}

inline LinearDynamics model_from_ab_params(const Eigen::Ref<const Eigen::VectorXd>& theta, int nx, int nu) {
    const Eigen::Index na = static_cast<Eigen::Index>(nx) * nx;
    if (theta.size() != na + static_cast<Eigen::Index>(nx) * nu) {
        throw std::invalid_argument("AB parameter vector must have n_x^2 + n_x*n_u entries");
    }
    return {unvec_row_major(theta.head(na), nx, nx), unvec_row_major(theta.tail(theta.size() - na), nx, nu)};
}

/// K^{AB}(theta) = dlqr(A(theta), B(theta), Q, R).
inline GainMatrix gain_from_ab_params(const Eigen::Ref<const Eigen::VectorXd>& theta, const CostWeights& w) {
    const int nx = static_cast<int>(w.Q.rows());
    const int nu = static_cast<int>(w.R.rows());
    return dlqr(model_from_ab_params(theta, nx, nu), w);
}

/// K^{QR}(theta) = dlqr(A, B, diag(10^theta[0:nx]), diag(10^theta[nx:nx+nu])).
inline GainMatrix gain_from_qr_params(const Eigen::Ref<const Eigen::VectorXd>& theta, const LinearDynamics& dyn) {
    const int nx = dyn.state_dim();
    const int nu = dyn.input_dim();
    if (theta.size() != nx + nu) throw std::invalid_argument("QR parameter vector must have n_x + n_u entries");
    CostWeights w;
    w.Q = theta.head(nx).unaryExpr([](double t) { return std::pow(10.0, t); }).asDiagonal();
    w.R = theta.tail(nu).unaryExpr([](double t) { return std::pow(10.0, t); }).asDiagonal();
    return dlqr(dyn, w);
}

/// Inverse of gain_from_qr_params' weight map for diagonal weights.
inline Eigen::VectorXd qr_params_from_weights(const CostWeights& w) {
    Eigen::VectorXd theta(w.Q.rows() + w.R.rows());
    theta << w.Q.diagonal().array().log10().matrix(), w.R.diagonal().array().log10().matrix();
    return theta;
}

}  // namespace lqrbo
