#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lqrbo/linear_control.hpp"
#include "lqrbo/random.hpp"

namespace lqrbo {

/// Continuous-time plant integrated with RK4 under a zero-order hold on the input.
/// All plants have their equilibrium at x = 0, u = 0.
class PlantModel {
public:
    virtual ~PlantModel() = default;

    virtual std::string name() const = 0;
    virtual int state_dim() const = 0;
    virtual int input_dim() const = 0;
    virtual Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const = 0;
    virtual Eigen::VectorXd input_lower() const = 0;
    virtual Eigen::VectorXd input_upper() const = 0;

    /// Nominal integration step in seconds.
    virtual double default_dt() const { return 0.01; }
    virtual double divergence_bound() const { return 1e3; }

    Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt) const {
        const Eigen::VectorXd k1 = derivative(x, u);
        const Eigen::VectorXd k2 = derivative(x + 0.5 * dt * k1, u);
        const Eigen::VectorXd k3 = derivative(x + 0.5 * dt * k2, u);
        const Eigen::VectorXd k4 = derivative(x + dt * k3, u);
        return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    Eigen::VectorXd clip_input(const Eigen::VectorXd& u) const {
        return u.cwiseMax(input_lower()).cwiseMin(input_upper());
    }

    bool diverged(const Eigen::VectorXd& x) const {
        return !x.allFinite() || x.cwiseAbs().maxCoeff() > divergence_bound();
    }
};

using PlantPtr = std::shared_ptr<const PlantModel>;

/// Rotating disk with unit inertia: state [phi, phi_dot], input torque.
class DoubleIntegrator final : public PlantModel {
public:
    explicit DoubleIntegrator(double inertia = 1.0, double max_torque = 5.0) : inertia_(inertia), max_torque_(max_torque) {}

    std::string name() const override { return "double_integrator"; }
    int state_dim() const override { return 2; }
    int input_dim() const override { return 1; }
    Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override {
        return Eigen::Vector2d(x(1), u(0) / inertia_);
    }
    Eigen::VectorXd input_lower() const override { return Eigen::VectorXd::Constant(1, -max_torque_); }
    Eigen::VectorXd input_upper() const override { return Eigen::VectorXd::Constant(1, max_torque_); }

private:
    double inertia_;
    double max_torque_;
};

/// Frictionless cart with a point-mass pole. State [z, phi, z_dot, phi_dot],
/// phi = 0 upright, input horizontal force on the cart.
class CartPole final : public PlantModel {
public:
    struct Params {
        double cart_mass = 1.0;
        double pole_mass = 0.1;
        double pole_length = 0.5;
        double gravity = 9.81;
        double max_force = 30.0;
    };

    CartPole() = default;
    explicit CartPole(Params p) : p_(p) {}

    std::string name() const override { return "cart_pole"; }
    int state_dim() const override { return 4; }
    int input_dim() const override { return 1; }
    Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override {
        const double phi = x(1), zd = x(2), phid = x(3);
        const double s = std::sin(phi), c = std::cos(phi);
        const double zdd = (u(0) + p_.pole_mass * s * (p_.pole_length * phid * phid - p_.gravity * c)) /
                           (p_.cart_mass + p_.pole_mass * s * s);
        const double phidd = (p_.gravity * s - zdd * c) / p_.pole_length;
        Eigen::VectorXd dx(4);
        dx << zd, phid, zdd, phidd;
        return dx;
    }
    Eigen::VectorXd input_lower() const override { return Eigen::VectorXd::Constant(1, -p_.max_force); }
    Eigen::VectorXd input_upper() const override { return Eigen::VectorXd::Constant(1, p_.max_force); }

    /// Total mechanical energy, potential measured from the hanging position.
    double energy(const Eigen::VectorXd& x) const {
        const double phi = x(1), zd = x(2), phid = x(3);
        const double vx = zd + p_.pole_length * phid * std::cos(phi);
        const double vy = -p_.pole_length * phid * std::sin(phi);
        return 0.5 * p_.cart_mass * zd * zd + 0.5 * p_.pole_mass * (vx * vx + vy * vy) +
               p_.pole_mass * p_.gravity * p_.pole_length * (1.0 + std::cos(phi));
    }

    const Params& params() const { return p_; }

private:
    Params p_;
};

/// Plus-configuration quadcopter with ZYX Euler angles.
/// State [x y z, vx vy vz, roll pitch yaw, p q r]; inputs are rotor speed
/// deviations from hover, in units of the hover speed. Rotor thrust is
/// k_f * omega^2 with k_f chosen so that omega = 1 hovers.
class Quadcopter final : public PlantModel {
public:
    struct Params {
        double mass = 0.5;
        double arm = 0.17;
        Eigen::Vector3d inertia{3.2e-3, 3.2e-3, 5.5e-3};
        double gravity = 9.81;
        double drag_to_thrust = 0.016;  // rotor torque / thrust ratio [m]
        double max_speed = 2.0;         // maximum rotor speed in hover units
    };

    Quadcopter() = default;
    explicit Quadcopter(Params p) : p_(std::move(p)) {}

    std::string name() const override { return "quadcopter"; }
    int state_dim() const override { return 12; }
    int input_dim() const override { return 4; }
    double default_dt() const override { return 0.02; }

    double thrust_coefficient() const { return p_.mass * p_.gravity / 4.0; }

    Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override {
        const double kf = thrust_coefficient();
        Eigen::Vector4d f;
        for (int i = 0; i < 4; ++i) {
            const double w = 1.0 + u(i);
            f(i) = kf * w * w;
        }
        const double thrust = f.sum();
        const Eigen::Vector3d torque(p_.arm * (f(1) - f(3)), p_.arm * (f(2) - f(0)),
                                     p_.drag_to_thrust * (f(0) - f(1) + f(2) - f(3)));

        const double roll = x(6), pitch = x(7), yaw = x(8);
        const double cr = std::cos(roll), sr = std::sin(roll);
        const double cp = std::cos(pitch), sp = std::sin(pitch), tp = std::tan(pitch);
        const double cy = std::cos(yaw), sy = std::sin(yaw);
        const Eigen::Vector3d omega = x.segment<3>(9);

        Eigen::VectorXd dx(12);
        dx.segment<3>(0) = x.segment<3>(3);
        dx(3) = thrust / p_.mass * (cy * sp * cr + sy * sr);
        dx(4) = thrust / p_.mass * (sy * sp * cr - cy * sr);
        dx(5) = thrust / p_.mass * (cp * cr) - p_.gravity;
        dx(6) = omega(0) + sr * tp * omega(1) + cr * tp * omega(2);
        dx(7) = cr * omega(1) - sr * omega(2);
        dx(8) = (sr * omega(1) + cr * omega(2)) / cp;
        const Eigen::Vector3d Iw = p_.inertia.cwiseProduct(omega);
        dx.segment<3>(9) = (torque - omega.cross(Iw)).cwiseQuotient(p_.inertia);
        return dx;
    }
    Eigen::VectorXd input_lower() const override { return Eigen::VectorXd::Constant(4, -1.0); }
    Eigen::VectorXd input_upper() const override { return Eigen::VectorXd::Constant(4, p_.max_speed - 1.0); }

    const Params& params() const { return p_; }

private:
    Params p_;
};

struct EpisodeConfig {
    Eigen::VectorXd x0;
    double horizon_s = 5.0;
    double dt = 0.01;
    Eigen::VectorXd noise_cov;  ///< diagonal of the process-noise covariance
    CostWeights weights;
    double divergence_penalty = 1e8;

    int steps() const { return static_cast<int>(std::lround(horizon_s / dt)); }
};

struct RolloutResult {
    double cost = 0.0;
    bool diverged = false;
    std::vector<Eigen::VectorXd> states;  ///< filled when recording
    std::vector<Eigen::VectorXd> inputs;
};

/// Single noisy episode under u = clip(-K x). Stage cost x'Qx + u'Ru summed over
/// t = 0 .. steps-1. Divergence ends the episode with the configured penalty.
inline RolloutResult rollout(const PlantModel& plant, const GainMatrix& K, const EpisodeConfig& ep, std::uint64_t seed,
                             bool record = false) {
    if (K.rows() != plant.input_dim() || K.cols() != plant.state_dim() || ep.x0.size() != plant.state_dim()) {
        throw std::invalid_argument("rollout: dimension mismatch");
    }
    Rng rng(seed);
    const Eigen::VectorXd noise_std =
        ep.noise_cov.size() == 0 ? Eigen::VectorXd::Zero(plant.state_dim()) : Eigen::VectorXd(ep.noise_cov.cwiseSqrt());
    const bool noisy = noise_std.any();

    RolloutResult res;
    Eigen::VectorXd x = ep.x0;
    const int n = ep.steps();
    for (int t = 0; t < n; ++t) {
        const Eigen::VectorXd u = plant.clip_input(-K * x);
        res.cost += x.dot(ep.weights.Q * x) + u.dot(ep.weights.R * u);
        if (record) {
            res.states.push_back(x);
            res.inputs.push_back(u);
        }
        x = plant.step(x, u, ep.dt);
        if (noisy) x += noise_std.cwiseProduct(standard_normal(rng, x.size()));
        if (plant.diverged(x) || !std::isfinite(res.cost)) {
            res.diverged = true;
            res.cost = ep.divergence_penalty;
            return res;
        }
    }
    if (record) {
        res.states.push_back(x);
        res.inputs.push_back(Eigen::VectorXd::Zero(plant.input_dim()));
    }
    return res;
}

/// Central finite differences of the discrete step map.
inline LinearDynamics linearize(const PlantModel& plant, const Eigen::VectorXd& x_eq, const Eigen::VectorXd& u_eq,
                                double dt, double h = 1e-6) {
    const int nx = plant.state_dim();
    const int nu = plant.input_dim();
    LinearDynamics lin{Eigen::MatrixXd(nx, nx), Eigen::MatrixXd(nx, nu)};
    for (int i = 0; i < nx; ++i) {
        Eigen::VectorXd dp = x_eq, dm = x_eq;
        dp(i) += h;
        dm(i) -= h;
        lin.A.col(i) = (plant.step(dp, u_eq, dt) - plant.step(dm, u_eq, dt)) / (2.0 * h);
    }
    for (int i = 0; i < nu; ++i) {
        Eigen::VectorXd dp = u_eq, dm = u_eq;
        dp(i) += h;
        dm(i) -= h;
        lin.B.col(i) = (plant.step(x_eq, dp, dt) - plant.step(x_eq, dm, dt)) / (2.0 * h);
    }
    return lin;
}

inline LinearDynamics linearize_at_origin(const PlantModel& plant, double dt) {
    return linearize(plant, Eigen::VectorXd::Zero(plant.state_dim()), Eigen::VectorXd::Zero(plant.input_dim()), dt);
}

/// Three-hump camel function; global minimum 0 at the origin.
inline double camel(const Eigen::Ref<const Eigen::VectorXd>& theta) {
    if (theta.size() != 2) throw std::invalid_argument("camel expects a 2-vector");
    const double a = theta(0), b = theta(1);
    const double a2 = a * a;
    return 2.0 * a2 - 1.05 * a2 * a2 + a2 * a2 * a2 / 6.0 + a * b + b * b;
}

class UnknownPlant : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PlantSetup {
    PlantPtr plant;
    EpisodeConfig episode;
};

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

inline std::vector<std::string> plant_names() { return {"double_integrator", "cart_pole", "quadcopter"}; }

/// Default weights: Q = I, R = 0.1 I. Process noise 1e-4 per state per step.
inline PlantSetup make_plant(const std::string& name) {
    PlantSetup s;
    if (name == "double_integrator") {
        s.plant = std::make_shared<DoubleIntegrator>();
        s.episode.x0 = Eigen::Vector2d(deg2rad(90.0), 0.0);
    } else if (name == "cart_pole") {
        s.plant = std::make_shared<CartPole>();
        s.episode.x0 = Eigen::Vector4d(0.0, deg2rad(45.0), 2.0, 0.0);
    } else if (name == "quadcopter") {
        s.plant = std::make_shared<Quadcopter>();
        Eigen::VectorXd x0 = Eigen::VectorXd::Zero(12);
        x0(0) = 2.0;
        x0(6) = deg2rad(30.0);
        x0(7) = deg2rad(30.0);
        s.episode.x0 = x0;
    } else {
        throw UnknownPlant("unknown plant: " + name);
    }
    const int nx = s.plant->state_dim();
    const int nu = s.plant->input_dim();
    s.episode.horizon_s = 5.0;
    s.episode.dt = s.plant->default_dt();
    s.episode.noise_cov = Eigen::VectorXd::Constant(nx, 1e-4);
    s.episode.weights.Q = Eigen::MatrixXd::Identity(nx, nx);
    s.episode.weights.R = 0.1 * Eigen::MatrixXd::Identity(nu, nu);
    return s;
}

}  // namespace lqrbo
