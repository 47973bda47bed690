#include <gtest/gtest.h>

#include "support.hpp"

using namespace lqrbo;

TEST(Plants, Dimensions) {
    EXPECT_EQ(make_plant("double_integrator").plant->state_dim(), 2);
    EXPECT_EQ(make_plant("double_integrator").plant->input_dim(), 1);
    EXPECT_EQ(make_plant("cart_pole").plant->state_dim(), 4);
    EXPECT_EQ(make_plant("cart_pole").plant->input_dim(), 1);
    const auto q = make_plant("quadcopter");
    EXPECT_EQ(q.plant->state_dim(), 12);
    EXPECT_EQ(q.plant->input_dim(), 4);
    EXPECT_EQ(q.plant->state_dim() * q.plant->input_dim(), 48);
    EXPECT_THROW(make_plant("furuta"), UnknownPlant);
}

TEST(Plants, DefaultEpisodes) {
    const auto di = make_plant("double_integrator");
    EXPECT_NEAR(di.episode.x0(0), std::numbers::pi / 2, 1e-15);
    const auto cp = make_plant("cart_pole");
    EXPECT_NEAR(cp.episode.x0(1), std::numbers::pi / 4, 1e-15);
    EXPECT_EQ(cp.episode.x0(2), 2.0);
    EXPECT_EQ(cp.episode.steps(), 500);
    const auto q = make_plant("quadcopter");
    EXPECT_EQ(q.episode.x0(0), 2.0);
    EXPECT_NEAR(q.episode.x0(6), std::numbers::pi / 6, 1e-15);
    EXPECT_NEAR(q.episode.x0(7), std::numbers::pi / 6, 1e-15);
    EXPECT_EQ(q.episode.steps(), 250);
}

TEST(Plants, DoubleIntegratorLinearizationIsExact) {
    const auto s = make_plant("double_integrator");
    const double dt = 0.01;
    const auto lin = linearize_at_origin(*s.plant, dt);
    EXPECT_NEAR(lin.A(0, 0), 1.0, 1e-8);
    EXPECT_NEAR(lin.A(0, 1), dt, 1e-8);
    EXPECT_NEAR(lin.A(1, 0), 0.0, 1e-8);
    EXPECT_NEAR(lin.A(1, 1), 1.0, 1e-8);
    EXPECT_NEAR(lin.B(0, 0), dt * dt / 2, 1e-8);
    EXPECT_NEAR(lin.B(1, 0), dt, 1e-8);
}

TEST(Plants, CartPoleUprightIsUnstable) {
    const auto s = make_plant("cart_pole");
    const auto lin = linearize_at_origin(*s.plant, s.episode.dt);
    EXPECT_GT(spectral_radius(lin, Eigen::MatrixXd::Zero(1, 4)), 1.0);
}

TEST(Plants, QuadcopterHoverInputRankFour) {
    const auto s = make_plant("quadcopter");
    const auto lin = linearize_at_origin(*s.plant, s.episode.dt);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(lin.B);
    lu.setThreshold(1e-9);
    EXPECT_EQ(lu.rank(), 4);
    EXPECT_LT(spectral_radius(lin, dlqr(lin, s.episode.weights)), 1.0);
}

TEST(Plants, Camel) {
    EXPECT_EQ(camel(Eigen::Vector2d(0, 0)), 0.0);
    EXPECT_NEAR(camel(Eigen::Vector2d(1, 1)), 3.116667, 1e-6);
    EXPECT_DOUBLE_EQ(camel(Eigen::Vector2d(-0.3, 1.7)), camel(Eigen::Vector2d(0.3, -1.7)));
}

TEST(Rollout, ZeroStateNoNoiseCostsNothing) {
    auto s = make_plant("cart_pole");
    s.episode.x0.setZero();
    s.episode.noise_cov.setZero();
    const auto K = dlqr(linearize_at_origin(*s.plant, s.episode.dt), s.episode.weights);
    EXPECT_EQ(rollout(*s.plant, K, s.episode, 1).cost, 0.0);
}

TEST(Rollout, LinearPlantMatchesValueFunction) {
    auto s = make_plant("double_integrator");
    s.episode.noise_cov.setZero();
    s.episode.horizon_s = 20.0;
    s.episode.x0 = Eigen::Vector2d(0.1, 0.0);  // small enough that the torque limit is inactive
    const auto lin = linearize_at_origin(*s.plant, s.episode.dt);
    const auto P = solve_dare(lin, s.episode.weights);
    const auto K = dlqr(lin, s.episode.weights);
    const double expected = s.episode.x0.dot(P * s.episode.x0);
    EXPECT_NEAR(rollout(*s.plant, K, s.episode, 0).cost, expected, 1e-3 * expected);
}

TEST(Rollout, SeedDeterminism) {
    const auto s = make_plant("cart_pole");
    const auto K = dlqr(linearize_at_origin(*s.plant, s.episode.dt), s.episode.weights);
    const auto a = rollout(*s.plant, K, s.episode, 42);
    const auto b = rollout(*s.plant, K, s.episode, 42);
    const auto c = rollout(*s.plant, K, s.episode, 43);
    EXPECT_EQ(a.cost, b.cost);
    EXPECT_NE(a.cost, c.cost);
}

TEST(Rollout, DivergenceReturnsPenalty) {
    auto s = make_plant("double_integrator");
    s.episode.divergence_penalty = 1234.5;
    s.episode.horizon_s = 500.0;
    s.episode.x0 = Eigen::Vector2d(0.1, 0.0);
    const auto r = rollout(*s.plant, Eigen::RowVector2d(-10.0, -10.0), s.episode, 0);
    EXPECT_TRUE(r.diverged);
    EXPECT_EQ(r.cost, 1234.5);
}

TEST(Rollout, RecordsTrajectory) {
    const auto s = make_plant("double_integrator");
    const auto K = dlqr(linearize_at_origin(*s.plant, s.episode.dt), s.episode.weights);
    const auto r = rollout(*s.plant, K, s.episode, 0, true);
    EXPECT_EQ(r.states.size(), static_cast<std::size_t>(s.episode.steps() + 1));
    EXPECT_EQ(r.inputs.size(), r.states.size());
    EXPECT_EQ(r.states.front(), s.episode.x0);
}
