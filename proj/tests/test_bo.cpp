#include <gtest/gtest.h>

#include "support.hpp"

using namespace lqrbo;
using lqrbo::testing::Gen;

namespace {

GpPosterior one_dim_gp(std::vector<double> xs, std::vector<double> ys, double l = 0.2, double sn2 = 1e-8) {
    GpDataset d;
    d.inputs = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    d.targets = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    return GpPosterior(d, {1.0, Eigen::VectorXd::Constant(1, l), sn2});
}

double grid_argmax(const std::function<double(double)>& f) {
    double best = 0.0, best_v = -1e300;
    for (int i = 0; i <= 10000; ++i) {
        const double x = i / 10000.0, v = f(x);
        if (v > best_v) {
            best_v = v;
            best = x;
        }
    }
    return best;
}

BoState state_for(const Objective& f, const BoxDomain& box, std::vector<Eigen::VectorXd> init, std::uint64_t seed = 1) {
    BoSettings s;
    return make_bo_state(box, AffineReparameterization::identity(Eigen::VectorXd::Zero(box.dim()), box.extent()), s, seed, f,
                         init);
}

}  // namespace

TEST(Acquisition, KappaZeroIsNegativeMean) {
    const auto gp = one_dim_gp({0.2, 0.8}, {1.0, -1.0});
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.4);
    EXPECT_DOUBLE_EQ(acquisition_value(gp, x, {0.0, 1, 1}), -gp.predict(x).mean);
}

TEST(Acquisition, EmptyDatasetIsFlat) {
    GpDataset empty;
    empty.inputs.resize(0, 2);
    GpPosterior gp(empty, {4.0, Eigen::Vector2d(0.3, 0.3), 1e-6});
    EXPECT_DOUBLE_EQ(acquisition_value(gp, Eigen::Vector2d(0.1, 0.9), {2.0, 1, 1}), 4.0);
    const BoxDomain unit = BoxDomain::unit(2);
    const auto x = maximize_acquisition(gp, unit, {}, 3);
    EXPECT_TRUE(unit.contains(x));
    // flat: the first start wins
    Rng rng(3);
    EXPECT_EQ(x, uniform_in(rng, unit.lower, unit.upper));
}

TEST(Acquisition, TrainingPointWithKappaZero) {
    const auto gp = one_dim_gp({0.3}, {0.7}, 0.2, 1e-12);
    EXPECT_NEAR(acquisition_value(gp, Eigen::VectorXd::Constant(1, 0.3), {0.0, 1, 1}), -0.7, 1e-8);
}

TEST(Acquisition, ExploresAwayFromSinglePoint) {
    const auto gp = one_dim_gp({0.5}, {0.0}, 0.1);
    const AcquisitionConfig cfg{50.0, 32, 100};
    const double x = maximize_acquisition(gp, BoxDomain::unit(1), cfg, 1)(0);
    const double grid = grid_argmax([&](double t) { return acquisition_value(gp, Eigen::VectorXd::Constant(1, t), cfg); });
    EXPECT_GE(std::abs(x - 0.5), 0.1);
    EXPECT_NEAR(acquisition_value(gp, Eigen::VectorXd::Constant(1, x), cfg),
                acquisition_value(gp, Eigen::VectorXd::Constant(1, grid), cfg), 1e-6);
}

TEST(Acquisition, QuadraticPosteriorMatchesGrid) {
    std::vector<double> xs, ys;
    for (int i = 0; i <= 10; ++i) {
        xs.push_back(i / 10.0);
        ys.push_back((i / 10.0 - 0.37) * (i / 10.0 - 0.37));
    }
    const auto gp = one_dim_gp(xs, ys, 0.3);
    const AcquisitionConfig cfg{2.0, 32, 100};
    const double x = maximize_acquisition(gp, BoxDomain::unit(1), cfg, 5)(0);
    const double grid = grid_argmax([&](double t) { return acquisition_value(gp, Eigen::VectorXd::Constant(1, t), cfg); });
    EXPECT_NEAR(x, grid, 1e-3);
}

TEST(EstimatedOptimum, SymmetricDataGivesCenter) {
    const auto gp = one_dim_gp({0.2, 0.5, 0.8}, {1.0, -1.0, 1.0});
    EXPECT_NEAR(estimated_optimum(gp, BoxDomain::unit(1), {}, 1)(0), 0.5, 1e-3);
}

TEST(EstimatedOptimum, MonotoneMeanHitsUpperBound) {
    const auto gp = one_dim_gp({0.0, 0.5, 1.0}, {2.0, 1.0, 0.0}, 1.0);
    EXPECT_EQ(estimated_optimum(gp, BoxDomain::unit(1), {}, 1)(0), 1.0);
}

TEST(EstimatedOptimum, SingleObservationMatchesGrid) {
    const auto gp = one_dim_gp({0.3}, {-1.0}, 0.2);
    const double x = estimated_optimum(gp, BoxDomain::unit(1), {}, 2)(0);
    const double grid = grid_argmax([&](double t) { return -gp.predict(Eigen::VectorXd::Constant(1, t)).mean; });
    EXPECT_NEAR(x, grid, 1e-3);
}

TEST(BoStep, QuadraticObjectiveConverges) {
    const Objective f = [](const Eigen::VectorXd& t) -> std::optional<double> { return (t(0) - 0.3) * (t(0) - 0.3); };
    const BoxDomain box = BoxDomain::unit(1);
    auto s = state_for(f, box, {Eigen::VectorXd::Constant(1, 0.9)});
    s = run_bo(std::move(s), f, 15);
    EXPECT_NEAR(s.incumbent_theta()(0), 0.3, 0.05);
}

TEST(BoStep, ConstantObjective) {
    const Objective f = [](const Eigen::VectorXd&) -> std::optional<double> { return 2.5; };
    auto s = run_bo(state_for(f, BoxDomain::unit(2), {Eigen::Vector2d(0.5, 0.5)}), f, 6);
    EXPECT_EQ(s.incumbent_cost(), 2.5);
    EXPECT_EQ(s.observations.size(), 7u);
}

TEST(BoStep, FailureGetsPenalty) {
    const Objective f = [](const Eigen::VectorXd& t) -> std::optional<double> {
        if (t(0) > 0.6) return std::nullopt;
        return 1.0 + t(0);
    };
    BoSettings settings;
    auto s = make_bo_state(BoxDomain::unit(1), AffineReparameterization::identity(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)),
                           settings, 4, f, {Eigen::VectorXd::Constant(1, 0.5)}, 1.5);
    s = run_bo(std::move(s), f, 8);
    for (const auto& o : s.observations) {
        if (o.failed) EXPECT_EQ(o.cost, 1.5);
        else EXPECT_LE(o.theta(0), 0.6);
    }
}

TEST(BoStep, BudgetOneIsOneEvaluation) {
    int calls = 0;
    const Objective f = [&](const Eigen::VectorXd& t) -> std::optional<double> {
        ++calls;
        return t.squaredNorm();
    };
    auto s = state_for(f, BoxDomain::unit(2), {Eigen::Vector2d(0.2, 0.2)});
    EXPECT_EQ(calls, 1);
    s = run_bo(std::move(s), f, 1);
    EXPECT_EQ(calls, 2);
    EXPECT_EQ(s.history.size(), 2u);
    EXPECT_EQ(s.history.back().iter, 1);
}

TEST(RunBo, NoAdaptationKeepsDomain) {
    const Objective f = [](const Eigen::VectorXd& t) -> std::optional<double> { return (t.array() - 0.5).square().sum(); };
    const BoxDomain box = BoxDomain::unit(2);
    const auto s = run_bo(state_for(f, box, {Eigen::Vector2d(0.1, 0.9)}), f, 5);
    EXPECT_EQ(s.domain, box);
}

TEST(RunBo, CamelDdaGrowsTowardOptimum) {
    const Objective f = [](const Eigen::VectorXd& t) -> std::optional<double> { return camel(t); };
    const BoxDomain box(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(1.0, 1.0));
    std::vector<Eigen::VectorXd> init{Eigen::Vector2d(0.6, 0.9), Eigen::Vector2d(0.9, 0.6), Eigen::Vector2d(0.75, 0.75)};
    const auto s = run_bo(state_for(f, box, init, 7), f, 30, DdaConfig{});
    EXPECT_TRUE(s.domain.contains(box));
    EXPECT_LT(s.domain.lower.maxCoeff(), 0.5);
}

TEST(RunBo, SameSeedSameHistory) {
    const Objective f = [](const Eigen::VectorXd& t) -> std::optional<double> { return camel(t); };
    const BoxDomain box(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(1.0, 1.0));
    const auto a = run_bo(state_for(f, box, {Eigen::Vector2d(0.7, 0.7)}, 3), f, 8, DdaConfig{});
    const auto b = run_bo(state_for(f, box, {Eigen::Vector2d(0.7, 0.7)}, 3), f, 8, DdaConfig{});
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_EQ(a.history[i].theta, b.history[i].theta);
        EXPECT_EQ(a.history[i].cost, b.history[i].cost);
    }
}
