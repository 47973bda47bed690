// Acceptance gate. One PASS/FAIL line per criterion; tolerances are fixed here.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lqrbo/lqrbo.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace lqrbo;
using lqrbo::testing::Gen;

namespace {

constexpr double kDareTol = 1e-6;
constexpr double kGradRelTol = 1e-4;
constexpr double kHadamardSlack = 1e-8;
constexpr double kDdaVsVdFactor = 1.1;
constexpr double kDoubleIntegratorEta = 0.05;
constexpr int kCartPoleBudget = 30;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Paths {
    std::string cli;
    std::string property_binary;
    std::string work_dir;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
}

double final_value(const RunRecord& r, int iteration) {
    return r.curve.at(std::min(static_cast<std::size_t>(iteration), r.curve.size() - 1));
}

double median_at(const std::vector<RunRecord>& records, int iteration) {
    std::vector<double> v;
    for (const auto& r : records) v.push_back(final_value(r, iteration));
    return median(v);
}

Outcome riccati_oracle() {
    Gen g(2024);
    double worst = 0.0, worst_rho = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int nx = g.integer(1, 4), nu = g.integer(1, nx);
        const auto d = g.controllable_system(nx, nu);
        const CostWeights w{g.spd(nx), g.spd(nu)};
        const auto P = solve_dare(d, w);
        const auto ref = lqrbo::testing::value_iteration_dare(d, w);
        worst = std::max(worst, (P - ref).cwiseAbs().maxCoeff());
        worst_rho = std::max(worst_rho, spectral_radius(d, dlqr(d, w)));
    }
    return {worst <= kDareTol && worst_rho < 1.0, "max |P - P_vi| = " + fmt(worst) + ", max rho = " + fmt(worst_rho)};
}

Outcome gp_gradient() {
    Gen g(2025);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int d = g.integer(1, 5), n = g.integer(1, 30);
        GpPosterior gp(lqrbo::testing::random_dataset(g, n, d), lqrbo::testing::random_hyperparams(g, d));
        const Eigen::VectorXd x = g.vector(d, 0.0, 1.0);
        const Eigen::VectorXd grad = gp.mean_gradient(x);
        for (int i = 0; i < d; ++i) {
            Eigen::VectorXd xp = x, xm = x;
            xp(i) += 1e-6;
            xm(i) -= 1e-6;
            const double fd = (gp.predict(xp).mean - gp.predict(xm).mean) / 2e-6;
            worst = std::max(worst, std::abs(grad(i) - fd) / std::max(1.0, std::abs(fd)));
        }
    }
    return {worst <= kGradRelTol, "max relative error = " + fmt(worst)};
}

Outcome hadamard() {
    Gen g(2026);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = g.gain_samples(g.integer(5, 60), g.integer(1, 10));
        const double vp = pca_domain(s, 1.0, 0.0).reparam.scales.prod();
        const double vi = independence_domain(s, 1.0).reparam.scales.prod();
        worst = std::max(worst, vp / vi - 1.0);
    }
    return {worst <= kHadamardSlack, "max (prod pca / prod indep - 1) = " + fmt(worst)};
}

Outcome camel_ordering() {
    ExperimentConfig c;
    c.plant = "camel";
    c.domain = DomainStrategy::Manual;
    c.repetitions = 50;
    c.budget = 50;
    c.initial_design = InitialDesign::Random;
    c.adaptation = AdaptationKind::None;
    const double vanilla = median_at(run_experiment(c), 50);
    c.adaptation = AdaptationKind::Dda;
    const double dda = median_at(run_experiment(c), 50);
    c.adaptation = AdaptationKind::Vd;
    const double vd = median_at(run_experiment(c), 50);
    return {dda < vanilla && dda <= kDdaVsVdFactor * vd,
            "median regret dda = " + fmt(dda) + ", vanilla = " + fmt(vanilla) + ", vd = " + fmt(vd)};
}

int count_reaching(const std::vector<RunRecord>& records, int iteration, double eta) {
    int n = 0;
    for (const auto& r : records) n += final_value(r, iteration) <= eta ? 1 : 0;
    return n;
}

Outcome double_integrator() {
    ExperimentConfig c;
    c.plant = "double_integrator";
    c.parameterization = Parameterization::K;
    c.initial_design = InitialDesign::Random;
    c.repetitions = 10;
    c.budget = 15;
    c.domain = DomainStrategy::Independence;
    const int good = count_reaching(run_experiment(c), 15, kDoubleIntegratorEta);
    c.domain = DomainStrategy::Manual;
    c.manual_widen = 10.0;
    const int wide_good = count_reaching(run_experiment(c), 15, kDoubleIntegratorEta);
    return {good >= 8 && 10 - wide_good >= 5,
            "independence reached " + std::to_string(good) + "/10, 10x box failed " + std::to_string(10 - wide_good) + "/10"};
}

Outcome cart_pole() {
    ExperimentConfig c;
    c.plant = "cart_pole";
    c.repetitions = 10;
    c.budget = kCartPoleBudget;
    c.domain = DomainStrategy::Pca;
    c.adaptation = AdaptationKind::Dda;
    const auto dda = run_experiment(c);
    c.adaptation = AdaptationKind::None;
    const auto plain = run_experiment(c);
    const double early = median_at(dda, 10);
    const double dda_final = median_at(dda, kCartPoleBudget), plain_final = median_at(plain, kCartPoleBudget);
    return {early < 0.0 && dda_final <= plain_final,
            "median eta pca+dda at 10 = " + fmt(early) + "; final (" + std::to_string(kCartPoleBudget) +
                ") pca+dda = " + fmt(dda_final) + ", pca = " + fmt(plain_final)};
}

Outcome quadcopter() {
    ExperimentConfig c;
    c.plant = "quadcopter";
    c.repetitions = 10;
    c.budget = 30;
    c.domain = DomainStrategy::Pca;
    c.adaptation = AdaptationKind::Dda;
    const double dda = median_at(run_experiment(c), 30);
    c.domain = DomainStrategy::Rembo;
    c.adaptation = AdaptationKind::None;
    c.rembo_dim = 10;
    const double rembo = median_at(run_experiment(c), 30);
    return {dda < 0.0 && rembo > 0.0, "median eta pca+dda = " + fmt(dda) + ", rembo = " + fmt(rembo)};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Outcome determinism(const Paths& paths) {
    if (paths.cli.empty()) return {false, "no --cli given"};
    const fs::path dir = fs::path(paths.work_dir) / "determinism";
    fs::create_directories(dir);
    std::string outs[2];
    for (int i = 0; i < 2; ++i) {
        const fs::path out = dir / ("history_" + std::to_string(i) + ".jsonl");
        fs::remove(out);
        const std::string cmd = "\"" + paths.cli + "\" optimize --plant cart_pole --budget 6 --seed 17 --n_s 300 --adaptation dda --out \"" +
                                out.string() + "\"";
        if (std::system(cmd.c_str()) != 0) return {false, "cli run failed: " + cmd};
        outs[i] = slurp(out);
    }
    const bool same = !outs[0].empty() && outs[0] == outs[1];
    return {same, same ? std::to_string(outs[0].size()) + " identical bytes" : "histories differ"};
}

Outcome properties(const Paths& paths) {
    if (paths.property_binary.empty()) return {false, "no --property-binary given"};
    const std::string cmd = "\"" + paths.property_binary + "\" --gtest_brief=1";
    const int rc = std::system(cmd.c_str());
    return {rc == 0, "property binary exit status " + std::to_string(rc)};
}

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome(const Paths&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    int only = 0;
    Paths paths;
    paths.work_dir = (fs::temp_directory_path() / "lqrbo_acceptance").string();
    app.add_option("--criterion", only, "run one criterion (1-9); all when omitted");
    app.add_option("--cli", paths.cli, "path to the lqrbo executable");
    app.add_option("--property-binary", paths.property_binary, "path to the property test binary");
    app.add_option("--work-dir", paths.work_dir, "scratch directory");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria = {
        {1, "riccati oracle", 10, [](const Paths&) { return riccati_oracle(); }},
        {2, "gp gradient", 5, [](const Paths&) { return gp_gradient(); }},
        {3, "hadamard volume", 5, [](const Paths&) { return hadamard(); }},
        {4, "camel adaptation ordering", 15 * 60, [](const Paths&) { return camel_ordering(); }},
        {5, "double integrator", 5 * 60, [](const Paths&) { return double_integrator(); }},
        {6, "cart-pole", 15 * 60, [](const Paths&) { return cart_pole(); }},
        {7, "quadcopter", 45 * 60, [](const Paths&) { return quadcopter(); }},
        {8, "determinism", 60, determinism},
        {9, "property suites", 5 * 60, properties},
    };

    bool all = true;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(paths);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        all = all && pass;
        std::cout << "criterion " << c.id << " (" << c.name << "): " << (pass ? "PASS" : "FAIL") << "  " << o.detail << "; "
                  << fmt(secs) << " s of " << c.budget_s << " s" << (in_time ? "" : " (over time)") << std::endl;
    }
    return all ? 0 : 1;
}
