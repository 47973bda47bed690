#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lqrbo/adaptation.hpp"
#include "lqrbo/bo.hpp"
#include "lqrbo/domain.hpp"
#include "lqrbo/io.hpp"
#include "lqrbo/linear_control.hpp"
#include "lqrbo/plants.hpp"
#include "lqrbo/random.hpp"
#include "lqrbo/sysid.hpp"

namespace lqrbo {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Parameterization { K, AB, QR };
enum class DomainStrategy { Independence, Pca, Rembo, Manual };
enum class AdaptationKind { None, Dda, Vd };
enum class InitialDesign { MapLqr, Random };

NLOHMANN_JSON_SERIALIZE_ENUM(Parameterization, {{Parameterization::K, "K"}, {Parameterization::AB, "AB"}, {Parameterization::QR, "QR"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DomainStrategy, {{DomainStrategy::Independence, "independence"},
                                              {DomainStrategy::Pca, "pca"},
                                              {DomainStrategy::Rembo, "rembo"},
                                              {DomainStrategy::Manual, "manual"}})
NLOHMANN_JSON_SERIALIZE_ENUM(AdaptationKind, {{AdaptationKind::None, "none"}, {AdaptationKind::Dda, "dda"}, {AdaptationKind::Vd, "vd"}})
NLOHMANN_JSON_SERIALIZE_ENUM(InitialDesign, {{InitialDesign::MapLqr, "map_lqr"}, {InitialDesign::Random, "random"}})

template <typename E>
E enum_from_string(const std::string& s) {
    const E value = json(s).get<E>();
    if (json(value).get<std::string>() != s) throw ConfigError("unknown value: " + s);
    return value;
}

/// Flat description of one experiment; mirrored field for field by the JSON config.
/// Optional fields fall back to per-plant defaults.
struct ExperimentConfig {
    std::string plant = "cart_pole";  ///< a plant name or "camel"
    Parameterization parameterization = Parameterization::K;
    DomainStrategy domain = DomainStrategy::Pca;
    AdaptationKind adaptation = AdaptationKind::None;
    InitialDesign initial_design = InitialDesign::MapLqr;

    double beta = 0.5;
    int n_s = 1000;
    double pca_truncation = 1e-6;
    int rembo_dim = 10;
    double rembo_scale = 0.0;  ///< 0 selects sqrt(rembo_dim)
    std::vector<double> manual_lower;
    std::vector<double> manual_upper;
    double manual_widen = 0.0;  ///< > 0: manual box = independence box widened by this factor
    double camel_box_size = 0.5;

    double gamma = 0.3;
    double boundary_tol = 0.01;
    double min_step_fraction = 0.05;
    double max_total_growth = 20.0;
    double vd_factor = 2.0;
    int vd_period = 3;

    double kappa = 2.0;
    int multistarts = 32;
    int local_steps = 100;
    int gp_restarts = 5;
    int initial_points = 3;

    int budget = 10;
    int repetitions = 1;
    std::uint64_t seed = 0;
    int threads = 1;
    int lqr_baseline_runs = 20;

    double prior_precision = 1e-6;
    std::optional<double> sysid_duration_s;
    std::optional<int> sysid_repetitions;
    std::optional<double> sysid_input_fraction;
    std::optional<double> sysid_noise;  ///< per-state process-noise variance during identification
    std::optional<double> process_noise;  ///< per-state process-noise variance during episodes
    std::optional<double> horizon_s;

    bool is_camel() const { return plant == "camel"; }

    void validate() const {
        if (!is_camel()) {
            const auto names = plant_names();
            if (std::find(names.begin(), names.end(), plant) == names.end()) throw ConfigError("unknown plant: " + plant);
        } else if (domain != DomainStrategy::Manual) {
            throw ConfigError("camel requires a manual domain");
        }
        if (domain == DomainStrategy::Rembo && parameterization != Parameterization::K) {
            throw ConfigError("rembo requires K parameterization");
        }
        if (parameterization == Parameterization::QR && domain != DomainStrategy::Manual) {
            throw ConfigError("QR parameterization requires a manual domain");
        }
        if (domain == DomainStrategy::Manual && !is_camel()) {
            const bool explicit_box = !manual_lower.empty() || !manual_upper.empty();
            if (explicit_box && manual_lower.size() != manual_upper.size()) throw ConfigError("manual bounds size mismatch");
            if (explicit_box && manual_widen > 0.0) throw ConfigError("give either manual bounds or manual_widen");
            if (manual_widen > 0.0 && parameterization == Parameterization::QR) {
                throw ConfigError("manual_widen is not available for QR");
            }
            if (!explicit_box && !(manual_widen > 0.0) && parameterization != Parameterization::QR) {
                throw ConfigError("manual domain needs bounds or manual_widen");
            }
        }
        if (is_camel() && !(camel_box_size > 0.0)) throw ConfigError("camel_box_size must be positive");
        if (!(beta > 0.0)) throw ConfigError("beta must be positive");
        if (n_s < 2) throw ConfigError("n_s must be >= 2");
        if (!(pca_truncation >= 0.0 && pca_truncation < 1.0)) throw ConfigError("pca_truncation must be in [0, 1)");
        if (rembo_dim < 1) throw ConfigError("rembo_dim must be >= 1");
        if (rembo_scale < 0.0) throw ConfigError("rembo_scale must be >= 0");
        if (!(kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
        if (multistarts < 0 || local_steps < 0 || gp_restarts < 0) throw ConfigError("optimizer budgets must be >= 0");
        if (initial_points < 1) throw ConfigError("initial_points must be >= 1");
        if (budget < 0) throw ConfigError("budget must be >= 0");
        if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
        if (threads < 1) throw ConfigError("threads must be >= 1");
        if (lqr_baseline_runs < 1) throw ConfigError("lqr_baseline_runs must be >= 1");
        if (!(prior_precision > 0.0)) throw ConfigError("prior_precision must be positive");
        if (sysid_duration_s && !(*sysid_duration_s > 0.0)) throw ConfigError("sysid_duration_s must be positive");
        if (sysid_repetitions && *sysid_repetitions < 1) throw ConfigError("sysid_repetitions must be >= 1");
        if (sysid_input_fraction && !(*sysid_input_fraction >= 0.0 && *sysid_input_fraction <= 1.0)) {
            throw ConfigError("sysid_input_fraction must be in [0, 1]");
        }
        if (sysid_noise && !(*sysid_noise >= 0.0)) throw ConfigError("sysid_noise must be >= 0");
        if (process_noise && !(*process_noise >= 0.0)) throw ConfigError("process_noise must be >= 0");
        if (horizon_s && !(*horizon_s > 0.0)) throw ConfigError("horizon_s must be positive");
        dda_config().validate();
        vd_config().validate();
    }

    DdaConfig dda_config() const { return {gamma, boundary_tol, min_step_fraction, max_total_growth}; }
    VdConfig vd_config() const { return {vd_factor, vd_period}; }

    AdaptationStrategy adaptation_strategy() const {
        switch (adaptation) {
            case AdaptationKind::Dda: return dda_config();
            case AdaptationKind::Vd: return vd_config();
            case AdaptationKind::None: break;
        }
        return {};
    }

    BoSettings bo_settings() const {
        BoSettings s;
        s.acquisition = {kappa, multistarts, local_steps};
        s.gp_restarts = gp_restarts;
        return s;
    }
};

namespace detail {

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
    j[key] = v ? json(*v) : json(nullptr);
}

template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& v) {
    if (!j.contains(key)) return;
    const auto& x = j.at(key);
    v = x.is_null() ? std::nullopt : std::optional<T>(x.get<T>());
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
    json j{{"plant", c.plant},
           {"parameterization", c.parameterization},
           {"domain", c.domain},
           {"adaptation", c.adaptation},
           {"initial_design", c.initial_design},
           {"beta", c.beta},
           {"n_s", c.n_s},
           {"pca_truncation", c.pca_truncation},
           {"rembo_dim", c.rembo_dim},
           {"rembo_scale", c.rembo_scale},
           {"manual_lower", c.manual_lower},
           {"manual_upper", c.manual_upper},
           {"manual_widen", c.manual_widen},
           {"camel_box_size", c.camel_box_size},
           {"gamma", c.gamma},
           {"boundary_tol", c.boundary_tol},
           {"min_step_fraction", c.min_step_fraction},
           {"max_total_growth", c.max_total_growth},
           {"vd_factor", c.vd_factor},
           {"vd_period", c.vd_period},
           {"kappa", c.kappa},
           {"multistarts", c.multistarts},
           {"local_steps", c.local_steps},
           {"gp_restarts", c.gp_restarts},
           {"initial_points", c.initial_points},
           {"budget", c.budget},
           {"repetitions", c.repetitions},
           {"seed", c.seed},
           {"threads", c.threads},
           {"lqr_baseline_runs", c.lqr_baseline_runs},
           {"prior_precision", c.prior_precision}};
    detail::put_optional(j, "sysid_duration_s", c.sysid_duration_s);
    detail::put_optional(j, "sysid_repetitions", c.sysid_repetitions);
    detail::put_optional(j, "sysid_input_fraction", c.sysid_input_fraction);
    detail::put_optional(j, "sysid_noise", c.sysid_noise);
    detail::put_optional(j, "process_noise", c.process_noise);
    detail::put_optional(j, "horizon_s", c.horizon_s);
    return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const json& j, ExperimentConfig c = {}) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const json known = to_json(c);
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown config key: " + key);
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    auto get_enum = [&](const char* key, auto& field) {
        if (j.contains(key)) field = enum_from_string<std::decay_t<decltype(field)>>(j.at(key).get<std::string>());
    };
    try {
        get("plant", c.plant);
        get_enum("parameterization", c.parameterization);
        get_enum("domain", c.domain);
        get_enum("adaptation", c.adaptation);
        get_enum("initial_design", c.initial_design);
        get("beta", c.beta);
        get("n_s", c.n_s);
        get("pca_truncation", c.pca_truncation);
        get("rembo_dim", c.rembo_dim);
        get("rembo_scale", c.rembo_scale);
        get("manual_lower", c.manual_lower);
        get("manual_upper", c.manual_upper);
        get("manual_widen", c.manual_widen);
        get("camel_box_size", c.camel_box_size);
        get("gamma", c.gamma);
        get("boundary_tol", c.boundary_tol);
        get("min_step_fraction", c.min_step_fraction);
        get("max_total_growth", c.max_total_growth);
        get("vd_factor", c.vd_factor);
        get("vd_period", c.vd_period);
        get("kappa", c.kappa);
        get("multistarts", c.multistarts);
        get("local_steps", c.local_steps);
        get("gp_restarts", c.gp_restarts);
        get("initial_points", c.initial_points);
        get("budget", c.budget);
        get("repetitions", c.repetitions);
        get("seed", c.seed);
        get("threads", c.threads);
        get("lqr_baseline_runs", c.lqr_baseline_runs);
        get("prior_precision", c.prior_precision);
        detail::get_optional(j, "sysid_duration_s", c.sysid_duration_s);
        detail::get_optional(j, "sysid_repetitions", c.sysid_repetitions);
        detail::get_optional(j, "sysid_input_fraction", c.sysid_input_fraction);
        detail::get_optional(j, "sysid_noise", c.sysid_noise);
        detail::get_optional(j, "process_noise", c.process_noise);
        detail::get_optional(j, "horizon_s", c.horizon_s);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return c;
}

/// 64-bit FNV-1a of the canonical config JSON, as 16 hex digits. The worker
/// count does not affect results and is left out.
inline std::string config_hash(const ExperimentConfig& c) {
    json j = to_json(c);
    j.erase("threads");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------- metrics

inline double normalized_performance(double J, double J_lqr) {
    if (!(J_lqr > 0.0)) throw std::invalid_argument("normalized_performance: J_lqr must be positive");
    return (J - J_lqr) / J_lqr;
}

/// r_t = |f_star - min_{s<=t} values_s|.
inline std::vector<double> regret_curve(const std::vector<double>& values, double f_star) {
    if (values.empty()) throw std::invalid_argument("regret_curve: empty input");
    std::vector<double> out;
    out.reserve(values.size());
    double best = std::numeric_limits<double>::infinity();
    for (double v : values) {
        best = std::min(best, v);
        out.push_back(std::abs(f_star - best));
    }
    return out;
}

/// Linear interpolation between order statistics, q in [0, 1].
inline double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return percentile(std::move(values), 0.5); }

struct MetricSeries {
    std::vector<double> median;
    std::vector<double> p25;
    std::vector<double> p75;

    std::size_t size() const { return median.size(); }
};

/// Elementwise percentiles; shorter curves are padded with their last value.
inline MetricSeries aggregate(const std::vector<std::vector<double>>& curves) {
    MetricSeries out;
    std::size_t len = 0;
    for (const auto& c : curves) len = std::max(len, c.size());
    for (std::size_t t = 0; t < len; ++t) {
        std::vector<double> column;
        for (const auto& c : curves) {
            if (!c.empty()) column.push_back(c[std::min(t, c.size() - 1)]);
        }
        out.median.push_back(percentile(column, 0.5));
        out.p25.push_back(percentile(column, 0.25));
        out.p75.push_back(percentile(column, 0.75));
    }
    return out;
}

inline void write_metric_csv(std::ostream& os, const MetricSeries& m) {
    os << "iter,median,p25,p75\n" << std::setprecision(17);
    for (std::size_t t = 0; t < m.size(); ++t) os << t << ',' << m.median[t] << ',' << m.p25[t] << ',' << m.p75[t] << '\n';
}

/// Incumbent cost after each iteration 0..last (iteration 0 is the initial design).
inline std::vector<double> incumbent_by_iteration(const std::vector<HistoryRecord>& history) {
    std::vector<double> out;
    for (const auto& h : history) {
        const auto it = static_cast<std::size_t>(h.iter);
        if (out.size() <= it) out.resize(it + 1, out.empty() ? h.incumbent_cost : out.back());
        out[it] = h.incumbent_cost;
    }
    return out;
}

// ---------------------------------------------------------------- camel

inline constexpr double kCamelOptimum = 0.0;

/// Square box of side `size`, center uniform in [-2, 2]^2, resampled until the
/// global optimum at the origin lies outside the closed box.
inline BoxDomain sample_camel_box(Rng& rng, double size = 0.5) {
    const Eigen::Vector2d half = Eigen::Vector2d::Constant(0.5 * size);
    const Eigen::VectorXd lo = Eigen::Vector2d::Constant(-2.0), hi = Eigen::Vector2d::Constant(2.0);
    for (;;) {
        const Eigen::VectorXd c = uniform_in(rng, lo, hi);
        BoxDomain box(c - half, c + half);
        if (!box.contains(Eigen::VectorXd(Eigen::Vector2d::Zero()))) return box;
    }
}

// ---------------------------------------------------------------- plant setup

/// Plant with its episode, after config overrides.
inline PlantSetup configured_plant(const ExperimentConfig& c) {
    PlantSetup s = make_plant(c.plant);
    if (c.process_noise) s.episode.noise_cov = Eigen::VectorXd::Constant(s.plant->state_dim(), *c.process_noise);
    if (c.horizon_s) s.episode.horizon_s = *c.horizon_s;
    return s;
}

/// Waypoint-following pilot for the quadcopter: an LQR on the hover
/// linearization tracks position and yaw targets held for equal time slices.
inline ExcitationPilot quadcopter_waypoint_pilot(const PlantModel& quad, double dt, double duration_s, int waypoints,
                                                 std::uint64_t seed) {
    const LinearDynamics lin = linearize_at_origin(quad, dt);
    const int nx = quad.state_dim(), nu = quad.input_dim();
    CostWeights w{Eigen::MatrixXd::Identity(nx, nx), Eigen::MatrixXd::Identity(nu, nu)};
    const GainMatrix K = dlqr(lin, w);
    Rng rng(seed);
    std::vector<Eigen::VectorXd> targets;
    const Eigen::Vector4d lo(-1.0, -1.0, -1.0, -deg2rad(90.0)), hi(1.0, 1.0, 1.0, deg2rad(90.0));
    for (int i = 0; i < waypoints; ++i) {
        const Eigen::VectorXd wp = uniform_in(rng, lo, hi);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(nx);
        x.head<3>() = wp.head<3>();
        x(8) = wp(3);
        targets.push_back(x);
    }
    const double slice = duration_s / waypoints;
    return [K, targets, slice](const Eigen::VectorXd& x, double t) -> Eigen::VectorXd {
        const auto idx = std::min(static_cast<std::size_t>(t / slice), targets.size() - 1);
        Eigen::VectorXd err = x - targets[idx];
        err(8) = std::remainder(err(8), 2.0 * std::numbers::pi);
        err.head<3>() = err.head<3>().cwiseMax(-1.0).cwiseMin(1.0);
        // position and velocity errors in the yaw-aligned frame
        const Eigen::Matrix3d to_heading = Eigen::AngleAxisd(-x(8), Eigen::Vector3d::UnitZ()).toRotationMatrix();
        err.segment<3>(0) = to_heading * err.segment<3>(0);
        err.segment<3>(3) = to_heading * err.segment<3>(3);
        return -K * err;
    };
}

/// Identification protocol for a plant, with config overrides applied.
///   double_integrator: uniform random torque for 5 s from rest
///   cart_pole: random force from upright until |phi| > 30 deg, five times
///   quadcopter: 50 s through ten random waypoints with small random perturbations
inline ExcitationProtocol excitation_protocol(const ExperimentConfig& c, const PlantSetup& s, std::uint64_t seed) {
    ExcitationProtocol p;
    p.dt = s.episode.dt;
    p.x0 = Eigen::VectorXd::Zero(s.plant->state_dim());
    p.noise_cov = s.episode.noise_cov;
    if (c.plant == "double_integrator") {
        p.duration_s = 5.0;
        p.repetitions = 1;
        p.input_fraction = 1.0;
    } else if (c.plant == "cart_pole") {
        p.duration_s = 5.0;
        p.repetitions = 5;
        p.input_fraction = 1.0;
        p.stop_state = 1;
        p.stop_threshold = deg2rad(30.0);
        p.x0_spread = Eigen::Vector4d(0.5, 0.0, 0.5, 0.5);
    } else if (c.plant == "quadcopter") {
        p.duration_s = 50.0;
        p.repetitions = 1;
        p.input_fraction = 0.1;
    }
    if (c.sysid_duration_s) p.duration_s = *c.sysid_duration_s;
    if (c.sysid_repetitions) p.repetitions = *c.sysid_repetitions;
    if (c.sysid_input_fraction) p.input_fraction = *c.sysid_input_fraction;
    if (c.sysid_noise) p.noise_cov = Eigen::VectorXd::Constant(s.plant->state_dim(), *c.sysid_noise);
    if (c.plant == "quadcopter") p.pilot = quadcopter_waypoint_pilot(*s.plant, p.dt, p.duration_s, 10, seed);
    return p;
}

/// Median cost of the LQR on the true linearization at the origin.
inline double nominal_lqr_cost(const PlantSetup& s, int runs, std::uint64_t seed) {
    const GainMatrix K = dlqr(linearize_at_origin(*s.plant, s.episode.dt), s.episode.weights);
    std::vector<double> costs;
    for (int i = 0; i < runs; ++i) {
        costs.push_back(rollout(*s.plant, K, s.episode, split_seed(seed, static_cast<std::uint64_t>(i))).cost);
    }
    return median(costs);
}

/// Seeds of one repetition, all split from the master seed.
struct RepetitionSeeds {
    std::uint64_t repetition, sysid, models, embedding, bo, rollouts, baseline, initial_design, pilot;

    static RepetitionSeeds make(std::uint64_t master, int repetition) {
        const std::uint64_t r = split_seed(master, static_cast<std::uint64_t>(repetition));
        return {r,
                split_seed(r, 0),
                split_seed(r, 1),
                split_seed(r, 2),
                split_seed(r, 3),
                split_seed(r, 4),
                split_seed(r, 5),
                split_seed(r, 6),
                split_seed(r, 7)};
    }
};

struct Identification {
    TrajectoryData data;
    ModelPosterior posterior;
};

inline Identification identify(const ExperimentConfig& c, const PlantSetup& s, const RepetitionSeeds& seeds) {
    const ExcitationProtocol protocol = excitation_protocol(c, s, seeds.pilot);
    Identification id;
    id.data = collect_excitation_data(*s.plant, protocol, seeds.sysid);
    id.posterior = fit_bayesian_linear_model(id.data, c.prior_precision);
    return id;
}

/// Parameter samples matching the parameterization: vec(K) rows for K,
/// row-major vec(A), vec(B) for AB.
inline GainSampleSet parameter_samples(const ExperimentConfig& c, const ModelPosterior& post, const CostWeights& w,
                                       std::uint64_t seed) {
    const auto models = sample_models(post, c.n_s, seed);
    if (c.parameterization == Parameterization::AB) {
        GainSampleSet set;
        set.samples.resize(static_cast<Eigen::Index>(models.size()), post.mean.size());
        for (std::size_t i = 0; i < models.size(); ++i) {
            set.samples.row(static_cast<Eigen::Index>(i)) = ab_params_from_model(models[i]).transpose();
        }
        return set;
    }
    return sample_gain_distribution(models, w);
}

/// Policy parameters of the LQR built from the MAP model.
inline Eigen::VectorXd map_policy_params(const ExperimentConfig& c, const ModelPosterior& post, const CostWeights& w) {
    switch (c.parameterization) {
        case Parameterization::K: return vec_row_major(dlqr(post.map_model(), w));
        case Parameterization::AB: return ab_params_from_model(post.map_model());
        case Parameterization::QR: return qr_params_from_weights(w);
    }
    return {};
}

/// Search domain for a policy-search configuration.
inline DomainResult build_domain(const ExperimentConfig& c, const ModelPosterior& post, const CostWeights& w,
                                 const RepetitionSeeds& seeds) {
    if (c.parameterization == Parameterization::QR) {
        const Eigen::VectorXd nominal = qr_params_from_weights(w);
        if (c.manual_lower.empty()) return manual_domain(nominal.array() - 2.0, nominal.array() + 2.0);
    }
    if (c.domain == DomainStrategy::Manual && !c.manual_lower.empty()) {
        const Eigen::VectorXd lo = Eigen::Map<const Eigen::VectorXd>(c.manual_lower.data(), static_cast<Eigen::Index>(c.manual_lower.size()));
        const Eigen::VectorXd hi = Eigen::Map<const Eigen::VectorXd>(c.manual_upper.data(), static_cast<Eigen::Index>(c.manual_upper.size()));
        const auto expected = c.parameterization == Parameterization::K   ? post.n_x * post.n_u
                              : c.parameterization == Parameterization::AB ? post.n_x * (post.n_x + post.n_u)
                                                                           : post.n_x + post.n_u;
        if (lo.size() != expected) throw ConfigError("manual bounds have the wrong dimension");
        return manual_domain(lo, hi);
    }
    const GainSampleSet samples = parameter_samples(c, post, w, seeds.models);
    switch (c.domain) {
        case DomainStrategy::Independence: return independence_domain(samples, c.beta);
        case DomainStrategy::Pca: return pca_domain(samples, c.beta, c.pca_truncation);
        case DomainStrategy::Rembo: {
            const BoxDomain clip = independence_box_absolute(independence_domain(samples, c.beta));
            const double scale = c.rembo_scale > 0.0 ? c.rembo_scale : std::sqrt(static_cast<double>(c.rembo_dim));
            if (c.rembo_dim > samples.dim()) throw ConfigError("rembo_dim exceeds the number of policy parameters");
            return rembo_embedding(samples.dim(), c.rembo_dim, samples.mean(), scale, seeds.embedding, clip.lower, clip.upper);
        }
        case DomainStrategy::Manual: {
            const BoxDomain abs = independence_box_absolute(independence_domain(samples, c.beta));
            const BoxDomain wide = widen(abs, c.manual_widen);
            return manual_domain(wide.lower, wide.upper);
        }
    }
    throw ConfigError("unsupported domain strategy");
}

/// Gain for policy parameters; throws RiccatiError when AB/QR synthesis fails.
inline GainMatrix gain_from_params(const ExperimentConfig& c, const Eigen::VectorXd& theta, const ModelPosterior& post,
                                   const CostWeights& w) {
    switch (c.parameterization) {
        case Parameterization::K: return unvec_row_major(theta, post.n_u, post.n_x);
        case Parameterization::AB: return gain_from_ab_params(theta, w);
        case Parameterization::QR: return gain_from_qr_params(theta, post.map_model());
    }
    return {};
}

// ---------------------------------------------------------------- experiments

struct RunRecord {
    int repetition = 0;
    std::uint64_t seed = 0;  ///< repetition seed
    std::string config_hash;
    double j_lqr = 0.0;         ///< baseline cost (policy search only)
    double initial_cost = 0.0;  ///< cost of the first initial-design point
    std::vector<HistoryRecord> history;
    std::vector<double> curve;  ///< eta (policy search) or regret (camel) per iteration
    BoxDomain initial_domain;
    BoxDomain final_domain;
    int failed_evaluations = 0;
};

inline json to_json(const RunRecord& r) {
    json hist = json::array();
    for (const auto& h : r.history) hist.push_back(to_json(h));
    return {{"repetition", r.repetition},
            {"seed", r.seed},
            {"config_hash", r.config_hash},
            {"j_lqr", r.j_lqr},
            {"initial_cost", r.initial_cost},
            {"curve", r.curve},
            {"initial_domain", {{"lower", to_json_vector(r.initial_domain.lower)}, {"upper", to_json_vector(r.initial_domain.upper)}}},
            {"final_domain", {{"lower", to_json_vector(r.final_domain.lower)}, {"upper", to_json_vector(r.final_domain.upper)}}},
            {"failed_evaluations", r.failed_evaluations},
            {"history", hist}};
}

inline std::vector<Eigen::VectorXd> random_design(const BoxDomain& box, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Eigen::VectorXd> pts;
    for (int i = 0; i < n; ++i) pts.push_back(uniform_in(rng, box.lower, box.upper));
    return pts;
}

inline int count_failures(const BoState& s) {
    return static_cast<int>(std::count_if(s.observations.begin(), s.observations.end(), [](const auto& o) { return o.failed; }));
}

/// Camel repetition: random off-optimum box, random initial design, regret curve.
inline RunRecord run_camel_repetition(const ExperimentConfig& c, int repetition) {
    const auto seeds = RepetitionSeeds::make(c.seed, repetition);
    Rng box_rng(seeds.embedding);
    const BoxDomain box = sample_camel_box(box_rng, c.camel_box_size);
    const auto reparam = AffineReparameterization::identity(Eigen::VectorXd::Zero(2), 0.5 * box.extent());
    const Objective objective = [](const Eigen::VectorXd& theta) -> std::optional<double> { return camel(theta); };

    BoState state = make_bo_state(box, reparam, c.bo_settings(), seeds.bo, objective,
                                  random_design(box, c.initial_points, seeds.initial_design));
    state = run_bo(std::move(state), objective, c.budget, c.adaptation_strategy());

    RunRecord r;
    r.repetition = repetition;
    r.seed = seeds.repetition;
    r.config_hash = config_hash(c);
    r.initial_cost = state.observations.front().cost;
    r.history = state.history;
    for (double v : incumbent_by_iteration(r.history)) r.curve.push_back(std::abs(kCamelOptimum - v));
    r.initial_domain = box;
    r.final_domain = state.domain;
    r.failed_evaluations = count_failures(state);
    return r;
}

/// Policy-search repetition: identification, baseline, domain, BO.
inline RunRecord run_policy_repetition(const ExperimentConfig& c, int repetition) {
    const auto seeds = RepetitionSeeds::make(c.seed, repetition);
    const PlantSetup s = configured_plant(c);
    const CostWeights& w = s.episode.weights;

    const Identification id = identify(c, s, seeds);
    const double j_lqr = nominal_lqr_cost(s, c.lqr_baseline_runs, seeds.baseline);
    const DomainResult dom = build_domain(c, id.posterior, w, seeds);

    const EpisodeConfig& episode = s.episode;

    auto counter = std::make_shared<std::uint64_t>(0);
    const Objective objective = [&, counter](const Eigen::VectorXd& theta) -> std::optional<double> {
        const std::uint64_t seed = split_seed(seeds.rollouts, (*counter)++);
        GainMatrix K;
        try {
            K = gain_from_params(c, theta, id.posterior, w);
        } catch (const RiccatiError&) {
            return std::nullopt;
        }
        if (!K.allFinite()) return std::nullopt;
        const auto res = rollout(*s.plant, K, episode, seed);
        if (res.diverged) return std::nullopt;
        return res.cost;
    };

    std::vector<Eigen::VectorXd> initial;
    if (c.initial_design == InitialDesign::MapLqr) {
        const Eigen::VectorXd theta_map = dom.reparam.kind == ReparamKind::Rembo
                                              ? Eigen::VectorXd(Eigen::VectorXd::Zero(dom.box.dim()))
                                              : from_policy_params(dom.reparam, map_policy_params(c, id.posterior, w));
        initial.push_back(theta_map);
    } else {
        initial = random_design(dom.box, c.initial_points, seeds.initial_design);
    }

    // Failures cost as much as the first initial point; if that one fails too, 10 J_lqr.
    BoState state = make_bo_state(dom.box, dom.reparam, c.bo_settings(), seeds.bo, objective, {initial.front()},
                                  10.0 * j_lqr);
    state.failure_cost = state.observations.front().cost;
    for (std::size_t i = 1; i < initial.size(); ++i) detail::record(state, dom.box.clamp(initial[i]), objective);
    if (initial.size() > 1) refresh_gp(state);
    state = run_bo(std::move(state), objective, c.budget, c.adaptation_strategy());

    RunRecord r;
    r.repetition = repetition;
    r.seed = seeds.repetition;
    r.config_hash = config_hash(c);
    r.j_lqr = j_lqr;
    r.initial_cost = state.observations.front().cost;
    r.history = state.history;
    for (double v : incumbent_by_iteration(r.history)) r.curve.push_back(normalized_performance(v, j_lqr));
    r.initial_domain = dom.box;
    r.final_domain = state.domain;
    r.failed_evaluations = count_failures(state);
    return r;
}

inline RunRecord run_repetition(const ExperimentConfig& c, int repetition) {
    return c.is_camel() ? run_camel_repetition(c, repetition) : run_policy_repetition(c, repetition);
}

/// All repetitions of a configuration. Repetitions are independent and may run on
/// `threads` workers; the result order is the repetition index.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& c) {
    c.validate();
    std::vector<RunRecord> records(static_cast<std::size_t>(c.repetitions));
    const int workers = std::min(c.threads, c.repetitions);
    if (workers <= 1) {
        for (int r = 0; r < c.repetitions; ++r) records[static_cast<std::size_t>(r)] = run_repetition(c, r);
        return records;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int r = t; r < c.repetitions; r += workers) records[static_cast<std::size_t>(r)] = run_repetition(c, r);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return records;
}

/// Same as run_policy_search_experiment for camel and plant configs alike.
inline std::vector<RunRecord> run_policy_search_experiment(const ExperimentConfig& c) { return run_experiment(c); }

inline MetricSeries aggregate(const std::vector<RunRecord>& records) {
    std::vector<std::vector<double>> curves;
    for (const auto& r : records) curves.push_back(r.curve);
    return aggregate(curves);
}

}  // namespace lqrbo
