#pragma once

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lqrbo/bo.hpp"
#include "lqrbo/domain.hpp"
#include "lqrbo/sysid.hpp"

namespace lqrbo {

using nlohmann::json;

inline json to_json_vector(const Eigen::VectorXd& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Row-major list of rows.
inline json to_json_matrix(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json_vector(m.row(r).transpose()));
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    if (j.empty()) return {};
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const Eigen::VectorXd row = vector_from_json(j.at(static_cast<std::size_t>(r)));
        if (row.size() != cols) throw std::invalid_argument("ragged matrix in JSON");
        m.row(r) = row.transpose();
    }
    return m;
}

inline json to_json(const ModelPosterior& p) {
    return {{"n_x", p.n_x},
            {"n_u", p.n_u},
            {"mean", to_json_vector(p.mean)},
            {"covariance", to_json_matrix(p.covariance)},
            {"noise_variance", to_json_vector(p.noise_variance)},
            {"rank_deficient", p.rank_deficient}};
}

inline ModelPosterior posterior_from_json(const json& j) {
    ModelPosterior p;
    p.n_x = j.at("n_x").get<int>();
    p.n_u = j.at("n_u").get<int>();
    p.mean = vector_from_json(j.at("mean"));
    p.covariance = matrix_from_json(j.at("covariance"));
    p.noise_variance = vector_from_json(j.at("noise_variance"));
    p.rank_deficient = j.value("rank_deficient", false);
    const auto n = static_cast<Eigen::Index>(p.n_x) * (p.n_x + p.n_u);
    if (p.mean.size() != n || p.covariance.rows() != n || p.covariance.cols() != n) {
        throw std::invalid_argument("posterior JSON: inconsistent dimensions");
    }
    return p;
}

inline json to_json(const DomainResult& d) {
    const auto& r = d.reparam;
    json active = json::array();
    for (bool a : r.active_dims) active.push_back(a);
    json out{{"kind", to_string(r.kind)},
             {"lower", to_json_vector(d.box.lower)},
             {"upper", to_json_vector(d.box.upper)},
             {"offset", to_json_vector(r.offset)},
             {"transform", to_json_matrix(r.transform)},
             {"scales", to_json_vector(r.scales)},
             {"active_dims", active}};
    if (r.kind == ReparamKind::Rembo) {
        out["clip_lower"] = to_json_vector(r.clip_lower);
        out["clip_upper"] = to_json_vector(r.clip_upper);
    }
    return out;
}

inline DomainResult domain_from_json(const json& j) {
    DomainResult d;
    d.box = BoxDomain(vector_from_json(j.at("lower")), vector_from_json(j.at("upper")));
    auto& r = d.reparam;
    r.kind = reparam_kind_from_string(j.at("kind").get<std::string>());
    r.offset = vector_from_json(j.at("offset"));
    r.transform = matrix_from_json(j.at("transform"));
    r.scales = vector_from_json(j.at("scales"));
    r.active_dims = j.at("active_dims").get<std::vector<bool>>();
    if (r.kind == ReparamKind::Rembo) {
        r.clip_lower = vector_from_json(j.at("clip_lower"));
        r.clip_upper = vector_from_json(j.at("clip_upper"));
    }
    return d;
}

inline json to_json(const HistoryRecord& h) {
    return {{"iter", h.iter},
            {"theta_tilde", to_json_vector(h.theta_tilde)},
            {"theta", to_json_vector(h.theta)},
            {"cost", h.cost},
            {"incumbent_cost", h.incumbent_cost},
            {"domain_lower", to_json_vector(h.domain_lower)},
            {"domain_upper", to_json_vector(h.domain_upper)}};
}

inline HistoryRecord history_record_from_json(const json& j) {
    return {j.at("iter").get<int>(),
            vector_from_json(j.at("theta_tilde")),
            vector_from_json(j.at("theta")),
            j.at("cost").get<double>(),
            j.at("incumbent_cost").get<double>(),
            vector_from_json(j.at("domain_lower")),
            vector_from_json(j.at("domain_upper"))};
}

/// One compact JSON document per line.
inline void write_history_jsonl(std::ostream& os, const std::vector<HistoryRecord>& history) {
    for (const auto& h : history) os << to_json(h).dump() << '\n';
}

inline std::vector<HistoryRecord> read_history_jsonl(std::istream& is) {
    std::vector<HistoryRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(history_record_from_json(json::parse(line)));
    }
    return out;
}

/// Header `t,x0..,u0..`; one row per time step, a blank line between episodes.
inline void write_trajectory_csv(std::ostream& os, const TrajectoryData& data) {
    os << "t";
    for (int i = 0; i < data.n_x; ++i) os << ",x" << i;
    for (int i = 0; i < data.n_u; ++i) os << ",u" << i;
    os << '\n' << std::setprecision(17);
    for (std::size_t e = 0; e < data.episodes.size(); ++e) {
        if (e > 0) os << '\n';
        const auto& ep = data.episodes[e];
        for (std::size_t t = 0; t < ep.states.size(); ++t) {
            os << static_cast<double>(t) * data.dt;
            for (int i = 0; i < data.n_x; ++i) os << ',' << ep.states[t](i);
            for (int i = 0; i < data.n_u; ++i) os << ',' << ep.inputs[t](i);
            os << '\n';
        }
    }
}

inline TrajectoryData read_trajectory_csv(std::istream& is) {
    TrajectoryData data;
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("trajectory CSV: missing header");
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) {
            if (!col.empty() && col[0] == 'x') ++data.n_x;
            else if (!col.empty() && col[0] == 'u') ++data.n_u;
        }
    }
    const int width = 1 + data.n_x + data.n_u;
    Episode current;
    std::vector<double> times;
    auto flush = [&] {
        if (!current.states.empty()) data.episodes.push_back(std::move(current));
        current = {};
    };
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") {
            flush();
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<int>(row.size()) != width) throw std::invalid_argument("trajectory CSV: wrong column count");
        if (current.states.empty()) times.clear();
        times.push_back(row[0]);
        if (times.size() == 2 && data.dt == 0.0) data.dt = times[1] - times[0];
        current.states.emplace_back(Eigen::Map<const Eigen::VectorXd>(row.data() + 1, data.n_x));
        current.inputs.emplace_back(Eigen::Map<const Eigen::VectorXd>(row.data() + 1 + data.n_x, data.n_u));
    }
    flush();
    return data;
}

template <typename T>
void write_file(const std::string& path, const T& writer) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    writer(os);
    if (!os) throw std::runtime_error("failed writing " + path);
}

inline json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return json::parse(is);
}

}  // namespace lqrbo
