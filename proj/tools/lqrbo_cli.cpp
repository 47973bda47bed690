#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lqrbo/lqrbo.hpp"

namespace fs = std::filesystem;
using namespace lqrbo;

namespace {

/// One `--<key>` flag per config field; values are collected as text and
/// converted using the type of the field's default.
class ConfigFlags {
public:
    void attach(CLI::App& app) {
        app.add_option("--config", config_path_, "JSON config file");
        const json defaults = to_json(ExperimentConfig{});
        for (const auto& [key, value] : defaults.items()) {
            app.add_option("--" + key, values_[key], "override config field " + key);
        }
    }

    ExperimentConfig resolve() const {
        ExperimentConfig c;
        if (!config_path_.empty()) c = config_from_json(read_json_file(config_path_));
        return apply(c);
    }

    /// Flag values on top of `c`.
    ExperimentConfig apply(ExperimentConfig c) const {
        const json defaults = to_json(ExperimentConfig{});
        json overrides = json::object();
        for (const auto& [key, text] : values_) {
            if (text.empty()) continue;
            overrides[key] = parse_value(defaults.at(key), text);
        }
        c = config_from_json(overrides, c);
        c.validate();
        return c;
    }

private:
    static json parse_value(const json& like, const std::string& text) {
        if (like.is_string()) return text;
        if (like.is_array()) {
            json arr = json::array();
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) arr.push_back(std::stod(item));
            return arr;
        }
        if (like.is_number_unsigned()) return std::stoull(text);
        return json::parse(text);
    }

    std::string config_path_;
    std::map<std::string, std::string> values_;
};

void ensure_parent(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

int cmd_list_plants() {
    for (const auto& name : plant_names()) {
        const PlantSetup s = make_plant(name);
        std::cout << name << " state_dim=" << s.plant->state_dim() << " input_dim=" << s.plant->input_dim()
                  << " dt=" << s.episode.dt << '\n';
    }
    std::cout << "camel state_dim=2 (synthetic)\n";
    return 0;
}

int cmd_sysid(const ExperimentConfig& c, int repetition, const std::string& csv, const std::string& posterior) {
    if (c.is_camel()) throw ConfigError("sysid needs a plant");
    const PlantSetup s = configured_plant(c);
    const Identification id = identify(c, s, RepetitionSeeds::make(c.seed, repetition));
    if (!csv.empty()) {
        ensure_parent(csv);
        write_file(csv, [&](std::ostream& os) { write_trajectory_csv(os, id.data); });
    }
    ensure_parent(posterior);
    write_file(posterior, [&](std::ostream& os) { os << to_json(id.posterior).dump(2) << '\n'; });
    std::cerr << "transitions: " << id.data.transition_count() << (id.posterior.rank_deficient ? " (rank deficient)" : "")
              << '\n';
    return 0;
}

int cmd_domain(const ExperimentConfig& c, int repetition, const std::string& posterior_path, const std::string& out) {
    if (c.is_camel()) throw ConfigError("domain needs a plant");
    const PlantSetup s = configured_plant(c);
    const auto seeds = RepetitionSeeds::make(c.seed, repetition);
    const ModelPosterior post = posterior_path.empty() ? identify(c, s, seeds).posterior
                                                       : posterior_from_json(read_json_file(posterior_path));
    const DomainResult d = build_domain(c, post, s.episode.weights, seeds);
    ensure_parent(out);
    write_file(out, [&](std::ostream& os) { os << to_json(d).dump(2) << '\n'; });
    return 0;
}

int cmd_optimize(const ExperimentConfig& c, int repetition, const std::string& out, const std::string& record) {
    const RunRecord r = run_repetition(c, repetition);
    ensure_parent(out);
    write_file(out, [&](std::ostream& os) { write_history_jsonl(os, r.history); });
    if (!record.empty()) {
        ensure_parent(record);
        write_file(record, [&](std::ostream& os) { os << to_json(r).dump() << '\n'; });
    }
    std::cerr << (c.is_camel() ? "final regret: " : "final eta: ") << r.curve.back() << '\n';
    return 0;
}

int cmd_benchmark(const std::vector<std::string>& configs, const ConfigFlags& flags, const std::string& out_dir) {
    std::vector<std::pair<std::string, ExperimentConfig>> suite;
    if (configs.empty()) {
        suite.emplace_back("run", flags.resolve());
    }
    for (const auto& path : configs) {
        suite.emplace_back(fs::path(path).stem().string(), flags.apply(config_from_json(read_json_file(path))));
    }
    for (const auto& [label, c] : suite) {
        const fs::path dir = fs::path(out_dir) / label;
        fs::create_directories(dir);
        const auto records = run_experiment(c);
        for (const auto& r : records) {
            char name[32];
            std::snprintf(name, sizeof name, "run_%03d.jsonl", r.repetition);
            write_file((dir / name).string(), [&](std::ostream& os) { write_history_jsonl(os, r.history); });
        }
        write_file((dir / "records.jsonl").string(), [&](std::ostream& os) {
            for (const auto& r : records) os << to_json(r).dump() << '\n';
        });
        const MetricSeries m = aggregate(records);
        write_file((dir / "aggregate.csv").string(), [&](std::ostream& os) { write_metric_csv(os, m); });
        write_file((dir / "config.json").string(), [&](std::ostream& os) { os << to_json(c).dump(2) << '\n'; });
        std::cerr << label << ": final median " << m.median.back() << " [" << m.p25.back() << ", " << m.p75.back()
                  << "]\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian optimization of linear feedback policies with model-based search domains"};
    app.require_subcommand(1);

    auto* list = app.add_subcommand("list-plants", "List the available plants");

    int repetition = 0;
    std::string csv, posterior_out = "posterior.json";
    ConfigFlags sysid_flags;
    auto* sysid = app.add_subcommand("sysid", "Collect excitation data and fit the model posterior");
    sysid_flags.attach(*sysid);
    sysid->add_option("--repetition", repetition, "repetition index for seeding");
    sysid->add_option("--out-csv", csv, "trajectory CSV output");
    sysid->add_option("--out-posterior", posterior_out, "posterior JSON output");

    std::string posterior_in, domain_out = "domain.json";
    ConfigFlags domain_flags;
    auto* domain = app.add_subcommand("domain", "Construct the search domain");
    domain_flags.attach(*domain);
    domain->add_option("--repetition", repetition, "repetition index for seeding");
    domain->add_option("--posterior", posterior_in, "posterior JSON (identifies the plant when omitted)");
    domain->add_option("--out", domain_out, "domain JSON output");

    std::string history_out = "history.jsonl", record_out;
    ConfigFlags optimize_flags;
    auto* optimize = app.add_subcommand("optimize", "Run a single optimization");
    optimize_flags.attach(*optimize);
    optimize->add_option("--repetition", repetition, "repetition index for seeding");
    optimize->add_option("--out", history_out, "JSON-lines history output");
    optimize->add_option("--record", record_out, "full run record output");

    std::vector<std::string> suite;
    std::string out_dir = "results";
    ConfigFlags bench_flags;
    auto* bench = app.add_subcommand("benchmark", "Run all repetitions of one or more configurations");
    bench_flags.attach(*bench);
    bench->add_option("--suite", suite, "config files, one experiment each");
    bench->add_option("--out-dir", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);
    try {
        if (list->parsed()) return cmd_list_plants();
        if (sysid->parsed()) return cmd_sysid(sysid_flags.resolve(), repetition, csv, posterior_out);
        if (domain->parsed()) return cmd_domain(domain_flags.resolve(), repetition, posterior_in, domain_out);
        if (optimize->parsed()) return cmd_optimize(optimize_flags.resolve(), repetition, history_out, record_out);
        if (bench->parsed()) return cmd_benchmark(suite, bench_flags, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
