#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "hypomc/report.hpp"
#include "hypomc/zoo.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitAcceptance = 4;

struct CommonOpts {
    std::string config_path;
    std::int64_t paths_override = -1;
    std::int64_t seed_override = -1;
    int workers_override = -1;
    std::string out_dir;
    std::string format = "structured";
};

hypomc::io::ExperimentConfig load_with_overrides(const CommonOpts& opts) {
    hypomc::io::ExperimentConfig cfg = hypomc::io::load_config_file(opts.config_path);
    bool changed = false;
    if (opts.paths_override > 0) {
        cfg.paths = opts.paths_override;
        changed = true;
    }
    if (opts.seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(opts.seed_override);
        changed = true;
    }
    if (opts.workers_override > 0) {
        cfg.workers = opts.workers_override;
        changed = true;
    }
    if (opts.format == "csv") {
        cfg.per_path_csv = true;
        changed = true;
    }
    if (changed) {
        const auto canon = hypomc::io::canonical_json(cfg);
        cfg.canonical = canon.dump(2);
        cfg.config_hash = hypomc::fnv1a64_hex(canon.dump());
    }
    return cfg;
}

int cmd_zoo_list() {
    for (const auto& name : hypomc::zoo::zoo_names()) {
        const auto entry = hypomc::zoo::get_model(name);
        std::cout << name << "  (n=" << entry.model.n << ", r=" << entry.model.r << ")  "
                  << entry.description << "\n";
    }
    return kExitOk;
}

int cmd_simulate(const CommonOpts& opts) {
    const auto cfg = load_with_overrides(opts);
    const std::filesystem::path dir = opts.out_dir.empty() ? "." : opts.out_dir;
    std::filesystem::create_directories(dir);
    for (std::int64_t idx = 0; idx < cfg.paths; ++idx) {
        const auto driver =
            hypomc::sample_brownian(cfg.model.r, cfg.grid, cfg.seed, idx);
        const auto bundle = hypomc::integrate_flow_bundle(cfg.model, cfg.x0, driver, cfg.rule);
        char name[64];
        std::snprintf(name, sizeof name, "trajectory_%06lld.csv",
                      static_cast<long long>(idx));
        std::ofstream out(dir / name);
        hypomc::io::write_bundle_csv(out, bundle, cfg.grid);
    }
    std::cout << "wrote " << cfg.paths << " trajectory file(s) under " << dir.string()
              << "\n";
    return kExitOk;
}

int cmd_estimate(const CommonOpts& opts) {
    const auto cfg = load_with_overrides(opts);
    std::ofstream paths_csv;
    std::ostream* paths_out = nullptr;
    if (cfg.per_path_csv) {
        const std::filesystem::path dir = opts.out_dir.empty() ? "." : opts.out_dir;
        std::filesystem::create_directories(dir);
        paths_csv.open(dir / "paths.csv");
        paths_out = &paths_csv;
    }
    const auto report = hypomc::io::run_config(cfg, paths_out);
    const auto body = hypomc::io::report_to_json(report);
    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        std::ofstream out(std::filesystem::path(opts.out_dir) / "report.json");
        out << body.dump(2) << "\n";
    }
    std::cout << body.dump(2) << "\n";
    if (report.estimate.n_effective == 0) {
        std::cerr << "error: every path was excluded\n";
        return kExitNumerical;
    }
    return kExitOk;
}

int cmd_control(const CommonOpts& opts) {
    const auto cfg = load_with_overrides(opts);
    const auto stats = hypomc::io::control_statistics(cfg);
    std::cout << "strategy            " << hypomc::to_string(cfg.control.strategy) << "\n"
              << "paths               " << stats.n_paths << "\n"
              << "terminated          " << stats.terminated << " ("
              << 100.0 * stats.termination_rate << "%)\n"
              << "mean sigma'         " << stats.mean_sigma_prime << "\n"
              << "mean energy         " << stats.mean_energy << "\n"
              << "max energy ratio    " << stats.max_energy_ratio << "\n"
              << "max TV ratio        " << stats.max_tv_ratio << "\n"
              << "excluded            " << stats.excluded.total() << "\n";
    return kExitOk;
}

int cmd_validate(std::int64_t n_paths, int workers) {
    const auto outcome = hypomc::io::run_validation_suite(n_paths, workers, std::cout);
    std::cout << (outcome.all_ok ? "validation passed" : "validation FAILED") << "\n";
    return outcome.all_ok ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo derivative estimation for degenerate diffusions"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::int64_t validate_paths = 2000;
    int validate_workers = 1;

    auto add_common = [&](CLI::App* cmd, bool need_config = true) {
        auto* c = cmd->add_option("--config", opts.config_path, "experiment config (JSON)");
        if (need_config) c->required();
        cmd->add_option("--paths", opts.paths_override, "override path count");
        cmd->add_option("--seed", opts.seed_override, "override master seed");
        cmd->add_option("--workers", opts.workers_override, "override worker count");
        cmd->add_option("--out-dir", opts.out_dir, "output directory");
        cmd->add_option("--format", opts.format, "structured|csv");
    };

    auto* zoo_cmd = app.add_subcommand("zoo-list", "list built-in models");
    auto* sim_cmd = app.add_subcommand("simulate", "dump trajectories and flow bundles to CSV");
    add_common(sim_cmd);
    auto* est_cmd = app.add_subcommand("estimate", "run the configured estimator");
    add_common(est_cmd);
    auto* ctl_cmd = app.add_subcommand("control", "control strategy termination statistics");
    add_common(ctl_cmd);
    auto* val_cmd = app.add_subcommand("validate", "run the invariant suites");
    val_cmd->add_option("--paths", validate_paths, "paths per check");
    val_cmd->add_option("--workers", validate_workers, "worker count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (zoo_cmd->parsed()) return cmd_zoo_list();
        if (sim_cmd->parsed()) return cmd_simulate(opts);
        if (est_cmd->parsed()) return cmd_estimate(opts);
        if (ctl_cmd->parsed()) return cmd_control(opts);
        if (val_cmd->parsed()) return cmd_validate(validate_paths, validate_workers);
    } catch (const hypomc::io::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}
