// Command-line front end: precompute, weights, drape, simulate, metrics,
// gradcheck, make-fixtures. Exit codes: 0 success, 1 numerical failure,
// 2 usage/config error.

#include "drape/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "configuration file (key = value sections)");
    cmd->add_option("-s,--set", args.overrides,
                    "override a config key, e.g. --set solver.max_iterations=100")
        ->take_all();
}

drape::RunConfig resolve_config(const CommonArgs& args) {
    drape::RunConfig cfg = args.config_path.empty()
                               ? drape::RunConfig::defaults()
                               : drape::RunConfig::from_file(args.config_path);
    cfg.apply_overrides(args.overrides);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"drape: garment draping by per-frame energy minimization"};
    app.require_subcommand(1);
    app.footer(drape::config_key_help());

    CommonArgs precompute_args, weights_args, drape_args, simulate_args, metrics_args,
        gradcheck_args;

    CLI::App* precompute =
        app.add_subcommand("precompute", "build and store the garment rest-state cache");
    add_common(precompute, precompute_args);

    CLI::App* weights =
        app.add_subcommand("weights", "compute garment blend weights and store the cache");
    add_common(weights, weights_args);

    CLI::App* drape_cmd = app.add_subcommand("drape", "static equilibrium drape (no inertia)");
    add_common(drape_cmd, drape_args);

    CLI::App* simulate =
        app.add_subcommand("simulate", "run the pose sequence through the integrator");
    add_common(simulate, simulate_args);

    CLI::App* metrics =
        app.add_subcommand("metrics", "recompute metrics for frames already on disk");
    add_common(metrics, metrics_args);

    std::string gradcheck_term = "all";
    int gradcheck_trials = 20;
    std::uint64_t gradcheck_seed = 20240501;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "compare analytic gradients against finite differences");
    add_common(gradcheck, gradcheck_args);
    gradcheck->add_option("--term", gradcheck_term,
                          "term to check: strain|gravity|collision|bending|inertia|inext|edge|all");
    gradcheck->add_option("--trials", gradcheck_trials, "random states per term");
    gradcheck->add_option("--seed", gradcheck_seed, "RNG seed");

    std::string fixtures_out = "fixtures";
    int fixtures_grid = 10;
    CLI::App* fixtures = app.add_subcommand("make-fixtures", "generate the test asset set");
    fixtures->add_option("--out", fixtures_out, "output directory");
    fixtures->add_option("--grid-n", fixtures_grid, "grid cloth resolution (vertices per side)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (precompute->parsed()) {
            const auto r = drape::cmd_precompute(resolve_config(precompute_args));
            std::printf("precompute: %d vertices, %d edges, total mass %.6g kg\n", r.vertices,
                        r.edges, r.total_mass);
        } else if (weights->parsed()) {
            const auto r = drape::cmd_weights(resolve_config(weights_args));
            std::printf("weights: %d rows, max row-sum deviation %.3e\n", r.rows,
                        r.max_row_sum_deviation);
        } else if (drape_cmd->parsed()) {
            const auto r = drape::cmd_drape(resolve_config(drape_args));
            std::printf("drape: eps_e=%.4f%% eps_a=%.4f%% eps_c=%.4f%%\n",
                        r.metrics.mean.eps_edge, r.metrics.mean.eps_area,
                        r.metrics.mean.eps_collision);
        } else if (simulate->parsed()) {
            const auto r = drape::cmd_simulate(resolve_config(simulate_args));
            std::printf("simulate: %ld frames, final eps_e=%.4f%% eps_a=%.4f%% eps_c=%.4f%%\n",
                        r.frames, r.metrics.frames.back().eps_edge,
                        r.metrics.frames.back().eps_area, r.metrics.frames.back().eps_collision);
        } else if (metrics->parsed()) {
            const auto m = drape::cmd_metrics(resolve_config(metrics_args));
            std::printf("metrics: %zu frames, mean eps_e=%.4f%% eps_a=%.4f%% eps_c=%.4f%%\n",
                        m.frames.size(), m.mean.eps_edge, m.mean.eps_area, m.mean.eps_collision);
        } else if (gradcheck->parsed()) {
            const auto report = drape::cmd_gradcheck(resolve_config(gradcheck_args),
                                                     gradcheck_term, gradcheck_trials,
                                                     gradcheck_seed);
            for (const auto& t : report.terms)
                std::printf("gradcheck %-10s max_rel_error=%.3e probes=%d excluded=%d %s\n",
                            t.term.c_str(), t.max_rel_error, t.probes, t.excluded,
                            t.pass ? "PASS" : "FAIL");
            if (!report.all_pass) return 1;
        } else if (fixtures->parsed()) {
            drape::cmd_make_fixtures(fixtures_out, fixtures_grid);
            std::printf("make-fixtures: wrote asset set to %s\n", fixtures_out.c_str());
        }
    } catch (const drape::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 1;
    } catch (const drape::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
