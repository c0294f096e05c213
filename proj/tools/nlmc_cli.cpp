// Command-line runner: nlmc_cli <subcommand> --config FILE --out DIR
// Exit codes: 0 ok, 1 runtime failure, 2 configuration or usage error.

#include "nlmc/nlmc.hpp"

#include <CLI11.hpp>

#include <iostream>

#ifndef NLMC_DEFAULT_CONFIG_DIR
#define NLMC_DEFAULT_CONFIG_DIR "configs"
#endif

namespace {

using nlmc::ExperimentConfig;
using nlmc::fs::path;

nlohmann::json dispatch_solver(const ExperimentConfig& c, const path& out, const path& stencils,
                               const path& predictions, bool with_reference) {
    if (c.solver.mode == "time") return nlmc::run_time(c, out);
    if (c.solver.mode == "nonlinear") return nlmc::run_nonlinear(c, out, stencils, predictions);
    return nlmc::run_steady(c, out, with_reference);
}

path output_dir(const std::string& flag, const ExperimentConfig& c) {
    if (!flag.empty()) return flag;
    if (!c.output.empty()) return c.output;
    return path("out") / c.name;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlocal multicontinua upscaling with RVE-based transmissibilities"};
    app.require_subcommand(1);

    std::string config, out, reference, candidate, stencils, predictions, name, config_dir = NLMC_DEFAULT_CONFIG_DIR;

    auto with_config = [&](CLI::App* sub) {
        sub->add_option("--config", config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (default: config output, else out/<name>)");
    };
    auto* solve_fine = app.add_subcommand("solve-fine", "fine-grid reference solution");
    with_config(solve_fine);
    auto* build_basis = app.add_subcommand("build-basis", "local multicontinua basis and auxiliary transmissibilities");
    with_config(build_basis);
    auto* upscale = app.add_subcommand("upscale", "RVE-based coarse operators and transmissibilities");
    with_config(upscale);
    auto* solve_coarse = app.add_subcommand("solve-coarse", "coarse solve in the configured solver mode");
    with_config(solve_coarse);
    solve_coarse->add_option("--stencils", stencils, "dataset container with the stencil inputs");
    solve_coarse->add_option("--predictions", predictions, "container of predicted transmissibilities");
    auto* gen_dataset = app.add_subcommand("gen-dataset", "transmissibility samples from a nonlinear run");
    with_config(gen_dataset);
    auto* compare = app.add_subcommand("compare", "difference metrics of two vector files");
    compare->add_option("--reference", reference, "reference vector")->required()->check(CLI::ExistingFile);
    compare->add_option("--candidate", candidate, "candidate vector")->required()->check(CLI::ExistingFile);
    compare->add_option("--out", out, "metrics file (default: stdout)");
    auto* run_example = app.add_subcommand("run-example", "shipped example configurations");
    run_example->add_option("--name", name, "example name")->required()->check(CLI::IsMember({"ex1", "ex2", "nonlinear"}));
    run_example->add_option("--config-dir", config_dir, "directory holding <name>.json");
    run_example->add_option("--out", out, "output directory (default: out/<name>)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (compare->parsed()) {
            const auto m = nlmc::compare_vectors(nlmc::io::read_vector(reference), nlmc::io::read_vector(candidate));
            if (out.empty())
                std::cout << m.dump(2) << '\n';
            else
                nlmc::io::write_json(out, m);
            return 0;
        }
        if (run_example->parsed()) config = (path(config_dir) / (name + ".json")).string();
        const ExperimentConfig c = nlmc::load_config(config);
        const path dir = output_dir(out, c);
        if ((stencils.empty()) != (predictions.empty()))
            throw nlmc::ConfigError("--predictions: requires --stencils (and vice versa)");
        if (!predictions.empty() && c.solver.mode != "nonlinear")
            throw nlmc::ConfigError("solver.mode: predictions need a nonlinear configuration");
        if (gen_dataset->parsed() && c.solver.mode != "nonlinear")
            throw nlmc::ConfigError("solver.mode: gen-dataset needs a nonlinear configuration");

        nlohmann::json m;
        if (solve_fine->parsed()) m = nlmc::run_solve_fine(c, dir);
        if (build_basis->parsed()) m = nlmc::run_build_basis(c, dir);
        if (upscale->parsed()) m = nlmc::run_upscale(c, dir);
        if (solve_coarse->parsed()) m = dispatch_solver(c, dir, stencils, predictions, false);
        if (gen_dataset->parsed()) m = nlmc::run_gen_dataset(c, dir);
        if (run_example->parsed()) m = dispatch_solver(c, dir, {}, {}, true);
        std::cout << m.dump(2) << '\n' << "artifacts: " << dir.string() << '\n';
        return 0;
    } catch (const nlmc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const nlmc::SolverError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
