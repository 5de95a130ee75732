#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "r3/diagnostics.hpp"
#include "r3/errors.hpp"
#include "r3/lab.hpp"
#include "r3/runner.hpp"
#include "r3/training.hpp"

namespace fs = std::filesystem;
using namespace r3;

namespace {

run::Pairs parse_sets(const std::vector<std::string>& sets) {
    std::string text;
    for (const std::string& s : sets) text += s + "\n";
    return run::parse_config_text(text, "--set");
}

int cmd_train(const std::string& config, const std::string& preset, const std::vector<std::string>& sets,
              const std::optional<std::uint64_t>& seed, const std::string& out, bool dry_run) {
    std::vector<run::Pairs> layers;
    if (!preset.empty()) layers.push_back(run::preset(preset));
    if (!config.empty()) layers.push_back(run::read_config_file(config));
    layers.push_back(run::env_overrides());
    layers.push_back(parse_sets(sets));
    if (seed) layers.push_back({{"run.seed", std::to_string(*seed)}});
    const run::ExperimentConfig cfg = run::resolve(layers);

    const run::RunOutcome r = run::run_experiment(cfg, out, dry_run);
    if (dry_run) {
        std::cout << "dry run: wrote " << (fs::path(out) / "manifest.txt").string() << "\n";
        return 0;
    }
    if (r.status != 0) {
        std::cerr << "training aborted at iteration " << *r.abort_iteration << "; see " << out << "/manifest.txt\n";
        return r.status;
    }
    if (r.rel_l2) std::printf("final rel-L2: %.4g %%\n", *r.rel_l2);
    if (r.miou) std::printf("final mIOU: %.4f\n", *r.miou);
    std::printf("failure windows: %ld\n", static_cast<long>(r.failure_windows));
    return 0;
}

int cmd_lab(std::vector<std::string> names, ad::Index n, ad::Index iterations, ad::Index dense_n, std::uint64_t seed,
            const std::string& out) {
    if (names.empty()) names = lab::objective_names();
    fs::create_directories(out);
    Rng root(seed);
    const std::vector<double> ps{1, 2, 4, 6, 8, 16, 32, 64};
    for (const std::string& name : names) {
        const lab::ObjectiveFunction f = lab::objective(name);
        Rng rng = root.stream(name);
        const pde::Points dense = pde::uniform_points(f.domain, dense_n, rng);
        const auto series = lab::frozen_r3_run(f, n, iterations, rng);
        lab::write_frozen_csv(series, fs::path(out) / (name + "_frozen.csv"));
        lab::write_levels(f, dense, ps, fs::path(out) / (name + "_levels.csv"));
        const double l4 = lab::lp_norm(f, 4, dense), l6 = lab::lp_norm(f, 6, dense);
        const ad::Vector v = f.evaluate(dense);
        std::printf("%-13s final retained mean %.6g  L4 %.6g  L6 %.6g  dense max %.6g\n", name.c_str(),
                    series.back().retained_mean.value_or(0.0), l4, l6, v.maxCoeff());
    }
    return 0;
}

int cmd_compare(const std::vector<std::string>& dirs) {
    std::vector<fs::path> paths(dirs.begin(), dirs.end());
    std::cout << run::format_summary(run::compare_runs(paths));
    return 0;
}

int cmd_export(const std::string& run_dir, std::string checkpoint, const std::string& out, bool residual,
               bool reference) {
    const run::ExperimentConfig cfg = run::load_config(fs::path(run_dir) / "manifest.txt");
    const pde::Problem problem = run::build_problem(cfg);
    const std::vector<int> counts = pde::evaluation_counts(problem);
    if (reference) {
        if (!pde::has_reference(problem)) throw UsageError("this problem has no reference solution");
        pde::save_reference_grid(diag::reference_field_grid(problem, counts), out);
        std::cout << "wrote " << out << "\n";
        return 0;
    }
    if (checkpoint.empty()) checkpoint = (fs::path(run_dir) / "final.ckpt").string();
    const net::FieldNetwork net = net::load_checkpoint(checkpoint);
    pde::save_reference_grid(residual ? diag::residual_field_grid(net, problem, counts)
                                      : diag::field_grid(net, problem, counts),
                             out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PINN training with retain-resample-release sampling"};
    app.require_subcommand(1);
    app.set_version_flag("--version", run::code_version());

    auto* train = app.add_subcommand("train", "train one experiment and write its artifact directory");
    std::string config, preset, out = "run";
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    bool dry_run = false, list = false;
    train->add_option("--config", config, "flat key = value config file")->check(CLI::ExistingFile);
    train->add_option("--preset", preset, "named preset applied before the config file");
    train->add_option("--set", sets, "extra key=value overrides (highest priority after --seed)");
    train->add_option("--seed", seed, "overrides run.seed");
    train->add_option("--out", out, "artifact directory");
    train->add_flag("--dry-run", dry_run, "resolve the config and write only the manifest");
    train->add_flag("--list-presets", list, "print preset names and exit");

    auto* labc = app.add_subcommand("lab", "frozen-field accumulation runs on test objectives");
    std::vector<std::string> objectives;
    ad::Index lab_n = 1000, lab_iters = 10000, lab_dense = 1000000;
    std::uint64_t lab_seed = 0;
    std::string lab_out = "lab";
    labc->add_option("--objective", objectives, "objective names (default: all)");
    labc->add_option("--n", lab_n, "population size");
    labc->add_option("--iterations", lab_iters, "frozen iterations");
    labc->add_option("--dense", lab_dense, "dense points for the L^p levels");
    labc->add_option("--seed", lab_seed);
    labc->add_option("--out", lab_out, "output directory");

    auto* cmp = app.add_subcommand("compare", "summarize finished run directories");
    std::vector<std::string> dirs;
    cmp->add_option("dirs", dirs, "run directories");

    auto* exp = app.add_subcommand("export-grid", "evaluate a checkpoint on the evaluation lattice");
    std::string run_dir, ckpt, grid_out = "field.grid";
    bool residual = false, reference = false;
    exp->add_option("--run", run_dir, "run directory holding manifest.txt")->required();
    exp->add_option("--checkpoint", ckpt, "checkpoint file (default: <run>/final.ckpt)");
    exp->add_option("--out", grid_out, "grid file to write");
    exp->add_flag("--residual", residual, "export |R| instead of u");
    exp->add_flag("--reference", reference, "export the reference solution instead of a network");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) {
            if (list) {
                for (const std::string& p : run::preset_names()) std::cout << p << "\n";
                return 0;
            }
            return cmd_train(config, preset, sets, seed, out, dry_run);
        }
        if (*labc) return cmd_lab(objectives, lab_n, lab_iters, lab_dense, lab_seed, lab_out);
        if (*cmp) return cmd_compare(dirs);
        if (*exp) return cmd_export(run_dir, ckpt, grid_out, residual, reference);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
