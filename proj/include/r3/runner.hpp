#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "r3/diagnostics.hpp"
#include "r3/network.hpp"
#include "r3/pde.hpp"
#include "r3/training.hpp"

namespace r3::run {

struct ProblemConfig {
    pde::ProblemKind kind = pde::ProblemKind::convection;
    double beta = 30.0;
    double k = 20.0;  // harmonic ODE
    double lower = 0.0;
    double upper = 0.0;  // ODE interval; lower == upper selects [-pi/2, pi/2]
    ad::Index n_ic = 256;
    ad::Index n_bc = 100;
    pde::AcDerivativeMatch ac_match = pde::AcDerivativeMatch::u_t;
    std::string reference;  // Allen-Cahn reference grid file, or "spectral"
    std::string geometry;   // Eikonal polygon file; empty: regular polygon below
    int polygon_sides = 256;
    double polygon_radius = 0.5;
};

struct ExperimentConfig {
    ProblemConfig problem;
    net::NetworkSpec network;  // network.seed follows run.seed
    train::TrainConfig train;
    diag::FailureThresholds thresholds;
    std::uint64_t seed = 0;
};

using Pairs = std::vector<std::pair<std::string, std::string>>;

// Every configuration key with its resolved value, in a fixed order.
Pairs to_pairs(const ExperimentConfig& config);
bool same_config(const ExperimentConfig& a, const ExperimentConfig& b);

// Defaults of the published setting for each problem kind.
ExperimentConfig defaults_for(pde::ProblemKind kind);

const std::vector<std::string>& preset_names();
Pairs preset(const std::string& name);

// Flat "key = value" lines; '#' starts a comment. Throws ConfigError with
// line and column on malformed lines and names unknown keys.
Pairs parse_config_text(const std::string& text, const std::string& origin = "<config>");
Pairs read_config_file(const std::filesystem::path& path);

// R3PINN_<KEY> with dots replaced by underscores, upper-cased.
std::string env_name(const std::string& key);
Pairs env_overrides();

// Layers are applied in order over defaults_for(problem.kind), where the
// kind is the last one named by any layer. The result is validated.
ExperimentConfig resolve(const std::vector<Pairs>& layers);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string manifest_text(const ExperimentConfig& config, const std::vector<std::string>& notes);

pde::Problem build_problem(const ExperimentConfig& config);
net::FieldNetwork build_network(const ExperimentConfig& config);

struct RunOutcome {
    int status = 0;  // 0 ok, 2 training aborted
    std::optional<double> rel_l2;
    std::optional<double> miou;
    ad::Index failure_windows = 0;
    std::optional<ad::Index> abort_iteration;
};

// Writes manifest.txt, diagnostics.csv, checkpoints, snapshots, field.grid
// and residual.grid under `out`. With dry_run only the manifest is written.
RunOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& out, bool dry_run);

struct RunSummary {
    std::string run;
    ad::Index iterations = 0;
    std::optional<double> rel_l2;
    std::uint64_t eval_counter = 0;
    ad::Index failure_windows = 0;
};

std::vector<RunSummary> compare_runs(const std::vector<std::filesystem::path>& dirs);
std::string format_summary(const std::vector<RunSummary>& rows);

std::string code_version();

}  // namespace r3::run
