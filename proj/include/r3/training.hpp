#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "r3/diagnostics.hpp"
#include "r3/gate.hpp"
#include "r3/network.hpp"
#include "r3/pde.hpp"
#include "r3/sampling.hpp"

namespace r3::train {

using ad::Index;
using ad::Vector;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Vector m, v;
    std::uint64_t steps = 0;
};

// Bias-corrected Adam update of theta in place.
void adam_step(Vector& theta, const Vector& gradient, AdamState& state, double lr, const AdamConfig& config = {});

// base * rate^floor(iteration / period).
double step_lr(Index iteration, double base_lr, double rate = 0.9, Index period = 5000);

struct LossWeights {
    double r = 1.0;
    double ic = 100.0;
    double bc = 100.0;
};

struct TrainConfig {
    LossWeights weights;
    Index max_iterations = 30000;
    AdamConfig adam;
    double decay_rate = 0.9;
    Index decay_period = 5000;
    sampling::SamplerConfig sampler;
    gate::GateState gate;
    std::uint64_t seed = 0;
    Index log_period = 100;
    Index snapshot_period = 0;    // 0 disables population snapshots
    Index checkpoint_period = 0;  // 0 disables checkpoints
    Index chunk = 512;            // collocation points per gradient tape
    bool grid_metrics = true;     // skewness, kurtosis and rel-L2 on the evaluation lattice
    std::filesystem::path out_dir;  // empty: nothing is written

    void validate() const;
    bool causal() const { return sampler.kind == sampling::SamplerKind::causal_r3; }
};

struct LossComponents {
    double total = 0.0;
    double r = 0.0;  // plain or causally weighted residual loss
    double ic = 0.0;
    double bc = 0.0;
};

struct LossEvaluation {
    LossComponents loss;
    Vector residuals;  // at each collocation point
    Vector gradient;   // empty unless requested
    double mean_gate = 1.0;
};

// Weighted loss over the collocation `points` plus the problem's fixed
// initial and boundary data. With a gate, the residual term is mean(R^2 g).
LossEvaluation evaluate_loss(const net::FieldNetwork& net, const pde::Points& points, const pde::Problem& problem,
                             const LossWeights& weights, const gate::GateState* gate, bool with_gradient,
                             Index chunk = 512);

LossComponents total_loss(const net::FieldNetwork& net, const pde::Points& points, const pde::Problem& problem,
                          const LossWeights& weights, const gate::GateState* gate = nullptr);

// Raised when the loss or its gradient goes non-finite.
class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(const std::string& what, Index iteration, std::filesystem::path last_checkpoint)
        : std::runtime_error(what), iteration_(iteration), last_checkpoint_(std::move(last_checkpoint)) {}
    Index iteration() const noexcept { return iteration_; }
    const std::filesystem::path& last_checkpoint() const noexcept { return last_checkpoint_; }

private:
    Index iteration_;
    std::filesystem::path last_checkpoint_;
};

struct TrainResult {
    net::FieldNetwork net;
    diag::Series series;
    gate::GateState gate;
    sampling::Population population;
    std::uint64_t eval_counter = 0;
};

// Called after every log row with the network the row describes.
using LogHook = std::function<void(const diag::DiagnosticsRow&, const net::FieldNetwork&, const sampling::Sampler&)>;

// One iteration: residuals on the population, loss, Adam step, gate update
// (causal only), sampler step. Rows are logged every log_period iterations
// from the pre-step network, plus one final row for the returned network.
TrainResult train(const pde::Problem& problem, net::FieldNetwork net, const TrainConfig& config,
                  const LogHook& hook = {});

}  // namespace r3::train
