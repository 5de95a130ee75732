#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "r3/gate.hpp"
#include "r3/pde.hpp"
#include "r3/rng.hpp"

namespace r3::sampling {

using pde::Box;
using pde::Points;
using ad::Index;
using ad::Vector;

enum class Provenance : std::uint8_t { retained = 0, resampled = 1 };

struct Population {
    Points points;
    Vector fitness;  // fitness at the current parameters, once evaluated
    std::vector<Provenance> provenance;
    double tau = 0.0;
    std::uint64_t eval_counter = 0;

    Index size() const { return points.cols(); }
    Index retained_count() const;
};

// Arithmetic mean; throws UsageError when empty.
double threshold(std::span<const double> fitness);

Vector r3_fitness(std::span<const double> residuals);
Vector causal_fitness(std::span<const double> residuals, std::span<const double> times, const gate::GateState& gate);

// n uniform points, all marked resampled.
Population initial_population(const Box& box, Index n, Rng& rng);

// Keeps points with fitness > mean (strict) in their original order, then
// appends uniform replacements for the rest. Retained points carry their
// fitness; replacements get fitness 0 until evaluated.
Population r3_step(const Population& pop, std::span<const double> fitness, const Box& box, Rng& rng);

Points fixed_sampler(const Box& box, Index n, Rng& rng);
Points dynamic_sampler(const Box& box, Index n, Rng& rng);

struct DenseSet {
    Points points;
    static DenseSet uniform(const Box& box, Index n, Rng& rng);
    Index size() const { return points.cols(); }
};

// Indices of the n largest |values|, ties to the lower index, in rank order.
std::vector<Index> top_indices(std::span<const double> values, Index n);

Points rar_g_step(const Points& train, const DenseSet& dense, std::span<const double> residuals, Index m);

struct DrawResult {
    Points points;
    bool uniform_fallback = false;  // every weight was zero
};

// n categorical draws with replacement, P(i) proportional to |R_i|^k.
DrawResult residual_draw(const DenseSet& dense, std::span<const double> residuals, double k, Index n, Rng& rng);
DrawResult rad_step(const DenseSet& dense, std::span<const double> residuals, double k, Index n, Rng& rng);
DrawResult rar_d_step(const Points& train, const DenseSet& dense, std::span<const double> residuals, double k,
                      Index m, Rng& rng);

Points linf_topk(const DenseSet& dense, std::span<const double> residuals, Index n);

// ---------------------------------------------------------------------------
// Sampler registry driven by the training loop.

// lattice: a fixed equispaced grid of n points (n must be a perfect power of
// the dimension).
enum class SamplerKind { fixed, dynamic, r3, causal_r3, rar_g, rad, rar_d, linf, lattice };

std::string to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(const std::string& name);

struct SamplerConfig {
    SamplerKind kind = SamplerKind::r3;
    Index n = 1000;             // N_r
    double k = 1.0;             // residual power (RAD, RAR-D)
    Index m = 1;                // points added per event (RAR-G, RAR-D)
    Index period = 100;         // K, iterations between dense evaluations
    Index dense_size = 100000;  // |P_dense|

    void validate() const;
    bool uses_dense() const;
};

// Absolute residuals at arbitrary points under the current parameters.
using ResidualFn = std::function<Vector(const Points&)>;

class Sampler {
public:
    Sampler(const SamplerConfig& config, const Box& box, const Rng& rng);

    const SamplerConfig& config() const noexcept { return config_; }
    const Population& population() const noexcept { return pop_; }
    const DenseSet& dense() const noexcept { return dense_; }
    std::uint64_t eval_counter() const noexcept { return pop_.eval_counter; }
    bool last_fallback() const noexcept { return fallback_; }

    // Called before residuals are evaluated at iteration i. Only the L-inf
    // sampler acts here: it selects the top-N_r points of the dense set.
    void prepare(Index iteration, const ResidualFn& dense_residuals);

    // Records that residuals were evaluated on the whole population.
    void count_population_pass();

    // Consumes this iteration's residuals (on population().points) and moves
    // to the next population. `gate` is required for causal R3.
    void advance(Index iteration, std::span<const double> residuals, const gate::GateState* gate,
                 const ResidualFn& dense_residuals);

private:
    Vector dense_pass(const ResidualFn& f);
    void replace_points(Points pts);

    SamplerConfig config_;
    Box box_;
    Rng rng_;
    Population pop_;
    DenseSet dense_;
    bool fallback_ = false;
};

// Cost accounting for growing-set samplers: residual
// evaluations over `iterations` steps when the set starts at `initial`,
// grows by `m` every `period` steps, and a dense pass of `dense` points runs
// once per completed period.
std::uint64_t growing_set_cost(std::uint64_t initial, std::uint64_t m, std::uint64_t period, std::uint64_t iterations,
                               std::uint64_t dense);

// Text snapshot: one row per point, coordinates then fitness then provenance.
void write_snapshot(const Population& pop, const std::filesystem::path& path, std::span<const std::string> axis_names);

}  // namespace r3::sampling
