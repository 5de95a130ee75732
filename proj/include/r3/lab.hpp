#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r3/pde.hpp"
#include "r3/rng.hpp"

namespace r3::lab {

using ad::Index;
using ad::Vector;
using pde::Box;
using pde::Points;

struct ObjectiveFunction {
    std::string name;
    std::function<double(std::span<const double>)> formula;  // as printed
    double offset = 0.0;  // added so the fitness is non-negative on the domain
    Box domain;
    std::vector<double> argmax;  // empty when unknown
    double max_value = 0.0;      // including the offset; meaningful when argmax is set

    double operator()(std::span<const double> p) const { return formula(p) + offset; }
    Vector evaluate(const Points& points) const;
};

// ackley, bohachevsky, drop_wave, egg_holder, holder_table, bukin, michalewicz
const std::vector<std::string>& objective_names();
ObjectiveFunction objective(const std::string& name);
ObjectiveFunction constant_objective(double value, const Box& domain);

struct FrozenStep {
    Index iteration = 0;  // 1-based
    Index retained = 0;
    Index resampled = 0;
    double tau = 0.0;
    std::optional<double> retained_mean;
    double population_mean = 0.0;
};

// Repeated R3 steps with the fitness fixed to `fn`. Step i records the
// population P_i, its threshold and the retained subset it produces.
std::vector<FrozenStep> frozen_r3_run(const ObjectiveFunction& fn, Index n, Index iterations, Rng& rng);

// (mean |f|^p)^(1/p) over `values`; p >= 1.
double lp_norm(std::span<const double> values, double p);
double lp_norm(const ObjectiveFunction& fn, double p, const Points& dense);

struct Theorem3Check {
    double lhs = 0.0;  // L2 loss of draws from q ~ |f|^k
    double rhs = 0.0;  // (L^{k+2} under uniform)^((k+2)/2) * sqrt(V / Z)
    double gap = 0.0;  // |lhs - rhs| / rhs
};

// Z and the uniform norms are estimated on `dense`; the left side uses
// `samples` categorical draws from `dense`. Throws UsageError when Z = 0.
Theorem3Check verify_theorem3(const ObjectiveFunction& fn, double k, const Points& dense, Index samples, Rng& rng);

void write_frozen_csv(const std::vector<FrozenStep>& series, const std::filesystem::path& path);
// Rows "p,value" for the dense-set levels; p = inf is the dense maximum.
void write_levels(const ObjectiveFunction& fn, const Points& dense, std::span<const double> ps,
                  const std::filesystem::path& path);

}  // namespace r3::lab
