#pragma once

#include <span>

#include "r3/autodiff.hpp"

namespace r3::gate {

enum class GateKind { tanh, relu_tanh };

struct GateState {
    double gamma = -0.5;
    double alpha = 5.0;
    double eta = 1e-3;
    double epsilon = 20.0;
    double delta_max = 0.1;
    double horizon = 1.0;  // T; gates read t / T
    GateKind kind = GateKind::tanh;
    double loss = 0.0;  // last causally weighted residual loss

    void validate() const;
};

// tanh gate: (1 - tanh(alpha (t/T - gamma))) / 2.
// relu_tanh gate: max(0, -tanh(alpha (t/T - gamma))).
double gate_value(double t, const GateState& state);
ad::Vector gate_values(std::span<const double> times, const GateState& state);

// mean(R^2 g(t)).
double causal_pde_loss(std::span<const double> residuals, std::span<const double> times, const GateState& state);

// eta * min(exp(-epsilon L_g), delta_max).
double gate_increment(const GateState& state, double weighted_loss);
GateState gate_update(const GateState& state, double weighted_loss);

}  // namespace r3::gate
