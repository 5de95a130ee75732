#include "r3/gate.hpp"

#include <algorithm>
#include <cmath>

#include "r3/errors.hpp"

namespace r3::gate {

void GateState::validate() const {
    if (!(alpha > 0.0)) throw UsageError("gate alpha must be positive");
    if (!(eta > 0.0)) throw UsageError("gate learning rate must be positive");
    if (!(epsilon >= 0.0)) throw UsageError("gate tolerance must be non-negative");
    if (!(delta_max > 0.0 && delta_max <= 1.0)) throw UsageError("gate delta_max must lie in (0, 1]");
    if (!(horizon > 0.0)) throw UsageError("gate horizon must be positive");
}

double gate_value(double t, const GateState& s) {
    const double z = std::tanh(s.alpha * (t / s.horizon - s.gamma));
    if (s.kind == GateKind::relu_tanh) return std::max(0.0, -z);
    return (1.0 - z) / 2.0;
}

ad::Vector gate_values(std::span<const double> times, const GateState& state) {
    ad::Vector g(static_cast<ad::Index>(times.size()));
    for (std::size_t i = 0; i < times.size(); ++i) g(static_cast<ad::Index>(i)) = gate_value(times[i], state);
    return g;
}

double causal_pde_loss(std::span<const double> residuals, std::span<const double> times, const GateState& state) {
    if (residuals.size() != times.size()) throw UsageError("causal_pde_loss: length mismatch");
    if (residuals.empty()) throw UsageError("causal_pde_loss: no residuals");
    std::vector<double> terms(residuals.size());
    for (std::size_t i = 0; i < residuals.size(); ++i)
        terms[i] = residuals[i] * residuals[i] * gate_value(times[i], state);
    return ad::pairwise_sum(terms) / static_cast<double>(terms.size());
}

double gate_increment(const GateState& state, double weighted_loss) {
    if (!(weighted_loss >= 0.0)) throw UsageError("gate update needs a non-negative loss");
    return state.eta * std::min(std::exp(-state.epsilon * weighted_loss), state.delta_max);
}

GateState gate_update(const GateState& state, double weighted_loss) {
    GateState next = state;
    next.gamma += gate_increment(state, weighted_loss);
    next.loss = weighted_loss;
    return next;
}

}  // namespace r3::gate
