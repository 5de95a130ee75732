#include "r3/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "r3/errors.hpp"

namespace r3::train {

void adam_step(Vector& theta, const Vector& gradient, AdamState& s, double lr, const AdamConfig& c) {
    if (gradient.size() != theta.size()) throw UsageError("adam_step: gradient and parameters differ in size");
    if (s.m.size() != theta.size()) {
        s.m = Vector::Zero(theta.size());
        s.v = Vector::Zero(theta.size());
        s.steps = 0;
    }
    ++s.steps;
    s.m = c.beta1 * s.m + (1.0 - c.beta1) * gradient;
    s.v = c.beta2 * s.v + (1.0 - c.beta2) * gradient.cwiseAbs2();
    const double t = static_cast<double>(s.steps);
    const double c1 = 1.0 - std::pow(c.beta1, t);
    const double c2 = 1.0 - std::pow(c.beta2, t);
    theta.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + c.eps);
}

double step_lr(Index iteration, double base_lr, double rate, Index period) {
    if (period < 1) throw UsageError("step_lr: period must be positive");
    return base_lr * std::pow(rate, static_cast<double>(iteration / period));
}

void TrainConfig::validate() const {
    if (!(weights.r >= 0 && weights.ic >= 0 && weights.bc >= 0)) throw UsageError("loss weights must be non-negative");
    if (!(adam.lr > 0)) throw UsageError("train.lr must be positive");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1))
        throw UsageError("adam betas must lie in [0, 1)");
    if (!(adam.eps > 0)) throw UsageError("adam eps must be positive");
    if (!(decay_rate > 0 && decay_rate <= 1)) throw UsageError("train.decay_rate must lie in (0, 1]");
    if (decay_period < 1) throw UsageError("train.decay_period must be positive");
    if (max_iterations < 0) throw UsageError("train.iterations must be non-negative");
    if (log_period < 1) throw UsageError("train.log_period must be positive");
    if (snapshot_period < 0 || checkpoint_period < 0) throw UsageError("snapshot and checkpoint periods must be >= 0");
    if (chunk < 1) throw UsageError("train.chunk must be positive");
    sampler.validate();
    gate.validate();
}

LossEvaluation evaluate_loss(const net::FieldNetwork& net, const pde::Points& points, const pde::Problem& problem,
                             const LossWeights& weights, const gate::GateState* gate, bool with_gradient,
                             Index chunk) {
    if (chunk < 1) throw UsageError("evaluate_loss: chunk must be positive");
    const Index n = points.cols();
    const Index p = net.parameter_count();
    LossEvaluation ev;
    ev.residuals.resize(n);
    if (with_gradient) ev.gradient = Vector::Zero(p);
    if (gate && problem.box.time_axis < 0) throw UsageError("a causal gate needs a time axis");

    double r_sum = 0.0, gate_sum = 0.0;
    for (Index start = 0; start < n; start += chunk) {
        const Index m = std::min(chunk, n - start);
        ad::Tape tape(p);
        tape.set_grad_enabled(with_gradient && weights.r > 0);
        const net::JetOutput jo = net.forward(tape, points.middleCols(start, m), problem.residual_order);
        const ad::Var r = pde::residual(problem, jo);
        ev.residuals.segment(start, m) = tape.value(r).row(0).transpose();
        ad::Var sq = square(r);
        if (gate) {
            ad::Matrix g(1, m);
            for (Index j = 0; j < m; ++j) g(0, j) = gate::gate_value(points(problem.box.time_axis, start + j), *gate);
            gate_sum += g.sum();
            sq = sq * tape.constant(std::move(g));
        }
        const ad::Var chunk_sum = sum(sq);
        r_sum += chunk_sum.scalar();
        if (tape.grad_enabled()) ev.gradient += ad::loss_gradient(tape, chunk_sum * (weights.r / static_cast<double>(n)));
    }
    ev.loss.r = n > 0 ? r_sum / static_cast<double>(n) : 0.0;
    ev.mean_gate = gate && n > 0 ? gate_sum / static_cast<double>(n) : 1.0;

    auto conditions = [&](const std::vector<pde::Condition>& blocks, double weight) {
        double total = 0.0;
        for (const pde::Condition& c : blocks) {
            ad::Tape tape(p);
            tape.set_grad_enabled(with_gradient && weight > 0);
            const ad::Var l = pde::condition_loss(tape, net, problem, c);
            total += l.scalar();
            if (tape.grad_enabled()) ev.gradient += ad::loss_gradient(tape, l * weight);
        }
        return total;
    };
    ev.loss.ic = conditions(problem.ic, weights.ic);
    ev.loss.bc = conditions(problem.bc, weights.bc);
    ev.loss.total = weights.r * ev.loss.r + weights.ic * ev.loss.ic + weights.bc * ev.loss.bc;
    return ev;
}

LossComponents total_loss(const net::FieldNetwork& net, const pde::Points& points, const pde::Problem& problem,
                          const LossWeights& weights, const gate::GateState* gate) {
    return evaluate_loss(net, points, problem, weights, gate, false).loss;
}

namespace {

std::vector<std::string> axis_names(const pde::Problem& problem) {
    switch (problem.kind) {
        case pde::ProblemKind::eikonal: return {"x", "y"};
        case pde::ProblemKind::harmonic_ode: return {"x"};
        default: return {"x", "t"};
    }
}

std::string numbered(const char* stem, Index i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%08ld%s", stem, static_cast<long>(i), ext);
    return buf;
}

class RunLog {
public:
    explicit RunLog(const std::filesystem::path& dir) {
        if (dir.empty()) return;
        std::filesystem::create_directories(dir);
        path_ = dir / "diagnostics.csv";
        out_.open(path_);
        if (!out_) throw IoError("cannot write " + path_.string());
        out_ << diag::csv_header() << '\n';
        out_.flush();
    }
    void append(const diag::DiagnosticsRow& row) {
        if (!out_.is_open()) return;
        out_ << diag::csv_line(row) << '\n';
        out_.flush();
        if (!out_) throw IoError("failed writing " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

struct GridMetrics {
    pde::Points points;
    std::optional<Vector> reference;
};

}  // namespace

TrainResult train(const pde::Problem& problem, net::FieldNetwork net, const TrainConfig& config, const LogHook& hook) {
    config.validate();
    if (net.spec().input_dim != problem.box.dim()) throw UsageError("network input dimension does not match the problem");
    const Rng root(config.seed);
    sampling::Sampler sampler(config.sampler, problem.box, root);
    gate::GateState gate = config.gate;
    const bool causal = config.causal();
    if (causal) {
        if (problem.box.time_axis < 0) throw UsageError("causal R3 needs a time-dependent problem");
        gate.horizon = problem.box.upper.at(static_cast<std::size_t>(problem.box.time_axis));
    }
    AdamState adam;

    GridMetrics grid;
    if (config.grid_metrics) {
        grid.points = pde::evaluation_grid(problem);
        if (pde::has_reference(problem)) grid.reference = pde::reference_values(problem, grid.points);
    }
    const std::filesystem::path& out = config.out_dir;
    RunLog log(out);
    if (!out.empty() && config.checkpoint_period > 0) std::filesystem::create_directories(out / "checkpoints");
    if (!out.empty() && config.snapshot_period > 0) std::filesystem::create_directories(out / "snapshots");
    const std::vector<std::string> axes = axis_names(problem);
    std::filesystem::path last_checkpoint;

    TrainResult result;
    const sampling::ResidualFn dense_fn = [&](const pde::Points& p) -> Vector {
        return pde::residual_values(net, problem, p).cwiseAbs();
    };

    auto make_row = [&](Index i, double lr, const LossEvaluation& ev) {
        diag::DiagnosticsRow row;
        row.iteration = i;
        row.lr = lr;
        row.gamma = gate.gamma;
        row.loss = ev.loss.total;
        row.loss_r = ev.loss.r;
        row.loss_ic = ev.loss.ic;
        row.loss_bc = ev.loss.bc;
        if (ev.residuals.size() > 0) {
            row.mean_abs_r = ev.residuals.cwiseAbs().mean();
            row.max_abs_r = ev.residuals.cwiseAbs().maxCoeff();
        }
        if (config.grid_metrics) {
            const Vector r = pde::residual_values(net, problem, grid.points).cwiseAbs();
            const std::span<const double> rs(r.data(), static_cast<std::size_t>(r.size()));
            row.skewness = diag::skewness(rs);
            row.kurtosis = diag::kurtosis(rs);
            if (grid.reference) {
                const Vector u = net.values(grid.points);
                row.rel_l2 = diag::relative_l2(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                                               std::span<const double>(grid.reference->data(),
                                                                       static_cast<std::size_t>(grid.reference->size())));
            }
        }
        row.eval_counter = sampler.eval_counter();
        row.mean_gate = ev.mean_gate;
        row.population = sampler.population().size();
        row.retained = sampler.population().retained_count();
        row.uniform_fallback = sampler.last_fallback();
        result.series.push_back(row);
        log.append(row);
        if (hook) hook(row, net, sampler);
    };

    auto abort = [&](Index i, const std::string& why) {
        throw TrainingAborted("training aborted at iteration " + std::to_string(i) + ": " + why, i, last_checkpoint);
    };

    for (Index i = 0; i < config.max_iterations; ++i) {
        const double lr = step_lr(i, config.adam.lr, config.decay_rate, config.decay_period);
        LossEvaluation ev;
        try {
            sampler.prepare(i, dense_fn);
            ev = evaluate_loss(net, sampler.population().points, problem, config.weights, causal ? &gate : nullptr,
                               true, config.chunk);
        } catch (const NumericOverflow& e) {
            abort(i, e.what());
        }
        sampler.count_population_pass();
        if (!std::isfinite(ev.loss.total) || !ev.gradient.allFinite()) abort(i, "non-finite loss or gradient");

        if (i % config.log_period == 0) make_row(i, lr, ev);
        if (!out.empty() && config.checkpoint_period > 0 && i % config.checkpoint_period == 0) {
            last_checkpoint = out / "checkpoints" / numbered("iter", i, ".ckpt");
            net::save_checkpoint(net, last_checkpoint);
        }

        adam_step(net.theta(), ev.gradient, adam, lr, config.adam);
        if (causal) gate = gate::gate_update(gate, ev.loss.r);
        try {
            sampler.advance(i, std::span<const double>(ev.residuals.data(), static_cast<std::size_t>(ev.residuals.size())),
                            &gate, dense_fn);
        } catch (const NumericOverflow& e) {
            abort(i, e.what());
        }
        if (!out.empty() && config.snapshot_period > 0 && i % config.snapshot_period == 0)
            sampling::write_snapshot(sampler.population(), out / "snapshots" / numbered("iter", i, ".txt"), axes);
    }

    if (config.max_iterations > 0) {
        const Index n = config.max_iterations;
        LossEvaluation ev;
        try {
            ev = evaluate_loss(net, sampler.population().points, problem, config.weights, causal ? &gate : nullptr,
                               false, config.chunk);
        } catch (const NumericOverflow& e) {
            abort(n, e.what());
        }
        make_row(n, step_lr(n, config.adam.lr, config.decay_rate, config.decay_period), ev);
        if (!out.empty() && config.checkpoint_period > 0) {
            last_checkpoint = out / "checkpoints" / numbered("iter", n, ".ckpt");
            net::save_checkpoint(net, last_checkpoint);
        }
    }

    result.gate = gate;
    result.population = sampler.population();
    result.eval_counter = sampler.eval_counter();
    result.net = std::move(net);
    return result;
}

}  // namespace r3::train
