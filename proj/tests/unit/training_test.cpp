#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "r3/training.hpp"
#include "test_support.hpp"

using namespace r3;
using ad::Index;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("r3_train_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

train::TrainConfig short_run(sampling::SamplerKind kind, Index iterations) {
    train::TrainConfig c;
    c.max_iterations = iterations;
    c.sampler.kind = kind;
    c.sampler.n = 200;
    c.log_period = 10;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("step learning rate schedule") {
    CHECK(train::step_lr(0, 1e-3) == 1e-3);
    CHECK(train::step_lr(4999, 1e-3) == 1e-3);
    CHECK(train::step_lr(5000, 1e-3) == doctest::Approx(0.9e-3).epsilon(1e-15));
    CHECK(train::step_lr(12000, 1e-3) == doctest::Approx(0.81e-3).epsilon(1e-15));
    CHECK(train::step_lr(12000, 1e-3, 1.0) == 1e-3);
}

TEST_CASE("adam step") {
    ad::Vector theta = (ad::Vector(3) << 1.0, -2.0, 0.5).finished();
    train::AdamState s;
    ad::Vector same = theta;
    train::adam_step(same, ad::Vector::Zero(3), s, 1e-3);
    CHECK((same.array() == theta.array()).all());

    train::AdamState fresh;
    ad::Vector t1 = theta;
    const ad::Vector g = (ad::Vector(3) << 4.0, -0.25, 1e-3).finished();
    train::adam_step(t1, g, fresh, 1e-3);
    for (Index i = 0; i < 3; ++i) {
        const double expected = -1e-3 * std::abs(g(i)) / (std::abs(g(i)) + 1e-8) * (g(i) > 0 ? 1 : -1);
        CHECK(t1(i) - theta(i) == doctest::Approx(expected).epsilon(1e-9));
    }

    // Scalar reference recursion over several steps.
    train::AdamState a, b;
    ad::Vector x = theta, y = theta;
    double m = 0, v = 0, ref = theta(0);
    for (int k = 1; k <= 20; ++k) {
        const ad::Vector grad = ad::Vector::Constant(3, std::sin(k * 0.7));
        train::adam_step(x, grad, a, 0.01);
        train::adam_step(y, grad, b, 0.01);
        m = 0.9 * m + 0.1 * grad(0);
        v = 0.999 * v + 0.001 * grad(0) * grad(0);
        ref -= 0.01 * (m / (1 - std::pow(0.9, k))) / (std::sqrt(v / (1 - std::pow(0.999, k))) + 1e-8);
    }
    CHECK((x.array() == y.array()).all());
    CHECK(x(0) == doctest::Approx(ref).epsilon(1e-13));
    CHECK_THROWS_AS(train::adam_step(x, ad::Vector::Zero(2), a, 0.01), UsageError);
}

TEST_CASE("total loss examples") {
    Rng rng(3);
    const pde::Problem conv = pde::convection(30.0, 100, 100, rng);
    const pde::Points pts = pde::uniform_points(conv.box, 500, rng);
    const train::LossWeights w;

    const train::LossComponents exact = train::total_loss(testing::sine_wave({1.0, -30.0}), pts, conv, w);
    CHECK(exact.total <= 1e-8);

    // The zero network: residual 0, periodic mismatch 0, ic term 100 * mean(sin^2).
    const net::NetworkSpec spec = testing::small_spec(2, 6, 2, ad::Activation::tanh, 1);
    const net::FieldNetwork zero(spec, ad::Vector::Zero(net::parameter_count(spec)));
    const train::LossComponents z = train::total_loss(zero, pts, conv, w);
    double oracle = 0;
    for (Index j = 0; j < conv.ic[0].size(); ++j) oracle += std::pow(std::sin(conv.ic[0].points(0, j)), 2);
    oracle *= 100.0 / static_cast<double>(conv.ic[0].size());
    CHECK(z.r == 0.0);
    CHECK(z.bc == 0.0);
    CHECK(z.total == doctest::Approx(oracle).epsilon(1e-12));

    Rng big(4);
    const pde::Problem wide = pde::convection(30.0, 4000, 10, big);
    CHECK(std::abs(train::total_loss(zero, pts, wide, w).total - 50.0) < 2.5);

    // lambda_r = 0 leaves only the fixed data terms.
    Rng nr(6);
    const net::FieldNetwork rnd = testing::random_net(spec, nr);
    const train::LossWeights no_r{0.0, 100.0, 100.0};
    const pde::Points other = pde::uniform_points(conv.box, 77, rng);
    CHECK(train::total_loss(rnd, pts, conv, no_r).total == train::total_loss(rnd, other, conv, no_r).total);

    const train::LossComponents c = train::total_loss(rnd, pts, conv, w);
    CHECK(c.r >= 0);
    CHECK(c.ic >= 0);
    CHECK(c.bc >= 0);
    CHECK(c.total == w.r * c.r + w.ic * c.ic + w.bc * c.bc);
}

TEST_CASE("loss gradient matches finite differences and ignores chunking") {
    Rng rng(8);
    const pde::Problem conv = pde::convection(5.0, 20, 20, rng);
    const pde::Points pts = pde::uniform_points(conv.box, 60, rng);
    const net::NetworkSpec spec = testing::small_spec(2, 5, 2, ad::Activation::tanh, 1);
    Rng nr(9);
    net::FieldNetwork net = testing::random_net(spec, nr, 0.7);
    gate::GateState g;
    g.gamma = 0.3;

    const std::vector<const gate::GateState*> gates{nullptr, &g};
    for (const gate::GateState* gp : gates) {
        const train::LossEvaluation ev = train::evaluate_loss(net, pts, conv, {}, gp, true, 512);
        const train::LossEvaluation chunked = train::evaluate_loss(net, pts, conv, {}, gp, true, 7);
        CHECK(testing::rel_err(chunked.gradient, ev.gradient) <= 1e-13);
        CHECK(chunked.loss.total == doctest::Approx(ev.loss.total).epsilon(1e-14));

        ad::Vector fd(net.parameter_count());
        const double h = 1e-6;
        for (Index k = 0; k < fd.size(); ++k) {
            net::FieldNetwork plus = net, minus = net;
            plus.theta()(k) += h;
            minus.theta()(k) -= h;
            fd(k) = (train::total_loss(plus, pts, conv, {}, gp).total - train::total_loss(minus, pts, conv, {}, gp).total) /
                    (2 * h);
        }
        CHECK(testing::rel_err(ev.gradient, fd) <= 1e-6);
    }

    const train::LossEvaluation gated = train::evaluate_loss(net, pts, conv, {}, &g, false);
    const train::LossEvaluation plain = train::evaluate_loss(net, pts, conv, {}, nullptr, false);
    CHECK(gated.loss.r <= plain.loss.r);
    CHECK(gated.mean_gate < 1.0);
    std::vector<double> times(static_cast<std::size_t>(pts.cols()));
    for (Index j = 0; j < pts.cols(); ++j) times[static_cast<std::size_t>(j)] = pts(1, j);
    const std::span<const double> rs(plain.residuals.data(), static_cast<std::size_t>(plain.residuals.size()));
    CHECK(gated.loss.r == doctest::Approx(gate::causal_pde_loss(rs, times, g)).epsilon(1e-13));
}

TEST_CASE("training with no iterations returns the initial network") {
    Rng rng(1);
    const pde::Problem conv = pde::convection(30.0, 50, 50, rng);
    const net::FieldNetwork net = net::FieldNetwork::init(testing::small_spec(2, 8, 2, ad::Activation::tanh, 3));
    const train::TrainResult r = train::train(conv, net, short_run(sampling::SamplerKind::r3, 0));
    CHECK(r.series.empty());
    CHECK((r.net.theta().array() == net.theta().array()).all());
}

TEST_CASE("short runs reduce the loss and are bit reproducible") {
    Rng rng(1);
    const pde::Problem conv = pde::convection(1.0, 50, 50, rng);
    const net::FieldNetwork net = net::FieldNetwork::init(testing::small_spec(2, 10, 2, ad::Activation::tanh, 3));
    for (auto kind : {sampling::SamplerKind::fixed, sampling::SamplerKind::r3, sampling::SamplerKind::causal_r3,
                      sampling::SamplerKind::rad}) {
        train::TrainConfig c = short_run(kind, 200);
        c.sampler.dense_size = 500;
        c.sampler.period = 50;
        const auto d1 = scratch("det1"), d2 = scratch("det2");
        c.out_dir = d1;
        const train::TrainResult a = train::train(conv, net, c);
        c.out_dir = d2;
        const train::TrainResult b = train::train(conv, net, c);
        CHECK(a.series.size() == 21);
        CHECK(a.series == b.series);
        CHECK(slurp(d1 / "diagnostics.csv") == slurp(d2 / "diagnostics.csv"));
        CHECK(diag::read_csv(d1 / "diagnostics.csv") == a.series);
        CHECK((a.net.theta().array() == b.net.theta().array()).all());
        CHECK(a.series.back().loss < 0.5 * a.series.front().loss);
        CHECK(a.series.back().rel_l2.has_value());
        std::filesystem::remove_all(d1);
        std::filesystem::remove_all(d2);
    }
}

TEST_CASE("counter, gate and artifacts during training") {
    Rng rng(1);
    const pde::Problem conv = pde::convection(1.0, 50, 50, rng);
    const net::FieldNetwork net = net::FieldNetwork::init(testing::small_spec(2, 8, 2, ad::Activation::tanh, 3));

    train::TrainConfig c = short_run(sampling::SamplerKind::causal_r3, 120);
    c.snapshot_period = 50;
    c.checkpoint_period = 60;
    c.out_dir = scratch("artifacts");
    int hooks = 0;
    const train::TrainResult r = train::train(conv, net, c, [&](const diag::DiagnosticsRow&, const net::FieldNetwork&,
                                                               const sampling::Sampler&) { ++hooks; });
    CHECK(hooks == static_cast<int>(r.series.size()));
    CHECK(r.eval_counter == 120u * 200u);
    for (std::size_t i = 1; i < r.series.size(); ++i) CHECK(r.series[i].gamma > r.series[i - 1].gamma);
    CHECK(r.gate.gamma > -0.5);
    CHECK(r.gate.gamma - (-0.5) <= 120 * 1e-4 + 1e-15);
    CHECK(std::filesystem::exists(c.out_dir / "snapshots" / "iter_00000100.txt"));
    CHECK(std::filesystem::exists(c.out_dir / "checkpoints" / "iter_00000060.ckpt"));
    const net::FieldNetwork last = net::load_checkpoint(c.out_dir / "checkpoints" / "iter_00000120.ckpt");
    CHECK((last.theta().array() == r.net.theta().array()).all());
    std::filesystem::remove_all(c.out_dir);

    train::TrainConfig g = short_run(sampling::SamplerKind::rar_g, 1000);
    g.sampler.n = 1;
    g.sampler.dense_size = 10000;
    g.grid_metrics = false;
    g.log_period = 1000;
    const train::TrainResult rg = train::train(conv, net, g);
    CHECK(rg.eval_counter == sampling::growing_set_cost(1, 1, 100, 1000, 10000));
    CHECK(rg.population.size() == 11);
}

TEST_CASE("non-finite parameters abort training") {
    Rng rng(1);
    const pde::Problem conv = pde::convection(1.0, 20, 20, rng);
    net::FieldNetwork net = net::FieldNetwork::init(testing::small_spec(2, 4, 2, ad::Activation::tanh, 3));
    net.theta()(0) = std::numeric_limits<double>::quiet_NaN();
    train::TrainConfig c = short_run(sampling::SamplerKind::r3, 10);
    c.out_dir = scratch("abort");
    try {
        train::train(conv, net, c);
        FAIL("expected an abort");
    } catch (const train::TrainingAborted& e) {
        CHECK(e.iteration() == 0);
        CHECK(e.last_checkpoint().empty());
    }
    CHECK(slurp(c.out_dir / "diagnostics.csv") == diag::csv_header() + "\n");
    std::filesystem::remove_all(c.out_dir);

    train::TrainConfig bad = short_run(sampling::SamplerKind::r3, 10);
    bad.decay_rate = 1.5;
    CHECK_THROWS_AS(train::train(conv, net, bad), UsageError);
}
