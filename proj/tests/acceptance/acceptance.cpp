// Acceptance runner: `r3_acceptance [--out DIR] ID...` prints one
// "criterion N ...: PASS|FAIL" line per requested id and exits non-zero when
// any of them fails.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "r3/autodiff.hpp"
#include "r3/diagnostics.hpp"
#include "r3/errors.hpp"
#include "r3/gate.hpp"
#include "r3/lab.hpp"
#include "r3/network.hpp"
#include "r3/runner.hpp"
#include "r3/sampling.hpp"
#include "r3/training.hpp"

namespace fs = std::filesystem;
using namespace r3;
using ad::Index;
using ad::Vector;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        detail += (detail.empty() ? "" : "; ") + std::string(ok ? "" : "FAILED ") + what;
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string list(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt("%.3g", v[i]);
    return s + "]";
}

run::ExperimentConfig config(const std::string& preset, run::Pairs extra) {
    return run::resolve({run::preset(preset), std::move(extra)});
}

struct Trained {
    run::RunOutcome outcome;
    diag::Series series;
    fs::path dir;
};

Trained train_run(const run::ExperimentConfig& cfg, const fs::path& dir) {
    fs::remove_all(dir);
    Trained t;
    t.dir = dir;
    t.outcome = run::run_experiment(cfg, dir, false);
    t.series = diag::read_csv(dir / "diagnostics.csv");
    std::printf("  run %s: status %d, final rel-L2 %s\n", dir.filename().c_str(), t.outcome.status,
                t.outcome.rel_l2 ? fmt("%.4g%%", *t.outcome.rel_l2).c_str() : "-");
    std::fflush(stdout);
    return t;
}

double final_rel(const Trained& t) {
    return t.outcome.status == 0 && t.outcome.rel_l2 ? *t.outcome.rel_l2 : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------

Verdict convection_beta30(const fs::path& out) {
    Verdict v;
    std::vector<double> r3, fixed;
    for (int seed : {0, 1, 2}) {
        const run::Pairs p{{"train.iterations", "30000"}, {"run.seed", std::to_string(seed)}};
        r3.push_back(final_rel(train_run(config("convection-r3", p), out / ("r3_seed" + std::to_string(seed)))));
        fixed.push_back(final_rel(train_run(config("convection-fixed", p), out / ("fixed_seed" + std::to_string(seed)))));
    }
    v.require(median(r3) <= 10.0, "R3 median rel-L2 " + fmt("%.3g%%", median(r3)) + " <= 10% " + list(r3));
    v.require(median(fixed) >= 50.0, "fixed median " + fmt("%.3g%%", median(fixed)) + " >= 50% " + list(fixed));
    return v;
}

Verdict convection_beta50(const fs::path& out) {
    Verdict v;
    std::map<std::string, std::vector<double>> rel;
    std::map<std::string, std::vector<double>> windows;
    for (int seed : {0, 1, 2}) {
        for (const std::string kind : {"r3", "causal-r3", "fixed"}) {
            const run::Pairs p{
                {"problem.beta", "50"}, {"train.iterations", "60000"}, {"run.seed", std::to_string(seed)}};
            const Trained t = train_run(config("convection-" + kind, p), out / (kind + "_seed" + std::to_string(seed)));
            rel[kind].push_back(final_rel(t));
            windows[kind].push_back(static_cast<double>(diag::failure_indicator(t.series).windows.size()));
        }
    }
    v.require(median(rel["r3"]) <= 15.0, "R3 median " + fmt("%.3g%%", median(rel["r3"])) + " <= 15% " + list(rel["r3"]));
    v.require(median(rel["causal-r3"]) <= 15.0,
              "causal R3 median " + fmt("%.3g%%", median(rel["causal-r3"])) + " <= 15% " + list(rel["causal-r3"]));
    v.require(median(rel["fixed"]) >= 50.0,
              "fixed median " + fmt("%.3g%%", median(rel["fixed"])) + " >= 50% " + list(rel["fixed"]));
    const auto& fw = windows["fixed"];
    const auto& rw = windows["r3"];
    v.require(std::all_of(fw.begin(), fw.end(), [](double w) { return w >= 1; }),
              "failure windows on every fixed run " + list(fw));
    v.require(std::all_of(rw.begin(), rw.end(), [](double w) { return w == 0; }),
              "no failure window on any R3 run " + list(rw));
    return v;
}

Verdict harmonic_ode(const fs::path& out) {
    Verdict v;
    const run::ExperimentConfig cfg =
        config("ode-fixed", {{"train.iterations", "50000"}, {"train.checkpoint_period", "2500"}});
    const Trained t = train_run(cfg, out / "lattice");
    v.require(final_rel(t) <= 5.0, "final rel-L2 " + fmt("%.3g%%", final_rel(t)) + " <= 5%");

    // Extent of the low-error region measured from the constrained point.
    const pde::Problem problem = run::build_problem(cfg);
    const pde::Points grid = pde::evaluation_grid(problem);
    const Vector ref = pde::reference_values(problem, grid);
    const double tolerance = 0.1 * ref.cwiseAbs().maxCoeff();
    std::vector<fs::path> ckpts;
    for (const auto& e : fs::directory_iterator(t.dir / "checkpoints")) ckpts.push_back(e.path());
    std::sort(ckpts.begin(), ckpts.end());
    ckpts.push_back(t.dir / "final.ckpt");
    std::vector<double> extent;
    for (const fs::path& c : ckpts) {
        const Vector u = net::load_checkpoint(c).values(grid);
        Index j = 0;
        while (j < grid.cols() && std::abs(u(j) - ref(j)) <= tolerance) ++j;
        extent.push_back(j == 0 ? 0.0 : grid(0, j - 1) - problem.box.lower[0]);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < extent.size(); ++i) monotone = monotone && extent[i] >= extent[i - 1];
    v.require(monotone, "low-error extent non-decreasing over " + std::to_string(extent.size()) + " checkpoints " +
                            list(extent));
    v.require(extent.back() > extent.front(), "region grows outward");
    return v;
}

Verdict eikonal_circle(const fs::path& out) {
    Verdict v;
    const Trained t = train_run(config("eikonal-r3", {{"train.iterations", "50000"}}), out / "r3");
    const double miou = t.outcome.miou.value_or(0.0);
    v.require(miou >= 0.95, "mIOU " + fmt("%.4f", miou) + " >= 0.95");
    v.require(final_rel(t) <= 5.0, "rel-L2 " + fmt("%.3g%%", final_rel(t)) + " <= 5%");
    return v;
}

Verdict release_fuzz(const fs::path&) {
    Verdict v;
    Rng rng(505);
    const pde::Box box{{-1.0, 0.0}, {1.0, 1.0}, 1};
    Index violations = 0, trials = 0;
    long double worst_tau = 0;
    for (int trial = 0; trial < 10000; ++trial, ++trials) {
        const Index n = trial == 0 ? 1 : trial == 1 ? 10000 : 1 + static_cast<Index>(rng.below(10000));
        std::vector<double> f(static_cast<std::size_t>(n));
        switch (trial % 5) {
            case 0: for (double& x : f) x = rng.uniform(); break;
            case 1: std::fill(f.begin(), f.end(), rng.uniform(0.0, 5.0)); break;
            case 2:
                std::fill(f.begin(), f.end(), 0.0);
                f[rng.below(f.size())] = rng.uniform(1.0, 1e6);
                break;
            case 3: for (double& x : f) x = static_cast<double>(rng.below(3)); break;
            default: for (double& x : f) x = std::exp(rng.uniform(-20.0, 20.0)); break;
        }
        const sampling::Population pop = sampling::initial_population(box, n, rng);
        const sampling::Population next = sampling::r3_step(pop, f, box, rng);
        long double mean = 0;
        for (double x : f) mean += x;
        mean /= static_cast<long double>(n);
        worst_tau = std::max(worst_tau, std::abs(static_cast<long double>(next.tau) - mean) / std::max(mean, 1e-300L));

        Index above = 0;
        for (double x : f) above += x > next.tau;
        const Index kept = next.retained_count();
        bool ok = next.size() == n && n - kept >= 1 && kept == above;
        // Survivors are exactly the above-threshold points, in order.
        Index k = 0;
        for (Index j = 0; j < n && ok; ++j) {
            if (!(f[static_cast<std::size_t>(j)] > next.tau)) continue;
            ok = next.points.col(k).isApprox(pop.points.col(j), 0.0) && next.fitness(k) > next.tau;
            ++k;
        }
        for (Index j = kept; j < n && ok; ++j)
            ok = next.points(0, j) >= -1 && next.points(0, j) <= 1 && next.points(1, j) >= 0 && next.points(1, j) <= 1;
        if (!ok) ++violations;
    }
    v.require(violations == 0, std::to_string(violations) + " of " + std::to_string(trials) + " vectors violate the invariants");
    v.require(worst_tau <= 1e-12L, "threshold equals the mean (worst rel dev " +
                                       fmt("%.2g", static_cast<double>(worst_tau)) + ")");
    return v;
}

Verdict frozen_accumulation(const fs::path& out) {
    Verdict v;
    for (const std::string name : {"ackley", "michalewicz"}) {
        const lab::ObjectiveFunction f = lab::objective(name);
        Rng rng = Rng(606).stream(name);
        const pde::Points dense = pde::uniform_points(f.domain, 1000000, rng);
        const double l4 = lab::lp_norm(f, 4.0, dense), l6 = lab::lp_norm(f, 6.0, dense);
        const double dmax = f.evaluate(dense).maxCoeff();
        const std::vector<lab::FrozenStep> s = lab::frozen_r3_run(f, 1000, 10000, rng);
        fs::create_directories(out);
        lab::write_frozen_csv(s, out / (name + "_frozen.csv"));
        Index cross4 = -1, cross6 = -1;
        for (const lab::FrozenStep& st : s) {
            if (!st.retained_mean) continue;
            if (cross4 < 0 && *st.retained_mean >= l4) cross4 = st.iteration;
            if (cross6 < 0 && *st.retained_mean >= l6) cross6 = st.iteration;
        }
        const double last = s.back().retained_mean.value_or(0.0);
        v.require(cross4 > 0 && cross6 >= cross4,
                  name + " crosses L4 at " + std::to_string(cross4) + " then L6 at " + std::to_string(cross6));
        v.require(std::abs(last - dmax) <= 0.05 * dmax,
                  name + " final retained mean " + fmt("%.5g", last) + " within 5% of dense max " + fmt("%.5g", dmax));
    }
    return v;
}

Verdict theorem3(const fs::path&) {
    Verdict v;
    lab::ObjectiveFunction f;
    f.name = "abs";
    f.formula = [](std::span<const double> p) { return std::abs(p[0]); };
    f.domain = pde::Box{{-1.0}, {1.0}, -1};
    const std::vector<int> counts{200001};
    const pde::Points dense = pde::lattice(f.domain, counts);
    Rng rng(707);
    for (double k : {0.0, 1.0, 2.0}) {
        const lab::Theorem3Check c = lab::verify_theorem3(f, k, dense, 1000000, rng);
        v.require(c.gap <= 1e-2, "k=" + fmt("%g", k) + " gap " + fmt("%.2e", c.gap));
        if (k == 2.0) {
            const double want = std::sqrt(3.0 / 5.0);
            v.require(std::abs(c.lhs - want) <= 1e-2 && std::abs(c.rhs - want) <= 1e-2,
                      "k=2 lhs " + fmt("%.5f", c.lhs) + " rhs " + fmt("%.5f", c.rhs) + " vs sqrt(3/5)");
        }
    }
    return v;
}

// Two-pass long double moments: adjusted skewness, population excess kurtosis.
std::pair<long double, long double> moments_oracle(const std::vector<double>& y) {
    const long double n = static_cast<long double>(y.size());
    long double mean = 0;
    for (double x : y) mean += x;
    mean /= n;
    long double m2 = 0, m3 = 0, m4 = 0;
    for (double x : y) {
        const long double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n, m3 /= n, m4 /= n;
    return {std::sqrt(n * (n - 1)) / (n - 2) * m3 / std::pow(m2, 1.5L), m4 / (m2 * m2) - 3};
}

Verdict metric_oracles(const fs::path&) {
    Verdict v;
    const double s = *diag::skewness(std::vector<double>{0, 0, 0, 1});
    const double k = *diag::kurtosis(std::vector<double>{1, 2, 3, 4, 5});
    v.require(s == 2.0, "skewness([0,0,0,1]) = " + fmt("%.17g", s));
    v.require(k == -1.3, "kurtosis([1..5]) = " + fmt("%.17g", k));
    Rng rng(808);
    double worst_sym = 0, worst_oracle = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const double c = rng.uniform(-100, 100), a = rng.uniform(0, 10), b = rng.uniform(0, 10);
        const std::vector<double> sym{c - b, c - a, c, c + a, c + b};
        if (a > 0 || b > 0) worst_sym = std::max(worst_sym, std::abs(*diag::skewness(sym)));

        std::vector<double> y(3 + rng.below(2000));
        const double scale = std::exp(rng.uniform(-5, 5));
        for (double& x : y) x = scale * std::pow(rng.uniform(), 1 + 4 * rng.uniform());
        const auto [os, ok] = moments_oracle(y);
        worst_oracle = std::max(worst_oracle, std::abs(*diag::skewness(y) - static_cast<double>(os)) /
                                                  std::max(1.0, std::abs(static_cast<double>(os))));
        worst_oracle = std::max(worst_oracle, std::abs(*diag::kurtosis(y) - static_cast<double>(ok)) /
                                                  std::max(1.0, std::abs(static_cast<double>(ok))));
    }
    v.require(worst_sym <= 1e-12, "symmetric 5-point skewness max " + fmt("%.2e", worst_sym));
    v.require(worst_oracle <= 1e-12, "two-pass oracle max dev " + fmt("%.2e", worst_oracle));
    return v;
}

double rel(double got, double want, double floor) { return std::abs(got - want) / std::max(std::abs(want), floor); }

Verdict autodiff_oracles(const fs::path&) {
    Verdict v;
    Rng rng(909);
    double worst1 = 0, worst2 = 0, worst_grad = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 1 + static_cast<int>(rng.below(2));
        net::NetworkSpec spec;
        spec.input_dim = dim;
        spec.hidden_width = 2 + static_cast<int>(rng.below(15));
        spec.hidden_depth = 1 + static_cast<int>(rng.below(3));
        spec.activation = rng.below(2) ? ad::Activation::tanh : ad::Activation::sin;
        spec.variant = rng.below(2) ? net::Variant::plain : net::Variant::modified;
        if (dim == 2 && rng.below(3) == 0) spec.embedding = net::Embedding::periodic(2.0);
        Vector theta(net::parameter_count(spec));
        for (Index i = 0; i < theta.size(); ++i) theta(i) = rng.uniform(-0.8, 0.8);
        const net::FieldNetwork net(spec, theta);

        std::vector<double> p(static_cast<std::size_t>(dim));
        for (double& x : p) x = rng.uniform(-1, 1);
        const auto f = [&](std::span<const double> x) { return net(x); };
        const ad::JetValue jet = net.eval_jet(p, 2);
        const ad::JetValue fd1 = ad::finite_diff_oracle(f, p, 1, 1e-5);
        const ad::JetValue fd2 = ad::finite_diff_oracle(f, p, 2, 1e-4);
        for (Index i = 0; i < jet.d1.size(); ++i) worst1 = std::max(worst1, rel(jet.d1(i), fd1.d1(i), 1e-3));
        for (Index i = 0; i < jet.d2.rows(); ++i)
            for (Index j = 0; j < jet.d2.cols(); ++j) worst2 = std::max(worst2, rel(jet.d2(i, j), fd2.d2(i, j), 1e-3));

        // Parameter gradient of a PDE loss against central differences.
        Rng prng = rng.stream("problem");
        pde::Problem problem = dim == 1 ? pde::harmonic_ode(3.0, -1.0, 1.0)
                               : rng.below(2) ? pde::convection(rng.uniform(1, 10), 8, 8, prng)
                                              : pde::allen_cahn(8, 8, prng);
        const pde::Points pts = pde::uniform_points(problem.box, 16, prng);
        gate::GateState g;
        g.gamma = rng.uniform(-0.5, 1.0);
        const gate::GateState* gp = dim == 2 && rng.below(2) ? &g : nullptr;
        const train::LossEvaluation ev = train::evaluate_loss(net, pts, problem, {}, gp, true);
        Vector fd(theta.size());
        const double h = 1e-6;
        for (Index i = 0; i < theta.size(); ++i) {
            net::FieldNetwork plus = net, minus = net;
            plus.theta()(i) += h;
            minus.theta()(i) -= h;
            fd(i) = (train::total_loss(plus, pts, problem, {}, gp).total -
                     train::total_loss(minus, pts, problem, {}, gp).total) /
                    (2 * h);
        }
        worst_grad = std::max(worst_grad, (ev.gradient - fd).norm() / std::max(fd.norm(), 1e-300));
    }
    v.require(worst1 <= 1e-5, "order-1 jets max rel err " + fmt("%.2e", worst1));
    v.require(worst2 <= 1e-4, "order-2 jets max rel err " + fmt("%.2e", worst2));
    v.require(worst_grad <= 1e-5, "parameter gradients max rel err " + fmt("%.2e", worst_grad));
    return v;
}

Verdict gate_suite(const fs::path& out) {
    Verdict v;
    Rng rng(1010);
    bool half = true;
    for (int i = 0; i < 100; ++i) {
        gate::GateState s;
        s.gamma = rng.uniform(-1, 2);
        s.horizon = i % 2 ? 1.0 : 2.0;
        half = half && gate::gate_value(s.gamma * s.horizon, s) == 0.5;
    }
    v.require(half, "g(t = gamma T) == 0.5");

    Index monotone_bad = 0, shift_bad = 0;
    for (int i = 0; i < 1000; ++i) {
        gate::GateState a;
        a.gamma = rng.uniform(-1, 2);
        double t1 = rng.uniform(0, 1), t2 = rng.uniform(0, 1);
        if (t1 > t2) std::swap(t1, t2);
        if (gate::gate_value(t1, a) < gate::gate_value(t2, a)) ++monotone_bad;
        gate::GateState b = a;
        b.gamma += rng.uniform(0, 1);
        if (gate::gate_value(t1, b) < gate::gate_value(t1, a)) ++shift_bad;
        const double d = rng.uniform(-0.5, 0.5);
        gate::GateState c = a;
        c.gamma += d;
        if (std::abs(gate::gate_value(t1 + d, c) - gate::gate_value(t1, a)) > 1e-12) ++shift_bad;
    }
    v.require(monotone_bad == 0, "monotone in t (" + std::to_string(monotone_bad) + " violations)");
    v.require(shift_bad == 0, "shift properties (" + std::to_string(shift_bad) + " violations)");

    double lo = 1, hi = 0;
    for (int i = 0; i < 1000; ++i) {
        const double inc = gate::gate_increment(gate::GateState{}, i == 0 ? 0.0 : rng.uniform(0, 10));
        lo = std::min(lo, inc);
        hi = std::max(hi, inc);
    }
    v.require(lo > 0 && hi <= 1e-4, "increments in (" + fmt("%.2e", lo) + ", " + fmt("%.2e", hi) + "]");

    // Gamma over every iteration of a full causal run.
    run::ExperimentConfig cfg = config("convection-causal-r3", {{"train.iterations", "30000"}});
    train::TrainConfig tc = cfg.train;
    tc.log_period = 1;
    tc.grid_metrics = false;
    tc.checkpoint_period = 0;
    tc.snapshot_period = 0;
    tc.out_dir = out / "causal";
    fs::remove_all(tc.out_dir);
    const train::TrainResult r = train::train(run::build_problem(cfg), run::build_network(cfg), tc);
    bool nondecreasing = r.series.size() == 30001;
    for (std::size_t i = 1; i < r.series.size(); ++i)
        nondecreasing = nondecreasing && r.series[i].gamma >= r.series[i - 1].gamma;
    v.require(nondecreasing, "gamma non-decreasing over " + std::to_string(r.series.size()) + " rows, " +
                                 fmt("%.4f", r.series.front().gamma) + " -> " + fmt("%.4f", r.gate.gamma));
    return v;
}

Verdict rar_g_cost(const fs::path& out) {
    Verdict v;
    const std::uint64_t p0 = 1000, m = 1, k = 100, dense = 10000, n = 1000;
    const run::ExperimentConfig cfg = config("convection-rar-g", {{"sampler.m", "1"},
                                                                 {"sampler.period", "100"},
                                                                 {"sampler.dense_size", "10000"},
                                                                 {"train.iterations", "1000"}});
    const Trained t = train_run(cfg, out / "rar_g");
    const std::uint64_t counter = t.series.back().eval_counter;
    // N divisible by K: N |P| + K M q (q - 1) / 2 + |dense| q with q = N / K.
    const std::uint64_t q = n / k;
    const std::uint64_t closed = n * p0 + k * m * q * (q - 1) / 2 + dense * q;
    // As printed, the training sum runs over q + 1 blocks of K iterations.
    const std::uint64_t printed = k * p0 * (q + 1) + k * m * q * (q + 1) / 2 + dense * q;
    v.require(counter == closed, "eval_counter " + std::to_string(counter) + " == closed form " + std::to_string(closed) +
                                     " (printed form with one extra block: " + std::to_string(printed) + ")");
    return v;
}

Verdict determinism(const fs::path& out) {
    Verdict v;
    struct Case {
        std::string name;
        run::ExperimentConfig cfg;
    };
    const std::vector<Case> cases{
        {"convection-r3", config("convection-r3", {{"train.iterations", "30000"}})},
        {"convection-causal-r3", config("convection-causal-r3", {{"train.iterations", "3000"}})},
        {"convection-rar-g", config("convection-rar-g", {{"sampler.dense_size", "10000"}, {"train.iterations", "1000"}})},
        {"ode-fixed", config("ode-fixed", {{"train.iterations", "3000"}})},
    };
    for (const Case& c : cases) {
        const Trained a = train_run(c.cfg, out / (c.name + "_a"));
        const Trained b = train_run(c.cfg, out / (c.name + "_b"));
        const std::string la = slurp(a.dir / "diagnostics.csv");
        v.require(!la.empty() && la == slurp(b.dir / "diagnostics.csv"), c.name + " logs byte-identical");
    }
    return v;
}

struct Entry {
    const char* name;
    std::function<Verdict(const fs::path&)> run;
};

const std::map<int, Entry>& criteria() {
    static const std::map<int, Entry> c{
        {1, {"convection beta=30 R3 vs fixed", convection_beta30}},
        {2, {"convection beta=50 R3, causal R3 vs fixed, failure windows", convection_beta50}},
        {3, {"harmonic ODE accuracy and outward propagation", harmonic_ode}},
        {4, {"Eikonal circle SDF", eikonal_circle}},
        {5, {"retain/release fuzz", release_fuzz}},
        {6, {"frozen-field accumulation", frozen_accumulation}},
        {7, {"L^p sampling identity", theorem3}},
        {8, {"moment oracles", metric_oracles}},
        {9, {"autodiff oracles", autodiff_oracles}},
        {10, {"causal gate suite", gate_suite}},
        {11, {"RAR-G evaluation counter", rar_g_cost}},
        {12, {"determinism", determinism}},
    };
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    fs::path out = "acceptance_runs";
    std::vector<int> ids;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--out" && i + 1 < argc) {
            out = argv[++i];
        } else if (a == "all") {
            for (const auto& [id, e] : criteria()) ids.push_back(id);
        } else {
            ids.push_back(std::atoi(a.c_str()));
        }
    }
    if (ids.empty()) {
        std::fprintf(stderr, "usage: r3_acceptance [--out DIR] (all | ID...)\n");
        return 2;
    }
    int failed = 0;
    for (int id : ids) {
        const auto it = criteria().find(id);
        if (it == criteria().end()) {
            std::printf("criterion %d: FAIL unknown criterion\n", id);
            ++failed;
            continue;
        }
        char sub[16];
        std::snprintf(sub, sizeof sub, "c%02d", id);
        Verdict v;
        try {
            v = it->second.run(out / sub);
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %d (%s): %s  %s\n", id, it->second.name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        std::fflush(stdout);
        failed += !v.pass;
    }
    return failed == 0 ? 0 : 1;
}
