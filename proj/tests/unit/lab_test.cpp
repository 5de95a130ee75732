#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "r3/lab.hpp"

using namespace r3;
using ad::Index;

namespace {

lab::ObjectiveFunction abs_line() {
    lab::ObjectiveFunction f;
    f.name = "abs";
    f.formula = [](std::span<const double> p) { return std::abs(p[0]); };
    f.domain = pde::Box{{-1.0}, {1.0}, -1};
    return f;
}

lab::ObjectiveFunction identity_unit() {
    lab::ObjectiveFunction f;
    f.name = "x";
    f.formula = [](std::span<const double> p) { return p[0]; };
    f.domain = pde::Box{{0.0}, {1.0}, -1};
    return f;
}

pde::Points line(const pde::Box& box, int n) {
    const std::vector<int> counts{n};
    return pde::lattice(box, counts);
}

}  // namespace

TEST_CASE("objective function examples") {
    const std::vector<double> origin{0.0, 0.0};
    CHECK(lab::objective("ackley")(origin) == doctest::Approx(40.0 + 2 * std::numbers::e).epsilon(1e-14));
    CHECK(lab::objective("ackley")(origin) == doctest::Approx(45.4366).epsilon(1e-5));
    const std::vector<double> bukin_zero{-10.0, 1.0};
    CHECK(lab::objective("bukin").formula(bukin_zero) == 0.0);
    CHECK(lab::objective("bukin").offset == doctest::Approx(100 * std::sqrt(5.25) + 0.05).epsilon(1e-14));
    CHECK(std::abs(lab::objective("bohachevsky").formula(origin)) <= 1e-15);
    CHECK(lab::objective("bohachevsky").offset == doctest::Approx(30000.0).epsilon(1e-14));
    CHECK(lab::objective("drop_wave")(origin) == 1.0);
    CHECK(lab::objective("holder_table").max_value == doctest::Approx(19.2085).epsilon(1e-5));
    CHECK(lab::objective("michalewicz").max_value == doctest::Approx(1.8013).epsilon(1e-4));
    CHECK(lab::objective("egg_holder").max_value - lab::objective("egg_holder").offset ==
          doctest::Approx(959.6407).epsilon(1e-6));
    CHECK_THROWS_AS(lab::objective("rosenbrock"), UsageError);
}

TEST_CASE("objectives are non-negative and bounded by their known maxima") {
    Rng rng(1);
    for (const std::string& name : lab::objective_names()) {
        const lab::ObjectiveFunction f = lab::objective(name);
        const std::vector<int> counts{301, 301};
        const pde::Points grid = pde::lattice(f.domain, counts);
        const pde::Points rand = pde::uniform_points(f.domain, 20000, rng);
        for (const pde::Points* p : {&grid, &rand}) {
            const ad::Vector v = f.evaluate(*p);
            CAPTURE(name);
            CHECK(v.allFinite());
            CHECK(v.minCoeff() >= -1e-9);
            CHECK(v.maxCoeff() <= f.max_value + 1e-9 * std::max(1.0, f.max_value));
        }
    }
}

TEST_CASE("frozen runs") {
    Rng rng(2);
    const lab::ObjectiveFunction flat = lab::constant_objective(3.0, pde::Box{{0, 0}, {1, 1}, -1});
    for (const lab::FrozenStep& s : lab::frozen_r3_run(flat, 100, 50, rng)) {
        CHECK(s.retained == 0);
        CHECK(!s.retained_mean);
    }

    // First population mean against a large uniform quadrature.
    const lab::ObjectiveFunction ackley = lab::objective("ackley");
    Rng quad(3);
    const ad::Vector big = ackley.evaluate(pde::uniform_points(ackley.domain, 1000000, quad));
    const double mean = big.mean();
    const double sd = std::sqrt((big.array() - mean).square().mean());
    const std::vector<lab::FrozenStep> run = lab::frozen_r3_run(ackley, 1000, 300, rng);
    CHECK(run.front().iteration == 1);
    CHECK(std::abs(run.front().population_mean - mean) <= 4 * sd / std::sqrt(1000.0));

    for (const lab::FrozenStep& s : run) {
        CHECK(s.resampled >= 1);
        CHECK(s.retained + s.resampled == 1000);
    }
    // The retained mean climbs towards the peak.
    CHECK(*run.back().retained_mean > *run.front().retained_mean);
    CHECK(*run.back().retained_mean > lab::lp_norm(ackley, 4.0, pde::uniform_points(ackley.domain, 100000, quad)));
}

TEST_CASE("lp norm examples") {
    const std::vector<double> c(10, 2.5);
    CHECK(lab::lp_norm(c, 1.0) == doctest::Approx(2.5).epsilon(1e-15));
    const lab::ObjectiveFunction x = identity_unit();
    const pde::Points dense = line(x.domain, 100001);
    CHECK(lab::lp_norm(x, 2.0, dense) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-3));
    CHECK(lab::lp_norm(x, 64.0, dense) == doctest::Approx(std::pow(1.0 / 65.0, 1.0 / 64.0)).epsilon(1e-3));
    CHECK(std::abs(lab::lp_norm(x, 128.0, dense) - 1.0) <= 0.05);

    Rng rng(4);
    const lab::ObjectiveFunction a = lab::objective("ackley");
    const pde::Points pts = pde::uniform_points(a.domain, 50000, rng);
    double prev = 0;
    for (double p : {1.0, 2.0, 4.0, 6.0, 16.0}) {
        const double v = lab::lp_norm(a, p, pts);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK_THROWS_AS(lab::lp_norm(c, 0.5), UsageError);
}

TEST_CASE("theorem 3 identity on |x|") {
    const lab::ObjectiveFunction f = abs_line();
    const pde::Points dense = line(f.domain, 100001);
    Rng rng(5);
    for (double k : {0.0, 1.0, 2.0}) {
        const lab::Theorem3Check c = lab::verify_theorem3(f, k, dense, 200000, rng);
        CAPTURE(k);
        CHECK(c.gap <= 1e-2);
        if (k == 0.0) CHECK(c.rhs == doctest::Approx(lab::lp_norm(f, 2.0, dense)).epsilon(1e-12));
        if (k == 2.0) {
            CHECK(std::abs(c.lhs - std::sqrt(0.6)) <= 1e-2);
            CHECK(std::abs(c.rhs - std::sqrt(0.6)) <= 1e-2);
        }
    }
    const lab::ObjectiveFunction flat = lab::constant_objective(1.7, f.domain);
    const lab::Theorem3Check c = lab::verify_theorem3(flat, 2.0, dense, 1000, rng);
    CHECK(c.lhs == doctest::Approx(1.7).epsilon(1e-12));
    CHECK(c.rhs == doctest::Approx(1.7).epsilon(1e-12));
    CHECK_THROWS_AS(lab::verify_theorem3(lab::constant_objective(0.0, f.domain), 1.0, dense, 10, rng), UsageError);
}
