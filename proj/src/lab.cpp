#include "r3/lab.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "r3/errors.hpp"
#include "r3/sampling.hpp"

namespace r3::lab {

using std::numbers::e;
using std::numbers::pi;

Vector ObjectiveFunction::evaluate(const Points& points) const {
    Vector out(points.cols());
    for (Index j = 0; j < points.cols(); ++j)
        out(j) = (*this)(std::span<const double>(points.col(j).data(), static_cast<std::size_t>(points.rows())));
    return out;
}

const std::vector<std::string>& objective_names() {
    static const std::vector<std::string> names{"ackley",       "bohachevsky", "drop_wave",  "egg_holder",
                                                "holder_table", "bukin",       "michalewicz"};
    return names;
}

namespace {

constexpr double kAckleyA = 20.0, kAckleyB = 0.2, kAckleyC = 2 * pi;
constexpr int kMichalewiczM = 10;

double ackley(std::span<const double> p) {
    double sq = 0, cs = 0;
    for (double x : p) {
        sq += x * x;
        cs += std::cos(kAckleyC * x);
    }
    const double d = static_cast<double>(p.size());
    return kAckleyA * std::exp(-kAckleyB * std::sqrt(sq / d)) + std::exp(cs / d) + kAckleyA + e;
}

double bohachevsky(std::span<const double> p) {
    const double x = p[0], y = p[1];
    return -x * x - 2 * y * y + 0.3 * std::cos(3 * pi * x) + 0.4 * std::cos(4 * pi * y) - 0.7;
}

double drop_wave(std::span<const double> p) {
    const double r2 = p[0] * p[0] + p[1] * p[1];
    return (1 + std::cos(12 * std::sqrt(r2))) / (0.5 * r2 + 2);
}

double egg_holder(std::span<const double> p) {
    const double x = p[0], y = p[1];
    return (y + 47) * std::sin(std::sqrt(std::abs(y + x / 2 + 47))) + x * std::sin(std::sqrt(std::abs(x - (y + 47))));
}

double holder_table(std::span<const double> p) {
    const double x = p[0], y = p[1];
    return std::abs(std::sin(x) * std::cos(y) * std::exp(std::abs(1 - std::sqrt(x * x + y * y) / pi)));
}

double bukin(std::span<const double> p) {
    const double x = p[0], y = p[1];
    return -100 * std::sqrt(std::abs(y - x * x / 100)) - std::abs(x + 10) / 100;
}

double michalewicz(std::span<const double> p) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        s += std::sin(p[i]) * std::pow(std::sin(static_cast<double>(i + 1) * p[i] * p[i] / pi), 2 * kMichalewiczM);
    return s;
}

Box square(double lo, double hi) { return Box{{lo, lo}, {hi, hi}, -1}; }

ObjectiveFunction make(std::string name, double (*f)(std::span<const double>), Box box, std::vector<double> argmax,
                       double offset) {
    ObjectiveFunction o;
    o.name = std::move(name);
    o.formula = f;
    o.offset = offset;
    o.domain = std::move(box);
    o.argmax = std::move(argmax);
    if (!o.argmax.empty()) o.max_value = o(o.argmax);
    return o;
}

}  // namespace

ObjectiveFunction objective(const std::string& name) {
    if (name == "ackley") return make(name, ackley, square(-5, 5), {0.0, 0.0}, 0.0);
    if (name == "bohachevsky") {
        // Lowest value on the box sits at the corners.
        const std::vector<double> corner{100.0, 100.0};
        return make(name, bohachevsky, square(-100, 100), {0.0, 0.0}, -bohachevsky(corner));
    }
    if (name == "drop_wave") return make(name, drop_wave, square(-5.12, 5.12), {0.0, 0.0}, 0.0);
    if (name == "egg_holder") {
        const std::vector<double> corner{-512.0, 512.0};
        return make(name, egg_holder, square(-512, 512), {512.0, 404.2318060448}, -egg_holder(corner));
    }
    if (name == "holder_table") return make(name, holder_table, square(-10, 10), {8.05502347573, 9.66459002439}, 0.0);
    if (name == "bukin") {
        const std::vector<double> corner{-15.0, -3.0};
        return make(name, bukin, Box{{-15, -3}, {-5, 3}, -1}, {-10.0, 1.0}, -bukin(corner));
    }
    if (name == "michalewicz") return make(name, michalewicz, square(0, pi), {2.20290552, pi / 2}, 0.0);
    throw UsageError("unknown objective '" + name + "'");
}

ObjectiveFunction constant_objective(double value, const Box& domain) {
    ObjectiveFunction o;
    o.name = "constant";
    o.formula = [value](std::span<const double>) { return value; };
    o.domain = domain;
    return o;
}

std::vector<FrozenStep> frozen_r3_run(const ObjectiveFunction& fn, Index n, Index iterations, Rng& rng) {
    if (n < 1) throw UsageError("frozen run needs at least one point");
    std::vector<FrozenStep> out;
    out.reserve(static_cast<std::size_t>(iterations));
    sampling::Population pop = sampling::initial_population(fn.domain, n, rng);
    Vector f = fn.evaluate(pop.points);
    for (Index i = 1; i <= iterations; ++i) {
        const std::span<const double> fs(f.data(), static_cast<std::size_t>(f.size()));
        sampling::Population next = sampling::r3_step(pop, fs, fn.domain, rng);
        FrozenStep s;
        s.iteration = i;
        s.tau = next.tau;
        s.retained = next.retained_count();
        s.resampled = n - s.retained;
        s.population_mean = ad::pairwise_sum(fs) / static_cast<double>(n);
        if (s.retained > 0) s.retained_mean = next.fitness.head(s.retained).sum() / static_cast<double>(s.retained);
        out.push_back(s);
        // Retained points keep their values; only the replacements need evaluating.
        Vector nf(n);
        nf.head(s.retained) = next.fitness.head(s.retained);
        if (s.resampled > 0) nf.tail(s.resampled) = fn.evaluate(next.points.rightCols(s.resampled));
        pop = std::move(next);
        f = std::move(nf);
    }
    return out;
}

double lp_norm(std::span<const double> values, double p) {
    if (!(p >= 1.0)) throw UsageError("lp_norm needs p >= 1");
    if (values.empty()) throw UsageError("lp_norm of an empty set");
    double peak = 0.0;
    for (double v : values) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return 0.0;
    std::vector<double> terms(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) terms[i] = std::pow(std::abs(values[i]) / peak, p);
    return peak * std::pow(ad::pairwise_sum(terms) / static_cast<double>(values.size()), 1.0 / p);
}

double lp_norm(const ObjectiveFunction& fn, double p, const Points& dense) {
    const Vector v = fn.evaluate(dense);
    return lp_norm(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), p);
}

Theorem3Check verify_theorem3(const ObjectiveFunction& fn, double k, const Points& dense, Index samples, Rng& rng) {
    if (!(k >= 0.0)) throw UsageError("theorem check needs k >= 0");
    if (samples < 1) throw UsageError("theorem check needs samples");
    const Vector f = fn.evaluate(dense);
    const std::span<const double> fs(f.data(), static_cast<std::size_t>(f.size()));
    const double volume = fn.domain.volume();
    std::vector<double> wk(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) wk[i] = std::pow(std::abs(fs[i]), k);
    const double z = volume * ad::pairwise_sum(wk) / static_cast<double>(wk.size());
    if (!(z > 0.0)) throw UsageError("degenerate objective: normalization constant is zero");

    const sampling::DenseSet set{Points(Eigen::Map<const Points>(f.data(), 1, f.size()))};
    const sampling::DrawResult draw = sampling::residual_draw(set, fs, k, samples, rng);
    std::vector<double> sq(static_cast<std::size_t>(samples));
    for (Index j = 0; j < samples; ++j) sq[static_cast<std::size_t>(j)] = draw.points(0, j) * draw.points(0, j);

    Theorem3Check c;
    c.lhs = std::sqrt(ad::pairwise_sum(sq) / static_cast<double>(samples));
    c.rhs = std::pow(lp_norm(fs, k + 2.0), (k + 2.0) / 2.0) * std::sqrt(volume / z);
    c.gap = std::abs(c.lhs - c.rhs) / c.rhs;
    return c;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_frozen_csv(const std::vector<FrozenStep>& series, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "iteration,retained,resampled,tau,retained_mean,population_mean\n";
    for (const FrozenStep& s : series)
        out << s.iteration << ',' << s.retained << ',' << s.resampled << ',' << num(s.tau) << ','
            << (s.retained_mean ? num(*s.retained_mean) : std::string()) << ',' << num(s.population_mean) << '\n';
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

void write_levels(const ObjectiveFunction& fn, const Points& dense, std::span<const double> ps,
                  const std::filesystem::path& path) {
    const Vector v = fn.evaluate(dense);
    const std::span<const double> vs(v.data(), static_cast<std::size_t>(v.size()));
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "p,value\n";
    for (double p : ps) out << num(p) << ',' << num(lp_norm(vs, p)) << '\n';
    out << "inf," << num(v.cwiseAbs().maxCoeff()) << '\n';
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace r3::lab
