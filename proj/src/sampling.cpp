#include "r3/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace r3::sampling {

Index Population::retained_count() const {
    return static_cast<Index>(std::count(provenance.begin(), provenance.end(), Provenance::retained));
}

double threshold(std::span<const double> fitness) {
    if (fitness.empty()) throw UsageError("threshold of an empty fitness list");
    const double mean = ad::pairwise_sum(fitness) / static_cast<double>(fitness.size());
    // Rounding can push the mean of equal values past their common value.
    const auto [lo, hi] = std::minmax_element(fitness.begin(), fitness.end());
    return std::clamp(mean, *lo, *hi);
}

Vector r3_fitness(std::span<const double> residuals) {
    Vector f(static_cast<Index>(residuals.size()));
    for (std::size_t i = 0; i < residuals.size(); ++i) f(static_cast<Index>(i)) = std::abs(residuals[i]);
    return f;
}

Vector causal_fitness(std::span<const double> residuals, std::span<const double> times, const gate::GateState& gate) {
    if (residuals.size() != times.size()) throw UsageError("causal_fitness: length mismatch");
    Vector f = r3_fitness(residuals);
    for (std::size_t i = 0; i < times.size(); ++i) f(static_cast<Index>(i)) *= gate::gate_value(times[i], gate);
    return f;
}

Population initial_population(const Box& box, Index n, Rng& rng) {
    Population p;
    p.points = pde::uniform_points(box, n, rng);
    p.fitness = Vector::Zero(n);
    p.provenance.assign(static_cast<std::size_t>(n), Provenance::resampled);
    return p;
}

Population r3_step(const Population& pop, std::span<const double> fitness, const Box& box, Rng& rng) {
    const Index n = pop.size();
    if (static_cast<Index>(fitness.size()) != n) throw UsageError("r3_step: fitness length does not match population");
    const double tau = threshold(fitness);
    Population next;
    next.points.resize(pop.points.rows(), n);
    next.fitness = Vector::Zero(n);
    next.provenance.assign(static_cast<std::size_t>(n), Provenance::resampled);
    next.tau = tau;
    next.eval_counter = pop.eval_counter;
    Index kept = 0;
    for (Index j = 0; j < n; ++j) {
        if (fitness[static_cast<std::size_t>(j)] > tau) {
            next.points.col(kept) = pop.points.col(j);
            next.fitness(kept) = fitness[static_cast<std::size_t>(j)];
            next.provenance[static_cast<std::size_t>(kept)] = Provenance::retained;
            ++kept;
        }
    }
    if (kept < n) next.points.rightCols(n - kept) = pde::uniform_points(box, n - kept, rng);
    return next;
}

Points fixed_sampler(const Box& box, Index n, Rng& rng) { return pde::uniform_points(box, n, rng); }

Points dynamic_sampler(const Box& box, Index n, Rng& rng) { return pde::uniform_points(box, n, rng); }

DenseSet DenseSet::uniform(const Box& box, Index n, Rng& rng) { return DenseSet{pde::uniform_points(box, n, rng)}; }

std::vector<Index> top_indices(std::span<const double> values, Index n) {
    const Index size = static_cast<Index>(values.size());
    if (n < 0 || n > size) throw UsageError("top_indices: requested more points than available");
    std::vector<Index> idx(static_cast<std::size_t>(size));
    std::iota(idx.begin(), idx.end(), Index{0});
    auto before = [&](Index a, Index b) {
        const double va = std::abs(values[static_cast<std::size_t>(a)]);
        const double vb = std::abs(values[static_cast<std::size_t>(b)]);
        return va > vb || (va == vb && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + n, idx.end(), before);
    idx.resize(static_cast<std::size_t>(n));
    return idx;
}

namespace {

Points append(const Points& train, const Points& extra) {
    Points out(train.rows(), train.cols() + extra.cols());
    out.leftCols(train.cols()) = train;
    out.rightCols(extra.cols()) = extra;
    return out;
}

void check_dense(const DenseSet& dense, std::span<const double> residuals) {
    if (static_cast<Index>(residuals.size()) != dense.size())
        throw UsageError("dense residuals do not match the dense set");
}

}  // namespace

Points rar_g_step(const Points& train, const DenseSet& dense, std::span<const double> residuals, Index m) {
    check_dense(dense, residuals);
    if (m > dense.size()) throw UsageError("rar_g_step: m exceeds the dense set size");
    const std::vector<Index> top = top_indices(residuals, m);
    Points extra(dense.points.rows(), m);
    for (Index i = 0; i < m; ++i) extra.col(i) = dense.points.col(top[static_cast<std::size_t>(i)]);
    return append(train, extra);
}

DrawResult residual_draw(const DenseSet& dense, std::span<const double> residuals, double k, Index n, Rng& rng) {
    check_dense(dense, residuals);
    if (!(k >= 0.0)) throw UsageError("residual power k must be non-negative");
    if (dense.size() == 0) throw UsageError("cannot draw from an empty dense set");
    std::vector<double> cumulative(residuals.size());
    double running = 0.0;
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        running += std::pow(std::abs(residuals[i]), k);
        cumulative[i] = running;
    }
    DrawResult r;
    r.points.resize(dense.points.rows(), n);
    const bool usable = running > 0.0 && std::isfinite(running);
    r.uniform_fallback = !usable;
    for (Index j = 0; j < n; ++j) {
        Index pick;
        if (usable) {
            const double u = rng.uniform() * running;
            pick = static_cast<Index>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
            pick = std::min(pick, dense.size() - 1);
        } else {
            pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(dense.size())));
        }
        r.points.col(j) = dense.points.col(pick);
    }
    return r;
}

DrawResult rad_step(const DenseSet& dense, std::span<const double> residuals, double k, Index n, Rng& rng) {
    return residual_draw(dense, residuals, k, n, rng);
}

DrawResult rar_d_step(const Points& train, const DenseSet& dense, std::span<const double> residuals, double k,
                      Index m, Rng& rng) {
    DrawResult r = residual_draw(dense, residuals, k, m, rng);
    r.points = append(train, r.points);
    return r;
}

Points linf_topk(const DenseSet& dense, std::span<const double> residuals, Index n) {
    check_dense(dense, residuals);
    const std::vector<Index> top = top_indices(residuals, n);
    Points out(dense.points.rows(), n);
    for (Index i = 0; i < n; ++i) out.col(i) = dense.points.col(top[static_cast<std::size_t>(i)]);
    return out;
}

// ---------------------------------------------------------------------------

std::string to_string(SamplerKind kind) {
    switch (kind) {
        case SamplerKind::fixed: return "fixed";
        case SamplerKind::dynamic: return "dynamic";
        case SamplerKind::r3: return "r3";
        case SamplerKind::causal_r3: return "causal_r3";
        case SamplerKind::rar_g: return "rar_g";
        case SamplerKind::rad: return "rad";
        case SamplerKind::rar_d: return "rar_d";
        case SamplerKind::linf: return "linf";
        case SamplerKind::lattice: return "lattice";
    }
    return "?";
}

SamplerKind sampler_kind_from_string(const std::string& name) {
    for (SamplerKind k : {SamplerKind::fixed, SamplerKind::dynamic, SamplerKind::r3, SamplerKind::causal_r3,
                          SamplerKind::rar_g, SamplerKind::rad, SamplerKind::rar_d, SamplerKind::linf, SamplerKind::lattice})
        if (to_string(k) == name) return k;
    throw UsageError("unknown sampler kind '" + name + "'");
}

void SamplerConfig::validate() const {
    if (n < 1) throw UsageError("sampler.n must be at least 1");
    if (!(k >= 0.0)) throw UsageError("sampler.k must be non-negative");
    if (uses_dense()) {
        if (dense_size < 1) throw UsageError("sampler.dense_size must be positive");
        if (period < 1) throw UsageError("sampler.period must be positive");
        if (m < 0 || m > dense_size) throw UsageError("sampler.m must lie in [0, dense_size]");
        if (kind == SamplerKind::linf && n > dense_size) throw UsageError("linf sampler needs n <= dense_size");
    }
}

bool SamplerConfig::uses_dense() const {
    return kind == SamplerKind::rar_g || kind == SamplerKind::rad || kind == SamplerKind::rar_d ||
           kind == SamplerKind::linf;
}

Sampler::Sampler(const SamplerConfig& config, const Box& box, const Rng& rng)
    : config_(config), box_(box), rng_(rng.stream("sampler")) {
    config_.validate();
    Rng init = rng.stream("initial-population");
    pop_ = initial_population(box_, config_.n, init);
    if (config_.kind == SamplerKind::lattice) {
        const int dim = static_cast<int>(box_.lower.size());
        const int side = static_cast<int>(std::lround(std::pow(static_cast<double>(config_.n), 1.0 / dim)));
        Index total = 1;
        for (int d = 0; d < dim; ++d) total *= side;
        if (total != config_.n) throw UsageError("lattice sampler needs n to be a perfect power of the dimension");
        const std::vector<int> counts(static_cast<std::size_t>(dim), side);
        replace_points(pde::lattice(box_, counts));
    }
    if (config_.uses_dense()) {
        Rng d = rng.stream("dense-set");
        dense_ = DenseSet::uniform(box_, config_.dense_size, d);
    }
}

Vector Sampler::dense_pass(const ResidualFn& f) {
    if (!f) throw UsageError("this sampler needs dense residual evaluations");
    Vector r = f(dense_.points);
    if (r.size() != dense_.size()) throw UsageError("dense residual callback returned the wrong length");
    pop_.eval_counter += static_cast<std::uint64_t>(dense_.size());
    return r;
}

void Sampler::replace_points(Points pts) {
    const Index n = pts.cols();
    pop_.points = std::move(pts);
    pop_.fitness = Vector::Zero(n);
    pop_.provenance.assign(static_cast<std::size_t>(n), Provenance::resampled);
}

void Sampler::prepare(Index, const ResidualFn& dense_residuals) {
    if (config_.kind != SamplerKind::linf) return;
    const Vector r = dense_pass(dense_residuals);
    replace_points(linf_topk(dense_, std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), config_.n));
}

void Sampler::count_population_pass() { pop_.eval_counter += static_cast<std::uint64_t>(pop_.size()); }

void Sampler::advance(Index iteration, std::span<const double> residuals, const gate::GateState* gate,
                      const ResidualFn& dense_residuals) {
    if (static_cast<Index>(residuals.size()) != pop_.size())
        throw UsageError("advance: residuals do not match the population");
    fallback_ = false;
    const bool event = (iteration + 1) % config_.period == 0;
    auto span_of = [](const Vector& v) { return std::span<const double>(v.data(), static_cast<std::size_t>(v.size())); };

    switch (config_.kind) {
        case SamplerKind::fixed:
        case SamplerKind::lattice:
        case SamplerKind::linf:
            pop_.fitness = r3_fitness(residuals);
            break;
        case SamplerKind::dynamic:
            replace_points(dynamic_sampler(box_, config_.n, rng_));
            break;
        case SamplerKind::r3: {
            const Vector f = r3_fitness(residuals);
            pop_ = r3_step(pop_, span_of(f), box_, rng_);
            break;
        }
        case SamplerKind::causal_r3: {
            if (!gate) throw UsageError("causal R3 needs a gate state");
            if (box_.time_axis < 0) throw UsageError("causal R3 needs a time axis");
            const Vector times = pop_.points.row(box_.time_axis).transpose();
            const Vector f = causal_fitness(residuals, span_of(times), *gate);
            pop_ = r3_step(pop_, span_of(f), box_, rng_);
            break;
        }
        case SamplerKind::rar_g:
            if (event) {
                const Vector r = dense_pass(dense_residuals);
                replace_points(rar_g_step(pop_.points, dense_, span_of(r), config_.m));
            }
            break;
        case SamplerKind::rad:
            if (event) {
                const Vector r = dense_pass(dense_residuals);
                DrawResult d = rad_step(dense_, span_of(r), config_.k, config_.n, rng_);
                fallback_ = d.uniform_fallback;
                replace_points(std::move(d.points));
            }
            break;
        case SamplerKind::rar_d:
            if (event) {
                const Vector r = dense_pass(dense_residuals);
                DrawResult d = rar_d_step(pop_.points, dense_, span_of(r), config_.k, config_.m, rng_);
                fallback_ = d.uniform_fallback;
                replace_points(std::move(d.points));
            }
            break;
    }
}

std::uint64_t growing_set_cost(std::uint64_t initial, std::uint64_t m, std::uint64_t period, std::uint64_t iterations,
                               std::uint64_t dense) {
    if (period == 0) throw UsageError("period must be positive");
    const std::uint64_t q = iterations / period;
    const std::uint64_t r = iterations - q * period;
    // sum_{i<N} (initial + m floor(i/K))
    const std::uint64_t growth = period * (q == 0 ? 0 : q * (q - 1) / 2) + r * q;
    return iterations * initial + m * growth + dense * q;
}

void write_snapshot(const Population& pop, const std::filesystem::path& path, std::span<const std::string> axis_names) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write snapshot " + path.string());
    out << '#';
    for (const std::string& a : axis_names) out << ' ' << a;
    out << " fitness provenance\n" << std::setprecision(17);
    for (Index j = 0; j < pop.size(); ++j) {
        for (Index a = 0; a < pop.points.rows(); ++a) out << pop.points(a, j) << ' ';
        out << (j < pop.fitness.size() ? pop.fitness(j) : 0.0) << ' '
            << (pop.provenance[static_cast<std::size_t>(j)] == Provenance::retained ? "retained" : "resampled") << '\n';
    }
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace r3::sampling
