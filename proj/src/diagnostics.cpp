#include "r3/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "r3/errors.hpp"

namespace r3::diag {

namespace {

struct Moments {
    double m2 = 0, m3 = 0, m4 = 0;
};

bool constant(std::span<const double> y) {
    return std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
}

Moments central_moments(std::span<const double> y) {
    const double n = static_cast<double>(y.size());
    const double mean = ad::pairwise_sum(y) / n;
    std::vector<double> d2(y.size()), d3(y.size()), d4(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - mean;
        d2[i] = d * d;
        d3[i] = d2[i] * d;
        d4[i] = d2[i] * d2[i];
    }
    return {ad::pairwise_sum(d2) / n, ad::pairwise_sum(d3) / n, ad::pairwise_sum(d4) / n};
}

}  // namespace

std::optional<double> skewness(std::span<const double> samples) {
    if (samples.size() < 3 || constant(samples)) return std::nullopt;
    const Moments m = central_moments(samples);
    if (!(m.m2 > 0.0)) return std::nullopt;
    const double n = static_cast<double>(samples.size());
    return std::sqrt(n * (n - 1.0)) / (n - 2.0) * m.m3 / std::pow(m.m2, 1.5);
}

std::optional<double> kurtosis(std::span<const double> samples) {
    if (samples.size() < 2 || constant(samples)) return std::nullopt;
    const Moments m = central_moments(samples);
    if (!(m.m2 > 0.0)) return std::nullopt;
    return m.m4 / (m.m2 * m.m2) - 3.0;
}

std::optional<double> relative_l2(std::span<const double> predicted, std::span<const double> reference) {
    if (predicted.size() != reference.size()) throw UsageError("relative_l2: grids differ in size");
    std::vector<double> diff(predicted.size()), ref(predicted.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        diff[i] = (predicted[i] - reference[i]) * (predicted[i] - reference[i]);
        ref[i] = reference[i] * reference[i];
    }
    const double denom = ad::pairwise_sum(ref);
    if (!(denom > 0.0)) return std::nullopt;
    return 100.0 * std::sqrt(ad::pairwise_sum(diff) / denom);
}

double miou(std::span<const double> predicted, std::span<const double> reference) {
    if (predicted.size() != reference.size()) throw UsageError("miou: grids differ in size");
    double total = 0.0;
    for (bool interior : {true, false}) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < predicted.size(); ++i) {
            const bool a = (predicted[i] < 0.0) == interior;
            const bool b = (reference[i] < 0.0) == interior;
            inter += a && b;
            uni += a || b;
        }
        total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return total / 2.0;
}

namespace {

pde::ReferenceGrid lattice_grid(const pde::Problem& problem, std::span<const int> counts, const Vector& values,
                                const pde::Points& pts) {
    const int dim = problem.box.dim();
    if (static_cast<int>(counts.size()) != dim) throw UsageError("grid counts must match the problem dimension");
    const Index nx = counts[0];
    const Index nt = dim > 1 ? counts[1] : 1;
    pde::ReferenceGrid g;
    g.x.resize(static_cast<std::size_t>(nx));
    g.t.resize(static_cast<std::size_t>(nt));
    for (Index i = 0; i < nx; ++i) g.x[static_cast<std::size_t>(i)] = pts(0, i);
    for (Index j = 0; j < nt; ++j) g.t[static_cast<std::size_t>(j)] = dim > 1 ? pts(1, j * nx) : 0.0;
    g.u = Eigen::Map<const ad::Matrix>(values.data(), nx, nt);
    return g;
}

}  // namespace

pde::ReferenceGrid field_grid(const net::FieldNetwork& net, const pde::Problem& problem, std::span<const int> counts) {
    const pde::Points pts = pde::lattice(problem.box, counts);
    return lattice_grid(problem, counts, net.values(pts), pts);
}

pde::ReferenceGrid residual_field_grid(const net::FieldNetwork& net, const pde::Problem& problem,
                                       std::span<const int> counts) {
    const pde::Points pts = pde::lattice(problem.box, counts);
    const Vector r = pde::residual_values(net, problem, pts).cwiseAbs();
    return lattice_grid(problem, counts, r, pts);
}

pde::ReferenceGrid reference_field_grid(const pde::Problem& problem, std::span<const int> counts) {
    const pde::Points pts = pde::lattice(problem.box, counts);
    return lattice_grid(problem, counts, pde::reference_values(problem, pts), pts);
}

FailureReport failure_indicator(std::span<const Index> iterations, std::span<const std::optional<double>> skew,
                                std::span<const std::optional<double>> kurt,
                                std::span<const std::optional<double>> rel_l2, const FailureThresholds& th) {
    const std::size_t n = iterations.size();
    if (skew.size() != n || kurt.size() != n || (!rel_l2.empty() && rel_l2.size() != n))
        throw UsageError("failure_indicator: series are not aligned");
    FailureReport report;
    report.flagged.assign(n, false);
    auto hot = [&](std::size_t i) {
        return skew[i] && kurt[i] && *skew[i] >= th.skewness && *kurt[i] >= th.kurtosis;
    };
    std::size_t i = 0;
    while (i < n) {
        if (!hot(i)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && hot(j + 1)) ++j;
        bool flat = true;
        if (!rel_l2.empty() && rel_l2[i] && rel_l2[j]) flat = *rel_l2[j] >= (1.0 - th.flat_tolerance) * *rel_l2[i];
        if (iterations[j] - iterations[i] >= th.sustain && flat) {
            report.windows.push_back({iterations[i], iterations[j]});
            for (std::size_t k = i; k <= j; ++k) report.flagged[k] = true;
        }
        i = j + 1;
    }
    return report;
}

FailureReport failure_indicator(const Series& series, const FailureThresholds& thresholds) {
    std::vector<Index> it;
    std::vector<std::optional<double>> s, k, r;
    for (const DiagnosticsRow& row : series) {
        it.push_back(row.iteration);
        s.push_back(row.skewness);
        k.push_back(row.kurtosis);
        r.push_back(row.rel_l2);
    }
    return failure_indicator(it, s, k, r, thresholds);
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols{
        "iteration", "lr",       "gamma",    "loss",         "loss_r",    "loss_ic",    "loss_bc",
        "mean_abs_r", "max_abs_r", "skewness", "kurtosis",     "rel_l2",    "eval_counter", "mean_gate",
        "population", "retained", "uniform_fallback"};
    return cols;
}

std::string csv_header() {
    std::string h;
    for (const std::string& c : csv_columns()) h += (h.empty() ? "" : ",") + c;
    return h;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

double to_double(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw IoError("bad number '" + s + "' in column " + what);
    return v;
}

std::uint64_t to_u64(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size()) throw IoError("bad integer '" + s + "' in column " + what);
    return v;
}

}  // namespace

std::string csv_line(const DiagnosticsRow& r) {
    std::ostringstream o;
    o << r.iteration << ',' << num(r.lr) << ',' << num(r.gamma) << ',' << num(r.loss) << ',' << num(r.loss_r) << ','
      << num(r.loss_ic) << ',' << num(r.loss_bc) << ',' << num(r.mean_abs_r) << ',' << num(r.max_abs_r) << ','
      << opt(r.skewness) << ',' << opt(r.kurtosis) << ',' << opt(r.rel_l2) << ',' << r.eval_counter << ','
      << num(r.mean_gate) << ',' << r.population << ',' << r.retained << ',' << (r.uniform_fallback ? 1 : 0);
    return o.str();
}

DiagnosticsRow parse_csv_line(const std::string& line) {
    std::vector<std::string> f;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    const auto& cols = csv_columns();
    if (f.size() != cols.size())
        throw IoError("diagnostics row has " + std::to_string(f.size()) + " fields, expected " +
                      std::to_string(cols.size()));
    auto d = [&](std::size_t i) { return to_double(f[i], cols[i]); };
    auto o = [&](std::size_t i) { return f[i].empty() ? std::nullopt : std::optional<double>(d(i)); };
    DiagnosticsRow r;
    r.iteration = static_cast<Index>(to_u64(f[0], cols[0]));
    r.lr = d(1);
    r.gamma = d(2);
    r.loss = d(3);
    r.loss_r = d(4);
    r.loss_ic = d(5);
    r.loss_bc = d(6);
    r.mean_abs_r = d(7);
    r.max_abs_r = d(8);
    r.skewness = o(9);
    r.kurtosis = o(10);
    r.rel_l2 = o(11);
    r.eval_counter = to_u64(f[12], cols[12]);
    r.mean_gate = d(13);
    r.population = static_cast<Index>(to_u64(f[14], cols[14]));
    r.retained = static_cast<Index>(to_u64(f[15], cols[15]));
    r.uniform_fallback = to_u64(f[16], cols[16]) != 0;
    return r;
}

void write_csv(const Series& series, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << csv_header() << '\n';
    for (const DiagnosticsRow& r : series) out << csv_line(r) << '\n';
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

Series read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("missing diagnostics file " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != csv_header()) throw IoError(path.string() + ": unexpected header");
    Series s;
    while (std::getline(in, line))
        if (!line.empty()) s.push_back(parse_csv_line(line));
    return s;
}

}  // namespace r3::diag
