#include "r3/pde.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace r3::pde {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr Index kChunk = 4096;

}  // namespace

double Box::volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= extent(a);
    return v;
}

bool Box::contains(std::span<const double> p, double slack) const {
    if (static_cast<int>(p.size()) != dim()) return false;
    for (int a = 0; a < dim(); ++a) {
        if (p[static_cast<std::size_t>(a)] < lower[a] - slack || p[static_cast<std::size_t>(a)] > upper[a] + slack)
            return false;
    }
    return true;
}

Points uniform_points(const Box& box, Index n, Rng& rng) {
    if (n < 0) throw UsageError("negative point count");
    Points p(box.dim(), n);
    for (Index j = 0; j < n; ++j)
        for (int a = 0; a < box.dim(); ++a) p(a, j) = rng.uniform(box.lower[a], box.upper[a]);
    return p;
}

Points lattice(const Box& box, std::span<const int> counts) {
    if (static_cast<int>(counts.size()) != box.dim()) throw UsageError("lattice needs one count per axis");
    Index total = 1;
    for (int c : counts) {
        if (c < 1) throw UsageError("lattice counts must be positive");
        total *= c;
    }
    auto coord = [&](int a, int i) {
        const int c = counts[static_cast<std::size_t>(a)];
        if (c == 1) return 0.5 * (box.lower[a] + box.upper[a]);
        return box.lower[a] + box.extent(a) * static_cast<double>(i) / static_cast<double>(c - 1);
    };
    Points p(box.dim(), total);
    for (Index j = 0; j < total; ++j) {
        Index rest = j;
        for (int a = 0; a < box.dim(); ++a) {
            const int c = counts[static_cast<std::size_t>(a)];
            p(a, j) = coord(a, static_cast<int>(rest % c));
            rest /= c;
        }
    }
    return p;
}

double convection_exact(double x, double t, double beta) { return std::sin(x - beta * t); }

double allen_cahn_initial(double x) { return x * x * std::cos(kPi * x); }

// ---------------------------------------------------------------------------
// Geometry

Geometry2D Geometry2D::regular_polygon(double cx, double cy, double radius, int sides) {
    if (sides < 3 || !(radius > 0.0)) throw GeometryError("regular polygon needs >= 3 sides and positive radius");
    Polygon poly;
    for (int i = 0; i < sides; ++i) {
        const double a = 2.0 * kPi * i / sides;
        poly.vertices.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a)});
    }
    return Geometry2D{{poly}};
}

namespace {

template <typename F>
void for_each_edge(const Geometry2D& g, F&& f) {
    for (const Polygon& poly : g.polygons) {
        const std::size_t n = poly.vertices.size();
        for (std::size_t i = 0; i < n; ++i) f(poly.vertices[i], poly.vertices[(i + 1) % n]);
    }
}

double segment_distance(double px, double py, const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double ex = b[0] - a[0], ey = b[1] - a[1];
    const double len2 = ex * ex + ey * ey;
    double s = ((px - a[0]) * ex + (py - a[1]) * ey) / len2;
    s = std::clamp(s, 0.0, 1.0);
    const double dx = px - (a[0] + s * ex), dy = py - (a[1] + s * ey);
    return std::hypot(dx, dy);
}

}  // namespace

double Geometry2D::perimeter() const {
    double total = 0.0;
    for_each_edge(*this, [&](const auto& a, const auto& b) { total += std::hypot(b[0] - a[0], b[1] - a[1]); });
    return total;
}

void Geometry2D::validate() const {
    if (polygons.empty()) throw GeometryError("geometry has no polygons");
    for (const Polygon& p : polygons)
        if (p.vertices.size() < 3) throw GeometryError("polygon needs at least 3 vertices");
    for_each_edge(*this, [](const auto& a, const auto& b) {
        if (a[0] == b[0] && a[1] == b[1]) throw GeometryError("degenerate zero-length edge");
    });
}

bool inside(const Geometry2D& geom, double x, double y) {
    bool in = false;
    for_each_edge(geom, [&](const auto& a, const auto& b) {
        if ((a[1] > y) != (b[1] > y)) {
            const double cross = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if (x < cross) in = !in;
        }
    });
    return in;
}

Vector sdf_ground_truth(const Geometry2D& geom, const Points& points) {
    geom.validate();
    if (points.rows() != 2) throw UsageError("sdf_ground_truth expects 2-D points");
    Vector out(points.cols());
    for (Index j = 0; j < points.cols(); ++j) {
        const double x = points(0, j), y = points(1, j);
        double best = std::numeric_limits<double>::infinity();
        for_each_edge(geom, [&](const auto& a, const auto& b) { best = std::min(best, segment_distance(x, y, a, b)); });
        out(j) = inside(geom, x, y) ? -best : best;
    }
    return out;
}

Points boundary_points(const Geometry2D& geom, Index n, Rng& rng) {
    geom.validate();
    struct Edge {
        std::array<double, 2> a, b;
        double start;
    };
    std::vector<Edge> edges;
    double total = 0.0;
    for_each_edge(geom, [&](const auto& a, const auto& b) {
        edges.push_back({a, b, total});
        total += std::hypot(b[0] - a[0], b[1] - a[1]);
    });
    Points p(2, n);
    for (Index j = 0; j < n; ++j) {
        const double s = rng.uniform(0.0, total);
        auto it = std::upper_bound(edges.begin(), edges.end(), s, [](double v, const Edge& e) { return v < e.start; });
        const Edge& e = *std::prev(it);
        const double len = std::hypot(e.b[0] - e.a[0], e.b[1] - e.a[1]);
        const double f = std::clamp((s - e.start) / len, 0.0, 1.0);
        p(0, j) = e.a[0] + f * (e.b[0] - e.a[0]);
        p(1, j) = e.a[1] + f * (e.b[1] - e.a[1]);
    }
    return p;
}

Geometry2D load_geometry(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open geometry file " + path.string());
    Geometry2D g;
    Polygon current;
    std::string line;
    int lineno = 0;
    auto flush = [&] {
        if (!current.vertices.empty()) g.polygons.push_back(std::move(current));
        current = Polygon{};
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            flush();
            continue;
        }
        if (line[line.find_first_not_of(" \t")] == '#') continue;
        std::istringstream ls(line);
        double x, y;
        if (!(ls >> x >> y)) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected \"x y\"");
        current.vertices.push_back({x, y});
    }
    flush();
    g.validate();
    return g;
}

void save_geometry(const Geometry2D& geom, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write geometry file " + path.string());
    out << std::setprecision(17);
    for (std::size_t i = 0; i < geom.polygons.size(); ++i) {
        if (i > 0) out << '\n';
        for (const auto& v : geom.polygons[i].vertices) out << v[0] << ' ' << v[1] << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Reference grids

namespace {

// Index i with axis[i] <= q <= axis[i+1] and the interpolation weight.
std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double q) {
    if (axis.size() == 1) return {0, 0.0};
    if (q <= axis.front()) return {0, 0.0};
    if (q >= axis.back()) return {axis.size() - 2, 1.0};
    const auto it = std::upper_bound(axis.begin(), axis.end(), q);
    const std::size_t i = static_cast<std::size_t>(it - axis.begin()) - 1;
    return {i, (q - axis[i]) / (axis[i + 1] - axis[i])};
}

}  // namespace

double ReferenceGrid::at(double xq, double tq) const {
    const auto [i, wx] = bracket(x, xq);
    const auto [j, wt] = bracket(t, tq);
    const Index i0 = static_cast<Index>(i), j0 = static_cast<Index>(j);
    const Index i1 = std::min<Index>(i0 + 1, u.rows() - 1), j1 = std::min<Index>(j0 + 1, u.cols() - 1);
    return (1 - wx) * (1 - wt) * u(i0, j0) + wx * (1 - wt) * u(i1, j0) + (1 - wx) * wt * u(i0, j1) +
           wx * wt * u(i1, j1);
}

ReferenceGrid load_reference_grid(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open reference grid " + path.string());
    long nx = 0, nt = 0;
    if (!(in >> nx >> nt) || nx < 1 || nt < 1) throw IoError(path.string() + ": bad header, expected \"nx nt\"");
    ReferenceGrid g;
    g.x.resize(static_cast<std::size_t>(nx));
    g.t.resize(static_cast<std::size_t>(nt));
    g.u.resize(nx, nt);
    for (double& v : g.x)
        if (!(in >> v)) throw IoError(path.string() + ": truncated x axis");
    for (double& v : g.t)
        if (!(in >> v)) throw IoError(path.string() + ": truncated t axis");
    for (long i = 0; i < nx; ++i)
        for (long j = 0; j < nt; ++j)
            if (!(in >> g.u(i, j))) throw IoError(path.string() + ": truncated values");
    if (!std::is_sorted(g.x.begin(), g.x.end()) || !std::is_sorted(g.t.begin(), g.t.end()))
        throw IoError(path.string() + ": axes must be increasing");
    return g;
}

void save_reference_grid(const ReferenceGrid& grid, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write grid " + path.string());
    out << std::setprecision(17) << grid.x.size() << ' ' << grid.t.size() << '\n';
    auto row = [&out](const std::vector<double>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
        out << '\n';
    };
    row(grid.x);
    row(grid.t);
    for (Index i = 0; i < grid.u.rows(); ++i) {
        for (Index j = 0; j < grid.u.cols(); ++j) out << (j ? " " : "") << grid.u(i, j);
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Problem factories

namespace {

Condition periodic_pairs(const Box& box, int axis, Index n, std::vector<int> channels, int order, Rng& rng) {
    Condition c;
    c.kind = Condition::Kind::periodic;
    c.axis = axis;
    c.points = uniform_points(box, n, rng);
    c.points.row(axis).setConstant(box.lower[axis]);
    c.channels = std::move(channels);
    c.order = order;
    return c;
}

Condition initial_slice(const Box& box, Index n, Rng& rng, double (*h)(double)) {
    Condition c;
    c.kind = Condition::Kind::target;
    c.points = uniform_points(box, n, rng);
    c.points.row(box.time_axis).setConstant(box.lower[box.time_axis]);
    c.targets.resize(1, n);
    for (Index j = 0; j < n; ++j) c.targets(0, j) = h(c.points(0, j));
    return c;
}

double sine(double x) { return std::sin(x); }

}  // namespace

Problem convection(double beta, Index n_ic, Index n_bc, Rng& rng) {
    Problem p;
    p.name = "convection";
    p.kind = ProblemKind::convection;
    p.box = Box{{0.0, 0.0}, {2.0 * kPi, 1.0}, 1};
    p.residual_order = 1;
    p.beta = beta;
    Rng ic_rng = rng.stream("ic"), bc_rng = rng.stream("bc");
    p.ic.push_back(initial_slice(p.box, n_ic, ic_rng, sine));
    p.bc.push_back(periodic_pairs(p.box, 0, n_bc, {0}, 0, bc_rng));
    return p;
}

Problem allen_cahn(Index n_ic, Index n_bc, Rng& rng, AcDerivativeMatch match,
                   std::shared_ptr<const ReferenceGrid> reference) {
    Problem p;
    p.name = "allen_cahn";
    p.kind = ProblemKind::allen_cahn;
    p.box = Box{{-1.0, 0.0}, {1.0, 1.0}, 1};
    p.residual_order = 2;
    Rng ic_rng = rng.stream("ic"), bc_rng = rng.stream("bc");
    p.ic.push_back(initial_slice(p.box, n_ic, ic_rng, allen_cahn_initial));
    const ad::JetLayout jl(2, 1);
    const int deriv = match == AcDerivativeMatch::u_t ? jl.first(1) : jl.first(0);
    p.bc.push_back(periodic_pairs(p.box, 0, n_bc, {0, deriv}, 1, bc_rng));
    p.reference_grid = std::move(reference);
    return p;
}

Problem eikonal(std::shared_ptr<const Geometry2D> geometry, Index n_contour, Index n_edge, Rng& rng) {
    if (!geometry) throw UsageError("eikonal problem needs a geometry");
    geometry->validate();
    Problem p;
    p.name = "eikonal";
    p.kind = ProblemKind::eikonal;
    p.box = Box{{-1.0, -1.0}, {1.0, 1.0}, -1};
    p.residual_order = 1;

    Rng ic_rng = rng.stream("ic"), bc_rng = rng.stream("bc");
    Condition contour;
    contour.kind = Condition::Kind::target;
    contour.points = boundary_points(*geometry, n_contour, ic_rng);
    contour.targets = Matrix::Zero(1, n_contour);
    p.ic.push_back(std::move(contour));

    // Edge points cycle through the four sides of the square.
    Condition edges;
    edges.kind = Condition::Kind::positivity;
    edges.points.resize(2, n_edge);
    for (Index j = 0; j < n_edge; ++j) {
        const double s = bc_rng.uniform(-1.0, 1.0);
        switch (j % 4) {
            case 0: edges.points.col(j) << s, -1.0; break;
            case 1: edges.points.col(j) << s, 1.0; break;
            case 2: edges.points.col(j) << -1.0, s; break;
            default: edges.points.col(j) << 1.0, s; break;
        }
    }
    p.bc.push_back(std::move(edges));
    p.geometry = std::move(geometry);
    return p;
}

Problem harmonic_ode(double k, double lower, double upper) {
    if (!(upper > lower)) throw UsageError("harmonic ODE needs lower < upper");
    Problem p;
    p.name = "harmonic_ode";
    p.kind = ProblemKind::harmonic_ode;
    p.box = Box{{lower}, {upper}, -1};
    p.residual_order = 2;
    p.k = k;
    Condition start;
    start.kind = Condition::Kind::target;
    start.points = Points::Constant(1, 1, lower);
    start.channels = {0, 1};
    start.order = 1;
    start.targets.resize(2, 1);
    start.targets << std::sin(k * lower), k * std::cos(k * lower);
    p.ic.push_back(std::move(start));
    return p;
}

// ---------------------------------------------------------------------------
// Residuals and losses

namespace {

template <typename J>
auto dispatch_residual(const Problem& problem, const J& j) {
    switch (problem.kind) {
        case ProblemKind::convection: return convection_residual(j, problem.beta);
        case ProblemKind::allen_cahn: return allen_cahn_residual(j);
        case ProblemKind::eikonal: return eikonal_residual(j);
        case ProblemKind::harmonic_ode: return harmonic_ode_residual(j, problem.k);
    }
    throw UsageError("unknown problem kind");
}

}  // namespace

ad::Var residual(const Problem& problem, const net::JetOutput& jets) {
    if (jets.layout.order() < problem.residual_order) throw UsageError("jet order too low for this residual");
    return dispatch_residual(problem, jets);
}

double residual(const Problem& problem, const ad::JetValue& jet) { return dispatch_residual(problem, ScalarJet{jet}); }

Vector residual_values(const net::FieldNetwork& net, const Problem& problem, const Points& points) {
    Vector out(points.cols());
    for (Index start = 0; start < points.cols(); start += kChunk) {
        const Index n = std::min(kChunk, points.cols() - start);
        ad::Tape tape;
        tape.set_grad_enabled(false);
        const net::JetOutput jo = net.forward(tape, points.middleCols(start, n), problem.residual_order);
        out.segment(start, n) = residual(problem, jo).value().row(0).transpose();
    }
    return out;
}

ad::Var condition_loss(ad::Tape& tape, const net::FieldNetwork& net, const Problem& problem, const Condition& c) {
    const Index n = c.size();
    if (n == 0) throw UsageError("empty condition block");
    switch (c.kind) {
        case Condition::Kind::target: {
            if (c.targets.rows() != static_cast<Index>(c.channels.size()) || c.targets.cols() != n)
                throw UsageError("condition targets do not match channels x points");
            const net::JetOutput out = net.forward(tape, c.points, c.order);
            ad::Var total;
            for (std::size_t k = 0; k < c.channels.size(); ++k) {
                ad::Var diff = out.channel(c.channels[k]) - tape.constant(Matrix(c.targets.row(static_cast<Index>(k))));
                ad::Var term = sum(square(diff));
                total = total.valid() ? total + term : term;
            }
            return total / static_cast<double>(n * static_cast<Index>(c.channels.size()));
        }
        case Condition::Kind::periodic: {
            Points both(c.points.rows(), 2 * n);
            both.leftCols(n) = c.points;
            both.rightCols(n) = c.points;
            both.rightCols(n).row(c.axis).setConstant(problem.box.upper.at(c.axis));
            const net::JetOutput out = net.forward(tape, both, c.order);
            ad::Var total;
            for (int ch : c.channels) {
                ad::Var v = out.channel(ch);
                ad::Var diff = tape.cols(v, 0, n) - tape.cols(v, n, n);
                ad::Var term = sum(square(diff));
                total = total.valid() ? total + term : term;
            }
            return total / static_cast<double>(n * static_cast<Index>(c.channels.size()));
        }
        case Condition::Kind::positivity: {
            const net::JetOutput out = net.forward(tape, c.points, 0);
            return mean(square(relu(-out.value())));
        }
    }
    throw UsageError("unknown condition kind");
}

double condition_loss(const net::FieldNetwork& net, const Problem& problem, const Condition& c) {
    ad::Tape tape;
    tape.set_grad_enabled(false);
    return condition_loss(tape, net, problem, c).scalar();
}

double ic_loss(const net::FieldNetwork& net, const Problem& problem) {
    double total = 0.0;
    for (const Condition& c : problem.ic) total += condition_loss(net, problem, c);
    return total;
}

double bc_loss(const net::FieldNetwork& net, const Problem& problem) {
    double total = 0.0;
    for (const Condition& c : problem.bc) total += condition_loss(net, problem, c);
    return total;
}

bool has_reference(const Problem& problem) {
    switch (problem.kind) {
        case ProblemKind::convection:
        case ProblemKind::harmonic_ode: return true;
        case ProblemKind::allen_cahn: return problem.reference_grid != nullptr;
        case ProblemKind::eikonal: return problem.geometry != nullptr;
    }
    return false;
}

Vector reference_values(const Problem& problem, const Points& points) {
    if (!has_reference(problem)) throw UsageError("problem " + problem.name + " has no reference solution");
    Vector out(points.cols());
    switch (problem.kind) {
        case ProblemKind::convection:
            for (Index j = 0; j < points.cols(); ++j) out(j) = convection_exact(points(0, j), points(1, j), problem.beta);
            break;
        case ProblemKind::harmonic_ode:
            for (Index j = 0; j < points.cols(); ++j) out(j) = std::sin(problem.k * points(0, j));
            break;
        case ProblemKind::allen_cahn:
            for (Index j = 0; j < points.cols(); ++j) out(j) = problem.reference_grid->at(points(0, j), points(1, j));
            break;
        case ProblemKind::eikonal: out = sdf_ground_truth(*problem.geometry, points); break;
    }
    return out;
}

std::vector<int> evaluation_counts(const Problem& problem) {
    switch (problem.kind) {
        case ProblemKind::eikonal: return {256, 256};
        case ProblemKind::harmonic_ode: return {1000};
        default: return {256, 100};
    }
}

Points evaluation_grid(const Problem& problem) {
    const std::vector<int> counts = evaluation_counts(problem);
    return lattice(problem.box, counts);
}

}  // namespace r3::pde
