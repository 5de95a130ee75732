#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "r3/network.hpp"
#include "r3/rng.hpp"

namespace r3::pde {

using net::Points;
using ad::Matrix;
using ad::Vector;
using ad::Index;

// Axis-aligned domain. `time_axis` is -1 for steady problems.
struct Box {
    std::vector<double> lower, upper;
    int time_axis = -1;

    int dim() const noexcept { return static_cast<int>(lower.size()); }
    double volume() const;
    double extent(int axis) const { return upper.at(axis) - lower.at(axis); }
    bool contains(std::span<const double> p, double slack = 0.0) const;
};

Points uniform_points(const Box& box, Index n, Rng& rng);

// Regular lattice with `counts[a]` points per axis, endpoints included. The
// first axis varies fastest.
Points lattice(const Box& box, std::span<const int> counts);

// ---------------------------------------------------------------------------
// Residual operators. `J` is either a network jet batch (net::JetOutput, which
// yields tape variables) or ScalarJet (plain doubles). Axis 0 is x; for time
// problems axis 1 is t.

struct ScalarJet {
    const ad::JetValue& jet;
    double value() const { return jet.value; }
    double d(int i) const { return jet.d1(i); }
    double dd(int i, int j) const { return jet.d2(i, j); }
};

template <typename J>
auto convection_residual(const J& j, double beta) {
    return j.d(1) + beta * j.d(0);
}

template <typename J>
auto allen_cahn_residual(const J& j) {
    auto u = j.value();
    return j.d(1) - 0.0001 * j.dd(0, 0) + 5.0 * u * u * u - 5.0 * u;
}

// Tape version keeps the gradient of the norm finite at a zero gradient.
inline constexpr double kEikonalSmoothing = 1e-12;

template <typename J>
auto eikonal_residual(const J& j) {
    auto gx = j.d(0);
    auto gy = j.d(1);
    if constexpr (std::is_same_v<decltype(gx), double>) {
        return std::sqrt(gx * gx + gy * gy) - 1.0;
    } else {
        return sqrt(square(gx) + square(gy) + kEikonalSmoothing) - 1.0;
    }
}

template <typename J>
auto harmonic_ode_residual(const J& j, double k) {
    return j.dd(0, 0) + k * k * j.value();
}

double convection_exact(double x, double t, double beta);

// ---------------------------------------------------------------------------
// Geometry for signed distance problems.

struct Polygon {
    std::vector<std::array<double, 2>> vertices;  // closed implicitly
};

struct Geometry2D {
    std::vector<Polygon> polygons;

    static Geometry2D regular_polygon(double cx, double cy, double radius, int sides);
    double perimeter() const;
    void validate() const;
};

// Even-odd rule over all polygons.
bool inside(const Geometry2D& geom, double x, double y);
// Distance to the nearest edge, negative inside. Throws GeometryError on a
// zero-length edge.
Vector sdf_ground_truth(const Geometry2D& geom, const Points& points);
// Points spread along the boundary by arc length.
Points boundary_points(const Geometry2D& geom, Index n, Rng& rng);

Geometry2D load_geometry(const std::filesystem::path& path);
void save_geometry(const Geometry2D& geom, const std::filesystem::path& path);

// u on an x-by-t lattice; text format "nx nt", x axis, t axis, then the
// nx*nt values row-major over (x, t).
struct ReferenceGrid {
    std::vector<double> x, t;
    Matrix u;  // nx x nt

    // Bilinear interpolation, clamped to the lattice.
    double at(double xq, double tq) const;
};

ReferenceGrid load_reference_grid(const std::filesystem::path& path);
// Allen-Cahn solution on [-1, 1] x [0, 1] by ETDRK4 in Fourier space with
// `modes` points; the grid has modes + 1 x samples (x = 1 repeats x = -1).
ReferenceGrid allen_cahn_spectral_reference(int modes = 512, double dt = 1e-4, int nt = 201);
void save_reference_grid(const ReferenceGrid& grid, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Problems.

enum class ProblemKind { convection, allen_cahn, eikonal, harmonic_ode };

// Which derivative the Allen-Cahn boundary pairing matches besides u itself.
enum class AcDerivativeMatch { u_t, u_x };

// One block of initial or boundary data.
struct Condition {
    enum class Kind { target, periodic, positivity };
    Kind kind = Kind::target;
    Points points;          // periodic: points on the lower face of `axis`
    int axis = 0;           // periodic only
    std::vector<int> channels{0};  // jet channels compared (0 = value)
    Matrix targets;         // target only: channels.size() x n
    int order = 0;          // jet order needed to read `channels`

    Index size() const { return points.cols(); }
};

struct Problem {
    std::string name;
    ProblemKind kind = ProblemKind::convection;
    Box box;
    int residual_order = 1;
    double beta = 0.0;  // convection
    double k = 0.0;     // harmonic ODE
    std::vector<Condition> ic, bc;
    std::shared_ptr<const ReferenceGrid> reference_grid;  // Allen-Cahn
    std::shared_ptr<const Geometry2D> geometry;           // Eikonal
};

Problem convection(double beta, Index n_ic, Index n_bc, Rng& rng);
Problem allen_cahn(Index n_ic, Index n_bc, Rng& rng, AcDerivativeMatch match = AcDerivativeMatch::u_t,
                   std::shared_ptr<const ReferenceGrid> reference = nullptr);
Problem eikonal(std::shared_ptr<const Geometry2D> geometry, Index n_contour, Index n_edge, Rng& rng);
// u'' + k^2 u = 0 on [lower, upper] with Cauchy data of sin(kx) at `lower`.
Problem harmonic_ode(double k, double lower, double upper);

double allen_cahn_initial(double x);

// Residual of a recorded jet batch (1 x batch) and of a single jet.
ad::Var residual(const Problem& problem, const net::JetOutput& jets);
double residual(const Problem& problem, const ad::JetValue& jet);

// Residuals of `net` at every column of `points`, without recording gradients.
Vector residual_values(const net::FieldNetwork& net, const Problem& problem, const Points& points);

// Mean squared mismatch of one condition block, recorded on `tape`.
ad::Var condition_loss(ad::Tape& tape, const net::FieldNetwork& net, const Problem& problem, const Condition& c);
double condition_loss(const net::FieldNetwork& net, const Problem& problem, const Condition& c);

// Sums of the per-block mean squared losses.
double ic_loss(const net::FieldNetwork& net, const Problem& problem);
double bc_loss(const net::FieldNetwork& net, const Problem& problem);

bool has_reference(const Problem& problem);
// Reference solution at each column; throws UsageError when none exists.
Vector reference_values(const Problem& problem, const Points& points);

// Default evaluation lattice: 256 x 100 for (x, t), 256 x 256 for Eikonal,
// 1000 points for the ODE.
Points evaluation_grid(const Problem& problem);
std::vector<int> evaluation_counts(const Problem& problem);

}  // namespace r3::pde
