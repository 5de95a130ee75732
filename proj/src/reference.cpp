#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "r3/errors.hpp"
#include "r3/pde.hpp"

namespace r3::pde {

namespace {

using cvec = std::vector<std::complex<double>>;
constexpr double kDiffusion = 0.0001;
constexpr double kReaction = 5.0;

}  // namespace

// Kassam-Trefethen ETDRK4 with the linear part L = 5 - eps k^2 and the
// nonlinear part N(u) = -5 u^3.
ReferenceGrid allen_cahn_spectral_reference(int modes, double dt, int nt) {
    if (modes < 8 || modes % 2) throw UsageError("spectral reference needs an even number of modes >= 8");
    if (nt < 2 || !(dt > 0.0)) throw UsageError("spectral reference needs nt >= 2 and dt > 0");
    const double frame = 1.0 / (nt - 1);
    const long steps = std::lround(frame / dt);
    if (steps < 1 || std::abs(steps * dt - frame) > 1e-12 * frame)
        throw UsageError("dt must divide the output interval 1 / (nt - 1)");

    const std::size_t n = static_cast<std::size_t>(modes);
    const double pi = std::numbers::pi;
    std::vector<double> x(n), lin(n);
    for (std::size_t j = 0; j < n; ++j) {
        x[j] = -1.0 + 2.0 * static_cast<double>(j) / modes;
        const double m = j < n / 2 ? static_cast<double>(j) : static_cast<double>(j) - modes;
        const double k = pi * m;
        lin[j] = kReaction - kDiffusion * k * k;
    }

    // Contour-integral coefficients.
    const int contour = 32;
    std::vector<double> e(n), e2(n), q(n), f1(n), f2(n), f3(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double h = dt * lin[j];
        e[j] = std::exp(h);
        e2[j] = std::exp(h / 2);
        std::complex<double> sq{}, s1{}, s2{}, s3{};
        for (int c = 1; c <= contour; ++c) {
            const std::complex<double> r = std::exp(std::complex<double>(0.0, pi * (c - 0.5) / contour));
            const std::complex<double> z = h + r, ez = std::exp(z), z3 = z * z * z;
            sq += (std::exp(z / 2.0) - 1.0) / z;
            s1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
            s2 += (2.0 + z + ez * (-2.0 + z)) / z3;
            s3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
        }
        q[j] = dt * (sq / double(contour)).real();
        f1[j] = dt * (s1 / double(contour)).real();
        f2[j] = dt * (s2 / double(contour)).real();
        f3[j] = dt * (s3 / double(contour)).real();
    }

    Eigen::FFT<double> fft;
    std::vector<double> u(n), cube(n);
    for (std::size_t j = 0; j < n; ++j) u[j] = allen_cahn_initial(x[j]);
    cvec v;
    fft.fwd(v, u);
    auto nonlinear = [&](const cvec& w) {
        std::vector<double> s;
        fft.inv(s, w);
        for (std::size_t j = 0; j < n; ++j) cube[j] = -kReaction * s[j] * s[j] * s[j];
        cvec out;
        fft.fwd(out, cube);
        return out;
    };

    ReferenceGrid g;
    g.x.resize(n + 1);
    for (std::size_t j = 0; j < n; ++j) g.x[j] = x[j];
    g.x[n] = 1.0;
    g.t.resize(static_cast<std::size_t>(nt));
    g.u.resize(static_cast<Index>(n + 1), nt);
    auto record = [&](int col) {
        std::vector<double> s;
        fft.inv(s, v);
        for (std::size_t j = 0; j < n; ++j) g.u(static_cast<Index>(j), col) = s[j];
        g.u(static_cast<Index>(n), col) = s[0];
        g.t[static_cast<std::size_t>(col)] = col * frame;
    };
    record(0);
    cvec a(n), b(n), c(n);
    for (int col = 1; col < nt; ++col) {
        for (long s = 0; s < steps; ++s) {
            const cvec nv = nonlinear(v);
            for (std::size_t j = 0; j < n; ++j) a[j] = e2[j] * v[j] + q[j] * nv[j];
            const cvec na = nonlinear(a);
            for (std::size_t j = 0; j < n; ++j) b[j] = e2[j] * v[j] + q[j] * na[j];
            const cvec nb = nonlinear(b);
            for (std::size_t j = 0; j < n; ++j) c[j] = e2[j] * a[j] + q[j] * (2.0 * nb[j] - nv[j]);
            const cvec nc = nonlinear(c);
            for (std::size_t j = 0; j < n; ++j)
                v[j] = e[j] * v[j] + nv[j] * f1[j] + 2.0 * (na[j] + nb[j]) * f2[j] + nc[j] * f3[j];
        }
        record(col);
    }
    return g;
}

}  // namespace r3::pde
