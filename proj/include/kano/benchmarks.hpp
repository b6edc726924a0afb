#pragma once

// Closed-form solutions, drivers and derivative fields of the periodic
// semilinear and linear-quadratic benchmarks, plus the scalar RK4 Riccati
// solve k' = -2k - 1/d + k^2 / (d + k), k(T) = 1/d.
//
// Drivers follow dY = -f dt + Z . dW with Z = sigma^T grad u.

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "kano/errors.hpp"
#include "kano/sde.hpp"

namespace kano::bench {

/// u and its spatial derivatives at one (t, x). hess is d x d, third d x d x d.
struct Derivatives {
    double u = 0.0;
    std::vector<double> grad;
    std::vector<double> hess;
    std::vector<double> third;
};

using DriverFn = std::function<double(double t, const double* x, double y, const double* z, const double* hess)>;
using TerminalFn = std::function<double(const double* x)>;

/// A benchmark with an exact solution: evaluators, SDE, driver and terminal data.
struct Benchmark {
    std::string name;
    std::size_t d = 0;
    double T = 1.0;
    std::function<Derivatives(double t, const double* x)> exact;
    std::function<sde::SdeSpec(double dt)> sde;
    DriverFn driver;
    TerminalFn terminal;

    double u(double t, const double* x) const { return exact(t, x).u; }
};

// ---------------------------------------------------------------------------
// Periodic semilinear benchmark
// ---------------------------------------------------------------------------

inline double periodic_theta(double t, const double* x, std::size_t d, double T) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += x[i];
    return 2.0 * std::numbers::pi * (s + (T - t));
}

/// u = (sin + cos)(theta) / pi; every gradient entry 2 (cos - sin); every
/// Hessian entry -4 pi (sin + cos); every third derivative -8 pi^2 (cos - sin).
inline Derivatives periodic_u(double t, const double* x, std::size_t d, double T = 1.0) {
    const double th = periodic_theta(t, x, d, T);
    const double s = std::sin(th), c = std::cos(th), pi = std::numbers::pi;
    Derivatives r;
    r.u = (s + c) / pi;
    r.grad.assign(d, 2.0 * (c - s));
    r.hess.assign(d * d, -4.0 * pi * (s + c));
    r.third.assign(d * d * d, -8.0 * pi * pi * (c - s));
    return r;
}

inline double periodic_terminal(const double* x, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += x[i];
    const double th = 2.0 * std::numbers::pi * s;
    return (std::sin(th) + std::cos(th)) / std::numbers::pi;
}

/// h(t, x) = 2 (cos - sin)(2 pi (sum x + (T - t))).
inline double periodic_forcing(double t, const double* x, std::size_t d, double T = 1.0) {
    const double th = periodic_theta(t, x, d, T);
    return 2.0 * (std::cos(th) - std::sin(th));
}

/// f = 2 pi^2 y sum sigma_ii^2 - sum (b_i / sigma_ii) z_i + h(t, x).
inline double periodic_driver(double t, const double* x, double y, const double* z, std::size_t d, double T = 1.0) {
    double s2 = 0.0, bz = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double sig = sde::periodic_sigma(x[i], d);
        s2 += sig * sig;
        bz += sde::periodic_drift(x[i]) / sig * z[i];
    }
    return 2.0 * std::numbers::pi * std::numbers::pi * y * s2 - bz + periodic_forcing(t, x, d, T);
}

inline Benchmark periodic_benchmark(std::size_t d, double T = 1.0) {
    Benchmark b;
    b.name = "periodic";
    b.d = d;
    b.T = T;
    b.exact = [d, T](double t, const double* x) { return periodic_u(t, x, d, T); };
    b.sde = [d, T](double dt) { return sde::periodic_coeffs(d, T, dt); };
    b.driver = [d, T](double t, const double* x, double y, const double* z, const double*) {
        return periodic_driver(t, x, y, z, d, T);
    };
    b.terminal = [d](const double* x) { return periodic_terminal(x, d); };
    return b;
}

// ---------------------------------------------------------------------------
// Linear-quadratic benchmark
// ---------------------------------------------------------------------------

/// Isotropic reduction of the Riccati equation with A = B = D = I, Q = P = I/d, N = d.
inline double riccati_rhs(double k, std::size_t d) {
    const double dd = static_cast<double>(d);
    return -2.0 * k - 1.0 / dd + k * k / (dd + k);
}

/// k(t) on a uniform grid, integrated backward from k(T) = 1/d by RK4.
class RiccatiCurve {
public:
    RiccatiCurve() = default;

    RiccatiCurve(std::size_t d, double T, std::size_t steps) : d_(d), T_(T) {
        if (steps < 2) throw ContractViolation("Riccati solve needs at least 2 steps");
        if (d < 1 || !(T > 0.0)) throw ContractViolation("Riccati solve needs d >= 1 and T > 0");
        h_ = T / static_cast<double>(steps);
        k_.assign(steps + 1, 0.0);
        kdot_.assign(steps + 1, 0.0);
        double k = 1.0 / static_cast<double>(d);
        k_[steps] = k;
        for (std::size_t n = steps; n-- > 0;) {
            const double hh = -h_;
            const double a = riccati_rhs(k, d);
            const double b = riccati_rhs(k + 0.5 * hh * a, d);
            const double c = riccati_rhs(k + 0.5 * hh * b, d);
            const double e = riccati_rhs(k + hh * c, d);
            k += hh * (a + 2.0 * b + 2.0 * c + e) / 6.0;
            k_[n] = k;
        }
        for (std::size_t n = 0; n <= steps; ++n) kdot_[n] = riccati_rhs(k_[n], d);
    }

    std::size_t d() const { return d_; }
    double T() const { return T_; }
    std::size_t steps() const { return k_.size() - 1; }
    double time(std::size_t n) const { return n == steps() ? T_ : static_cast<double>(n) * h_; }
    double k_at(std::size_t n) const { return k_[n]; }
    double kdot_at(std::size_t n) const { return kdot_[n]; }

    /// k(t) by cubic Hermite interpolation with slopes from the ODE.
    double k(double t) const { return hermite(t).first; }
    double kdot(double t) const { return hermite(t).second; }

private:
    std::pair<double, double> hermite(double t) const {
        if (!(t >= 0.0 && t <= T_)) throw DomainError("t = " + std::to_string(t) + " outside [0, T]");
        const std::size_t N = steps();
        std::size_t n = static_cast<std::size_t>(t / h_);
        if (n >= N) n = N - 1;
        const double s = (t - time(n)) / h_;
        const double s2 = s * s, s3 = s2 * s;
        const double y0 = k_[n], y1 = k_[n + 1], m0 = kdot_[n] * h_, m1 = kdot_[n + 1] * h_;
        const double val = (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * m1;
        const double der = ((6 * s2 - 6 * s) * y0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * y1 + (3 * s2 - 2 * s) * m1) / h_;
        return {val, der};
    }

    std::size_t d_ = 0;
    double T_ = 1.0;
    double h_ = 0.0;
    std::vector<double> k_;
    std::vector<double> kdot_;
};

inline RiccatiCurve riccati_solve(std::size_t d, double T = 1.0, std::size_t steps = 10000) {
    return RiccatiCurve(d, T, steps);
}

/// u = k(t) |x|^2, grad = 2 k x, hess = 2 k I, third = 0.
inline Derivatives lq_u(double t, const double* x, const RiccatiCurve& curve) {
    const std::size_t d = curve.d();
    const double k = curve.k(t);
    Derivatives r;
    double n2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) n2 += x[i] * x[i];
    r.u = k * n2;
    r.grad.resize(d);
    for (std::size_t i = 0; i < d; ++i) r.grad[i] = 2.0 * k * x[i];
    r.hess.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) r.hess[i * d + i] = 2.0 * k;
    r.third.assign(d * d * d, 0.0);
    return r;
}

/// Driver of Y = u(t, X) along dX = X dt + dW / sqrt(d):
///   f = -(k'/k) y - sqrt(d) x . z - tr(hess) / (2 d).
inline double lq_driver(double t, const double* x, double y, const double* z, const double* hess,
                        const RiccatiCurve& curve) {
    const std::size_t d = curve.d();
    const double dd = static_cast<double>(d);
    double xz = 0.0, tr = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        xz += x[i] * z[i];
        tr += hess[i * d + i];
    }
    return -curve.kdot(t) / curve.k(t) * y - std::sqrt(dd) * xz - tr / (2.0 * dd);
}

inline Benchmark lq_benchmark(std::size_t d, double T = 1.0, std::size_t riccati_steps = 10000) {
    auto curve = std::make_shared<RiccatiCurve>(d, T, riccati_steps);
    Benchmark b;
    b.name = "lq";
    b.d = d;
    b.T = T;
    b.exact = [curve](double t, const double* x) { return lq_u(t, x, *curve); };
    b.sde = [d, T](double dt) { return sde::lq_coeffs(d, T, dt); };
    b.driver = [curve](double t, const double* x, double y, const double* z, const double* hess) {
        return lq_driver(t, x, y, z, hess, *curve);
    };
    b.terminal = [d](const double* x) {
        double n2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) n2 += x[i] * x[i];
        return n2 / static_cast<double>(d);
    };
    return b;
}

}  // namespace kano::bench
