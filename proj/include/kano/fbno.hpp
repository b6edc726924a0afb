#pragma once

// Feynman-Kac adapter: turns a scalar surrogate u(t, x) into the tuple
//   Y = u(X), Z = grad u(X), Ups = hess u(X), A_i = 1/2 sum_j sigma_jj^2 d_j d_j d_i u(X)
// along simulated paths, and measures the discrete BSDE residual
//   r_n = Y_{n+1} - Y_n + f(t_n, X_n, Y_n, sigma^T Z_n, Ups_n) dt - (sigma^T Z_n) . dW_n.

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "kano/benchmarks.hpp"
#include "kano/errors.hpp"
#include "kano/sde.hpp"

namespace kano::fbno {

using UEval = std::function<double(double t, const double* x)>;
using ExactFn = std::function<bench::Derivatives(double t, const double* x)>;

enum class SchemeKind { Analytic, Forward, Central };

struct DerivativeScheme {
    SchemeKind kind = SchemeKind::Central;
    double h = 1e-4;

    static DerivativeScheme analytic() { return {SchemeKind::Analytic, 0.0}; }
    static DerivativeScheme forward(double h) { return {SchemeKind::Forward, h}; }
    static DerivativeScheme central(double h) { return {SchemeKind::Central, h}; }

    void validate() const {
        if (kind != SchemeKind::Analytic && !(h > 0.0)) throw ContractViolation("finite-difference step must be > 0");
    }
};

inline std::string scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::Analytic: return "analytic";
        case SchemeKind::Forward: return "forward";
        case SchemeKind::Central: return "central";
    }
    return "?";
}

inline SchemeKind parse_scheme(const std::string& s) {
    if (s == "analytic") return SchemeKind::Analytic;
    if (s == "forward") return SchemeKind::Forward;
    if (s == "central") return SchemeKind::Central;
    throw ConfigError("unknown derivative scheme '" + s + "' (analytic, forward, central)");
}

/// A surrogate exposes point values; analytic schemes additionally need `exact`.
struct Surrogate {
    UEval value;
    ExactFn exact;
};

/// How much of the tuple to compute.
enum class Level { Value = 0, Gradient = 1, Hessian = 2, Full = 3 };

struct BsdeTuple {
    std::size_t d = 0;
    std::size_t count = 0;  ///< states 0..count-1 of the bundle
    Level level = Level::Full;
    std::vector<double> Y;    ///< count
    std::vector<double> Z;    ///< count x d
    std::vector<double> Ups;  ///< count x d x d
    std::vector<double> A;    ///< count x d

    const double* z(std::size_t n) const { return Z.data() + n * d; }
    const double* ups(std::size_t n) const { return Ups.data() + n * d * d; }
    const double* a(std::size_t n) const { return A.data() + n * d; }
};

namespace detail {

// Stencil evaluator: u at x + h * sum(offsets).
class Stencil {
public:
    Stencil(const UEval& u, double t, const double* x, std::size_t d, double h) : u_(u), t_(t), x_(x, x + d), h_(h) {}

    double at(std::initializer_list<std::pair<std::size_t, int>> shifts) {
        std::vector<double> y = x_;
        for (const auto& [axis, k] : shifts) y[axis] += static_cast<double>(k) * h_;
        return u_(t_, y.data());
    }

    double h() const { return h_; }

private:
    const UEval& u_;
    double t_;
    std::vector<double> x_;
    double h_;
};

inline void fd_derivatives(Stencil& st, SchemeKind kind, std::size_t d, Level level, double u0, double* grad,
                           double* hess, double* third_diag) {
    const double h = st.h();
    if (level >= Level::Gradient) {
        for (std::size_t i = 0; i < d; ++i) {
            grad[i] = kind == SchemeKind::Central ? (st.at({{i, 1}}) - st.at({{i, -1}})) / (2 * h)
                                                  : (st.at({{i, 1}}) - u0) / h;
        }
    }
    if (level >= Level::Hessian) {
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) {
                double v = 0.0;
                if (kind == SchemeKind::Central) {
                    v = i == j ? (st.at({{i, 1}}) - 2 * u0 + st.at({{i, -1}})) / (h * h)
                               : (st.at({{i, 1}, {j, 1}}) - st.at({{i, 1}, {j, -1}}) - st.at({{i, -1}, {j, 1}}) +
                                  st.at({{i, -1}, {j, -1}})) /
                                     (4 * h * h);
                } else {
                    v = (st.at({{i, 1}, {j, 1}}) - st.at({{i, 1}}) - st.at({{j, 1}}) + u0) / (h * h);
                }
                hess[i * d + j] = v;
                hess[j * d + i] = v;
            }
        }
    }
    if (level >= Level::Full) {
        // third_diag[i * d + j] = d_j d_j d_i u by nested stencils on d_i u.
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                double v = 0.0;
                if (kind == SchemeKind::Central) {
                    auto di = [&](int sj) {
                        return (st.at({{i, 1}, {j, sj}}) - st.at({{i, -1}, {j, sj}})) / (2 * h);
                    };
                    v = (di(1) - 2 * di(0) + di(-1)) / (h * h);
                } else {
                    auto di = [&](int sj) { return (st.at({{i, 1}, {j, sj}}) - st.at({{j, sj}})) / h; };
                    v = (di(2) - 2 * di(1) + di(0)) / (h * h);
                }
                third_diag[i * d + j] = v;
            }
        }
    }
}

}  // namespace detail

/// Samples the tuple at states 0..bundle.last().
inline BsdeTuple adapt(const Surrogate& u, const DerivativeScheme& scheme, const sde::PathBundle& bundle,
                       const sde::SdeSpec& spec, Level level = Level::Full) {
    scheme.validate();
    if (spec.d != bundle.d) throw ContractViolation("SDE and path dimensions differ");
    if (scheme.kind == SchemeKind::Analytic && !u.exact) {
        throw ContractViolation("analytic scheme needs a closed-form derivative evaluator");
    }
    if (scheme.kind != SchemeKind::Analytic && !u.value) throw ContractViolation("surrogate has no value evaluator");
    const std::size_t d = bundle.d;
    BsdeTuple r;
    r.d = d;
    r.level = level;
    r.count = bundle.last() + 1;
    r.Y.assign(r.count, 0.0);
    r.Z.assign(r.count * d, 0.0);
    r.Ups.assign(r.count * d * d, 0.0);
    r.A.assign(r.count * d, 0.0);
    std::vector<double> sig(d), third(d * d);
    for (std::size_t n = 0; n < r.count; ++n) {
        const double t = bundle.times[n];
        const double* x = bundle.state(n);
        double* grad = r.Z.data() + n * d;
        double* hess = r.Ups.data() + n * d * d;
        if (scheme.kind == SchemeKind::Analytic) {
            const auto e = u.exact(t, x);
            r.Y[n] = e.u;
            if (level >= Level::Gradient) std::copy(e.grad.begin(), e.grad.end(), grad);
            if (level >= Level::Hessian) std::copy(e.hess.begin(), e.hess.end(), hess);
            if (level >= Level::Full)
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) third[i * d + j] = e.third[(i * d + j) * d + j];
        } else {
            r.Y[n] = u.value(t, x);
            detail::Stencil st(u.value, t, x, d, scheme.h);
            detail::fd_derivatives(st, scheme.kind, d, level, r.Y[n], grad, hess, third.data());
        }
        if (level >= Level::Full) {
            spec.diffusion(x, sig.data());
            for (std::size_t i = 0; i < d; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += sig[j] * sig[j] * third[i * d + j];
                r.A[n * d + i] = 0.5 * acc;
            }
        }
        for (std::size_t k = 0; k < d * d; ++k)
            if (!std::isfinite(hess[k])) throw NumericalError("non-finite Hessian entry along a path");
        if (!std::isfinite(r.Y[n])) throw NumericalError("non-finite surrogate value along a path");
    }
    return r;
}

struct ResidualReport {
    std::vector<double> per_step;  ///< r_n for n = 0..count-2
    double sum_abs = 0.0;
    double sum_sq = 0.0;
    bool has_terminal = false;  ///< false when the path exited before T
    double terminal_gap = 0.0;  ///< |Y_N - g(X_N)|
};

inline ResidualReport bsde_residual(const BsdeTuple& tup, const sde::PathBundle& bundle, const sde::SdeSpec& spec,
                                    const bench::DriverFn& driver, const bench::TerminalFn& terminal) {
    if (tup.count != bundle.last() + 1 || tup.d != bundle.d) {
        throw ContractViolation("tuple and path bundle have different lengths");
    }
    if (tup.level < Level::Gradient) throw ContractViolation("residual needs Z");
    const std::size_t d = tup.d;
    const double dt = bundle.dt, sq = std::sqrt(dt);
    ResidualReport rep;
    std::vector<double> sig(d), z(d);
    for (std::size_t n = 0; n + 1 < tup.count; ++n) {
        const double* x = bundle.state(n);
        spec.diffusion(x, sig.data());
        double zdw = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            z[i] = sig[i] * tup.z(n)[i];
            zdw += z[i] * sq * bundle.noise(n)[i];
        }
        const double f = driver(bundle.times[n], x, tup.Y[n], z.data(), tup.ups(n));
        const double r = tup.Y[n + 1] - tup.Y[n] + f * dt - zdw;
        rep.per_step.push_back(r);
        rep.sum_abs += std::abs(r);
        rep.sum_sq += r * r;
    }
    if (!bundle.exited() && terminal) {
        rep.has_terminal = true;
        rep.terminal_gap = std::abs(tup.Y[tup.count - 1] - terminal(bundle.state(bundle.steps)));
    }
    return rep;
}

}  // namespace kano::fbno
