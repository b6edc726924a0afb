#pragma once

// Euler-Maruyama simulation of diagonal-diffusion SDEs
//   X_{n+1,i} = X_{n,i} + b_i(X_n) dt + sigma_ii(X_n) sqrt(dt) xi_{n,i}
// with first-exit detection, and the two benchmark coefficient sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "kano/errors.hpp"
#include "kano/rng.hpp"

namespace kano::sde {

using VecFn = std::function<void(const double* x, double* out)>;
using DomainFn = std::function<bool(const double* x)>;

struct SdeSpec {
    std::size_t d = 1;
    VecFn drift;      ///< b(x), d entries
    VecFn diffusion;  ///< diagonal of sigma(x), d entries
    DomainFn inside;  ///< domain membership; empty means all of R^d
    double T = 1.0;
    double dt = 1e-2;

    /// Number of steps T / dt; throws unless the ratio is integral.
    std::size_t steps() const {
        if (!(dt > 0.0) || !(T > 0.0)) throw ContractViolation("SDE horizon and step must be positive");
        const double n = T / dt;
        const double r = std::round(n);
        if (std::abs(n - r) > 1e-9 * std::max(1.0, r)) {
            throw ContractViolation("T/dt = " + std::to_string(n) + " is not an integer");
        }
        return static_cast<std::size_t>(r);
    }

    bool contains(const double* x) const { return !inside || inside(x); }
};

inline constexpr std::size_t kNoExit = std::numeric_limits<std::size_t>::max();

struct PathBundle {
    std::size_t d = 0;
    std::size_t steps = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::size_t path_index = 0;
    std::vector<double> times;  ///< steps + 1
    std::vector<double> X;      ///< (steps + 1) x d
    std::vector<double> xi;     ///< steps x d standard normals
    std::size_t exit_index = kNoExit;

    const double* state(std::size_t n) const { return X.data() + n * d; }
    const double* noise(std::size_t n) const { return xi.data() + n * d; }
    bool exited() const { return exit_index != kNoExit; }
    /// Last index whose state is still usable (exit index or terminal).
    std::size_t last() const { return exited() ? exit_index : steps; }
};

/// Noise stream of one path: Philox key seed ^ path_index, tag 0.
inline RandomStream path_stream(std::uint64_t seed, std::size_t path_index) {
    return RandomStream(seed ^ static_cast<std::uint64_t>(path_index), stream_tag::kPath);
}

inline PathBundle simulate(const SdeSpec& spec, const std::vector<double>& x0, std::uint64_t seed,
                           std::size_t path_index = 0) {
    if (x0.size() != spec.d) throw ContractViolation("initial state has the wrong dimension");
    if (!spec.contains(x0.data())) throw ContractViolation("initial state lies outside the domain");
    const std::size_t N = spec.steps(), d = spec.d;
    PathBundle b;
    b.d = d;
    b.steps = N;
    b.dt = spec.dt;
    b.seed = seed;
    b.path_index = path_index;
    b.times.resize(N + 1);
    b.X.resize((N + 1) * d);
    b.xi.resize(N * d);
    for (std::size_t i = 0; i < d; ++i) b.X[i] = x0[i];
    auto rng = path_stream(seed, path_index);
    const double sq = std::sqrt(spec.dt);
    std::vector<double> drift(d), diff(d);
    for (std::size_t n = 0; n < N; ++n) {
        b.times[n] = static_cast<double>(n) * spec.dt;
        const double* x = b.state(n);
        spec.drift(x, drift.data());
        spec.diffusion(x, diff.data());
        double* xn = b.X.data() + (n + 1) * d;
        double* z = b.xi.data() + n * d;
        for (std::size_t i = 0; i < d; ++i) {
            z[i] = rng.normal();
            xn[i] = x[i] + drift[i] * spec.dt + diff[i] * sq * z[i];
        }
        if (!b.exited() && !spec.contains(xn)) b.exit_index = n + 1;
    }
    b.times[N] = spec.T;
    return b;
}

/// Paths 0..count-1 from a common start; each path owns its stream.
inline std::vector<PathBundle> simulate_many(const SdeSpec& spec, const std::vector<double>& x0, std::uint64_t seed,
                                             std::size_t count) {
    std::vector<PathBundle> out;
    out.reserve(count);
    for (std::size_t p = 0; p < count; ++p) out.push_back(simulate(spec, x0, seed, p));
    return out;
}

/// b_i = 0.2 sin(2 pi x_i), sigma_ii = (0.25 + 0.1 cos(2 pi x_i)) / (sqrt(d) pi).
inline double periodic_drift(double xi) { return 0.2 * std::sin(2.0 * std::numbers::pi * xi); }

inline double periodic_sigma(double xi, std::size_t d) {
    return (0.25 + 0.1 * std::cos(2.0 * std::numbers::pi * xi)) / (std::sqrt(static_cast<double>(d)) * std::numbers::pi);
}

inline SdeSpec periodic_coeffs(std::size_t d, double T = 1.0, double dt = 1e-2) {
    if (d < 1) throw ContractViolation("dimension must be >= 1");
    SdeSpec s;
    s.d = d;
    s.T = T;
    s.dt = dt;
    s.drift = [d](const double* x, double* out) {
        for (std::size_t i = 0; i < d; ++i) out[i] = periodic_drift(x[i]);
    };
    s.diffusion = [d](const double* x, double* out) {
        for (std::size_t i = 0; i < d; ++i) out[i] = periodic_sigma(x[i], d);
    };
    return s;
}

/// b(x) = x, sigma = I / sqrt(d).
inline SdeSpec lq_coeffs(std::size_t d, double T = 1.0, double dt = 1e-2) {
    if (d < 1) throw ContractViolation("dimension must be >= 1");
    SdeSpec s;
    s.d = d;
    s.T = T;
    s.dt = dt;
    s.drift = [d](const double* x, double* out) {
        for (std::size_t i = 0; i < d; ++i) out[i] = x[i];
    };
    const double sig = 1.0 / std::sqrt(static_cast<double>(d));
    s.diffusion = [d, sig](const double*, double* out) {
        for (std::size_t i = 0; i < d; ++i) out[i] = sig;
    };
    return s;
}

/// Axis-aligned box [lo, hi]^d as a domain predicate.
inline DomainFn box_domain(std::size_t d, double lo, double hi) {
    return [d, lo, hi](const double* x) {
        for (std::size_t i = 0; i < d; ++i)
            if (!(x[i] >= lo && x[i] <= hi)) return false;
        return true;
    };
}

}  // namespace kano::sde
