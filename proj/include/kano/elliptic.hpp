#pragma once

// Green-kernel fixed-point solver for
//   -div(gamma grad u) + mu . grad u + lambda u = f~(u) - f_0,  u = g on the boundary,
// written as u = T(u) = int G (f~(u) - f_0) dy + w_g.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "kano/errors.hpp"
#include "kano/rng.hpp"

namespace kano::elliptic {

inline constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

/// Quadrature nodes of a toy domain with cell weights and grid neighbours.
struct Mesh {
    std::size_t dim = 1;
    double h = 0.0;
    std::vector<double> points;   ///< n * dim
    std::vector<double> weights;  ///< n
    std::vector<std::size_t> plus;   ///< n * dim: +h neighbour or kNone
    std::vector<std::size_t> minus;  ///< n * dim: -h neighbour or kNone
    double radius = 0.0;             ///< ball radius (dim 3) or 0 for the interval

    std::size_t size() const { return weights.size(); }
    const double* point(std::size_t i) const { return points.data() + i * dim; }
};

/// n equispaced nodes on [0, 1] with trapezoid weights.
inline Mesh interval_mesh(std::size_t n) {
    if (n < 3) throw ConfigError("interval mesh needs at least 3 nodes");
    Mesh m;
    m.dim = 1;
    m.h = 1.0 / static_cast<double>(n - 1);
    m.points.resize(n);
    m.weights.assign(n, m.h);
    m.weights.front() = m.weights.back() = 0.5 * m.h;
    m.plus.assign(n, kNone);
    m.minus.assign(n, kNone);
    for (std::size_t i = 0; i < n; ++i) {
        m.points[i] = static_cast<double>(i) * m.h;
        if (i + 1 < n) m.plus[i] = i + 1;
        if (i > 0) m.minus[i] = i - 1;
    }
    return m;
}

/// Cartesian nodes h * (i, j, k) strictly inside the ball |x| < R - h/2,
/// each carrying the volume h^3 of its cell.
inline Mesh ball_mesh(double R, std::size_t cells_per_radius) {
    if (!(R > 0.0) || cells_per_radius < 2) throw ConfigError("ball mesh needs R > 0 and >= 2 cells per radius");
    Mesh m;
    m.dim = 3;
    m.radius = R;
    m.h = R / static_cast<double>(cells_per_radius);
    const long n = static_cast<long>(cells_per_radius);
    const std::size_t side = static_cast<std::size_t>(2 * n + 1);
    std::vector<std::size_t> index(side * side * side, kNone);
    auto flat = [&](long i, long j, long k) {
        return static_cast<std::size_t>(((i + n) * (2 * n + 1) + (j + n)) * (2 * n + 1) + (k + n));
    };
    for (long i = -n; i <= n; ++i)
        for (long j = -n; j <= n; ++j)
            for (long k = -n; k <= n; ++k) {
                const double x = i * m.h, y = j * m.h, z = k * m.h;
                if (std::sqrt(x * x + y * y + z * z) < R - 0.5 * m.h) {
                    index[flat(i, j, k)] = m.weights.size();
                    m.points.insert(m.points.end(), {x, y, z});
                    m.weights.push_back(m.h * m.h * m.h);
                }
            }
    const std::size_t N = m.weights.size();
    m.plus.assign(N * 3, kNone);
    m.minus.assign(N * 3, kNone);
    for (long i = -n; i <= n; ++i)
        for (long j = -n; j <= n; ++j)
            for (long k = -n; k <= n; ++k) {
                const std::size_t id = index[flat(i, j, k)];
                if (id == kNone) continue;
                const long c[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    long up[3] = {c[0], c[1], c[2]}, dn[3] = {c[0], c[1], c[2]};
                    ++up[a];
                    --dn[a];
                    if (up[a] <= n) m.plus[id * 3 + a] = index[flat(up[0], up[1], up[2])];
                    if (dn[a] >= -n) m.minus[id * 3 + a] = index[flat(dn[0], dn[1], dn[2])];
                }
            }
    return m;
}

/// Stand-in for the W^{1,infty} norm: max |u| plus the largest forward-difference gradient magnitude.
inline double grid_norm(const Mesh& m, const std::vector<double>& u) {
    double vmax = 0.0, gmax = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        vmax = std::max(vmax, std::abs(u[i]));
        double g2 = 0.0;
        bool any = false;
        for (std::size_t a = 0; a < m.dim; ++a) {
            const std::size_t j = m.plus[i * m.dim + a];
            if (j == kNone) continue;
            const double diff = (u[j] - u[i]) / m.h;
            g2 += diff * diff;
            any = true;
        }
        if (any) gmax = std::max(gmax, std::sqrt(g2));
    }
    return vmax + gmax;
}

inline std::vector<double> difference(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

// ---------------------------------------------------------------------------
// Green kernels
// ---------------------------------------------------------------------------

struct GreenKernel {
    std::size_t dim = 1;
    std::function<double(const double*, const double*)> eval;
    /// Exponent of the derivative bound |d^beta G| <= C0 |x - y|^{1-d}.
    double bound_exponent = 0.0;
    /// Integral of G(x_i, .) over node i's own cell; empty when G is bounded
    /// and the plain quadrature weight applies.
    std::function<double(const Mesh&, std::size_t)> diagonal;
};

/// Dirichlet Green function of -d^2/dx^2 on [0, 1].
inline GreenKernel interval_green() {
    GreenKernel k;
    k.dim = 1;
    k.bound_exponent = 0.0;
    k.eval = [](const double* x, const double* y) { return x[0] <= y[0] ? x[0] * (1.0 - y[0]) : y[0] * (1.0 - x[0]); };
    return k;
}

/// Integral of 1/|r| over the unit cube centred at the origin.
inline constexpr double kUnitCubeInverseDistance = 2.3800773639795477;

/// Dirichlet Green function of -Laplace on the ball of radius R (image method):
///   G(x, y) = (1/4pi) (1/|x - y| - R / (|y| |x - y*|)),  y* = R^2 y / |y|^2.
inline GreenKernel ball_green(double R) {
    GreenKernel k;
    k.dim = 3;
    k.bound_exponent = -2.0;
    auto image = [R](const double* x, const double* y) {
        const double ny2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
        if (ny2 == 0.0) return 1.0 / R;
        const double s = R * R / ny2;
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            const double diff = x[a] - s * y[a];
            d2 += diff * diff;
        }
        return R / (std::sqrt(ny2) * std::sqrt(d2));
    };
    k.eval = [image](const double* x, const double* y) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) d2 += (x[a] - y[a]) * (x[a] - y[a]);
        return (1.0 / std::sqrt(d2) - image(x, y)) / (4.0 * std::numbers::pi);
    };
    // Singular part |x - y|^{2-d} integrated analytically over the cell,
    // regular image part by the midpoint rule.
    k.diagonal = [image](const Mesh& m, std::size_t i) {
        const double* x = m.point(i);
        return (m.h * m.h * kUnitCubeInverseDistance - m.weights[i] * image(x, x)) / (4.0 * std::numbers::pi);
    };
    return k;
}

/// Dense quadrature matrix K with (K f)_i ~ int G(x_i, y) f(y) dy.
class IntegralOperator {
public:
    IntegralOperator() = default;
    IntegralOperator(const Mesh& mesh, const GreenKernel& kernel) : n_(mesh.size()), K_(n_ * n_) {
        if (kernel.dim != mesh.dim) throw ContractViolation("kernel and mesh dimensions differ");
        for (std::size_t i = 0; i < n_; ++i) {
            const double* x = mesh.point(i);
            for (std::size_t j = 0; j < n_; ++j) {
                if (i == j && kernel.diagonal) {
                    K_[i * n_ + j] = kernel.diagonal(mesh, i);
                } else {
                    K_[i * n_ + j] = kernel.eval(x, mesh.point(j)) * mesh.weights[j];
                }
            }
        }
    }

    std::size_t size() const { return n_; }
    double entry(std::size_t i, std::size_t j) const { return K_[i * n_ + j]; }

    std::vector<double> apply(const std::vector<double>& f) const {
        if (f.size() != n_) throw ContractViolation("integral operator: field length mismatch");
        std::vector<double> out(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            const double* row = K_.data() + i * n_;
            double acc = 0.0;
            for (std::size_t j = 0; j < n_; ++j) acc += row[j] * f[j];
            out[i] = acc;
        }
        return out;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> K_;
};

// ---------------------------------------------------------------------------
// Problem, boundary extension, Picard iteration
// ---------------------------------------------------------------------------

using PointFn = std::function<double(const double*)>;

struct SemilinearProblem {
    double gamma = 1.0;
    double mu = 0.0;      ///< drift (1D only)
    double lambda = 0.0;  ///< zeroth-order coefficient
    std::vector<double> taylor;  ///< a_2, ..., a_H with f~(z) = sum_h a_h z^h
    PointFn f0 = [](const double*) { return 0.0; };
    PointFn g = [](const double*) { return 0.0; };
    double delta = 1.0;  ///< contraction ball radius in the grid norm

    double nonlinearity(double z) const {
        double acc = 0.0, p = z;
        for (double a : taylor) {
            p *= z;
            acc += a * p;
        }
        return acc;
    }
};

/// Finite-difference solve of -gamma w'' + mu w' + lambda w = 0 on the
/// interval with w(0) = g(0), w(1) = g(1).
inline std::vector<double> boundary_extension_1d(const Mesh& m, const SemilinearProblem& p) {
    const std::size_t n = m.size();
    const double h = m.h;
    const double lo = (-p.gamma / (h * h)) - p.mu / (2 * h);
    const double di = 2 * p.gamma / (h * h) + p.lambda;
    const double up = (-p.gamma / (h * h)) + p.mu / (2 * h);
    const double x0 = 0.0, x1 = 1.0;
    std::vector<double> w(n, 0.0);
    w.front() = p.g(&x0);
    w.back() = p.g(&x1);
    if (n == 2) return w;
    const std::size_t k = n - 2;
    std::vector<double> c(k, 0.0), d(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        double rhs = 0.0;
        if (i == 0) rhs -= lo * w.front();
        if (i == k - 1) rhs -= up * w.back();
        const double denom = di - (i > 0 ? lo * c[i - 1] : 0.0);
        const double scale = std::max({std::abs(lo), std::abs(di), std::abs(up)});
        if (!(std::abs(denom) > 1e-14 * scale)) throw SolverError("singular boundary-extension system");
        c[i] = up / denom;
        d[i] = (rhs - (i > 0 ? lo * d[i - 1] : 0.0)) / denom;
    }
    for (std::size_t i = k; i-- > 0;) w[i + 1] = d[i] - (i + 1 < k ? c[i] * w[i + 2] : 0.0);
    return w;
}

/// Seven-point finite-difference solve of -gamma Lap w + lambda w = 0 in the
/// ball, boundary values taken from g at the radial projection of missing
/// neighbours. Successive over-relaxation to a 1e-13 update tolerance.
inline std::vector<double> boundary_extension_ball(const Mesh& m, const SemilinearProblem& p) {
    const std::size_t n = m.size();
    const double h2 = m.h * m.h;
    std::vector<double> w(n, 0.0);
    // Fixed boundary contributions per node.
    std::vector<double> bsum(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = m.point(i);
        for (std::size_t a = 0; a < 3; ++a) {
            for (int sgn : {1, -1}) {
                const std::size_t j = sgn > 0 ? m.plus[i * 3 + a] : m.minus[i * 3 + a];
                if (j != kNone) continue;
                double y[3] = {x[0], x[1], x[2]};
                y[a] += sgn * m.h;
                const double r = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
                for (double& c : y) c *= m.radius / r;
                bsum[i] += p.g(y);
            }
        }
    }
    const double diag = 6.0 * p.gamma / h2 + p.lambda;
    if (!(diag > 0.0)) throw SolverError("boundary-extension operator is not positive");
    const double omega = 1.8;
    for (int iter = 0; iter < 20000; ++iter) {
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double nb = bsum[i];
            for (std::size_t a = 0; a < 3; ++a) {
                if (m.plus[i * 3 + a] != kNone) nb += w[m.plus[i * 3 + a]];
                if (m.minus[i * 3 + a] != kNone) nb += w[m.minus[i * 3 + a]];
            }
            const double target = p.gamma / h2 * nb / diag;
            const double next = w[i] + omega * (target - w[i]);
            change = std::max(change, std::abs(next - w[i]));
            w[i] = next;
        }
        if (change < 1e-13) return w;
    }
    throw SolverError("boundary extension did not converge");
}

inline std::vector<double> boundary_extension(const Mesh& m, const SemilinearProblem& p) {
    return m.dim == 1 ? boundary_extension_1d(m, p) : boundary_extension_ball(m, p);
}

struct PicardLogEntry {
    std::size_t j = 0;
    double step_norm = 0.0;
    double ratio = 0.0;
    double residual = 0.0;
};

struct PicardResult {
    std::vector<double> u;
    std::size_t iterations = 0;
    double rho = 0.0;
    double residual = 0.0;
    std::vector<PicardLogEntry> log;
};

/// J = ceil(log(1/eps) / log(1/rho)), at least 1.
inline std::size_t picard_iterations(double eps, double rho) {
    if (!(eps > 0.0 && eps < 1.0)) throw ContractViolation("target accuracy must lie in (0, 1)");
    if (!(rho < 1.0)) throw ContractViolation("contraction factor must be < 1");
    if (rho <= 0.0) return 1;
    const double J = std::ceil(std::log(1.0 / eps) / std::log(1.0 / rho));
    return std::max<std::size_t>(1, static_cast<std::size_t>(J));
}

class PicardSolver {
public:
    PicardSolver(Mesh mesh, const GreenKernel& kernel, SemilinearProblem problem)
        : mesh_(std::move(mesh)), K_(mesh_, kernel), problem_(std::move(problem)) {
        w_g_ = boundary_extension(mesh_, problem_);
        f0_.resize(mesh_.size());
        for (std::size_t i = 0; i < mesh_.size(); ++i) f0_[i] = problem_.f0(mesh_.point(i));
    }

    const Mesh& mesh() const { return mesh_; }
    const IntegralOperator& op() const { return K_; }
    const SemilinearProblem& problem() const { return problem_; }
    const std::vector<double>& w_g() const { return w_g_; }
    const std::vector<double>& f0() const { return f0_; }
    double norm(const std::vector<double>& u) const { return grid_norm(mesh_, u); }

    /// T(u) = K (f~(u) - f_0) + w_g; `u` must lie in the delta-ball.
    std::vector<double> apply_T(const std::vector<double>& u) const {
        if (u.size() != mesh_.size()) throw ContractViolation("apply_T: field length mismatch");
        const double nu = norm(u);
        if (nu > problem_.delta) {
            throw ContractViolation("iterate norm " + std::to_string(nu) + " exceeds the contraction radius " +
                                    std::to_string(problem_.delta));
        }
        std::vector<double> src(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) src[i] = problem_.nonlinearity(u[i]) - f0_[i];
        auto out = K_.apply(src);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w_g_[i];
        return out;
    }

    /// Smooth random field with grid norm `target`.
    std::vector<double> random_admissible(RandomStream& rng, double target) const {
        const std::size_t n = mesh_.size(), dim = mesh_.dim;
        std::vector<double> u(n, rng.uniform(-1.0, 1.0));
        for (int k = 0; k < 3; ++k) {
            const double amp = rng.uniform(-1.0, 1.0), phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            double freq[3] = {0.0, 0.0, 0.0};
            for (std::size_t a = 0; a < dim; ++a) freq[a] = rng.uniform(-std::numbers::pi, std::numbers::pi);
            for (std::size_t i = 0; i < n; ++i) {
                const double* x = mesh_.point(i);
                double arg = phase;
                for (std::size_t a = 0; a < dim; ++a) arg += freq[a] * x[a];
                u[i] += amp * std::cos(arg);
            }
        }
        const double nu = norm(u);
        if (nu > 0.0)
            for (double& v : u) v *= target / nu;
        return u;
    }

    /// Largest ||T(w1) - T(w2)|| / ||w1 - w2|| over random admissible pairs.
    /// Odd pairs are collinear (w2 = t w1), even pairs independent.
    double measure_rho(std::size_t pairs, std::uint64_t seed) const {
        RandomStream rng(seed, stream_tag::kProbe);
        double worst = 0.0;
        for (std::size_t k = 0; k < pairs; ++k) {
            const auto w1 = random_admissible(rng, problem_.delta * rng.uniform(0.5, 1.0));
            auto w2 = random_admissible(rng, problem_.delta * rng.uniform(0.1, 1.0));
            if (k % 2 == 1) {
                const double t = rng.uniform(0.0, 0.95);
                for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = t * w1[i];
            }
            const double den = norm(difference(w1, w2));
            if (den == 0.0) continue;
            worst = std::max(worst, norm(difference(apply_T(w1), apply_T(w2))) / den);
        }
        return worst;
    }

    /// Picard iteration from u_0 = 0 for J = ceil(log(1/eps)/log(1/rho)) steps.
    PicardResult solve(double eps, double rho) const {
        PicardResult r;
        r.rho = rho;
        r.iterations = picard_iterations(eps, rho);
        std::vector<double> u(mesh_.size(), 0.0);
        std::vector<double> next = apply_T(u);
        double prev_step = 0.0;
        int rising = 0;
        for (std::size_t j = 1; j <= r.iterations; ++j) {
            const auto prev = std::move(u);
            u = std::move(next);
            const double step = norm(difference(u, prev));
            // Ratios of steps at round-off level carry no information and are logged as 0.
            const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, norm(u));
            const double ratio = (j > 1 && prev_step > floor) ? step / prev_step : 0.0;
            rising = ratio > 1.0 ? rising + 1 : 0;
            if (rising >= 3) throw DivergenceError("step ratio above 1 for three consecutive Picard steps");
            next = apply_T(u);
            const double residual = norm(difference(next, u));
            r.log.push_back({j, step, ratio, residual});
            prev_step = step;
        }
        r.u = std::move(u);
        r.residual = r.log.back().residual;
        return r;
    }

private:
    Mesh mesh_;
    IntegralOperator K_;
    SemilinearProblem problem_;
    std::vector<double> w_g_;
    std::vector<double> f0_;
};

/// Semilinear toy: f~(z) = c z^2, constant source f_0 = -delta^2, g = 0.
struct ToyInstance {
    Mesh mesh;
    GreenKernel kernel;
    SemilinearProblem problem;
};

inline SemilinearProblem toy_problem(double delta, double c) {
    SemilinearProblem p;
    p.taylor = {c};
    p.delta = delta;
    const double src = -delta * delta;
    p.f0 = [src](const double*) { return src; };
    return p;
}

/// Interval [0, 1] with `nodes` quadrature nodes.
inline ToyInstance toy_interval(std::size_t nodes, double delta = 0.5, double c = 1.0) {
    return {interval_mesh(nodes), interval_green(), toy_problem(delta, c)};
}

/// Unit ball with `cells` grid cells per radius.
inline ToyInstance toy_ball(std::size_t cells, double delta = 0.5, double c = 1.0) {
    return {ball_mesh(1.0, cells), ball_green(1.0), toy_problem(delta, c)};
}

}  // namespace kano::elliptic
