#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kano/benchmarks.hpp"

using namespace kano;
using namespace kano::bench;

namespace {

std::vector<double> random_point(RandomStream& rng, std::size_t d, double lo = -1.0, double hi = 1.0) {
    std::vector<double> x(d);
    for (auto& v : x) v = rng.uniform(lo, hi);
    return x;
}

}  // namespace

TEST(Periodic, TerminalOrigin) {
    const std::vector<double> x(5, 0.0);
    const auto r = periodic_u(1.0, x.data(), 5);
    EXPECT_NEAR(r.u, 1.0 / std::numbers::pi, 1e-15);
    for (double g : r.grad) EXPECT_NEAR(g, 2.0, 1e-15);
    for (double h : r.hess) EXPECT_NEAR(h, -4.0 * std::numbers::pi, 1e-14);
}

TEST(Periodic, DerivativesMatchFiniteDifferences) {
    RandomStream rng(11);
    const std::size_t d = 5;
    for (int k = 0; k < 100; ++k) {
        const double t = rng.uniform();
        auto x = random_point(rng, d);
        const auto r = periodic_u(t, x.data(), d);
        for (std::size_t i = 0; i < d; ++i) {
            const double h = 1e-5;
            auto xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const auto rp = periodic_u(t, xp.data(), d), rm = periodic_u(t, xm.data(), d);
            EXPECT_NEAR((rp.u - rm.u) / (2 * h), r.grad[i], 1e-6);
            for (std::size_t j = 0; j < d; ++j) {
                EXPECT_NEAR((rp.grad[j] - rm.grad[j]) / (2 * h), r.hess[i * d + j], 1e-5);
                EXPECT_NEAR((rp.hess[j * d + j] - rm.hess[j * d + j]) / (2 * h), r.third[(i * d + j) * d + j], 1e-4);
            }
        }
        for (std::size_t i = 1; i < d; ++i) EXPECT_EQ(r.grad[i], r.grad[0]);
    }
}

TEST(Periodic, TerminalConsistency) {
    RandomStream rng(12);
    for (int k = 0; k < 1000; ++k) {
        auto x = random_point(rng, 5, -3.0, 3.0);
        EXPECT_NEAR(periodic_u(1.0, x.data(), 5).u, periodic_terminal(x.data(), 5), 1e-12);
    }
}

TEST(Periodic, DriverValues) {
    const std::vector<double> x(5, 0.0), zero(5, 0.0), ones(5, 1.0);
    EXPECT_NEAR(periodic_driver(1.0, x.data(), 0.0, zero.data(), 5), 2.0, 1e-15);
    EXPECT_NEAR(periodic_driver(1.0, x.data(), 0.0, ones.data(), 5), 2.0, 1e-15);
}

TEST(Periodic, DriverSatisfiesTheGeneratorIdentity) {
    // -u_t - b . grad u - 1/2 tr(sigma^2 hess) equals f(t, x, u, sigma grad u).
    RandomStream rng(13);
    const std::size_t d = 5;
    for (int k = 0; k < 50; ++k) {
        const double t = rng.uniform();
        auto x = random_point(rng, d);
        const auto r = periodic_u(t, x.data(), d);
        const double h = 1e-6;
        const double ut = (periodic_u(t + h, x.data(), d).u - periodic_u(t - h, x.data(), d).u) / (2 * h);
        double gen = ut;
        std::vector<double> z(d);
        for (std::size_t i = 0; i < d; ++i) {
            const double sig = sde::periodic_sigma(x[i], d);
            gen += sde::periodic_drift(x[i]) * r.grad[i] + 0.5 * sig * sig * r.hess[i * d + i];
            z[i] = sig * r.grad[i];
        }
        EXPECT_NEAR(periodic_driver(t, x.data(), r.u, z.data(), d), -gen, 1e-7);
    }
}

TEST(Riccati, TerminalValueIsExact) {
    const auto c = riccati_solve(5);
    EXPECT_EQ(c.k_at(c.steps()), 0.2);
    EXPECT_EQ(c.k(1.0), 0.2);
}

TEST(Riccati, FourthOrderRichardsonRatio) {
    const double k1 = riccati_solve(5, 1.0, 20).k_at(0);
    const double k2 = riccati_solve(5, 1.0, 40).k_at(0);
    const double k4 = riccati_solve(5, 1.0, 80).k_at(0);
    const double ratio = std::abs(k1 - k2) / std::abs(k2 - k4);
    EXPECT_GE(ratio, 14.0);
    EXPECT_LE(ratio, 18.0);
}

TEST(Riccati, PositiveAndMonotone) {
    const auto c = riccati_solve(5);
    for (std::size_t n = 0; n <= c.steps(); ++n) {
        EXPECT_GT(c.k_at(n), 0.0);
        EXPECT_LT(c.kdot_at(n), 0.0);
        if (n > 0) EXPECT_LT(c.k_at(n), c.k_at(n - 1));
    }
}

TEST(Riccati, HermiteInterpolationBetweenSamples) {
    const auto coarse = riccati_solve(5, 1.0, 100);
    const auto fine = riccati_solve(5, 1.0, 10000);
    for (double t : {0.0, 0.0137, 0.333, 0.5, 0.9999, 1.0}) {
        EXPECT_NEAR(coarse.k(t), fine.k(t), 1e-8);
        EXPECT_NEAR(coarse.kdot(t), riccati_rhs(coarse.k(t), 5), 1e-5);
    }
}

TEST(Riccati, TooFewStepsIsContractViolation) {
    EXPECT_THROW(riccati_solve(5, 1.0, 1), ContractViolation);
}

TEST(LinearQuadratic, ClosedForm) {
    const auto c = riccati_solve(5);
    const std::vector<double> zero(5, 0.0), ones(5, 1.0);
    const auto r0 = lq_u(0.3, zero.data(), c);
    EXPECT_EQ(r0.u, 0.0);
    for (double g : r0.grad) EXPECT_EQ(g, 0.0);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r0.hess[i * 5 + i], 2.0 * c.k(0.3));
    EXPECT_NEAR(lq_u(1.0, ones.data(), c).u, 1.0, 1e-15);
    EXPECT_THROW(lq_u(1.5, ones.data(), c), DomainError);
    EXPECT_THROW(lq_u(-0.1, ones.data(), c), DomainError);
}

TEST(LinearQuadratic, GradientAndConstantHessian) {
    const auto c = riccati_solve(5);
    RandomStream rng(14);
    for (int k = 0; k < 100; ++k) {
        const double t = rng.uniform();
        auto x = random_point(rng, 5);
        auto y = random_point(rng, 5);
        const auto r = lq_u(t, x.data(), c);
        for (std::size_t i = 0; i < 5; ++i) {
            const double h = 1e-4;
            auto xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            EXPECT_NEAR((lq_u(t, xp.data(), c).u - lq_u(t, xm.data(), c).u) / (2 * h), r.grad[i], 1e-8);
        }
        EXPECT_EQ(r.hess, lq_u(t, y.data(), c).hess);
    }
}

TEST(LinearQuadratic, DriverSatisfiesTheGeneratorIdentity) {
    const auto c = riccati_solve(5);
    const auto b = lq_benchmark(5);
    RandomStream rng(15);
    const double s = 1.0 / std::sqrt(5.0);
    for (int k = 0; k < 50; ++k) {
        const double t = rng.uniform(0.01, 0.99);
        auto x = random_point(rng, 5);
        const auto r = lq_u(t, x.data(), c);
        const double h = 1e-5;
        double gen = (lq_u(t + h, x.data(), c).u - lq_u(t - h, x.data(), c).u) / (2 * h);
        std::vector<double> z(5);
        for (std::size_t i = 0; i < 5; ++i) {
            gen += x[i] * r.grad[i] + 0.5 * s * s * r.hess[i * 5 + i];
            z[i] = s * r.grad[i];
        }
        EXPECT_NEAR(b.driver(t, x.data(), r.u, z.data(), r.hess.data()), -gen, 1e-7);
    }
}
