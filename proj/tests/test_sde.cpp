#include <gtest/gtest.h>

#include <cmath>

#include "kano/sde.hpp"

using namespace kano;
using namespace kano::sde;

namespace {

SdeSpec constant_drift(double b, double sigma, double T, double dt) {
    SdeSpec s;
    s.d = 1;
    s.T = T;
    s.dt = dt;
    s.drift = [b](const double*, double* out) { out[0] = b; };
    s.diffusion = [sigma](const double*, double* out) { out[0] = sigma; };
    return s;
}

}  // namespace

TEST(Simulate, FrozenDynamics) {
    auto s = constant_drift(0.0, 0.0, 1.0, 0.1);
    const auto b = simulate(s, {0.3}, 1);
    for (std::size_t n = 0; n <= b.steps; ++n) EXPECT_EQ(b.state(n)[0], 0.3);
}

TEST(Simulate, DeterministicEuler) {
    auto s = constant_drift(1.0, 0.0, 1.0, 0.1);
    const auto b = simulate(s, {0.0}, 1);
    EXPECT_EQ(b.steps, 10u);
    EXPECT_NEAR(b.state(1)[0], 0.1, 1e-15);
    EXPECT_NEAR(b.state(10)[0], 1.0, 1e-14);
    EXPECT_FALSE(b.exited());
    EXPECT_EQ(b.times.back(), 1.0);
}

TEST(Simulate, FirstExitIndex) {
    auto s = constant_drift(1.0, 0.0, 1.0, 0.1);
    s.inside = [](const double* x) { return x[0] > -1.0 && x[0] < 1.0; };
    const auto b = simulate(s, {0.95}, 1);
    EXPECT_EQ(b.exit_index, 1u);
    EXPECT_EQ(b.last(), 1u);
    EXPECT_EQ(b.steps, 10u);
}

TEST(Simulate, StartOutsideDomainIsContractViolation) {
    auto s = constant_drift(1.0, 0.0, 1.0, 0.1);
    s.inside = box_domain(1, -1.0, 1.0);
    EXPECT_THROW(simulate(s, {1.5}, 1), ContractViolation);
    EXPECT_THROW(simulate(s, {0.0, 0.0}, 1), ContractViolation);
}

TEST(Simulate, NonIntegralHorizonIsContractViolation) {
    auto s = constant_drift(1.0, 0.0, 1.0, 0.3);
    EXPECT_THROW(simulate(s, {0.0}, 1), ContractViolation);
}

TEST(Simulate, IncrementsReproduceTheUpdate) {
    const auto s = periodic_coeffs(3, 1.0, 0.05);
    const auto b = simulate(s, {0.1, 0.2, 0.3}, 9);
    std::vector<double> drift(3), diff(3);
    for (std::size_t n = 0; n < b.steps; ++n) {
        s.drift(b.state(n), drift.data());
        s.diffusion(b.state(n), diff.data());
        for (std::size_t i = 0; i < 3; ++i) {
            const double expect = b.state(n)[i] + drift[i] * s.dt + diff[i] * std::sqrt(s.dt) * b.noise(n)[i];
            EXPECT_EQ(b.state(n + 1)[i], expect);
        }
    }
}

TEST(Simulate, BitIdenticalUnderSeed) {
    const auto s = periodic_coeffs(5);
    const auto a = simulate(s, std::vector<double>(5, 0.2), 123, 4);
    const auto b = simulate(s, std::vector<double>(5, 0.2), 123, 4);
    EXPECT_EQ(a.X, b.X);
    EXPECT_EQ(a.xi, b.xi);
    const auto c = simulate(s, std::vector<double>(5, 0.2), 124, 4);
    EXPECT_NE(a.X, c.X);
}

TEST(Simulate, PathStreamsAreOrderIndependent) {
    const auto s = lq_coeffs(2);
    const auto many = simulate_many(s, {0.5, 0.5}, 77, 10);
    const auto single = simulate(s, {0.5, 0.5}, 77, 7);
    EXPECT_EQ(many[7].X, single.X);
    EXPECT_NE(many[6].X, many[7].X);
}

TEST(Simulate, EulerIsFirstOrder) {
    // dX = X dt, X_0 = 1: terminal error against e.
    auto err = [](double dt) {
        SdeSpec s;
        s.d = 1;
        s.T = 1.0;
        s.dt = dt;
        s.drift = [](const double* x, double* out) { out[0] = x[0]; };
        s.diffusion = [](const double*, double* out) { out[0] = 0.0; };
        const auto b = simulate(s, {1.0}, 0);
        return std::abs(b.state(b.steps)[0] - std::exp(1.0));
    };
    const double ratio = err(1e-3) / err(5e-4);
    EXPECT_GE(ratio, 1.8);
    EXPECT_LE(ratio, 2.2);
}

TEST(Simulate, WeakMeanOfBrownianMotion) {
    const double sigma = 0.7;
    auto s = constant_drift(0.0, sigma, 1.0, 0.1);
    const std::size_t paths = 100000;
    double mean = 0.0;
    for (std::size_t p = 0; p < paths; ++p) mean += simulate(s, {0.25}, 2024, p).state(10)[0];
    mean /= static_cast<double>(paths);
    EXPECT_LE(std::abs(mean - 0.25), 4.0 * sigma / std::sqrt(static_cast<double>(paths)));
}

TEST(Coefficients, Periodic) {
    const auto s = periodic_coeffs(5);
    std::vector<double> x(5, 0.0), out(5);
    s.drift(x.data(), out.data());
    EXPECT_EQ(out[0], 0.0);
    s.diffusion(x.data(), out.data());
    EXPECT_NEAR(out[0], 0.35 / (std::sqrt(5.0) * std::numbers::pi), 1e-15);
    EXPECT_NEAR(out[0], 0.049823, 1e-6);
    x[0] = 0.25;
    s.drift(x.data(), out.data());
    EXPECT_NEAR(out[0], 0.2, 1e-15);
    EXPECT_FALSE(static_cast<bool>(s.inside));
}

TEST(Coefficients, LinearQuadratic) {
    const auto s = lq_coeffs(4, 1.0, 0.1);
    std::vector<double> x(4, 0.0), out(4);
    s.drift(x.data(), out.data());
    for (double v : out) EXPECT_EQ(v, 0.0);
    s.diffusion(x.data(), out.data());
    EXPECT_EQ(out[0], 0.5);

    auto quiet = s;
    quiet.diffusion = [](const double*, double* o) { std::fill(o, o + 4, 0.0); };
    const auto b = simulate(quiet, std::vector<double>(4, 1.0), 3);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(b.state(1)[i], 1.1, 1e-15);
}
