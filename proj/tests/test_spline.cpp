#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fd_check.hpp"
#include "kano/rng.hpp"
#include "kano/spline.hpp"

using namespace kano;
using namespace kano::spline;

TEST(BSpline, Examples) {
    EXPECT_EQ(bspline_eval(0, 0.5), 1.0);
    EXPECT_EQ(bspline_eval(0, 1.5), 0.0);
    EXPECT_DOUBLE_EQ(bspline_eval(1, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(bspline_eval(2, 1.5), 0.75);
}

TEST(BSpline, SupportAndPositivity) {
    RandomStream rng(1);
    for (int I = 1; I <= 5; ++I) {
        EXPECT_EQ(bspline_eval(I, -0.1), 0.0);
        EXPECT_EQ(bspline_eval(I, I + 1.0), 0.0);
        EXPECT_EQ(bspline_eval(I, I + 3.7), 0.0);
        for (int k = 0; k < 200; ++k) EXPECT_GE(bspline_eval(I, rng.uniform(0.0, I + 1.0)), -1e-14);
    }
}

TEST(BSpline, PartitionOfUnity) {
    RandomStream rng(2);
    for (int I = 1; I <= 4; ++I) {
        for (int k = 0; k < 1000; ++k) {
            const double x = rng.uniform(0.0, 10.0);
            double acc = 0.0;
            for (int m = -(I + 1); m <= static_cast<int>(std::ceil(x)); ++m) acc += bspline_eval(I, x - m);
            EXPECT_NEAR(acc, 1.0, 1e-12) << "I=" << I << " x=" << x;
        }
    }
}

TEST(BSpline, DerivativeRecursion) {
    RandomStream rng(3);
    const double h = 1e-6;
    for (int I = 2; I <= 4; ++I) {
        for (int k = 0; k < 200; ++k) {
            const double x = rng.uniform(0.0, I + 1.0);
            const double fd = (bspline_eval(I, x + h) - bspline_eval(I, x - h)) / (2 * h);
            EXPECT_NEAR(bspline_deriv(I, x), fd, 1e-6);
        }
    }
}

TEST(Haar, ClosedForm) {
    const auto p = WaveletPair::haar();
    EXPECT_EQ(p.scale(0.3), 1.0);
    EXPECT_EQ(p.wavelet(0.25), 1.0);
    EXPECT_EQ(p.wavelet(0.75), -1.0);
    const auto& h = p.filter();
    EXPECT_EQ(std::sqrt(2.0) * (h[0] * p.scale(0.6) + h[1] * p.scale(-0.4)), 1.0);
}

TEST(Haar, RefinementOnDyadicGrid) {
    const auto p = WaveletPair::haar();
    const auto& h = p.filter();
    for (int i = -512; i < 4096 + 512; ++i) {
        const double x = std::ldexp(static_cast<double>(i), -12);
        double phi = 0.0, psi = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) {
            const double sign = (k % 2 == 0) ? 1.0 : -1.0;
            phi += h[k] * p.scale(2 * x - static_cast<double>(k));
            // psi(x) = sqrt2 sum_k (-1)^k h_{1-k} phi(2x - k), k = 0, 1
            psi += sign * h[1 - k] * p.scale(2 * x - static_cast<double>(k));
        }
        EXPECT_EQ(std::sqrt(2.0) * phi, p.scale(x));
        EXPECT_EQ(std::sqrt(2.0) * psi, p.wavelet(x));
    }
}

class DaubechiesFilters : public ::testing::TestWithParam<int> {};

TEST_P(DaubechiesFilters, SumAndOrthogonality) {
    const int N = GetParam();
    const auto h = daubechies_filter(N);
    ASSERT_EQ(h.size(), static_cast<std::size_t>(2 * N));
    double s = 0.0;
    for (double v : h) s += v;
    EXPECT_NEAR(s, std::sqrt(2.0), 1e-12);
    const long L = static_cast<long>(h.size());
    for (long shift = 0; 2 * shift < L; ++shift) {
        double acc = 0.0;
        for (long k = 0; k + 2 * shift < L; ++k) acc += h[k] * h[k + 2 * shift];
        EXPECT_NEAR(acc, shift == 0 ? 1.0 : 0.0, 1e-12) << "N=" << N << " shift=" << shift;
    }
}

TEST_P(DaubechiesFilters, CascadeRefinement) {
    const int N = GetParam();
    const auto p = WaveletPair::daubechies(N);
    const auto& h = p.filter();
    const double len = 2.0 * N - 1.0;
    double worst_phi = 0.0, worst_psi = 0.0;
    for (int i = 0; i < 4096; ++i) {
        const double x = len * std::ldexp(static_cast<double>(i), -12);
        double phi = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) phi += h[k] * p.scale(2 * x - static_cast<double>(k));
        worst_phi = std::max(worst_phi, std::abs(std::sqrt(2.0) * phi - p.scale(x)));
        const double xw = x + 1.0 - N;
        double psi = 0.0;
        for (long k = 2 - 2 * N; k <= 1; ++k) {
            const double sign = (k % 2 == 0) ? 1.0 : -1.0;
            psi += sign * h[static_cast<std::size_t>(1 - k)] * p.scale(2 * xw - static_cast<double>(k));
        }
        worst_psi = std::max(worst_psi, std::abs(std::sqrt(2.0) * psi - p.wavelet(xw)));
    }
    EXPECT_LE(worst_phi, 1e-6);
    EXPECT_LE(worst_psi, 1e-6);
}

TEST_P(DaubechiesFilters, ScaleFunctionIntegratesToOne) {
    const int N = GetParam();
    const auto p = WaveletPair::daubechies(N);
    const auto& phi = p.table()->phi;
    double acc = 0.0;
    for (double v : phi) acc += v;
    EXPECT_NEAR(acc * std::ldexp(1.0, -kCascadeDepth), 1.0, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Orders, DaubechiesFilters, ::testing::Range(2, 11));

TEST(Daubechies, OrderOneIsHaar) {
    EXPECT_EQ(WaveletPair::daubechies(1).kind(), WaveletKind::Haar);
    EXPECT_THROW(daubechies_filter(11), ConfigError);
}

TEST(Activation, Examples) {
    const auto haar = WaveletPair::haar();
    EXPECT_EQ(activation_eval(SplineActivation(4, 3.0, std::vector<double>(6, 0.0)), haar, 0.7), 0.0);
    EXPECT_EQ(activation_eval(SplineActivation(4, 3.0, {1, 0, 0, 0, 0, 0}), haar, 0.5), 1.0);
    EXPECT_DOUBLE_EQ(activation_eval(SplineActivation(4, 3.0, {0, 0, 0, 0, 2, 0}), haar, 2.0),
                     2.0 * bspline_eval(3, 2.0));
}

TEST(Activation, SparsityViolationIsConfigError) {
    EXPECT_THROW(SplineActivation(4, 3.0, {0, 0, 1, 0, 0, 0}), ConfigError);
    EXPECT_THROW(SplineActivation(4, 3.0, {0, 0, 0, 1, 0, 0}), ConfigError);
    EXPECT_NO_THROW(SplineActivation(4, 2.5, {0, 0, 0, 0, 1, 0}));
    EXPECT_THROW(SplineActivation(4, 3.0, {0, 0, 0}), ConfigError);
}

TEST(Activation, TapeGradientsHaar) {
    const auto pair = WaveletPair::haar();
    RandomStream rng(9);
    ad::Tensor u(ad::Shape{7, 3});
    for (auto& v : u.data) v = rng.uniform(-1.0, 6.0);
    ad::Tensor beta(ad::Shape{6, 3});
    for (auto& v : beta.data) v = rng.uniform(-1.0, 1.0);
    const double worst = fdcheck::leaf_gradients({u, beta}, [&](ad::Tape&, const std::vector<ad::Var>& v) {
        auto y = activation(v[0], v[1], pair, 4, 3.0);
        return ad::sum(ad::mul(y, y));
    });
    EXPECT_LE(worst, 1.0);
}

// Tabulated Daubechies functions are rough below the table spacing, so the
// probe step stays inside one interpolation cell.
TEST(Activation, TapeGradientsDaubechies) {
    const auto pair = WaveletPair::daubechies(4);
    RandomStream rng(9);
    ad::Tensor u(ad::Shape{7, 3});
    for (auto& v : u.data) v = rng.uniform(-1.0, 6.0);
    ad::Tensor beta(ad::Shape{6, 3});
    for (auto& v : beta.data) v = rng.uniform(-1.0, 1.0);
    const double worst = fdcheck::leaf_gradients({u, beta}, [&](ad::Tape&, const std::vector<ad::Var>& v) {
        auto y = activation(v[0], v[1], pair, 4, 3.0);
        return ad::sum(ad::mul(y, y));
    }, 1e-6);
    EXPECT_LE(worst, 1.0);
}

TEST(Activation, PinnedSlotsIgnored) {
    const auto haar = WaveletPair::haar();
    ad::Tape tape;
    auto u = tape.leaf(ad::Tensor({1, 1}, 1.5));
    auto beta = tape.leaf(ad::Tensor({6, 1}, {0.0, 0.0, 5.0, 5.0, 0.0, 0.0}));
    auto y = activation(u, beta, haar, 4, 3.0);
    EXPECT_EQ(y.item(), 0.0);
    tape.backward(ad::sum(y));
    const auto g = beta.grad();
    EXPECT_EQ(g[2], 0.0);
    EXPECT_EQ(g[3], 0.0);
}
