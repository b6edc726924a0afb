#include <gtest/gtest.h>

#include <cmath>

#include "fd_check.hpp"
#include "kano/reskan.hpp"

using namespace kano;
using namespace kano::reskan;

namespace {

void zero_activations(ResKanNet& net) {
    for (std::size_t l = 0; l < net.depth(); ++l)
        std::fill(net.beta(l).value.data.begin(), net.beta(l).value.data.end(), 0.0);
}

}  // namespace

TEST(ResKan, ResidualPathIsIdentity) {
    RandomStream rng(1);
    ResKanNet net(NetSpec{{3, 3, 3, 3}, 4, 3.0, spline::WaveletPair::haar()}, rng);
    zero_activations(net);
    for (std::size_t l = 0; l < net.depth(); ++l) std::fill(net.gate(l).value.data.begin(), net.gate(l).value.data.end(), 1.0);
    net.out_A().value.data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    const std::vector<double> x = {0.3, -2.0, 7.5};
    EXPECT_EQ(net.eval(x), x);
}

TEST(ResKan, ResidualPathComposesToFinalAffine) {
    RandomStream rng(2);
    ResKanNet net(NetSpec{{4, 6, 5, 2}, 3, 3.0, spline::WaveletPair::daubechies(3)}, rng);
    zero_activations(net);
    // Gates are identity at init; the hidden chain embeds x in the first 4 slots.
    RandomStream q(3);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> x(4);
        for (auto& v : x) v = q.uniform(-3.0, 3.0);
        const auto y = net.eval(x);
        const auto& A = net.out_A().value;
        for (std::size_t o = 0; o < 2; ++o) {
            double expect = net.out_b().value[o];
            for (std::size_t i = 0; i < 4; ++i) expect += A[o * 5 + i] * x[i];
            EXPECT_NEAR(y[o], expect, 1e-12);
        }
    }
}

TEST(ResKan, ConstantScaleNeuron) {
    RandomStream rng(4);
    ResKanNet net(NetSpec{{2, 3, 1}, 2, 1.0, spline::WaveletPair::haar()}, rng);
    std::fill(net.A(0).value.data.begin(), net.A(0).value.data.end(), 0.0);
    std::fill(net.beta(0).value.data.begin(), net.beta(0).value.data.end(), 0.0);
    for (std::size_t o = 0; o < 3; ++o) net.beta(0).value[o] = 1.0;
    std::fill(net.gate(0).value.data.begin(), net.gate(0).value.data.end(), 0.0);
    net.out_A().value.data = {1.0, 0.0, 0.0};
    EXPECT_EQ(net.eval({0.4, -9.0}), std::vector<double>{1.0});
}

TEST(ResKan, InitializationFollowsScheme) {
    RandomStream rng(5);
    ResKanNet net(NetSpec{{3, 8, 2}, 4, 3.0, spline::WaveletPair::haar()}, rng);
    const auto& beta = net.beta(0);
    for (std::size_t j = 2; j < 6; ++j)
        for (std::size_t o = 0; o < 8; ++o) EXPECT_EQ(beta.value[j * 8 + o], 0.0);
    for (std::size_t o = 0; o < 8; ++o) {
        EXPECT_TRUE(beta.is_frozen(2 * 8 + o));
        EXPECT_TRUE(beta.is_frozen(3 * 8 + o));
        EXPECT_FALSE(beta.is_frozen(4 * 8 + o));
    }
    EXPECT_EQ(net.gate(0).value.data, std::vector<double>(3, 1.0));
    EXPECT_EQ(net.b(0).value.data, std::vector<double>(8, 0.0));
}

TEST(ResKan, SparsityValidation) {
    RandomStream rng(6);
    ResKanNet net(NetSpec{{2, 2, 1}, 4, 3.0, spline::WaveletPair::haar()}, rng);
    EXPECT_NO_THROW(net.validate());
    net.beta(0).value[2 * 2] = 0.5;
    EXPECT_THROW(net.validate(), ConfigError);
}

TEST(ResKan, DimensionMismatch) {
    RandomStream rng(7);
    ResKanNet net(NetSpec{{3, 4, 1}, 4, 3.0, spline::WaveletPair::haar()}, rng);
    EXPECT_THROW(net.eval({1.0, 2.0}), ContractViolation);
}

class ResKanGradients : public ::testing::TestWithParam<int> {};

TEST_P(ResKanGradients, MatchFiniteDifferences) {
    RandomStream rng(8);
    const int order = GetParam();
    // Haar is piecewise constant, so the standard step applies; tabulated
    // Daubechies pairs need a step inside one table cell.
    const double h = order == 1 ? 1e-4 : 1e-6;
    ResKanNet net(NetSpec{{3, 5, 4, 2}, 4, 3.0, spline::WaveletPair::daubechies(order)}, rng);
    for (std::size_t l = 0; l < net.depth(); ++l)
        for (std::size_t j = 4; j < 6; ++j)
            for (std::size_t o = 0; o < net.spec().widths[l + 1]; ++o)
                net.beta(l).value[j * net.spec().widths[l + 1] + o] = rng.uniform(-0.5, 0.5);
    ad::Tensor x(ad::Shape{6, 3});
    for (auto& v : x.data) v = rng.uniform(-1.0, 3.0);
    std::vector<ad::Parameter*> params;
    for (auto& p : net.parameters()) params.push_back(&p);
    const double worst = fdcheck::param_gradients(params, [&](ad::Tape& t) {
        auto y = net.forward(t, t.constant(x));
        return ad::mean(ad::mul(y, y));
    }, h);
    EXPECT_LE(worst, 1.0);
}

INSTANTIATE_TEST_SUITE_P(Pairs, ResKanGradients, ::testing::Values(1, 4, 10));

TEST(ResKan, SecondDifferenceContinuousAcrossKnots) {
    RandomStream rng(9);
    // Scalar net whose only nonlinearity is the activation at the pre-activation u = x.
    ResKanNet net(NetSpec{{1, 1, 1}, 4, 3.0, spline::WaveletPair::daubechies(10)}, rng);
    net.A(0).value.data = {1.0};
    net.b(0).value.data = {0.0};
    net.beta(0).value.data = {0.7, -0.4, 0.0, 0.0, 1.3, -0.8};
    net.gate(0).value.data = {0.5};
    net.out_A().value.data = {1.0};
    const double h = 1e-4;
    auto f = [&](double x) { return net.eval({x})[0]; };
    auto q = [&](double x) { return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h); };
    for (int knot = -9; knot <= 10; ++knot) {
        const double k = knot;
        const double left = 2 * q(k - 2 * h) - q(k - 4 * h);
        const double right = 2 * q(k + 2 * h) - q(k + 4 * h);
        EXPECT_LT(std::abs(right - left), 1e-3) << "knot " << knot;
    }
}

TEST(ResKan, RoughActivationShowsJump) {
    // Negative control: alpha = 2 admits N_2, whose second derivative jumps at 0.
    RandomStream rng(10);
    ResKanNet net(NetSpec{{1, 1, 1}, 4, 2.0, spline::WaveletPair::daubechies(10)}, rng);
    net.A(0).value.data = {1.0};
    net.b(0).value.data = {0.0};
    net.beta(0).value.data = {0.0, 0.0, 0.0, 1.0, 0.0, 0.0};
    net.gate(0).value.data = {0.0};
    net.out_A().value.data = {1.0};
    const double h = 1e-4;
    auto f = [&](double x) { return net.eval({x})[0]; };
    auto q = [&](double x) { return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h); };
    const double left = 2 * q(-2 * h) - q(-4 * h);
    const double right = 2 * q(2 * h) - q(4 * h);
    EXPECT_GT(std::abs(right - left), 1e-3);
}

TEST(Multiply, Examples) {
    EXPECT_EQ(exact_multiply({3.0, 4.0}, 10.0), 12.0);
    EXPECT_EQ(exact_multiply({0.0, -7.25}, 10.0), 0.0);
    EXPECT_NEAR(exact_multiply({2.0, 3.0, 4.0}, 10.0), 24.0, 1e-12);
}

TEST(Multiply, RandomTuples) {
    RandomStream rng(11);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const std::size_t d = 1 + rng.below(4);
        std::vector<double> xs(d);
        double direct = 1.0;
        for (auto& x : xs) {
            x = rng.uniform(-10.0, 10.0);
            direct *= x;
        }
        worst = std::max(worst, std::abs(exact_multiply(xs, 10.0) - direct));
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(Multiply, OutsideCubeIsDomainError) {
    EXPECT_THROW(exact_multiply({11.0, 1.0}, 10.0), DomainError);
    EXPECT_THROW(exact_multiply({std::nan(""), 1.0}, 10.0), DomainError);
}

TEST(Powers, Examples) {
    EXPECT_EQ(requ_powers(2.0, 3, 10.0), (std::vector<double>{2.0, 4.0, 8.0}));
    EXPECT_EQ(requ_powers(0.0, 5, 10.0), std::vector<double>(5, 0.0));
    const auto p = requ_powers(-1.5, 4, 10.0);
    const std::vector<double> expect = {-1.5, 2.25, -3.375, 5.0625};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], expect[i], 1e-12);
    EXPECT_THROW(requ_powers(1.0, 1, 10.0), ContractViolation);
}

TEST(Green1d, NetworkIsExact) {
    auto net = green_1d_net();
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            const double x = i / 20.0, y = j / 20.0;
            const double g = std::min(x, y) - x * y;
            EXPECT_NEAR(net.eval({x, y})[0], g, 1e-14);
        }
}
