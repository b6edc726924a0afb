#include <gtest/gtest.h>

#include "fd_check.hpp"
#include "kano/autodiff.hpp"
#include "kano/rng.hpp"

using namespace kano;
using namespace kano::ad;

namespace {

Tensor random_tensor(Shape shape, RandomStream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST(Tensor, RejectsLengthMismatch) {
    EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), ContractViolation);
    EXPECT_THROW(Tensor(Shape{0, 3}), ContractViolation);
}

TEST(Tape, SumOfSquares) {
    Tape tape;
    auto x = tape.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    auto root = sum(mul(x, x));
    tape.backward(root);
    EXPECT_EQ(x.grad(), (std::vector<double>{2.0, 4.0, 6.0}));
    EXPECT_TRUE(tape.consumed());
}

TEST(Tape, ConstantRootHasZeroGradients) {
    Tape tape;
    auto x = tape.leaf(Tensor({2}, {1.0, -1.0}));
    auto c = tape.constant(Tensor({1}, 5.0));
    tape.backward(c);
    EXPECT_EQ(x.grad(), (std::vector<double>{0.0, 0.0}));
}

TEST(Tape, NonScalarRootIsContractViolation) {
    Tape tape;
    auto x = tape.leaf(Tensor({2}, 1.0));
    EXPECT_THROW(tape.backward(x), ContractViolation);
}

TEST(Tape, DetachedOrForeignRootIsError) {
    Tape a, b;
    auto x = b.leaf(Tensor({1}, 1.0));
    EXPECT_THROW(a.backward(x), ContractViolation);
    EXPECT_THROW(a.backward(Var{}), ContractViolation);
}

TEST(Tape, ConsumedTapeRejectsSecondSweep) {
    Tape tape;
    auto x = tape.leaf(Tensor({1}, 2.0));
    auto y = sum(square(x));
    tape.backward(y);
    EXPECT_THROW(tape.backward(y), ContractViolation);
    EXPECT_THROW(tape.leaf(Tensor({1}, 0.0)), ContractViolation);
}

TEST(Tape, ParameterGradientAccumulates) {
    Parameter p("w", Tensor({2}, {3.0, -1.0}));
    for (int rep = 0; rep < 2; ++rep) {
        Tape tape;
        tape.backward(sum(square(tape.param(p))));
    }
    EXPECT_DOUBLE_EQ(p.grad[0], 12.0);
    EXPECT_DOUBLE_EQ(p.grad[1], -4.0);
}

TEST(Tape, InferenceTapeKeepsNoGradient) {
    Tape tape(false);
    auto x = tape.leaf(Tensor({2}, 1.0));
    auto y = sum(x);
    EXPECT_DOUBLE_EQ(y.item(), 2.0);
    EXPECT_THROW(tape.backward(y), ContractViolation);
}

TEST(Tape, Linearity) {
    RandomStream rng(11);
    const Tensor x0 = random_tensor({4, 3}, rng);
    const Tensor A0 = random_tensor({2, 3}, rng);
    auto f = [&](Tape& t, const Var& x) { return sum(square(linear(x, t.constant(A0), t.constant(Tensor({2}, 0.5))))); };
    auto g = [&](Tape& t, const Var& x) { return sum(mul(x, x)); };
    const double a = 0.75, b = -2.5;
    std::vector<double> gf, gg, gc;
    {
        Tape t;
        auto x = t.leaf(x0);
        t.backward(f(t, x));
        gf = x.grad();
    }
    {
        Tape t;
        auto x = t.leaf(x0);
        t.backward(g(t, x));
        gg = x.grad();
    }
    {
        Tape t;
        auto x = t.leaf(x0);
        t.backward(add(scale(f(t, x), a), scale(g(t, x), b)));
        gc = x.grad();
    }
    for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-12);
}

TEST(Tape, RandomThreeLayerComposite) {
    RandomStream rng(2024);
    const std::vector<Tensor> inputs = {random_tensor({5, 4}, rng), random_tensor({6, 4}, rng),
                                        random_tensor({6}, rng), random_tensor({3, 6}, rng),
                                        random_tensor({3}, rng), random_tensor({1, 3}, rng)};
    const double worst = fdcheck::leaf_gradients(inputs, [](Tape&, const std::vector<Var>& v) {
        auto h1 = linear(v[0], v[1], v[2]);
        auto a1 = mul(h1, h1);
        auto h2 = linear(a1, v[3], v[4]);
        auto a2 = mul(h2, scale(h2, 0.5));
        auto h3 = linear(a2, v[5], reshape(slice_cols(reshape(v[4], {1, 3}), 0, 1), {1}));
        return mean(h3);
    });
    EXPECT_LE(worst, 1.0);
}

TEST(Primitives, FiniteDifferences) {
    RandomStream rng(7);
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    const Tensor target = random_tensor({3, 4}, rng);
    auto check = [&](const char* name, const std::vector<Tensor>& in, const fdcheck::LeafFn& f) {
        EXPECT_LE(fdcheck::leaf_gradients(in, f), 1.0) << name;
    };
    check("add", {a, b}, [](Tape&, const std::vector<Var>& v) { return sum(square(add(v[0], v[1]))); });
    check("sub", {a, b}, [](Tape&, const std::vector<Var>& v) { return sum(square(sub(v[0], v[1]))); });
    check("mul", {a, b}, [](Tape&, const std::vector<Var>& v) { return sum(mul(v[0], v[1])); });
    check("scale", {a}, [](Tape&, const std::vector<Var>& v) { return sum(square(scale(v[0], -3.0))); });
    check("mean", {a}, [](Tape&, const std::vector<Var>& v) { return mean(square(v[0])); });
    check("mse", {a}, [&](Tape&, const std::vector<Var>& v) { return mse(v[0], target); });
    check("reshape", {a}, [](Tape&, const std::vector<Var>& v) {
        return sum(square(slice_cols(reshape(v[0], {4, 3}), 1, 2)));
    });
    check("linear", {a, random_tensor({5, 4}, rng), random_tensor({5}, rng)},
          [](Tape&, const std::vector<Var>& v) { return sum(square(linear(v[0], v[1], v[2]))); });
    check("diag_gate_wide", {a, random_tensor({4}, rng)},
          [](Tape&, const std::vector<Var>& v) { return sum(square(diag_gate(v[0], v[1], 6))); });
    check("diag_gate_narrow", {a, random_tensor({2}, rng)},
          [](Tape&, const std::vector<Var>& v) { return sum(square(diag_gate(v[0], v[1], 2))); });
    check("concat", {a, random_tensor({3, 2}, rng)}, [](Tape&, const std::vector<Var>& v) {
        auto c = concat_cols({v[0], v[1], v[0]});
        return sum(mul(c, c));
    });
}

TEST(Primitives, ShapeErrors) {
    Tape tape;
    auto x = tape.leaf(Tensor({2, 3}, 1.0));
    auto y = tape.leaf(Tensor({3, 2}, 1.0));
    EXPECT_THROW(add(x, y), ContractViolation);
    EXPECT_THROW(linear(x, tape.leaf(Tensor({2, 2}, 1.0)), tape.leaf(Tensor({2}, 0.0))), ContractViolation);
    EXPECT_THROW(reshape(x, {5}), ContractViolation);
    EXPECT_THROW(slice_cols(x, 2, 2), ContractViolation);
}
