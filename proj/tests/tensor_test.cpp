#include <gtest/gtest.h>

#include <cmath>

#include "fgn/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace fgn;
using fgn::testing::gradcheck;
using fgn::testing::probe_sum;

namespace {

Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    return Tensor<double>::uniform(shape, -1.0, 1.0, rng);
}

void expect_values(const Tensor<double>& t, const std::vector<double>& expected, double tol = 1e-12) {
    ASSERT_EQ(t.numel(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_NEAR(t.data()[i], expected[i], tol) << "element " << i;
    }
}

}  // namespace

TEST(TensorTest, ShapeMustMatchData) {
    EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), DimensionError);
    Tensor<float> t({2, 3}, std::vector<float>(6, 1.0f));
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.dim(-1), 3u);
}

TEST(TensorTest, MatmulIdentityAndSelection) {
    const Tensor<double> a({2, 2}, {1, 2, 3, 4});
    const Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    expect_values(matmul(a, eye), {1, 2, 3, 4});
    expect_values(matmul(Tensor<double>({1, 2}, {1, 0}), Tensor<double>({2, 1}, {2, 5})), {2});
}

TEST(TensorTest, MatmulShapeMismatchNamesBothShapes) {
    try {
        matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 3}));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string message = e.what();
        EXPECT_NE(message.find("[2, 3] x [2, 3]"), std::string::npos) << message;
    }
}

TEST(TensorTest, MatmulBroadcastsBatch) {
    const auto a = random_tensor({2, 3, 4}, 1);
    const auto b = random_tensor({4, 5}, 2);
    const auto c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{2, 3, 5}));
    double expected = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        expected += a.at({1, 2, k}) * b.at({k, 4});
    }
    EXPECT_NEAR(c.at({1, 2, 4}), expected, 1e-12);
}

TEST(TensorTest, MatmulGradientMatchesFiniteDifferences) {
    auto a = random_tensor({3, 4}, 3);
    auto b = random_tensor({4, 2}, 4);
    const auto r = gradcheck([&] { return sum(matmul(a, b)); }, {a, b});
    EXPECT_LE(r.max_rel_error, 1e-6) << r.worst;
}

TEST(TensorTest, BatchedMatmulGradient) {
    auto a = random_tensor({2, 1, 3, 4}, 5);
    auto b = random_tensor({3, 4, 2}, 6);
    const auto r = gradcheck([&] { return probe_sum(matmul(a, b)); }, {a, b});
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
}

TEST(TensorTest, SoftmaxValues) {
    expect_values(softmax(Tensor<double>({2}, {0, 0}), 0), {0.5, 0.5});
    const auto big = softmax(Tensor<double>({2}, {1000, 0}), 0);
    EXPECT_NEAR(big.data()[0], 1.0, 1e-12);
    EXPECT_NEAR(big.data()[1], 0.0, 1e-12);
    EXPECT_TRUE(std::isfinite(big.data()[1]));
}

TEST(TensorTest, SoftmaxSumsToOneAlongAnyAxis) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = Tensor<double>::uniform({3, 4, 5}, -30.0, 30.0, rng);
        for (int axis = 0; axis < 3; ++axis) {
            const auto y = softmax(x, axis);
            const auto totals = sum(y, axis);
            for (double total : totals.data()) {
                EXPECT_NEAR(total, 1.0, 1e-6);
            }
        }
    }
}

TEST(TensorTest, SoftmaxGradient) {
    auto x = random_tensor({5}, 8);
    const auto r = gradcheck([&] { return probe_sum(softmax(x, 0)); }, {x});
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
    auto y = random_tensor({2, 3, 4}, 9);
    const auto r2 = gradcheck([&] { return probe_sum(softmax(y, 1)); }, {y});
    EXPECT_LE(r2.max_rel_error, 1e-5) << r2.worst;
}

TEST(TensorTest, SigmoidValuesAndDerivative) {
    expect_values(sigmoid(Tensor<double>::scalar(0.0)), {0.5});
    const auto saturated = sigmoid(Tensor<double>({2}, {500.0, -500.0}));
    EXPECT_EQ(saturated.data()[0], 1.0);
    EXPECT_FALSE(std::isnan(saturated.data()[1]));

    auto x = Tensor<double>::zeros({4}).set_requires_grad();
    Tape<double> tape;
    {
        TapeScope<double> scope(tape);
        backward(sum(sigmoid(x)));
    }
    for (double g : x.grad()) {
        EXPECT_DOUBLE_EQ(g, 0.25);
    }
}

TEST(TensorTest, SquareBackward) {
    auto x = Tensor<double>::scalar(3.0).set_requires_grad();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(square(x));
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(TensorTest, BackwardRejectsNonScalarAndDoubleUse) {
    auto x = random_tensor({3}, 10).set_requires_grad();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const auto y = scale(x, 2.0);
    EXPECT_THROW(tape.backward(y), UsageError);
    const auto loss = sum(y);
    tape.backward(loss);
    EXPECT_TRUE(tape.consumed());
    EXPECT_THROW(tape.backward(loss), UsageError);
}

TEST(TensorTest, BackwardVisitsOpsInReverseOrder) {
    Tape<double> tape;
    std::vector<int> order;
    tape.record([&] { order.push_back(1); });
    tape.record([&] { order.push_back(2); });
    tape.record([&] { order.push_back(3); });
    auto loss = Tensor<double>::scalar(1.0).set_requires_grad();
    tape.backward(loss);
    EXPECT_EQ(order, (std::vector<int>{3, 2, 1}));
}

TEST(TensorTest, NoRecordingWithoutTape) {
    auto x = random_tensor({3}, 11).set_requires_grad();
    const auto y = sigmoid(x);
    EXPECT_FALSE(y.requires_grad());
}

TEST(TensorTest, Conv1dPointwiseIdentity) {
    const auto x = random_tensor({1, 5, 1}, 12);
    const auto y = conv1d(x, Tensor<double>({1, 1, 1}, {1.0}), Tensor<double>::zeros({1}), false);
    expect_values(y, {x.data().begin(), x.data().end()});
}

TEST(TensorTest, Conv1dCausalPairSum) {
    const Tensor<double> x({1, 3, 1}, {1, 2, 3});
    const auto y = conv1d(x, Tensor<double>({2, 1, 1}, {1, 1}), Tensor<double>(), true);
    expect_values(y, {1, 3, 5});
}

TEST(TensorTest, Conv1dSymmetricPadding) {
    const Tensor<double> x({1, 3, 1}, {1, 2, 3});
    const auto y = conv1d(x, Tensor<double>({3, 1, 1}, {1, 1, 1}), Tensor<double>(), false);
    expect_values(y, {3, 6, 5});
    EXPECT_THROW(conv1d(x, Tensor<double>({2, 1, 1}, {1, 1}), Tensor<double>(), false), DimensionError);
}

TEST(TensorTest, Conv1dGradient) {
    auto x = random_tensor({1, 4, 2}, 13);
    auto w = random_tensor({3, 2, 3}, 14);
    auto b = random_tensor({3}, 15);
    for (bool causal : {true, false}) {
        const auto r = gradcheck([&] { return probe_sum(conv1d(x, w, b, causal)); }, {x, w, b});
        EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
    }
}

TEST(TensorTest, LayerNormValues) {
    const auto ones = Tensor<double>::full({3}, 1.0);
    const auto zeros = Tensor<double>::zeros({3});
    expect_values(layer_norm(Tensor<double>({3}, {5, 5, 5}), ones, zeros), {0, 0, 0});
    const auto y = layer_norm(Tensor<double>({2}, {1, -1}), Tensor<double>::full({2}, 1.0), Tensor<double>::zeros({2}));
    const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
    expect_values(y, {expected, -expected});
}

TEST(TensorTest, LayerNormGradient) {
    auto x = random_tensor({3, 5}, 16);
    auto g = random_tensor({5}, 17);
    auto o = random_tensor({5}, 18);
    const auto r = gradcheck([&] { return probe_sum(layer_norm(x, g, o)); }, {x, g, o});
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
}

TEST(TensorTest, DropoutModes) {
    Rng rng(19);
    const auto x = random_tensor({100}, 20);
    for (double rate : {0.0, 0.5}) {
        const auto eval = dropout(x, rate, false, rng);
        expect_values(eval, {x.data().begin(), x.data().end()}, 0.0);
    }
    expect_values(dropout(x, 0.0, true, rng), {x.data().begin(), x.data().end()}, 0.0);
    EXPECT_THROW(dropout(x, 1.0, true, rng), ConfigError);
    EXPECT_THROW(dropout(x, -0.1, true, rng), ConfigError);
}

TEST(TensorTest, DropoutPreservesMeanInExpectation) {
    Rng rng(21);
    const auto x = Tensor<double>::uniform({100000}, 0.5, 1.5, rng);
    const auto y = dropout(x, 0.5, true, rng);
    const double in_mean = mean(x).item();
    const double out_mean = mean(y).item();
    EXPECT_NEAR(out_mean / in_mean, 1.0, 0.02);
    std::size_t zeros = 0;
    for (double v : y.data()) {
        zeros += v == 0.0;
    }
    EXPECT_NEAR(static_cast<double>(zeros) / 100000.0, 0.5, 0.01);
}

TEST(TensorTest, DropoutGradientUsesSameMask) {
    Rng rng(22);
    auto x = random_tensor({50}, 23).set_requires_grad();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const auto y = dropout(x, 0.3, true, rng);
    tape.backward(sum(y));
    for (std::size_t i = 0; i < 50; ++i) {
        const double expected = y.data()[i] == 0.0 ? 0.0 : 1.0 / 0.7;
        EXPECT_NEAR(x.grad()[i], expected, 1e-12);
    }
}

TEST(TensorTest, ElementwiseAndBroadcastGradients) {
    auto a = random_tensor({2, 3, 4}, 24);
    auto b = random_tensor({3, 1}, 25);
    auto c = random_tensor({4}, 26);
    const auto r = gradcheck([&] { return probe_sum(mul(sub(add(a, b), c), a)); }, {a, b, c});
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
}

TEST(TensorTest, ActivationGradients) {
    auto x = random_tensor({10}, 27);
    for (auto fn : {&relu<double>, &gelu<double>, &sigmoid<double>, &square<double>}) {
        const auto r = gradcheck([&] { return probe_sum(fn(x)); }, {x});
        EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
    }
}

TEST(TensorTest, GeluMatchesErfDefinition) {
    const auto y = gelu(Tensor<double>({3}, {-1.0, 0.0, 2.0}));
    for (std::size_t i = 0; i < 3; ++i) {
        const double v = std::vector<double>{-1.0, 0.0, 2.0}[i];
        EXPECT_NEAR(y.data()[i], 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))), 1e-15);
    }
}

TEST(TensorTest, ShapeOpGradients) {
    auto a = random_tensor({2, 3, 4}, 28);
    auto b = random_tensor({2, 2, 4}, 29);
    const auto r = gradcheck(
        [&] {
            const auto joined = concat(std::vector<Tensor<double>>{a, b}, 1);
            const auto moved = permute(reshape(joined, {2, 5, 2, 2}), {3, 0, 2, 1});
            return probe_sum(slice(transpose(moved, 0, 3), 1, 1, 1));
        },
        {a, b});
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
}

TEST(TensorTest, ReductionGradients) {
    auto x = random_tensor({3, 4, 2}, 30);
    const auto r = gradcheck(
        [&] { return add(probe_sum(mean(x, 1, true)), add(probe_sum(sum(x, -1)), mean(x))); }, {x});
    EXPECT_LE(r.max_rel_error, 1e-5) << r.worst;
}

TEST(TensorTest, ReshapeAndTransposeRoundTripsAreBitExact) {
    Rng rng(31);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t a = 1 + rng.below(4), b = 1 + rng.below(4), c = 1 + rng.below(4);
        const auto x = Tensor<float>::uniform({a, b, c}, -5.0f, 5.0f, rng);
        const auto back = reshape(reshape(x, {a * b * c}), {a, b, c});
        const auto twice = transpose(transpose(x, 0, 2), 0, 2);
        const auto cycled = permute(permute(x, {1, 2, 0}), {2, 0, 1});
        for (std::size_t i = 0; i < x.numel(); ++i) {
            EXPECT_EQ(back.data()[i], x.data()[i]);
            EXPECT_EQ(twice.data()[i], x.data()[i]);
            EXPECT_EQ(cycled.data()[i], x.data()[i]);
        }
    }
}

TEST(TensorTest, SliceAndConcatErrors) {
    const auto x = Tensor<float>::zeros({2, 3});
    EXPECT_THROW(slice(x, 1, 2, 2), DimensionError);
    EXPECT_THROW(concat(std::vector<Tensor<float>>{x, Tensor<float>::zeros({3, 3})}, 1), DimensionError);
    EXPECT_THROW(add(x, Tensor<float>::zeros({4})), DimensionError);
}

TEST(TensorTest, GradientsAccumulateAcrossUses) {
    auto x = Tensor<double>::scalar(2.0).set_requires_grad();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    // d/dx (x*x + 3x) = 2x + 3 = 7
    tape.backward(add(mul(x, x), scale(x, 3.0)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}
