#include <gtest/gtest.h>

#include <cmath>

#include "durendal/optim.hpp"
#include "durendal/rng.hpp"
#include "durendal/tensor.hpp"

using namespace durendal;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed, const std::string& label,
                     bool req = true, double margin = 0.0) {
    Tensor t = Tensor::zeros(r, c, req);
    RngStream rng(seed, label);
    for (auto& v : t.values) {
        v = rng.next_double(-2.0, 2.0);
        if (margin > 0.0 && std::fabs(v) < margin) v = v < 0 ? v - margin : v + margin;
    }
    return t;
}

// Reduce an op output to a scalar with fixed random weights so the check
// exercises non-uniform cotangents.
Var weighted_scalar(Tape& t, Var out, std::uint64_t seed) {
    const Tensor& o = t.val(out);
    Tensor w = random_tensor(o.rows(), o.cols(), seed, "cotangent", false);
    return t.sum(t.elementwise_mul(out, t.constant(w)));
}

double fd_check_unary(const std::function<Var(Tape&, Var)>& op, Tensor& x,
                      std::uint64_t cot_seed = 7) {
    auto run = [&](bool with_grad) {
        Tape t;
        Var vx = t.param(x);
        Var loss = weighted_scalar(t, op(t, vx), cot_seed);
        if (with_grad) t.backward(loss);
        return t.val(loss).values[0];
    };
    Tensor* params[] = {&x};
    return grad_check(run, params, 1e-5);
}

double fd_check_binary(const std::function<Var(Tape&, Var, Var)>& op, Tensor& x, Tensor& y,
                       std::uint64_t cot_seed = 7) {
    auto run = [&](bool with_grad) {
        Tape t;
        Var loss = weighted_scalar(t, op(t, t.param(x), t.param(y)), cot_seed);
        if (with_grad) t.backward(loss);
        return t.val(loss).values[0];
    };
    Tensor* params[] = {&x, &y};
    return grad_check(run, params, 1e-5);
}

}  // namespace

TEST(TensorOps, MatmulIdentityLeavesMatrixUnchanged) {
    Tape t;
    Var id = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    Var m = t.constant(Tensor::matrix({{3, -1, 2}, {0.5, 4, -2}}));
    Var out = t.matmul(id, m);
    EXPECT_EQ(t.val(out).values, t.val(m).values);
}

TEST(TensorOps, RowSoftmaxOfZerosIsUniform) {
    Tape t;
    Var out = t.row_softmax(t.constant(Tensor::matrix({{0, 0}})));
    EXPECT_DOUBLE_EQ(t.val(out).values[0], 0.5);
    EXPECT_DOUBLE_EQ(t.val(out).values[1], 0.5);
}

TEST(TensorOps, ScatterAddCollidingIndicesSum) {
    Tape t;
    Var rows = t.constant(Tensor::matrix({{1}, {2}}));
    Var out = t.scatter_add_rows(rows, {0, 0}, 1);
    ASSERT_EQ(t.val(out).rows(), 1u);
    EXPECT_DOUBLE_EQ(t.val(out).values[0], 3.0);
}

TEST(TensorOps, ShapeMismatchThrowsDimensionError) {
    Tape t;
    Var a = t.constant(Tensor::zeros(2, 3));
    Var b = t.constant(Tensor::zeros(3, 3));
    EXPECT_THROW(t.add(a, b), DimensionError);
    EXPECT_THROW(t.matmul(a, a), DimensionError);
}

TEST(TensorOps, OutOfRangeIndexThrowsIndexError) {
    Tape t;
    Var a = t.constant(Tensor::zeros(2, 3));
    EXPECT_THROW(t.gather_rows(a, {0, 2}), IndexError);
    EXPECT_THROW(t.scatter_add_rows(a, {0, 5}, 4), IndexError);
    EXPECT_THROW(t.row_slice(a, 1, 4), IndexError);
}

TEST(TensorOps, ParamLeaseCopiesValues) {
    Tensor p = Tensor::matrix({{1, 2}}, true);
    Tape t;
    Var v = t.param(p);
    p.values[0] = 99.0;
    EXPECT_DOUBLE_EQ(t.val(v).values[0], 1.0);
}

TEST(Backward, SumOfSquares) {
    Tensor x = Tensor::matrix({{1, 2}}, true);
    Tape t;
    Var vx = t.param(x);
    Var loss = t.sum(t.elementwise_mul(vx, vx));
    t.backward(loss);
    EXPECT_DOUBLE_EQ(x.grad[0], 2.0);
    EXPECT_DOUBLE_EQ(x.grad[1], 4.0);
}

TEST(Backward, SigmoidAtZeroHasQuarterSlope) {
    Tensor x = Tensor::scalar(0.0, true);
    Tape t;
    Var loss = t.sigmoid(t.param(x));
    t.backward(loss);
    EXPECT_DOUBLE_EQ(x.grad[0], 0.25);
}

TEST(Backward, NonScalarLossRejected) {
    Tape t;
    Var a = t.constant(Tensor::zeros(2, 2));
    EXPECT_THROW(t.backward(a), ContractError);
}

TEST(Backward, UnreachableTensorsUntouched) {
    Tensor x = Tensor::matrix({{1, 2}}, true);
    Tensor y = Tensor::matrix({{3, 4}}, true);
    Tape t;
    Var vx = t.param(x);
    t.param(y);  // leased but not used by the loss
    t.backward(t.sum(vx));
    EXPECT_DOUBLE_EQ(x.grad[0], 1.0);
    EXPECT_DOUBLE_EQ(y.grad[0], 0.0);
    EXPECT_DOUBLE_EQ(y.grad[1], 0.0);
}

TEST(Backward, RepeatedBackwardIdempotentAfterZeroing) {
    Tensor x = random_tensor(3, 4, 11, "x");
    Tape t;
    Var vx = t.param(x);
    Var loss = t.mean(t.sigmoid(t.matmul(vx, t.constant(random_tensor(4, 2, 12, "w", false)))));
    t.backward(loss);
    std::vector<double> first = x.grad;
    x.zero_grad();
    t.backward(loss);
    EXPECT_EQ(first, x.grad);
}

// Every primitive's analytic gradient against central differences on random
// inputs in [-2, 2].
TEST(FiniteDifference, AllPrimitives) {
    const double tol = 1e-6;
    {
        Tensor a = random_tensor(3, 4, 1, "a"), b = random_tensor(4, 2, 1, "b");
        EXPECT_LT(fd_check_binary([](Tape& t, Var x, Var y) { return t.matmul(x, y); }, a, b), tol)
            << "matmul";
    }
    {
        Tensor a = random_tensor(3, 3, 2, "a"), b = random_tensor(3, 3, 2, "b2");
        EXPECT_LT(fd_check_binary([](Tape& t, Var x, Var y) { return t.add(x, y); }, a, b), tol);
        EXPECT_LT(fd_check_binary([](Tape& t, Var x, Var y) { return t.sub(x, y); }, a, b), tol);
        EXPECT_LT(fd_check_binary([](Tape& t, Var x, Var y) { return t.elementwise_mul(x, y); },
                                  a, b),
                  tol);
    }
    {
        Tensor m = random_tensor(4, 3, 3, "m"), v = random_tensor(1, 3, 3, "v");
        EXPECT_LT(fd_check_binary([](Tape& t, Var x, Var y) { return t.add_rowvec(x, y); }, m, v),
                  tol);
    }
    {
        Tensor m = random_tensor(4, 3, 4, "m"), c = random_tensor(4, 1, 4, "c");
        EXPECT_LT(fd_check_binary([](Tape& t, Var x, Var y) { return t.mul_colvec(x, y); }, m, c),
                  tol);
    }
    {
        Tensor m = random_tensor(3, 3, 5, "m"), s = random_tensor(1, 1, 5, "s");
        EXPECT_LT(fd_check_binary([](Tape& t, Var x, Var y) { return t.mul_scalar(x, y); }, m, s),
                  tol);
    }
    {
        Tensor a = random_tensor(3, 3, 6, "a");
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.scale(x, -1.7); }, a), tol);
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.sigmoid(x); }, a), tol);
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.tanh(x); }, a), tol);
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.row_softmax(x); }, a), tol);
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.row_sum(x); }, a), tol);
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.sum(x); }, a), tol);
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.mean(x); }, a), tol);
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.row_slice(x, 1, 3); }, a), tol);
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.slice_cols(x, 0, 2); }, a), tol);
    }
    {
        Tensor a = random_tensor(3, 3, 7, "relu", true, 1e-2);  // keep away from the kink
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.relu(x); }, a), tol);
    }
    {
        Tensor v = random_tensor(1, 4, 8, "v");
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.broadcast_rows(x, 5); }, v), tol);
    }
    {
        Tensor a = random_tensor(2, 3, 9, "a"), b = random_tensor(4, 3, 9, "b");
        EXPECT_LT(
            fd_check_binary([](Tape& t, Var x, Var y) { return t.concat_rows({x, y}); }, a, b),
            tol);
        Tensor c = random_tensor(2, 3, 9, "c"), d = random_tensor(2, 5, 9, "d");
        EXPECT_LT(
            fd_check_binary([](Tape& t, Var x, Var y) { return t.concat_cols({x, y}); }, c, d),
            tol);
    }
    {
        Tensor a = random_tensor(4, 3, 10, "gather");
        EXPECT_LT(fd_check_unary([](Tape& t, Var x) { return t.gather_rows(x, {2, 0, 2, 3}); }, a),
                  tol);
        EXPECT_LT(fd_check_unary(
                      [](Tape& t, Var x) { return t.scatter_add_rows(x, {1, 0, 1, 4}, 6); }, a),
                  tol);
    }
    {
        Tensor p = Tensor::zeros(4, 1, true);
        RngStream rng(13, "probs");
        for (auto& v : p.values) v = rng.next_double(0.05, 0.95);
        std::vector<double> labels = {1.0, 0.0, 1.0, 1.0};
        auto run = [&](bool with_grad) {
            Tape t;
            Var loss = t.bce_loss(t.param(p), labels);
            if (with_grad) t.backward(loss);
            return t.val(loss).values[0];
        };
        Tensor* params[] = {&p};
        EXPECT_LT(grad_check(run, params, 1e-6), tol) << "bce_loss";
    }
}

// <gather(x), y> == <x, scatter(y)> for random x, y.
TEST(FiniteDifference, ScatterIsAdjointOfGather) {
    RngStream rng(21, "adjoint");
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 3 + rng.next_below(5);
        std::size_t d = 1 + rng.next_below(4);
        std::size_t m = 1 + rng.next_below(6);
        std::vector<std::size_t> idx(m);
        for (auto& i : idx) i = rng.next_below(n);
        Tensor x = random_tensor(n, d, 100 + trial, "x", false);
        Tensor y = random_tensor(m, d, 200 + trial, "y", false);
        Tape t;
        Var gx = t.gather_rows(t.constant(x), idx);
        Var sy = t.scatter_add_rows(t.constant(y), idx, n);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < m * d; ++i) lhs += t.val(gx).values[i] * y.values[i];
        for (std::size_t i = 0; i < n * d; ++i) rhs += x.values[i] * t.val(sy).values[i];
        EXPECT_NEAR(lhs, rhs, 1e-12);
    }
}

TEST(GradCheck, QuadraticIsExact) {
    Tensor x = random_tensor(2, 3, 31, "q");
    auto run = [&](bool with_grad) {
        Tape t;
        Var vx = t.param(x);
        Var loss = t.sum(t.elementwise_mul(vx, vx));
        if (with_grad) t.backward(loss);
        return t.val(loss).values[0];
    };
    Tensor* params[] = {&x};
    EXPECT_LT(grad_check(run, params, 1e-5), 1e-8);
}

TEST(GradCheck, RejectsNonPositivePerturbation) {
    Tensor x = Tensor::scalar(1.0, true);
    Tensor* params[] = {&x};
    EXPECT_THROW(grad_check([](bool) { return 0.0; }, params, 0.0), ContractError);
}

TEST(GradCheck, NonFiniteValueThrowsNumericError) {
    Tensor x = Tensor::scalar(1.0, true);
    Tensor* params[] = {&x};
    auto run = [&](bool) { return std::numeric_limits<double>::quiet_NaN(); };
    EXPECT_THROW(grad_check(run, params, 1e-5), NumericError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Tensor p = Tensor::scalar(0.7, true);
    AdamState s;
    s.lr = 0.1;
    adam_step(s, p, {1.0});
    EXPECT_NEAR(p.values[0], 0.7 - 0.1, 1e-6);
    EXPECT_EQ(s.t, 1u);
}

TEST(Adagrad, FirstStepNormalizesGradient) {
    Tensor p = Tensor::scalar(0.0, true);
    AdagradState s;
    s.lr = 0.1;
    adagrad_step(s, p, {2.0});
    EXPECT_NEAR(p.values[0], -0.1, 1e-6);
}

TEST(Optimizers, ZeroGradientLeavesParametersUnchanged) {
    Tensor p = Tensor::matrix({{1, -2, 3}}, true);
    AdamState a;
    a.lr = 0.5;
    adam_step(a, p, {0, 0, 0});
    adam_step(a, p, {0, 0, 0});
    EXPECT_EQ(p.values, (std::vector<double>{1, -2, 3}));
    AdagradState g;
    g.lr = 0.5;
    adagrad_step(g, p, {0, 0, 0});
    EXPECT_EQ(p.values, (std::vector<double>{1, -2, 3}));
}

TEST(Optimizers, StepsAreDeterministic) {
    auto trajectory = [] {
        Tensor p = Tensor::matrix({{0.3, -0.4}}, true);
        AdamState s;
        s.lr = 0.05;
        s.weight_decay = 0.01;
        for (int i = 0; i < 17; ++i) adam_step(s, p, {0.1 * i, -0.2});
        return p.values;
    };
    EXPECT_EQ(trajectory(), trajectory());
}

TEST(Optimizers, ShapeMismatchThrows) {
    Tensor p = Tensor::matrix({{1, 2}}, true);
    AdamState s;
    EXPECT_THROW(adam_step(s, p, {1.0}), DimensionError);
    AdagradState g;
    EXPECT_THROW(adagrad_step(g, p, {1.0, 2.0, 3.0}), DimensionError);
}
