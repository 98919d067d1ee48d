#include "fd_oracle.hpp"

#include "sketch3t/autodiff.hpp"
#include "sketch3t/error.hpp"
#include "sketch3t/rng.hpp"

#include <gtest/gtest.h>

#include <array>

using namespace sketch3t;
using namespace sketch3t::ad;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Checks every leaf gradient of the scalar built by `f` against central
// differences.
void check_grads(const std::vector<Var>& leaves, const std::function<Var()>& f, double tol = 1e-6) {
    const Var out = f();
    const std::vector<Var> g = grad(out, leaves);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        const Tensor num = fd::numeric_grad([&] { return f().item(); }, leaves[k]);
        EXPECT_LT(fd::rel_err(g[k].value(), num), tol) << "leaf " << k;
    }
}

} // namespace

TEST(Autodiff, ElementwiseWithBroadcasting) {
    Rng rng(1);
    const Var a = Var::param(random_tensor({2, 3}, rng));
    const Var b = Var::param(random_tensor({3}, rng, 0.5, 1.5));
    const Var c = Var::param(random_tensor({2, 1}, rng, 0.5, 1.5));
    const Var s = Var::param(Tensor::scalar(0.7));
    check_grads({a, b, c, s}, [&] {
        Var y = add(mul(a, b), div(c, b));
        y = sub(y, mul(s, square(a)));
        y = add(y, tanh(y));
        y = add(y, sigmoid(scale(a, 2.0)));
        y = add(y, exp(scale(c, 0.5)));
        y = add(y, log(add_scalar(square(a), 1.0)));
        y = add(y, rsqrt(b));
        return sum(mul(y, neg(y)));
    });
}

TEST(Autodiff, ReluAwayFromKink) {
    const Var a = Var::param(Tensor({4}, std::vector<double>{-0.8, -0.2, 0.3, 1.1}));
    check_grads({a}, [&] { return sum(square(relu(a))); });
}

TEST(Autodiff, ReductionsAndShapes) {
    Rng rng(2);
    const Var a = Var::param(random_tensor({3, 4}, rng));
    const Var b = Var::param(random_tensor({4, 2}, rng));
    check_grads({a, b}, [&] {
        const Var m = matmul(a, b);
        const Var t = transpose(m);
        const Var r = reshape(t, {3, 2});
        const std::array<Var, 2> rows{slice_rows(r, 0, 2), pad_rows(slice_rows(r, 2, 3), 1, 3)};
        const Var cr = concat_rows(rows);
        const std::array<Var, 2> cols{slice_cols(cr, 1, 2), pad_cols(slice_cols(cr, 0, 1), 0, 2)};
        const Var cc = concat_cols(cols);
        const Var st = sum_to(cc, {1, 3});
        const Var bt = broadcast_to(st, {5, 3});
        return add(mean(mul(bt, square(cc))), sum(sum_rows(square(cc))));
    });
}

TEST(Autodiff, ConvolutionTriad) {
    Rng rng(3);
    const Conv2dGeom geom{2, 1};
    const Var x = Var::param(random_tensor({2, 2, 6, 6}, rng));
    const Var w = Var::param(random_tensor({3, 2, 4, 4}, rng));
    const Var gy = Var::param(random_tensor({2, 3, 3, 3}, rng));
    EXPECT_EQ(conv_out_size(6, 4, geom), 3);
    check_grads({x, w}, [&] { return sum(square(conv2d(x, w, geom))); });
    check_grads({gy, w}, [&] { return sum(square(conv2d_transpose(gy, w, geom, 6, 6))); });
    check_grads({x, gy}, [&] { return sum(square(conv2d_weight(x, gy, geom, 4))); });
}

TEST(Autodiff, ConvolutionAdjointIdentity) {
    // <conv(x, w), g> == <x, conv_T(g, w)> == <w, conv_weight(x, g)>
    Rng rng(4);
    const Conv2dGeom geom{2, 1};
    const Var x = Var::constant(random_tensor({1, 2, 8, 8}, rng));
    const Var w = Var::constant(random_tensor({3, 2, 4, 4}, rng));
    const Var g = Var::constant(random_tensor({1, 3, 4, 4}, rng));
    const double lhs = sum(mul(conv2d(x, w, geom), g)).item();
    EXPECT_NEAR(lhs, sum(mul(x, conv2d_transpose(g, w, geom, 8, 8))).item(), 1e-12);
    EXPECT_NEAR(lhs, sum(mul(w, conv2d_weight(x, g, geom, 4))).item(), 1e-12);
}

TEST(Autodiff, GroupNormAndLogSoftmax) {
    Rng rng(5);
    const Var x = Var::param(random_tensor({2, 4, 3, 3}, rng));
    const Var gamma = Var::param(random_tensor({4}, rng, 0.5, 1.5));
    const Var beta = Var::param(random_tensor({4}, rng));
    const Var probe = Var::constant(random_tensor({2, 4, 3, 3}, rng));
    check_grads({x, gamma, beta}, [&] { return sum(mul(group_norm(x, gamma, beta, 2), probe)); });
    const Var z = Var::param(random_tensor({3, 5}, rng, -3, 3));
    const Var p = Var::constant(random_tensor({3, 5}, rng));
    check_grads({z}, [&] { return sum(mul(log_softmax_rows(z), p)); });
}

TEST(Autodiff, GroupNormIsPerSample) {
    Rng rng(6);
    const Tensor a = random_tensor({1, 4, 3, 3}, rng), b = random_tensor({1, 4, 3, 3}, rng);
    Tensor ab({2, 4, 3, 3});
    std::copy(a.data.begin(), a.data.end(), ab.data.begin());
    std::copy(b.data.begin(), b.data.end(), ab.data.begin() + 36);
    const Var gamma = Var::constant(Tensor({4}, 1.0)), beta = Var::constant(Tensor({4}, 0.0));
    const Tensor single = group_norm(Var::constant(a), gamma, beta, 4).value();
    const Tensor batched = group_norm(Var::constant(ab), gamma, beta, 4).value();
    for (std::size_t j = 0; j < 36; ++j) EXPECT_EQ(single.data[j], batched.data[j]);
}

TEST(Autodiff, SecondOrderThroughConvAndNorm) {
    // Hessian-vector product: d/dw <grad_w f(w), v> vs differences of the
    // first-order gradient.
    Rng rng(7);
    const Conv2dGeom geom{2, 1};
    const Var x = Var::constant(random_tensor({2, 3, 8, 8}, rng));
    const Var w = Var::param(random_tensor({4, 3, 4, 4}, rng, -0.5, 0.5));
    const Var gamma = Var::param(random_tensor({4}, rng, 0.5, 1.5));
    const Var beta = Var::param(random_tensor({4}, rng));
    const Tensor vw = random_tensor({4, 3, 4, 4}, rng);
    const std::vector<Var> leaves{w, gamma, beta};
    const auto loss = [&] { return sum(square(tanh(group_norm(conv2d(x, w, geom), gamma, beta, 2)))); };
    const auto gv = [&](bool create) {
        const std::vector<Var> g = grad(loss(), leaves, create);
        return sum(mul(g[0], Var::constant(vw)));
    };
    const std::vector<Var> hv = grad(gv(true), leaves);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        const Tensor num = fd::numeric_grad([&] { return gv(false).item(); }, leaves[k]);
        EXPECT_LT(fd::rel_err(hv[k].value(), num), 1e-5) << "leaf " << k;
    }
}

TEST(Autodiff, UnreachedInputsGetZeros) {
    const Var a = Var::param(Tensor({2}, 1.0));
    const Var b = Var::param(Tensor({3}, 2.0));
    const std::array<Var, 2> wrt{a, b};
    const auto g = grad(sum(square(a)), wrt);
    EXPECT_EQ(g[1].value(), Tensor({3}, 0.0));
    EXPECT_EQ(g[0].value(), Tensor({2}, 2.0));
}

TEST(Autodiff, NoGradRecordsNothing) {
    const Var a = Var::param(Tensor({2}, 1.0));
    NoGrad ng;
    const Var y = square(a);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Autodiff, ShapeMismatchThrows) {
    const Var a = Var::constant(Tensor({2, 3}));
    const Var b = Var::constant(Tensor({4, 2}));
    EXPECT_THROW(matmul(a, a), ShapeError);
    EXPECT_THROW(add(a, b), ShapeError);
}
