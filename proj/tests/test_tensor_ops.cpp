#include <doctest.h>

#include <cstring>

#include "oracles.hpp"
#include "xrnet/rng.hpp"
#include "xrnet/tensor_ops.hpp"

using xrnet::ConfigError;
using xrnet::ConvGeometry;
using xrnet::NumericError;
using xrnet::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<std::size_t> shape, xrnet::Rng& rng, double scale = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t) {
        v = static_cast<T>(scale * rng.normal());
    }
    return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>(a[i]) -
                                          static_cast<double>(b[i])));
    }
    return worst;
}

}  // namespace

TEST_CASE("conv geometry follows out = in + 2p - k + 1") {
    for (std::size_t in = 1; in <= 12; ++in) {
        for (std::size_t p = 0; p <= 3; ++p) {
            for (std::size_t k = 1; k <= 5; ++k) {
                ConvGeometry geom{k, p, 1, 1};
                if (in + 2 * p < k) {
                    CHECK_THROWS_AS(geom.output_extent(in), ConfigError);
                } else {
                    CHECK(geom.output_extent(in) == in + 2 * p - k + 1);
                }
            }
        }
    }
}

TEST_CASE("conv2d of all-ones 3x3 with all-ones kernel sums the window") {
    const auto input = Tensor<double>::full({3, 3, 1}, 1.0);
    const auto kernels = Tensor<double>::full({3, 3, 1, 1}, 1.0);
    const Tensor<double> bias({1});
    const auto out = xrnet::conv2d_forward(input, kernels, bias, {3, 0, 1, 1});
    CHECK(out.shape() == std::vector<std::size_t>{1, 1, 1});
    CHECK(out[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d with a delta kernel and padding 1 is the identity") {
    xrnet::Rng rng(11);
    auto input = random_tensor<double>({4, 4, 1}, rng);
    Tensor<double> kernels({3, 3, 1, 1});
    kernels(1, 1, 0, 0) = 1.0;  // delta at the center
    const Tensor<double> bias({1});
    const auto out = xrnet::conv2d_forward(input, kernels, bias, {3, 1, 1, 1});
    CHECK(out.shape() == input.shape());
    CHECK(max_abs_diff(out, input) == 0.0);
}

TEST_CASE("conv2d via im2col matches the direct nested-loop oracle") {
    xrnet::Rng rng(23);
    SUBCASE("spec case: 5x5x2 input, 2 kernels, padding 2") {
        const auto input = random_tensor<double>({5, 5, 2}, rng);
        const auto kernels = random_tensor<double>({3, 3, 2, 2}, rng);
        const auto bias = random_tensor<double>({2}, rng);
        const auto out = xrnet::conv2d_forward(input, kernels, bias, {3, 2, 2, 2});
        CHECK(out.shape() == std::vector<std::size_t>{7, 7, 2});
        const auto expected = oracle::conv2d_reference(input, kernels, bias, 2);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(oracle::rel_error(out[i], expected[i]) < 1e-6);
        }
    }
    SUBCASE("random small instances") {
        for (int trial = 0; trial < 25; ++trial) {
            const std::size_t h = 2 + rng.bounded(7), w = 2 + rng.bounded(7);
            const std::size_t c = 1 + rng.bounded(3), f = 1 + rng.bounded(4);
            const std::size_t k = 1 + rng.bounded(3);
            const std::size_t p = rng.bounded(3);
            if (h + 2 * p < k || w + 2 * p < k) {
                continue;
            }
            const auto input = random_tensor<double>({h, w, c}, rng);
            const auto kernels = random_tensor<double>({k, k, c, f}, rng);
            const auto bias = random_tensor<double>({f}, rng);
            const ConvGeometry geom{k, p, c, f};
            const auto out = xrnet::conv2d_forward(input, kernels, bias, geom);
            const auto expected = oracle::conv2d_reference(input, kernels, bias, p);
            for (std::size_t i = 0; i < out.size(); ++i) {
                CHECK(oracle::rel_error(out[i], expected[i]) < 1e-6);
            }
        }
    }
}

TEST_CASE("conv2d rejects bad shapes and non-finite input") {
    const auto input = Tensor<double>::full({4, 4, 2}, 1.0);
    const auto kernels = Tensor<double>::full({3, 3, 1, 1}, 1.0);
    const Tensor<double> bias({1});
    CHECK_THROWS_AS(xrnet::conv2d_forward(input, kernels, bias, ConvGeometry{3, 0, 1, 1}),
                    ConfigError);

    auto bad = Tensor<double>::full({3, 3, 1}, 1.0);
    bad[4] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(
        xrnet::conv2d_forward(bad, kernels, bias, ConvGeometry{3, 0, 1, 1}),
        NumericError);
}

TEST_CASE("im2col trivial shapes") {
    SUBCASE("1x1 input with k=1 is the pixel per channel") {
        const Tensor<double> input({1, 1, 3}, {4.0, 5.0, 6.0});
        const auto cols = xrnet::im2col(input, {1, 0, 3, 1});
        CHECK(cols.shape() == std::vector<std::size_t>{1, 3});
        CHECK(cols[0] == 4.0);
        CHECK(cols[2] == 6.0);
    }
    SUBCASE("k = H = W with no padding flattens the whole image") {
        xrnet::Rng rng(3);
        const auto input = random_tensor<double>({4, 4, 2}, rng);
        const auto cols = xrnet::im2col(input, {4, 0, 2, 1});
        CHECK(cols.shape() == std::vector<std::size_t>{1, 32});
        CHECK(cols.values() == input.values());
    }
}

TEST_CASE("im2col reconstruction identity against direct convolution") {
    xrnet::Rng rng(31);
    const auto input = random_tensor<double>({6, 5, 2}, rng);
    const auto kernels = random_tensor<double>({3, 3, 2, 3}, rng);
    const auto bias = random_tensor<double>({3}, rng);
    const ConvGeometry geom{3, 1, 2, 3};
    const auto cols = xrnet::im2col(input, geom);
    auto product = xrnet::matmul(cols, kernels.reshaped({18, 3}));
    for (std::size_t row = 0; row < product.extent(0); ++row) {
        for (std::size_t j = 0; j < 3; ++j) {
            product(row, j) += bias[j];
        }
    }
    const auto direct = oracle::conv2d_reference(input, kernels, bias, 1);
    const auto reshaped = product.reshaped(direct.shape());
    for (std::size_t i = 0; i < direct.size(); ++i) {
        CHECK(oracle::rel_error(reshaped[i], direct[i]) < 1e-6);
    }
}

TEST_CASE("conv2d backward") {
    SUBCASE("zero upstream gives zero gradients") {
        xrnet::Rng rng(5);
        const auto input = random_tensor<double>({4, 4, 2}, rng);
        const auto kernels = random_tensor<double>({3, 3, 2, 2}, rng);
        const ConvGeometry geom{3, 1, 2, 2};
        const Tensor<double> upstream({4, 4, 2});
        const auto grads = xrnet::conv2d_backward(input, kernels, geom, upstream);
        for (const double v : grads.input) {
            CHECK(v == 0.0);
        }
        for (const double v : grads.kernels) {
            CHECK(v == 0.0);
        }
        for (const double v : grads.bias) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("1x1 scalar chain rule") {
        const Tensor<double> input({1, 1, 1}, {3.0});
        const Tensor<double> kernels({1, 1, 1, 1}, {2.0});
        const Tensor<double> upstream({1, 1, 1}, {5.0});
        const auto grads = xrnet::conv2d_backward(input, kernels, {1, 0, 1, 1}, upstream);
        CHECK(grads.input[0] == doctest::Approx(2.0 * 5.0));    // w * g
        CHECK(grads.kernels[0] == doctest::Approx(3.0 * 5.0));  // x * g
        CHECK(grads.bias[0] == doctest::Approx(5.0));
    }
    SUBCASE("matches central finite differences") {
        xrnet::Rng rng(17);
        auto input = random_tensor<double>({5, 4, 2}, rng);
        auto kernels = random_tensor<double>({3, 3, 2, 2}, rng);
        auto bias = random_tensor<double>({2}, rng);
        const ConvGeometry geom{3, 2, 2, 2};
        const auto readout = random_tensor<double>({7, 6, 2}, rng);

        const auto loss = [&]() {
            const auto out = xrnet::conv2d_forward(input, kernels, bias, geom);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) {
                acc += out[i] * readout[i];
            }
            return acc;
        };
        const auto grads = xrnet::conv2d_backward(input, kernels, geom, readout);
        for (std::size_t i = 0; i < input.size(); ++i) {
            CHECK(oracle::rel_error(grads.input[i],
                                    oracle::central_difference(input[i], loss)) < 1e-4);
        }
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            CHECK(oracle::rel_error(grads.kernels[i],
                                    oracle::central_difference(kernels[i], loss)) < 1e-4);
        }
        for (std::size_t i = 0; i < bias.size(); ++i) {
            CHECK(oracle::rel_error(grads.bias[i],
                                    oracle::central_difference(bias[i], loss)) < 1e-4);
        }
    }
}

TEST_CASE("maxpool forward") {
    SUBCASE("2x2 single window") {
        const Tensor<double> input({2, 2, 1}, {1.0, 2.0, 3.0, 4.0});
        const auto result = xrnet::maxpool2d_forward(input);
        CHECK(result.output.shape() == std::vector<std::size_t>{1, 1, 1});
        CHECK(result.output[0] == 4.0);
        CHECK(result.argmax[0] == 3);
    }
    SUBCASE("constant input pools to floored half extents, first-index ties") {
        const auto input = Tensor<double>::full({5, 7, 2}, 3.5);
        const auto result = xrnet::maxpool2d_forward(input);
        CHECK(result.output.shape() == std::vector<std::size_t>{2, 3, 2});
        for (const double v : result.output) {
            CHECK(v == 3.5);
        }
        // Ties resolve to the first element of the window in scan order.
        CHECK(result.argmax[0] == 0);
        CHECK(result.argmax[1] == 1);
    }
    SUBCASE("random 5x5x3 matches the naive window oracle exactly") {
        xrnet::Rng rng(13);
        const auto input = random_tensor<double>({5, 5, 3}, rng);
        const auto result = xrnet::maxpool2d_forward(input);
        const auto expected = oracle::maxpool_reference(input);
        CHECK(result.output.shape() == expected.shape());
        CHECK(result.output.values() == expected.values());
    }
    SUBCASE("input smaller than the window is rejected") {
        CHECK_THROWS_AS(xrnet::maxpool2d_forward(Tensor<double>({1, 4, 1})), ConfigError);
    }
}

TEST_CASE("maxpool backward") {
    SUBCASE("routes the gradient to the recorded argmax only") {
        const Tensor<double> input({2, 2, 1}, {1.0, 2.0, 3.0, 4.0});
        const auto fwd = xrnet::maxpool2d_forward(input);
        const Tensor<double> upstream({1, 1, 1}, {7.0});
        const auto grad = xrnet::maxpool2d_backward(fwd.argmax, upstream, {2, 2, 1});
        CHECK(grad.values() == std::vector<double>{0.0, 0.0, 0.0, 7.0});
    }
    SUBCASE("zero upstream gives zero gradient") {
        xrnet::Rng rng(19);
        const auto input = random_tensor<double>({4, 4, 2}, rng);
        const auto fwd = xrnet::maxpool2d_forward(input);
        const auto grad =
            xrnet::maxpool2d_backward(fwd.argmax, Tensor<double>({2, 2, 2}), {4, 4, 2});
        for (const double v : grad) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("gradient mass over non-dropped windows is conserved") {
        xrnet::Rng rng(29);
        const auto input = random_tensor<double>({5, 5, 2}, rng);
        const auto fwd = xrnet::maxpool2d_forward(input);
        const auto upstream = random_tensor<double>({2, 2, 2}, rng);
        const auto grad = xrnet::maxpool2d_backward(fwd.argmax, upstream, {5, 5, 2});
        double up_sum = 0.0, grad_sum = 0.0;
        for (const double v : upstream) {
            up_sum += v;
        }
        for (const double v : grad) {
            grad_sum += v;
        }
        CHECK(grad_sum == doctest::Approx(up_sum).epsilon(1e-12));
    }
    SUBCASE("matches finite differences away from ties") {
        xrnet::Rng rng(37);
        auto input = random_tensor<double>({4, 4, 1}, rng);  // normal draws: no ties
        const auto readout = random_tensor<double>({2, 2, 1}, rng);
        const auto loss = [&]() {
            const auto fwd = xrnet::maxpool2d_forward(input);
            double acc = 0.0;
            for (std::size_t i = 0; i < fwd.output.size(); ++i) {
                acc += fwd.output[i] * readout[i];
            }
            return acc;
        };
        const auto fwd = xrnet::maxpool2d_forward(input);
        const auto grad = xrnet::maxpool2d_backward(fwd.argmax, readout, {4, 4, 1});
        for (std::size_t i = 0; i < input.size(); ++i) {
            CHECK(oracle::rel_error(grad[i], oracle::central_difference(input[i], loss)) <
                  1e-4);
        }
    }
    SUBCASE("stale argmax map is rejected") {
        const Tensor<double> input({4, 4, 1});
        const auto fwd = xrnet::maxpool2d_forward(input);
        const Tensor<double> upstream({2, 2, 1});
        CHECK_THROWS_AS(xrnet::maxpool2d_backward(fwd.argmax, upstream, {6, 6, 1}),
                        ConfigError);
    }
}

TEST_CASE("matmul") {
    SUBCASE("identity times A is A") {
        Tensor<double> eye({3, 3});
        for (std::size_t i = 0; i < 3; ++i) {
            eye(i, i) = 1.0;
        }
        xrnet::Rng rng(41);
        const auto a = random_tensor<double>({3, 4}, rng);
        const auto out = xrnet::matmul(eye, a);
        CHECK(out.values() == a.values());
    }
    SUBCASE("1x1 is scalar multiplication") {
        const Tensor<double> a({1, 1}, {3.0});
        const Tensor<double> b({1, 1}, {-4.0});
        CHECK(xrnet::matmul(a, b)[0] == doctest::Approx(-12.0));
    }
    SUBCASE("random 7x5 by 5x3 matches the triple-loop oracle") {
        xrnet::Rng rng(43);
        const auto a = random_tensor<double>({7, 5}, rng);
        const auto b = random_tensor<double>({5, 3}, rng);
        const auto out = xrnet::matmul(a, b);
        const auto expected = oracle::matmul_reference(a, b);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(oracle::rel_error(out[i], expected[i]) < 1e-6);
        }
    }
    SUBCASE("inner dimension mismatch is a configuration error") {
        CHECK_THROWS_AS(xrnet::matmul(Tensor<double>({2, 3}), Tensor<double>({4, 2})),
                        ConfigError);
    }
}

TEST_CASE("operations are bit-deterministic") {
    xrnet::Rng rng(47);
    const auto input = random_tensor<float>({6, 6, 2}, rng);
    const auto kernels = random_tensor<float>({3, 3, 2, 3}, rng);
    const auto bias = random_tensor<float>({3}, rng);
    const ConvGeometry geom{3, 2, 2, 3};
    const auto a = xrnet::conv2d_forward(input, kernels, bias, geom);
    const auto b = xrnet::conv2d_forward(input, kernels, bias, geom);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);

    const auto p1 = xrnet::maxpool2d_forward(input);
    const auto p2 = xrnet::maxpool2d_forward(input);
    CHECK(std::memcmp(p1.output.data(), p2.output.data(), p1.output.size() * sizeof(float)) ==
          0);
    CHECK(p1.argmax == p2.argmax);
}
