#include "doctest.h"

#include <functional>

#include "core/tape.hpp"

using namespace fading;

namespace {

Tensor randn(Rng& rng, std::vector<int> shape, float scale = 1.0f) {
    Tensor t(std::move(shape));
    rng.fill_normal(t, scale);
    return t;
}

// Central-difference check of d(loss)/d(input) for a scalar-producing
// graph builder. The builder receives the tape and the ids of the
// registered inputs, in order.
void gradcheck(std::vector<Tensor> inputs,
               const std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>& build,
               double h = 1e-3, double tol = 5e-3) {
    Tape tape;
    std::vector<Tape::NodeId> ids;
    for (const auto& in : inputs) ids.push_back(tape.input(in, true));
    Tape::NodeId loss = build(tape, ids);
    REQUIRE(tape.value(loss).numel() == 1);
    tape.backward(loss);

    auto eval = [&](const std::vector<Tensor>& xs) {
        Tape t2;
        std::vector<Tape::NodeId> ids2;
        for (const auto& in : xs) ids2.push_back(t2.input(in, false));
        return static_cast<double>(t2.value(build(t2, ids2))[0]);
    };

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& g = tape.grad(ids[k]);
        // Probe a handful of coordinates per input.
        for (std::size_t i = 0; i < inputs[k].numel(); i += std::max<std::size_t>(1, inputs[k].numel() / 7)) {
            std::vector<Tensor> xs = inputs;
            float orig = xs[k][i];
            xs[k][i] = orig + static_cast<float>(h);
            double lp = eval(xs);
            xs[k][i] = orig - static_cast<float>(h);
            double lm = eval(xs);
            double fd = (lp - lm) / (2.0 * h);
            CHECK(std::abs(fd - g[i]) <= tol * (1.0 + std::abs(fd)));
        }
    }
}

}  // namespace

TEST_CASE("gradients of elementwise and affine ops match finite differences") {
    Rng rng(10);
    Tensor target = randn(rng, {2, 4, 4});

    SUBCASE("add") {
        gradcheck({randn(rng, {2, 4, 4}), randn(rng, {2, 4, 4})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.add(in[0], in[1]), t.input(target));
        });
    }
    SUBCASE("axpby") {
        gradcheck({randn(rng, {2, 4, 4}), randn(rng, {2, 4, 4})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.axpby(0.3f, in[0], -1.7f, in[1]), t.input(target));
        });
    }
    SUBCASE("scale") {
        gradcheck({randn(rng, {2, 4, 4})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.scale(in[0], -2.5f), t.input(target));
        });
    }
    SUBCASE("silu") {
        gradcheck({randn(rng, {2, 4, 4})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.silu(in[0]), t.input(target));
        });
    }
    SUBCASE("channel bias") {
        gradcheck({randn(rng, {2, 4, 4}), randn(rng, {2})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.add_channel_bias(in[0], in[1]), t.input(target));
        });
    }
    SUBCASE("reshape") {
        gradcheck({randn(rng, {2, 4, 4})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.reshape(in[0], {4, 8}), t.input(Tensor({4, 8}, 0.1f)));
        });
    }
}

TEST_CASE("gradients of convolution and resampling ops match finite differences") {
    Rng rng(11);

    SUBCASE("conv stride 1") {
        Tensor target = randn(rng, {3, 4, 4});
        gradcheck({randn(rng, {2, 4, 4}), randn(rng, {3, 2, 3, 3}, 0.4f), randn(rng, {3})},
                  [&](Tape& t, const auto& in) {
                      return t.mse_loss(t.conv3x3(in[0], in[1], in[2]), t.input(target));
                  });
    }
    SUBCASE("conv stride 2") {
        Tensor target = randn(rng, {3, 2, 2});
        gradcheck({randn(rng, {2, 4, 4}), randn(rng, {3, 2, 3, 3}, 0.4f), randn(rng, {3})},
                  [&](Tape& t, const auto& in) {
                      return t.mse_loss(t.conv3x3(in[0], in[1], in[2], 2), t.input(target));
                  });
    }
    SUBCASE("nearest-neighbor upsample") {
        Tensor target = randn(rng, {2, 8, 8});
        gradcheck({randn(rng, {2, 4, 4})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.upsample_nearest2(in[0]), t.input(target));
        });
    }
    SUBCASE("layout transposes") {
        Tensor target = randn(rng, {2, 4, 4});
        gradcheck({randn(rng, {2, 4, 4})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.pixc_to_chw(t.chw_to_pixc(in[0]), 4, 4), t.input(target));
        });
    }
}

TEST_CASE("gradients of matrix products and softmax match finite differences") {
    Rng rng(12);

    SUBCASE("matmul") {
        Tensor target = randn(rng, {3, 5});
        gradcheck({randn(rng, {3, 4}), randn(rng, {4, 5})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.matmul(in[0], in[1]), t.input(target));
        });
    }
    SUBCASE("matmul with transposed right operand") {
        Tensor target = randn(rng, {3, 5});
        gradcheck({randn(rng, {3, 4}), randn(rng, {5, 4})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.matmul_nt(in[0], in[1]), t.input(target));
        });
    }
    SUBCASE("row softmax") {
        Tensor target(std::vector<int>{4, 6}, 0.2f);
        gradcheck({randn(rng, {4, 6})}, [&](Tape& t, const auto& in) {
            return t.mse_loss(t.softmax_rows(in[0]), t.input(target));
        });
    }
    SUBCASE("softmax rows are stochastic") {
        Tape t;
        Tensor x = randn(rng, {5, 7});
        const Tensor& p = t.value(t.softmax_rows(t.input(x)));
        for (int r = 0; r < 5; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 7; ++c) sum += p[static_cast<std::size_t>(r) * 7 + c];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("mse loss value and gradient") {
    Tape t;
    Tensor a({2}), b({2});
    a[0] = 1.0f;
    a[1] = 3.0f;
    b[0] = 0.0f;
    b[1] = 1.0f;
    auto ida = t.input(a, true);
    auto loss = t.mse_loss(ida, t.input(b));
    CHECK(t.value(loss)[0] == doctest::Approx((1.0 + 4.0) / 2.0));
    t.backward(loss);
    CHECK(t.grad(ida)[0] == doctest::Approx(2.0 * 1.0 / 2.0));
    CHECK(t.grad(ida)[1] == doctest::Approx(2.0 * 2.0 / 2.0));
}

TEST_CASE("backward through a shared subexpression accumulates both paths") {
    Tape t;
    Tensor x({1});
    x[0] = 1.5f;
    auto id = t.input(x, true);
    auto y = t.add(id, id);  // dy/dx = 2
    auto loss = t.mse_loss(y, t.input(Tensor({1})));
    t.backward(loss);
    // loss = (2x)^2, d/dx = 8x = 12.
    CHECK(t.grad(id)[0] == doctest::Approx(12.0).epsilon(1e-5));
}
