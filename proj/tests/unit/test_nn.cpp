#include <doctest.h>

#include <cmath>
#include <functional>

#include "seld/error.hpp"
#include "seld/nn.hpp"
#include "test_util.hpp"

using namespace seld;
using namespace seld::nn;
using testutil::Rng;

namespace {

using Forward = std::function<std::vector<double>()>;

// Checks d<g, f>/dv against `analytic` by central differences; returns the worst relative error.
double fd_check(std::vector<double>& v, const std::vector<double>& analytic, const std::vector<double>& g,
                const Forward& f, double eps = 1e-6) {
    double worst = 0.0;
    auto dot = [&](const std::vector<double>& y) {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += g[i] * y[i];
        return s;
    };
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double keep = v[i];
        v[i] = keep + eps;
        const double up = dot(f());
        v[i] = keep - eps;
        const double down = dot(f());
        v[i] = keep;
        worst = std::max(worst, testutil::rel_err(analytic[i], (up - down) / (2 * eps), 1e-7));
    }
    return worst;
}

}  // namespace

TEST_CASE("activations") {
    CHECK(silu(0.0) == 0.0);
    CHECK(silu(2.0) == doctest::Approx(2.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
    CHECK(sigmoid(0.0) == 0.5);
    for (double v : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
        const double fd = (silu(v + 1e-6) - silu(v - 1e-6)) / 2e-6;
        CHECK(silu_grad(v) == doctest::Approx(fd).epsilon(1e-8));
    }
    CHECK(std::isfinite(silu(-1000.0f)));
}

TEST_CASE("linear forward matches a naive product and has correct gradients") {
    Rng rng(1);
    Linear<double> lin("fc", 5, 3, true);
    lin.init(rng);
    lin.bias().value = {0.1, -0.2, 0.3};
    auto x = testutil::uniform<double>(rng, 4 * 5, -1, 1);
    const auto y = lin.forward(x, 4);
    for (int r = 0; r < 4; ++r) {
        for (int o = 0; o < 3; ++o) {
            double s = lin.bias().value[o];
            for (int i = 0; i < 5; ++i) s += x[r * 5 + i] * lin.weight().value[o * 5 + i];
            CHECK(y[r * 3 + o] == doctest::Approx(s).epsilon(1e-14));
        }
    }
    CHECK(lin.param_count() == 18);

    const auto g = testutil::uniform<double>(rng, 12, -1, 1);
    lin.forward(x, 4);
    const auto dx = lin.backward(g);
    const auto dw = lin.weight().grad;
    const auto db = lin.bias().grad;
    Forward f = [&] { return lin.forward(x, 4); };
    CHECK(fd_check(x, dx, g, f) <= 1e-7);
    CHECK(fd_check(lin.weight().value, dw, g, f) <= 1e-7);
    CHECK(fd_check(lin.bias().value, db, g, f) <= 1e-7);
    CHECK_THROWS_AS(lin.forward(std::vector<double>(7, 0.0), 2), ShapeError);
}

TEST_CASE("layer norm normalizes rows and has correct gradients") {
    Rng rng(2);
    LayerNorm<double> ln("ln", 6);
    auto x = testutil::uniform<double>(rng, 3 * 6, -2, 2);
    const auto y = ln.forward(x, 3);
    for (int r = 0; r < 3; ++r) {
        double m = 0.0, v = 0.0;
        for (int i = 0; i < 6; ++i) m += y[r * 6 + i];
        m /= 6;
        for (int i = 0; i < 6; ++i) v += (y[r * 6 + i] - m) * (y[r * 6 + i] - m);
        CHECK(std::abs(m) <= 1e-12);
        CHECK(v / 6 == doctest::Approx(1.0).epsilon(1e-4));
    }
    ln.gamma().value = testutil::uniform<double>(rng, 6, 0.5, 1.5);
    ln.beta().value = testutil::uniform<double>(rng, 6, -0.5, 0.5);
    const auto g = testutil::uniform<double>(rng, 18, -1, 1);
    ln.forward(x, 3);
    const auto dx = ln.backward(g);
    const auto dgamma = ln.gamma().grad;
    const auto dbeta = ln.beta().grad;
    Forward f = [&] { return ln.forward(x, 3); };
    CHECK(fd_check(x, dx, g, f) <= 1e-6);
    CHECK(fd_check(ln.gamma().value, dgamma, g, f) <= 1e-6);
    CHECK(fd_check(ln.beta().value, dbeta, g, f) <= 1e-6);
}

TEST_CASE("channel norm calibration freezes the mean statistics") {
    ChannelNorm<double> cn("bn", 2, false);
    cn.begin_calibration();
    // channel 0: mean 1 var 1; channel 1: mean -2 var 4 (first sample), mean 0 var 0 (second).
    cn.forward(std::vector<double>{0, 2, -4, 0});
    cn.forward(std::vector<double>{1, 1, 0, 0});
    cn.end_calibration();
    CHECK(cn.running_mean().value[0] == doctest::Approx(1.0));
    CHECK(cn.running_mean().value[1] == doctest::Approx(-1.0));
    CHECK(cn.running_var().value[0] == doctest::Approx(0.5));
    CHECK(cn.running_var().value[1] == doctest::Approx(2.0));
    CHECK_FALSE(cn.running_mean().trainable);

    const auto y = cn.forward(std::vector<double>{1, 3, -1, 1});
    CHECK(y[0] == doctest::Approx(0.0));
    CHECK(y[1] == doctest::Approx(2.0 / std::sqrt(0.5 + 1e-5)));
    CHECK(y[3] == doctest::Approx(2.0 / std::sqrt(2.0 + 1e-5)));

    Rng rng(3);
    ChannelNorm<double> last("bn", 3, true);
    last.gamma().value = {1.5, 0.5, -1.0};
    auto x = testutil::uniform<double>(rng, 5 * 3, -1, 1);
    const auto g = testutil::uniform<double>(rng, 15, -1, 1);
    last.forward(x);
    const auto dx = last.backward(g);
    const auto dgamma = last.gamma().grad;
    Forward f = [&] { return last.forward(x); };
    CHECK(fd_check(x, dx, g, f) <= 1e-7);
    CHECK(fd_check(last.gamma().value, dgamma, g, f) <= 1e-7);
}

TEST_CASE("3x3 convolution matches a direct loop oracle") {
    Rng rng(4);
    const int cin = 3, cout = 2, h = 5, w = 4;
    Conv2d3x3<double> conv("conv", cin, cout);
    conv.init(rng);
    conv.bias().value = {0.25, -0.5};
    auto x = testutil::uniform<double>(rng, cin * h * w, -1, 1);
    const std::uint64_t before = mac_counter();
    const auto y = conv.forward(x, h, w);
    CHECK(mac_counter() - before == 9ull * cin * cout * h * w);
    for (int o = 0; o < cout; ++o) {
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                double s = conv.bias().value[o];
                for (int i = 0; i < cin; ++i) {
                    for (int dr = -1; dr <= 1; ++dr) {
                        for (int dc = -1; dc <= 1; ++dc) {
                            const int rr = r + dr, cc = c + dc;
                            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                            s += conv.weight().value[((o * cin + i) * 3 + dr + 1) * 3 + dc + 1] * x[(i * h + rr) * w + cc];
                        }
                    }
                }
                CHECK(y[(o * h + r) * w + c] == doctest::Approx(s).epsilon(1e-13));
            }
        }
    }
    CHECK(conv.param_count() == 9u * cin * cout + cout);

    const auto g = testutil::uniform<double>(rng, y.size(), -1, 1);
    conv.forward(x, h, w);
    const auto dx = conv.backward(g);
    const auto dw = conv.weight().grad;
    const auto db = conv.bias().grad;
    Forward f = [&] { return conv.forward(x, h, w); };
    CHECK(fd_check(x, dx, g, f) <= 1e-7);
    CHECK(fd_check(conv.weight().value, dw, g, f) <= 1e-7);
    CHECK(fd_check(conv.bias().value, db, g, f) <= 1e-7);
}

TEST_CASE("max pooling takes window maxima with ceil mode") {
    MaxPool2d<double> pool(2, 2);
    // one channel, 3x3
    const std::vector<double> x{1, 5, 2, 3, 4, 9, 7, 0, 6};
    const auto y = pool.forward(x, 1, 3, 3);
    CHECK(y == std::vector<double>{5, 9, 7, 6});
    CHECK(pool.out_h(251) == 126);
    const auto dx = pool.backward(std::vector<double>{1, 2, 3, 4});
    CHECK(dx == std::vector<double>{0, 1, 0, 0, 0, 2, 3, 0, 4});
}

TEST_CASE("depthwise conv padding modes") {
    DepthwiseConv1d<double> same("dw", 1, 3, ConvPadding::reflect_same);
    same.weight().value = {1, 10, 100};
    // x = [1 2 3 4]; reflect pad gives [2 1 2 3 4 3].
    auto y = same.forward(std::vector<double>{1, 2, 3, 4}, 1, 4, 1);
    CHECK(y == std::vector<double>{2 + 10 + 200, 1 + 20 + 300, 2 + 30 + 400, 3 + 40 + 300});

    DepthwiseConv1d<double> causal("dw", 1, 3, ConvPadding::causal_zero);
    causal.weight().value = {1, 10, 100};
    y = causal.forward(std::vector<double>{1, 2, 3, 4}, 1, 4, 1);
    CHECK(y == std::vector<double>{100, 10 + 200, 1 + 20 + 300, 2 + 30 + 400});
    CHECK_THROWS_AS(DepthwiseConv1d<double>("dw", 1, 4, ConvPadding::reflect_same), InputError);

    Rng rng(5);
    DepthwiseConv1d<double> conv("dw", 3, 3, ConvPadding::reflect_same);
    conv.init(rng);
    conv.bias().value = {0.1, 0.2, 0.3};
    auto x = testutil::uniform<double>(rng, 2 * 5 * 2 * 3, -1, 1);
    const auto g = testutil::uniform<double>(rng, x.size(), -1, 1);
    conv.forward(x, 2, 5, 2);
    const auto dx = conv.backward(g);
    const auto dw = conv.weight().grad;
    const auto db = conv.bias().grad;
    Forward f = [&] { return conv.forward(x, 2, 5, 2); };
    CHECK(fd_check(x, dx, g, f) <= 1e-7);
    CHECK(fd_check(conv.weight().value, dw, g, f) <= 1e-7);
    CHECK(fd_check(conv.bias().value, db, g, f) <= 1e-7);
}

TEST_CASE("adam first steps follow the closed form") {
    Param<double> p("p", {2});
    p.value = {1.0, -1.0};
    Adam<double> opt({&p}, AdamConfig<double>{0.1, 0.9, 0.999, 1e-8});
    p.grad = {0.5, -2.0};
    opt.step();
    // First bias-corrected step moves each coordinate by lr * sign(g).
    CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(p.value[1] == doctest::Approx(-0.9).epsilon(1e-7));
    opt.zero_grad();
    CHECK(p.grad == std::vector<double>{0.0, 0.0});
    opt.step();
    // Zero gradient on the second step: only the decayed moments move the parameter.
    const double m_hat = 0.9 * 0.1 * 0.5 / 0.19;
    const double v_hat = 0.999 * 0.001 * 0.25 / (1 - 0.999 * 0.999);
    const double first = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
    CHECK(p.value[0] == doctest::Approx(first - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-10));
    CHECK(opt.steps() == 2);

    Param<double> frozen("f", {1}, false);
    frozen.value = {3.0};
    frozen.grad = {1.0};
    CHECK(frozen.trainable == false);
}

TEST_CASE("initialization is reproducible") {
    Rng a(7), b(7);
    Linear<float> la("l", 8, 8, true), lb("l", 8, 8, true);
    la.init(a);
    lb.init(b);
    CHECK(la.weight().value == lb.weight().value);
}
