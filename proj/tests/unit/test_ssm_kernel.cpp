#include <doctest.h>

#include <cmath>

#include "seld/error.hpp"
#include "seld/ssm_kernel.hpp"
#include "test_util.hpp"

using namespace seld;
using namespace seld::ssm;
using testutil::Rng;

namespace {

// exp(M) by a plain 20-term Taylor series.
Eigen::MatrixXd taylor_exp(const Eigen::MatrixXd& m, int terms = 20) {
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(m.rows(), m.cols());
    Eigen::MatrixXd sum = term;
    for (int k = 1; k < terms; ++k) {
        term = term * m / static_cast<double>(k);
        sum += term;
    }
    return sum;
}

template <typename T>
SsmParams<T> random_selective(Rng& rng, std::size_t n, std::size_t len, bool skip = true) {
    SsmParams<T> p;
    p.a = testutil::uniform<T>(rng, n, -2.0, -0.1);
    p.b = testutil::uniform<T>(rng, len * n, -0.5, 0.5);
    p.c = testutil::uniform<T>(rng, len * n, -0.5, 0.5);
    p.delta = testutil::uniform<T>(rng, len, 1e-3, 1e-1);
    p.d = static_cast<T>(std::uniform_real_distribution<double>(-1, 1)(rng));
    p.skip_term = skip;
    return p;
}

// Straight recurrence with the scalar closed form, independent of the library.
std::vector<double> oracle_scan(const SsmParams<double>& p, const std::vector<double>& x, std::vector<double> h) {
    const std::size_t n = p.a.size();
    std::vector<double> y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dt = p.delta.size() == 1 ? p.delta[0] : p.delta[k];
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double bi = p.b.size() == n ? p.b[i] : p.b[k * n + i];
            const double ci = p.c.size() == n ? p.c[i] : p.c[k * n + i];
            const double a = p.a[i];
            const double bbar = a == 0.0 ? dt * bi : (std::exp(dt * a) - 1.0) / a * bi;
            h[i] = std::exp(dt * a) * h[i] + bbar * x[k];
            acc += ci * h[i];
        }
        y[k] = acc + (p.skip_term ? p.d * x[k] : 0.0);
    }
    return y;
}

}  // namespace

TEST_CASE("discretize scalar examples") {
    auto d = discretize<double>(std::vector<double>{0.0}, std::vector<double>{1.0}, 0.5);
    CHECK(d.a_bar[0] == 1.0);
    CHECK(d.b_bar[0] == 0.5);
    d = discretize<double>(std::vector<double>{-1.0}, std::vector<double>{1.0}, std::log(2.0));
    CHECK(d.a_bar[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(d.b_bar[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("discretize diag(-1,-2) against the Taylor oracle") {
    const std::vector<double> a{-1.0, -2.0}, b{0.7, -1.3};
    const double dt = 0.1;
    const auto d = discretize<double>(a, b, dt);
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(3, 3);
    aug(0, 0) = a[0] * dt;
    aug(1, 1) = a[1] * dt;
    aug(0, 2) = b[0] * dt;
    aug(1, 2) = b[1] * dt;
    const Eigen::MatrixXd e = taylor_exp(aug);
    for (int i = 0; i < 2; ++i) {
        CHECK(std::abs(d.a_bar[i] - e(i, i)) <= 1e-10);
        CHECK(std::abs(d.b_bar[i] - e(i, 2)) <= 1e-10);
    }
}

TEST_CASE("small-step branch stays on the closed form") {
    const auto d = discretize<double>(std::vector<double>{-1e-9}, std::vector<double>{2.0}, 1.0);
    CHECK(std::abs(d.b_bar[0] - std::expm1(-1e-9) / -1e-9 * 2.0) < 1e-15);
    CHECK(std::abs(d.a_bar[0] - std::exp(-1e-9)) < 1e-18);
    CHECK_THROWS_AS(discretize<double>(std::vector<double>{NAN}, std::vector<double>{1.0}, 0.1), InputError);
    CHECK_THROWS_AS(discretize<double>(std::vector<double>{-1.0}, std::vector<double>{1.0}, 0.0), InputError);
}

TEST_CASE("dense discretization matches the Taylor oracle") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + trial % 4;
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd b(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) a(i, j) = std::uniform_real_distribution<double>(-1, 1)(rng);
            b(i) = std::uniform_real_distribution<double>(-1, 1)(rng);
        }
        const double dt = std::uniform_real_distribution<double>(0.01, 0.3)(rng);
        const auto d = discretize_dense(a, b, dt);
        Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
        aug.topLeftCorner(n, n) = a * dt;
        aug.topRightCorner(n, 1) = b * dt;
        const Eigen::MatrixXd e = taylor_exp(aug);
        CHECK((d.a_bar - e.topLeftCorner(n, n)).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((d.b_bar - e.topRightCorner(n, 1)).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("sequential scan examples") {
    SsmParams<double> p;
    p.a = {std::log(0.5)};
    p.delta = {1.0};
    // b_bar = (0.5 - 1) / ln(0.5) * b = 1  =>  b = 2 ln 2
    p.b = {2.0 * std::log(2.0)};
    p.c = {1.0};
    p.d = 0.0;
    const auto r = scan_sequential<double>(p, std::vector<double>{1, 0, 0}, std::vector<double>{0.0});
    CHECK(r.y[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.y[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(r.y[2] == doctest::Approx(0.25).epsilon(1e-14));

    Rng rng(1);
    auto q = random_selective<double>(rng, 4, 10);
    const auto zero = scan_sequential<double>(q, std::vector<double>(10, 0.0), std::vector<double>(4, 0.0));
    CHECK(std::all_of(zero.y.begin(), zero.y.end(), [](double v) { return v == 0.0; }));

    q.c.assign(q.c.size(), 0.0);
    q.d = 1.0;
    const auto x = testutil::uniform<double>(rng, 10, -1, 1);
    CHECK(scan_sequential<double>(q, x, std::vector<double>(4, 0.0)).y == x);
}

TEST_CASE("sequential scan matches the straight recurrence oracle") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t len = 1 + trial * 13;
        const auto p = random_selective<double>(rng, 8, len, trial % 2 == 0);
        const auto x = testutil::uniform<double>(rng, len, -1, 1);
        const auto h0 = testutil::uniform<double>(rng, 8, -1, 1);
        CHECK(testutil::max_abs_diff(scan_sequential<double>(p, x, h0).y, oracle_scan(p, x, h0)) <= 1e-12);
    }
}

TEST_CASE("chunked scan equals sequential") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t len = 256;
        const auto p64 = random_selective<double>(rng, 16, len);
        const auto x64 = testutil::uniform<double>(rng, len, -1, 1);
        const std::vector<double> h0(16, 0.0);
        const auto seq = scan_sequential<double>(p64, x64, h0);
        CHECK(scan_chunked<double>(p64, x64, h0, 1).y == seq.y);
        CHECK(testutil::max_abs_diff(scan_chunked<double>(p64, x64, h0, len).y, seq.y) <= 1e-10);

        SsmParams<float> p32;
        p32.a.assign(p64.a.begin(), p64.a.end());
        p32.b.assign(p64.b.begin(), p64.b.end());
        p32.c.assign(p64.c.begin(), p64.c.end());
        p32.delta.assign(p64.delta.begin(), p64.delta.end());
        p32.d = static_cast<float>(p64.d);
        const std::vector<float> x32(x64.begin(), x64.end());
        const std::vector<float> h32(16, 0.0f);
        CHECK(testutil::max_abs_diff(scan_chunked<float>(p32, x32, h32, 32).y, scan_sequential<float>(p32, x32, h32).y) <= 1e-5);
        CHECK(testutil::max_abs_diff(scan_chunked<double>(p64, x64, h0, 32).final_state, seq.final_state) <= 1e-12);
    }
    CHECK_THROWS_AS(scan_chunked<double>(random_selective<double>(rng, 2, 4), std::vector<double>(4, 0.0),
                                         std::vector<double>(2, 0.0), 0),
                    InputError);
}

TEST_CASE("scan composition over concatenated inputs") {
    Rng rng(23);
    SsmParams<double> p;
    p.a = testutil::uniform<double>(rng, 6, -2, -0.1);
    p.b = testutil::uniform<double>(rng, 6, -1, 1);
    p.c = testutil::uniform<double>(rng, 6, -1, 1);
    p.delta = {0.05};
    p.d = 0.3;
    const auto x1 = testutil::uniform<double>(rng, 37, -1, 1);
    const auto x2 = testutil::uniform<double>(rng, 29, -1, 1);
    std::vector<double> x = x1;
    x.insert(x.end(), x2.begin(), x2.end());
    const std::vector<double> h0(6, 0.0);
    const auto whole = scan_sequential<double>(p, x, h0);
    const auto first = scan_sequential<double>(p, x1, h0);
    const auto second = scan_sequential<double>(p, x2, first.final_state);
    std::vector<double> joined = first.y;
    joined.insert(joined.end(), second.y.begin(), second.y.end());
    CHECK(testutil::max_abs_diff(whole.y, joined) <= 1e-12);
}

TEST_CASE("time-invariant scan is linear in x") {
    Rng rng(31);
    SsmParams<double> p;
    p.a = testutil::uniform<double>(rng, 5, -2, -0.1);
    p.b = testutil::uniform<double>(rng, 5, -1, 1);
    p.c = testutil::uniform<double>(rng, 5, -1, 1);
    p.delta = {0.1};
    p.d = 0.0;
    const auto x1 = testutil::uniform<double>(rng, 100, -1, 1);
    const auto x2 = testutil::uniform<double>(rng, 100, -1, 1);
    std::vector<double> mix(100);
    for (int i = 0; i < 100; ++i) mix[i] = 0.7 * x1[i] - 1.9 * x2[i];
    const std::vector<double> h0(5, 0.0);
    const auto y1 = scan_sequential<double>(p, x1, h0).y;
    const auto y2 = scan_sequential<double>(p, x2, h0).y;
    const auto ym = scan_sequential<double>(p, mix, h0).y;
    for (int i = 0; i < 100; ++i) CHECK(std::abs(ym[i] - (0.7 * y1[i] - 1.9 * y2[i])) <= 1e-10);
}

TEST_CASE("stable scan stays bounded over 1e5 steps") {
    Rng rng(37);
    SsmParams<float> p;
    p.a = testutil::uniform<float>(rng, 16, -3, -0.05);
    p.b = testutil::uniform<float>(rng, 16, -1, 1);
    p.c = testutil::uniform<float>(rng, 16, -1, 1);
    p.delta = {0.1f};
    const auto x = testutil::uniform<float>(rng, 100000, -1, 1);
    const auto r = scan_chunked<float>(p, x, std::vector<float>(16, 0.0f), 64);
    const auto d = discretize<float>(p.a, p.b, 0.1f);
    for (int i = 0; i < 16; ++i) {
        const double bound = std::abs(d.b_bar[i]) / (1.0 - d.a_bar[i]);
        CHECK(std::abs(r.final_state[i]) <= bound * 1.001);
    }
    CHECK(std::all_of(r.y.begin(), r.y.end(), [](float v) { return std::isfinite(v); }));
}

TEST_CASE("scan_backward agrees with central differences") {
    Rng rng(41);
    const std::size_t n = 4, len = 16;
    auto p = random_selective<double>(rng, n, len);
    auto x = testutil::uniform<double>(rng, len, -1, 1);
    auto h0 = testutil::uniform<double>(rng, n, -1, 1);
    const auto gy = testutil::uniform<double>(rng, len, -1, 1);
    const auto g = scan_backward<double>(p, x, h0, gy);

    auto objective = [&]() {
        const auto y = scan_sequential<double>(p, x, h0).y;
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k) s += gy[k] * y[k];
        return s;
    };
    const double eps = 1e-5;
    double worst = 0.0;
    auto probe = [&](std::vector<double>& v, const std::vector<double>& analytic) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double keep = v[i];
            v[i] = keep + eps;
            const double up = objective();
            v[i] = keep - eps;
            const double down = objective();
            v[i] = keep;
            worst = std::max(worst, testutil::rel_err(analytic[i], (up - down) / (2 * eps), 1e-6));
        }
    };
    probe(p.a, g.d_a);
    probe(p.b, g.d_b);
    probe(p.c, g.d_c);
    probe(p.delta, g.d_delta);
    probe(x, g.d_x);
    probe(h0, g.d_h0);
    std::vector<double> dv{p.d};
    auto objective_d = [&](double d) {
        p.d = d;
        return objective();
    };
    const double d0 = p.d;
    const double fd = (objective_d(d0 + eps) - objective_d(d0 - eps)) / (2 * eps);
    p.d = d0;
    worst = std::max(worst, testutil::rel_err(g.d_d, fd, 1e-6));
    CHECK(worst <= 1e-4);

    const auto zero = scan_backward<double>(p, x, h0, std::vector<double>(len, 0.0));
    for (const auto* v : {&zero.d_a, &zero.d_b, &zero.d_c, &zero.d_delta, &zero.d_x, &zero.d_h0})
        CHECK(std::all_of(v->begin(), v->end(), [](double e) { return e == 0.0; }));

    p.c.assign(p.c.size(), 0.0);
    const auto skip_only = scan_backward<double>(p, x, h0, gy);
    for (std::size_t k = 0; k < len; ++k) CHECK(skip_only.d_x[k] == doctest::Approx(p.d * gy[k]).epsilon(1e-14));
}

TEST_CASE("selective parameterization") {
    Rng rng(43);
    SelectiveProjection<double> proj;
    proj.d_inner = 8;
    proj.d_state = 4;
    proj.n_heads = 2;
    proj.weight = testutil::uniform<double>(rng, proj.out_dim() * 8, -1, 1);
    proj.delta_bias = {-20.0, -20.0};
    const auto u = testutil::uniform<double>(rng, 5 * 8, -1, 1);

    // Frozen-state limit: very negative bias with zero delta rows.
    auto frozen = proj;
    std::fill(frozen.weight.begin(), frozen.weight.begin() + 2 * 8, 0.0);
    const auto sp = selective_parameterization<double>(frozen, u, 5);
    std::vector<double> a_diag(4);
    for (int i = 0; i < 4; ++i) a_diag[i] = -(i + 1.0);
    for (double dt : sp.delta) {
        CHECK(dt > 0.0);
        const auto d = discretize<double>(a_diag, std::vector<double>(4, 1.0), dt);
        for (double ab : d.a_bar) CHECK(ab >= 1.0 - 1e-8);
    }

    // Zero input: delta = softplus(bias) at every step.
    proj.delta_bias = {0.3, -1.2};
    const auto zero = selective_parameterization<double>(proj, std::vector<double>(5 * 8, 0.0), 5);
    for (int l = 0; l < 5; ++l) {
        CHECK(zero.delta[l * 2 + 0] == doctest::Approx(std::log1p(std::exp(0.3))));
        CHECK(zero.delta[l * 2 + 1] == doctest::Approx(std::log1p(std::exp(-1.2))));
    }

    // Random inputs always give positive steps; B and C are plain projections.
    int checked = 0;
    for (int trial = 0; trial < 250; ++trial) {
        const auto uu = testutil::uniform<double>(rng, 5 * 8, -3, 3);
        const auto r = selective_parameterization<double>(proj, uu, 5);
        for (double dt : r.delta) {
            CHECK(dt > 0.0);
            ++checked;
        }
        for (int l = 0; l < 5; ++l) {
            double b0 = 0.0;
            for (int j = 0; j < 8; ++j) b0 += proj.weight[(2 + 0) * 8 + j] * uu[l * 8 + j];
            REQUIRE(r.b[l * 4] == doctest::Approx(b0).epsilon(1e-12));
        }
    }
    CHECK(checked >= 2500);
    CHECK(softplus(inverse_softplus(0.01)) == doctest::Approx(0.01).epsilon(1e-12));
}
