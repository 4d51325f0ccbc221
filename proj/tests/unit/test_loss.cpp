#include <doctest.h>

#include <algorithm>
#include <array>
#include <limits>

#include "seld/error.hpp"
#include "seld/loss.hpp"
#include "test_util.hpp"

using namespace seld;
using testutil::Rng;

namespace {

MaccdoaTensor random_tensor(Rng& rng, int frames) {
    MaccdoaTensor t(frames, kTracks, kClasses);
    t.values = testutil::uniform<double>(rng, t.values.size(), -1, 1);
    return t;
}

// Independent enumeration: all 6 orderings generated by std::next_permutation.
double brute_force_loss(const MaccdoaTensor& pred, const MaccdoaTensor& target) {
    double total = 0.0;
    for (int f = 0; f < pred.frames; ++f) {
        for (int c = 0; c < pred.classes; ++c) {
            std::array<int, 3> p{0, 1, 2};
            double best = std::numeric_limits<double>::infinity();
            do {
                double s = 0.0;
                for (int t = 0; t < 3; ++t)
                    for (int j = 0; j < 3; ++j) {
                        const double d = pred.at(f, p[t], c, j) - target.at(f, t, c, j);
                        s += d * d;
                    }
                best = std::min(best, s / 9.0);
            } while (std::next_permutation(p.begin(), p.end()));
            total += best;
        }
    }
    return total / (pred.frames * pred.classes);
}

}  // namespace

TEST_CASE("permutations are listed in lexicographic order") {
    const auto& perms = track_permutations();
    CHECK(perms[0] == TrackPermutation{0, 1, 2});
    CHECK(std::is_sorted(perms.begin(), perms.end()));
    CHECK(perms[5] == TrackPermutation{2, 1, 0});
}

TEST_CASE("identical tensors give zero loss with identity permutation") {
    Rng rng(1);
    const auto t = random_tensor(rng, 4);
    const auto r = pit_loss(t, t);
    CHECK(r.total == 0.0);
    CHECK(std::all_of(r.chosen_permutation.begin(), r.chosen_permutation.end(), [](int i) { return i == 0; }));
    const auto g = pit_loss_backward(t, t, r.chosen_permutation);
    CHECK(std::all_of(g.values.begin(), g.values.end(), [](double v) { return v == 0.0; }));

    // All-zero tensors tie on every permutation; the lowest index wins.
    const MaccdoaTensor zero(2, 3, 13);
    const auto z = pit_loss(zero, zero);
    CHECK(std::all_of(z.chosen_permutation.begin(), z.chosen_permutation.end(), [](int i) { return i == 0; }));
}

TEST_CASE("matches brute-force enumeration") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const auto pred = random_tensor(rng, 2);
        const auto target = random_tensor(rng, 2);
        const auto r = pit_loss(pred, target);
        CHECK(r.total == doctest::Approx(brute_force_loss(pred, target)).epsilon(1e-14));
        double mean = 0.0;
        for (double v : r.per_frame) mean += v;
        CHECK(r.total == doctest::Approx(mean / r.per_frame.size()).epsilon(1e-14));
    }
}

TEST_CASE("loss value is invariant under track permutations of pred") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pred = random_tensor(rng, 3);
        const auto target = random_tensor(rng, 3);
        const double base = pit_loss(pred, target).total;
        for (const auto& p : track_permutations()) {
            CHECK(pit_loss(permute_tracks(pred, p), target).total == doctest::Approx(base).epsilon(1e-14));
        }
    }
    // A single active track matched against a permuted copy costs nothing.
    MaccdoaTensor target(1, 3, 13);
    target.at(0, 0, 4, 0) = 1.0;
    target.at(0, 0, 4, 2) = 2.0;
    for (const auto& p : track_permutations()) CHECK(pit_loss(permute_tracks(target, p), target).total == 0.0);
}

TEST_CASE("backward matches central differences") {
    Rng rng(4);
    auto pred = random_tensor(rng, 2);
    const auto target = random_tensor(rng, 2);
    const auto r = pit_loss(pred, target);
    const auto g = pit_loss_backward(pred, target, r.chosen_permutation);
    const double eps = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double keep = pred.values[i];
        pred.values[i] = keep + eps;
        const auto up = pit_loss(pred, target);
        pred.values[i] = keep - eps;
        const auto down = pit_loss(pred, target);
        pred.values[i] = keep;
        // Skip coordinates whose perturbation flips the chosen permutation.
        if (up.chosen_permutation != r.chosen_permutation || down.chosen_permutation != r.chosen_permutation) continue;
        worst = std::max(worst, testutil::rel_err(g.values[i], (up.total - down.total) / (2 * eps)));
    }
    CHECK(worst <= 1e-6);

    // Doubling the residual doubles the gradient.
    MaccdoaTensor far = target;
    for (std::size_t i = 0; i < far.values.size(); ++i) far.values[i] = target.values[i] + 2.0 * (pred.values[i] - target.values[i]);
    const std::vector<int> identity(r.chosen_permutation.size(), 0);
    const auto g1 = pit_loss_backward(pred, target, identity);
    const auto g2 = pit_loss_backward(far, target, identity);
    for (std::size_t i = 0; i < g1.values.size(); ++i) CHECK(g2.values[i] == doctest::Approx(2.0 * g1.values[i]).epsilon(1e-12));
}

TEST_CASE("loss decreases along the path to the matched target") {
    Rng rng(5);
    const auto pred = random_tensor(rng, 2);
    const auto target = random_tensor(rng, 2);
    const auto r = pit_loss(pred, target);
    // The target seen through the chosen permutation, expressed in pred's track order.
    MaccdoaTensor aligned = pred;
    const auto& perms = track_permutations();
    for (int f = 0; f < 2; ++f)
        for (int c = 0; c < kClasses; ++c) {
            const auto& p = perms[r.chosen_permutation[f * kClasses + c]];
            for (int t = 0; t < 3; ++t)
                for (int j = 0; j < 3; ++j) aligned.at(f, p[t], c, j) = target.at(f, t, c, j);
        }
    double previous = r.total;
    for (int step = 1; step <= 20; ++step) {
        const double s = step / 20.0;
        MaccdoaTensor mid = pred;
        for (std::size_t i = 0; i < mid.values.size(); ++i) mid.values[i] = pred.values[i] + s * (aligned.values[i] - pred.values[i]);
        const double l = pit_loss(mid, target).total;
        CHECK(l <= previous + 1e-15);
        CHECK(l >= 0.0);
        previous = l;
    }
    CHECK(previous <= 1e-30);
}

TEST_CASE("shape mismatches are rejected") {
    CHECK_THROWS_AS(pit_loss(MaccdoaTensor(2, 3, 13), MaccdoaTensor(3, 3, 13)), ShapeError);
    CHECK_THROWS_AS(pit_loss(MaccdoaTensor(2, 2, 13), MaccdoaTensor(2, 2, 13)), ShapeError);
}
