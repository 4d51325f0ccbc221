#include <doctest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "seld/audio_frontend.hpp"
#include "seld/error.hpp"
#include "test_util.hpp"

using namespace seld;
using testutil::Rng;

namespace {

StereoClip make_clip(std::vector<float> l, std::vector<float> r, int rate = kSampleRate) {
    StereoClip c;
    c.left = std::move(l);
    c.right = std::move(r);
    c.sample_rate_hz = rate;
    return c;
}

std::vector<float> sine(double freq, double rate, std::size_t n, double amp = 0.5) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * i / rate));
    return v;
}

}  // namespace

TEST_CASE("pseudo-FOA worked examples") {
    auto foa = stereo_to_pseudo_foa(make_clip({1, 1}, {1, 1}));
    CHECK(foa.w == std::vector<double>{1, 1});
    CHECK(foa.y == std::vector<double>{0, 0});
    CHECK(foa.x == std::vector<double>{0, 0});
    CHECK(foa.z == std::vector<double>{0, 0});

    foa = stereo_to_pseudo_foa(make_clip({1, 0}, {0, 0}));
    CHECK(foa.w == std::vector<double>{0.5, 0});
    CHECK(foa.y == std::vector<double>{0.5, 0});

    foa = stereo_to_pseudo_foa(make_clip({0.2f, -0.4f}, {-0.2f, 0.4f}));
    CHECK(foa.w[0] == 0.0);
    CHECK(foa.w[1] == 0.0);
    CHECK(foa.y[0] == static_cast<double>(0.2f));
    CHECK(foa.y[1] == static_cast<double>(-0.4f));
}

TEST_CASE("pseudo-FOA reconstructs both channels exactly and swaps antisymmetrically") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto l = testutil::uniform<float>(rng, 1000, -1, 1);
        const auto r = testutil::uniform<float>(rng, 1000, -1, 1);
        const auto foa = stereo_to_pseudo_foa(make_clip(l, r));
        const auto swapped = stereo_to_pseudo_foa(make_clip(r, l));
        for (std::size_t i = 0; i < l.size(); ++i) {
            REQUIRE(foa.w[i] + foa.y[i] == static_cast<double>(l[i]));
            REQUIRE(foa.w[i] - foa.y[i] == static_cast<double>(r[i]));
            REQUIRE(swapped.w[i] == foa.w[i]);
            REQUIRE(swapped.y[i] == -foa.y[i]);
        }
    }
}

TEST_CASE("clip validation") {
    CHECK_THROWS_AS(stereo_to_pseudo_foa(make_clip({}, {})), EmptyInputError);
    CHECK_THROWS_AS(stereo_to_pseudo_foa(make_clip({1, 2}, {1})), InputError);
}

TEST_CASE("resample: DC, silence, and a 1 kHz sine") {
    const std::vector<float> dc(48000, 0.3f);
    const auto out = resample_channel(dc, 48000, 24000);
    CHECK(std::abs(static_cast<long>(out.size()) - 24000) <= 1);
    CHECK(testutil::max_abs_diff(out, std::vector<float>(out.size(), 0.3f)) < 1e-6);

    const auto quiet = resample_channel(std::vector<float>(4410, 0.0f), 44100, 24000);
    CHECK(std::all_of(quiet.begin(), quiet.end(), [](float v) { return v == 0.0f; }));

    const auto s = resample_channel(sine(1000, 48000, 48000), 48000, 24000);
    const auto ref = sine(1000, 24000, s.size());
    double err = 0.0;
    for (std::size_t i = 64; i + 64 < s.size(); ++i) err = std::max(err, std::abs(double(s[i]) - double(ref[i])));
    CHECK(err <= 1e-3);

    CHECK_THROWS_AS(resample_channel(std::vector<float>{}, 48000, 24000), EmptyInputError);
    CHECK_THROWS_AS(resample_channel(std::vector<float>(100, 0.0f), 4000, 24000), InputError);
}

TEST_CASE("stft frame count, zeros, and bin-centred sine") {
    CHECK(stft_frame_count(120000) == 251);
    const auto zero = stft(std::vector<double>(120000, 0.0));
    CHECK(zero.frames == 251);
    CHECK(zero.bins == 481);
    CHECK(std::all_of(zero.data.begin(), zero.data.end(), [](auto v) { return v == std::complex<double>(0.0); }));

    const double f = 25.0 * kSampleRate / kWindowSamples;
    std::vector<double> x(24000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * f * i / kSampleRate);
    const auto spec = stft(x);
    // The first and last frames straddle the reflected padding, which flips the sine's phase.
    for (int t = 1; t + 1 < spec.frames; ++t) {
        int arg = 0;
        for (int k = 1; k < spec.bins; ++k)
            if (std::abs(spec.at(t, k)) > std::abs(spec.at(t, arg))) arg = k;
        REQUIRE(arg == 25);
    }
}

TEST_CASE("stft matches a direct DFT of the padded, windowed frame") {
    Rng rng(3);
    const auto x = testutil::uniform<double>(rng, 5000, -1, 1);
    const auto spec = stft(x);
    const int n = kWindowSamples;
    const int pad = n / 2;
    auto padded_at = [&](long i) {
        long j = i - pad;
        const long len = static_cast<long>(x.size());
        if (j < 0) j = -j;
        if (j >= len) j = 2 * (len - 1) - j;
        return x[static_cast<std::size_t>(j)];
    };
    for (int t : {0, 3, spec.frames - 1}) {
        for (int k : {0, 1, 17, 240, 480}) {
            std::complex<double> acc = 0.0;
            for (int m = 0; m < n; ++m) {
                const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * m / n);
                acc += w * padded_at(static_cast<long>(t) * kHopSamples + m) *
                       std::polar(1.0, -2.0 * std::numbers::pi * k * m / n);
            }
            REQUIRE(std::abs(acc - spec.at(t, k)) < 1e-9);
        }
    }
}

TEST_CASE("mel scale and filterbank construction") {
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
    CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-12));
    const auto bank = make_mel_filterbank();
    REQUIRE(bank.n_mels == 64);
    REQUIRE(bank.n_bins == 481);
    double prev_center = 0.0;
    for (int m = 0; m < bank.n_mels; ++m) {
        double sum = 0.0;
        int peak = 0;
        for (int k = 0; k < bank.n_bins; ++k) {
            sum += bank.weight(m, k);
            if (bank.weight(m, k) > bank.weight(m, peak)) peak = k;
        }
        CHECK(sum > 0.0);
        const double peak_hz = peak * double(kSampleRate) / kWindowSamples;
        CHECK(peak_hz >= prev_center);
        prev_center = peak_hz;
        CHECK(bank.centers_hz[m] > 50.0);
        CHECK(bank.centers_hz[m] < 12000.0);
    }
}

TEST_CASE("log-mel floor and 6 dB per amplitude doubling") {
    const auto bank = make_mel_filterbank();
    const auto zero = log_mel(stft(std::vector<double>(24000, 0.0)), bank);
    CHECK(std::all_of(zero.begin(), zero.end(), [](double v) { return v == doctest::Approx(-100.0); }));

    Rng rng(5);
    const auto x = testutil::uniform<double>(rng, 24000, -0.5, 0.5);
    std::vector<double> x2(x);
    for (double& v : x2) v *= 2.0;
    const auto a = log_mel(stft(x), bank);
    const auto b = log_mel(stft(x2), bank);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > -90.0) REQUIRE(b[i] - a[i] == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-9));
    }
}

TEST_CASE("intensity vectors: closed forms and bounds") {
    const auto bank = make_mel_filterbank();
    Rng rng(8);
    const auto w_sig = testutil::uniform<double>(rng, 12000, -1, 1);
    const auto w = stft(w_sig);
    const auto zero = stft(std::vector<double>(12000, 0.0));

    // W == Y with X = Z = 0
    const auto iv = intensity_vectors(w, zero, w, zero, bank);
    const std::size_t plane = static_cast<std::size_t>(w.frames) * bank.n_mels;
    for (std::size_t i = 0; i < plane; ++i) {
        REQUIRE(iv[i] == 0.0);
        REQUIRE(iv[plane + i] == doctest::Approx(0.75).epsilon(1e-6));
        REQUIRE(iv[2 * plane + i] == 0.0);
    }

    const auto none = intensity_vectors(zero, zero, zero, zero, bank);
    CHECK(std::all_of(none.begin(), none.end(), [](double v) { return v == 0.0; }));

    const auto y = stft(testutil::uniform<double>(rng, 12000, -3, 3));
    const auto x = stft(testutil::uniform<double>(rng, 12000, -3, 3));
    const auto mixed = intensity_vectors(w, x, y, zero, bank);
    CHECK(std::all_of(mixed.begin(), mixed.end(), [](double v) { return v >= -1.0 && v <= 1.0; }));
}

TEST_CASE("extract_features: shape, silence, swap symmetry, determinism") {
    const auto silent = extract_features(make_clip(std::vector<float>(120000, 0.0f), std::vector<float>(120000, 0.0f)));
    CHECK(silent.channels == 7);
    CHECK(silent.frames == 251);
    CHECK(silent.mels == 64);
    for (int c = 0; c < 7; ++c)
        for (int t = 0; t < silent.frames; t += 50)
            for (int f = 0; f < 64; f += 7) CHECK(silent.at(c, t, f) == doctest::Approx(c < 4 ? -100.0 : 0.0));

    Rng rng(21);
    const auto l = testutil::uniform<float>(rng, 120000, -0.5, 0.5);
    auto r = testutil::uniform<float>(rng, 120000, -0.5, 0.5);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = 0.5f * r[i] + 0.5f * l[i];
    const auto feat = extract_features(make_clip(l, r));
    const auto again = extract_features(make_clip(l, r));
    CHECK(feat.data == again.data);
    const auto swapped = extract_features(make_clip(r, l));
    for (int t = 0; t < feat.frames; ++t) {
        for (int f = 0; f < feat.mels; ++f) {
            REQUIRE(swapped.at(0, t, f) == feat.at(0, t, f));
            REQUIRE(swapped.at(5, t, f) == -feat.at(5, t, f));
            REQUIRE(feat.at(4, t, f) == 0.0f);
            REQUIRE(feat.at(6, t, f) == 0.0f);
        }
    }
}

TEST_CASE("extract_features resamples 48 kHz input") {
    const auto f = extract_features(make_clip(std::vector<float>(240000, 0.1f), std::vector<float>(240000, 0.1f), 48000));
    CHECK(f.frames == 251);
}

TEST_CASE("feature file round trip and corrupt header") {
    testutil::TempDir dir("feat");
    Rng rng(2);
    FeatureTensor t;
    t.frames = 9;
    t.data = testutil::uniform<float>(rng, 7 * 9 * 64, -5, 5);
    write_feature_file(dir / "a.seldfeat", t);
    const auto back = read_feature_file(dir / "a.seldfeat");
    CHECK(back.frames == 9);
    CHECK(back.data == t.data);

    std::ofstream(dir / "bad.seldfeat") << "NOTSELD!";
    CHECK_THROWS_AS(read_feature_file(dir / "bad.seldfeat"), FormatError);
}
