#include "seld/audio_frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "seld/binary_io.hpp"
#include "seld/error.hpp"

namespace seld {

namespace {

constexpr int kResampleTaps = 64;
constexpr double kKaiserBeta = 8.0;

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

double kaiser(double t, double beta) {
    if (std::abs(t) > 1.0) return 0.0;
    return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - t * t)) / std::cyl_bessel_i(0.0, beta);
}

// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect_index(long i, long n) {
    if (n == 1) return 0;
    const long period = 2 * (n - 1);
    i = std::abs(i) % period;
    if (i >= n) i = period - i;
    return static_cast<std::size_t>(i);
}

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

// Plans are created once per size under a lock; execution through the
// new-array interface is thread-safe.
class RealFft {
public:
    static RealFft& get(int n) {
        static std::mutex mutex;
        static std::map<int, std::unique_ptr<RealFft>> cache;
        std::lock_guard lock(mutex);
        auto& slot = cache[n];
        if (!slot) slot.reset(new RealFft(n));
        return *slot;
    }

    // in: n reals (fftw_malloc'd), out: n/2+1 complex (fftw_malloc'd)
    void execute(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_.get(), in, out); }

private:
    explicit RealFft(int n) {
        double* in = fftw_alloc_real(n);
        fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
        plan_.reset(fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE));
        fftw_free(in);
        fftw_free(out);
    }

    std::unique_ptr<fftw_plan_s, FftwPlanDeleter> plan_;
};

}  // namespace

void StereoClip::validate() const {
    if (left.empty() && right.empty()) throw EmptyInputError("stereo clip has no samples");
    if (left.size() != right.size()) throw InputError("stereo channels differ in length");
    if (left.empty()) throw EmptyInputError("stereo clip has no samples");
    if (sample_rate_hz <= 0) throw InputError("sample rate must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<float> resample_channel(std::span<const float> in, int source_hz, int target_hz) {
    if (in.empty()) throw EmptyInputError("cannot resample an empty signal");
    if (source_hz < 8000) throw InputError("source sample rate must be at least 8000 Hz");
    if (target_hz <= 0) throw InputError("target sample rate must be positive");
    if (source_hz == target_hz) return {in.begin(), in.end()};

    const auto n_in = static_cast<long>(in.size());
    const auto n_out = static_cast<long>(
        (static_cast<std::int64_t>(n_in) * target_hz + source_hz / 2) / source_hz);
    const double cutoff = std::min(1.0, static_cast<double>(target_hz) / source_hz);
    const double half_span = kResampleTaps / 2.0;
    const long reach = kResampleTaps / 2;

    std::vector<float> out(static_cast<std::size_t>(n_out));
    for (long m = 0; m < n_out; ++m) {
        const double pos = static_cast<double>(m) * source_hz / target_hz;
        const long center = static_cast<long>(std::floor(pos));
        const long lo = center - reach + 1;
        const long hi = center + reach;
        double acc = 0.0;
        double norm = 0.0;
        for (long k = std::max(0L, lo); k <= std::min(n_in - 1, hi); ++k) {
            const double u = pos - static_cast<double>(k);
            const double h = cutoff * sinc(cutoff * u) * kaiser(u / half_span, kKaiserBeta);
            acc += h * in[static_cast<std::size_t>(k)];
            norm += h;
        }
        out[static_cast<std::size_t>(m)] = norm != 0.0 ? static_cast<float>(acc / norm) : 0.0f;
    }
    return out;
}

StereoClip resample(const StereoClip& clip, int target_hz) {
    clip.validate();
    StereoClip out;
    out.left = resample_channel(clip.left, clip.sample_rate_hz, target_hz);
    out.right = resample_channel(clip.right, clip.sample_rate_hz, target_hz);
    out.sample_rate_hz = target_hz;
    return out;
}

PseudoFoaClip stereo_to_pseudo_foa(const StereoClip& clip) {
    clip.validate();
    const std::size_t n = clip.size();
    PseudoFoaClip foa;
    foa.sample_rate_hz = clip.sample_rate_hz;
    foa.w.resize(n);
    foa.y.resize(n);
    foa.x.assign(n, 0.0);
    foa.z.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double l = clip.left[i];
        const double r = clip.right[i];
        foa.w[i] = (l + r) / 2.0;
        foa.y[i] = (l - r) / 2.0;
    }
    return foa;
}

int stft_frame_count(std::size_t signal_len, int window_samples, int hop_samples) {
    const long padded = static_cast<long>(signal_len) + 2 * (window_samples / 2);
    if (padded < window_samples) return 0;
    return static_cast<int>((padded - window_samples) / hop_samples + 1);
}

Spectrogram stft(std::span<const double> signal, int window_samples, int hop_samples) {
    if (signal.empty()) throw EmptyInputError("cannot take the STFT of an empty signal");
    if (window_samples <= 0 || hop_samples <= 0) throw InputError("window and hop must be positive");

    const long n = static_cast<long>(signal.size());
    const long pad = window_samples / 2;

    Spectrogram spec;
    spec.frames = stft_frame_count(signal.size(), window_samples, hop_samples);
    spec.bins = window_samples / 2 + 1;
    spec.data.resize(static_cast<std::size_t>(spec.frames) * spec.bins);

    std::vector<double> window(static_cast<std::size_t>(window_samples));
    for (int i = 0; i < window_samples; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / window_samples);
    }

    const RealFft& fft = RealFft::get(window_samples);
    double* frame = fftw_alloc_real(window_samples);
    fftw_complex* bins = fftw_alloc_complex(spec.bins);
    for (int t = 0; t < spec.frames; ++t) {
        const long start = static_cast<long>(t) * hop_samples - pad;
        for (int i = 0; i < window_samples; ++i) {
            frame[i] = signal[reflect_index(start + i, n)] * window[i];
        }
        fft.execute(frame, bins);
        for (int k = 0; k < spec.bins; ++k) spec.at(t, k) = {bins[k][0], bins[k][1]};
    }
    fftw_free(frame);
    fftw_free(bins);
    return spec;
}

MelFilterbank make_mel_filterbank(int sample_rate_hz, int n_fft, int n_mels, double fmin_hz,
                                  double fmax_hz) {
    if (n_mels <= 0 || n_fft <= 0) throw InputError("filterbank dimensions must be positive");
    if (!(fmin_hz >= 0.0 && fmax_hz > fmin_hz && fmax_hz <= sample_rate_hz / 2.0)) {
        throw InputError("invalid mel frequency range");
    }
    MelFilterbank bank;
    bank.n_mels = n_mels;
    bank.n_bins = n_fft / 2 + 1;
    bank.weights.assign(static_cast<std::size_t>(n_mels) * bank.n_bins, 0.0);

    const double mel_lo = hz_to_mel(fmin_hz);
    const double mel_hi = hz_to_mel(fmax_hz);
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1));
    }
    bank.centers_hz.assign(edges.begin() + 1, edges.end() - 1);

    const double bin_hz = static_cast<double>(sample_rate_hz) / n_fft;
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m];
        const double mid = edges[m + 1];
        const double hi = edges[m + 2];
        for (int k = 0; k < bank.n_bins; ++k) {
            const double f = k * bin_hz;
            double w = 0.0;
            if (f > lo && f <= mid) {
                w = (f - lo) / (mid - lo);
            } else if (f > mid && f < hi) {
                w = (hi - f) / (hi - mid);
            }
            bank.weights[static_cast<std::size_t>(m) * bank.n_bins + k] = w;
        }
    }
    return bank;
}

std::vector<double> log_mel(const Spectrogram& spec, const MelFilterbank& bank) {
    if (spec.bins != bank.n_bins) throw ShapeError("spectrogram bins do not match the filterbank");
    std::vector<double> out(static_cast<std::size_t>(spec.frames) * bank.n_mels);
    std::vector<double> power(static_cast<std::size_t>(spec.bins));
    for (int t = 0; t < spec.frames; ++t) {
        for (int k = 0; k < spec.bins; ++k) power[k] = std::norm(spec.at(t, k));
        for (int m = 0; m < bank.n_mels; ++m) {
            double acc = 0.0;
            for (int k = 0; k < spec.bins; ++k) acc += bank.weight(m, k) * power[k];
            out[static_cast<std::size_t>(t) * bank.n_mels + m] = 10.0 * std::log10(std::max(acc, kPowerFloor));
        }
    }
    return out;
}

std::vector<double> intensity_vectors(const Spectrogram& w, const Spectrogram& x,
                                      const Spectrogram& y, const Spectrogram& z,
                                      const MelFilterbank& bank) {
    for (const Spectrogram* s : {&x, &y, &z}) {
        if (s->frames != w.frames || s->bins != w.bins) throw ShapeError("intensity inputs are not aligned");
    }
    if (w.bins != bank.n_bins) throw ShapeError("spectrogram bins do not match the filterbank");

    const int frames = w.frames;
    const int mels = bank.n_mels;
    std::vector<double> band_norm(static_cast<std::size_t>(mels), 0.0);
    for (int m = 0; m < mels; ++m) {
        for (int k = 0; k < bank.n_bins; ++k) band_norm[m] += bank.weight(m, k);
    }

    std::vector<double> out(3 * static_cast<std::size_t>(frames) * mels, 0.0);
    std::vector<double> ix(static_cast<std::size_t>(w.bins));
    std::vector<double> iy(ix.size());
    std::vector<double> iz(ix.size());
    for (int t = 0; t < frames; ++t) {
        for (int k = 0; k < w.bins; ++k) {
            const auto cw = std::conj(w.at(t, k));
            const auto& cx = x.at(t, k);
            const auto& cy = y.at(t, k);
            const auto& cz = z.at(t, k);
            const double energy =
                std::norm(cw) + (std::norm(cx) + std::norm(cy) + std::norm(cz)) / 3.0 + kIntensityEps;
            ix[k] = (cw * cx).real() / energy;
            iy[k] = (cw * cy).real() / energy;
            iz[k] = (cw * cz).real() / energy;
        }
        for (int m = 0; m < mels; ++m) {
            if (band_norm[m] <= 0.0) continue;
            double ax = 0.0, ay = 0.0, az = 0.0;
            for (int k = 0; k < w.bins; ++k) {
                const double g = bank.weight(m, k);
                ax += g * ix[k];
                ay += g * iy[k];
                az += g * iz[k];
            }
            const std::size_t plane = static_cast<std::size_t>(frames) * mels;
            const std::size_t idx = static_cast<std::size_t>(t) * mels + m;
            out[idx] = ax / band_norm[m];
            out[plane + idx] = ay / band_norm[m];
            out[2 * plane + idx] = az / band_norm[m];
        }
    }
    return out;
}

FeatureTensor extract_features(const StereoClip& clip) {
    clip.validate();
    const StereoClip resampled = clip.sample_rate_hz == kSampleRate ? clip : resample(clip, kSampleRate);
    const PseudoFoaClip foa = stereo_to_pseudo_foa(resampled);

    static const MelFilterbank bank = make_mel_filterbank();
    const Spectrogram sw = stft(foa.w);
    const Spectrogram sy = stft(foa.y);
    const Spectrogram sx = stft(foa.x);
    const Spectrogram sz = stft(foa.z);

    FeatureTensor features;
    features.channels = kFeatureChannels;
    features.frames = sw.frames;
    features.mels = bank.n_mels;
    features.data.resize(static_cast<std::size_t>(features.channels) * features.frames * features.mels);

    const std::size_t plane = static_cast<std::size_t>(features.frames) * features.mels;
    int channel = 0;
    for (const Spectrogram* s : {&sw, &sy, &sx, &sz}) {
        const std::vector<double> lm = log_mel(*s, bank);
        std::transform(lm.begin(), lm.end(), features.data.begin() + channel * plane,
                       [](double v) { return static_cast<float>(v); });
        ++channel;
    }
    const std::vector<double> iv = intensity_vectors(sw, sx, sy, sz, bank);
    std::transform(iv.begin(), iv.end(), features.data.begin() + 4 * plane,
                   [](double v) { return static_cast<float>(v); });
    return features;
}

void write_feature_file(const std::filesystem::path& path, const FeatureTensor& features) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    out.write("SELDFEAT", 8);
    binary::put_u32(out, kFeatureFileVersion);
    binary::put_u32(out, static_cast<std::uint32_t>(features.channels));
    binary::put_u32(out, static_cast<std::uint32_t>(features.frames));
    binary::put_u32(out, static_cast<std::uint32_t>(features.mels));
    for (float v : features.data) binary::put_f32(out, v);
    if (!out) throw InputError("failed writing " + path.string());
}

FeatureTensor read_feature_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    if (binary::get_bytes(in, 8) != "SELDFEAT") throw FormatError("bad feature file magic in " + path.string());
    const std::uint32_t version = binary::get_u32(in);
    if (version != kFeatureFileVersion) throw FormatError("unsupported feature file version");
    FeatureTensor features;
    features.channels = static_cast<int>(binary::get_u32(in));
    features.frames = static_cast<int>(binary::get_u32(in));
    features.mels = static_cast<int>(binary::get_u32(in));
    features.data.resize(static_cast<std::size_t>(features.channels) * features.frames * features.mels);
    for (float& v : features.data) v = binary::get_f32(in);
    return features;
}

}  // namespace seld
