#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace seld {

inline constexpr int kSampleRate = 24000;
inline constexpr int kWindowSamples = 960;  // 40 ms
inline constexpr int kHopSamples = 480;     // 20 ms
inline constexpr int kMelBins = 64;
inline constexpr int kFeatureChannels = 7;
inline constexpr double kMelFminHz = 50.0;
inline constexpr double kMelFmaxHz = 12000.0;
inline constexpr double kPowerFloor = 1e-10;
inline constexpr double kIntensityEps = 1e-10;

struct StereoClip {
    std::vector<float> left;
    std::vector<float> right;
    int sample_rate_hz = kSampleRate;

    std::size_t size() const { return left.size(); }
    // Throws EmptyInputError / InputError when the invariants do not hold.
    void validate() const;
};

// Pseudo first-order ambisonics derived from a stereo pair. Held in double
// so that w + y and w - y reproduce float32 input exactly.
struct PseudoFoaClip {
    std::vector<double> w;
    std::vector<double> y;
    std::vector<double> x;
    std::vector<double> z;
    int sample_rate_hz = kSampleRate;
};

// Complex spectrogram laid out [frames][bins].
struct Spectrogram {
    int frames = 0;
    int bins = 0;
    std::vector<std::complex<double>> data;

    const std::complex<double>& at(int t, int k) const { return data[static_cast<std::size_t>(t) * bins + k]; }
    std::complex<double>& at(int t, int k) { return data[static_cast<std::size_t>(t) * bins + k]; }
};

// Triangular filters laid out [n_mels][n_bins], HTK mel scale, no area normalization.
struct MelFilterbank {
    int n_mels = 0;
    int n_bins = 0;
    std::vector<double> weights;
    std::vector<double> centers_hz;

    double weight(int m, int k) const { return weights[static_cast<std::size_t>(m) * n_bins + k]; }
};

// [channels][frames][mels] float32 feature map.
// Channels 0-3: log-mel of (w, y, x, z). Channels 4-6: intensity (x, y, z).
struct FeatureTensor {
    int channels = kFeatureChannels;
    int frames = 0;
    int mels = kMelBins;
    std::vector<float> data;

    float at(int c, int t, int f) const {
        return data[(static_cast<std::size_t>(c) * frames + t) * mels + f];
    }
    float& at(int c, int t, int f) {
        return data[(static_cast<std::size_t>(c) * frames + t) * mels + f];
    }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Band-limited resampling with a 64-tap Kaiser-windowed sinc (beta = 8).
// Taps are renormalized per output sample so constants pass unchanged.
std::vector<float> resample_channel(std::span<const float> in, int source_hz, int target_hz);
StereoClip resample(const StereoClip& clip, int target_hz);

PseudoFoaClip stereo_to_pseudo_foa(const StereoClip& clip);

// Centered STFT: reflection-padded by window/2 on both ends, periodic Hann window.
Spectrogram stft(std::span<const double> signal, int window_samples = kWindowSamples,
                 int hop_samples = kHopSamples);
int stft_frame_count(std::size_t signal_len, int window_samples = kWindowSamples,
                     int hop_samples = kHopSamples);

MelFilterbank make_mel_filterbank(int sample_rate_hz = kSampleRate, int n_fft = kWindowSamples,
                                  int n_mels = kMelBins, double fmin_hz = kMelFminHz,
                                  double fmax_hz = kMelFmaxHz);

// 10*log10(max(mel power, 1e-10)), laid out [frames][n_mels].
std::vector<double> log_mel(const Spectrogram& spec, const MelFilterbank& bank);

// Normalized active intensity Re{conj(W) (X, Y, Z)} / (|W|^2 + (|X|^2+|Y|^2+|Z|^2)/3 + eps),
// averaged inside each mel band. Laid out [3][frames][n_mels], components ordered x, y, z.
std::vector<double> intensity_vectors(const Spectrogram& w, const Spectrogram& x,
                                      const Spectrogram& y, const Spectrogram& z,
                                      const MelFilterbank& bank);

// Resamples to 24 kHz when needed, then builds the 7-channel tensor.
FeatureTensor extract_features(const StereoClip& clip);

// SELDFEAT container: "SELDFEAT", u32 version, u32 channels, u32 frames, u32 mels, f32 data.
inline constexpr std::uint32_t kFeatureFileVersion = 1;
void write_feature_file(const std::filesystem::path& path, const FeatureTensor& features);
FeatureTensor read_feature_file(const std::filesystem::path& path);

}  // namespace seld
