#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seld/audio_frontend.hpp"
#include "seld/bimamba_block.hpp"
#include "seld/maccdoa_codec.hpp"
#include "seld/nn.hpp"

namespace seld {

// Flat key=value text. '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

struct ModelConfig {
    std::string variant = "tiny";
    int n_classes = kClasses;
    int n_tracks = kTracks;
    std::array<int, 6> encoder_channels{16, 32, 64, 64, 64, 64};
    std::array<int, 6> time_pool_factors{2, 2, 2, 2, 1, 1};
    std::array<int, 6> freq_pool_factors{2, 2, 2, 2, 2, 2};
    int interp_frames = 250;
    int label_frames = kLabelFrames;
    int head_hidden = 64;
    BlockConfig block{};

    static ModelConfig tiny();
    static ModelConfig full();
    // Starts from the preset named by "variant" and overrides the given keys.
    // Unknown keys are rejected unless listed in `ignored`.
    static ModelConfig from_key_values(const KeyValues& kv, const std::vector<std::string>& ignored = {});
    std::string to_text() const;
    void validate() const;

    int encoder_frames(int input_frames) const;
    int encoder_freqs(int input_mels = kMelBins) const;
};

struct Complexity {
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
    std::uint64_t encoder_params = 0;
    std::uint64_t encoder_macs = 0;
};

std::uint64_t conv2d3x3_macs(int cin, int cout, int h, int w);
// Analytic count for one clip of `input_frames` feature frames (251 for 5 s).
Complexity count_params_and_macs(const ModelConfig& cfg, int input_frames = 251);

// [label_frames][in_frames] matrix of linear interpolation to interp_frames
// (corner-aligned) followed by mean over consecutive groups.
std::vector<double> temporal_weights(int in_frames, int interp_frames = 250, int label_frames = kLabelFrames);
std::vector<double> temporal_module(const std::vector<double>& x, int in_frames, int dim,
                                    int interp_frames = 250, int label_frames = kLabelFrames);

// In-place output activations over (x, y, distance) triples: tanh, tanh, ReLU.
template <typename T>
void head_activation(std::span<T> values);

template <typename T>
class SeldModel {
public:
    explicit SeldModel(const ModelConfig& cfg);

    void init(std::uint64_t seed);
    const ModelConfig& config() const { return cfg_; }

    MaccdoaTensor forward(const FeatureTensor& features);
    MaccdoaTensor forward(const StereoClip& clip) { return forward(extract_features(clip)); }
    // Accumulates parameter gradients for the most recent forward().
    void backward(const MaccdoaTensor& grad_output);

    // Re-estimates every normalization statistic from the given inputs.
    void calibrate(const std::vector<FeatureTensor>& inputs);

    nn::ParamList<T> params();
    nn::ParamList<T> trainable_params();

    void save(const std::filesystem::path& path);
    void load(const std::filesystem::path& path);

private:
    struct EncoderBlock {
        nn::Conv2d3x3<T> conv1, conv2;
        nn::ChannelNorm<T> norm1, norm2;
        nn::MaxPool2d<T> pool;
        std::vector<T> pre1, pre2;  // normalized activations before ReLU
        int h = 0, w = 0;
    };

    std::vector<T> encode(std::span<const T> x, int frames, int mels);
    std::vector<T> encode_backward(std::vector<T> grad);
    std::vector<nn::ChannelNorm<T>*> norms();

    ModelConfig cfg_;
    std::vector<EncoderBlock> encoder_;
    nn::Linear<T> proj_;
    std::vector<BiMamba2DacBlock<T>> blocks_;
    nn::Linear<T> head1_;
    nn::Linear<T> head2_;

    int enc_frames_ = 0;
    int enc_freqs_ = 0;
    std::vector<double> temporal_;
    std::vector<T> head1_pre_;
    std::vector<T> head_out_;
};

// Reads the config embedded in a checkpoint.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace seld
