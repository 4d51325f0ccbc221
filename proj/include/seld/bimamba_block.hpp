#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seld/nn.hpp"
#include "seld/ssm_kernel.hpp"

namespace seld {

struct BlockConfig {
    int d_model = 64;
    int d_state = 64;
    int d_conv = 4;
    int expand = 2;
    int n_blocks = 2;
    // Channels of one head share B, C and delta.
    int head_dim = 64;
    int kernel_time = 3;
    int kernel_freq = 3;
    bool bidirectional = true;
    bool asymmetric_conv = true;
    // 0 selects the sequential reference scan.
    int scan_chunk = 64;

    int d_inner() const { return expand * d_model; }
    int n_heads() const { return d_inner() / head_dim; }
    void validate() const;
};

enum class Direction { forward, backward };

// One Mamba mixer: in-projection to (x, z), causal depthwise conv + SiLU on x,
// selective scan, SiLU(z) gate, out-projection. Input and output are [L][d_model].
template <typename T>
class MambaBranch {
public:
    MambaBranch() = default;
    MambaBranch(std::string name, const BlockConfig& cfg);

    void init(nn::Rng& rng);
    std::vector<T> forward(std::span<const T> x, int length, Direction dir = Direction::forward);
    std::vector<T> backward(std::span<const T> dy);
    void collect(nn::ParamList<T>& out);

    nn::Linear<T>& in_proj() { return in_proj_; }
    nn::Param<T>& x_proj() { return x_proj_; }
    nn::Linear<T>& out_proj() { return out_proj_; }
    nn::DepthwiseConv1d<T>& conv() { return conv_; }
    nn::Param<T>& delta_bias() { return delta_bias_; }
    nn::Param<T>& a_log() { return a_log_; }
    nn::Param<T>& skip() { return d_; }

private:
    std::vector<T> forward_impl(std::span<const T> x);
    std::vector<T> backward_impl(std::span<const T> dy);
    ssm::SsmParams<T> lane_params(int channel) const;

    BlockConfig cfg_;
    nn::Linear<T> in_proj_;
    nn::DepthwiseConv1d<T> conv_;
    nn::Param<T> x_proj_;      // [H + 2N][d_inner]
    nn::Param<T> delta_bias_;  // [H]
    nn::Param<T> a_log_;       // [H][N], A = -exp(a_log)
    nn::Param<T> d_;           // [d_inner]
    nn::Linear<T> out_proj_;

    int length_ = 0;
    Direction dir_ = Direction::forward;
    std::vector<T> xs_pre_;  // conv output before SiLU, [L][d_inner]
    std::vector<T> u_;       // [L][d_inner]
    std::vector<T> z_;       // [L][d_inner]
    std::vector<T> y_;       // scan output, [L][d_inner]
    ssm::SelectiveParams<T> sel_;
};

// y = x + forward(LN(x)) + reverse(backward_branch(reverse(LN(x)))), x is [L][d].
template <typename T>
class BiMamba {
public:
    BiMamba() = default;
    BiMamba(std::string name, const BlockConfig& cfg);

    void init(nn::Rng& rng);
    std::vector<T> forward(std::span<const T> x, int length);
    std::vector<T> backward(std::span<const T> dy);
    void collect(nn::ParamList<T>& out);

    MambaBranch<T>& forward_branch() { return fwd_; }
    MambaBranch<T>& backward_branch() { return bwd_; }
    nn::LayerNorm<T>& norm() { return norm_; }
    bool bidirectional() const { return bidirectional_; }

private:
    bool bidirectional_ = true;
    nn::LayerNorm<T> norm_;
    MambaBranch<T> fwd_;
    MambaBranch<T> bwd_;
};

// Decoupled time/frequency depthwise convolutions on [T][F][d]:
// y = x + act(norm(conv_time(x))) + act(norm(conv_freq(x))).
template <typename T>
class AsymmetricConv {
public:
    AsymmetricConv() = default;
    AsymmetricConv(std::string name, int channels, int kernel_time, int kernel_freq);

    void init(nn::Rng& rng);
    std::vector<T> forward(std::span<const T> x, int frames, int freqs);
    std::vector<T> backward(std::span<const T> dy);
    void collect(nn::ParamList<T>& out);
    // When false each pathway is the bare convolution.
    void set_norm_activation(bool enabled) { norm_act_ = enabled; }

    nn::DepthwiseConv1d<T>& time_conv() { return time_conv_; }
    nn::DepthwiseConv1d<T>& freq_conv() { return freq_conv_; }
    nn::ChannelNorm<T>& time_norm() { return time_norm_; }
    nn::ChannelNorm<T>& freq_norm() { return freq_norm_; }

private:
    bool norm_act_ = true;
    nn::DepthwiseConv1d<T> time_conv_;
    nn::DepthwiseConv1d<T> freq_conv_;
    nn::ChannelNorm<T> time_norm_;
    nn::ChannelNorm<T> freq_norm_;
    std::vector<T> time_pre_;
    std::vector<T> freq_pre_;
};

// Pre-norm two-layer MLP with 4x expansion and residual, applied per row.
template <typename T>
class FeedForward {
public:
    FeedForward() = default;
    FeedForward(std::string name, int dim);

    void init(nn::Rng& rng);
    std::vector<T> forward(std::span<const T> x, int rows);
    std::vector<T> backward(std::span<const T> dy);
    void collect(nn::ParamList<T>& out);

    nn::Linear<T>& fc1() { return fc1_; }
    nn::Linear<T>& fc2() { return fc2_; }
    nn::LayerNorm<T>& norm() { return norm_; }

private:
    nn::LayerNorm<T> norm_;
    nn::Linear<T> fc1_;
    nn::Linear<T> fc2_;
    std::vector<T> hidden_pre_;
};

// asymmetric conv -> frequency mean -> BiMamba over time (update broadcast back
// over frequency) -> feed-forward. Shape [T][F][d] is preserved.
template <typename T>
class BiMamba2DacBlock {
public:
    BiMamba2DacBlock() = default;
    BiMamba2DacBlock(std::string name, const BlockConfig& cfg);

    void init(nn::Rng& rng);
    std::vector<T> forward(std::span<const T> x, int frames, int freqs);
    std::vector<T> backward(std::span<const T> dy);
    void collect(nn::ParamList<T>& out);

    AsymmetricConv<T>& asym() { return asym_; }
    BiMamba<T>& mixer() { return mixer_; }
    FeedForward<T>& ffn() { return ffn_; }

private:
    BlockConfig cfg_;
    AsymmetricConv<T> asym_;
    BiMamba<T> mixer_;
    FeedForward<T> ffn_;
    int frames_ = 0;
    int freqs_ = 0;
};

// Closed-form counts used by the complexity report.
std::uint64_t mamba_branch_params(const BlockConfig& cfg);
std::uint64_t block_params(const BlockConfig& cfg);
std::uint64_t mamba_branch_macs(const BlockConfig& cfg, int length);
std::uint64_t asymmetric_conv_macs(int channels, int kernel_time, int kernel_freq, int frames, int freqs);
std::uint64_t block_macs(const BlockConfig& cfg, int frames, int freqs);

}  // namespace seld
