#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

// Layer toolkit for the SELD network. Every layer caches what its backward
// pass needs during forward(), so one instance handles one sample in flight.
// Parameter gradients accumulate across backward() calls until zeroed.
namespace seld::nn {

template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    // Buffers (normalization statistics) are saved but never updated by the optimizer.
    bool trainable = true;

    Param() = default;
    Param(std::string n, std::vector<int> s, bool train = true);
    std::size_t size() const { return value.size(); }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

// Counts multiply-accumulates actually executed by forward passes on this thread.
std::uint64_t& mac_counter();

using Rng = std::mt19937_64;

template <typename T>
void fill_normal(std::vector<T>& v, Rng& rng, double stddev);
template <typename T>
void fill_uniform(std::vector<T>& v, Rng& rng, double lo, double hi);

template <typename T>
T silu(T v);
template <typename T>
T silu_grad(T v);
template <typename T>
T sigmoid(T v);

// y[rows][out] = x[rows][in] W^T + b
template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(std::string name, int in, int out, bool bias);

    void init(Rng& rng);
    std::vector<T> forward(std::span<const T> x, int rows);
    std::vector<T> backward(std::span<const T> dy);
    void collect(ParamList<T>& out);

    int in_dim() const { return in_; }
    int out_dim() const { return out_; }
    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }
    std::uint64_t param_count() const;

private:
    int in_ = 0;
    int out_ = 0;
    bool has_bias_ = false;
    Param<T> weight_;
    Param<T> bias_;
    std::vector<T> x_;
    int rows_ = 0;
};

// Per-row normalization over the last dimension.
template <typename T>
class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(std::string name, int dim);

    std::vector<T> forward(std::span<const T> x, int rows);
    std::vector<T> backward(std::span<const T> dy);
    void collect(ParamList<T>& out);

    Param<T>& gamma() { return gamma_; }
    Param<T>& beta() { return beta_; }

private:
    int dim_ = 0;
    int rows_ = 0;
    Param<T> gamma_;
    Param<T> beta_;
    std::vector<T> xhat_;
    std::vector<T> rstd_;
};

// Batch-style normalization with stored statistics. In calibrating mode each
// sample is normalized by its own statistics and the running estimate is the
// mean over calibration samples; otherwise the stored statistics are used and
// the layer is a per-channel affine map.
template <typename T>
class ChannelNorm {
public:
    ChannelNorm() = default;
    // channels_last: x is [positions][C]; otherwise [C][positions].
    ChannelNorm(std::string name, int channels, bool channels_last);

    std::vector<T> forward(std::span<const T> x);
    std::vector<T> backward(std::span<const T> dy);
    void collect(ParamList<T>& out);

    void begin_calibration();
    void end_calibration();
    bool calibrating() const { return calibrating_; }

    Param<T>& gamma() { return gamma_; }
    Param<T>& beta() { return beta_; }
    Param<T>& running_mean() { return mean_; }
    Param<T>& running_var() { return var_; }

private:
    int channels_ = 0;
    bool channels_last_ = false;
    bool calibrating_ = false;
    int calib_count_ = 0;
    std::vector<double> calib_mean_;
    std::vector<double> calib_var_;
    Param<T> gamma_;
    Param<T> beta_;
    Param<T> mean_;
    Param<T> var_;
    std::vector<T> xhat_;
    std::vector<T> scale_;
};

// 3x3, stride 1, zero "same" padding. x is [cin][h][w].
template <typename T>
class Conv2d3x3 {
public:
    Conv2d3x3() = default;
    Conv2d3x3(std::string name, int cin, int cout);

    void init(Rng& rng);
    std::vector<T> forward(std::span<const T> x, int h, int w);
    std::vector<T> backward(std::span<const T> dy);
    void collect(ParamList<T>& out);

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }
    std::uint64_t param_count() const;

private:
    int cin_ = 0;
    int cout_ = 0;
    int h_ = 0;
    int w_ = 0;
    Param<T> weight_;  // [cout][cin][3][3]
    Param<T> bias_;
    std::vector<T> cols_;  // [cin*9][h*w]
};

// Non-overlapping max pooling, ceil mode. x is [c][h][w].
template <typename T>
class MaxPool2d {
public:
    MaxPool2d() = default;
    MaxPool2d(int pool_h, int pool_w) : ph_(pool_h), pw_(pool_w) {}

    std::vector<T> forward(std::span<const T> x, int c, int h, int w);
    std::vector<T> backward(std::span<const T> dy);
    int out_h(int h) const { return (h + ph_ - 1) / ph_; }
    int out_w(int w) const { return (w + pw_ - 1) / pw_; }

private:
    int ph_ = 1;
    int pw_ = 1;
    std::size_t in_size_ = 0;
    std::vector<std::size_t> argmax_;
};

enum class ConvPadding { reflect_same, causal_zero };

// Depthwise 1D convolution along one axis of a tensor viewed as
// [outer][len][inner][channels]; each channel has its own k taps and bias.
template <typename T>
class DepthwiseConv1d {
public:
    DepthwiseConv1d() = default;
    DepthwiseConv1d(std::string name, int channels, int kernel, ConvPadding padding);

    void init(Rng& rng);
    std::vector<T> forward(std::span<const T> x, int outer, int len, int inner);
    std::vector<T> backward(std::span<const T> dy);
    void collect(ParamList<T>& out);

    Param<T>& weight() { return weight_; }  // [channels][k]
    Param<T>& bias() { return bias_; }
    int kernel() const { return k_; }

private:
    std::size_t source(int pos, int tap) const;
    int channels_ = 0;
    int k_ = 0;
    ConvPadding padding_ = ConvPadding::reflect_same;
    Param<T> weight_;
    Param<T> bias_;
    int outer_ = 0;
    int len_ = 0;
    int inner_ = 0;
    std::vector<T> x_;
};

template <typename T>
struct AdamConfig {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

template <typename T>
class Adam {
public:
    Adam(ParamList<T> params, AdamConfig<T> cfg);
    void step();
    void zero_grad();
    long steps() const { return t_; }

private:
    ParamList<T> params_;
    AdamConfig<T> cfg_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    long t_ = 0;
};

template <typename T>
void zero_grads(const ParamList<T>& params);

}  // namespace seld::nn
