#include "seld/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "seld/error.hpp"

namespace seld::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using CRowMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

constexpr double kNormEps = 1e-5;

std::size_t reflect(long i, long n) {
    if (n == 1) return 0;
    const long period = 2 * (n - 1);
    i = std::abs(i) % period;
    if (i >= n) i = period - i;
    return static_cast<std::size_t>(i);
}

}  // namespace

std::uint64_t& mac_counter() {
    thread_local std::uint64_t counter = 0;
    return counter;
}

template <typename T>
Param<T>::Param(std::string n, std::vector<int> s, bool train) : name(std::move(n)), shape(std::move(s)), trainable(train) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    value.assign(count, T(0));
    grad.assign(count, T(0));
}

template <typename T>
void fill_normal(std::vector<T>& v, Rng& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (T& x : v) x = static_cast<T>(dist(rng));
}

template <typename T>
void fill_uniform(std::vector<T>& v, Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (T& x : v) x = static_cast<T>(dist(rng));
}

template <typename T>
T sigmoid(T v) {
    return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
T silu(T v) {
    return v * sigmoid(v);
}

template <typename T>
T silu_grad(T v) {
    const T s = sigmoid(v);
    return s * (T(1) + v * (T(1) - s));
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
    for (Param<T>* p : params) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(std::string name, int in, int out, bool bias)
    : in_(in), out_(out), has_bias_(bias), weight_(name + ".weight", {out, in}) {
    if (bias) bias_ = Param<T>(name + ".bias", {out});
}

template <typename T>
void Linear<T>::init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    fill_uniform(weight_.value, rng, -bound, bound);
    if (has_bias_) std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
std::vector<T> Linear<T>::forward(std::span<const T> x, int rows) {
    if (x.size() != static_cast<std::size_t>(rows) * in_) throw ShapeError(weight_.name + ": input shape mismatch");
    rows_ = rows;
    x_.assign(x.begin(), x.end());
    std::vector<T> y(static_cast<std::size_t>(rows) * out_);
    CMapR<T> xm(x_.data(), rows, in_);
    CMapR<T> wm(weight_.value.data(), out_, in_);
    MapR<T> ym(y.data(), rows, out_);
    ym.noalias() = xm * wm.transpose();
    if (has_bias_) ym.rowwise() += CRowMap<T>(bias_.value.data(), out_);
    mac_counter() += static_cast<std::uint64_t>(rows) * in_ * out_;
    return y;
}

template <typename T>
std::vector<T> Linear<T>::backward(std::span<const T> dy) {
    if (dy.size() != static_cast<std::size_t>(rows_) * out_) throw ShapeError(weight_.name + ": grad shape mismatch");
    CMapR<T> dym(dy.data(), rows_, out_);
    CMapR<T> xm(x_.data(), rows_, in_);
    CMapR<T> wm(weight_.value.data(), out_, in_);
    MapR<T>(weight_.grad.data(), out_, in_).noalias() += dym.transpose() * xm;
    // Plain loops keep the summation order independent of buffer alignment.
    if (has_bias_) {
        for (int r = 0; r < rows_; ++r)
            for (int o = 0; o < out_; ++o) bias_.grad[o] += dy[static_cast<std::size_t>(r) * out_ + o];
    }
    std::vector<T> dx(static_cast<std::size_t>(rows_) * in_);
    MapR<T>(dx.data(), rows_, in_).noalias() = dym * wm;
    return dx;
}

template <typename T>
void Linear<T>::collect(ParamList<T>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
}

template <typename T>
std::uint64_t Linear<T>::param_count() const {
    return static_cast<std::uint64_t>(in_) * out_ + (has_bias_ ? out_ : 0);
}

// ---------------------------------------------------------------- LayerNorm

template <typename T>
LayerNorm<T>::LayerNorm(std::string name, int dim)
    : dim_(dim), gamma_(name + ".gamma", {dim}), beta_(name + ".beta", {dim}) {
    std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
}

template <typename T>
std::vector<T> LayerNorm<T>::forward(std::span<const T> x, int rows) {
    if (x.size() != static_cast<std::size_t>(rows) * dim_) throw ShapeError(gamma_.name + ": input shape mismatch");
    rows_ = rows;
    xhat_.resize(x.size());
    rstd_.resize(static_cast<std::size_t>(rows));
    std::vector<T> y(x.size());
    for (int r = 0; r < rows; ++r) {
        const T* xr = x.data() + static_cast<std::size_t>(r) * dim_;
        T mean = T(0);
        for (int i = 0; i < dim_; ++i) mean += xr[i];
        mean /= T(dim_);
        T var = T(0);
        for (int i = 0; i < dim_; ++i) var += (xr[i] - mean) * (xr[i] - mean);
        var /= T(dim_);
        const T rstd = T(1) / std::sqrt(var + T(kNormEps));
        rstd_[r] = rstd;
        for (int i = 0; i < dim_; ++i) {
            const std::size_t idx = static_cast<std::size_t>(r) * dim_ + i;
            xhat_[idx] = (xr[i] - mean) * rstd;
            y[idx] = xhat_[idx] * gamma_.value[i] + beta_.value[i];
        }
    }
    return y;
}

template <typename T>
std::vector<T> LayerNorm<T>::backward(std::span<const T> dy) {
    std::vector<T> dx(dy.size());
    for (int r = 0; r < rows_; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * dim_;
        T sum_g = T(0);
        T sum_gx = T(0);
        for (int i = 0; i < dim_; ++i) {
            const T g = dy[off + i] * gamma_.value[i];
            gamma_.grad[i] += dy[off + i] * xhat_[off + i];
            beta_.grad[i] += dy[off + i];
            sum_g += g;
            sum_gx += g * xhat_[off + i];
        }
        for (int i = 0; i < dim_; ++i) {
            const T g = dy[off + i] * gamma_.value[i];
            dx[off + i] = rstd_[r] * (g - sum_g / T(dim_) - xhat_[off + i] * sum_gx / T(dim_));
        }
    }
    return dx;
}

template <typename T>
void LayerNorm<T>::collect(ParamList<T>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

// ---------------------------------------------------------------- ChannelNorm

template <typename T>
ChannelNorm<T>::ChannelNorm(std::string name, int channels, bool channels_last)
    : channels_(channels),
      channels_last_(channels_last),
      gamma_(name + ".gamma", {channels}),
      beta_(name + ".beta", {channels}),
      mean_(name + ".running_mean", {channels}, false),
      var_(name + ".running_var", {channels}, false) {
    std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
    std::fill(var_.value.begin(), var_.value.end(), T(1));
}

template <typename T>
std::vector<T> ChannelNorm<T>::forward(std::span<const T> x) {
    if (x.size() % static_cast<std::size_t>(channels_) != 0) throw ShapeError(gamma_.name + ": input shape mismatch");
    const std::size_t positions = x.size() / channels_;
    auto index = [&](std::size_t c, std::size_t p) {
        return channels_last_ ? p * channels_ + c : c * positions + p;
    };

    std::vector<T> mean(mean_.value);
    std::vector<T> var(var_.value);
    if (calibrating_) {
        for (int c = 0; c < channels_; ++c) {
            double m = 0.0;
            for (std::size_t p = 0; p < positions; ++p) m += x[index(c, p)];
            m /= static_cast<double>(positions);
            double v = 0.0;
            for (std::size_t p = 0; p < positions; ++p) v += (x[index(c, p)] - m) * (x[index(c, p)] - m);
            v /= static_cast<double>(positions);
            calib_mean_[c] += m;
            calib_var_[c] += v;
            mean[c] = static_cast<T>(m);
            var[c] = static_cast<T>(v);
        }
        ++calib_count_;
    }

    xhat_.resize(x.size());
    scale_.resize(static_cast<std::size_t>(channels_));
    std::vector<T> y(x.size());
    for (int c = 0; c < channels_; ++c) {
        const T rstd = T(1) / std::sqrt(var[c] + T(kNormEps));
        scale_[c] = gamma_.value[c] * rstd;
        for (std::size_t p = 0; p < positions; ++p) {
            const std::size_t i = index(c, p);
            xhat_[i] = (x[i] - mean[c]) * rstd;
            y[i] = xhat_[i] * gamma_.value[c] + beta_.value[c];
        }
    }
    return y;
}

template <typename T>
std::vector<T> ChannelNorm<T>::backward(std::span<const T> dy) {
    if (calibrating_) throw InputError(gamma_.name + ": backward is not available while calibrating");
    const std::size_t positions = dy.size() / channels_;
    std::vector<T> dx(dy.size());
    for (int c = 0; c < channels_; ++c) {
        T dg = T(0);
        T db = T(0);
        for (std::size_t p = 0; p < positions; ++p) {
            const std::size_t i = channels_last_ ? p * channels_ + c : c * positions + p;
            dg += dy[i] * xhat_[i];
            db += dy[i];
            dx[i] = dy[i] * scale_[c];
        }
        gamma_.grad[c] += dg;
        beta_.grad[c] += db;
    }
    return dx;
}

template <typename T>
void ChannelNorm<T>::collect(ParamList<T>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&mean_);
    out.push_back(&var_);
}

template <typename T>
void ChannelNorm<T>::begin_calibration() {
    calibrating_ = true;
    calib_count_ = 0;
    calib_mean_.assign(static_cast<std::size_t>(channels_), 0.0);
    calib_var_.assign(static_cast<std::size_t>(channels_), 0.0);
}

template <typename T>
void ChannelNorm<T>::end_calibration() {
    if (calibrating_ && calib_count_ > 0) {
        for (int c = 0; c < channels_; ++c) {
            mean_.value[c] = static_cast<T>(calib_mean_[c] / calib_count_);
            var_.value[c] = static_cast<T>(calib_var_[c] / calib_count_);
        }
    }
    calibrating_ = false;
}

// ---------------------------------------------------------------- Conv2d3x3

template <typename T>
Conv2d3x3<T>::Conv2d3x3(std::string name, int cin, int cout)
    : cin_(cin), cout_(cout), weight_(name + ".weight", {cout, cin, 3, 3}), bias_(name + ".bias", {cout}) {}

template <typename T>
void Conv2d3x3<T>::init(Rng& rng) {
    fill_normal(weight_.value, rng, std::sqrt(2.0 / (cin_ * 9.0)));
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
std::vector<T> Conv2d3x3<T>::forward(std::span<const T> x, int h, int w) {
    if (x.size() != static_cast<std::size_t>(cin_) * h * w) throw ShapeError(weight_.name + ": input shape mismatch");
    h_ = h;
    w_ = w;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    cols_.assign(static_cast<std::size_t>(cin_) * 9 * hw, T(0));
    for (int ci = 0; ci < cin_; ++ci) {
        const T* plane = x.data() + ci * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = cols_.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                for (int yy = 0; yy < h; ++yy) {
                    const int sy = yy + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const int x_lo = std::max(0, 1 - kx);
                    const int x_hi = std::min(w, w + 1 - kx);
                    const T* src = plane + static_cast<std::size_t>(sy) * w + (kx - 1);
                    T* dst = row + static_cast<std::size_t>(yy) * w;
                    for (int xx = x_lo; xx < x_hi; ++xx) dst[xx] = src[xx];
                }
            }
        }
    }
    std::vector<T> y(static_cast<std::size_t>(cout_) * hw);
    const int k = cin_ * 9;
    CMapR<T> wm(weight_.value.data(), cout_, k);
    CMapR<T> cm(cols_.data(), k, static_cast<Eigen::Index>(hw));
    MapR<T> ym(y.data(), cout_, static_cast<Eigen::Index>(hw));
    ym.noalias() = wm * cm;
    ym.colwise() += VecMap<T>(bias_.value.data(), cout_);
    mac_counter() += static_cast<std::uint64_t>(cout_) * k * hw;
    return y;
}

template <typename T>
std::vector<T> Conv2d3x3<T>::backward(std::span<const T> dy) {
    const std::size_t hw = static_cast<std::size_t>(h_) * w_;
    if (dy.size() != static_cast<std::size_t>(cout_) * hw) throw ShapeError(weight_.name + ": grad shape mismatch");
    const int k = cin_ * 9;
    CMapR<T> dym(dy.data(), cout_, static_cast<Eigen::Index>(hw));
    CMapR<T> cm(cols_.data(), k, static_cast<Eigen::Index>(hw));
    CMapR<T> wm(weight_.value.data(), cout_, k);
    MapR<T>(weight_.grad.data(), cout_, k).noalias() += dym * cm.transpose();
    for (int o = 0; o < cout_; ++o) {
        T sum = T(0);
        for (std::size_t p = 0; p < hw; ++p) sum += dy[o * hw + p];
        bias_.grad[o] += sum;
    }

    MatR<T> dcols = wm.transpose() * dym;
    std::vector<T> dx(static_cast<std::size_t>(cin_) * hw, T(0));
    for (int ci = 0; ci < cin_; ++ci) {
        T* plane = dx.data() + ci * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = dcols.data() + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                for (int yy = 0; yy < h_; ++yy) {
                    const int sy = yy + ky - 1;
                    if (sy < 0 || sy >= h_) continue;
                    const int x_lo = std::max(0, 1 - kx);
                    const int x_hi = std::min(w_, w_ + 1 - kx);
                    T* dst = plane + static_cast<std::size_t>(sy) * w_ + (kx - 1);
                    const T* src = row + static_cast<std::size_t>(yy) * w_;
                    for (int xx = x_lo; xx < x_hi; ++xx) dst[xx] += src[xx];
                }
            }
        }
    }
    return dx;
}

template <typename T>
void Conv2d3x3<T>::collect(ParamList<T>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

template <typename T>
std::uint64_t Conv2d3x3<T>::param_count() const {
    return static_cast<std::uint64_t>(cout_) * cin_ * 9 + cout_;
}

// ---------------------------------------------------------------- MaxPool2d

template <typename T>
std::vector<T> MaxPool2d<T>::forward(std::span<const T> x, int c, int h, int w) {
    const int oh = out_h(h);
    const int ow = out_w(w);
    in_size_ = x.size();
    std::vector<T> y(static_cast<std::size_t>(c) * oh * ow);
    argmax_.resize(y.size());
    for (int ch = 0; ch < c; ++ch) {
        const std::size_t base = static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                std::size_t best_idx = base;
                for (int dy = 0; dy < ph_; ++dy) {
                    const int iy = oy * ph_ + dy;
                    if (iy >= h) break;
                    for (int dx = 0; dx < pw_; ++dx) {
                        const int ix = ox * pw_ + dx;
                        if (ix >= w) break;
                        const std::size_t idx = base + static_cast<std::size_t>(iy) * w + ix;
                        if (x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(ch) * oh + oy) * ow + ox;
                y[o] = best;
                argmax_[o] = best_idx;
            }
        }
    }
    return y;
}

template <typename T>
std::vector<T> MaxPool2d<T>::backward(std::span<const T> dy) {
    std::vector<T> dx(in_size_, T(0));
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
    return dx;
}

// ---------------------------------------------------------------- DepthwiseConv1d

template <typename T>
DepthwiseConv1d<T>::DepthwiseConv1d(std::string name, int channels, int kernel, ConvPadding padding)
    : channels_(channels),
      k_(kernel),
      padding_(padding),
      weight_(name + ".weight", {channels, kernel}),
      bias_(name + ".bias", {channels}) {
    if (padding == ConvPadding::reflect_same && kernel % 2 == 0) {
        throw InputError(name + ": same-padded kernels must have odd length");
    }
}

template <typename T>
void DepthwiseConv1d<T>::init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(k_));
    fill_uniform(weight_.value, rng, -bound, bound);
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
std::size_t DepthwiseConv1d<T>::source(int pos, int tap) const {
    if (padding_ == ConvPadding::reflect_same) return reflect(pos + tap - k_ / 2, len_);
    const int src = pos + tap - (k_ - 1);
    return src < 0 ? static_cast<std::size_t>(-1) : static_cast<std::size_t>(src);
}

template <typename T>
std::vector<T> DepthwiseConv1d<T>::forward(std::span<const T> x, int outer, int len, int inner) {
    if (x.size() != static_cast<std::size_t>(outer) * len * inner * channels_) {
        throw ShapeError(weight_.name + ": input shape mismatch");
    }
    outer_ = outer;
    len_ = len;
    inner_ = inner;
    x_.assign(x.begin(), x.end());
    std::vector<T> y(x.size());
    const std::size_t row = static_cast<std::size_t>(inner) * channels_;
    for (int o = 0; o < outer; ++o) {
        const std::size_t obase = static_cast<std::size_t>(o) * len * row;
        for (int p = 0; p < len; ++p) {
            T* yp = y.data() + obase + p * row;
            for (std::size_t ic = 0; ic < row; ++ic) yp[ic] = bias_.value[ic % channels_];
            for (int t = 0; t < k_; ++t) {
                const std::size_t s = source(p, t);
                if (s == static_cast<std::size_t>(-1)) continue;
                const T* xs = x.data() + obase + s * row;
                for (int i = 0; i < inner; ++i) {
                    for (int c = 0; c < channels_; ++c) {
                        yp[i * channels_ + c] += weight_.value[static_cast<std::size_t>(c) * k_ + t] * xs[i * channels_ + c];
                    }
                }
            }
        }
    }
    mac_counter() += static_cast<std::uint64_t>(x.size()) * k_;
    return y;
}

template <typename T>
std::vector<T> DepthwiseConv1d<T>::backward(std::span<const T> dy) {
    std::vector<T> dx(x_.size(), T(0));
    const std::size_t row = static_cast<std::size_t>(inner_) * channels_;
    for (int o = 0; o < outer_; ++o) {
        const std::size_t obase = static_cast<std::size_t>(o) * len_ * row;
        for (int p = 0; p < len_; ++p) {
            const T* gp = dy.data() + obase + p * row;
            for (std::size_t ic = 0; ic < row; ++ic) bias_.grad[ic % channels_] += gp[ic];
            for (int t = 0; t < k_; ++t) {
                const std::size_t s = source(p, t);
                if (s == static_cast<std::size_t>(-1)) continue;
                const T* xs = x_.data() + obase + s * row;
                T* dxs = dx.data() + obase + s * row;
                for (int i = 0; i < inner_; ++i) {
                    for (int c = 0; c < channels_; ++c) {
                        const std::size_t wi = static_cast<std::size_t>(c) * k_ + t;
                        weight_.grad[wi] += gp[i * channels_ + c] * xs[i * channels_ + c];
                        dxs[i * channels_ + c] += weight_.value[wi] * gp[i * channels_ + c];
                    }
                }
            }
        }
    }
    return dx;
}

template <typename T>
void DepthwiseConv1d<T>::collect(ParamList<T>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

// ---------------------------------------------------------------- Adam

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig<T> cfg) : cfg_(cfg) {
    for (Param<T>* p : params) {
        if (!p->trainable) continue;
        params_.push_back(p);
        m_.emplace_back(p->size(), T(0));
        v_.emplace_back(p->size(), T(0));
    }
}

template <typename T>
void Adam<T>::step() {
    ++t_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Param<T>& p = *params_[i];
        std::vector<T>& m = m_[i];
        std::vector<T>& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const T g = p.grad[j];
            m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * g * g;
            p.value[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
        }
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    zero_grads(params_);
}

#define SELD_INSTANTIATE_NN(T)                                          \
    template struct Param<T>;                                           \
    template void fill_normal<T>(std::vector<T>&, Rng&, double);        \
    template void fill_uniform<T>(std::vector<T>&, Rng&, double, double); \
    template T silu<T>(T);                                              \
    template T silu_grad<T>(T);                                         \
    template T sigmoid<T>(T);                                           \
    template void zero_grads<T>(const ParamList<T>&);                   \
    template class Linear<T>;                                           \
    template class LayerNorm<T>;                                        \
    template class ChannelNorm<T>;                                      \
    template class Conv2d3x3<T>;                                        \
    template class MaxPool2d<T>;                                        \
    template class DepthwiseConv1d<T>;                                  \
    template class Adam<T>;

SELD_INSTANTIATE_NN(float)
SELD_INSTANTIATE_NN(double)

#undef SELD_INSTANTIATE_NN

}  // namespace seld::nn
