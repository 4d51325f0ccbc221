#include "seld/bimamba_block.hpp"

#include <algorithm>
#include <cmath>

#include "seld/error.hpp"

namespace seld {

namespace {

template <typename T>
std::vector<T> reverse_rows(std::span<const T> x, int rows) {
    const std::size_t width = x.size() / static_cast<std::size_t>(rows);
    std::vector<T> out(x.size());
    for (int r = 0; r < rows; ++r) {
        std::copy_n(x.begin() + static_cast<std::size_t>(r) * width, width,
                    out.begin() + static_cast<std::size_t>(rows - 1 - r) * width);
    }
    return out;
}

}  // namespace

void BlockConfig::validate() const {
    if (d_model <= 0 || d_state <= 0 || d_conv <= 0 || expand <= 0 || n_blocks < 0 || head_dim <= 0) {
        throw InputError("block dimensions must be positive");
    }
    if (d_inner() % head_dim != 0) throw InputError("d_inner must be a multiple of head_dim");
    if (kernel_time % 2 == 0 || kernel_freq % 2 == 0) throw InputError("asymmetric kernels must be odd");
    if (scan_chunk < 0) throw InputError("scan_chunk must be non-negative");
}

// ---------------------------------------------------------------- MambaBranch

template <typename T>
MambaBranch<T>::MambaBranch(std::string name, const BlockConfig& cfg)
    : cfg_(cfg),
      in_proj_(name + ".in_proj", cfg.d_model, 2 * cfg.d_inner(), false),
      conv_(name + ".conv", cfg.d_inner(), cfg.d_conv, nn::ConvPadding::causal_zero),
      x_proj_(name + ".x_proj.weight", {cfg.n_heads() + 2 * cfg.d_state, cfg.d_inner()}),
      delta_bias_(name + ".delta_bias", {cfg.n_heads()}),
      a_log_(name + ".a_log", {cfg.n_heads(), cfg.d_state}),
      d_(name + ".skip", {cfg.d_inner()}),
      out_proj_(name + ".out_proj", cfg.d_inner(), cfg.d_model, false) {
    cfg.validate();
}

template <typename T>
void MambaBranch<T>::init(nn::Rng& rng) {
    in_proj_.init(rng);
    conv_.init(rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.d_inner()));
    nn::fill_uniform(x_proj_.value, rng, -bound, bound);
    // softplus(delta_bias) log-uniform in [1e-3, 1e-1]
    std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
    for (T& b : delta_bias_.value) b = static_cast<T>(ssm::inverse_softplus(std::exp(log_dt(rng))));
    for (int h = 0; h < cfg_.n_heads(); ++h) {
        for (int n = 0; n < cfg_.d_state; ++n) {
            a_log_.value[static_cast<std::size_t>(h) * cfg_.d_state + n] = static_cast<T>(std::log(n + 1.0));
        }
    }
    std::fill(d_.value.begin(), d_.value.end(), T(1));
    out_proj_.init(rng);
}

template <typename T>
void MambaBranch<T>::collect(nn::ParamList<T>& out) {
    in_proj_.collect(out);
    conv_.collect(out);
    out.push_back(&x_proj_);
    out.push_back(&delta_bias_);
    out.push_back(&a_log_);
    out.push_back(&d_);
    out_proj_.collect(out);
}

template <typename T>
ssm::SsmParams<T> MambaBranch<T>::lane_params(int channel) const {
    const int n_state = cfg_.d_state;
    const int heads = cfg_.n_heads();
    const int head = channel / cfg_.head_dim;
    ssm::SsmParams<T> p;
    p.a.resize(static_cast<std::size_t>(n_state));
    for (int n = 0; n < n_state; ++n) {
        p.a[n] = -std::exp(a_log_.value[static_cast<std::size_t>(head) * n_state + n]);
    }
    p.b = sel_.b;
    p.c = sel_.c;
    p.delta.resize(static_cast<std::size_t>(length_));
    for (int l = 0; l < length_; ++l) p.delta[l] = sel_.delta[static_cast<std::size_t>(l) * heads + head];
    p.d = d_.value[channel];
    p.skip_term = true;
    return p;
}

template <typename T>
std::vector<T> MambaBranch<T>::forward(std::span<const T> x, int length, Direction dir) {
    if (x.size() != static_cast<std::size_t>(length) * cfg_.d_model) throw ShapeError("mamba branch input shape");
    dir_ = dir;
    length_ = length;
    if (dir == Direction::forward) return forward_impl(x);
    const std::vector<T> rx = reverse_rows(x, length);
    const std::vector<T> ry = forward_impl(rx);
    return reverse_rows<T>(ry, length);
}

template <typename T>
std::vector<T> MambaBranch<T>::backward(std::span<const T> dy) {
    if (dir_ == Direction::forward) return backward_impl(dy);
    const std::vector<T> rdy = reverse_rows(dy, length_);
    const std::vector<T> rdx = backward_impl(rdy);
    return reverse_rows<T>(rdx, length_);
}

template <typename T>
std::vector<T> MambaBranch<T>::forward_impl(std::span<const T> x) {
    const int len = length_;
    const int din = cfg_.d_inner();
    const std::size_t plane = static_cast<std::size_t>(len) * din;

    const std::vector<T> xz = in_proj_.forward(x, len);
    std::vector<T> xs(plane);
    z_.resize(plane);
    for (int l = 0; l < len; ++l) {
        const T* row = xz.data() + static_cast<std::size_t>(l) * 2 * din;
        std::copy_n(row, din, xs.begin() + static_cast<std::size_t>(l) * din);
        std::copy_n(row + din, din, z_.begin() + static_cast<std::size_t>(l) * din);
    }
    xs_pre_ = conv_.forward(xs, 1, len, 1);
    u_.resize(plane);
    for (std::size_t i = 0; i < plane; ++i) u_[i] = nn::silu(xs_pre_[i]);

    ssm::SelectiveProjection<T> proj;
    proj.d_inner = din;
    proj.d_state = cfg_.d_state;
    proj.n_heads = cfg_.n_heads();
    proj.weight = x_proj_.value;
    proj.delta_bias = delta_bias_.value;
    sel_ = ssm::selective_parameterization<T>(proj, u_, len);
    nn::mac_counter() += static_cast<std::uint64_t>(len) * din * proj.out_dim();

    y_.assign(plane, T(0));
    const std::vector<T> h0(static_cast<std::size_t>(cfg_.d_state), T(0));
    std::vector<T> lane_x(static_cast<std::size_t>(len));
    for (int ch = 0; ch < din; ++ch) {
        for (int l = 0; l < len; ++l) lane_x[l] = u_[static_cast<std::size_t>(l) * din + ch];
        const ssm::SsmParams<T> lane = lane_params(ch);
        const ssm::ScanResult<T> r = cfg_.scan_chunk > 0
                                         ? ssm::scan_chunked<T>(lane, lane_x, h0, static_cast<std::size_t>(cfg_.scan_chunk))
                                         : ssm::scan_sequential<T>(lane, lane_x, h0);
        for (int l = 0; l < len; ++l) y_[static_cast<std::size_t>(l) * din + ch] = r.y[l];
    }
    nn::mac_counter() += static_cast<std::uint64_t>(len) * din * (3 * cfg_.d_state + 1);

    std::vector<T> gated(plane);
    for (std::size_t i = 0; i < plane; ++i) gated[i] = y_[i] * nn::silu(z_[i]);
    nn::mac_counter() += plane;
    return out_proj_.forward(gated, len);
}

template <typename T>
std::vector<T> MambaBranch<T>::backward_impl(std::span<const T> dy) {
    const int len = length_;
    const int din = cfg_.d_inner();
    const int n_state = cfg_.d_state;
    const int heads = cfg_.n_heads();
    const int out_dim = heads + 2 * n_state;
    const std::size_t plane = static_cast<std::size_t>(len) * din;

    const std::vector<T> dgated = out_proj_.backward(dy);
    std::vector<T> dscan(plane);
    std::vector<T> dz(plane);
    for (std::size_t i = 0; i < plane; ++i) {
        dscan[i] = dgated[i] * nn::silu(z_[i]);
        dz[i] = dgated[i] * y_[i] * nn::silu_grad(z_[i]);
    }

    std::vector<T> du(plane, T(0));
    std::vector<T> dproj(static_cast<std::size_t>(len) * out_dim, T(0));
    const std::vector<T> h0(static_cast<std::size_t>(n_state), T(0));
    std::vector<T> lane_x(static_cast<std::size_t>(len));
    std::vector<T> lane_g(static_cast<std::size_t>(len));
    for (int ch = 0; ch < din; ++ch) {
        const int head = ch / cfg_.head_dim;
        for (int l = 0; l < len; ++l) {
            lane_x[l] = u_[static_cast<std::size_t>(l) * din + ch];
            lane_g[l] = dscan[static_cast<std::size_t>(l) * din + ch];
        }
        const ssm::SsmParams<T> lane = lane_params(ch);
        const ssm::SsmGradients<T> g = ssm::scan_backward<T>(lane, lane_x, h0, lane_g);
        for (int n = 0; n < n_state; ++n) {
            a_log_.grad[static_cast<std::size_t>(head) * n_state + n] += g.d_a[n] * lane.a[n];
        }
        d_.grad[ch] += g.d_d;
        for (int l = 0; l < len; ++l) {
            T* row = dproj.data() + static_cast<std::size_t>(l) * out_dim;
            row[head] += g.d_delta[l];
            for (int n = 0; n < n_state; ++n) {
                row[heads + n] += g.d_b[static_cast<std::size_t>(l) * n_state + n];
                row[heads + n_state + n] += g.d_c[static_cast<std::size_t>(l) * n_state + n];
            }
            du[static_cast<std::size_t>(l) * din + ch] += g.d_x[l];
        }
    }

    // delta = softplus(pre), d pre = d delta * sigmoid(pre)
    for (int l = 0; l < len; ++l) {
        T* row = dproj.data() + static_cast<std::size_t>(l) * out_dim;
        for (int h = 0; h < heads; ++h) {
            row[h] *= nn::sigmoid(sel_.pre_delta[static_cast<std::size_t>(l) * heads + h]);
            delta_bias_.grad[h] += row[h];
        }
    }
    for (int l = 0; l < len; ++l) {
        const T* gr = dproj.data() + static_cast<std::size_t>(l) * out_dim;
        const T* ul = u_.data() + static_cast<std::size_t>(l) * din;
        T* dul = du.data() + static_cast<std::size_t>(l) * din;
        for (int r = 0; r < out_dim; ++r) {
            if (gr[r] == T(0)) continue;
            T* wg = x_proj_.grad.data() + static_cast<std::size_t>(r) * din;
            const T* w = x_proj_.value.data() + static_cast<std::size_t>(r) * din;
            for (int i = 0; i < din; ++i) {
                wg[i] += gr[r] * ul[i];
                dul[i] += gr[r] * w[i];
            }
        }
    }

    for (std::size_t i = 0; i < plane; ++i) du[i] *= nn::silu_grad(xs_pre_[i]);
    const std::vector<T> dxs = conv_.backward(du);
    std::vector<T> dxz(2 * plane);
    for (int l = 0; l < len; ++l) {
        T* row = dxz.data() + static_cast<std::size_t>(l) * 2 * din;
        std::copy_n(dxs.begin() + static_cast<std::size_t>(l) * din, din, row);
        std::copy_n(dz.begin() + static_cast<std::size_t>(l) * din, din, row + din);
    }
    return in_proj_.backward(dxz);
}

// ---------------------------------------------------------------- BiMamba

template <typename T>
BiMamba<T>::BiMamba(std::string name, const BlockConfig& cfg)
    : bidirectional_(cfg.bidirectional),
      norm_(name + ".norm", cfg.d_model),
      fwd_(name + ".fwd", cfg),
      bwd_(name + ".bwd", cfg) {}

template <typename T>
void BiMamba<T>::init(nn::Rng& rng) {
    fwd_.init(rng);
    bwd_.init(rng);
}

template <typename T>
std::vector<T> BiMamba<T>::forward(std::span<const T> x, int length) {
    const std::vector<T> xn = norm_.forward(x, length);
    std::vector<T> y = fwd_.forward(xn, length, Direction::forward);
    if (bidirectional_) {
        const std::vector<T> yb = bwd_.forward(xn, length, Direction::backward);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += yb[i];
    }
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    return y;
}

template <typename T>
std::vector<T> BiMamba<T>::backward(std::span<const T> dy) {
    std::vector<T> dxn = fwd_.backward(dy);
    if (bidirectional_) {
        const std::vector<T> db = bwd_.backward(dy);
        for (std::size_t i = 0; i < dxn.size(); ++i) dxn[i] += db[i];
    }
    std::vector<T> dx = norm_.backward(dxn);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    return dx;
}

template <typename T>
void BiMamba<T>::collect(nn::ParamList<T>& out) {
    norm_.collect(out);
    fwd_.collect(out);
    if (bidirectional_) bwd_.collect(out);
}

// ---------------------------------------------------------------- AsymmetricConv

template <typename T>
AsymmetricConv<T>::AsymmetricConv(std::string name, int channels, int kernel_time, int kernel_freq)
    : time_conv_(name + ".time_conv", channels, kernel_time, nn::ConvPadding::reflect_same),
      freq_conv_(name + ".freq_conv", channels, kernel_freq, nn::ConvPadding::reflect_same),
      time_norm_(name + ".time_norm", channels, true),
      freq_norm_(name + ".freq_norm", channels, true) {}

template <typename T>
void AsymmetricConv<T>::init(nn::Rng& rng) {
    time_conv_.init(rng);
    freq_conv_.init(rng);
}

template <typename T>
std::vector<T> AsymmetricConv<T>::forward(std::span<const T> x, int frames, int freqs) {
    std::vector<T> a = time_conv_.forward(x, 1, frames, freqs);
    std::vector<T> b = freq_conv_.forward(x, frames, freqs, 1);
    if (norm_act_) {
        time_pre_ = time_norm_.forward(a);
        freq_pre_ = freq_norm_.forward(b);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = nn::silu(time_pre_[i]);
            b[i] = nn::silu(freq_pre_[i]);
        }
    }
    std::vector<T> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + a[i] + b[i];
    return y;
}

template <typename T>
std::vector<T> AsymmetricConv<T>::backward(std::span<const T> dy) {
    std::vector<T> da(dy.begin(), dy.end());
    std::vector<T> db(dy.begin(), dy.end());
    if (norm_act_) {
        for (std::size_t i = 0; i < dy.size(); ++i) {
            da[i] *= nn::silu_grad(time_pre_[i]);
            db[i] *= nn::silu_grad(freq_pre_[i]);
        }
        da = time_norm_.backward(da);
        db = freq_norm_.backward(db);
    }
    const std::vector<T> dxa = time_conv_.backward(da);
    const std::vector<T> dxb = freq_conv_.backward(db);
    std::vector<T> dx(dy.size());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] + dxa[i] + dxb[i];
    return dx;
}

template <typename T>
void AsymmetricConv<T>::collect(nn::ParamList<T>& out) {
    time_conv_.collect(out);
    time_norm_.collect(out);
    freq_conv_.collect(out);
    freq_norm_.collect(out);
}

// ---------------------------------------------------------------- FeedForward

template <typename T>
FeedForward<T>::FeedForward(std::string name, int dim)
    : norm_(name + ".norm", dim), fc1_(name + ".fc1", dim, 4 * dim, true), fc2_(name + ".fc2", 4 * dim, dim, true) {}

template <typename T>
void FeedForward<T>::init(nn::Rng& rng) {
    fc1_.init(rng);
    fc2_.init(rng);
}

template <typename T>
std::vector<T> FeedForward<T>::forward(std::span<const T> x, int rows) {
    const std::vector<T> xn = norm_.forward(x, rows);
    hidden_pre_ = fc1_.forward(xn, rows);
    std::vector<T> hidden(hidden_pre_.size());
    for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = nn::silu(hidden_pre_[i]);
    std::vector<T> y = fc2_.forward(hidden, rows);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    return y;
}

template <typename T>
std::vector<T> FeedForward<T>::backward(std::span<const T> dy) {
    std::vector<T> dh = fc2_.backward(dy);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= nn::silu_grad(hidden_pre_[i]);
    const std::vector<T> dxn = fc1_.backward(dh);
    std::vector<T> dx = norm_.backward(dxn);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    return dx;
}

template <typename T>
void FeedForward<T>::collect(nn::ParamList<T>& out) {
    norm_.collect(out);
    fc1_.collect(out);
    fc2_.collect(out);
}

// ---------------------------------------------------------------- BiMamba2DacBlock

template <typename T>
BiMamba2DacBlock<T>::BiMamba2DacBlock(std::string name, const BlockConfig& cfg)
    : cfg_(cfg),
      asym_(name + ".asym", cfg.d_model, cfg.kernel_time, cfg.kernel_freq),
      mixer_(name, cfg),
      ffn_(name + ".ffn", cfg.d_model) {
    cfg.validate();
}

template <typename T>
void BiMamba2DacBlock<T>::init(nn::Rng& rng) {
    if (cfg_.asymmetric_conv) asym_.init(rng);
    mixer_.init(rng);
    ffn_.init(rng);
}

template <typename T>
std::vector<T> BiMamba2DacBlock<T>::forward(std::span<const T> x, int frames, int freqs) {
    const int d = cfg_.d_model;
    if (x.size() != static_cast<std::size_t>(frames) * freqs * d) throw ShapeError("block input must be [T][F][d]");
    frames_ = frames;
    freqs_ = freqs;

    std::vector<T> a = cfg_.asymmetric_conv ? asym_.forward(x, frames, freqs) : std::vector<T>(x.begin(), x.end());

    std::vector<T> pooled(static_cast<std::size_t>(frames) * d, T(0));
    for (int t = 0; t < frames; ++t) {
        for (int f = 0; f < freqs; ++f) {
            const T* src = a.data() + (static_cast<std::size_t>(t) * freqs + f) * d;
            T* dst = pooled.data() + static_cast<std::size_t>(t) * d;
            for (int c = 0; c < d; ++c) dst[c] += src[c];
        }
    }
    for (T& v : pooled) v /= T(freqs);

    const std::vector<T> mixed = mixer_.forward(pooled, frames);
    for (int t = 0; t < frames; ++t) {
        for (int f = 0; f < freqs; ++f) {
            T* dst = a.data() + (static_cast<std::size_t>(t) * freqs + f) * d;
            const std::size_t row = static_cast<std::size_t>(t) * d;
            for (int c = 0; c < d; ++c) dst[c] += mixed[row + c] - pooled[row + c];
        }
    }
    return ffn_.forward(a, frames * freqs);
}

template <typename T>
std::vector<T> BiMamba2DacBlock<T>::backward(std::span<const T> dy) {
    const int d = cfg_.d_model;
    std::vector<T> da = ffn_.backward(dy);

    std::vector<T> dupdate(static_cast<std::size_t>(frames_) * d, T(0));
    for (int t = 0; t < frames_; ++t) {
        for (int f = 0; f < freqs_; ++f) {
            const T* src = da.data() + (static_cast<std::size_t>(t) * freqs_ + f) * d;
            T* dst = dupdate.data() + static_cast<std::size_t>(t) * d;
            for (int c = 0; c < d; ++c) dst[c] += src[c];
        }
    }
    std::vector<T> dpooled = mixer_.backward(dupdate);
    for (std::size_t i = 0; i < dpooled.size(); ++i) dpooled[i] = (dpooled[i] - dupdate[i]) / T(freqs_);
    for (int t = 0; t < frames_; ++t) {
        for (int f = 0; f < freqs_; ++f) {
            T* dst = da.data() + (static_cast<std::size_t>(t) * freqs_ + f) * d;
            const T* src = dpooled.data() + static_cast<std::size_t>(t) * d;
            for (int c = 0; c < d; ++c) dst[c] += src[c];
        }
    }
    return cfg_.asymmetric_conv ? asym_.backward(da) : da;
}

template <typename T>
void BiMamba2DacBlock<T>::collect(nn::ParamList<T>& out) {
    if (cfg_.asymmetric_conv) asym_.collect(out);
    mixer_.collect(out);
    ffn_.collect(out);
}

// ---------------------------------------------------------------- counting

std::uint64_t mamba_branch_params(const BlockConfig& cfg) {
    const std::uint64_t d = cfg.d_model;
    const std::uint64_t din = cfg.d_inner();
    const std::uint64_t n = cfg.d_state;
    const std::uint64_t h = cfg.n_heads();
    return d * 2 * din             // in_proj
           + din * cfg.d_conv + din  // causal conv
           + (h + 2 * n) * din       // x_proj
           + h                       // delta bias
           + h * n                   // A
           + din                     // skip
           + din * d;                // out_proj
}

std::uint64_t block_params(const BlockConfig& cfg) {
    const std::uint64_t d = cfg.d_model;
    std::uint64_t total = 0;
    if (cfg.asymmetric_conv) {
        total += d * cfg.kernel_time + d + 2 * d;
        total += d * cfg.kernel_freq + d + 2 * d;
    }
    total += 2 * d + mamba_branch_params(cfg) * (cfg.bidirectional ? 2 : 1);
    total += 2 * d + d * 4 * d + 4 * d + 4 * d * d + d;
    return total;
}

std::uint64_t mamba_branch_macs(const BlockConfig& cfg, int length) {
    const std::uint64_t l = static_cast<std::uint64_t>(length);
    const std::uint64_t d = cfg.d_model;
    const std::uint64_t din = cfg.d_inner();
    const std::uint64_t n = cfg.d_state;
    const std::uint64_t h = cfg.n_heads();
    return l * (d * 2 * din + din * cfg.d_conv + din * (h + 2 * n) + din * (3 * n + 1) + din + din * d);
}

std::uint64_t asymmetric_conv_macs(int channels, int kernel_time, int kernel_freq, int frames, int freqs) {
    return static_cast<std::uint64_t>(frames) * freqs * channels * (kernel_time + kernel_freq);
}

std::uint64_t block_macs(const BlockConfig& cfg, int frames, int freqs) {
    const std::uint64_t d = cfg.d_model;
    std::uint64_t total = 0;
    if (cfg.asymmetric_conv) total += asymmetric_conv_macs(cfg.d_model, cfg.kernel_time, cfg.kernel_freq, frames, freqs);
    total += mamba_branch_macs(cfg, frames) * (cfg.bidirectional ? 2 : 1);
    total += static_cast<std::uint64_t>(frames) * freqs * (d * 4 * d * 2);
    return total;
}

template class MambaBranch<float>;
template class MambaBranch<double>;
template class BiMamba<float>;
template class BiMamba<double>;
template class AsymmetricConv<float>;
template class AsymmetricConv<double>;
template class FeedForward<float>;
template class FeedForward<double>;
template class BiMamba2DacBlock<float>;
template class BiMamba2DacBlock<double>;

}  // namespace seld
