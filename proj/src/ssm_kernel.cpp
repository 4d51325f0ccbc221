#include "seld/ssm_kernel.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <string>

#include "seld/error.hpp"

namespace seld::ssm {

namespace {

template <typename T>
bool all_finite(std::span<const T> v) {
    return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

// d phi / d a = delta^2 * psi(delta a), psi(z) = (z e^z - e^z + 1) / z^2.
template <typename T>
T zoh_phi_da(T a, T delta) {
    const T z = delta * a;
    T psi;
    if (std::abs(z) < T(1e-3)) {
        psi = T(0.5) + z / T(3) + z * z / T(8) + z * z * z / T(30);
    } else {
        const T ez = std::exp(z);
        psi = (z * ez - ez + T(1)) / (z * z);
    }
    return delta * delta * psi;
}

template <typename T>
T zoh_phi_ddelta(T a, T delta) {
    const T z = delta * a;
    return std::exp(z);
}

template <typename T>
void check_scan_inputs(const SsmParams<T>& params, std::span<const T> x, std::span<const T> h0) {
    params.check(x.size());
    if (h0.size() != params.state_dim()) {
        throw ShapeError("initial state has " + std::to_string(h0.size()) + " entries, expected " +
                         std::to_string(params.state_dim()));
    }
}

}  // namespace

template <typename T>
void SsmParams<T>::check(std::size_t length) const {
    const std::size_t n = a.size();
    if (n == 0) throw ShapeError("state dimension must be positive");
    auto fits = [&](std::size_t size) { return size == n || size == length * n; };
    if (!fits(b.size())) throw ShapeError("B must be [N] or [L][N]");
    if (!fits(c.size())) throw ShapeError("C must be [N] or [L][N]");
    if (delta.size() != 1 && delta.size() != length) throw ShapeError("delta must be [1] or [L]");
    for (T dl : delta) {
        if (!(dl > T(0)) || !std::isfinite(dl)) throw InputError("delta must be positive and finite");
    }
}

template <typename T>
T zoh_phi(T a, T delta) {
    const T z = delta * a;
    // The z/2 term keeps the branch within 1e-16 relative of the exact value.
    if (std::abs(z) < T(kSmallStepThreshold)) return delta * (T(1) + z / T(2));
    return std::expm1(z) / a;
}

template <typename T>
DiscreteSsm<T> discretize(std::span<const T> a, std::span<const T> b, T delta) {
    if (a.size() != b.size()) throw ShapeError("A diagonal and B differ in length");
    if (!std::isfinite(delta) || !all_finite(a) || !all_finite(b)) {
        throw InputError("discretize: non-finite input");
    }
    if (!(delta > T(0))) throw InputError("discretize: delta must be positive");
    DiscreteSsm<T> out;
    out.a_bar.resize(a.size());
    out.b_bar.resize(a.size());
    for (std::size_t n = 0; n < a.size(); ++n) {
        out.a_bar[n] = std::exp(delta * a[n]);
        out.b_bar[n] = zoh_phi(a[n], delta) * b[n];
    }
    return out;
}

DenseDiscreteSsm discretize_dense(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double delta) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n || b.size() != n) throw ShapeError("dense A must be square and match B");
    if (!std::isfinite(delta) || !a.allFinite() || !b.allFinite()) {
        throw InputError("discretize: non-finite input");
    }
    if (!(delta > 0.0)) throw InputError("discretize: delta must be positive");

    DenseDiscreteSsm out;
    if ((delta * a).norm() < kSmallStepThreshold) {
        out.a_bar = (delta * a).exp();
        out.b_bar = delta * (b + 0.5 * (delta * a) * b);
        return out;
    }
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = a * delta;
    aug.topRightCorner(n, 1) = b * delta;
    const Eigen::MatrixXd e = aug.exp();
    out.a_bar = e.topLeftCorner(n, n);
    out.b_bar = e.topRightCorner(n, 1);
    return out;
}

template <typename T>
ScanResult<T> scan_sequential(const SsmParams<T>& params, std::span<const T> x, std::span<const T> h0,
                              bool keep_states) {
    check_scan_inputs(params, x, h0);
    const std::size_t len = x.size();
    const std::size_t n_state = params.state_dim();

    ScanResult<T> out;
    out.y.resize(len);
    out.final_state.assign(h0.begin(), h0.end());
    if (keep_states) out.states.resize(len * n_state);
    std::vector<T>& h = out.final_state;

    for (std::size_t k = 0; k < len; ++k) {
        const T dl = params.delta_at(k);
        const T* bk = params.b_at(k);
        const T* ck = params.c_at(k);
        T acc = T(0);
        for (std::size_t n = 0; n < n_state; ++n) {
            const T a_bar = std::exp(dl * params.a[n]);
            const T b_bar = zoh_phi(params.a[n], dl) * bk[n];
            h[n] = a_bar * h[n] + b_bar * x[k];
            acc += ck[n] * h[n];
        }
        out.y[k] = params.skip_term ? acc + params.d * x[k] : acc;
        if (keep_states) std::copy(h.begin(), h.end(), out.states.begin() + k * n_state);
    }
    return out;
}

template <typename T>
ScanResult<T> scan_chunked(const SsmParams<T>& params, std::span<const T> x, std::span<const T> h0,
                           std::size_t chunk_len) {
    if (chunk_len < 1) throw InputError("chunk length must be at least 1");
    // One-step chunks are the plain recurrence; take it so the results match bit for bit.
    if (chunk_len == 1) return scan_sequential(params, x, h0);
    check_scan_inputs(params, x, h0);
    const std::size_t len = x.size();
    const std::size_t n_state = params.state_dim();

    ScanResult<T> out;
    out.y.assign(len, T(0));
    out.final_state.assign(h0.begin(), h0.end());
    std::vector<T>& h = out.final_state;

    const std::size_t q_max = std::min(chunk_len, std::max<std::size_t>(len, 1));
    std::vector<T> a_bar(q_max * n_state);
    std::vector<T> b_bar(q_max * n_state);
    std::vector<T> m(q_max * q_max);
    std::vector<T> p(n_state);
    std::vector<T> carry(n_state);
    std::vector<T> h_next(n_state);

    for (std::size_t start = 0; start < len; start += chunk_len) {
        const std::size_t q = std::min(chunk_len, len - start);

        for (std::size_t i = 0; i < q; ++i) {
            const std::size_t k = start + i;
            const T dl = params.delta_at(k);
            const T* bk = params.b_at(k);
            for (std::size_t n = 0; n < n_state; ++n) {
                a_bar[i * n_state + n] = std::exp(dl * params.a[n]);
                b_bar[i * n_state + n] = zoh_phi(params.a[n], dl) * bk[n];
            }
        }

        // Intra-chunk operator, column by column; p tracks the decayed b_bar_j.
        std::fill(h_next.begin(), h_next.end(), T(0));
        for (std::size_t j = 0; j < q; ++j) {
            std::copy_n(b_bar.begin() + j * n_state, n_state, p.begin());
            for (std::size_t i = j; i < q; ++i) {
                if (i > j) {
                    for (std::size_t n = 0; n < n_state; ++n) p[n] *= a_bar[i * n_state + n];
                }
                const T* ci = params.c_at(start + i);
                T dot = T(0);
                for (std::size_t n = 0; n < n_state; ++n) dot += ci[n] * p[n];
                m[i * q + j] = dot;
            }
            const T xj = x[start + j];
            for (std::size_t n = 0; n < n_state; ++n) h_next[n] += p[n] * xj;
        }

        // Carry-in state injection and y = M x.
        std::copy(h.begin(), h.end(), carry.begin());
        for (std::size_t i = 0; i < q; ++i) {
            const std::size_t k = start + i;
            const T* ci = params.c_at(k);
            T acc = T(0);
            for (std::size_t n = 0; n < n_state; ++n) {
                carry[n] *= a_bar[i * n_state + n];
                acc += ci[n] * carry[n];
            }
            for (std::size_t j = 0; j <= i; ++j) acc += m[i * q + j] * x[start + j];
            out.y[k] = params.skip_term ? acc + params.d * x[k] : acc;
        }
        for (std::size_t n = 0; n < n_state; ++n) h[n] = carry[n] + h_next[n];
    }
    return out;
}

template <typename T>
SsmGradients<T> scan_backward(const SsmParams<T>& params, std::span<const T> x, std::span<const T> h0,
                              std::span<const T> grad_y) {
    check_scan_inputs(params, x, h0);
    if (grad_y.size() != x.size()) throw ShapeError("grad_y length differs from x");
    const std::size_t len = x.size();
    const std::size_t n_state = params.state_dim();
    const bool b_per_step = params.b.size() != n_state || len == 1;
    const bool c_per_step = params.c.size() != n_state || len == 1;
    const bool delta_per_step = params.delta.size() != 1 || len == 1;

    const ScanResult<T> fwd = scan_sequential(params, x, h0, true);

    SsmGradients<T> g;
    g.d_a.assign(n_state, T(0));
    g.d_b.assign(params.b.size(), T(0));
    g.d_c.assign(params.c.size(), T(0));
    g.d_delta.assign(params.delta.size(), T(0));
    g.d_x.assign(len, T(0));
    g.d_h0.assign(n_state, T(0));

    std::vector<T>& carry = g.d_h0;  // adjoint flowing from step k+1 into h_k
    for (std::size_t kk = len; kk-- > 0;) {
        const T gy = grad_y[kk];
        const T dl = params.delta_at(kk);
        const T* bk = params.b_at(kk);
        const T* ck = params.c_at(kk);
        T* d_bk = g.d_b.data() + (b_per_step ? kk * n_state : 0);
        T* d_ck = g.d_c.data() + (c_per_step ? kk * n_state : 0);
        T& d_dl = g.d_delta[delta_per_step ? kk : 0];
        const T* h_k = fwd.states.data() + kk * n_state;
        const T* h_prev = kk > 0 ? fwd.states.data() + (kk - 1) * n_state : h0.data();

        T dx = T(0);
        for (std::size_t n = 0; n < n_state; ++n) {
            const T a = params.a[n];
            const T a_bar = std::exp(dl * a);
            const T phi = zoh_phi(a, dl);
            const T dh = ck[n] * gy + carry[n];
            d_ck[n] += gy * h_k[n];
            const T d_abar = dh * h_prev[n];
            const T d_bbar = dh * x[kk];
            dx += dh * phi * bk[n];
            carry[n] = dh * a_bar;
            d_dl += d_abar * a_bar * a + d_bbar * bk[n] * zoh_phi_ddelta(a, dl);
            g.d_a[n] += d_abar * a_bar * dl + d_bbar * bk[n] * zoh_phi_da(a, dl);
            d_bk[n] += d_bbar * phi;
        }
        if (params.skip_term) {
            dx += params.d * gy;
            g.d_d += gy * x[kk];
        }
        g.d_x[kk] = dx;
    }
    return g;
}

template <typename T>
T softplus(T v) {
    if (v > T(20)) return v;
    return std::log1p(std::exp(v));
}

template <typename T>
T inverse_softplus(T v) {
    return v + std::log(-std::expm1(-v));
}

template <typename T>
SelectiveParams<T> selective_parameterization(const SelectiveProjection<T>& proj, std::span<const T> u,
                                              int length) {
    const int din = proj.d_inner;
    const int n_state = proj.d_state;
    const int heads = proj.n_heads;
    if (static_cast<std::size_t>(proj.out_dim()) * din != proj.weight.size() ||
        proj.delta_bias.size() != static_cast<std::size_t>(heads)) {
        throw ShapeError("selective projection weights have the wrong shape");
    }
    if (u.size() != static_cast<std::size_t>(length) * din) throw ShapeError("u must be [L][d_inner]");

    SelectiveParams<T> out;
    out.length = length;
    out.pre_delta.resize(static_cast<std::size_t>(length) * heads);
    out.delta.resize(out.pre_delta.size());
    out.b.resize(static_cast<std::size_t>(length) * n_state);
    out.c.resize(out.b.size());
    for (int l = 0; l < length; ++l) {
        const T* ul = u.data() + static_cast<std::size_t>(l) * din;
        for (int r = 0; r < proj.out_dim(); ++r) {
            const T* w = proj.weight.data() + static_cast<std::size_t>(r) * din;
            T acc = T(0);
            for (int i = 0; i < din; ++i) acc += w[i] * ul[i];
            if (r < heads) {
                const std::size_t idx = static_cast<std::size_t>(l) * heads + r;
                out.pre_delta[idx] = acc + proj.delta_bias[r];
                out.delta[idx] = softplus(out.pre_delta[idx]);
            } else if (r < heads + n_state) {
                out.b[static_cast<std::size_t>(l) * n_state + (r - heads)] = acc;
            } else {
                out.c[static_cast<std::size_t>(l) * n_state + (r - heads - n_state)] = acc;
            }
        }
    }
    return out;
}

#define SELD_INSTANTIATE_SSM(T)                                                                         \
    template struct SsmParams<T>;                                                                       \
    template T zoh_phi<T>(T, T);                                                                        \
    template DiscreteSsm<T> discretize<T>(std::span<const T>, std::span<const T>, T);                   \
    template ScanResult<T> scan_sequential<T>(const SsmParams<T>&, std::span<const T>,                  \
                                              std::span<const T>, bool);                                \
    template ScanResult<T> scan_chunked<T>(const SsmParams<T>&, std::span<const T>, std::span<const T>, \
                                           std::size_t);                                                \
    template SsmGradients<T> scan_backward<T>(const SsmParams<T>&, std::span<const T>,                  \
                                              std::span<const T>, std::span<const T>);                  \
    template T softplus<T>(T);                                                                          \
    template T inverse_softplus<T>(T);                                                                  \
    template SelectiveParams<T> selective_parameterization<T>(const SelectiveProjection<T>&,            \
                                                              std::span<const T>, int);

SELD_INSTANTIATE_SSM(float)
SELD_INSTANTIATE_SSM(double)

#undef SELD_INSTANTIATE_SSM

}  // namespace seld::ssm
