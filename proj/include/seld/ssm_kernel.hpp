#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace seld::ssm {

// Below this |delta * a| the input map uses its series delta * (1 + delta * a / 2) * b.
inline constexpr double kSmallStepThreshold = 1e-8;

// One scan lane of a diagonal selective SSM.
//
// `a` holds the continuous-time diagonal of A (length N). `b`, `c` are either
// per-step [L][N] (selective mode) or a single [N] row broadcast over time.
// `delta` is either per-step [L] or a single broadcast value.
template <typename T>
struct SsmParams {
    std::vector<T> a;
    std::vector<T> b;
    std::vector<T> c;
    std::vector<T> delta;
    T d = T(0);
    // Adds d * x_k to every output. Off reproduces the plain y_k = C^T h_k readout.
    bool skip_term = true;

    std::size_t state_dim() const { return a.size(); }
    // Throws ShapeError when b/c/delta do not fit a sequence of `length` steps.
    void check(std::size_t length) const;

    const T* b_at(std::size_t k) const { return b.data() + (b.size() == a.size() ? 0 : k * a.size()); }
    const T* c_at(std::size_t k) const { return c.data() + (c.size() == a.size() ? 0 : k * a.size()); }
    T delta_at(std::size_t k) const { return delta.size() == 1 ? delta[0] : delta[k]; }
};

template <typename T>
struct DiscreteSsm {
    std::vector<T> a_bar;
    std::vector<T> b_bar;
};

template <typename T>
struct ScanResult {
    std::vector<T> y;
    std::vector<T> final_state;
    // [L][N], only filled when requested.
    std::vector<T> states;
};

// Shapes mirror SsmParams: per-step fields come back per-step, broadcast ones summed.
template <typename T>
struct SsmGradients {
    std::vector<T> d_a;
    std::vector<T> d_b;
    std::vector<T> d_c;
    std::vector<T> d_delta;
    T d_d = T(0);
    std::vector<T> d_x;
    std::vector<T> d_h0;
};

// Zero-order hold for a diagonal A: a_bar = exp(delta a), b_bar = (exp(delta a) - 1) / a * b.
template <typename T>
DiscreteSsm<T> discretize(std::span<const T> a, std::span<const T> b, T delta);

// Scalar pieces of the diagonal ZOH, shared with the backward pass.
// phi = (exp(delta a) - 1) / a, so that b_bar = phi * b.
template <typename T>
T zoh_phi(T a, T delta);

struct DenseDiscreteSsm {
    Eigen::MatrixXd a_bar;
    Eigen::VectorXd b_bar;
};

// Dense float64 path via the augmented-matrix exponential exp([[A, B], [0, 0]] * delta).
DenseDiscreteSsm discretize_dense(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double delta);

template <typename T>
ScanResult<T> scan_sequential(const SsmParams<T>& params, std::span<const T> x, std::span<const T> h0,
                              bool keep_states = false);

// Chunked scan: inside each chunk the outputs come from the materialized
// lower-triangular operator M[i][j] = C_i^T (prod_{k=j+1..i} a_bar_k) b_bar_j
// plus the decayed carry-in state; chunk boundary states are passed on recurrently.
// Work is O(L * chunk_len * N).
template <typename T>
ScanResult<T> scan_chunked(const SsmParams<T>& params, std::span<const T> x, std::span<const T> h0,
                           std::size_t chunk_len);

// Reverse-mode gradients of sum_k grad_y[k] * y[k] through discretization and scan.
template <typename T>
SsmGradients<T> scan_backward(const SsmParams<T>& params, std::span<const T> x, std::span<const T> h0,
                              std::span<const T> grad_y);

// Learned input-to-(delta, B, C) projection for a group of channels sharing B and C.
template <typename T>
struct SelectiveProjection {
    int d_inner = 0;
    int d_state = 0;
    int n_heads = 0;
    // [(n_heads + 2 * d_state)][d_inner]: rows 0..H-1 produce delta, then B, then C.
    std::vector<T> weight;
    // [n_heads]
    std::vector<T> delta_bias;

    int out_dim() const { return n_heads + 2 * d_state; }
};

template <typename T>
struct SelectiveParams {
    int length = 0;
    std::vector<T> pre_delta;  // [L][H], before softplus
    std::vector<T> delta;      // [L][H]
    std::vector<T> b;          // [L][N]
    std::vector<T> c;          // [L][N]
};

// u is [L][d_inner]. delta = softplus(W_delta u + delta_bias), B = W_B u, C = W_C u.
template <typename T>
SelectiveParams<T> selective_parameterization(const SelectiveProjection<T>& proj, std::span<const T> u,
                                              int length);

template <typename T>
T softplus(T v);

// softplus(bias) spans [lo, hi] after inversion: bias = v + log(-expm1(-v)).
template <typename T>
T inverse_softplus(T v);

}  // namespace seld::ssm
