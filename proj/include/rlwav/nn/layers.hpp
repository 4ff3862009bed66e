#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "rlwav/common.hpp"
#include "rlwav/nn/kernels.hpp"
#include "rlwav/nn/tensor.hpp"

namespace rlwav::nn {

enum class Act { relu, elu, none };

template <typename T>
inline T apply_act(Act a, T x) {
    switch (a) {
        case Act::relu: return x > T(0) ? x : T(0);
        case Act::elu: return x > T(0) ? x : T(std::expm1(double(x)));
        case Act::none: return x;
    }
    return x;
}

// derivative expressed through the post-activation value y = act(x)
// relu: 1[y > 0];  elu (alpha=1): x>0 -> 1, else y + 1
template <typename T>
inline T act_grad_from_out(Act a, T y) {
    switch (a) {
        case Act::relu: return y > T(0) ? T(1) : T(0);
        case Act::elu: return y > T(0) ? T(1) : y + T(1);
        case Act::none: return T(1);
    }
    return T(1);
}

// uniform +-sqrt(6 / (fan_in + fan_out))
template <typename T>
void init_dense(T *w, int fan_in, int fan_out, Rng &rng) {
    double lim = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < fan_in * fan_out; ++i) w[i] = T(rng.uniform(-lim, lim));
}

// spec-level single-sample dense op; weights row-major [out][in]
template <typename T>
void dense_forward(const T *w, const T *b, const T *x, int in, int out, T *y) {
    for (int o = 0; o < out; ++o) {
        double acc = b ? double(b[o]) : 0.0;
        const T *wr = w + size_t(o) * in;
        for (int i = 0; i < in; ++i) acc += double(wr[i]) * double(x[i]);
        y[o] = T(acc);
    }
}

// Backward tape for one Mlp pass. Single-use: backward() consumes it.
template <typename T>
struct MlpCtx {
    std::vector<std::vector<T>> acts;  // acts[0] = input copy, acts[l+1] = layer l output
    int rows = 0;
    bool live = false;
};

struct MlpSpec {
    int in = 0;
    std::vector<int> hidden;
    int out = 0;
    Act act = Act::relu;
};

// Fully connected net; hidden layers activated, final layer linear.
// Weights are stored fan-in-major ([in][out]) so the heavily used forward
// path is a plain row-major GEMM with no transpose; the dX path in backward
// transposes through a generation-stamped cache.
template <typename T>
class Mlp {
  public:
    void build(ParamStore<T> &store, const std::string &prefix, const MlpSpec &spec);

    int in_dim() const { return spec_.in; }
    int out_dim() const { return spec_.out; }
    int layer_count() const { return int(dims_.size()) - 1; }

    // x [rows x in] -> y [rows x out]; ctx may be null when no backward follows
    void forward(const ParamStore<T> &store, const T *x, int rows, T *y, MlpCtx<T> *ctx = nullptr) const;

    // dy [rows x out]; accumulates into grads (same layout as store); dx optional
    void backward(const ParamStore<T> &store, MlpCtx<T> &ctx, const T *dy, T *grads, T *dx = nullptr) const;

    void init(ParamStore<T> &store, Rng &rng) const;

    size_t weight_offset(int layer) const { return w_off_[layer]; }
    size_t bias_offset(int layer) const { return b_off_[layer]; }

  private:
    MlpSpec spec_;
    std::vector<int> dims_;       // [in, hidden..., out]
    std::vector<size_t> w_off_;   // per layer, [dims_[l] x dims_[l+1]]
    std::vector<size_t> b_off_;   // per layer, [dims_[l+1]]
    mutable std::vector<std::vector<T>> wt_cache_;  // transposed weights for dX
    mutable uint64_t wt_gen_ = 0;

    void refresh_wt(const ParamStore<T> &store) const;
};

// Numerically stable fused softmax cross-entropy for one row of logits.
// target must be a distribution (sum 1 within 1e-6, entries >= 0).
// Returns loss; grad (softmax - target) written if non-null.
template <typename T>
double softmax_cross_entropy(const T *logits, const T *target, int n, T *grad);

// independent per-class sigmoid BCE; targets in [0,1]; returns mean-free total loss
template <typename T>
double sigmoid_bce(const T *logits, const T *target, int n, T *grad);

template <typename T>
void softmax(const T *logits, int n, T *probs);

}  // namespace rlwav::nn
