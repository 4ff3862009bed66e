#include "rlwav/nn/layers.hpp"

#include <algorithm>

namespace rlwav::nn {

template <typename T>
void Mlp<T>::build(ParamStore<T> &store, const std::string &prefix, const MlpSpec &spec) {
    spec_ = spec;
    dims_.clear();
    dims_.push_back(spec.in);
    for (int h : spec.hidden) dims_.push_back(h);
    dims_.push_back(spec.out);
    w_off_.clear();
    b_off_.clear();
    for (size_t l = 0; l + 1 < dims_.size(); ++l) {
        std::string tag = prefix + ".l" + std::to_string(l);
        w_off_.push_back(store.add(tag + ".w", {uint32_t(dims_[l]), uint32_t(dims_[l + 1])}));
        b_off_.push_back(store.add(tag + ".b", {uint32_t(dims_[l + 1])}));
    }
    wt_cache_.assign(w_off_.size(), {});
    wt_gen_ = 0;
}

template <typename T>
void Mlp<T>::init(ParamStore<T> &store, Rng &rng) const {
    for (size_t l = 0; l < w_off_.size(); ++l) {
        init_dense(store.data() + w_off_[l], dims_[l], dims_[l + 1], rng);
        std::fill_n(store.data() + b_off_[l], dims_[l + 1], T(0));
    }
    store.bump_generation();
}

template <typename T>
void Mlp<T>::forward(const ParamStore<T> &store, const T *x, int rows, T *y, MlpCtx<T> *ctx) const {
    int layers = layer_count();
    const T *cur = x;
    std::vector<T> tmp_a, tmp_b;  // ping-pong when no tape is kept
    if (ctx) {
        ctx->acts.resize(layers + 1);
        ctx->acts[0].assign(x, x + size_t(rows) * dims_[0]);
        ctx->rows = rows;
        ctx->live = true;
    }
    for (int l = 0; l < layers; ++l) {
        int din = dims_[l], dout = dims_[l + 1];
        T *dst;
        if (l == layers - 1) {
            dst = y;
        } else if (ctx) {
            ctx->acts[l + 1].resize(size_t(rows) * dout);
            dst = ctx->acts[l + 1].data();
        } else {
            auto &buf = (l % 2 == 0) ? tmp_a : tmp_b;
            buf.resize(size_t(rows) * dout);
            dst = buf.data();
        }
        gemm_nn(dst, cur, store.data() + w_off_[l], rows, din, dout, store.data() + b_off_[l]);
        if (l != layers - 1) {
            Act a = spec_.act;
            size_t n = size_t(rows) * dout;
            if (a == Act::elu) {
                elu_inplace(dst, n);
            } else if (a == Act::relu) {
#pragma omp simd
                for (size_t i = 0; i < n; ++i) dst[i] = dst[i] > T(0) ? dst[i] : T(0);
            }
        } else if (ctx) {
            // final linear output is not needed for backward; nothing stored
        }
        cur = dst;
    }
}

template <typename T>
void Mlp<T>::refresh_wt(const ParamStore<T> &store) const {
    if (wt_gen_ == store.generation()) return;
    for (size_t l = 0; l < w_off_.size(); ++l) {
        int din = dims_[l], dout = dims_[l + 1];
        wt_cache_[l].resize(size_t(din) * dout);
        transpose(wt_cache_[l].data(), store.data() + w_off_[l], din, dout);
    }
    wt_gen_ = store.generation();
}

template <typename T>
void Mlp<T>::backward(const ParamStore<T> &store, MlpCtx<T> &ctx, const T *dy, T *grads, T *dx) const {
    if (!ctx.live) throw std::logic_error("Mlp::backward: tape already consumed");
    ctx.live = false;
    refresh_wt(store);
    int layers = layer_count();
    int rows = ctx.rows;
    std::vector<T> dz(size_t(rows) * *std::max_element(dims_.begin(), dims_.end()));
    std::vector<T> dh(dz.size());
    // start with the final linear layer's upstream gradient
    size_t top = size_t(rows) * dims_.back();
    std::copy(dy, dy + top, dz.data());
    for (int l = layers - 1; l >= 0; --l) {
        int din = dims_[l], dout = dims_[l + 1];
        const T *h = ctx.acts[l].data();
        // dW [din x dout] += h^T dz ; db += column sums of dz
        gemm_tn_acc(grads + w_off_[l], h, dz.data(), rows, din, dout);
        T *db = grads + b_off_[l];
        for (int r = 0; r < rows; ++r) {
            const T *row = dz.data() + size_t(r) * dout;
#pragma omp simd
            for (int o = 0; o < dout; ++o) db[o] += row[o];
        }
        bool want_dh = (l > 0) || (dx != nullptr);
        if (!want_dh) break;
        T *dst = (l > 0) ? dh.data() : dx;
        // dh [rows x din] = dz · W^T
        gemm_nn(dst, dz.data(), wt_cache_[l].data(), rows, dout, din);
        if (l > 0) {
            Act a = spec_.act;
            const T *hh = ctx.acts[l].data();
            size_t n = size_t(rows) * din;
            for (size_t i = 0; i < n; ++i) dst[i] *= act_grad_from_out(a, hh[i]);
            std::copy(dst, dst + n, dz.data());
        }
    }
}

template <typename T>
void softmax(const T *logits, int n, T *probs) {
    double zmax = logits[0];
    for (int i = 1; i < n; ++i) zmax = std::max(zmax, double(logits[i]));
    double sum = 0;
    for (int i = 0; i < n; ++i) {
        double e = std::exp(double(logits[i]) - zmax);
        probs[i] = T(e);
        sum += e;
    }
    double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) probs[i] = T(double(probs[i]) * inv);
}

template <typename T>
double softmax_cross_entropy(const T *logits, const T *target, int n, T *grad) {
    double tsum = 0;
    for (int i = 0; i < n; ++i) {
        if (target[i] < T(0)) throw ConfigError("softmax_cross_entropy: negative target entry");
        tsum += double(target[i]);
    }
    if (std::abs(tsum - 1.0) > 1e-6) throw ConfigError("softmax_cross_entropy: target not normalized");
    double zmax = logits[0];
    for (int i = 1; i < n; ++i) zmax = std::max(zmax, double(logits[i]));
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += std::exp(double(logits[i]) - zmax);
    double lse = std::log(sum) + zmax;
    double loss = 0;
    for (int i = 0; i < n; ++i) {
        double logp = double(logits[i]) - lse;
        loss -= double(target[i]) * logp;
        if (grad) grad[i] = T(std::exp(logp) - double(target[i]));
    }
    return loss;
}

template <typename T>
double sigmoid_bce(const T *logits, const T *target, int n, T *grad) {
    // stable form: loss = max(z,0) - z*t + log(1 + exp(-|z|))
    double loss = 0;
    for (int i = 0; i < n; ++i) {
        double z = logits[i], t = target[i];
        loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
        if (grad) grad[i] = T(1.0 / (1.0 + std::exp(-z)) - t);
    }
    return loss;
}

template class Mlp<float>;
template class Mlp<double>;
template double softmax_cross_entropy<float>(const float *, const float *, int, float *);
template double softmax_cross_entropy<double>(const double *, const double *, int, double *);
template double sigmoid_bce<float>(const float *, const float *, int, float *);
template double sigmoid_bce<double>(const double *, const double *, int, double *);
template void softmax<float>(const float *, int, float *);
template void softmax<double>(const double *, int, double *);

}  // namespace rlwav::nn
