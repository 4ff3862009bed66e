#pragma once

#include <cstddef>

// Dense and convolution kernels. Every optimized kernel here has a naive
// counterpart in nn::ref with the same contract; the ref versions are the
// oracles in the test suite and the baseline in the kernel benchmark.
//
// Rows of a matrix are contiguous (row-major). Weight matrices are stored
// [out][in]. OpenMP parallelism is over independent output rows/blocks with
// static schedules, so results are bit-identical for a fixed thread count.

namespace rlwav::nn {

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn_acc(T *c, const T *a, const T *b, int m, int k, int n);

// C[m x n] = A[m x k] * B[k x n] (+ optional row-broadcast bias[n])
template <typename T>
void gemm_nn(T *c, const T *a, const T *b, int m, int k, int n, const T *bias = nullptr);

// C[n x k] += A[m x n]^T * B[m x k]   (outer-product accumulation over rows)
template <typename T>
void gemm_tn_acc(T *c, const T *a, const T *b, int m, int n, int k);

// out[w] = transpose of in[h x w] -> [w x h]
template <typename T>
void transpose(T *out, const T *in, int h, int w);

// In-place ELU (alpha = 1) over a buffer. The float path uses a polynomial
// exp kernel that vectorizes; double keeps libm accuracy for the oracles.
template <typename T>
void elu_inplace(T *x, size_t n);

// Same-size single-channel convolution, odd kernel, zero padding, stride 1.
template <typename T>
void conv2d_same(T *out, const T *img, int h, int w, const T *kernel, int ksize);

// Multi-channel 3x3 convolution, stride 2, zero padding 1.
// in: [cin][h][w], out: [cout][h/2][w/2], weights: [cout][cin][3][3], bias: [cout].
// h and w must be even.
template <typename T>
void conv3x3s2_forward(T *out, const T *in, int cin, int h, int w, int cout,
                       const T *weights, const T *bias);

// Gradients for conv3x3s2_forward. d_in may be null to skip input gradients.
template <typename T>
void conv3x3s2_backward(const T *d_out, const T *in, int cin, int h, int w, int cout,
                        const T *weights, T *d_weights, T *d_bias, T *d_in);

namespace ref {

template <typename T>
void gemm_nn_acc(T *c, const T *a, const T *b, int m, int k, int n) {
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
}

template <typename T>
void gemm_nn(T *c, const T *a, const T *b, int m, int k, int n, const T *bias = nullptr) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            T acc = bias ? bias[j] : T(0);
            for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
}

template <typename T>
void gemm_tn_acc(T *c, const T *a, const T *b, int m, int n, int k) {
    for (int r = 0; r < m; ++r)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j) c[i * k + j] += a[r * n + i] * b[r * k + j];
}

template <typename T>
void conv2d_same(T *out, const T *img, int h, int w, const T *kernel, int ksize) {
    const int r = ksize / 2;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            T acc = 0;
            for (int ky = 0; ky < ksize; ++ky)
                for (int kx = 0; kx < ksize; ++kx) {
                    const int sy = y + ky - r, sx = x + kx - r;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w)
                        acc += img[sy * w + sx] * kernel[ky * ksize + kx];
                }
            out[y * w + x] = acc;
        }
}

template <typename T>
void conv3x3s2_forward(T *out, const T *in, int cin, int h, int w, int cout,
                       const T *weights, const T *bias) {
    const int oh = h / 2, ow = w / 2;
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T acc = bias ? bias[co] : T(0);
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sy = 2 * oy + ky - 1, sx = 2 * ox + kx - 1;
                            if (sy >= 0 && sy < h && sx >= 0 && sx < w)
                                acc += in[(ci * h + sy) * w + sx] *
                                       weights[((co * cin + ci) * 3 + ky) * 3 + kx];
                        }
                out[(co * oh + oy) * ow + ox] = acc;
            }
}

}  // namespace ref

}  // namespace rlwav::nn
