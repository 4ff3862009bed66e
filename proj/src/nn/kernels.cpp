#include "rlwav/nn/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "rlwav/common.hpp"

namespace rlwav::nn {

namespace {

// Scratch for the convolution prepack. Grow-only, one per thread.
template <typename T>
T *scratch(size_t count) {
    thread_local std::vector<T> buf;
    if (buf.size() < count) buf.resize(count);
    return buf.data();
}

// Separate scratch for the transposed-A tiles of gemm_tn_acc so nothing
// collides with the convolution prepack on the same thread.
template <typename T>
T *scratch_tn(size_t count) {
    thread_local std::vector<T> buf;
    if (buf.size() < count) buf.resize(count);
    return buf.data();
}

// Accumulates a fixed-width slice of one output row into registers: JT
// accumulators live across the whole k loop, so each c element is read and
// written once instead of once per k step. Per element the sum still runs in
// ascending k order, which keeps results independent of how callers batch
// rows. bj points at the slice's first column; rows of b are n apart.
template <typename T, int JT>
inline void row_tile_acc(T *__restrict cj, const T *__restrict ai, const T *__restrict bj, int k,
                         int n) {
    T acc[JT] = {};
    for (int p = 0; p < k; ++p) {
        const T ap = ai[p];
        const T *bp = bj + size_t(p) * n;
#pragma omp simd
        for (int j = 0; j < JT; ++j) acc[j] += ap * bp[j];
    }
#pragma omp simd
    for (int j = 0; j < JT; ++j) cj[j] += acc[j];
}

template <typename T>
inline void row_tail_acc(T *__restrict cj, const T *__restrict ai, const T *__restrict bj, int k,
                         int n, int rem) {
    T acc[8] = {};
    for (int p = 0; p < k; ++p) {
        const T ap = ai[p];
        const T *bp = bj + size_t(p) * n;
        for (int j = 0; j < rem; ++j) acc[j] += ap * bp[j];
    }
    for (int j = 0; j < rem; ++j) cj[j] += acc[j];
}

// One output row, j split into register tiles.
template <typename T>
inline void gemm_row(T *ci, const T *ai, const T *b, int k, int n) {
    int j = 0;
    for (; j + 64 <= n; j += 64) row_tile_acc<T, 64>(ci + j, ai, b + j, k, n);
    if (j + 32 <= n) {
        row_tile_acc<T, 32>(ci + j, ai, b + j, k, n);
        j += 32;
    }
    if (j + 16 <= n) {
        row_tile_acc<T, 16>(ci + j, ai, b + j, k, n);
        j += 16;
    }
    if (j + 8 <= n) {
        row_tile_acc<T, 8>(ci + j, ai, b + j, k, n);
        j += 8;
    }
    if (j < n) row_tail_acc(ci + j, ai, b + j, k, n, n - j);
}

// MR rows at once: each b strip loaded from cache feeds MR accumulator rows,
// cutting b traffic MR-fold and keeping MR*JT/w independent fma chains in
// flight. Every c element still owns one accumulator summed in ascending k
// order, so the result matches gemm_row bit for bit.
template <typename T, int MR, int JT>
inline void block_tile_acc(T *__restrict c, const T *__restrict a, const T *__restrict bj, int k,
                           int n, int ldc, int lda) {
    T acc[MR][JT] = {};
    for (int p = 0; p < k; ++p) {
        const T *bp = bj + size_t(p) * n;
#pragma GCC unroll 8
        for (int r = 0; r < MR; ++r) {
            const T ar = a[size_t(r) * lda + p];
#pragma omp simd
            for (int j = 0; j < JT; ++j) acc[r][j] += ar * bp[j];
        }
    }
    for (int r = 0; r < MR; ++r) {
        T *cr = c + size_t(r) * ldc;
#pragma omp simd
        for (int j = 0; j < JT; ++j) cr[j] += acc[r][j];
    }
}

template <typename T, int MR>
inline void block_tail_acc(T *__restrict c, const T *__restrict a, const T *__restrict bj, int k,
                           int n, int ldc, int lda, int rem) {
    T acc[MR][8] = {};
    for (int p = 0; p < k; ++p) {
        const T *bp = bj + size_t(p) * n;
        for (int r = 0; r < MR; ++r) {
            const T ar = a[size_t(r) * lda + p];
            for (int j = 0; j < rem; ++j) acc[r][j] += ar * bp[j];
        }
    }
    for (int r = 0; r < MR; ++r)
        for (int j = 0; j < rem; ++j) c[size_t(r) * ldc + j] += acc[r][j];
}

// MR output rows, j split into register tiles.
template <typename T, int MR>
inline void gemm_rows(T *c, const T *a, const T *b, int k, int n, int ldc, int lda) {
    int j = 0;
    for (; j + 32 <= n; j += 32) block_tile_acc<T, MR, 32>(c + j, a, b + j, k, n, ldc, lda);
    if (j + 16 <= n) {
        block_tile_acc<T, MR, 16>(c + j, a, b + j, k, n, ldc, lda);
        j += 16;
    }
    if (j + 8 <= n) {
        block_tile_acc<T, MR, 8>(c + j, a, b + j, k, n, ldc, lda);
        j += 8;
    }
    if (j < n) block_tail_acc<T, MR>(c + j, a, b + j, k, n, ldc, lda, n - j);
}

}  // namespace

template <typename T>
void gemm_nn_acc(T *c, const T *a, const T *b, int m, int k, int n) {
    constexpr int MR = 8;
    const int mb = m / MR;
#pragma omp parallel for schedule(static) if (mb >= 16)
    for (int ib = 0; ib < mb; ++ib)
        gemm_rows<T, MR>(c + size_t(ib) * MR * n, a + size_t(ib) * MR * k, b, k, n, n, k);
    for (int i = mb * MR; i < m; ++i) gemm_row(c + size_t(i) * n, a + size_t(i) * k, b, k, n);
}

template <typename T>
void gemm_nn(T *c, const T *a, const T *b, int m, int k, int n, const T *bias) {
#pragma omp parallel for schedule(static) if (m >= 128)
    for (int i = 0; i < m; ++i) {
        T *ci = c + size_t(i) * n;
        if (bias)
            std::memcpy(ci, bias, sizeof(T) * n);
        else
            std::memset(ci, 0, sizeof(T) * n);
    }
    gemm_nn_acc(c, a, b, m, k, n);
}

template <typename T>
void gemm_tn_acc(T *c, const T *a, const T *b, int m, int n, int k) {
    // Row blocks of a are transposed into contiguous scratch so the inner
    // loops see unit-stride reads; the block size is fixed, so each output
    // element accumulates in the same order no matter who calls.
    constexpr int RT = 256;
    T *at = scratch_tn<T>(size_t(RT) * n);
    for (int r0 = 0; r0 < m; r0 += RT) {
        const int rt = std::min(RT, m - r0);
        transpose(at, a + size_t(r0) * n, rt, n);  // at: [n x rt]
        const T *bb = b + size_t(r0) * k;
        constexpr int MR = 8;
        const int nb = n / MR;
#pragma omp parallel for schedule(static) if (nb >= 16)
        for (int ib = 0; ib < nb; ++ib)
            gemm_rows<T, MR>(c + size_t(ib) * MR * k, at + size_t(ib) * MR * rt, bb, rt, k, k, rt);
        for (int i = nb * MR; i < n; ++i)
            gemm_row(c + size_t(i) * k, at + size_t(i) * rt, bb, rt, k);
    }
}

template <typename T>
void transpose(T *out, const T *in, int h, int w) {
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out[size_t(x) * h + y] = in[size_t(y) * w + x];
}

template <typename T>
void elu_inplace(T *x, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (x[i] < T(0)) x[i] = T(std::expm1(double(x[i])));
}

// exp on [-87.3, 0] via Cody-Waite range reduction (exp(x) = 2^p * exp(s),
// s in [-ln2/2, ln2/2]) and a degree-6 Taylor kernel: ~2 ulp, pure float
// arithmetic, so it vectorizes and gives identical results everywhere.
template <>
void elu_inplace<float>(float *x, size_t n) {
    const float log2e = 1.44269504f;
    const float ln2_hi = 0.693359375f, ln2_lo = -2.12194440e-4f;
#pragma omp simd
    for (size_t i = 0; i < n; ++i) {
        const float v = x[i];
        const float u = v < -87.0f ? -87.0f : v;  // exp underflow: elu -> -1
        const float pf = std::nearbyint(u * log2e);
        float s = u - pf * ln2_hi;
        s -= pf * ln2_lo;
        float e = 1.0f / 720.0f;
        e = e * s + 1.0f / 120.0f;
        e = e * s + 1.0f / 24.0f;
        e = e * s + 1.0f / 6.0f;
        e = e * s + 0.5f;
        e = e * s + 1.0f;
        e = e * s + 1.0f;
        const float scale = std::bit_cast<float>((int32_t(pf) + 127) << 23);
        x[i] = v > 0.0f ? v : e * scale - 1.0f;
    }
}

template <typename T>
void conv2d_same(T *out, const T *img, int h, int w, const T *kernel, int ksize) {
    if (ksize % 2 == 0) throw ConfigError("conv2d_same: kernel size must be odd");
    if (ksize > h || ksize > w) throw ConfigError("conv2d_same: kernel larger than image");
    const int r = ksize / 2;
    for (int y = 0; y < h; ++y) {
        T *orow = out + size_t(y) * w;
        std::memset(orow, 0, sizeof(T) * w);
        for (int ky = 0; ky < ksize; ++ky) {
            const int sy = y + ky - r;
            if (sy < 0 || sy >= h) continue;
            const T *irow = img + size_t(sy) * w;
            for (int kx = 0; kx < ksize; ++kx) {
                const T kv = kernel[ky * ksize + kx];
                const int off = kx - r;
                const int x0 = off < 0 ? -off : 0;
                const int x1 = off > 0 ? w - off : w;
#pragma omp simd
                for (int x = x0; x < x1; ++x) orow[x] += kv * irow[x + off];
            }
        }
    }
}

namespace {

// Stride-2 taps read interleaved columns; splitting each row into even and
// odd columns turns every tap into a contiguous read. The odd plane carries
// one leading zero so the kx=0 tap at ox=0 falls on padding.
template <typename T>
void prepack_s2(T *even, T *odd, const T *in, int cin, int h, int w) {
    const int hw = w / 2, stride = hw + 1;
    for (int c = 0; c < cin; ++c)
        for (int y = 0; y < h; ++y) {
            const T *row = in + (size_t(c) * h + y) * w;
            T *e = even + (size_t(c) * h + y) * hw;
            T *o = odd + (size_t(c) * h + y) * stride;
            o[0] = T(0);
            for (int x = 0; x < hw; ++x) {
                e[x] = row[2 * x];
                o[x + 1] = row[2 * x + 1];
            }
        }
}

}  // namespace

template <typename T>
void conv3x3s2_forward(T *out, const T *in, int cin, int h, int w, int cout,
                       const T *weights, const T *bias) {
    const int oh = h / 2, ow = w / 2, ostride = ow + 1;
    T *even = scratch<T>(size_t(cin) * h * (ow + ostride));
    T *odd = even + size_t(cin) * h * ow;
    prepack_s2(even, odd, in, cin, h, w);

#pragma omp parallel for schedule(static) if (cout >= 16)
    for (int co = 0; co < cout; ++co) {
        T *plane = out + size_t(co) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) plane[i] = bias ? bias[co] : T(0);
        for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < 3; ++ky) {
                const T *wk = weights + ((size_t(co) * cin + ci) * 3 + ky) * 3;
                const T w0 = wk[0], w1 = wk[1], w2 = wk[2];
                for (int oy = 0; oy < oh; ++oy) {
                    const int sy = 2 * oy + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const T *e = even + (size_t(ci) * h + sy) * ow;
                    const T *o = odd + (size_t(ci) * h + sy) * ostride;
                    T *orow = plane + size_t(oy) * ow;
#pragma omp simd
                    for (int x = 0; x < ow; ++x)
                        orow[x] += w0 * o[x] + w1 * e[x] + w2 * o[x + 1];
                }
            }
    }
}

template <typename T>
void conv3x3s2_backward(const T *d_out, const T *in, int cin, int h, int w, int cout,
                        const T *weights, T *d_weights, T *d_bias, T *d_in) {
    const int oh = h / 2, ow = w / 2, ostride = ow + 1;
    T *even = scratch<T>(size_t(cin) * h * (ow + ostride) + size_t(h) * (ow + ostride));
    T *odd = even + size_t(cin) * h * ow;
    T *dche = odd + size_t(cin) * h * ostride;  // per-channel input-grad planes
    T *dcho = dche + size_t(h) * ow;
    prepack_s2(even, odd, in, cin, h, w);

    for (int co = 0; co < cout; ++co) {
        const T *plane = d_out + size_t(co) * oh * ow;
        T acc = 0;
        for (int i = 0; i < oh * ow; ++i) acc += plane[i];
        d_bias[co] += acc;
    }

    for (int co = 0; co < cout; ++co) {
        const T *plane = d_out + size_t(co) * oh * ow;
        for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < 3; ++ky) {
                T *dwk = d_weights + ((size_t(co) * cin + ci) * 3 + ky) * 3;
                T s0 = 0, s1 = 0, s2 = 0;
                for (int oy = 0; oy < oh; ++oy) {
                    const int sy = 2 * oy + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const T *e = even + (size_t(ci) * h + sy) * ow;
                    const T *o = odd + (size_t(ci) * h + sy) * ostride;
                    const T *orow = plane + size_t(oy) * ow;
#pragma omp simd reduction(+ : s0, s1, s2)
                    for (int x = 0; x < ow; ++x) {
                        s0 += orow[x] * o[x];
                        s1 += orow[x] * e[x];
                        s2 += orow[x] * o[x + 1];
                    }
                }
                dwk[0] += s0;
                dwk[1] += s1;
                dwk[2] += s2;
            }
    }

    if (!d_in) return;
    for (int ci = 0; ci < cin; ++ci) {
        std::memset(dche, 0, sizeof(T) * size_t(h) * ow);
        std::memset(dcho, 0, sizeof(T) * size_t(h) * ostride);
        for (int co = 0; co < cout; ++co) {
            const T *plane = d_out + size_t(co) * oh * ow;
            for (int ky = 0; ky < 3; ++ky) {
                const T *wk = weights + ((size_t(co) * cin + ci) * 3 + ky) * 3;
                const T w0 = wk[0], w1 = wk[1], w2 = wk[2];
                for (int oy = 0; oy < oh; ++oy) {
                    const int sy = 2 * oy + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const T *orow = plane + size_t(oy) * ow;
                    T *de = dche + size_t(sy) * ow;
                    T *dod = dcho + size_t(sy) * ostride;
#pragma omp simd
                    for (int x = 0; x < ow; ++x) {
                        dod[x] += w0 * orow[x];
                        de[x] += w1 * orow[x];
                        dod[x + 1] += w2 * orow[x];
                    }
                }
            }
        }
        for (int y = 0; y < h; ++y) {
            T *drow = d_in + (size_t(ci) * h + y) * w;
            const T *de = dche + size_t(y) * ow;
            const T *dod = dcho + size_t(y) * ostride;
            for (int x = 0; x < ow; ++x) {
                drow[2 * x] += de[x];
                drow[2 * x + 1] += dod[x + 1];
            }
        }
    }
}

#define RLWAV_INSTANTIATE(T)                                                              \
    template void gemm_nn_acc<T>(T *, const T *, const T *, int, int, int);               \
    template void gemm_nn<T>(T *, const T *, const T *, int, int, int, const T *);        \
    template void gemm_tn_acc<T>(T *, const T *, const T *, int, int, int);               \
    template void transpose<T>(T *, const T *, int, int);                                 \
    template void elu_inplace<T>(T *, size_t);                                            \
    template void conv2d_same<T>(T *, const T *, int, int, const T *, int);               \
    template void conv3x3s2_forward<T>(T *, const T *, int, int, int, int, const T *,     \
                                       const T *);                                        \
    template void conv3x3s2_backward<T>(const T *, const T *, int, int, int, int,         \
                                        const T *, T *, T *, T *);

RLWAV_INSTANTIATE(float)
RLWAV_INSTANTIATE(double)
#undef RLWAV_INSTANTIATE

}  // namespace rlwav::nn
