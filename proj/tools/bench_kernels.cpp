// Micro-benchmark comparing the optimized OpenMP kernels against the serial
// reference implementations. Sizes mirror the hot paths: policy/value MLP
// minibatches and the per-frame classifier convolutions.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <omp.h>

#include "rlwav/common.hpp"
#include "rlwav/nn/kernels.hpp"

using namespace rlwav;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_best(F &&fn, int reps) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_s();
        fn();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

void fill(Rng &rng, float *p, size_t n) {
    for (size_t i = 0; i < n; ++i) p[i] = rng.uniformf(-1.f, 1.f);
}

void bench_gemm(int m, int k, int n, int reps) {
    Rng rng(7);
    std::vector<float> a(size_t(m) * k), b(size_t(k) * n), c(size_t(m) * n), cr(c.size());
    fill(rng, a.data(), a.size());
    fill(rng, b.data(), b.size());

    const double flops = 2.0 * m * k * n;
    const double t_ref = time_best(
        [&] {
            std::memset(cr.data(), 0, cr.size() * sizeof(float));
            nn::ref::gemm_nn_acc(cr.data(), a.data(), b.data(), m, k, n);
        },
        std::max(1, reps / 8));
    const double t_opt = time_best(
        [&] {
            std::memset(c.data(), 0, c.size() * sizeof(float));
            nn::gemm_nn_acc(c.data(), a.data(), b.data(), m, k, n);
        },
        reps);

    double max_diff = 0;
    for (size_t i = 0; i < c.size(); ++i)
        max_diff = std::max(max_diff, double(std::abs(c[i] - cr[i])));
    std::printf("gemm %5dx%3dx%3d  ref %7.2f GF/s  omp %7.2f GF/s  x%.1f  maxdiff %.2e\n", m,
                k, n, flops / t_ref * 1e-9, flops / t_opt * 1e-9, t_ref / t_opt, max_diff);
}

void bench_conv(int cin, int hw, int cout, int reps) {
    Rng rng(11);
    std::vector<float> in(size_t(cin) * hw * hw), w(size_t(cout) * cin * 9), bias(cout);
    std::vector<float> out(size_t(cout) * hw * hw / 4), outr(out.size());
    fill(rng, in.data(), in.size());
    fill(rng, w.data(), w.size());
    fill(rng, bias.data(), bias.size());

    const double flops = 2.0 * 9 * cin * cout * (hw / 2) * (hw / 2);
    const double t_ref = time_best(
        [&] {
            nn::ref::conv3x3s2_forward(outr.data(), in.data(), cin, hw, hw, cout, w.data(),
                                       bias.data());
        },
        std::max(1, reps / 8));
    const double t_opt = time_best(
        [&] {
            nn::conv3x3s2_forward(out.data(), in.data(), cin, hw, hw, cout, w.data(),
                                  bias.data());
        },
        reps);

    double max_diff = 0;
    for (size_t i = 0; i < out.size(); ++i)
        max_diff = std::max(max_diff, double(std::abs(out[i] - outr[i])));
    std::printf("conv s2 %2d->%2d @%2dx%2d  ref %7.2f GF/s  omp %7.2f GF/s  x%.1f  maxdiff %.2e\n",
                cin, cout, hw, hw, flops / t_ref * 1e-9, flops / t_opt * 1e-9, t_ref / t_opt,
                max_diff);
}

}  // namespace

int main(int argc, char **argv) {
    int threads = omp_get_max_threads();
    for (int i = 1; i + 1 < argc; i += 2)
        if (std::string(argv[i]) == "--threads") threads = std::atoi(argv[i + 1]);
    omp_set_num_threads(threads);
    std::printf("threads: %d\n", threads);

    // PPO update shapes (minibatch x layer)
    bench_gemm(4096, 31, 128, 20);
    bench_gemm(4096, 128, 64, 20);
    bench_gemm(4096, 64, 32, 20);
    bench_gemm(4096, 128, 31, 20);  // dX path
    // rollout-step shapes
    bench_gemm(256, 31, 128, 50);
    bench_gemm(256, 128, 64, 50);
    // classifier encoder stages
    bench_conv(1, 64, 4, 200);
    bench_conv(4, 32, 8, 200);
    bench_conv(8, 16, 16, 200);
    bench_conv(1, 64, 8, 100);
    bench_conv(8, 32, 16, 100);
    bench_conv(16, 16, 32, 100);
    return 0;
}
