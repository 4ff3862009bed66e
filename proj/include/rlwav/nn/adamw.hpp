#pragma once

#include <cstddef>
#include <vector>

namespace rlwav::nn {

struct AdamwConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct OptState {
    std::vector<float> m;
    std::vector<float> v;
    long step = 0;

    explicit OptState(size_t n = 0) : m(n, 0.f), v(n, 0.f) {}
    void reset(size_t n) {
        m.assign(n, 0.f);
        v.assign(n, 0.f);
        step = 0;
    }
};

// One decoupled-weight-decay Adam step:
//   p -= lr * (mhat / (sqrt(vhat) + eps) + wd * p)
// Returns false (and leaves params, moments and step untouched) when the
// gradient contains a non-finite value, so the caller can report divergence.
bool adamw_step(float *params, const float *grads, size_t n, OptState &st, double lr, const AdamwConfig &cfg);

// Linear warmup from 0 to base over [0, warmup], then cosine decay to 0 at
// `total`. Steps outside [0, total] clamp.
double lr_at(long step, long total, long warmup, double base);

}  // namespace rlwav::nn
