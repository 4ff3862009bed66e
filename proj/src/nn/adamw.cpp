#include "rlwav/nn/adamw.hpp"

#include <cmath>

namespace rlwav::nn {

bool adamw_step(float *params, const float *grads, size_t n, OptState &st, double lr, const AdamwConfig &cfg) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(grads[i])) return false;
    st.step += 1;
    double b1 = cfg.beta1, b2 = cfg.beta2;
    double bc1 = 1.0 - std::pow(b1, double(st.step));
    double bc2 = 1.0 - std::pow(b2, double(st.step));
    float *m = st.m.data();
    float *v = st.v.data();
    for (size_t i = 0; i < n; ++i) {
        double g = grads[i];
        double mi = b1 * double(m[i]) + (1.0 - b1) * g;
        double vi = b2 * double(v[i]) + (1.0 - b2) * g * g;
        m[i] = float(mi);
        v[i] = float(vi);
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        double p = double(params[i]);
        p -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p);
        params[i] = float(p);
    }
    return true;
}

double lr_at(long step, long total, long warmup, double base) {
    if (step <= 0) return warmup > 0 ? 0.0 : base;
    if (step >= total) return 0.0;
    if (step < warmup) return base * double(step) / double(warmup);
    double prog = double(step - warmup) / double(total - warmup);
    return base * 0.5 * (1.0 + std::cos(prog * 3.14159265358979323846));
}

}  // namespace rlwav::nn
