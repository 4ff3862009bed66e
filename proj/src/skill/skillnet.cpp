#include "rlwav/skill/skillnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

namespace rlwav::skill {

namespace {

constexpr int kW = cam::kFrameW, kH = cam::kFrameH, kF = cam::kClipLen;
constexpr int kNpx = kW * kH;
constexpr int kC = gen::kNumSkills;

template <typename T>
void init_conv(T *w, int cout, int cin, Rng &rng) {
    double lim = std::sqrt(6.0 / (9.0 * (cin + cout)));
    for (int i = 0; i < cout * cin * 9; ++i) w[i] = T(rng.uniform(-lim, lim));
}

template <typename T>
void elu_inplace(T *v, size_t n) {
    nn::elu_inplace(v, n);
}

}  // namespace

template <typename T>
void ClassifierT<T>::build(const ClassifierSpec &spec) {
    spec_ = spec;
    store_ = nn::ParamStore<T>();
    const uint32_t c1 = spec.c1, c2 = spec.c2, c3 = spec.c3;
    w1_ = store_.add("conv1.w", {c1, 1, 3, 3});
    b1_ = store_.add("conv1.b", {c1});
    w2_ = store_.add("conv2.w", {c2, c1, 3, 3});
    b2_ = store_.add("conv2.b", {c2});
    w3_ = store_.add("conv3.w", {c3, c2, 3, 3});
    b3_ = store_.add("conv3.b", {c3});
    const uint32_t flat = c3 * (kH / 8) * (kW / 8);
    const uint32_t d = spec.embed_dim;
    we_ = store_.add("embed.w", {flat, d});
    be_ = store_.add("embed.b", {d});
    head_off_ = store_.size();
    nn::MlpSpec hs;
    hs.in = 2 * spec.embed_dim;
    hs.hidden = spec.head_hidden;
    hs.out = kC;
    hs.act = nn::Act::elu;
    head_.build(store_, "head.", hs);
}

template <typename T>
void ClassifierT<T>::init(Rng &rng) {
    T *p = store_.data();
    init_conv(p + w1_, spec_.c1, 1, rng);
    init_conv(p + w2_, spec_.c2, spec_.c1, rng);
    init_conv(p + w3_, spec_.c3, spec_.c2, rng);
    const int flat = spec_.c3 * (kH / 8) * (kW / 8);
    nn::init_dense(p + we_, flat, spec_.embed_dim, rng);
    head_.init(store_, rng);
    store_.bump_generation();
}

template <typename T>
void ClassifierT<T>::forward(const T *clips, int batch, T *logits, ClsCtxT<T> *ctx) const {
    const int c1 = spec_.c1, c2 = spec_.c2, c3 = spec_.c3, d = spec_.embed_dim;
    const int nf = batch * kF;
    const int n1 = c1 * (kH / 2) * (kW / 2), n2 = c2 * (kH / 4) * (kW / 4);
    const int flat = c3 * (kH / 8) * (kW / 8);
    const T *p = store_.data();

    ClsCtxT<T> local;
    ClsCtxT<T> &c = ctx ? *ctx : local;
    c.batch = batch;
    if (ctx) c.x.assign(clips, clips + size_t(nf) * kNpx);
    c.a1.resize(size_t(nf) * n1);
    c.a2.resize(size_t(nf) * n2);
    c.a3.resize(size_t(nf) * flat);
    c.e.resize(size_t(nf) * d);
    c.feat.resize(size_t(batch) * 2 * d);

    for (int i = 0; i < nf; ++i)
        nn::conv3x3s2_forward(&c.a1[size_t(i) * n1], clips + size_t(i) * kNpx, 1, kH, kW,
                              c1, p + w1_, p + b1_);
    elu_inplace(c.a1.data(), c.a1.size());
    for (int i = 0; i < nf; ++i)
        nn::conv3x3s2_forward(&c.a2[size_t(i) * n2], &c.a1[size_t(i) * n1], c1, kH / 2,
                              kW / 2, c2, p + w2_, p + b2_);
    elu_inplace(c.a2.data(), c.a2.size());
    for (int i = 0; i < nf; ++i)
        nn::conv3x3s2_forward(&c.a3[size_t(i) * flat], &c.a2[size_t(i) * n2], c2, kH / 4,
                              kW / 4, c3, p + w3_, p + b3_);
    elu_inplace(c.a3.data(), c.a3.size());

    nn::gemm_nn(c.e.data(), c.a3.data(), p + we_, nf, flat, d, p + be_);
    elu_inplace(c.e.data(), c.e.size());

    // temporal pooling: mean embedding and mean |frame-to-frame delta|
    for (int b = 0; b < batch; ++b) {
        T *mean = &c.feat[size_t(b) * 2 * d];
        T *mot = mean + d;
        std::fill(mean, mean + 2 * d, T(0));
        const T *eb = &c.e[size_t(b) * kF * d];
        for (int t = 0; t < kF; ++t)
            for (int j = 0; j < d; ++j) mean[j] += eb[t * d + j] / T(kF);
        for (int t = 1; t < kF; ++t)
            for (int j = 0; j < d; ++j)
                mot[j] += std::abs(eb[t * d + j] - eb[(t - 1) * d + j]) / T(kF - 1);
    }
    head_.forward(store_, c.feat.data(), batch, logits, ctx ? &c.head : nullptr);
}

template <typename T>
void ClassifierT<T>::backward(ClsCtxT<T> &c, const T *d_logits, T *grads) const {
    const int c1 = spec_.c1, c2 = spec_.c2, c3 = spec_.c3, d = spec_.embed_dim;
    const int batch = c.batch, nf = batch * kF;
    const int n1 = c1 * (kH / 2) * (kW / 2), n2 = c2 * (kH / 4) * (kW / 4);
    const int flat = c3 * (kH / 8) * (kW / 8);
    const T *p = store_.data();

    std::vector<T> d_feat(size_t(batch) * 2 * d);
    head_.backward(store_, c.head, d_logits, grads, d_feat.data());

    std::vector<T> d_e(size_t(nf) * d, T(0));
    for (int b = 0; b < batch; ++b) {
        const T *df_mean = &d_feat[size_t(b) * 2 * d];
        const T *df_mot = df_mean + d;
        const T *eb = &c.e[size_t(b) * kF * d];
        T *de = &d_e[size_t(b) * kF * d];
        for (int t = 0; t < kF; ++t)
            for (int j = 0; j < d; ++j) de[t * d + j] += df_mean[j] / T(kF);
        for (int t = 1; t < kF; ++t)
            for (int j = 0; j < d; ++j) {
                T diff = eb[t * d + j] - eb[(t - 1) * d + j];
                T s = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
                de[t * d + j] += s * df_mot[j] / T(kF - 1);
                de[(t - 1) * d + j] -= s * df_mot[j] / T(kF - 1);
            }
    }
    for (size_t i = 0; i < d_e.size(); ++i)
        d_e[i] *= nn::act_grad_from_out(nn::Act::elu, c.e[i]);

    nn::gemm_tn_acc(grads + we_, c.a3.data(), d_e.data(), nf, flat, d);
    for (int i = 0; i < nf; ++i)
        for (int j = 0; j < d; ++j) grads[be_ + j] += d_e[size_t(i) * d + j];

    std::vector<T> wt(size_t(d) * flat);
    nn::transpose(wt.data(), p + we_, flat, d);
    std::vector<T> d_a3(size_t(nf) * flat);
    nn::gemm_nn(d_a3.data(), d_e.data(), wt.data(), nf, d, flat);
    for (size_t i = 0; i < d_a3.size(); ++i)
        d_a3[i] *= nn::act_grad_from_out(nn::Act::elu, c.a3[i]);

    std::vector<T> d_a2(size_t(nf) * n2, T(0));
    for (int i = 0; i < nf; ++i)
        nn::conv3x3s2_backward(&d_a3[size_t(i) * flat], &c.a2[size_t(i) * n2], c2, kH / 4,
                               kW / 4, c3, p + w3_, grads + w3_, grads + b3_,
                               &d_a2[size_t(i) * n2]);
    for (size_t i = 0; i < d_a2.size(); ++i)
        d_a2[i] *= nn::act_grad_from_out(nn::Act::elu, c.a2[i]);

    std::vector<T> d_a1(size_t(nf) * n1, T(0));
    for (int i = 0; i < nf; ++i)
        nn::conv3x3s2_backward(&d_a2[size_t(i) * n2], &c.a1[size_t(i) * n1], c1, kH / 2,
                               kW / 2, c2, p + w2_, grads + w2_, grads + b2_,
                               &d_a1[size_t(i) * n1]);
    for (size_t i = 0; i < d_a1.size(); ++i)
        d_a1[i] *= nn::act_grad_from_out(nn::Act::elu, c.a1[i]);

    for (int i = 0; i < nf; ++i)
        nn::conv3x3s2_backward(&d_a1[size_t(i) * n1], &c.x[size_t(i) * kNpx], 1, kH, kW,
                               c1, p + w1_, grads + w1_, grads + b1_, static_cast<T *>(nullptr));
}

template <typename T>
void ClassifierT<T>::frame_embed(const T *frames, int n, T *emb) const {
    const int c1 = spec_.c1, c2 = spec_.c2, c3 = spec_.c3, d = spec_.embed_dim;
    const int n1 = c1 * (kH / 2) * (kW / 2), n2 = c2 * (kH / 4) * (kW / 4);
    const int flat = c3 * (kH / 8) * (kW / 8);
    const T *p = store_.data();

    std::vector<T> a1(size_t(n) * n1), a2(size_t(n) * n2), a3(size_t(n) * flat);
    for (int i = 0; i < n; ++i)
        nn::conv3x3s2_forward(&a1[size_t(i) * n1], frames + size_t(i) * kNpx, 1, kH, kW,
                              c1, p + w1_, p + b1_);
    elu_inplace(a1.data(), a1.size());
    for (int i = 0; i < n; ++i)
        nn::conv3x3s2_forward(&a2[size_t(i) * n2], &a1[size_t(i) * n1], c1, kH / 2, kW / 2,
                              c2, p + w2_, p + b2_);
    elu_inplace(a2.data(), a2.size());
    for (int i = 0; i < n; ++i)
        nn::conv3x3s2_forward(&a3[size_t(i) * flat], &a2[size_t(i) * n2], c2, kH / 4,
                              kW / 4, c3, p + w3_, p + b3_);
    elu_inplace(a3.data(), a3.size());
    nn::gemm_nn(emb, a3.data(), p + we_, n, flat, d, p + be_);
    elu_inplace(emb, size_t(n) * d);
}

template <typename T>
void ClassifierT<T>::head_scores(const T *emb, int batch, T *out) const {
    const int d = spec_.embed_dim;
    std::vector<T> feat(size_t(batch) * 2 * d), logits(size_t(batch) * kC);
    for (int b = 0; b < batch; ++b) {
        T *mean = &feat[size_t(b) * 2 * d];
        T *mot = mean + d;
        std::fill(mean, mean + 2 * d, T(0));
        const T *eb = emb + size_t(b) * kF * d;
        for (int t = 0; t < kF; ++t)
            for (int j = 0; j < d; ++j) mean[j] += eb[t * d + j] / T(kF);
        for (int t = 1; t < kF; ++t)
            for (int j = 0; j < d; ++j)
                mot[j] += std::abs(eb[t * d + j] - eb[(t - 1) * d + j]) / T(kF - 1);
    }
    head_.forward(store_, feat.data(), batch, logits.data(), nullptr);
    for (int b = 0; b < batch; ++b) {
        const T *lg = &logits[size_t(b) * kC];
        T *o = out + size_t(b) * kC;
        if (spec_.multilabel) {
            for (int k = 0; k < kC; ++k) o[k] = T(1) / (T(1) + T(std::exp(-double(lg[k]))));
        } else {
            nn::softmax(lg, kC, o);
        }
    }
}

template <typename T>
void ClassifierT<T>::scores(const T *clips, int batch, T *out) const {
    std::vector<T> emb(size_t(batch) * kF * spec_.embed_dim);
    frame_embed(clips, batch * kF, emb.data());
    head_scores(emb.data(), batch, out);
}

template class ClassifierT<float>;
template class ClassifierT<double>;

void clip_to_float(const gen::LabeledClip &clip, float *dst) {
    for (int i = 0; i < kClipFloats; ++i) dst[i] = clip.px[i] * (1.f / 255.f);
}

void clip_to_float(const cam::Clip &clip, float *dst) {
    for (int f = 0; f < kF; ++f)
        std::memcpy(dst + size_t(f) * kNpx, clip.frames[f].px.data(), sizeof(float) * kNpx);
}

double beta_sample(Rng &rng, double a, double b) {
    for (;;) {
        double x = std::pow(rng.uniform(), 1.0 / a);
        double y = std::pow(rng.uniform(), 1.0 / b);
        if (x + y > 0 && x + y <= 1.0) return x / (x + y);
    }
}

void random_conv_augment(float *clip, Rng &rng, double p) {
    if (rng.uniform() >= p) return;
    const int ks[4] = {1, 3, 5, 7};
    const int k = ks[rng.below(4)];
    float kern[49];
    for (int i = 0; i < k * k; ++i) kern[i] = (float)rng.normal();

    double m0 = 0, v0 = 0;
    for (int i = 0; i < kClipFloats; ++i) m0 += clip[i];
    m0 /= kClipFloats;
    for (int i = 0; i < kClipFloats; ++i) v0 += (clip[i] - m0) * (clip[i] - m0);
    double s0 = std::sqrt(v0 / kClipFloats);

    float tmp[kNpx];
    for (int f = 0; f < kF; ++f) {
        nn::conv2d_same(tmp, clip + size_t(f) * kNpx, kH, kW, kern, k);
        std::memcpy(clip + size_t(f) * kNpx, tmp, sizeof(tmp));
    }

    double m1 = 0, v1 = 0;
    for (int i = 0; i < kClipFloats; ++i) m1 += clip[i];
    m1 /= kClipFloats;
    for (int i = 0; i < kClipFloats; ++i) v1 += (clip[i] - m1) * (clip[i] - m1);
    double s1 = std::max(std::sqrt(v1 / kClipFloats), 1e-6);
    float scale = (float)(s0 / s1), shift = (float)(m0 - m1 * s0 / s1);
    for (int i = 0; i < kClipFloats; ++i) clip[i] = clip[i] * scale + shift;
}

void mixup_batch(float *x, float *y, int batch, int dim_x, int dim_y, double alpha, Rng &rng) {
    if (alpha <= 0 || batch < 2) return;
    std::vector<int> perm(batch);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = batch - 1; i > 0; --i) std::swap(perm[i], perm[(int)rng.below(uint32_t(i) + 1)]);
    std::vector<float> x0(x, x + size_t(batch) * dim_x);
    std::vector<float> y0(y, y + size_t(batch) * dim_y);
    for (int b = 0; b < batch; ++b) {
        float lam = (float)beta_sample(rng, alpha, alpha);
        const float *xa = &x0[size_t(b) * dim_x], *xb = &x0[size_t(perm[b]) * dim_x];
        for (int i = 0; i < dim_x; ++i) x[size_t(b) * dim_x + i] = lam * xa[i] + (1 - lam) * xb[i];
        const float *ya = &y0[size_t(b) * dim_y], *yb = &y0[size_t(perm[b]) * dim_y];
        for (int i = 0; i < dim_y; ++i) y[size_t(b) * dim_y + i] = lam * ya[i] + (1 - lam) * yb[i];
    }
}

namespace {

double validation_accuracy(const Classifier &net, const gen::Dataset &ds) {
    const int n = (int)ds.clips.size();
    const int bs = 256;
    std::vector<float> x(size_t(bs) * kClipFloats), logits(size_t(bs) * kC);
    int correct = 0;
    for (int s = 0; s < n; s += bs) {
        int m = std::min(bs, n - s);
        for (int b = 0; b < m; ++b) clip_to_float(ds.clips[s + b], &x[size_t(b) * kClipFloats]);
        net.forward(x.data(), m, logits.data());
        for (int b = 0; b < m; ++b) {
            const float *lg = &logits[size_t(b) * kC];
            int arg = int(std::max_element(lg, lg + kC) - lg);
            if (ds.clips[s + b].has(arg)) ++correct;
        }
    }
    return double(correct) / std::max(1, n);
}

std::string ckpt_meta(const char *kind, double val_acc, int epoch, bool multilabel, int members) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s val=%.4f epoch=%d multilabel=%d members=%d", kind,
                  val_acc, epoch, multilabel ? 1 : 0, members);
    return buf;
}

}  // namespace

TrainResult train_classifier(const gen::Dataset &train, const gen::Dataset &val,
                             const TrainConfig &cfg, const nn::Checkpoint *warm) {
    if (train.clips.empty() || val.clips.empty())
        throw ConfigError("classifier: train and val sets must be non-empty");
    if (cfg.batch < 1 || cfg.epochs < 1) throw ConfigError("classifier: bad batch/epochs");

    TrainResult res;
    Classifier net;
    net.build(cfg.net);
    Rng init_rng(substream(cfg.seed, 0));
    net.init(init_rng);
    if (warm) net.store().load(*warm);

    const int n = (int)train.clips.size();
    const int B = std::min(cfg.batch, n);
    const long steps_per_epoch = (n + B - 1) / B;
    const long total = cfg.epochs * steps_per_epoch;
    const long warmup = std::max(1l, total / 20);

    nn::AdamwConfig acfg;
    acfg.weight_decay = cfg.weight_decay;
    // head params sit at the store tail, so freezing the trunk is a slice:
    // neither gradients nor weight decay may touch anything below the head
    const size_t upd = cfg.head_only ? net.head_offset() : 0;
    nn::OptState opt(net.store().size() - upd);
    std::vector<float> grads(net.store().size());
    std::vector<float> x(size_t(B) * kClipFloats), y(size_t(B) * kC);
    std::vector<float> logits(size_t(B) * kC), dlog(size_t(B) * kC);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(substream(cfg.seed, 1));
    ClsCtx ctx;
    long gstep = 0;

    auto flush_log = [&] {
        if (cfg.log_csv.empty()) return;
        std::FILE *f = std::fopen(cfg.log_csv.c_str(), "w");
        if (!f) throw IoError("cannot write " + cfg.log_csv);
        std::fputs("epoch,lr,train_loss,val_acc\n", f);
        for (const EpochLog &e : res.log)
            std::fprintf(f, "%d,%.8g,%.8g,%.6g\n", e.epoch, e.lr, e.train_loss, e.val_acc);
        std::fclose(f);
    };

    for (int ep = 0; ep < cfg.epochs; ++ep) {
        for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[(int)rng.below(uint32_t(i) + 1)]);
        double loss_sum = 0, lr_last = 0;
        long batches = 0;
        for (int s = 0; s < n; s += B) {
            int m = std::min(B, n - s);
            for (int b = 0; b < m; ++b) {
                const gen::LabeledClip &cl = train.clips[idx[s + b]];
                clip_to_float(cl, &x[size_t(b) * kClipFloats]);
                random_conv_augment(&x[size_t(b) * kClipFloats], rng, cfg.randconv_p);
                for (int k = 0; k < kC; ++k) y[size_t(b) * kC + k] = cl.has(k) ? 1.f : 0.f;
            }
            mixup_batch(x.data(), y.data(), m, kClipFloats, kC, cfg.mixup_alpha, rng);

            net.forward(x.data(), m, logits.data(), &ctx);
            double loss = 0;
            for (int b = 0; b < m; ++b) {
                const float *lg = &logits[size_t(b) * kC];
                const float *tg = &y[size_t(b) * kC];
                float *dg = &dlog[size_t(b) * kC];
                if (cfg.net.multilabel) {
                    loss += nn::sigmoid_bce(lg, tg, kC, dg) / kC;
                    for (int k = 0; k < kC; ++k) dg[k] /= float(kC) * m;
                } else {
                    loss += nn::softmax_cross_entropy(lg, tg, kC, dg);
                    for (int k = 0; k < kC; ++k) dg[k] /= float(m);
                }
            }
            loss /= m;
            if (!std::isfinite(loss)) {
                res.diverged = true;
                flush_log();
                return res;
            }
            std::fill(grads.begin(), grads.end(), 0.f);
            net.backward(ctx, dlog.data(), grads.data());
            double lr = nn::lr_at(gstep, total, warmup, cfg.lr);
            if (!nn::adamw_step(net.store().data() + upd, grads.data() + upd,
                                grads.size() - upd, opt, lr, acfg)) {
                res.diverged = true;
                flush_log();
                return res;
            }
            net.store().bump_generation();
            ++gstep;
            loss_sum += loss;
            ++batches;
            lr_last = lr;
        }
        double vacc = validation_accuracy(net, val);
        res.log.push_back({ep, lr_last, loss_sum / batches, vacc});
        if (vacc > res.best_val_acc || res.best_epoch < 0) {
            res.best_val_acc = vacc;
            res.best_epoch = ep;
            res.best = net.store().to_checkpoint(
                ckpt_meta("skill-classifier", vacc, ep, cfg.net.multilabel, 1));
        }
    }
    flush_log();
    return res;
}

EvalResult eval_classifier(const Classifier &net, const gen::Dataset &ds) {
    EvalResult r;
    const int n = (int)ds.clips.size();
    const int bs = 256;
    std::vector<float> x(size_t(bs) * kClipFloats), logits(size_t(bs) * kC);
    int correct = 0;
    for (int s = 0; s < n; s += bs) {
        int m = std::min(bs, n - s);
        for (int b = 0; b < m; ++b) clip_to_float(ds.clips[s + b], &x[size_t(b) * kClipFloats]);
        net.forward(x.data(), m, logits.data());
        for (int b = 0; b < m; ++b) {
            const float *lg = &logits[size_t(b) * kC];
            int arg = int(std::max_element(lg, lg + kC) - lg);
            int truth = __builtin_ctz(ds.clips[s + b].labels);
            r.confusion[truth][arg]++;
            if (ds.clips[s + b].has(arg)) ++correct;
        }
    }
    r.count = n;
    r.top1 = double(correct) / std::max(1, n);
    return r;
}

nn::Checkpoint make_soup(const gen::Dataset &train, const gen::Dataset &val,
                         const SoupConfig &cfg, double *soup_val_acc) {
    if (cfg.members < 2) throw ConfigError("soup: need at least 2 members");
    if (cfg.member_wd.empty() || cfg.member_epochs.empty())
        throw ConfigError("soup: empty hyperparameter grid");

    TrainConfig warm_cfg = cfg.base;
    warm_cfg.head_only = true;
    warm_cfg.epochs = cfg.warm_epochs;
    warm_cfg.log_csv.clear();
    TrainResult warm = train_classifier(train, val, warm_cfg);
    if (warm.diverged) throw ConfigError("soup: warm start diverged");

    std::vector<nn::Checkpoint> members;
    for (int i = 0; i < cfg.members; ++i) {
        TrainConfig m = cfg.base;
        m.head_only = false;
        m.weight_decay = cfg.member_wd[i % cfg.member_wd.size()];
        m.epochs = cfg.member_epochs[(i / cfg.member_wd.size()) % cfg.member_epochs.size()];
        m.seed = substream(cfg.base.seed, 100 + uint64_t(i));
        m.log_csv.clear();
        TrainResult r = train_classifier(train, val, m, &warm.best);
        if (r.diverged) throw ConfigError("soup: member fine-tune diverged");
        members.push_back(std::move(r.best));
    }
    std::vector<const nn::Checkpoint *> ptrs;
    for (const nn::Checkpoint &m : members) ptrs.push_back(&m);
    nn::Checkpoint soup = nn::average_checkpoints(ptrs);

    Classifier net;
    net.build(cfg.base.net);
    net.store().load(soup);
    double vacc = validation_accuracy(net, val);
    if (soup_val_acc) *soup_val_acc = vacc;
    soup.meta = ckpt_meta("skill-classifier-soup", vacc, -1, cfg.base.net.multilabel,
                          cfg.members);
    return soup;
}

}  // namespace rlwav::skill
