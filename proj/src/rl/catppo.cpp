#include "rlwav/rl/catppo.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>

#include "rlwav/gen/clipgen.hpp"

namespace rlwav::rl {

namespace {

using CV = sim::ConstraintValues;
constexpr int kJ = sim::kJoints;
constexpr int kO = sim::kObsDim;
constexpr double kLog2Pi = 1.8378770664093453;

// (S v)[j] = v[kSwap[j]] for joint-indexed vectors; the permutation is its
// own inverse.
constexpr int kSwap[kJ] = {2, 3, 0, 1, 6, 7, 4, 5};

double grad_norm(const float *g, size_t n) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) s += double(g[i]) * g[i];
    return std::sqrt(s);
}

void clip_gradient(float *g, size_t n, double max_norm, double norm) {
    if (norm <= max_norm || norm <= 0) return;
    float sc = float(max_norm / norm);
    for (size_t i = 0; i < n; ++i) g[i] *= sc;
}

}  // namespace

// ---------------------------------------------------------------------------
// networks

template <typename T>
void GaussPolicyT<T>::build(const std::vector<int> &hidden, const sim::RobotConfig &rc) {
    store = nn::ParamStore<T>();
    nn::MlpSpec ms;
    ms.in = kO;
    ms.hidden = hidden;
    ms.out = kJ;
    ms.act = nn::Act::elu;
    net.build(store, "pi.", ms);
    logstd_off = store.add("pi.logstd", {uint32_t(kJ)});
    for (int j = 0; j < kJ; ++j) bias[j] = T(rc.q_default[j]);
}

template <typename T>
void GaussPolicyT<T>::init(Rng &rng, double sigma0) {
    net.init(store, rng);
    T *ls = store.data() + logstd_off;
    for (int j = 0; j < kJ; ++j) ls[j] = T(std::log(sigma0));
    store.bump_generation();
}

template <typename T>
void GaussPolicyT<T>::mean(const T *obs, int n, T *mu, nn::MlpCtx<T> *ctx) const {
    net.forward(store, obs, n, mu, ctx);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < kJ; ++j) {
            T &m = mu[size_t(i) * kJ + j];
            m = bias[j] + scale * m;
        }
}

template <typename T>
void GaussPolicyT<T>::backward_mean(nn::MlpCtx<T> &ctx, const T *d_mu, T *grads) const {
    std::vector<T> dy(size_t(ctx.rows) * kJ);
    for (size_t i = 0; i < dy.size(); ++i) dy[i] = scale * d_mu[i];
    net.backward(store, ctx, dy.data(), grads);
}

template <typename T>
void GaussPolicyT<T>::logstds(T *ls) const {
    const T *p = store.data() + logstd_off;
    for (int j = 0; j < kJ; ++j) ls[j] = std::min(std::max(p[j], logstd_lo), logstd_hi);
}

template <typename T>
void GaussPolicyT<T>::stds(T *sd) const {
    logstds(sd);
    for (int j = 0; j < kJ; ++j) sd[j] = T(std::exp(double(sd[j])));
}

template <typename T>
void GaussPolicyT<T>::clamp_logstd() {
    T *p = store.data() + logstd_off;
    for (int j = 0; j < kJ; ++j) p[j] = std::min(std::max(p[j], logstd_lo), logstd_hi);
}

template struct GaussPolicyT<float>;
template struct GaussPolicyT<double>;

template <typename T>
void ValueNetT<T>::build(const std::vector<int> &hidden) {
    store = nn::ParamStore<T>();
    nn::MlpSpec ms;
    ms.in = kO;
    ms.hidden = hidden;
    ms.out = 1;
    ms.act = nn::Act::elu;
    net.build(store, "v.", ms);
}

template <typename T>
void ValueNetT<T>::init(Rng &rng) {
    net.init(store, rng);
    store.bump_generation();
}

template <typename T>
void ValueNetT<T>::values(const T *obs, int n, T *v, nn::MlpCtx<T> *ctx) const {
    net.forward(store, obs, n, v, ctx);
}

template struct ValueNetT<float>;
template struct ValueNetT<double>;

double gaussian_logp(const float *mu, const float *sd, const float *ls, int n, const float *a) {
    double lp = 0;
    for (int j = 0; j < n; ++j) {
        double z = (double(a[j]) - double(mu[j])) / double(sd[j]);
        lp += -0.5 * z * z - double(ls[j]) - 0.5 * kLog2Pi;
    }
    return lp;
}

double sample_from_mean(const float *mu, const float *sd, const float *ls,
                        const sim::RobotConfig &rc, Rng &rng,
                        std::array<double, sim::kJoints> &exec, float *raw_out) {
    float raw[kJ];
    for (int j = 0; j < kJ; ++j) raw[j] = float(double(mu[j]) + double(sd[j]) * rng.normal());
    // log-prob of the stored (rounded) sample so later recomputations agree
    double lp = gaussian_logp(mu, sd, ls, kJ, raw);
    for (int j = 0; j < kJ; ++j) exec[j] = clampd(double(raw[j]), rc.q_min[j], rc.q_max[j]);
    if (raw_out) std::memcpy(raw_out, raw, sizeof raw);
    return lp;
}

double sample_action(const GaussPolicy &pol, const float *obs, const sim::RobotConfig &rc,
                     Rng &rng, std::array<double, sim::kJoints> &exec,
                     float *raw_out, float *mu_out) {
    float mu[kJ], sd[kJ], ls[kJ];
    pol.mean(obs, 1, mu);
    pol.stds(sd);
    pol.logstds(ls);
    if (mu_out) std::memcpy(mu_out, mu, sizeof mu);
    return sample_from_mean(mu, sd, ls, rc, rng, exec, raw_out);
}

// ---------------------------------------------------------------------------
// constraints as terminations

double cat_termination(const sim::ConstraintValues &cv, const CatState &cat, const CatConfig &cfg) {
    double delta = 0;
    for (int i = 0; i < CV::kCount; ++i) {
        double v = cv.v[i];
        if (v <= 0) continue;
        if (CV::is_hard(i)) return 1.0;
        bool air = i >= CV::kAirTime && i < CV::kAirTime + sim::kFeet;
        if (air && !cfg.use_airtime) continue;
        if (i == CV::kPitch && !cfg.use_pitch) continue;
        double cap = air ? cfg.delta_air : cfg.delta_soft;
        double d = cap * clampd(v / std::max(cat.vhat[i], 1e-12), 0.0, 1.0);
        delta = std::max(delta, d);
    }
    return delta;
}

void cat_update(CatState &cat, const std::array<double, CV::kCount> &batch_max,
                const CatConfig &cfg) {
    for (int i = CV::kHardCount; i < CV::kCount; ++i)
        if (batch_max[i] > 0)
            cat.vhat[i] = cfg.polyak * cat.vhat[i] + (1.0 - cfg.polyak) * batch_max[i];
}

namespace {
constexpr const char *kGroupNames[kConstraintGroups] = {
    "knee", "base", "foot_force", "air_time",  "joint_max", "joint_min",
    "vel",  "acc",  "torque",     "act_rate", "pitch"};
}

const char *constraint_group_name(int g) { return kGroupNames[g]; }

int constraint_group_of(int i) {
    if (i == CV::kKnee) return 0;
    if (i == CV::kBase) return 1;
    if (i < CV::kAirTime) return 2;
    if (i < CV::kJointMax) return 3;
    if (i < CV::kJointMin) return 4;
    if (i < CV::kVel) return 5;
    if (i < CV::kAcc) return 6;
    if (i < CV::kTorque) return 7;
    if (i < CV::kActRate) return 8;
    if (i < CV::kPitch) return 9;
    return 10;
}

// ---------------------------------------------------------------------------
// reward normalization

double RewardNorm::normalize(double raw, int skill) const {
    double a = 1.0 / (mx[skill] - mn[skill] + 1e-3);
    return clampd(a * (raw - mn[skill]), 0.0, 1.0);
}

void RewardNorm::update(const std::array<double, sim::kSkills> &bmax,
                        const std::array<double, sim::kSkills> &bmin,
                        const std::array<int, sim::kSkills> &count) {
    for (int s = 0; s < sim::kSkills; ++s) {
        if (count[s] <= 0) continue;
        mx[s] = polyak * mx[s] + (1.0 - polyak) * bmax[s];
        mn[s] = polyak * mn[s] + (1.0 - polyak) * bmin[s];
    }
}

// ---------------------------------------------------------------------------
// rollouts

void EnvPool::init(int n, const sim::RobotConfig &rc, int embed_dim, uint64_t seed) {
    envs.assign(size_t(n), Env{});
    for (int e = 0; e < n; ++e) {
        Env &env = envs[e];
        env.rng = Rng(substream(seed, uint64_t(e)));
        env.skill = e % sim::kSkills;
        env.st = sim::reset(rc, env.rng);
        env.emb.assign(size_t(cam::kClipLen) * embed_dim, 0.f);
    }
}

void Rollout::resize(int T_, int N_) {
    T = T_;
    N = N_;
    size_t n = size_t(T) * N;
    obs.assign(n * kO, 0.f);
    act.assign(n * kJ, 0.f);
    logp.assign(n, 0.f);
    val.assign(n, 0.f);
    rew.assign(n, 0.f);
    raw.assign(n, 0.f);
    surv.assign(n, 0.f);
    done.assign(n, 0);
    boot.assign(n, 0.f);
    valid.assign(n, 1);
    last_val.assign(size_t(N), 0.f);
    skill.assign(size_t(N), 0);
    adv.clear();
    ret.clear();
}

CollectStats collect_rollouts(EnvPool &pool, const GaussPolicy &pol, const ValueNet &vnet,
                              const skill::Classifier &clf, const sim::RobotConfig &rc,
                              const RolloutConfig &cfg, CatState &cat, const CatConfig &catcfg,
                              RewardNorm &norm, Rollout &out, const FrameHook *frame_hook) {
    const int T = cfg.horizon, N = int(pool.envs.size()), K = cfg.render_every;
    const int d = clf.spec().embed_dim;
    constexpr int kNpx = cam::kFrameW * cam::kFrameH;
    out.resize(T, N);
    CollectStats st;

    std::array<double, CV::kCount> batch_max{};
    std::array<long, kConstraintGroups> viol_count{};
    std::array<double, sim::kSkills> bmax, bmin;
    bmax.fill(0.0);
    bmin.fill(1.0);
    long hard_count = 0;

    std::vector<float> mu(size_t(N) * kJ);
    std::vector<double> delta(static_cast<size_t>(N));
    float sd[kJ], ls[kJ];
    pol.stds(sd);
    pol.logstds(ls);

    std::vector<float> frame_px, emb_new, emb_clip, probs, boot_obs;
    std::vector<int> frame_env, clip_env;
    std::vector<size_t> boot_at;

    auto reset_env = [&](Env &env) {
        env.st = sim::reset(rc, env.rng);
        env.step = 0;
        env.frames = 0;
    };

    for (int e = 0; e < N; ++e) out.skill[e] = pool.envs[e].skill;

    for (int t = 0; t < T; ++t) {
        float *obs_t = &out.obs[out.idx(t, 0) * kO];
        for (int e = 0; e < N; ++e)
            sim::observe(pool.envs[e].st, pool.envs[e].skill, obs_t + size_t(e) * kO);
        pol.mean(obs_t, N, mu.data());

        frame_px.clear();
        frame_env.clear();
        for (int e = 0; e < N; ++e) {
            Env &env = pool.envs[e];
            size_t i = out.idx(t, e);
            std::array<double, kJ> exec;
            out.logp[i] = float(sample_from_mean(&mu[size_t(e) * kJ], sd, ls, rc, env.rng, exec,
                                                 &out.act[i * kJ]));
            sim::ConstraintValues cv = sim::step(env.st, exec, rc);
            ++env.step;
            if (env.st.diverged) {
                delta[e] = 1.0;
            } else {
                bool hit[kConstraintGroups] = {};
                for (int c = 0; c < CV::kCount; ++c)
                    if (cv.v[c] > 0) {
                        hit[constraint_group_of(c)] = true;
                        batch_max[c] = std::max(batch_max[c], cv.v[c]);
                    }
                for (int g = 0; g < kConstraintGroups; ++g) viol_count[g] += hit[g];
                delta[e] = cat_termination(cv, cat, catcfg);
                if (env.step % K == 0) {
                    cam::Frame f = cam::render_frame(env.st, rc, cfg.cam);
                    if (frame_hook) (*frame_hook)(f);
                    frame_env.push_back(e);
                    frame_px.insert(frame_px.end(), f.px.begin(), f.px.end());
                }
            }
            st.mean_delta += delta[e];
        }

        // encode the new frames once, rescore envs whose clip window is full
        if (!frame_env.empty()) {
            emb_new.resize(frame_env.size() * size_t(d));
            clf.frame_embed(frame_px.data(), int(frame_env.size()), emb_new.data());
            emb_clip.clear();
            clip_env.clear();
            for (size_t k = 0; k < frame_env.size(); ++k) {
                Env &env = pool.envs[size_t(frame_env[k])];
                int slot = env.frames % cam::kClipLen;
                std::memcpy(&env.emb[size_t(slot) * d], &emb_new[k * size_t(d)],
                            sizeof(float) * size_t(d));
                ++env.frames;
                if (env.frames >= cam::kClipLen) {
                    clip_env.push_back(frame_env[k]);
                    size_t off = emb_clip.size();
                    emb_clip.resize(off + size_t(cam::kClipLen) * d);
                    for (int f = 0; f < cam::kClipLen; ++f) {
                        int src = (env.frames - cam::kClipLen + f) % cam::kClipLen;
                        std::memcpy(&emb_clip[off + size_t(f) * d], &env.emb[size_t(src) * d],
                                    sizeof(float) * size_t(d));
                    }
                }
            }
            if (!clip_env.empty()) {
                probs.resize(clip_env.size() * size_t(sim::kSkills));
                clf.head_scores(emb_clip.data(), int(clip_env.size()), probs.data());
                for (size_t k = 0; k < clip_env.size(); ++k) {
                    int e = clip_env[k];
                    int sk = pool.envs[size_t(e)].skill;
                    size_t i = out.idx(t, e);
                    double r = double(probs[k * sim::kSkills + sk]);
                    out.raw[i] = float(r);
                    out.rew[i] = float(norm.normalize(r, sk));
                    if (st.score_count[sk] == 0) {
                        bmax[sk] = bmin[sk] = r;
                    } else {
                        bmax[sk] = std::max(bmax[sk], r);
                        bmin[sk] = std::min(bmin[sk], r);
                    }
                    st.raw_mean[sk] += r;
                    st.reward_mean[sk] += out.rew[i];
                    ++st.score_count[sk];
                    ++st.clips_scored;
                }
            }
        }

        for (int e = 0; e < N; ++e) {
            Env &env = pool.envs[e];
            size_t i = out.idx(t, e);
            if (env.st.diverged) {
                out.valid[i] = 0;
                out.done[i] = 1;
                out.surv[i] = 0;
                ++st.diverged;
                ++st.resets;
                reset_env(env);
            } else if (delta[e] >= 1.0) {
                out.done[i] = 1;
                out.surv[i] = 0;
                ++hard_count;
                ++st.resets;
                reset_env(env);
            } else if (env.step >= cfg.episode_len) {
                out.done[i] = 1;
                out.surv[i] = float(1.0 - delta[e]);
                boot_at.push_back(i);
                size_t off = boot_obs.size();
                boot_obs.resize(off + kO);
                sim::observe(env.st, env.skill, &boot_obs[off]);
                ++st.timeouts;
                ++st.resets;
                reset_env(env);
            } else {
                out.done[i] = 0;
                out.surv[i] = float(1.0 - delta[e]);
            }
        }
    }

    // batched value passes: all stored observations, timeout bootstraps, and
    // the post-rollout states
    vnet.values(out.obs.data(), T * N, out.val.data());
    if (!boot_at.empty()) {
        std::vector<float> bv(boot_at.size());
        vnet.values(boot_obs.data(), int(boot_at.size()), bv.data());
        for (size_t k = 0; k < boot_at.size(); ++k) out.boot[boot_at[k]] = bv[k];
    }
    std::vector<float> fin_obs(size_t(N) * kO);
    for (int e = 0; e < N; ++e)
        sim::observe(pool.envs[e].st, pool.envs[e].skill, &fin_obs[size_t(e) * kO]);
    vnet.values(fin_obs.data(), N, out.last_val.data());

    cat_update(cat, batch_max, catcfg);
    norm.update(bmax, bmin, st.score_count);

    double samples = double(T) * N;
    st.mean_delta /= samples;
    st.hard_rate = double(hard_count) / samples;
    for (int g = 0; g < kConstraintGroups; ++g) st.violation_rate[g] = viol_count[g] / samples;
    for (int s = 0; s < sim::kSkills; ++s)
        if (st.score_count[s] > 0) {
            st.raw_mean[s] /= st.score_count[s];
            st.reward_mean[s] /= st.score_count[s];
        }
    return st;
}

// ---------------------------------------------------------------------------
// GAE

void compute_gae(Rollout &ro, const GaeConfig &cfg) {
    const int T = ro.T, N = ro.N;
    ro.adv.assign(size_t(T) * N, 0.0);
    ro.ret.assign(size_t(T) * N, 0.0);
    for (int e = 0; e < N; ++e) {
        double a_next = 0;
        for (int t = T - 1; t >= 0; --t) {
            size_t i = ro.idx(t, e);
            double s = ro.surv[i];
            double nv = ro.done[i] ? double(ro.boot[i])
                                   : (t == T - 1 ? double(ro.last_val[e])
                                                 : double(ro.val[ro.idx(t + 1, e)]));
            double td = double(ro.rew[i]) + cfg.gamma * s * nv - double(ro.val[i]);
            double a = td + cfg.gamma * cfg.lam * s * (ro.done[i] ? 0.0 : a_next);
            ro.adv[i] = a;
            ro.ret[i] = a + double(ro.val[i]);
            a_next = a;
        }
    }
    if (cfg.normalize) {
        double sum = 0;
        size_t n = 0;
        for (size_t i = 0; i < ro.adv.size(); ++i)
            if (ro.valid[i]) {
                sum += ro.adv[i];
                ++n;
            }
        double mean = n ? sum / double(n) : 0.0;
        double ss = 0;
        for (size_t i = 0; i < ro.adv.size(); ++i)
            if (ro.valid[i]) ss += (ro.adv[i] - mean) * (ro.adv[i] - mean);
        double sdv = n ? std::sqrt(ss / double(n)) : 1.0;
        for (size_t i = 0; i < ro.adv.size(); ++i)
            ro.adv[i] = ro.valid[i] ? (ro.adv[i] - mean) / (sdv + 1e-8) : 0.0;
    }
}

// ---------------------------------------------------------------------------
// symmetry loss

template <typename T>
double symmetry_loss(const GaussPolicyT<T> &pol, const T *obs, int n, T *grads) {
    std::vector<T> sobs(size_t(n) * kO), mu1(size_t(n) * kJ), mu2(size_t(n) * kJ);
    for (int i = 0; i < n; ++i) sim::sym_obs(obs + size_t(i) * kO, &sobs[size_t(i) * kO]);
    nn::MlpCtx<T> c1, c2;
    pol.mean(obs, n, mu1.data(), grads ? &c1 : nullptr);
    pol.mean(sobs.data(), n, mu2.data(), grads ? &c2 : nullptr);

    double loss = 0;
    std::vector<T> d1, d2;
    if (grads) {
        d1.assign(size_t(n) * kJ, T(0));
        d2.assign(size_t(n) * kJ, T(0));
    }
    for (int i = 0; i < n; ++i) {
        const T *m1 = &mu1[size_t(i) * kJ];
        const T *m2 = &mu2[size_t(i) * kJ];
        for (int j = 0; j < kJ; ++j) {
            double e = double(m1[j]) - double(m2[kSwap[j]]);
            loss += e * e;
            if (grads) {
                d1[size_t(i) * kJ + j] += T(2.0 * e / n);
                d2[size_t(i) * kJ + kSwap[j]] -= T(2.0 * e / n);
            }
        }
    }
    if (grads) {
        pol.backward_mean(c1, d1.data(), grads);
        pol.backward_mean(c2, d2.data(), grads);
    }
    return loss / n;
}

template double symmetry_loss(const GaussPolicyT<float> &, const float *, int, float *);
template double symmetry_loss(const GaussPolicyT<double> &, const double *, int, double *);

// ---------------------------------------------------------------------------
// PPO update

PpoStats ppo_update(GaussPolicy &pol, ValueNet &vnet, const Rollout &ro, const PpoConfig &cfg,
                    nn::OptState &opt_pi, nn::OptState &opt_v, Rng &rng) {
    PpoStats st;
    std::vector<uint32_t> order;
    order.reserve(size_t(ro.T) * ro.N);
    for (size_t i = 0; i < size_t(ro.T) * ro.N; ++i)
        if (ro.valid[i]) order.push_back(uint32_t(i));
    if (order.empty()) return st;

    const int M = int(order.size());
    const int mb = std::min(cfg.minibatch, M);
    const nn::AdamwConfig acfg;  // decay-free Adam for RL

    std::vector<float> gp(pol.store.size()), gv(vnet.store.size());
    std::vector<float> obs_mb(size_t(mb) * kO), act_mb(size_t(mb) * kJ);
    std::vector<float> lpo(mb), mu(size_t(mb) * kJ), dmu(size_t(mb) * kJ);
    std::vector<float> sobs(size_t(mb) * kO), mu2(size_t(mb) * kJ), d2(size_t(mb) * kJ);
    std::vector<float> v(mb), dv(mb);
    std::vector<double> adv(mb), ret(mb);
    nn::MlpCtx<float> ctx1, ctx2, ctxv;  // tapes reused across minibatches

    double sum_pi = 0, sum_v = 0, sum_h = 0, sum_sym = 0;
    long processed = 0, minibatches = 0;
    double ep_kl = 0;

    for (int ep = 0; ep < cfg.epochs; ++ep) {
        for (int i = M - 1; i > 0; --i) {
            int j = int(rng.below(uint64_t(i) + 1));
            std::swap(order[i], order[size_t(j)]);
        }
        double kl_sum = 0;
        long kl_n = 0;
        for (int start = 0; start < M; start += mb) {
            const int m = std::min(mb, M - start);
            for (int k = 0; k < m; ++k) {
                size_t idx = order[size_t(start) + k];
                std::memcpy(&obs_mb[size_t(k) * kO], &ro.obs[idx * kO], sizeof(float) * kO);
                std::memcpy(&act_mb[size_t(k) * kJ], &ro.act[idx * kJ], sizeof(float) * kJ);
                lpo[k] = ro.logp[idx];
                adv[k] = ro.adv[idx];
                ret[k] = ro.ret[idx];
            }
            float sd[kJ], ls[kJ];
            pol.stds(sd);
            pol.logstds(ls);

            pol.mean(obs_mb.data(), m, mu.data(), &ctx1);
            std::fill(gp.begin(), gp.end(), 0.f);
            std::fill(gv.begin(), gv.end(), 0.f);

            double dls[kJ] = {};
            double pi_loss = 0;
            for (int k = 0; k < m; ++k) {
                const float *a = &act_mb[size_t(k) * kJ];
                const float *mk = &mu[size_t(k) * kJ];
                double lpn = gaussian_logp(mk, sd, ls, kJ, a);
                double ratio = std::exp(lpn - double(lpo[k]));
                double A = adv[k];
                pi_loss -= surrogate_term(ratio, A, cfg.clip);
                kl_sum += double(lpo[k]) - lpn;
                ++kl_n;
                // gradient flows through the ratio only while the clip is slack
                bool active = A >= 0 ? ratio <= 1.0 + cfg.clip : ratio >= 1.0 - cfg.clip;
                double g = active ? -A * ratio / m : 0.0;
                for (int j = 0; j < kJ; ++j) {
                    double z = (double(a[j]) - double(mk[j])) / double(sd[j]);
                    dmu[size_t(k) * kJ + j] = float(g * z / double(sd[j]));
                    dls[j] += g * (z * z - 1.0);
                }
            }
            pi_loss /= m;

            // entropy bonus (global sigma: identical for every sample)
            double H = kJ * 0.5 * (1.0 + kLog2Pi);
            for (int j = 0; j < kJ; ++j) {
                H += double(ls[j]);
                dls[j] -= cfg.ent_coef;
            }

            double sym_l = 0;
            if (cfg.sym_coef > 0) {
                for (int k = 0; k < m; ++k)
                    sim::sym_obs(&obs_mb[size_t(k) * kO], &sobs[size_t(k) * kO]);
                pol.mean(sobs.data(), m, mu2.data(), &ctx2);
                std::fill(d2.begin(), d2.begin() + size_t(m) * kJ, 0.f);
                for (int k = 0; k < m; ++k)
                    for (int j = 0; j < kJ; ++j) {
                        double e = double(mu[size_t(k) * kJ + j]) -
                                   double(mu2[size_t(k) * kJ + kSwap[j]]);
                        sym_l += e * e;
                        float gpart = float(cfg.sym_coef * 2.0 * e / m);
                        dmu[size_t(k) * kJ + j] += gpart;
                        d2[size_t(k) * kJ + kSwap[j]] -= gpart;
                    }
                sym_l /= m;
                pol.backward_mean(ctx2, d2.data(), gp.data());
            }
            pol.backward_mean(ctx1, dmu.data(), gp.data());
            for (int j = 0; j < kJ; ++j) gp[pol.logstd_off + j] += float(dls[j]);

            vnet.values(obs_mb.data(), m, v.data(), &ctxv);
            double v_loss = 0;
            for (int k = 0; k < m; ++k) {
                double err = double(v[k]) - ret[k];
                v_loss += err * err;
                dv[k] = float(cfg.v_coef * 2.0 * err / m);
            }
            v_loss = cfg.v_coef * v_loss / m;
            vnet.net.backward(vnet.store, ctxv, dv.data(), gv.data());

            double npi = grad_norm(gp.data(), gp.size());
            double nv = grad_norm(gv.data(), gv.size());
            st.grad_norm_pi += npi;
            st.grad_norm_v += nv;
            clip_gradient(gp.data(), gp.size(), cfg.grad_clip, npi);
            clip_gradient(gv.data(), gv.size(), cfg.grad_clip, nv);
            bool ok = nn::adamw_step(pol.store.data(), gp.data(), gp.size(), opt_pi, cfg.lr, acfg);
            pol.clamp_logstd();
            pol.store.bump_generation();
            ok = nn::adamw_step(vnet.store.data(), gv.data(), gv.size(), opt_v, cfg.lr, acfg) && ok;
            vnet.store.bump_generation();

            sum_pi += pi_loss * m;
            sum_v += v_loss * m;
            sum_h += H * m;
            sum_sym += sym_l * m;
            processed += m;
            ++minibatches;
            if (!ok) {
                st.diverged = true;
                break;
            }
        }
        ++st.epochs_run;
        if (st.diverged) break;
        ep_kl = kl_n ? kl_sum / double(kl_n) : 0.0;
        if (ep_kl > cfg.kl_stop) {
            st.early_stopped = true;
            break;
        }
    }

    st.kl = ep_kl;
    if (processed) {
        st.pi_loss = sum_pi / double(processed);
        st.v_loss = sum_v / double(processed);
        st.entropy = sum_h / double(processed);
        st.sym_loss = sum_sym / double(processed);
    }
    if (minibatches) {
        st.grad_norm_pi /= double(minibatches);
        st.grad_norm_v /= double(minibatches);
    }
    return st;
}

// ---------------------------------------------------------------------------
// training driver

TrainPolicyResult train_policy(const skill::Classifier &clf, const sim::RobotConfig &rc,
                               const TrainPolicyConfig &cfg) {
    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    GaussPolicy pol;
    pol.build(cfg.pol_hidden, rc);
    ValueNet vnet;
    vnet.build(cfg.val_hidden);
    Rng init_rng(substream(cfg.seed, 0));
    pol.init(init_rng, cfg.sigma0);
    vnet.init(init_rng);

    EnvPool pool;
    pool.init(cfg.rollout.n_envs, rc, clf.spec().embed_dim, substream(cfg.seed, 1));
    Rng ppo_rng(substream(cfg.seed, 2));
    nn::OptState opt_pi(pol.store.size()), opt_v(vnet.store.size());
    CatState cat;
    RewardNorm norm;
    Rollout ro;

    FILE *csv = nullptr;
    if (!cfg.log_csv.empty()) {
        csv = std::fopen(cfg.log_csv.c_str(), "w");
        if (!csv) throw IoError("cannot open training log: " + cfg.log_csv);
        std::fprintf(csv, "iter");
        for (int s = 0; s < sim::kSkills; ++s) std::fprintf(csv, ",raw_%s", gen::kSkillNames[s]);
        for (int s = 0; s < sim::kSkills; ++s) std::fprintf(csv, ",rew_%s", gen::kSkillNames[s]);
        std::fprintf(csv, ",delta");
        for (int g = 0; g < kConstraintGroups; ++g)
            std::fprintf(csv, ",viol_%s", constraint_group_name(g));
        std::fprintf(csv, ",pi_loss,v_loss,entropy,sym_loss,kl,epochs,resets,seconds\n");
    }

    TrainPolicyResult res;
    for (int it = 0; it < cfg.iterations; ++it) {
        CollectStats cs =
            collect_rollouts(pool, pol, vnet, clf, rc, cfg.rollout, cat, cfg.cat, norm, ro);
        compute_gae(ro, cfg.gae);
        PpoStats ps = ppo_update(pol, vnet, ro, cfg.ppo, opt_pi, opt_v, ppo_rng);
        res.last_collect = cs;
        res.last_ppo = ps;
        res.iterations = it + 1;
        if (csv) {
            std::fprintf(csv, "%d", it);
            for (int s = 0; s < sim::kSkills; ++s) std::fprintf(csv, ",%.6f", cs.raw_mean[s]);
            for (int s = 0; s < sim::kSkills; ++s) std::fprintf(csv, ",%.6f", cs.reward_mean[s]);
            std::fprintf(csv, ",%.6f", cs.mean_delta);
            for (int g = 0; g < kConstraintGroups; ++g)
                std::fprintf(csv, ",%.6f", cs.violation_rate[g]);
            std::fprintf(csv, ",%.6f,%.6f,%.6f,%.6f,%.6f,%d,%d,%.2f\n", ps.pi_loss, ps.v_loss,
                         ps.entropy, ps.sym_loss, ps.kl, ps.epochs_run, cs.resets, elapsed());
            std::fflush(csv);
        }
        if (cfg.progress_every > 0 && (it + 1) % cfg.progress_every == 0)
            std::fprintf(stderr, "[rl] iter %d/%d delta=%.3f rew=%.3f/%.3f/%.3f/%.3f %.1fs\n",
                         it + 1, cfg.iterations, cs.mean_delta, cs.reward_mean[0],
                         cs.reward_mean[1], cs.reward_mean[2], cs.reward_mean[3], elapsed());
        if (ps.diverged) break;
    }
    if (csv) std::fclose(csv);

    char meta[96];
    std::snprintf(meta, sizeof meta, "rl-policy iters=%d seed=%llu", res.iterations,
                  (unsigned long long)cfg.seed);
    res.policy = pol.store.to_checkpoint(meta);
    std::snprintf(meta, sizeof meta, "rl-value iters=%d seed=%llu", res.iterations,
                  (unsigned long long)cfg.seed);
    res.value = vnet.store.to_checkpoint(meta);
    res.seconds = elapsed();
    return res;
}

}  // namespace rlwav::rl
