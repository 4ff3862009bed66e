#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rlwav/cam/viewcam.hpp"
#include "rlwav/common.hpp"
#include "rlwav/nn/adamw.hpp"
#include "rlwav/nn/layers.hpp"
#include "rlwav/nn/tensor.hpp"
#include "rlwav/sim/robot.hpp"
#include "rlwav/skill/skillnet.hpp"

namespace rlwav::rl {

// ---------------------------------------------------------------------------
// policy / value networks

// Diagonal-Gaussian policy: an MLP mean expressed as offsets around the
// standing pose plus one global learnable log-std per joint (appended to the
// same store so the optimizer and checkpoints cover it). Templated so the
// symmetry-loss gradient can be finite-difference checked in double.
template <typename T>
struct GaussPolicyT {
    nn::ParamStore<T> store;
    nn::Mlp<T> net;
    size_t logstd_off = 0;
    std::array<T, sim::kJoints> bias{};  // q_default; mean = bias + scale * net(obs)
    T scale = T(0.25);
    T logstd_lo = T(-4), logstd_hi = T(1);

    void build(const std::vector<int> &hidden, const sim::RobotConfig &rc);
    void init(Rng &rng, double sigma0 = 0.3);

    // obs [n x kObsDim] -> mu [n x kJoints]
    void mean(const T *obs, int n, T *mu, nn::MlpCtx<T> *ctx = nullptr) const;
    // chain rule through mean(): accumulates scale * d_mu into the net grads
    void backward_mean(nn::MlpCtx<T> &ctx, const T *d_mu, T *grads) const;

    void logstds(T *ls) const;  // clamped, [kJoints]
    void stds(T *sd) const;
    // raw log-std params are projected back into [lo, hi] after each step
    void clamp_logstd();
};
using GaussPolicy = GaussPolicyT<float>;

template <typename T>
struct ValueNetT {
    nn::ParamStore<T> store;
    nn::Mlp<T> net;

    void build(const std::vector<int> &hidden);
    void init(Rng &rng);
    void values(const T *obs, int n, T *v, nn::MlpCtx<T> *ctx = nullptr) const;
};
using ValueNet = ValueNetT<float>;

// log-density of the diagonal Gaussian N(mu, diag(sd^2)) at a
double gaussian_logp(const float *mu, const float *sd, const float *ls, int n, const float *a);

// Draws the Gaussian sample for one mean row, clamps it to the joint limits
// for execution and returns the log-prob of the raw (pre-clamp) sample.
double sample_from_mean(const float *mu, const float *sd, const float *ls,
                        const sim::RobotConfig &rc, Rng &rng,
                        std::array<double, sim::kJoints> &exec, float *raw_out);

// single-observation convenience wrapper (forward + sample)
double sample_action(const GaussPolicy &pol, const float *obs, const sim::RobotConfig &rc,
                     Rng &rng, std::array<double, sim::kJoints> &exec,
                     float *raw_out = nullptr, float *mu_out = nullptr);

// ---------------------------------------------------------------------------
// constraints as terminations

struct CatConfig {
    double delta_soft = 0.25;  // termination probability cap for soft constraints
    double delta_air = 0.5;    // foot air time gets a harsher cap
    double polyak = 0.995;     // running violation-scale decay
    bool use_airtime = true;   // ablation switches: dropped constraints never terminate
    bool use_pitch = true;
};

// Per-constraint running violation scale; soft violations are measured
// relative to v-hat so the termination pressure tracks the magnitudes the
// current policy actually produces.
struct CatState {
    std::array<double, sim::ConstraintValues::kCount> vhat;
    CatState() { vhat.fill(1.0); }
};

// hard violation -> 1; soft -> cap * clamp(v / vhat, 0, 1); returns the max.
double cat_termination(const sim::ConstraintValues &cv, const CatState &cat, const CatConfig &cfg);

// vhat <- polyak * vhat + (1 - polyak) * batch_max, per constraint, for
// entries with a positive batch max (absent violations leave the scale alone).
void cat_update(CatState &cat, const std::array<double, sim::ConstraintValues::kCount> &batch_max,
                const CatConfig &cfg);

// constraint indices bucketed for logging
constexpr int kConstraintGroups = 11;
const char *constraint_group_name(int g);
int constraint_group_of(int constraint_index);

// ---------------------------------------------------------------------------
// per-skill reward normalization

// Running classifier-score extrema per skill; raw scores map through
// r = clamp((raw - min) / (max - min + 1e-3), 0, 1).
struct RewardNorm {
    std::array<double, sim::kSkills> mx, mn;
    double polyak = 0.99;
    RewardNorm() {
        mx.fill(1.0);
        mn.fill(0.0);
    }

    double normalize(double raw, int skill) const;
    // pull the extrema toward this iteration's batch extrema (seen skills only)
    void update(const std::array<double, sim::kSkills> &bmax,
                const std::array<double, sim::kSkills> &bmin,
                const std::array<int, sim::kSkills> &count);
};

// ---------------------------------------------------------------------------
// rollout collection

struct RolloutConfig {
    int n_envs = 256;
    int horizon = 96;
    int render_every = 5;    // camera period in policy steps
    int episode_len = 1000;  // timeout; bootstraps from the value net
    cam::CameraConfig cam{};
};

// One persistent simulation slot. Each env owns its RNG so the results do not
// depend on how envs are partitioned across workers, and a ring of frame
// embeddings so sliding-window clips are rescored without re-encoding frames.
struct Env {
    sim::RobotState st;
    Rng rng{0};
    int skill = 0;
    int step = 0;            // steps since episode start
    int frames = 0;          // embeddings pushed this episode
    std::vector<float> emb;  // [kClipLen x embed_dim] ring, slot = push index % kClipLen
};

struct EnvPool {
    std::vector<Env> envs;
    void init(int n, const sim::RobotConfig &rc, int embed_dim, uint64_t seed);
};

// Flat [horizon x n_envs] sample arrays, row-major in t.
struct Rollout {
    int T = 0, N = 0;
    std::vector<float> obs;       // [T*N x kObsDim]
    std::vector<float> act;       // raw pre-clamp samples [T*N x kJoints]
    std::vector<float> logp;      // [T*N]
    std::vector<float> val;       // [T*N]
    std::vector<float> rew;       // [T*N], normalized; 0 off render steps
    std::vector<float> raw;       // [T*N], raw classifier score; 0 off render steps
    std::vector<float> surv;      // [T*N], 1 - delta
    std::vector<uint8_t> done;    // [T*N], env reset after this sample
    std::vector<float> boot;      // [T*N], bootstrap value where done (0 unless timeout)
    std::vector<uint8_t> valid;   // [T*N], 0 = diverged step, excluded from updates
    std::vector<float> last_val;  // [N], V of the post-rollout observation
    std::vector<int> skill;       // [N]
    std::vector<double> adv, ret;  // filled by compute_gae

    void resize(int T_, int N_);
    size_t idx(int t, int e) const { return size_t(t) * N + e; }
};

struct CollectStats {
    std::array<double, sim::kSkills> raw_mean{}, reward_mean{};
    std::array<int, sim::kSkills> score_count{};
    double mean_delta = 0;
    double hard_rate = 0;  // fraction of samples terminated by a hard constraint
    std::array<double, kConstraintGroups> violation_rate{};
    int resets = 0, timeouts = 0, diverged = 0, clips_scored = 0;
};

// test hook: mutates each rendered frame before it reaches the classifier
using FrameHook = std::function<void(cam::Frame &)>;

// Steps every env `horizon` times under the stochastic policy, scoring camera
// clips through the classifier for rewards. Values (including timeout
// bootstraps) are computed in batched passes at the end; cat and norm running
// state update from the collected batch.
CollectStats collect_rollouts(EnvPool &pool, const GaussPolicy &pol, const ValueNet &vnet,
                              const skill::Classifier &clf, const sim::RobotConfig &rc,
                              const RolloutConfig &cfg, CatState &cat, const CatConfig &catcfg,
                              RewardNorm &norm, Rollout &out,
                              const FrameHook *frame_hook = nullptr);

// ---------------------------------------------------------------------------
// GAE with survival weighting

struct GaeConfig {
    double gamma = 0.99;
    double lam = 0.95;
    bool normalize = true;  // batch-normalize advantages after returns are formed
};

// A_t = [r_t + g*s_t*V(next) - V_t] + g*l*s_t*A_{t+1}, chain cut at done;
// next value comes from boot on done steps. returns = raw advantage + value.
void compute_gae(Rollout &ro, const GaeConfig &cfg);

// ---------------------------------------------------------------------------
// symmetry loss

// Mean squared mirror-consistency error of the policy mean over an obs batch:
// L = mean_i ||mu(o_i) - S_a mu(S_o o_i)||^2. Accumulates dL/dparams into
// grads when non-null (through both branches).
template <typename T>
double symmetry_loss(const GaussPolicyT<T> &pol, const T *obs, int n, T *grads = nullptr);

// ---------------------------------------------------------------------------
// PPO update

struct PpoConfig {
    int epochs = 4;
    int minibatch = 4096;
    double clip = 0.2;
    double v_coef = 0.5;
    double ent_coef = 0.005;
    double sym_coef = 0.1;  // 0 disables the symmetry term
    double grad_clip = 1.0;
    double lr = 3e-4;
    double kl_stop = 0.1;  // epoch-mean approx KL above this ends the iteration
};

struct PpoStats {
    double pi_loss = 0, v_loss = 0, entropy = 0, sym_loss = 0, kl = 0;
    double grad_norm_pi = 0, grad_norm_v = 0;  // pre-clip, averaged over minibatches
    int epochs_run = 0;
    bool early_stopped = false;
    bool diverged = false;
};

// clipped-surrogate objective for one sample (maximized)
inline double surrogate_term(double ratio, double adv, double clip) {
    double c = ratio < 1.0 - clip ? 1.0 - clip : (ratio > 1.0 + clip ? 1.0 + clip : ratio);
    return std::min(ratio * adv, c * adv);
}

PpoStats ppo_update(GaussPolicy &pol, ValueNet &vnet, const Rollout &ro, const PpoConfig &cfg,
                    nn::OptState &opt_pi, nn::OptState &opt_v, Rng &rng);

// ---------------------------------------------------------------------------
// training driver

struct TrainPolicyConfig {
    std::vector<int> pol_hidden = {256, 128, 64};
    std::vector<int> val_hidden = {256, 128, 64};
    double sigma0 = 0.3;
    int iterations = 2000;
    uint64_t seed = 1;
    RolloutConfig rollout;
    GaeConfig gae;
    PpoConfig ppo;
    CatConfig cat;
    std::string log_csv;     // per-iteration log ("" = none)
    int progress_every = 0;  // stderr heartbeat period in iterations (0 = silent)
};

struct TrainPolicyResult {
    nn::Checkpoint policy, value;
    int iterations = 0;
    double seconds = 0;
    CollectStats last_collect;
    PpoStats last_ppo;
};

TrainPolicyResult train_policy(const skill::Classifier &clf, const sim::RobotConfig &rc,
                               const TrainPolicyConfig &cfg);

}  // namespace rlwav::rl
