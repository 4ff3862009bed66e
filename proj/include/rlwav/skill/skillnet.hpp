#pragma once

#include <array>
#include <string>
#include <vector>

#include "rlwav/cam/viewcam.hpp"
#include "rlwav/common.hpp"
#include "rlwav/gen/clipgen.hpp"
#include "rlwav/nn/adamw.hpp"
#include "rlwav/nn/layers.hpp"
#include "rlwav/nn/tensor.hpp"

namespace rlwav::skill {

constexpr int kClipFloats = cam::kClipLen * cam::kFrameW * cam::kFrameH;

// Shared-weight frame encoder (three stride-2 conv stages + dense embedding),
// temporal mean and mean |embedding delta| concatenated into an MLP head.
struct ClassifierSpec {
    int c1 = 4, c2 = 8, c3 = 16;
    int embed_dim = 64;
    std::vector<int> head_hidden = {64};
    bool multilabel = false;  // sigmoid head instead of softmax
};

template <typename T>
struct ClsCtxT {
    int batch = 0;
    std::vector<T> x, a1, a2, a3, e, feat;  // post-activation tapes
    nn::MlpCtx<T> head;
};

template <typename T>
class ClassifierT {
  public:
    void build(const ClassifierSpec &spec);
    void init(Rng &rng);

    // clips: [batch][kClipFloats], frame-major; logits: [batch][kNumSkills]
    void forward(const T *clips, int batch, T *logits, ClsCtxT<T> *ctx = nullptr) const;
    // d_logits [batch][kNumSkills]; accumulates into grads (store layout)
    void backward(ClsCtxT<T> &ctx, const T *d_logits, T *grads) const;
    // per-skill scores in [0,1]: softmax rows, or per-class sigmoid when multilabel
    void scores(const T *clips, int batch, T *out) const;

    // Inference split for callers that see frames one at a time (the RL reward
    // path): encode frames once, rescore sliding clips from cached embeddings.
    // frames: [n][kFrameH*kFrameW] -> emb [n][embed_dim]
    void frame_embed(const T *frames, int n, T *emb) const;
    // emb: [batch][kClipLen*embed_dim], oldest frame first -> scores [batch][kNumSkills]
    void head_scores(const T *emb, int batch, T *out) const;

    nn::ParamStore<T> &store() { return store_; }
    const nn::ParamStore<T> &store() const { return store_; }
    const ClassifierSpec &spec() const { return spec_; }
    // parameters at index >= head_offset() belong to the classification head
    size_t head_offset() const { return head_off_; }

  private:
    ClassifierSpec spec_;
    nn::ParamStore<T> store_;
    nn::Mlp<T> head_;
    size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0, we_ = 0, be_ = 0;
    size_t head_off_ = 0;
};

using Classifier = ClassifierT<float>;
using ClsCtx = ClsCtxT<float>;

void clip_to_float(const gen::LabeledClip &clip, float *dst);
void clip_to_float(const cam::Clip &clip, float *dst);

// Johnk rejection sampler, exact for any a, b > 0
double beta_sample(Rng &rng, double a, double b);

// With probability p, convolves all frames of the clip with one random k x k
// kernel (k in {1,3,5,7}) and restores the original clip mean/stddev.
void random_conv_augment(float *clip, Rng &rng, double p);

// In-place convex pairing against a shuffled copy of the batch; one
// Beta(alpha, alpha) coefficient per row, applied to inputs and targets alike.
void mixup_batch(float *x, float *y, int batch, int dim_x, int dim_y, double alpha, Rng &rng);

struct TrainConfig {
    ClassifierSpec net;
    int epochs = 24;
    int batch = 64;
    double lr = 2e-3;
    double weight_decay = 0.01;
    double mixup_alpha = 0.2;
    double randconv_p = 0.95;
    uint64_t seed = 1;
    bool head_only = false;  // freeze everything below the head (soup warm start)
    std::string log_csv;     // per-epoch log path; empty = no file
};

struct EpochLog {
    int epoch;
    double lr, train_loss, val_acc;
};

struct TrainResult {
    nn::Checkpoint best;  // weights of the best-validation epoch
    double best_val_acc = 0;
    int best_epoch = -1;
    bool diverged = false;
    std::vector<EpochLog> log;
};

TrainResult train_classifier(const gen::Dataset &train, const gen::Dataset &val,
                             const TrainConfig &cfg, const nn::Checkpoint *warm = nullptr);

struct EvalResult {
    double top1 = 0;
    std::array<std::array<int, gen::kNumSkills>, gen::kNumSkills> confusion{};  // [true][pred]
    int count = 0;
};

EvalResult eval_classifier(const Classifier &net, const gen::Dataset &ds);

// Head-only warm start shared by all members, then full fine-tunes over the
// weight-decay x epoch grid; the returned checkpoint is the uniform average.
struct SoupConfig {
    TrainConfig base;
    int warm_epochs = 3;
    int members = 4;  // >= 2
    std::vector<double> member_wd = {0.01, 0.05, 0.1};
    std::vector<int> member_epochs = {8, 16};
};

nn::Checkpoint make_soup(const gen::Dataset &train, const gen::Dataset &val,
                         const SoupConfig &cfg, double *soup_val_acc = nullptr);

}  // namespace rlwav::skill
