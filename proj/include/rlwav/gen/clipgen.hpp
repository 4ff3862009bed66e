#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rlwav/cam/viewcam.hpp"
#include "rlwav/common.hpp"

namespace rlwav::gen {

enum Skill : int { kKeepStill = 0, kWalk = 1, kRun = 2, kJump = 3 };
constexpr const char *kSkillNames[4] = {"keepstill", "walk", "run", "jump"};
constexpr int kNumSkills = 4;

// seconds between clip frames at generation time; a clip spans 0.7 s
constexpr double kFrameDt = 0.1;

struct Limb {
    double attach_x;   // along the body, in body frame
    double upper, lower;
    int phase_group;   // 0/1 alternating gait phase; also picks the shade
};

struct CreatureSpec {
    uint32_t id = 0;
    int n_limbs = 4;
    double body_a = 0.3, body_b = 0.1;  // ellipse semi-axes
    std::vector<Limb> limbs;
    float body_shade = 0.9f, shade_a = 0.8f, shade_b = 0.5f;
    // gait parameters, drawn once per creature
    double f_walk = 1.5, f_run = 3.0, f_jump = 1.1;
    double v_walk = 0.3, v_run = 1.0;   // body lengths per second
    double jump_apex = 0.3;             // body heights
    double duty_walk = 0.6, duty_run = 0.3;
    double sway = 0.02;                 // rad, keep-still idle motion

    double body_len() const { return 2 * body_a; }
    double body_height() const { return 2 * body_b; }
    double stand_z() const;  // body center height with legs slightly bent
};

// Morphology and gait randomization. Never returns the robot's own geometry
// (see robot_signature), which keeps the corpus embodiment-disjoint.
CreatureSpec gen_creature(Rng &rng);
bool robot_signature(const CreatureSpec &spec);

struct CreaturePose {
    double x = 0, z = 0;
    std::vector<std::array<double, 2>> joints;  // per limb: hip, knee angle
};

// Pose at time t for one skill; phase in [0,1) shifts the gait cycle.
CreaturePose animate(const CreatureSpec &spec, int skill, double t, double phase);

// two-link reach: world offset foot-minus-attach -> (hip, knee) angles,
// same angle convention as the robot legs (segment direction (sin a, -cos a))
void ik_limb(double dx, double dz, double upper, double lower, double &hip, double &knee);

// A stored clip: 8 frames of 64x64, already quantized to u8 (the on-disk
// representation, so save/load round-trips are bit-exact by construction).
struct LabeledClip {
    std::array<uint8_t, cam::kClipLen * cam::kFrameW * cam::kFrameH> px;
    uint8_t labels = 0;       // bitmask over Skill
    uint32_t creature_id = 0;
    // generator ground truth for the feature oracle (not serialized)
    float speed_bl = 0;       // centroid speed, body lengths / s
    float bounce_bh = 0;      // z peak-to-trough, body heights

    bool has(int skill) const { return (labels >> skill) & 1; }
    float pixel(int frame, int idx) const {
        return px[frame * cam::kFrameW * cam::kFrameH + idx] / 255.f;
    }
};

// Renders one labeled clip: tracking camera with +-25% jittered framing,
// random background, additive noise. In multilabel mode a second behavior
// segment is composited with probability 0.3 and both labels attached.
LabeledClip gen_clip(const CreatureSpec &spec, int skill, Rng &rng, bool multilabel);

struct Dataset {
    std::vector<LabeledClip> clips;
};

struct CorpusConfig {
    int n_per_class = 2000;
    bool multilabel = false;
    uint64_t seed = 1;
    double fraction = 1.0;  // train-split subsampling: 1, 0.5, 0.25, 0.125
};

struct Corpus {
    Dataset train, val;
};

// Balanced corpus, split 85/15 stratified by creature (two clips per
// creature, no creature spans the split). `fraction` subsamples train
// creatures per class; val is always full size.
Corpus build_corpus(const CorpusConfig &cfg);

// DatasetFile: magic "RLWVCLIP", version, clip count, then per clip
// (creature id u32, label bitmask u8, 8x64x64 u8 pixels). Little-endian.
void save_dataset(const std::string &path, const Dataset &ds);
Dataset load_dataset(const std::string &path);

}  // namespace rlwav::gen
