#include "rlwav/gen/clipgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace rlwav::gen {

namespace {

constexpr double kAttachDrop = 0.55;  // limb attach point, fraction of body_b below center

double min_limb_len(const CreatureSpec &s) {
    double m = 1e9;
    for (const Limb &l : s.limbs) m = std::min(m, l.upper + l.lower);
    return m;
}

}  // namespace

double CreatureSpec::stand_z() const {
    // budgeted off the shortest limb so every stance foot can reach the ground
    return 0.82 * min_limb_len(*this) + kAttachDrop * body_b;
}

CreatureSpec gen_creature(Rng &rng) {
    for (;;) {
        CreatureSpec s;
        s.n_limbs = 2 + (int)rng.below(5);
        s.body_a = rng.uniform(0.15, 0.45);
        s.body_b = rng.uniform(0.05, std::min(0.18, 0.6 * s.body_a));
        s.limbs.resize(s.n_limbs);
        // shared leg proportions with mild per-limb scale: keeps every limb
        // long enough to plant during stance at the shared stand height
        double up_base = rng.uniform(0.10, 0.30);
        double lo_base = rng.uniform(0.08, 0.25);
        for (int i = 0; i < s.n_limbs; ++i) {
            Limb &l = s.limbs[i];
            double frac = s.n_limbs == 1 ? 0.0 : -0.75 + 1.5 * i / (s.n_limbs - 1);
            l.attach_x = s.body_a * frac + rng.uniform(-0.05, 0.05) * s.body_a;
            double sc = rng.uniform(0.92, 1.08);
            l.upper = up_base * sc;
            l.lower = lo_base * sc;
            l.phase_group = i % 2;
        }
        s.body_shade = (float)rng.uniform(0.85, 1.0);
        s.shade_a = (float)rng.uniform(0.70, 0.90);
        s.shade_b = (float)rng.uniform(0.35, 0.60);
        s.f_walk = rng.uniform(1.0, 2.0);
        s.v_walk = rng.uniform(0.2, 0.5);
        s.f_run = rng.uniform(2.5, 4.0);
        s.v_run = rng.uniform(0.8, 1.5);
        s.f_jump = rng.uniform(1.45, 1.95);  // full cycle inside a 0.7 s clip
        s.jump_apex = rng.uniform(0.2, 0.5);
        s.sway = rng.uniform(0.005, 0.03);
        if (!robot_signature(s)) return s;
    }
}

bool robot_signature(const CreatureSpec &s) {
    if (s.n_limbs != 4) return false;
    if (std::abs(s.body_a - 0.20) > 0.03 || std::abs(s.body_b - 0.04) > 0.02) return false;
    for (const Limb &l : s.limbs)
        if (std::abs(l.upper - 0.16) > 0.02 || std::abs(l.lower - 0.16) > 0.02) return false;
    return true;
}

void ik_limb(double dx, double dz, double upper, double lower, double &hip, double &knee) {
    double r = std::sqrt(dx * dx + dz * dz);
    double lo = std::abs(upper - lower) + 1e-3, hi = upper + lower - 1e-3;
    r = clampd(r, lo, hi);
    // aim angle in the (sin a, -cos a) convention, then open the knee forward
    double aim = std::atan2(dx, -dz);
    double cb = clampd((upper * upper + r * r - lower * lower) / (2 * upper * r), -1.0, 1.0);
    double ci = clampd((upper * upper + lower * lower - r * r) / (2 * upper * lower), -1.0, 1.0);
    double beta = std::acos(cb);
    hip = aim + beta;
    knee = -(kPi - std::acos(ci));
}

namespace {

struct FootTarget {
    double rel_x, z;  // x relative to the attach point, z in world
};

// common walk/run cycle: planted stance sweeping backward, lifted swing
FootTarget gait_foot(const CreatureSpec &s, const Limb &limb, double f, double v_bl,
                     double duty, double t, double phase, int limb_idx) {
    double vm = v_bl * s.body_len();
    double stride = std::min(vm / f, 1.0 * (limb.upper + limb.lower));
    double jitter = 0.04 * std::sin(limb_idx * 12.9898);
    double tau = f * t + phase + 0.5 * limb.phase_group + jitter;
    tau -= std::floor(tau);
    double lift_h = (duty < 0.5 ? 0.30 : 0.20) * (limb.upper + limb.lower);
    if (tau < duty) {  // stance: foot fixed in the world while the body passes
        return {stride * (0.5 * duty - tau), 0.0};
    }
    double u = (tau - duty) / (1.0 - duty);
    return {stride * duty * (u - 0.5), lift_h * std::sin(kPi * u)};
}

}  // namespace

CreaturePose animate(const CreatureSpec &spec, int skill, double t, double phase) {
    CreaturePose p;
    p.joints.resize(spec.n_limbs);
    double stand = spec.stand_z();
    double bh = spec.body_height();

    if (skill == kWalk || skill == kRun) {
        double f = skill == kWalk ? spec.f_walk : spec.f_run;
        double v = skill == kWalk ? spec.v_walk : spec.v_run;
        double duty = skill == kWalk ? spec.duty_walk : spec.duty_run;
        p.x = v * spec.body_len() * t;
        p.z = stand + 0.01 * spec.body_len() * std::sin(4 * kPi * (f * t + phase));
        if (skill == kRun) {
            // lowest at mid-stance (tau = duty/2), peaks mid-flight
            double b = std::sin(2 * kPi * (f * t + phase - 0.5 * duty));
            p.z += 0.12 * bh * b * b;
        }
        for (int i = 0; i < spec.n_limbs; ++i) {
            const Limb &l = spec.limbs[i];
            FootTarget ft = gait_foot(spec, l, f, v, duty, t, phase, i);
            double az = p.z - kAttachDrop * spec.body_b;
            ik_limb(ft.rel_x, ft.z - az, l.upper, l.lower, p.joints[i][0], p.joints[i][1]);
        }
        return p;
    }

    if (skill == kJump) {
        double xi = spec.f_jump * t + phase;
        xi -= std::floor(xi);
        const double ground_frac = 0.55;
        double tuck = 0;
        if (xi < ground_frac) {  // crouch and push
            p.z = stand - 0.12 * bh * std::sin(kPi * xi / ground_frac);
        } else {  // ballistic flight, limbs tucked in phase
            double u = (xi - ground_frac) / (1.0 - ground_frac);
            p.z = stand + spec.jump_apex * bh * 4.0 * u * (1.0 - u);
            tuck = std::sin(kPi * u);
        }
        for (int i = 0; i < spec.n_limbs; ++i) {
            const Limb &l = spec.limbs[i];
            double az = p.z - kAttachDrop * spec.body_b;
            double foot_z = tuck * 0.35 * (l.upper + l.lower);
            ik_limb(0.0, foot_z - az, l.upper, l.lower, p.joints[i][0], p.joints[i][1]);
        }
        return p;
    }

    // KeepStill: planted feet, tiny limb sway, centroid fixed
    p.x = 0;
    p.z = stand;
    for (int i = 0; i < spec.n_limbs; ++i) {
        const Limb &l = spec.limbs[i];
        double az = p.z - kAttachDrop * spec.body_b;
        ik_limb(0.0, -az, l.upper, l.lower, p.joints[i][0], p.joints[i][1]);
        p.joints[i][0] += spec.sway * std::sin(2 * kPi * 0.4 * t + phase * 2 * kPi + 1.7 * i);
    }
    return p;
}

namespace {

void render_creature(cam::Frame &f, const CreatureSpec &s, const CreaturePose &pose,
                     double cam_cx, double cam_cz, double zoom, float bg) {
    cam::Canvas cv(f, cam_cx, cam_cz, zoom);
    cv.fill(bg);
    cv.ground(0.0, 0.03, 0.3f);
    double az = pose.z - kAttachDrop * s.body_b;
    for (int group = 1; group >= 0; --group) {  // group 0 painted on top
        float shade = group == 0 ? s.shade_a : s.shade_b;
        for (int i = 0; i < s.n_limbs; ++i) {
            const Limb &l = s.limbs[i];
            if (l.phase_group != group) continue;
            double ax = pose.x + l.attach_x;
            double hip = pose.joints[i][0], knee = pose.joints[i][1];
            double kx = ax + l.upper * std::sin(hip);
            double kz = az - l.upper * std::cos(hip);
            double fx = kx + l.lower * std::sin(hip + knee);
            double fz = kz - l.lower * std::cos(hip + knee);
            double thick = 0.10 * (l.upper + l.lower);
            cv.segment(ax, az, kx, kz, thick, shade);
            cv.segment(kx, kz, fx, fz, thick, shade);
        }
    }
    cv.ellipse(pose.x, pose.z, s.body_a, s.body_b, 0.0, s.body_shade);
}

}  // namespace

LabeledClip gen_clip(const CreatureSpec &spec, int skill, Rng &rng, bool multilabel) {
    LabeledClip out;
    out.creature_id = spec.id;
    out.labels = (uint8_t)(1u << skill);

    // composite a second behavior segment in multilabel mode
    int skill2 = -1, split = cam::kClipLen;
    if (multilabel && rng.uniform() < 0.3) {
        skill2 = (int)rng.below(kNumSkills - 1);
        if (skill2 >= skill) ++skill2;
        split = 3 + (int)rng.below(3);  // 3..5 frames of the first behavior
        out.labels |= (uint8_t)(1u << skill2);
    }

    double phase = rng.uniform();
    double phase2 = rng.uniform();

    // framing: fit the whole creature with margin, then jitter +-25%
    double reach = 0;
    for (const Limb &l : spec.limbs) reach = std::max(reach, l.upper + l.lower);
    double top = spec.stand_z() + spec.body_b + spec.jump_apex * spec.body_height();
    double zoom0 = 1.15 * std::max(spec.body_a + 0.6 * reach, 0.62 * (top + 0.1));
    double zoom = zoom0 * rng.uniform(0.75, 1.25);
    double height = 0.8 * zoom0 * rng.uniform(0.75, 1.25);
    double offset = -0.25 * zoom0 * rng.uniform(-1.25, 1.25);
    float bg = (float)rng.uniform(0.02, 0.15);

    const double noise_w = 0.02 * std::sqrt(3.0);  // uniform, sigma = 0.02
    const int n_px = cam::kFrameW * cam::kFrameH;
    double x0 = 0, x1 = 0, zmin = 1e9, zmax = -1e9;
    double x_shift = 0, last_x = 0;
    for (int i = 0; i < cam::kClipLen; ++i) {
        int sk = i < split ? skill : skill2;
        double ph = i < split ? phase : phase2;
        CreaturePose pose = animate(spec, sk, i * kFrameDt, ph);
        if (i == split) x_shift = last_x - pose.x;  // no teleport at the switch
        pose.x += x_shift;
        last_x = pose.x;
        if (i == 0) x0 = pose.x;
        if (i == cam::kClipLen - 1) x1 = pose.x;
        zmin = std::min(zmin, pose.z);
        zmax = std::max(zmax, pose.z);
        cam::Frame f;
        render_creature(f, spec, pose, pose.x + offset, height, zoom, bg);
        for (int k = 0; k < n_px; ++k) {
            float v = f.px[k] + (float)((rng.uniformf(-1.f, 1.f)) * noise_w);
            out.px[i * n_px + k] =
                (uint8_t)std::lround(clampf(v, 0.f, 1.f) * 255.f);
        }
    }
    double span = (cam::kClipLen - 1) * kFrameDt;
    out.speed_bl = (float)(std::abs(x1 - x0) / (span * spec.body_len()));
    out.bounce_bh = (float)((zmax - zmin) / spec.body_height());
    return out;
}

Corpus build_corpus(const CorpusConfig &cfg) {
    if (cfg.n_per_class < 1) throw ConfigError("corpus: n_per_class must be >= 1");
    if (cfg.fraction <= 0 || cfg.fraction > 1) throw ConfigError("corpus: fraction in (0,1]");

    const int clips_per_creature = 2;
    int cpc = (cfg.n_per_class + clips_per_creature - 1) / clips_per_creature;
    int val_c = (int)std::lround(0.15 * cpc);
    int train_c = cpc - val_c;
    int keep_train = (int)std::lround(cfg.fraction * train_c);

    Corpus corpus;
    for (int cls = 0; cls < kNumSkills; ++cls) {
        for (int k = 0; k < cpc; ++k) {
            bool is_val = k < val_c;
            if (!is_val && (k - val_c) >= keep_train) continue;
            uint32_t idx = (uint32_t)(cls * cpc + k);
            // per-creature substreams: specs and clips are independent of
            // which other creatures are generated (fraction sweeps keep the
            // validation set bit-identical)
            Rng spec_rng(substream(cfg.seed, 2ull * idx));
            Rng clip_rng(substream(cfg.seed, 2ull * idx + 1));
            CreatureSpec spec = gen_creature(spec_rng);
            spec.id = idx;
            int n_clips = std::min(clips_per_creature,
                                   cfg.n_per_class - k * clips_per_creature);
            Dataset &dst = is_val ? corpus.val : corpus.train;
            for (int c = 0; c < n_clips; ++c)
                dst.clips.push_back(gen_clip(spec, cls, clip_rng, cfg.multilabel));
        }
    }
    return corpus;
}

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE *f, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8),
                          (unsigned char)(v >> 16), (unsigned char)(v >> 24)};
    if (std::fwrite(b, 1, 4, f) != 4) throw IoError("dataset: short write");
}

uint32_t get_u32(std::FILE *f, const std::string &path) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw IoError("dataset: truncated " + path);
    return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) |
           ((uint32_t)b[3] << 24);
}

constexpr char kMagic[8] = {'R', 'L', 'W', 'V', 'C', 'L', 'I', 'P'};

}  // namespace

void save_dataset(const std::string &path, const Dataset &ds) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write " + path);
    if (std::fwrite(kMagic, 1, 8, f.get()) != 8) throw IoError("dataset: short write");
    put_u32(f.get(), 1);
    put_u32(f.get(), (uint32_t)ds.clips.size());
    for (const LabeledClip &c : ds.clips) {
        put_u32(f.get(), c.creature_id);
        if (std::fputc(c.labels, f.get()) == EOF) throw IoError("dataset: short write");
        if (std::fwrite(c.px.data(), 1, c.px.size(), f.get()) != c.px.size())
            throw IoError("dataset: short write");
    }
}

Dataset load_dataset(const std::string &path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot read " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, f.get()) != 8 || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not a clip dataset: " + path);
    uint32_t version = get_u32(f.get(), path);
    if (version != 1) throw IoError("unsupported dataset version in " + path);
    uint32_t count = get_u32(f.get(), path);
    if (count > 10'000'000) throw IoError("implausible clip count in " + path);
    Dataset ds;
    ds.clips.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        LabeledClip &c = ds.clips[i];
        c.creature_id = get_u32(f.get(), path);
        int lb = std::fgetc(f.get());
        if (lb == EOF) throw IoError("dataset: truncated " + path);
        c.labels = (uint8_t)lb;
        if (std::fread(c.px.data(), 1, c.px.size(), f.get()) != c.px.size())
            throw IoError("dataset: truncated " + path);
    }
    return ds;
}

}  // namespace rlwav::gen
