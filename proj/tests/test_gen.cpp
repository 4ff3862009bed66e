#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstring>
#include <map>
#include <set>

#include "doctest.h"
#include "rlwav/gen/clipgen.hpp"

using namespace rlwav;
using namespace rlwav::gen;

TEST_CASE("creature census: limb counts, ranges, no robot lookalike") {
    Rng rng(11);
    std::map<int, int> limb_census;
    int robot_like = 0;
    for (int i = 0; i < 10000; ++i) {
        CreatureSpec s = gen_creature(rng);
        limb_census[s.n_limbs]++;
        robot_like += robot_signature(s) ? 1 : 0;
        CHECK(s.body_a > 0);
        CHECK(s.body_b > 0);
        REQUIRE((int)s.limbs.size() == s.n_limbs);
    }
    for (int n = 2; n <= 6; ++n) CHECK(limb_census[n] > 1000);
    CHECK(limb_census.size() == 5);
    CHECK(robot_like == 0);
}

TEST_CASE("creature generation is deterministic per seed") {
    Rng a(77), b(77);
    for (int i = 0; i < 20; ++i) {
        CreatureSpec x = gen_creature(a), y = gen_creature(b);
        CHECK(x.n_limbs == y.n_limbs);
        CHECK(x.body_a == y.body_a);
        CHECK(x.v_run == y.v_run);
        for (int j = 0; j < x.n_limbs; ++j) {
            CHECK(x.limbs[j].attach_x == y.limbs[j].attach_x);
            CHECK(x.limbs[j].upper == y.limbs[j].upper);
        }
    }
}

TEST_CASE("ik reaches the requested foot point") {
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        double u = rng.uniform(0.1, 0.3), l = rng.uniform(0.08, 0.25);
        double r = rng.uniform(std::abs(u - l) + 2e-3, u + l - 2e-3);
        double ang = rng.uniform(0, 2 * kPi);
        double dx = r * std::sin(ang), dz = -r * std::cos(ang);
        double hip, knee;
        ik_limb(dx, dz, u, l, hip, knee);
        double fx = u * std::sin(hip) + l * std::sin(hip + knee);
        double fz = -u * std::cos(hip) - l * std::cos(hip + knee);
        CHECK(fx == doctest::Approx(dx).epsilon(1e-9));
        CHECK(fz == doctest::Approx(dz).epsilon(1e-9));
        CHECK(knee <= 0);  // knee always opens the same way
    }
}

TEST_CASE("animate: per-class motion properties") {
    Rng rng(21);
    int run_airborne_fail = 0, walk_grounded_fail = 0;
    for (int trial = 0; trial < 40; ++trial) {
        CreatureSpec s = gen_creature(rng);
        double phase = rng.uniform();
        double bl = s.body_len(), bh = s.body_height();

        // KeepStill: centroid displacement < 2% of body length over a clip
        double max_disp = 0;
        for (int i = 0; i < 8; ++i) {
            CreaturePose p = animate(s, kKeepStill, i * kFrameDt, phase);
            max_disp = std::max(max_disp, std::abs(p.x));
        }
        CHECK(max_disp < 0.02 * bl);

        // Run faster than Walk for the same creature
        auto clip_speed = [&](int skill) {
            CreaturePose p0 = animate(s, skill, 0.0, phase);
            CreaturePose p7 = animate(s, skill, 0.7, phase);
            return std::abs(p7.x - p0.x) / 0.7 / bl;
        };
        CHECK(clip_speed(kRun) > clip_speed(kWalk));
        CHECK(clip_speed(kWalk) >= 0.19);
        CHECK(clip_speed(kWalk) <= 0.51);
        CHECK(clip_speed(kRun) >= 0.79);
        CHECK(clip_speed(kRun) <= 1.51);

        // Jump: vertical peak-to-trough > 0.15 body heights within any clip
        double zmin = 1e9, zmax = -1e9;
        for (int i = 0; i < 8; ++i) {
            CreaturePose p = animate(s, kJump, i * kFrameDt, phase);
            zmin = std::min(zmin, p.z);
            zmax = std::max(zmax, p.z);
            CHECK(std::abs(p.x) < 1e-12);  // jumps in place
        }
        CHECK(zmax - zmin > 0.15 * bh);

        // foot heights from joint angles
        auto foot_heights = [&](int skill, double t) {
            CreaturePose p = animate(s, skill, t, phase);
            std::vector<double> fz;
            for (int i = 0; i < s.n_limbs; ++i) {
                const Limb &l = s.limbs[i];
                double az = p.z - 0.55 * s.body_b;
                double kz = az - l.upper * std::cos(p.joints[i][0]);
                fz.push_back(kz - l.lower * std::cos(p.joints[i][0] + p.joints[i][1]));
            }
            return fz;
        };
        // Walk: some foot near the ground at every sampled time
        for (int k = 0; k < 25; ++k) {
            auto fz = foot_heights(kWalk, k * 0.03);
            double lowest = *std::min_element(fz.begin(), fz.end());
            if (lowest > 0.03) ++walk_grounded_fail;
        }
        // Run: all feet clearly off the ground at some time (airborne phase)
        bool airborne = false;
        for (int k = 0; k < 40 && !airborne; ++k) {
            auto fz = foot_heights(kRun, k * 0.02);
            airborne = *std::min_element(fz.begin(), fz.end()) > 0.01;
        }
        if (!airborne) ++run_airborne_fail;
    }
    CHECK(walk_grounded_fail == 0);
    CHECK(run_airborne_fail == 0);
}

TEST_CASE("gen_clip: format, curated single label, determinism") {
    Rng rng(31);
    CreatureSpec s = gen_creature(rng);
    s.id = 123;
    Rng c1(99), c2(99);
    LabeledClip a = gen_clip(s, kWalk, c1, false);
    LabeledClip b = gen_clip(s, kWalk, c2, false);
    CHECK(std::memcmp(a.px.data(), b.px.data(), a.px.size()) == 0);
    CHECK(a.creature_id == 123);
    CHECK(a.labels == (1u << kWalk));

    Rng cr(7);
    for (int i = 0; i < 1000; ++i) {
        CreatureSpec sp = gen_creature(cr);
        LabeledClip c = gen_clip(sp, (int)cr.below(4), cr, false);
        REQUIRE(__builtin_popcount(c.labels) == 1);
    }
}

TEST_CASE("gen_clip: multilabel rate and marginals") {
    Rng rng(41);
    int n = 4800, second = 0;
    std::array<int, 4> marg{};
    for (int i = 0; i < n; ++i) {
        CreatureSpec s = gen_creature(rng);
        int primary = i % 4;
        LabeledClip c = gen_clip(s, primary, rng, true);
        int bits = __builtin_popcount(c.labels);
        REQUIRE(bits >= 1);
        REQUIRE(bits <= 2);
        CHECK(c.has(primary));
        if (bits == 2) ++second;
        for (int k = 0; k < 4; ++k) marg[k] += c.has(k) ? 1 : 0;
    }
    CHECK(std::abs(second / double(n) - 0.3) < 0.03);
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(marg[k] / double(n) - 0.325) < 0.02);
}

TEST_CASE("separability oracle: nearest centroid on generator truth features") {
    CorpusConfig cfg;
    cfg.n_per_class = 150;
    cfg.seed = 5;
    Corpus c = build_corpus(cfg);
    std::vector<const Dataset *> splits{&c.train, &c.val};
    // class centroids of (speed, bounce) from the train split
    std::array<double, 4> ms{}, mb{};
    std::array<int, 4> cnt{};
    for (const LabeledClip &cl : c.train.clips) {
        int y = __builtin_ctz(cl.labels);
        ms[y] += cl.speed_bl;
        mb[y] += cl.bounce_bh;
        cnt[y]++;
    }
    for (int k = 0; k < 4; ++k) {
        REQUIRE(cnt[k] > 0);
        ms[k] /= cnt[k];
        mb[k] /= cnt[k];
    }
    int total = 0, correct = 0;
    for (const Dataset *ds : splits)
        for (const LabeledClip &cl : ds->clips) {
            int y = __builtin_ctz(cl.labels);
            int best = -1;
            double bd = 1e18;
            for (int k = 0; k < 4; ++k) {
                double dsp = cl.speed_bl - ms[k], dbn = cl.bounce_bh - mb[k];
                double d = dsp * dsp + dbn * dbn;
                if (d < bd) {
                    bd = d;
                    best = k;
                }
            }
            ++total;
            correct += best == y ? 1 : 0;
        }
    CHECK(total == 600);
    CHECK(correct >= (int)(0.95 * total));
}

TEST_CASE("build_corpus: counts, split stratification, fractions") {
    CorpusConfig cfg;
    cfg.n_per_class = 2000;
    cfg.seed = 9;
    Corpus c = build_corpus(cfg);
    CHECK(c.train.clips.size() == 6800);
    CHECK(c.val.clips.size() == 1200);

    std::set<uint32_t> train_ids, val_ids;
    std::array<int, 4> train_per_class{}, val_per_class{};
    for (const LabeledClip &cl : c.train.clips) {
        train_ids.insert(cl.creature_id);
        train_per_class[__builtin_ctz(cl.labels)]++;
    }
    for (const LabeledClip &cl : c.val.clips) {
        val_ids.insert(cl.creature_id);
        val_per_class[__builtin_ctz(cl.labels)]++;
    }
    for (int k = 0; k < 4; ++k) {
        CHECK(train_per_class[k] == 1700);
        CHECK(val_per_class[k] == 300);
    }
    std::vector<uint32_t> inter;
    std::set_intersection(train_ids.begin(), train_ids.end(), val_ids.begin(),
                          val_ids.end(), std::back_inserter(inter));
    CHECK(inter.empty());

    // fraction 0.5 halves per-class train counts exactly, val unchanged
    CorpusConfig half = cfg;
    half.fraction = 0.5;
    Corpus h = build_corpus(half);
    CHECK(h.train.clips.size() == 3400);
    CHECK(h.val.clips.size() == 1200);
    std::array<int, 4> half_per_class{};
    for (const LabeledClip &cl : h.train.clips)
        half_per_class[__builtin_ctz(cl.labels)]++;
    for (int k = 0; k < 4; ++k) CHECK(half_per_class[k] == 850);
    // validation split identical across fractions
    REQUIRE(h.val.clips.size() == c.val.clips.size());
    for (size_t i = 0; i < h.val.clips.size(); ++i)
        CHECK(std::memcmp(h.val.clips[i].px.data(), c.val.clips[i].px.data(),
                          h.val.clips[i].px.size()) == 0);

    CorpusConfig eighth = cfg;
    eighth.fraction = 0.125;
    Corpus e = build_corpus(eighth);
    CHECK(std::abs((int)e.train.clips.size() - 850) <= 8);
    CHECK(e.val.clips.size() == 1200);

    CorpusConfig bad = cfg;
    bad.n_per_class = 0;
    CHECK_THROWS_AS(build_corpus(bad), ConfigError);
}

TEST_CASE("dataset file round trip") {
    CorpusConfig cfg;
    cfg.n_per_class = 24;
    cfg.seed = 3;
    Corpus c = build_corpus(cfg);
    std::string path = "test_ds_tmp.bin";
    save_dataset(path, c.train);
    Dataset d = load_dataset(path);
    REQUIRE(d.clips.size() == c.train.clips.size());
    for (size_t i = 0; i < d.clips.size(); ++i) {
        CHECK(d.clips[i].creature_id == c.train.clips[i].creature_id);
        CHECK(d.clips[i].labels == c.train.clips[i].labels);
        CHECK(std::memcmp(d.clips[i].px.data(), c.train.clips[i].px.data(),
                          d.clips[i].px.size()) == 0);
    }
    // corrupt magic
    std::FILE *f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fputc('X', f);
    std::fclose(f);
    CHECK_THROWS_AS(load_dataset(path), IoError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_dataset("missing_ds.bin"), IoError);
}
