#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "rlwav/sim/robot.hpp"

using namespace rlwav;
using namespace rlwav::sim;

namespace {

// field-wise bit comparison (memcmp would read struct padding)
bool states_equal(const RobotState &a, const RobotState &b) {
    auto eq = [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; };
    bool ok = eq(a.x, b.x) && eq(a.z, b.z) && eq(a.pitch, b.pitch) && eq(a.vx, b.vx) &&
              eq(a.vz, b.vz) && eq(a.pitch_rate, b.pitch_rate) && eq(a.time, b.time) &&
              a.diverged == b.diverged;
    for (int k = 0; k < kJoints; ++k)
        ok = ok && eq(a.q[k], b.q[k]) && eq(a.qd[k], b.qd[k]) &&
             eq(a.prev_action[k], b.prev_action[k]);
    for (int j = 0; j < kFeet; ++j)
        ok = ok && eq(a.t_air[j], b.t_air[j]) && a.contact[j] == b.contact[j] &&
             eq(a.anchor_x[j], b.anchor_x[j]);
    return ok;
}

}  // namespace

TEST_CASE("reset: nominal pose, determinism, limits") {
    RobotConfig cfg;
    cfg.validate();
    Rng rng(1);
    RobotState s = reset(cfg, rng, /*zero_noise=*/true);
    for (int k = 0; k < kJoints; ++k) CHECK(s.q[k] == cfg.q_default[k]);
    // feet start statically loaded: pressed into the ground springs by mg/4 each
    double pen0 = cfg.mass * cfg.gravity / (4.0 * cfg.contact_kn);
    for (int j = 0; j < kFeet; ++j) {
        LegPoints p = leg_points(s, cfg, j);
        CHECK(p.foot_z <= 0.0);
        CHECK(p.foot_z == doctest::Approx(-pen0).epsilon(1e-9));
        CHECK(s.contact[j]);
    }
    Rng a(42), b(42);
    RobotState sa = reset(cfg, a), sb = reset(cfg, b);
    CHECK(states_equal(sa, sb));
    Rng c(7);
    for (int i = 0; i < 1000; ++i) {
        RobotState st = reset(cfg, c);
        for (int k = 0; k < kJoints; ++k) {
            CHECK(st.q[k] >= cfg.q_min[k]);
            CHECK(st.q[k] <= cfg.q_max[k]);
        }
    }
}

TEST_CASE("pd torque: zero error, proportional, saturation") {
    RobotConfig cfg;
    double q[8], qd[8] = {0}, tgt[8], tau[8];
    for (int k = 0; k < 8; ++k) q[k] = tgt[k] = cfg.q_default[k];
    pd_torque(tgt, q, qd, cfg, tau);
    for (int k = 0; k < 8; ++k) CHECK(tau[k] == 0.0);
    RobotConfig nokd = cfg;
    nokd.kd = 0;
    for (int k = 0; k < 8; ++k) tgt[k] = q[k] + 0.1;
    pd_torque(tgt, q, qd, nokd, tau);
    for (int k = 0; k < 8; ++k) CHECK(tau[k] == doctest::Approx(nokd.kp * 0.1));
    for (int k = 0; k < 8; ++k) tgt[k] = q[k] + 100.0;
    pd_torque(tgt, q, qd, cfg, tau);
    for (int k = 0; k < 8; ++k) CHECK(tau[k] == cfg.tau_lim);
}

TEST_CASE("equilibrium: robot at rest holding default pose keeps base height") {
    RobotConfig cfg;
    Rng rng(2);
    RobotState s = reset(cfg, rng, true);
    double z_init = s.z;
    // settle onto the contact springs first ("at rest")
    for (int i = 0; i < 100; ++i) step(s, cfg.q_default, cfg);
    double z0 = s.z;
    CHECK(std::abs(z0 - z_init) < 3e-3);  // stance sag: penetration + PD sag
    for (int i = 0; i < 50; ++i) step(s, cfg.q_default, cfg);
    CHECK(!s.diverged);
    CHECK(std::abs(s.z - z0) < 1e-3);
    CHECK(std::abs(s.pitch) < 0.02);
    CHECK(std::abs(s.x) < 5e-3);
    // and it stays put much longer
    for (int i = 0; i < 450; ++i) step(s, cfg.q_default, cfg);
    CHECK(!s.diverged);
    CHECK(std::abs(s.z - z0) < 1e-3);
}

TEST_CASE("ballistic flight matches projectile closed form") {
    RobotConfig cfg;
    cfg.kp = 0;
    cfg.kd = 0;
    Rng rng(3);
    RobotState s = reset(cfg, rng, true);
    s.z = cfg.stand_height() + 0.5;  // well airborne
    s.vz = 0.3;
    double z0 = s.z, v0 = s.vz;
    int n = int(0.2 / cfg.policy_dt);  // 0.2 s
    for (int i = 0; i < n; ++i) step(s, cfg.q_default, cfg);
    double t = n * cfg.policy_dt;
    double z_exact = z0 + v0 * t - 0.5 * cfg.gravity * t * t;
    CHECK(std::abs(s.z - z_exact) < 0.01 * std::abs(z_exact));
    CHECK(s.vx == 0.0);
}

TEST_CASE("passive mode never gains energy") {
    // Semi-implicit Euler conserves a shadow energy, so the true energy
    // wobbles within an O(omega*dt) band during contact; the non-pumping
    // property is that the trajectory never rises above its initial energy
    // and dissipates over the rollout. Isolated per-step wobble is bounded.
    for (unsigned seed = 1; seed <= 4; ++seed) {
        RobotConfig cfg;
        cfg.kp = 0;
        cfg.kd = 0;
        Rng rng(seed);
        RobotState s = reset(cfg, rng, false);
        s.z += 0.02 + 0.05 * rng.uniform();  // drop, bounce, collapse
        s.pitch = rng.uniform(-0.1, 0.1);
        for (int k = 0; k < 4; ++k) s.qd[k * 2] = rng.uniform(-1.0, 1.0);
        double e0 = total_energy(s, cfg);
        double prev = e0, max_exceed = -1e18, max_gain = 0, efin = e0;
        for (int i = 0; i < 500; ++i) {
            step(s, cfg.q_default, cfg);
            double e = total_energy(s, cfg);
            max_exceed = std::max(max_exceed, e - e0);
            max_gain = std::max(max_gain, e - prev);
            prev = e;
            efin = e;
        }
        CHECK(!s.diverged);
        CHECK(max_exceed <= 1e-9);      // never above the starting energy
        CHECK(efin <= e0 - 1.0);        // clear net dissipation over 10 s
        CHECK(max_gain <= 1.0);         // wobble band, not systematic pumping
    }
}

TEST_CASE("step determinism: same seed and actions, bit-identical trajectory") {
    RobotConfig cfg;
    Rng ra(5), rb(5);
    RobotState a = reset(cfg, ra), b = reset(cfg, rb);
    Rng act(6);
    for (int i = 0; i < 100; ++i) {
        std::array<double, kJoints> u;
        for (int k = 0; k < kJoints; ++k)
            u[k] = cfg.q_default[k] + act.uniform(-0.2, 0.2);
        step(a, u, cfg);
        step(b, u, cfg);
        CHECK(states_equal(a, b));
    }
}

TEST_CASE("constraint measurement formulas") {
    RobotConfig cfg;
    Rng rng(8);
    RobotState before = reset(cfg, rng, true);

    SUBCASE("stationary nominal pose satisfies everything") {
        RobotState s = before;
        for (int i = 0; i < 20; ++i) {
            ConstraintValues cv = step(s, cfg.q_default, cfg);
            for (int c = 0; c < ConstraintValues::kCount; ++c) {
                INFO(std::string(ConstraintValues::name(c)));
                CHECK(cv.v[c] <= 0.0);
            }
        }
    }

    SUBCASE("air-time deficit at touchdown") {
        RobotState after = before;
        after.touchdown[2] = true;
        after.touchdown_air[2] = 0.5 * cfg.t_air_des;
        ConstraintValues cv = measure_constraints(before, after, cfg.q_default, cfg);
        CHECK(cv.v[ConstraintValues::kAirTime + 2] == doctest::Approx(0.5 * cfg.t_air_des));
        CHECK(cv.v[ConstraintValues::kAirTime + 0] == 0.0);
        // long-enough swing satisfies
        after.touchdown_air[2] = 2.0 * cfg.t_air_des;
        cv = measure_constraints(before, after, cfg.q_default, cfg);
        CHECK(cv.v[ConstraintValues::kAirTime + 2] == doctest::Approx(-cfg.t_air_des));
    }

    SUBCASE("action-rate boundary is exactly zero") {
        RobotState after = before;
        std::array<double, kJoints> act = before.prev_action;
        act[3] += cfg.act_rate_lim * cfg.policy_dt;
        ConstraintValues cv = measure_constraints(before, after, act, cfg);
        CHECK(cv.v[ConstraintValues::kActRate + 3] == doctest::Approx(0.0));
        act[3] += 0.01;
        cv = measure_constraints(before, after, act, cfg);
        CHECK(cv.v[ConstraintValues::kActRate + 3] > 0.0);
    }

    SUBCASE("pitch excess and indicators") {
        RobotState after = before;
        after.pitch = cfg.pitch_lim + 0.1;
        after.knee_hit = true;
        ConstraintValues cv = measure_constraints(before, after, cfg.q_default, cfg);
        CHECK(cv.v[ConstraintValues::kPitch] == doctest::Approx(0.1));
        CHECK(cv.v[ConstraintValues::kKnee] == 1.0);
        CHECK(cv.v[ConstraintValues::kBase] == 0.0);
        CHECK(ConstraintValues::is_hard(ConstraintValues::kKnee));
        CHECK(ConstraintValues::is_hard(ConstraintValues::kFootForce + 3));
        CHECK(!ConstraintValues::is_hard(ConstraintValues::kAirTime));
        CHECK(!ConstraintValues::is_hard(ConstraintValues::kPitch));
    }

    SUBCASE("torque measured pre-clamp while applied torque is clamped") {
        RobotState s = before;
        std::array<double, kJoints> act = cfg.q_default;
        act[0] = cfg.q_max[0];  // large error -> PD wants more than tau_lim
        ConstraintValues cv = step(s, act, cfg);
        CHECK(cv.v[ConstraintValues::kTorque + 0] > 0.0);
        CHECK(!s.diverged);
    }
}

TEST_CASE("air timers accumulate in flight and reset at touchdown") {
    RobotConfig cfg;
    Rng rng(9);
    RobotState s = reset(cfg, rng, true);
    s.z += 0.3;  // drop from height: all feet airborne
    for (int j = 0; j < kFeet; ++j) {
        s.contact[j] = false;
    }
    bool seen_touchdown = false;
    double air_before = 0;
    for (int i = 0; i < 50 && !seen_touchdown; ++i) {
        air_before = s.t_air[0];
        ConstraintValues cv = step(s, cfg.q_default, cfg);
        (void)cv;
        if (s.touchdown[0]) {
            seen_touchdown = true;
            CHECK(s.t_air[0] == 0.0);
            CHECK(s.touchdown_air[0] >= air_before);
        } else if (!s.contact[0]) {
            CHECK(s.t_air[0] == doctest::Approx(air_before + cfg.policy_dt));
        }
    }
    CHECK(seen_touchdown);
}

TEST_CASE("observation layout and invariances") {
    RobotConfig cfg;
    Rng rng(10);
    RobotState s = reset(cfg, rng, true);
    float obs[kObsDim];
    observe(s, 1, obs);
    for (int k = 0; k < 8; ++k) {
        CHECK(obs[k] == doctest::Approx(cfg.q_default[k]));
        CHECK(obs[8 + k] == 0.f);
        CHECK(obs[19 + k] == doctest::Approx(cfg.q_default[k]));
    }
    CHECK(obs[16] == doctest::Approx(0.f));
    CHECK(obs[17] == doctest::Approx(1.f));
    CHECK(obs[18] == 0.f);
    float sum = 0;
    for (int i = 27; i < 31; ++i) sum += obs[i];
    CHECK(sum == 1.f);
    CHECK(obs[27 + 1] == 1.f);
    // translation invariance
    RobotState moved = s;
    moved.x += 3.7;
    float obs2[kObsDim];
    observe(moved, 1, obs2);
    CHECK(std::memcmp(obs, obs2, sizeof obs) == 0);
}

TEST_CASE("symmetry operators") {
    Rng rng(11);
    SUBCASE("involution and orthogonality") {
        for (int trial = 0; trial < 100; ++trial) {
            float obs[kObsDim], once[kObsDim], twice[kObsDim];
            for (auto &v : obs) v = rng.uniformf(-2, 2);
            sym_obs(obs, once);
            sym_obs(once, twice);
            CHECK(std::memcmp(obs, twice, sizeof obs) == 0);
            double n0 = 0, n1 = 0;
            for (int i = 0; i < kObsDim; ++i) {
                n0 += double(obs[i]) * obs[i];
                n1 += double(once[i]) * once[i];
            }
            CHECK(n0 == doctest::Approx(n1));
            float act[8], aonce[8], atwice[8];
            for (auto &v : act) v = rng.uniformf(-1, 1);
            sym_action(act, aonce);
            sym_action(aonce, atwice);
            CHECK(std::memcmp(act, atwice, sizeof act) == 0);
        }
    }
    SUBCASE("identical left/right legs is a fixed point") {
        float obs[kObsDim];
        for (auto &v : obs) v = 0.25f;
        float out[kObsDim];
        sym_obs(obs, out);
        CHECK(std::memcmp(obs, out, sizeof obs) == 0);
    }
    SUBCASE("observe commutes with the mirror") {
        RobotConfig cfg;
        RobotState s = reset(cfg, rng, false);
        // make it asymmetric
        s.q[0] += 0.2;
        s.q[5] -= 0.3;
        s.qd[2] = 1.1;
        s.prev_action[6] = 0.4;
        s.pitch = 0.12;
        s.pitch_rate = -0.3;
        RobotState m = mirror_state(s);
        float a[kObsDim], b[kObsDim], symd[kObsDim];
        observe(s, 2, a);
        observe(m, 2, b);
        sym_obs(a, symd);
        CHECK(std::memcmp(b, symd, sizeof b) == 0);
    }
    SUBCASE("mirrored dynamics: trajectories are mirror images") {
        RobotConfig cfg;
        RobotState s = reset(cfg, rng, false);
        RobotState m = mirror_state(s);
        Rng act(12);
        for (int i = 0; i < 60; ++i) {
            std::array<double, kJoints> u;
            for (int k = 0; k < kJoints; ++k) u[k] = cfg.q_default[k] + act.uniform(-0.25, 0.25);
            std::array<double, kJoints> mu_;
            sym_joints(u.data(), mu_.data());
            step(s, u, cfg);
            step(m, mu_, cfg);
            RobotState expect = mirror_state(s);
            CHECK(m.x == doctest::Approx(expect.x).epsilon(1e-12));
            CHECK(m.z == doctest::Approx(expect.z).epsilon(1e-12));
            CHECK(m.pitch == doctest::Approx(expect.pitch).epsilon(1e-12));
            for (int k = 0; k < kJoints; ++k) {
                CHECK(m.q[k] == doctest::Approx(expect.q[k]).epsilon(1e-12));
                CHECK(m.qd[k] == doctest::Approx(expect.qd[k]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("config validation rejects bad limits") {
    RobotConfig cfg;
    cfg.tau_lim = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    RobotConfig cfg2;
    cfg2.q_min[3] = cfg2.q_max[3];
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);
}
