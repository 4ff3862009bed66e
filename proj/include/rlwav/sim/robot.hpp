#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "rlwav/common.hpp"

namespace rlwav::sim {

// Planar quadruped in the x-z plane. Four two-segment legs (hip + knee) are
// coplanar; FL/FR attach at the front of the base, RL/RR at the rear. Joint
// order everywhere: FL hip, FL knee, FR hip, FR knee, RL hip, RL knee,
// RR hip, RR knee. Hip angle 0 points straight down in the body frame,
// positive swings the leg forward (+x); knee angle is relative to the thigh.
constexpr int kJoints = 8;
constexpr int kFeet = 4;
constexpr int kObsDim = 31;
constexpr int kSkills = 4;

struct RobotConfig {
    // geometry / inertia
    double body_len = 0.40;       // m, rendered rectangle length
    double body_h = 0.08;         // m, rendered rectangle height
    double hip_x = 0.20;          // m, |x| of hip pivots from base center
    double l_thigh = 0.16;        // m
    double l_shank = 0.16;        // m
    double mass = 2.5;            // kg, total (legs treated as massless links)
    double inertia_base = 0.035;  // kg m^2, pitch inertia
    double inertia_joint = 0.02; // kg m^2, reflected gear-train inertia per joint

    std::array<double, kJoints> q_default{0.35, -0.7, 0.35, -0.7, 0.35, -0.7, 0.35, -0.7};
    std::array<double, kJoints> q_min{-1.0, -2.4, -1.0, -2.4, -1.0, -2.4, -1.0, -2.4};
    std::array<double, kJoints> q_max{1.5, 0.2, 1.5, 0.2, 1.5, 0.2, 1.5, 0.2};

    // actuation; kp sized so stance sag under gravity stays sub-millimeter
    double kp = 40.0;
    double kd = 1.0;
    double tau_lim = 8.0;       // N m
    double qd_lim = 10.0;       // rad/s
    double qdd_lim = 1200.0;    // rad/s^2
    double act_rate_lim = 12.0; // rad/s
    bool clamp_torque = true;   // ablation hook; constraint is measured pre-clamp

    // constraint limits
    double f_lim = 60.0;     // N, per-foot contact force magnitude
    double t_air_des = 0.15; // s, desired swing duration
    double pitch_lim = 0.4;  // rad

    // ground contact: spring-damper normal force, anchor-spring friction.
    // Damper capped at the spring term so degenerate poses cannot make the
    // normal force act like extra stiffness on the joint side.
    // Dampers exceed k*dt/2 so the discrete contact cannot pump energy;
    // stiffnesses are sized so the worst-case leg-Jacobian coupling onto the
    // joint inertia stays inside the semi-implicit stability region.
    double contact_kn = 6000.0;  // N/m
    double contact_cn = 40.0;    // N s/m
    double contact_kt = 600.0;   // N/m, tangential anchor-spring stiffness
    double contact_ct = 3.0;     // N s/m
    double mu = 0.8;

    double gravity = 9.81;
    double policy_dt = 0.02;
    int substeps = 4;
    double reset_noise = 0.05; // rad, uniform on joint angles

    void validate() const;
    // base height with feet exactly on the ground at q_default, zero pitch
    double stand_height() const;
};

struct RobotState {
    double x = 0, z = 0, pitch = 0;
    double vx = 0, vz = 0, pitch_rate = 0;
    std::array<double, kJoints> q{};
    std::array<double, kJoints> qd{};
    std::array<double, kFeet> t_air{};
    std::array<bool, kFeet> contact{};
    std::array<double, kFeet> anchor_x{}; // friction anchor while in contact
    std::array<double, kJoints> prev_action{};
    double time = 0;
    bool diverged = false;

    // per-policy-step bookkeeping filled by step(), consumed by
    // measure_constraints(): maxima over the PD substeps
    std::array<double, kJoints> sub_max_qd{};
    std::array<double, kJoints> sub_max_tau{}; // pre-clamp |PD output|
    std::array<double, kFeet> sub_max_force{}; // contact force magnitude
    std::array<bool, kFeet> touchdown{};       // air->contact happened this step
    std::array<double, kFeet> touchdown_air{}; // swing time at that touchdown
    bool knee_hit = false;                     // any knee point below ground
    bool base_hit = false;                     // any base corner below ground
};

// Signed constraint expressions; violation iff entry > 0. Layout below.
struct ConstraintValues {
    static constexpr int kKnee = 0;       // indicator {0,1}, hard
    static constexpr int kBase = 1;       // indicator {0,1}, hard
    static constexpr int kFootForce = 2;  // x4, hard
    static constexpr int kAirTime = 6;    // x4, soft (nonzero only at touchdown)
    static constexpr int kJointMax = 10;  // x8, soft: q - qmax
    static constexpr int kJointMin = 18;  // x8, soft: qmin - q
    static constexpr int kVel = 26;       // x8, soft
    static constexpr int kAcc = 34;       // x8, soft
    static constexpr int kTorque = 42;    // x8, soft (pre-clamp)
    static constexpr int kActRate = 50;   // x8, soft
    static constexpr int kPitch = 58;     // x1, soft
    static constexpr int kCount = 59;
    static constexpr int kHardCount = 6;  // entries [0, 6) are hard

    std::array<double, kCount> v{};

    static bool is_hard(int i) { return i < kHardCount; }
    static const char *name(int i);
    bool any_violation() const {
        for (double x : v)
            if (x > 0) return true;
        return false;
    }
};

// forward kinematics in world coordinates
struct LegPoints {
    double knee_x, knee_z, foot_x, foot_z;
};
LegPoints leg_points(const RobotState &s, const RobotConfig &cfg, int leg);
void hip_pivot(const RobotState &s, const RobotConfig &cfg, int leg, double &hx, double &hz);

RobotState reset(const RobotConfig &cfg, Rng &rng, bool zero_noise = false);

// tau_k = clamp(Kp (target - q) - Kd qd, +-tau_lim)
void pd_torque(const double *q_target, const double *q, const double *qd, const RobotConfig &cfg, double *tau);

// Advances one policy step (substeps x semi-implicit Euler), updating contact
// flags, air timers, substep maxima and prev_action; returns the constraint
// measurements for the step. Non-finite dynamics set state.diverged.
ConstraintValues step(RobotState &s, const std::array<double, kJoints> &action, const RobotConfig &cfg);

// Pure measurement used by step(); `after` must carry the substep bookkeeping
// of the transition. Acceleration is a finite difference of qd across the
// policy step.
ConstraintValues measure_constraints(const RobotState &before, const RobotState &after,
                                     const std::array<double, kJoints> &action, const RobotConfig &cfg);

// [q(8), qd(8)*0.1, sin pitch, cos pitch, pitch_rate*0.25, prev_action(8), skill one-hot(4)]
void observe(const RobotState &s, int skill, float *obs);

// FL<->FR is (0,1)<->(2,3); RL<->RR is (4,5)<->(6,7)
template <typename T>
void sym_joints(const T *in, T *out) {
    for (int pair = 0; pair < 2; ++pair) {
        int b = pair * 4;
        out[b + 0] = in[b + 2];
        out[b + 1] = in[b + 3];
        out[b + 2] = in[b + 0];
        out[b + 3] = in[b + 1];
    }
}

template <typename T>
void sym_obs(const T *obs, T *out) {
    sym_joints(obs, out);            // q
    sym_joints(obs + 8, out + 8);    // qd
    out[16] = obs[16];
    out[17] = obs[17];
    out[18] = obs[18];
    sym_joints(obs + 19, out + 19);  // prev action
    for (int i = 27; i < kObsDim; ++i) out[i] = obs[i];
}

template <typename T>
void sym_action(const T *a, T *out) {
    sym_joints(a, out);
}

// left-right mirror of a dynamics state (swaps FL<->FR and RL<->RR blocks)
RobotState mirror_state(const RobotState &s);

// kinetic + gravitational + contact-spring energy; for passive-mode audits
double total_energy(const RobotState &s, const RobotConfig &cfg);

}  // namespace rlwav::sim
