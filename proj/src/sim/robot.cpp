#include "rlwav/sim/robot.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace rlwav::sim {

void RobotConfig::validate() const {
    auto pos = [](double v, const char *what) {
        if (!(v > 0)) throw ConfigError(std::string("robot config: ") + what + " must be > 0");
    };
    pos(body_len, "body_len");
    pos(l_thigh, "l_thigh");
    pos(l_shank, "l_shank");
    pos(mass, "mass");
    pos(inertia_base, "inertia_base");
    pos(inertia_joint, "inertia_joint");
    pos(kp, "kp");
    pos(tau_lim, "tau_lim");
    pos(qd_lim, "qd_lim");
    pos(qdd_lim, "qdd_lim");
    pos(act_rate_lim, "act_rate_lim");
    pos(f_lim, "f_lim");
    pos(t_air_des, "t_air_des");
    pos(pitch_lim, "pitch_lim");
    pos(policy_dt, "policy_dt");
    if (substeps < 1) throw ConfigError("robot config: substeps must be >= 1");
    for (int k = 0; k < kJoints; ++k)
        if (!(q_min[k] < q_max[k])) throw ConfigError("robot config: q_min must be < q_max");
}

double RobotConfig::stand_height() const {
    // hips sit at base-center height; foot depth below hip at default pose
    double a = q_default[0], b = q_default[0] + q_default[1];
    return l_thigh * std::cos(a) + l_shank * std::cos(b);
}

const char *ConstraintValues::name(int i) {
    static const char *fixed[] = {"knee_collision", "base_collision"};
    static const char *feet[] = {"fl", "fr", "rl", "rr"};
    static const char *joints[] = {"fl_hip", "fl_knee", "fr_hip", "fr_knee",
                                   "rl_hip", "rl_knee", "rr_hip", "rr_knee"};
    static std::array<std::string, kCount> names = [] {
        std::array<std::string, kCount> n;
        n[0] = fixed[0];
        n[1] = fixed[1];
        for (int j = 0; j < 4; ++j) n[kFootForce + j] = std::string("foot_force_") + feet[j];
        for (int j = 0; j < 4; ++j) n[kAirTime + j] = std::string("air_time_") + feet[j];
        for (int k = 0; k < 8; ++k) n[kJointMax + k] = std::string("joint_max_") + joints[k];
        for (int k = 0; k < 8; ++k) n[kJointMin + k] = std::string("joint_min_") + joints[k];
        for (int k = 0; k < 8; ++k) n[kVel + k] = std::string("joint_vel_") + joints[k];
        for (int k = 0; k < 8; ++k) n[kAcc + k] = std::string("joint_acc_") + joints[k];
        for (int k = 0; k < 8; ++k) n[kTorque + k] = std::string("torque_") + joints[k];
        for (int k = 0; k < 8; ++k) n[kActRate + k] = std::string("action_rate_") + joints[k];
        n[kPitch] = "pitch";
        return n;
    }();
    return names[size_t(i)].c_str();
}

void hip_pivot(const RobotState &s, const RobotConfig &cfg, int leg, double &hx, double &hz) {
    // legs 0,1 (FL,FR) front; legs 2,3 (RL,RR) rear
    double off = (leg < 2) ? cfg.hip_x : -cfg.hip_x;
    double c = std::cos(s.pitch), sn = std::sin(s.pitch);
    hx = s.x + off * c;
    hz = s.z + off * sn;
}

LegPoints leg_points(const RobotState &s, const RobotConfig &cfg, int leg) {
    double hx, hz;
    hip_pivot(s, cfg, leg, hx, hz);
    double qh = s.q[leg * 2], qk = s.q[leg * 2 + 1];
    double a = s.pitch + qh;        // thigh world angle, 0 = straight down
    double b = a + qk;              // shank world angle
    LegPoints p;
    p.knee_x = hx + cfg.l_thigh * std::sin(a);
    p.knee_z = hz - cfg.l_thigh * std::cos(a);
    p.foot_x = p.knee_x + cfg.l_shank * std::sin(b);
    p.foot_z = p.knee_z - cfg.l_shank * std::cos(b);
    return p;
}

RobotState reset(const RobotConfig &cfg, Rng &rng, bool zero_noise) {
    RobotState s;
    // settle the base into the contact springs so the pose starts at static
    // equilibrium: each foot carries mg/4 through its normal spring
    s.z = cfg.stand_height() - cfg.mass * cfg.gravity / (4.0 * cfg.contact_kn);
    for (int k = 0; k < kJoints; ++k) {
        double n = zero_noise ? 0.0 : rng.uniform(-cfg.reset_noise, cfg.reset_noise);
        s.q[k] = clampd(cfg.q_default[k] + n, cfg.q_min[k], cfg.q_max[k]);
        s.prev_action[k] = s.q[k];
    }
    for (int j = 0; j < kFeet; ++j) {
        LegPoints p = leg_points(s, cfg, j);
        s.contact[j] = p.foot_z <= 0.0;
        s.anchor_x[j] = p.foot_x;
        s.t_air[j] = 0.0;
    }
    return s;
}

void pd_torque(const double *q_target, const double *q, const double *qd, const RobotConfig &cfg, double *tau) {
    for (int k = 0; k < kJoints; ++k) {
        double t = cfg.kp * (q_target[k] - q[k]) - cfg.kd * qd[k];
        tau[k] = clampd(t, -cfg.tau_lim, cfg.tau_lim);
    }
}

namespace {

// Contact force (world x,z) for one foot. Normal: spring-damper with the
// damper capped at the spring term. Tangential: spring to the friction
// anchor set at touchdown; the anchor slips when the force hits the mu N
// cone, which gives stiction without the stiff viscous term a pure damper
// model would inject into the light joints.
void foot_force(const RobotState &s, const RobotConfig &cfg, int leg, const LegPoints &p,
                double &anchor, double &fx, double &fz) {
    fx = fz = 0;
    double pen = -p.foot_z;
    if (pen <= 0) return;
    // foot world velocity: base + pitch x r + joint contributions
    double rx = p.foot_x - s.x, rz = p.foot_z - s.z;
    double vx = s.vx - s.pitch_rate * rz;
    double vz = s.vz + s.pitch_rate * rx;
    double qh = s.pitch + s.q[leg * 2];
    double qk = qh + s.q[leg * 2 + 1];
    // d(foot)/d(hip) = l1 d'(a) + l2 d'(b), d(foot)/d(knee) = l2 d'(b); d'(a) = (cos a, sin a)
    double jh_x = cfg.l_thigh * std::cos(qh) + cfg.l_shank * std::cos(qk);
    double jh_z = cfg.l_thigh * std::sin(qh) + cfg.l_shank * std::sin(qk);
    double jk_x = cfg.l_shank * std::cos(qk);
    double jk_z = cfg.l_shank * std::sin(qk);
    vx += jh_x * s.qd[leg * 2] + jk_x * s.qd[leg * 2 + 1];
    vz += jh_z * s.qd[leg * 2] + jk_z * s.qd[leg * 2 + 1];
    double spring = cfg.contact_kn * pen;
    double n = clampd(spring - cfg.contact_cn * vz, 0.0, 2.0 * spring);
    if (n <= 0) return;
    double t = -cfg.contact_kt * (p.foot_x - anchor) - cfg.contact_ct * vx;
    double cap = cfg.mu * n;
    if (t > cap) {
        t = cap;
        anchor = p.foot_x + cap / cfg.contact_kt;
    } else if (t < -cap) {
        t = -cap;
        anchor = p.foot_x - cap / cfg.contact_kt;
    }
    fx = t;
    fz = n;
}

}  // namespace

ConstraintValues step(RobotState &s, const std::array<double, kJoints> &action, const RobotConfig &cfg) {
    RobotState before = s;
    std::array<double, kJoints> target;
    for (int k = 0; k < kJoints; ++k) target[k] = clampd(action[k], cfg.q_min[k], cfg.q_max[k]);

    s.sub_max_qd.fill(0);
    s.sub_max_tau.fill(0);
    s.sub_max_force.fill(0);
    s.touchdown.fill(false);
    s.touchdown_air.fill(0);
    s.knee_hit = false;
    s.base_hit = false;

    const double dt = cfg.policy_dt / cfg.substeps;
    for (int sub = 0; sub < cfg.substeps; ++sub) {
        // PD torques on current state; constraint sees the pre-clamp value
        std::array<double, kJoints> tau;
        for (int k = 0; k < kJoints; ++k) {
            double t = cfg.kp * (target[k] - s.q[k]) - cfg.kd * s.qd[k];
            s.sub_max_tau[k] = std::max(s.sub_max_tau[k], std::abs(t));
            tau[k] = cfg.clamp_torque ? clampd(t, -cfg.tau_lim, cfg.tau_lim) : t;
        }

        // generalized forces from ground contact; base force/torque sums are
        // combined pairwise so that swapping the legs of a pair leaves the
        // floating-point result bit-identical (mirror determinism)
        std::array<double, kFeet> leg_fx{}, leg_fz{}, leg_tq{};
        std::array<double, kJoints> tau_c{};
        std::array<LegPoints, kFeet> pts;
        for (int leg = 0; leg < kFeet; ++leg) {
            pts[leg] = leg_points(s, cfg, leg);
            double fx, fz;
            foot_force(s, cfg, leg, pts[leg], s.anchor_x[leg], fx, fz);
            if (fx != 0 || fz != 0) {
                double rx = pts[leg].foot_x - s.x, rz = pts[leg].foot_z - s.z;
                leg_fx[leg] = fx;
                leg_fz[leg] = fz;
                leg_tq[leg] = rx * fz - rz * fx;
                double qh = s.pitch + s.q[leg * 2];
                double qk = qh + s.q[leg * 2 + 1];
                double jh_x = cfg.l_thigh * std::cos(qh) + cfg.l_shank * std::cos(qk);
                double jh_z = cfg.l_thigh * std::sin(qh) + cfg.l_shank * std::sin(qk);
                double jk_x = cfg.l_shank * std::cos(qk);
                double jk_z = cfg.l_shank * std::sin(qk);
                tau_c[leg * 2] += jh_x * fx + jh_z * fz;
                tau_c[leg * 2 + 1] += jk_x * fx + jk_z * fz;
            }
            s.sub_max_force[leg] = std::max(
                s.sub_max_force[leg], std::hypot(fx, fz));
            if (pts[leg].knee_z < 0) s.knee_hit = true;
        }
        double fx_tot = (leg_fx[0] + leg_fx[1]) + (leg_fx[2] + leg_fx[3]);
        double fz_tot = (leg_fz[0] + leg_fz[1]) + (leg_fz[2] + leg_fz[3]);
        double tq_pitch = (leg_tq[0] + leg_tq[1]) + (leg_tq[2] + leg_tq[3]);
        {
            // base rectangle corners
            double c = std::cos(s.pitch), sn = std::sin(s.pitch);
            double hx = cfg.body_len / 2, hz = cfg.body_h / 2;
            for (int cx = -1; cx <= 1; cx += 2)
                for (int cz = -1; cz <= 1; cz += 2)
                    if (s.z + cx * hx * sn + cz * hz * c < 0) s.base_hit = true;
        }

        // semi-implicit Euler
        s.vx += dt * fx_tot / cfg.mass;
        s.vz += dt * (fz_tot / cfg.mass - cfg.gravity);
        s.pitch_rate += dt * tq_pitch / cfg.inertia_base;
        for (int k = 0; k < kJoints; ++k) {
            s.qd[k] += dt * (tau[k] + tau_c[k]) / cfg.inertia_joint;
            s.sub_max_qd[k] = std::max(s.sub_max_qd[k], std::abs(s.qd[k]));
        }
        // plastic touchdown: a foot about to cross the surface this substep is
        // slowed through the generalized effective mass so it lands just
        // below the surface instead. Without this, a fast foot tunnels v*dt
        // deep in one substep and the penalty spring turns that into energy
        // out of nowhere. Impulses couple through the base, so legs are
        // processed in foot-position order (an index-free order, for mirror
        // determinism), re-reading the velocities each time.
        {
            std::array<int, kFeet> order{0, 1, 2, 3};
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (pts[a].foot_x != pts[b].foot_x) return pts[a].foot_x < pts[b].foot_x;
                return pts[a].foot_z < pts[b].foot_z;
            });
            for (int leg : order) {
                const LegPoints &p = pts[leg];
                if (p.foot_z < 0) continue;  // already handled by the spring
                double rx = p.foot_x - s.x;
                double qh = s.pitch + s.q[leg * 2];
                double qk = qh + s.q[leg * 2 + 1];
                double jh_z = cfg.l_thigh * std::sin(qh) + cfg.l_shank * std::sin(qk);
                double jk_z = cfg.l_shank * std::sin(qk);
                double vn = s.vz + s.pitch_rate * rx + jh_z * s.qd[leg * 2] + jk_z * s.qd[leg * 2 + 1];
                if (vn >= 0 || p.foot_z + dt * vn >= 0) continue;
                double vn_land = -(p.foot_z + 1e-9) / dt;  // touches down this substep
                double w = 1.0 / cfg.mass + rx * rx / cfg.inertia_base +
                           (jh_z * jh_z + jk_z * jk_z) / cfg.inertia_joint;
                double imp = (vn_land - vn) / w;
                s.vz += imp / cfg.mass;
                s.pitch_rate += imp * rx / cfg.inertia_base;
                s.qd[leg * 2] += imp * jh_z / cfg.inertia_joint;
                s.qd[leg * 2 + 1] += imp * jk_z / cfg.inertia_joint;
            }
        }

        s.x += dt * s.vx;
        s.z += dt * s.vz;
        s.pitch += dt * s.pitch_rate;
        for (int k = 0; k < kJoints; ++k) s.q[k] += dt * s.qd[k];

        // contact flags, friction anchors and air-time bookkeeping on the new positions
        for (int leg = 0; leg < kFeet; ++leg) {
            LegPoints p = leg_points(s, cfg, leg);
            bool c = p.foot_z <= 0.0;
            if (c && !s.contact[leg]) {
                s.touchdown[leg] = true;
                s.touchdown_air[leg] = s.t_air[leg] + dt;  // count the landing substep
                s.t_air[leg] = 0;
                s.anchor_x[leg] = p.foot_x;
            } else if (c) {
                s.t_air[leg] = 0;
            } else {
                s.t_air[leg] += dt;
            }
            s.contact[leg] = c;
        }
        s.time += dt;
    }

    s.prev_action = target;

    bool finite = std::isfinite(s.x) && std::isfinite(s.z) && std::isfinite(s.pitch) &&
                  std::isfinite(s.vx) && std::isfinite(s.vz) && std::isfinite(s.pitch_rate);
    for (int k = 0; k < kJoints; ++k) finite = finite && std::isfinite(s.q[k]) && std::isfinite(s.qd[k]);
    if (!finite) s.diverged = true;

    return measure_constraints(before, s, target, cfg);
}

ConstraintValues measure_constraints(const RobotState &before, const RobotState &after,
                                     const std::array<double, kJoints> &action, const RobotConfig &cfg) {
    ConstraintValues cv;
    cv.v[ConstraintValues::kKnee] = after.knee_hit ? 1.0 : 0.0;
    cv.v[ConstraintValues::kBase] = after.base_hit ? 1.0 : 0.0;
    for (int j = 0; j < kFeet; ++j) {
        cv.v[ConstraintValues::kFootForce + j] = after.sub_max_force[j] - cfg.f_lim;
        cv.v[ConstraintValues::kAirTime + j] =
            after.touchdown[j] ? cfg.t_air_des - after.touchdown_air[j] : 0.0;
    }
    for (int k = 0; k < kJoints; ++k) {
        cv.v[ConstraintValues::kJointMax + k] = after.q[k] - cfg.q_max[k];
        cv.v[ConstraintValues::kJointMin + k] = cfg.q_min[k] - after.q[k];
        cv.v[ConstraintValues::kVel + k] = after.sub_max_qd[k] - cfg.qd_lim;
        cv.v[ConstraintValues::kAcc + k] =
            std::abs(after.qd[k] - before.qd[k]) / cfg.policy_dt - cfg.qdd_lim;
        cv.v[ConstraintValues::kTorque + k] = after.sub_max_tau[k] - cfg.tau_lim;
        cv.v[ConstraintValues::kActRate + k] =
            std::abs(action[k] - before.prev_action[k]) / cfg.policy_dt - cfg.act_rate_lim;
    }
    cv.v[ConstraintValues::kPitch] = std::abs(after.pitch) - cfg.pitch_lim;
    return cv;
}

void observe(const RobotState &s, int skill, float *obs) {
    for (int k = 0; k < kJoints; ++k) obs[k] = float(s.q[k]);
    for (int k = 0; k < kJoints; ++k) obs[8 + k] = float(s.qd[k] * 0.1);
    obs[16] = float(std::sin(s.pitch));
    obs[17] = float(std::cos(s.pitch));
    obs[18] = float(s.pitch_rate * 0.25);
    for (int k = 0; k < kJoints; ++k) obs[19 + k] = float(s.prev_action[k]);
    for (int i = 0; i < kSkills; ++i) obs[27 + i] = (i == skill) ? 1.f : 0.f;
}

RobotState mirror_state(const RobotState &s) {
    RobotState m = s;
    sym_joints(s.q.data(), m.q.data());
    sym_joints(s.qd.data(), m.qd.data());
    sym_joints(s.prev_action.data(), m.prev_action.data());
    // feet order FL,FR,RL,RR: swap 0<->1 and 2<->3
    std::swap(m.t_air[0], m.t_air[1]);
    std::swap(m.t_air[2], m.t_air[3]);
    std::swap(m.contact[0], m.contact[1]);
    std::swap(m.contact[2], m.contact[3]);
    std::swap(m.anchor_x[0], m.anchor_x[1]);
    std::swap(m.anchor_x[2], m.anchor_x[3]);
    return m;
}

double total_energy(const RobotState &s, const RobotConfig &cfg) {
    double e = 0.5 * cfg.mass * (s.vx * s.vx + s.vz * s.vz) +
               0.5 * cfg.inertia_base * s.pitch_rate * s.pitch_rate;
    for (int k = 0; k < kJoints; ++k) e += 0.5 * cfg.inertia_joint * s.qd[k] * s.qd[k];
    e += cfg.mass * cfg.gravity * s.z;
    for (int leg = 0; leg < kFeet; ++leg) {
        LegPoints p = leg_points(s, cfg, leg);
        double pen = -p.foot_z;
        if (pen > 0) {
            e += 0.5 * cfg.contact_kn * pen * pen;
            double st = p.foot_x - s.anchor_x[leg];
            e += 0.5 * cfg.contact_kt * st * st;
        }
    }
    return e;
}

}  // namespace rlwav::sim
