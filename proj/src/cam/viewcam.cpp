#include "rlwav/cam/viewcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace rlwav::cam {

CameraConfig CameraConfig::preset(const std::string &id) {
    CameraConfig c;
    if (id == "base") {
        // nominal: slightly behind, robot centered and well framed
    } else if (id == "cam1") {
        // further behind: robot smaller and off-center
        c.offset_x = -0.75;
        c.zoom = 1.3;
    } else if (id == "cam2") {
        // high placement looking from above the scene
        c.height = 0.9;
        c.zoom = 1.2;
    } else if (id == "cam3") {
        // in front, low to the ground
        c.offset_x = 0.45;
        c.height = 0.12;
    } else if (id == "cam4") {
        // extreme close front view, crops part of the robot
        c.offset_x = 0.5;
        c.height = 0.3;
        c.zoom = 0.45;
    } else {
        throw ConfigError("unknown camera preset: " + id);
    }
    return c;
}

void CameraConfig::validate() const {
    if (!(zoom > 0)) throw ConfigError("camera: zoom must be > 0");
}

Canvas::Canvas(Frame &f, double cx, double cz, double zoom)
    : f_(f), cx_(cx), cz_(cz), scale_(kFrameW / (2.0 * zoom)) {}

void Canvas::fill(float v) { f_.px.fill(v); }

// Shared painting loop: rasterizes a signed-distance function over the pixel
// rows/cols covered by the world-space box, alpha-blending by edge coverage.
template <class Sdf>
void Canvas::paint(double wx0, double wx1, double wz0, double wz1, float v, Sdf sdf) {
    double pad = 1.0 / scale_;
    int c0 = std::max(0, (int)std::floor((wx0 - pad - cx_) * scale_ + kFrameW * 0.5));
    int c1 = std::min(kFrameW - 1, (int)std::ceil((wx1 + pad - cx_) * scale_ + kFrameW * 0.5));
    int r0 = std::max(0, (int)std::floor(kFrameH * 0.5 - (wz1 + pad - cz_) * scale_));
    int r1 = std::min(kFrameH - 1, (int)std::ceil(kFrameH * 0.5 - (wz0 - pad - cz_) * scale_));
    for (int r = r0; r <= r1; ++r) {
        double wz = cz_ + (kFrameH * 0.5 - (r + 0.5)) / scale_;
        for (int c = c0; c <= c1; ++c) {
            double wx = cx_ + ((c + 0.5) - kFrameW * 0.5) / scale_;
            double d = sdf(wx, wz) * scale_;  // signed distance in pixels
            float cov = (float)clampd(0.5 - d, 0.0, 1.0);
            if (cov > 0) {
                float &p = f_.at(r, c);
                p += cov * (v - p);
            }
        }
    }
}

void Canvas::ground(double z, double thickness, float v) {
    double h = thickness / 2;
    paint(cx_ - 2 * kFrameW / scale_, cx_ + 2 * kFrameW / scale_, z - h, z + h, v,
          [&](double, double wz) { return std::abs(wz - z) - h; });
}

void Canvas::segment(double x0, double z0, double x1, double z1, double thickness, float v) {
    double r = thickness / 2;
    double dx = x1 - x0, dz = z1 - z0;
    double len2 = dx * dx + dz * dz;
    paint(std::min(x0, x1) - r, std::max(x0, x1) + r, std::min(z0, z1) - r,
          std::max(z0, z1) + r, v, [&](double wx, double wz) {
              double t = len2 > 0 ? clampd(((wx - x0) * dx + (wz - z0) * dz) / len2, 0.0, 1.0) : 0.0;
              double ex = wx - (x0 + t * dx), ez = wz - (z0 + t * dz);
              return std::sqrt(ex * ex + ez * ez) - r;
          });
}

void Canvas::rect(double x, double z, double hw, double hh, double angle, float v) {
    double c = std::cos(angle), s = std::sin(angle);
    double reach = std::hypot(hw, hh);
    paint(x - reach, x + reach, z - reach, z + reach, v, [&](double wx, double wz) {
        double lx = (wx - x) * c + (wz - z) * s;
        double lz = -(wx - x) * s + (wz - z) * c;
        double ex = std::abs(lx) - hw, ez = std::abs(lz) - hh;
        double ox = std::max(ex, 0.0), oz = std::max(ez, 0.0);
        return std::sqrt(ox * ox + oz * oz) + std::min(std::max(ex, ez), 0.0);
    });
}

void Canvas::ellipse(double x, double z, double ax, double az, double angle, float v) {
    double c = std::cos(angle), s = std::sin(angle);
    double reach = std::max(ax, az);
    double m = std::min(ax, az);
    paint(x - reach, x + reach, z - reach, z + reach, v, [&](double wx, double wz) {
        double lx = (wx - x) * c + (wz - z) * s;
        double lz = -(wx - x) * s + (wz - z) * c;
        // cheap approximate sdf, exact on the axes, adequate for raster AA
        double q = std::sqrt(lx * lx / (ax * ax) + lz * lz / (az * az));
        return (q - 1.0) * m;
    });
}

Frame render_frame(const sim::RobotState &s, const sim::RobotConfig &cfg,
                   const CameraConfig &cam) {
    // base-relative copy: world x never enters, so tracking is exact
    sim::RobotState rel = s;
    rel.x = 0.0;

    Frame f;
    Canvas cv(f, cam.offset_x, cam.height, cam.zoom);
    cv.fill(0.05f);
    cv.ground(0.0, 0.03, 0.3f);
    const double leg_t = 0.03, foot_r = 0.02;
    // right pair first so left is painted over it where they overlap
    for (int leg : {1, 3, 0, 2}) {
        float v = (leg % 2 == 0) ? 0.8f : 0.5f;  // FL,RL left; FR,RR right
        sim::LegPoints p = sim::leg_points(rel, cfg, leg);
        double hx, hz;
        sim::hip_pivot(rel, cfg, leg, hx, hz);
        cv.segment(hx, hz, p.knee_x, p.knee_z, leg_t, v);
        cv.segment(p.knee_x, p.knee_z, p.foot_x, p.foot_z, leg_t, v);
        cv.segment(p.foot_x, p.foot_z, p.foot_x, p.foot_z, 2 * foot_r, v);
    }
    cv.rect(rel.x, rel.z, cfg.body_len / 2, cfg.body_h / 2, rel.pitch, 1.0f);
    return f;
}

std::optional<Clip> push_and_assemble(ClipBuffer &buf, const Frame &frame, int step, int K) {
    if (K < 1) throw ConfigError("clip buffer: K must be >= 1");
    if (step % K != 0)
        throw ConfigError("clip buffer: frame pushed on non-render step " + std::to_string(step));
    buf.slots[buf.count % kClipLen] = frame;
    buf.count++;
    if (buf.count < kClipLen) return std::nullopt;
    Clip clip;
    for (int i = 0; i < kClipLen; ++i)
        clip.frames[i] = buf.slots[(buf.count - kClipLen + i) % kClipLen];
    return clip;
}

void write_ppm(const std::string &path, const Frame &frame) {
    struct Closer {
        void operator()(std::FILE *f) const { std::fclose(f); }
    };
    std::unique_ptr<std::FILE, Closer> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + path);
    std::fprintf(fp.get(), "P5\n%d %d\n255\n", kFrameW, kFrameH);
    std::array<unsigned char, kFrameW * kFrameH> bytes;
    for (size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = (unsigned char)std::lround(clampf(frame.px[i], 0.f, 1.f) * 255.f);
    if (std::fwrite(bytes.data(), 1, bytes.size(), fp.get()) != bytes.size())
        throw IoError("short write: " + path);
}

Frame read_ppm(const std::string &path) {
    struct Closer {
        void operator()(std::FILE *f) const { std::fclose(f); }
    };
    std::unique_ptr<std::FILE, Closer> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot read " + path);
    int w = 0, h = 0, maxval = 0;
    if (std::fscanf(fp.get(), "P5 %d %d %d", &w, &h, &maxval) != 3 || w != kFrameW ||
        h != kFrameH || maxval != 255)
        throw IoError("bad ppm header: " + path);
    std::fgetc(fp.get());  // single whitespace after maxval
    Frame f;
    std::array<unsigned char, kFrameW * kFrameH> bytes;
    if (std::fread(bytes.data(), 1, bytes.size(), fp.get()) != bytes.size())
        throw IoError("short read: " + path);
    for (size_t i = 0; i < bytes.size(); ++i) f.px[i] = bytes[i] / 255.f;
    return f;
}

void dump_clip(const std::string &dir, const std::string &prefix, const Clip &clip,
               int last_step, int K) {
    for (int i = 0; i < kClipLen; ++i) {
        int step = last_step - (kClipLen - 1 - i) * K;
        char name[64];
        std::snprintf(name, sizeof name, "%s_%06d.ppm", prefix.c_str(), step);
        write_ppm(dir + "/" + name, clip.frames[i]);
    }
}

}  // namespace rlwav::cam
