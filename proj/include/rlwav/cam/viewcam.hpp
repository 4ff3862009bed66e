#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "rlwav/common.hpp"
#include "rlwav/sim/robot.hpp"

namespace rlwav::cam {

constexpr int kFrameW = 64;
constexpr int kFrameH = 64;
constexpr int kClipLen = 8;

// Third-person tracking camera. The image is a square window of the x-z
// plane: `zoom` world units from the center to the left/right edge, centered
// horizontally on the robot base plus `offset_x` and vertically at `height`.
struct CameraConfig {
    double offset_x = -0.6;
    double height = 0.35;
    double zoom = 0.9;

    // named presets: "base" plus the four degraded placements
    static CameraConfig preset(const std::string &id);
    void validate() const;
};

struct Frame {
    std::array<float, kFrameW * kFrameH> px{};  // row-major, row 0 = top

    float &at(int row, int col) { return px[row * kFrameW + col]; }
    float at(int row, int col) const { return px[row * kFrameW + col]; }
};

struct Clip {
    std::array<Frame, kClipLen> frames;  // oldest -> newest
};

// Painter-ordered anti-aliased rasterizer over one frame. World->pixel:
// x right, z up; the window spans cx +- zoom horizontally.
class Canvas {
public:
    Canvas(Frame &f, double cx, double cz, double zoom);

    void fill(float v);
    // horizontal ground band at world height z
    void ground(double z, double thickness, float v);
    // capsule from (x0,z0) to (x1,z1)
    void segment(double x0, double z0, double x1, double z1, double thickness, float v);
    // rectangle centered (x,z), half-extents (hw,hh), rotated by angle
    void rect(double x, double z, double hw, double hh, double angle, float v);
    // axis-aligned-ish ellipse with rotation, semi-axes (ax, az)
    void ellipse(double x, double z, double ax, double az, double angle, float v);

private:
    template <class Sdf>
    void paint(double wx0, double wx1, double wz0, double wz1, float v, Sdf sdf);
    Frame &f_;
    double cx_, cz_, scale_;  // scale = pixels per world unit
};

// Renders ground, the base rectangle and the four two-segment legs. Left legs
// (FL, RL) at 0.8 over right legs (FR, RR) at 0.5, base 1.0 on top, ground
// 0.3, background 0.05. Rendering is done in base-relative coordinates so the
// output is exactly invariant to the robot's world x.
Frame render_frame(const sim::RobotState &s, const sim::RobotConfig &cfg,
                   const CameraConfig &cam);

// Sliding window of the most recent kClipLen frames pushed on render steps.
struct ClipBuffer {
    std::array<Frame, kClipLen> slots;
    int count = 0;  // total frames pushed

    void clear() { count = 0; }
};

// Pushes a frame rendered at policy step `step` (must be a multiple of K) and
// returns the clip of the last kClipLen frames once enough are buffered.
std::optional<Clip> push_and_assemble(ClipBuffer &buf, const Frame &frame, int step, int K);

// Binary PPM (P5, maxval 255). Intensities quantized to round(v*255).
void write_ppm(const std::string &path, const Frame &frame);
Frame read_ppm(const std::string &path);
// one file per frame: <dir>/<prefix>_NNNNNN.ppm, NNNNNN = step of frame i
void dump_clip(const std::string &dir, const std::string &prefix, const Clip &clip,
               int last_step, int K);

}  // namespace rlwav::cam
