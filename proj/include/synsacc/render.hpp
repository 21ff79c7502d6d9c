#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "synsacc/common.hpp"
#include "synsacc/kinematics.hpp"

namespace synsacc::render {

/// Flat-shaded 2-D eye model: the frame is filled with sclera and two moving
/// concentric disks (iris, pupil) track the gaze. background_level is the
/// fill used by eye-less frames (blank_frame); the eyeball itself covers the
/// whole near-eye crop.
struct EyeAppearance {
    double sclera_level = 200.0;
    double iris_level = 80.0;
    double pupil_level = 20.0;
    double background_level = 150.0;
    double iris_radius_px = 10.0;
    double pupil_radius_px = 4.0;
    double gain_px_per_deg = 0.9;

    void validate() const {
        if (!(pupil_radius_px > 0.0) || !(iris_radius_px > 0.0))
            throw std::invalid_argument("appearance: radii must be positive");
        if (!(pupil_radius_px < iris_radius_px))
            throw std::invalid_argument("appearance: pupil radius must be < iris radius");
        if (!(pupil_level < iris_level && iris_level < sclera_level))
            throw std::invalid_argument(
                "appearance: need pupil_level < iris_level < sclera_level");
        if (!(gain_px_per_deg > 0.0))
            throw std::invalid_argument("appearance: gain must be positive");
        for (double level :
             {sclera_level, iris_level, pupil_level, background_level})
            if (level < 0.0 || level > 255.0)
                throw std::invalid_argument("appearance: levels must be in [0,255]");
    }
};

using Frame = std::vector<double>;  // row-major height x width, values [0,255]

struct IntensityFrameSequence {
    int width = 0;
    int height = 0;
    double fps = 0.0;
    std::vector<Frame> frames;
};

namespace detail {

/// Disk coverage with a 1-pixel linear falloff at the rim.
inline double disk_blend(double dist, double radius, double inside,
                         double outside) {
    if (dist <= radius - 0.5) return inside;
    if (dist >= radius + 0.5) return outside;
    const double f = radius + 0.5 - dist;  // in (0, 1)
    return outside + f * (inside - outside);
}

}  // namespace detail

/// Renders one grayscale frame for a gaze direction (degrees). Pixel (ix, iy)
/// is sampled at its center (ix + 0.5, iy + 0.5); positive horizontal gaze
/// shifts the disks toward +x, positive vertical toward +y (downward rows).
inline Frame render_frame(double gaze_h_deg, double gaze_v_deg,
                          const EyeAppearance& ap, int width, int height) {
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("render_frame: dimensions must be positive");
    ap.validate();

    const double cx = width * 0.5 + ap.gain_px_per_deg * gaze_h_deg;
    const double cy = height * 0.5 + ap.gain_px_per_deg * gaze_v_deg;

    Frame frame(static_cast<std::size_t>(width) * height);
    for (int iy = 0; iy < height; ++iy) {
        const double dy = (iy + 0.5) - cy;
        for (int ix = 0; ix < width; ++ix) {
            const double dx = (ix + 0.5) - cx;
            const double dist = std::sqrt(dx * dx + dy * dy);
            double value = ap.sclera_level;
            value = detail::disk_blend(dist, ap.iris_radius_px, ap.iris_level, value);
            value = detail::disk_blend(dist, ap.pupil_radius_px, ap.pupil_level, value);
            frame[static_cast<std::size_t>(iy) * width + ix] = value;
        }
    }
    return frame;
}

/// Uniform frame with no eye; used for noise-only simulations.
inline Frame blank_frame(const EyeAppearance& ap, int width, int height) {
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("blank_frame: dimensions must be positive");
    return Frame(static_cast<std::size_t>(width) * height, ap.background_level);
}

namespace detail {

/// Piecewise-linear gaze lookup, clamped outside the sample range.
struct GazeInterpolator {
    const std::vector<kinematics::GazeSample>& samples;
    std::size_t cursor = 1;

    void at(std::uint64_t t_us, double& h, double& v) {
        if (samples.size() == 1 || t_us <= samples.front().t_us) {
            h = samples.front().angle_h;
            v = samples.front().angle_v;
            return;
        }
        if (t_us >= samples.back().t_us) {
            h = samples.back().angle_h;
            v = samples.back().angle_v;
            return;
        }
        while (cursor + 1 < samples.size() && samples[cursor].t_us < t_us) ++cursor;
        const auto& a = samples[cursor - 1];
        const auto& b = samples[cursor];
        const double w = b.t_us > a.t_us
                             ? static_cast<double>(t_us - a.t_us) /
                                   static_cast<double>(b.t_us - a.t_us)
                             : 0.0;
        h = a.angle_h + w * (b.angle_h - a.angle_h);
        v = a.angle_v + w * (b.angle_v - a.angle_v);
    }
};

}  // namespace detail

/// One frame per 1/fps tick across the sample span, gaze linearly
/// interpolated to each frame timestamp.
inline IntensityFrameSequence render_sequence(
    const std::vector<kinematics::GazeSample>& samples, const EyeAppearance& ap,
    int width, int height, double fps) {
    if (samples.empty())
        throw std::invalid_argument("render_sequence: empty sample list");
    if (!(fps > 0.0))
        throw std::invalid_argument("render_sequence: fps must be > 0");

    const std::uint64_t t0 = samples.front().t_us;
    const std::uint64_t span_us = samples.back().t_us - t0;
    const auto count = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(static_cast<double>(span_us) * 1e-6 * fps)));

    IntensityFrameSequence seq;
    seq.width = width;
    seq.height = height;
    seq.fps = fps;
    seq.frames.reserve(count);

    detail::GazeInterpolator gaze{samples};
    for (std::size_t f = 0; f < count; ++f) {
        const auto t = t0 + static_cast<std::uint64_t>(
                                std::llround(static_cast<double>(f) * 1e6 / fps));
        double h = 0.0, v = 0.0;
        gaze.at(t, h, v);
        seq.frames.push_back(render_frame(h, v, ap, width, height));
    }
    return seq;
}

// --- PGM (P5) dump ------------------------------------------------------------

inline void write_pgm(const std::string& path, const Frame& frame, int width,
                      int height) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open pgm for writing: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(width));
    for (int iy = 0; iy < height; ++iy) {
        for (int ix = 0; ix < width; ++ix) {
            const double value = frame[static_cast<std::size_t>(iy) * width + ix];
            row[static_cast<std::size_t>(ix)] = static_cast<unsigned char>(
                std::clamp<long>(std::llround(value), 0, 255));
        }
        out.write(reinterpret_cast<const char*>(row.data()), width);
    }
}

inline Frame read_pgm(const std::string& path, int& width, int& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open pgm: " + path);

    auto next_token = [&]() -> std::string {
        std::string tok;
        int c = 0;
        while ((c = in.get()) != EOF) {
            if (c == '#') {  // comment to end of line
                while ((c = in.get()) != EOF && c != '\n') {}
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        if (tok.empty()) throw DataError("truncated pgm header: " + path);
        return tok;
    };

    if (next_token() != "P5") throw DataError("not a P5 pgm: " + path);
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (width <= 0 || height <= 0 || maxval != 255)
        throw DataError("unsupported pgm geometry in " + path);

    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height);
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataError("truncated pgm payload: " + path);

    Frame frame(raw.size());
    std::transform(raw.begin(), raw.end(), frame.begin(),
                   [](unsigned char b) { return static_cast<double>(b); });
    return frame;
}

/// frame_%06d.pgm dump of a whole sequence into an existing directory.
inline void dump_sequence_pgm(const std::string& dir,
                              const IntensityFrameSequence& seq) {
    char name[32];
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        std::snprintf(name, sizeof(name), "frame_%06zu.pgm", f);
        write_pgm(dir + "/" + name, seq.frames[f], seq.width, seq.height);
    }
}

}  // namespace synsacc::render
