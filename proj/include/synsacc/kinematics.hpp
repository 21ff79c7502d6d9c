#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synsacc/common.hpp"
#include "synsacc/rng.hpp"

namespace synsacc::kinematics {

/// Euler rotation keyframe, angles in degrees.
/// Axis convention: x = vertical gaze, z = horizontal gaze, y = torsion.
/// The torsional y axis is the one mirrored between the two eyes, so
/// mirrored tracks stay conjugate in rendered gaze.
struct RotationKey {
    std::int64_t frame_index = 0;
    std::array<double, 3> rotation{};  // (x, y, z) degrees
};

struct RotationTrack {
    std::vector<RotationKey> keys;
    std::int64_t frame_start = 0;
    std::int64_t frame_end = 0;
    std::int64_t frame_step = 1;
    double fps = 0.0;
};

/// One point of a continuous gaze trajectory.
struct GazeSample {
    std::uint64_t t_us = 0;
    double angle_h = 0.0;  // horizontal, degrees
    double angle_v = 0.0;  // vertical, degrees
    int segment_id = 0;
};

enum class LabelClass : int { fixation = 0, saccade = 1 };

inline const char* to_string(LabelClass c) {
    return c == LabelClass::fixation ? "fixation" : "saccade";
}

inline LabelClass label_from_string(const std::string& s) {
    if (s == "fixation") return LabelClass::fixation;
    if (s == "saccade") return LabelClass::saccade;
    throw DataError("unknown label class: " + s);
}

struct LabelSegment {
    std::uint64_t start_us = 0;
    std::uint64_t end_us = 0;  // exclusive
    LabelClass cls = LabelClass::fixation;
};

/// Contiguous, non-overlapping, time-ordered ground-truth segments.
struct LabelTrack {
    std::vector<LabelSegment> segments;

    std::uint64_t duration_us() const {
        return segments.empty() ? 0 : segments.back().end_us;
    }
};

struct DurationRangeMs {
    double lo = 0.0;
    double hi = 0.0;
};

/// Random saccadic keyframes: one uniform rotation in [-L, +L]^3 per sampled
/// frame, frames F_start, F_start+dF, ..., <= F_end.
inline RotationTrack generate_saccades(std::int64_t frame_start,
                                       std::int64_t frame_end,
                                       std::int64_t frame_step,
                                       double max_angle_deg, std::uint64_t seed,
                                       double fps = 25.0) {
    if (frame_end < frame_start)
        throw std::invalid_argument("generate_saccades: frame_end < frame_start");
    if (frame_step < 1)
        throw std::invalid_argument("generate_saccades: frame_step must be >= 1");
    if (frame_start < 0)
        throw std::invalid_argument("generate_saccades: negative frame_start");
    if (!(max_angle_deg > 0.0))
        throw std::invalid_argument("generate_saccades: max_angle_deg must be > 0");
    if (!(fps > 0.0))
        throw std::invalid_argument("generate_saccades: fps must be > 0");

    RotationTrack track;
    track.frame_start = frame_start;
    track.frame_end = frame_end;
    track.frame_step = frame_step;
    track.fps = fps;

    rng::Xoshiro256ss gen(seed);
    for (std::int64_t frame = frame_start; frame <= frame_end;
         frame += frame_step) {
        RotationKey key;
        key.frame_index = frame;
        for (double& component : key.rotation)
            component = gen.uniform(-max_angle_deg, max_angle_deg);
        track.keys.push_back(key);
    }
    return track;
}

/// Contralateral-eye track: (x, y, z) -> (x, -y, z) at the same frames.
inline RotationTrack mirror_track(const RotationTrack& track) {
    RotationTrack mirrored = track;
    for (RotationKey& key : mirrored.keys) key.rotation[1] = -key.rotation[1];
    return mirrored;
}

namespace detail {

struct ScheduledSegment {
    std::uint64_t start_us;
    std::uint64_t end_us;
    LabelClass cls;
    double h0, v0;  // angle at segment start
    double h1, v1;  // angle at segment end (== start for fixations)
};

inline std::uint64_t ms_to_us(double ms) {
    return static_cast<std::uint64_t>(std::llround(ms * 1000.0));
}

}  // namespace detail

/// Alternating fixation/saccade schedule with automatic ground truth.
/// Fixations hold a uniformly drawn target in [-L, +L]^2; saccades move
/// linearly to the next target. Keeps fixations >= 20 ms: a truncated tail
/// fixation shorter than that is merged into the preceding segment. The
/// duration may itself be shorter than one minimal fixation, in which case
/// the schedule degenerates to a single fixation covering it.
///
/// The returned samples are the knots of the piecewise-linear trajectory
/// (segment boundaries); linear interpolation between them reproduces the
/// motion exactly.
inline std::pair<std::vector<GazeSample>, LabelTrack> generate_labeled_schedule(
    double duration_ms, double max_angle_deg, std::uint64_t seed,
    DurationRangeMs fix_range_ms = {50.0, 600.0},
    DurationRangeMs sac_range_ms = {20.0, 300.0}) {
    if (!(duration_ms > 0.0))
        throw std::invalid_argument("generate_labeled_schedule: duration must be > 0");
    if (!(max_angle_deg > 0.0))
        throw std::invalid_argument("generate_labeled_schedule: max_angle_deg must be > 0");
    for (const auto& range : {fix_range_ms, sac_range_ms})
        if (!(range.lo >= 1.0) || !(range.hi >= range.lo))
            throw std::invalid_argument("generate_labeled_schedule: bad duration range");

    constexpr std::uint64_t kMinFixationUs = 20'000;
    const std::uint64_t duration_us = detail::ms_to_us(duration_ms);

    rng::Xoshiro256ss gen(seed);
    auto draw_target = [&](double& h, double& v) {
        h = gen.uniform(-max_angle_deg, max_angle_deg);
        v = gen.uniform(-max_angle_deg, max_angle_deg);
    };

    std::vector<detail::ScheduledSegment> segs;
    double cur_h = 0.0, cur_v = 0.0;
    draw_target(cur_h, cur_v);

    std::uint64_t t = 0;
    bool fixation_turn = true;
    while (t < duration_us) {
        detail::ScheduledSegment seg{};
        seg.start_us = t;
        if (fixation_turn) {
            const std::uint64_t len =
                detail::ms_to_us(gen.uniform(fix_range_ms.lo, fix_range_ms.hi));
            seg.cls = LabelClass::fixation;
            seg.h0 = seg.h1 = cur_h;
            seg.v0 = seg.v1 = cur_v;
            seg.end_us = t + len;
        } else {
            const std::uint64_t len =
                detail::ms_to_us(gen.uniform(sac_range_ms.lo, sac_range_ms.hi));
            double next_h = 0.0, next_v = 0.0;
            draw_target(next_h, next_v);
            seg.cls = LabelClass::saccade;
            seg.h0 = cur_h;
            seg.v0 = cur_v;
            seg.h1 = next_h;
            seg.v1 = next_v;
            seg.end_us = t + len;
            cur_h = next_h;
            cur_v = next_v;
        }
        t = seg.end_us;
        segs.push_back(seg);
        fixation_turn = !fixation_turn;
    }

    // Truncate the tail to the requested duration.
    detail::ScheduledSegment& last = segs.back();
    if (last.end_us > duration_us) last.end_us = duration_us;
    if (last.cls == LabelClass::fixation &&
        last.end_us - last.start_us < kMinFixationUs && segs.size() > 1) {
        const detail::ScheduledSegment tail = last;
        segs.pop_back();
        segs.back().end_us = tail.end_us;
    }

    LabelTrack labels;
    std::vector<GazeSample> samples;
    samples.push_back(GazeSample{0, segs.front().h0, segs.front().v0, 0});
    for (std::size_t k = 0; k < segs.size(); ++k) {
        const detail::ScheduledSegment& seg = segs[k];
        labels.segments.push_back(LabelSegment{seg.start_us, seg.end_us, seg.cls});
        samples.push_back(
            GazeSample{seg.end_us, seg.h1, seg.v1, static_cast<int>(k)});
    }
    return {std::move(samples), std::move(labels)};
}

/// Uniformly resamples a keyframe track into a continuous gaze trajectory.
/// Euler x maps to vertical gaze and z to horizontal; y (torsion) is dropped.
inline std::vector<GazeSample> sample_trajectory(const RotationTrack& track,
                                                 double sample_rate_hz) {
    if (track.keys.empty())
        throw std::invalid_argument("sample_trajectory: empty track");
    if (!(sample_rate_hz > 0.0))
        throw std::invalid_argument("sample_trajectory: sample rate must be > 0");
    if (!(track.fps > 0.0))
        throw std::invalid_argument("sample_trajectory: track fps must be > 0");

    auto key_time_us = [&](const RotationKey& key) {
        return static_cast<std::uint64_t>(
            std::llround(static_cast<double>(key.frame_index) / track.fps * 1e6));
    };

    const std::uint64_t t_first = key_time_us(track.keys.front());
    const std::uint64_t t_last = key_time_us(track.keys.back());

    std::vector<GazeSample> samples;
    if (track.keys.size() == 1) {
        samples.push_back(GazeSample{t_first, track.keys[0].rotation[2],
                                     track.keys[0].rotation[0], 0});
        return samples;
    }

    const double span_s = static_cast<double>(t_last - t_first) * 1e-6;
    // guard keeps integer spans from losing their final sample to rounding
    const auto count =
        static_cast<std::size_t>(std::floor(span_s * sample_rate_hz + 1e-9)) + 1;
    samples.reserve(count);

    std::size_t upper = 1;  // key index bounding the current sample from above
    for (std::size_t i = 0; i < count; ++i) {
        const auto t = t_first + static_cast<std::uint64_t>(std::llround(
                                     static_cast<double>(i) * 1e6 / sample_rate_hz));
        while (upper + 1 < track.keys.size() && key_time_us(track.keys[upper]) < t)
            ++upper;
        const RotationKey& a = track.keys[upper - 1];
        const RotationKey& b = track.keys[upper];
        const std::uint64_t ta = key_time_us(a);
        const std::uint64_t tb = key_time_us(b);
        double w = tb > ta ? static_cast<double>(t - ta) / static_cast<double>(tb - ta)
                           : 0.0;
        if (w < 0.0) w = 0.0;
        if (w > 1.0) w = 1.0;
        GazeSample s;
        s.t_us = t;
        s.angle_h = a.rotation[2] + w * (b.rotation[2] - a.rotation[2]);
        s.angle_v = a.rotation[0] + w * (b.rotation[0] - a.rotation[0]);
        s.segment_id = 0;
        samples.push_back(s);
    }
    return samples;
}

// --- label sidecar (JSON) ---------------------------------------------------

inline nlohmann::json labels_to_json(const LabelTrack& labels) {
    nlohmann::json segs = nlohmann::json::array();
    for (const LabelSegment& seg : labels.segments) {
        segs.push_back({{"start_us", seg.start_us},
                        {"end_us", seg.end_us},
                        {"class", to_string(seg.cls)}});
    }
    return nlohmann::json{{"segments", segs}};
}

inline LabelTrack labels_from_json(const nlohmann::json& j) {
    LabelTrack labels;
    if (!j.contains("segments") || !j["segments"].is_array())
        throw DataError("label track json: missing \"segments\" array");
    std::uint64_t prev_end = 0;
    for (const auto& item : j["segments"]) {
        LabelSegment seg;
        seg.start_us = item.at("start_us").get<std::uint64_t>();
        seg.end_us = item.at("end_us").get<std::uint64_t>();
        seg.cls = label_from_string(item.at("class").get<std::string>());
        if (!labels.segments.empty() && seg.start_us != prev_end)
            throw DataError("label track json: segments not contiguous");
        if (seg.end_us <= seg.start_us)
            throw DataError("label track json: empty or reversed segment");
        prev_end = seg.end_us;
        labels.segments.push_back(seg);
    }
    return labels;
}

inline void write_labels(const std::string& path, const LabelTrack& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open label file for writing: " + path);
    out << labels_to_json(labels).dump(2) << '\n';
}

inline LabelTrack read_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open label file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed label json in " + path + ": " + e.what());
    }
    return labels_from_json(j);
}

}  // namespace synsacc::kinematics
