#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <tuple>
#include <vector>

#include "synsacc/common.hpp"
#include "synsacc/render.hpp"
#include "synsacc/rng.hpp"

namespace synsacc::eventsim {

struct Event {
    std::uint64_t t_us = 0;
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int8_t polarity = 1;  // +1 ON (brightening), -1 OFF (darkening)
};

inline bool canonical_less(const Event& a, const Event& b) {
    return std::tie(a.t_us, a.y, a.x, a.polarity) <
           std::tie(b.t_us, b.y, b.x, b.polarity);
}

struct EventStream {
    std::vector<Event> events;  // canonical order: (t, y, x, polarity)
    int width = 0;
    int height = 0;
    std::uint64_t duration_us = 0;

    void sort_canonical() {
        std::sort(events.begin(), events.end(), canonical_less);
    }
};

struct SimConfig {
    double theta_on = 0.2;
    double theta_off = 0.2;
    double sigma_theta = 0.05;
    double cutoff_hz = 30.0;     // 0 disables the photoreceptor low-pass
    double leak_rate_hz = 0.1;   // per-pixel ON leak events
    double shot_rate_hz = 5.0;   // per-pixel, split evenly between ON and OFF
    int upsample_factor = 8;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(theta_on > 0.0) || !(theta_off > 0.0))
            throw std::invalid_argument("sim: thresholds must be positive");
        if (sigma_theta < 0.0)
            throw std::invalid_argument("sim: sigma_theta must be >= 0");
        if (cutoff_hz < 0.0)
            throw std::invalid_argument("sim: cutoff_hz must be >= 0");
        if (leak_rate_hz < 0.0 || shot_rate_hz < 0.0)
            throw std::invalid_argument("sim: noise rates must be >= 0");
        if (upsample_factor < 1)
            throw std::invalid_argument("sim: upsample_factor must be >= 1");
    }
};

/// Guards ln(0) for pure-black pixels.
inline constexpr double kLogGuard = 1e-3;

/// Absorbs accumulated floating-point error in threshold-crossing counts; far
/// below any physical contrast step.
inline constexpr double kCrossingGuard = 1e-9;

struct LogFrameSequence {
    int width = 0;
    int height = 0;
    double fps = 0.0;
    std::vector<std::vector<double>> frames;
};

namespace detail {

inline std::uint64_t frame_time_us(std::uint64_t index, double fps) {
    return static_cast<std::uint64_t>(
        std::llround(static_cast<double>(index) * 1e6 / fps));
}

inline double lowpass_coeff(double cutoff_hz, double fps) {
    return std::min(1.0, 2.0 * std::numbers::pi * cutoff_hz / fps);
}

/// Substream salts; fixed so streams are stable across code changes.
inline constexpr std::uint64_t kSaltThreshold = 1;
inline constexpr std::uint64_t kSaltLeak = 2;
inline constexpr std::uint64_t kSaltShotOn = 3;
inline constexpr std::uint64_t kSaltShotOff = 4;

}  // namespace detail

/// ln(I + eps) plus linear interpolation in log space: factor-1 frames are
/// inserted between each consecutive pair, so N frames become (N-1)*factor+1
/// and the frame rate multiplies by factor.
inline LogFrameSequence upsample_log(const render::IntensityFrameSequence& seq,
                                     int factor) {
    if (factor < 1) throw std::invalid_argument("upsample_log: factor must be >= 1");
    if (seq.frames.empty())
        throw std::invalid_argument("upsample_log: empty sequence");
    if (factor > 1 && seq.frames.size() < 2)
        throw std::invalid_argument("upsample_log: need >= 2 frames to interpolate");
    const std::size_t npx = static_cast<std::size_t>(seq.width) * seq.height;
    for (const auto& frame : seq.frames)
        if (frame.size() != npx)
            throw std::invalid_argument("upsample_log: frame dimension mismatch");

    LogFrameSequence out;
    out.width = seq.width;
    out.height = seq.height;
    out.fps = seq.fps * factor;
    const std::size_t n = seq.frames.size();
    out.frames.reserve((n - 1) * static_cast<std::size_t>(factor) + 1);

    auto to_log = [npx](const render::Frame& f) {
        std::vector<double> l(npx);
        for (std::size_t p = 0; p < npx; ++p) l[p] = std::log(f[p] + kLogGuard);
        return l;
    };

    std::vector<double> prev = to_log(seq.frames[0]);
    for (std::size_t i = 1; i < n; ++i) {
        std::vector<double> cur = to_log(seq.frames[i]);
        out.frames.push_back(prev);
        for (int s = 1; s < factor; ++s) {
            const double w = static_cast<double>(s) / factor;
            std::vector<double> mid(npx);
            for (std::size_t p = 0; p < npx; ++p)
                mid[p] = prev[p] + w * (cur[p] - prev[p]);
            out.frames.push_back(std::move(mid));
        }
        prev = std::move(cur);
    }
    out.frames.push_back(std::move(prev));
    return out;
}

/// First-order IIR per pixel: y_k = y_{k-1} + a (x_k - y_{k-1}) with
/// a = min(1, 2*pi*cutoff/fps) and y_0 = x_0. a == 1 passes input through.
inline LogFrameSequence lowpass(const LogFrameSequence& seq, double cutoff_hz,
                                double fps) {
    if (!(fps > 0.0)) throw std::invalid_argument("lowpass: fps must be > 0");
    const double a = detail::lowpass_coeff(cutoff_hz, fps);
    LogFrameSequence out = seq;
    if (out.frames.empty() || a >= 1.0) return out;
    const std::size_t npx = out.frames[0].size();
    std::vector<double> state = out.frames[0];
    for (std::size_t k = 1; k < out.frames.size(); ++k) {
        for (std::size_t p = 0; p < npx; ++p)
            state[p] += a * (out.frames[k][p] - state[p]);
        out.frames[k] = state;
    }
    return out;
}

namespace detail {

/// Per-pixel DVS front end shared by the sequence op and the streaming
/// converter: optional low-pass, reference level with residual carry,
/// frozen per-pixel threshold mismatch.
class EventizerCore {
public:
    EventizerCore(int width, int height, double fps, const SimConfig& cfg,
                  bool apply_lowpass)
        : width_(width), height_(height), fps_(fps), cfg_(cfg) {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("eventizer: bad dimensions");
        if (!(fps > 0.0)) throw std::invalid_argument("eventizer: fps must be > 0");
        cfg.validate();
        lp_coeff_ = apply_lowpass && cfg.cutoff_hz > 0.0
                        ? lowpass_coeff(cfg.cutoff_hz, fps)
                        : 1.0;
        const std::size_t npx = static_cast<std::size_t>(width) * height;
        theta_on_.resize(npx);
        theta_off_.resize(npx);
        for (std::size_t p = 0; p < npx; ++p) {
            auto gen = rng::substream(cfg.seed, kSaltThreshold, p);
            theta_on_[p] = std::max(0.01, gen.normal(cfg.theta_on, cfg.sigma_theta));
            theta_off_[p] = std::max(0.01, gen.normal(cfg.theta_off, cfg.sigma_theta));
        }
    }

    bool primed() const { return primed_; }
    std::uint64_t frames_consumed() const { return frame_index_ + 1; }

    /// First log frame: initializes filter state and reference levels.
    void prime(const std::vector<double>& log_frame) {
        check_size(log_frame);
        filtered_ = log_frame;
        ref_ = log_frame;
        primed_ = true;
        frame_index_ = 0;
    }

    /// Subsequent log frame: filter update, then threshold crossings with
    /// signed residual carry; the n crossings of one transition are spread
    /// uniformly over the inter-frame interval at offsets (j+1)/(n+1).
    void step(const std::vector<double>& log_frame) {
        if (!primed_) throw std::invalid_argument("eventizer: step before prime");
        check_size(log_frame);
        const std::uint64_t t_prev = frame_time_us(frame_index_, fps_);
        ++frame_index_;
        const std::uint64_t t_cur = frame_time_us(frame_index_, fps_);
        const double dt = static_cast<double>(t_cur - t_prev);

        const std::size_t npx = filtered_.size();
        for (std::size_t p = 0; p < npx; ++p) {
            if (lp_coeff_ >= 1.0)
                filtered_[p] = log_frame[p];
            else
                filtered_[p] += lp_coeff_ * (log_frame[p] - filtered_[p]);

            const double delta = filtered_[p] - ref_[p];
            long n = 0;
            std::int8_t polarity = 1;
            double theta = theta_on_[p];
            if (delta > 0.0) {
                n = static_cast<long>(std::floor(delta / theta + kCrossingGuard));
            } else if (delta < 0.0) {
                polarity = -1;
                theta = theta_off_[p];
                n = static_cast<long>(std::floor(-delta / theta + kCrossingGuard));
            }
            if (n <= 0) continue;
            ref_[p] += (polarity > 0 ? 1.0 : -1.0) * static_cast<double>(n) * theta;
            const auto px = static_cast<std::uint16_t>(p % width_);
            const auto py = static_cast<std::uint16_t>(p / width_);
            for (long j = 0; j < n; ++j) {
                const double offset =
                    static_cast<double>(j + 1) / static_cast<double>(n + 1) * dt;
                events_.push_back(Event{
                    t_prev + static_cast<std::uint64_t>(offset), px, py, polarity});
            }
        }
    }

    EventStream finish() {
        EventStream out;
        out.width = width_;
        out.height = height_;
        out.duration_us = primed_ ? frame_time_us(frame_index_, fps_) : 0;
        out.events = std::move(events_);
        out.sort_canonical();
        return out;
    }

private:
    void check_size(const std::vector<double>& frame) const {
        if (frame.size() != static_cast<std::size_t>(width_) * height_)
            throw std::invalid_argument("eventizer: frame dimension mismatch");
    }

    int width_, height_;
    double fps_;
    SimConfig cfg_;
    double lp_coeff_ = 1.0;
    bool primed_ = false;
    std::uint64_t frame_index_ = 0;
    std::vector<double> filtered_, ref_, theta_on_, theta_off_;
    std::vector<Event> events_;
};

}  // namespace detail

/// Threshold-crossing event generation over an already-filtered log sequence.
/// Per-pixel reference levels start at the first frame; each transition emits
/// floor(|delta| / theta_eff) events of the matching polarity and advances the
/// reference by that many thresholds (signed residual carry).
inline EventStream generate_events(const LogFrameSequence& seq,
                                   const SimConfig& cfg) {
    if (seq.frames.size() < 2)
        throw std::invalid_argument("generate_events: need at least 2 frames");
    detail::EventizerCore core(seq.width, seq.height, seq.fps, cfg,
                               /*apply_lowpass=*/false);
    core.prime(seq.frames[0]);
    for (std::size_t k = 1; k < seq.frames.size(); ++k) core.step(seq.frames[k]);
    return core.finish();
}

/// Adds per-pixel Poisson background over [0, duration): ON leak events at
/// leak_rate_hz plus shot noise at shot_rate_hz split evenly between ON and
/// OFF. Independent of the signal content, so noise only depends on
/// (seed, geometry, rates, duration).
inline EventStream inject_noise(const EventStream& stream, const SimConfig& cfg) {
    cfg.validate();
    EventStream out = stream;
    if (stream.duration_us == 0 ||
        (cfg.leak_rate_hz <= 0.0 && cfg.shot_rate_hz <= 0.0))
        return out;

    const double duration_s = static_cast<double>(stream.duration_us) * 1e-6;
    const std::size_t npx =
        static_cast<std::size_t>(stream.width) * stream.height;

    auto emit_poisson = [&](std::uint64_t salt, std::size_t pixel, double rate,
                            std::int8_t polarity) {
        if (rate <= 0.0) return;
        auto gen = rng::substream(cfg.seed, salt, pixel);
        const auto px = static_cast<std::uint16_t>(pixel % stream.width);
        const auto py = static_cast<std::uint16_t>(pixel / stream.width);
        double t = gen.exponential(rate);
        while (t < duration_s) {
            out.events.push_back(
                Event{static_cast<std::uint64_t>(t * 1e6), px, py, polarity});
            t += gen.exponential(rate);
        }
    };

    for (std::size_t p = 0; p < npx; ++p) {
        emit_poisson(detail::kSaltLeak, p, cfg.leak_rate_hz, +1);
        emit_poisson(detail::kSaltShotOn, p, cfg.shot_rate_hz * 0.5, +1);
        emit_poisson(detail::kSaltShotOff, p, cfg.shot_rate_hz * 0.5, -1);
    }
    out.sort_canonical();
    return out;
}

/// Streaming intensity-to-event conversion: log transform, temporal
/// upsampling, low-pass and event emission in one pass, holding O(1) frames.
/// Produces bit-identical output to the composed sequence ops
/// generate_events(lowpass(upsample_log(frames))).
class FrameToEventConverter {
public:
    FrameToEventConverter(int width, int height, double input_fps,
                          const SimConfig& cfg)
        : factor_(cfg.upsample_factor),
          npx_(static_cast<std::size_t>(width) * height),
          core_(width, height, input_fps * cfg.upsample_factor, cfg,
                /*apply_lowpass=*/true) {
        if (!(input_fps > 0.0))
            throw std::invalid_argument("converter: input fps must be > 0");
    }

    void push(const render::Frame& frame) {
        if (frame.size() != npx_)
            throw std::invalid_argument("converter: frame dimension mismatch");
        std::vector<double> cur(npx_);
        for (std::size_t p = 0; p < npx_; ++p)
            cur[p] = std::log(frame[p] + kLogGuard);
        if (!core_.primed()) {
            core_.prime(cur);
            prev_log_ = std::move(cur);
            return;
        }
        scratch_.resize(npx_);
        for (int s = 1; s < factor_; ++s) {
            const double w = static_cast<double>(s) / factor_;
            for (std::size_t p = 0; p < npx_; ++p)
                scratch_[p] = prev_log_[p] + w * (cur[p] - prev_log_[p]);
            core_.step(scratch_);
        }
        core_.step(cur);
        prev_log_ = std::move(cur);
    }

    std::size_t frames_pushed() const {
        if (!core_.primed()) return 0;
        return static_cast<std::size_t>((core_.frames_consumed() - 1) / factor_) + 1;
    }

    /// Signal events only; apply inject_noise separately if wanted.
    EventStream finish() { return core_.finish(); }

private:
    int factor_;
    std::size_t npx_;
    detail::EventizerCore core_;
    std::vector<double> prev_log_, scratch_;
};

}  // namespace synsacc::eventsim
