#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "synsacc/common.hpp"
#include "synsacc/event_sim.hpp"
#include "synsacc/kinematics.hpp"

namespace synsacc::codec {

using kinematics::LabelClass;
using kinematics::LabelTrack;

/// Binary spike tensor for one labeled window, indexed (p, y, x, k) with
/// p=0 the OFF channel and p=1 the ON channel. Cells are strictly binary:
/// several events in one cell still read as a single 1. Stored sparsely as
/// one sorted, deduplicated list of flattened (p, y, x) indices per time bin.
struct SpikeTensor {
    int height = 0;
    int width = 0;
    double bin_ms = 1.0;
    double window_ms = 0.0;
    LabelClass label = LabelClass::fixation;
    std::vector<std::vector<std::uint32_t>> bins;  // bins[k] = active cells

    std::size_t num_bins() const { return bins.size(); }
    std::size_t channel_size() const {
        return static_cast<std::size_t>(height) * width;
    }
    std::size_t input_size() const { return 2 * channel_size(); }

    std::uint32_t flatten(int p, int y, int x) const {
        return static_cast<std::uint32_t>((static_cast<std::size_t>(p) * height + y) * width + x);
    }

    bool at(int p, int y, int x, std::size_t k) const {
        const std::uint32_t idx = flatten(p, y, x);
        const auto& bin = bins.at(k);
        return std::binary_search(bin.begin(), bin.end(), idx);
    }

    std::size_t total_spikes() const {
        std::size_t n = 0;
        for (const auto& bin : bins) n += bin.size();
        return n;
    }
};

/// Number of time bins covering a window.
inline std::size_t bin_count(double window_ms, double bin_ms) {
    return static_cast<std::size_t>(std::ceil(window_ms / bin_ms));
}

/// Eq.-style binary binning of the events in [t_start, t_start + window).
/// Bin index k = floor((t - t_start) / bin width).
inline SpikeTensor bin_events(const eventsim::EventStream& stream,
                              std::uint64_t t_start_us, double window_ms,
                              double bin_ms = 1.0) {
    if (!(bin_ms > 0.0)) throw std::invalid_argument("bin_events: bin_ms must be > 0");
    if (!(window_ms > 0.0))
        throw std::invalid_argument("bin_events: window_ms must be > 0");
    const auto window_us =
        static_cast<std::uint64_t>(std::llround(window_ms * 1000.0));
    if (t_start_us + window_us > stream.duration_us)
        throw std::invalid_argument("bin_events: window exceeds stream duration");

    SpikeTensor tensor;
    tensor.height = stream.height;
    tensor.width = stream.width;
    tensor.bin_ms = bin_ms;
    tensor.window_ms = window_ms;
    tensor.bins.resize(bin_count(window_ms, bin_ms));

    const double bin_us = bin_ms * 1000.0;
    const auto begin = std::lower_bound(
        stream.events.begin(), stream.events.end(), t_start_us,
        [](const eventsim::Event& ev, std::uint64_t t) { return ev.t_us < t; });
    for (auto it = begin; it != stream.events.end(); ++it) {
        if (it->t_us >= t_start_us + window_us) break;
        const auto k = static_cast<std::size_t>(
            static_cast<double>(it->t_us - t_start_us) / bin_us);
        if (k >= tensor.bins.size()) continue;  // float edge guard
        const int p = it->polarity > 0 ? 1 : 0;
        tensor.bins[k].push_back(tensor.flatten(p, it->y, it->x));
    }
    for (auto& bin : tensor.bins) {
        std::sort(bin.begin(), bin.end());
        bin.erase(std::unique(bin.begin(), bin.end()), bin.end());
    }
    return tensor;
}

/// Rate code of a spike count over T bins, in spikes per second.
inline double firing_rate(std::size_t spike_count, std::size_t num_bins,
                          double bin_ms) {
    if (num_bins == 0) throw std::invalid_argument("firing_rate: T must be >= 1");
    return static_cast<double>(spike_count) /
           (static_cast<double>(num_bins) * bin_ms / 1000.0);
}

inline double firing_rate(const std::vector<std::uint8_t>& train, double bin_ms) {
    std::size_t count = 0;
    for (std::uint8_t s : train) count += s ? 1 : 0;
    return firing_rate(count, train.size(), bin_ms);
}

/// Tiles non-overlapping windows inside each label segment; candidates that
/// would straddle a segment boundary are dropped, so every tensor is pure.
inline std::vector<SpikeTensor> slice_windows(const eventsim::EventStream& stream,
                                              const LabelTrack& labels,
                                              double window_ms,
                                              double bin_ms = 1.0) {
    if (!(window_ms > 0.0))
        throw std::invalid_argument("slice_windows: window_ms must be > 0");
    const auto window_us =
        static_cast<std::uint64_t>(std::llround(window_ms * 1000.0));

    std::vector<SpikeTensor> tensors;
    for (const auto& seg : labels.segments) {
        const std::uint64_t seg_len = seg.end_us - seg.start_us;
        const std::uint64_t n = seg_len / window_us;
        for (std::uint64_t j = 0; j < n; ++j) {
            const std::uint64_t t0 = seg.start_us + j * window_us;
            if (t0 + window_us > stream.duration_us) break;
            SpikeTensor t = bin_events(stream, t0, window_ms, bin_ms);
            t.label = seg.cls;
            tensors.push_back(std::move(t));
        }
    }
    return tensors;
}

/// Integer-factor spatial OR-pooling at the event level: coordinates divide
/// by the factor and duplicates collapse later under binary binning.
inline eventsim::EventStream downscale_events(const eventsim::EventStream& stream,
                                              int factor) {
    if (factor < 1) throw std::invalid_argument("downscale_events: factor must be >= 1");
    if (factor == 1) return stream;
    eventsim::EventStream out;
    out.width = (stream.width + factor - 1) / factor;
    out.height = (stream.height + factor - 1) / factor;
    out.duration_us = stream.duration_us;
    out.events = stream.events;
    for (auto& ev : out.events) {
        ev.x = static_cast<std::uint16_t>(ev.x / factor);
        ev.y = static_cast<std::uint16_t>(ev.y / factor);
    }
    out.sort_canonical();
    return out;
}

}  // namespace synsacc::codec
