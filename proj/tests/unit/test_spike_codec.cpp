#include <catch2/catch_amalgamated.hpp>

#include "synsacc/rng.hpp"
#include "synsacc/spike_codec.hpp"

using namespace synsacc;
using namespace synsacc::codec;
using eventsim::Event;
using eventsim::EventStream;

namespace {

EventStream make_stream(int w, int h, std::uint64_t duration_us,
                        std::vector<Event> events) {
    EventStream s;
    s.width = w;
    s.height = h;
    s.duration_us = duration_us;
    s.events = std::move(events);
    s.sort_canonical();
    return s;
}

}  // namespace

TEST_CASE("bin_events places a single event in bin zero") {
    const EventStream s = make_stream(4, 4, 10000, {Event{500, 1, 2, 1}});
    const SpikeTensor t = bin_events(s, 0, 10.0, 1.0);
    REQUIRE(t.num_bins() == 10);
    REQUIRE(t.total_spikes() == 1);
    REQUIRE(t.at(1, 2, 1, 0));
    REQUIRE_FALSE(t.at(0, 2, 1, 0));
}

TEST_CASE("multiple events in one cell stay binary") {
    const EventStream s = make_stream(
        4, 4, 5000,
        {Event{100, 1, 1, 1}, Event{400, 1, 1, 1}, Event{900, 1, 1, 1}});
    const SpikeTensor t = bin_events(s, 0, 5.0, 1.0);
    REQUIRE(t.total_spikes() == 1);
    REQUIRE(t.at(1, 1, 1, 0));
}

TEST_CASE("empty window gives an all-zero tensor") {
    const EventStream s = make_stream(4, 4, 100000, {Event{90000, 0, 0, 1}});
    const SpikeTensor t = bin_events(s, 0, 50.0, 1.0);
    REQUIRE(t.num_bins() == 50);
    REQUIRE(t.total_spikes() == 0);
}

TEST_CASE("window beyond stream bounds is rejected") {
    const EventStream s = make_stream(4, 4, 30000, {});
    REQUIRE_THROWS_AS(bin_events(s, 10000, 30.0, 1.0), std::invalid_argument);
    REQUIRE_NOTHROW(bin_events(s, 0, 30.0, 1.0));
}

TEST_CASE("polarity channels are separated") {
    const EventStream s = make_stream(
        2, 2, 2000, {Event{100, 0, 0, 1}, Event{150, 0, 0, -1}});
    const SpikeTensor t = bin_events(s, 0, 2.0, 1.0);
    REQUIRE(t.at(1, 0, 0, 0));
    REQUIRE(t.at(0, 0, 0, 0));
    REQUIRE(t.total_spikes() == 2);
}

TEST_CASE("binning at 2 ms equals OR of adjacent 1 ms bins") {
    auto gen = rng::Xoshiro256ss(17);
    std::vector<Event> events;
    for (int i = 0; i < 400; ++i)
        events.push_back(Event{gen.below(20000),
                               static_cast<std::uint16_t>(gen.below(6)),
                               static_cast<std::uint16_t>(gen.below(5)),
                               gen.below(2) ? std::int8_t(1) : std::int8_t(-1)});
    const EventStream s = make_stream(6, 5, 20000, std::move(events));
    const SpikeTensor fine = bin_events(s, 0, 20.0, 1.0);
    const SpikeTensor coarse = bin_events(s, 0, 20.0, 2.0);
    REQUIRE(coarse.num_bins() == 10);
    for (std::size_t k = 0; k < coarse.num_bins(); ++k) {
        std::vector<std::uint32_t> merged = fine.bins[2 * k];
        merged.insert(merged.end(), fine.bins[2 * k + 1].begin(),
                      fine.bins[2 * k + 1].end());
        std::sort(merged.begin(), merged.end());
        merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
        REQUIRE(coarse.bins[k] == merged);
    }
}

TEST_CASE("nonzero cells never exceed the number of events in the window") {
    auto gen = rng::Xoshiro256ss(23);
    std::vector<Event> events;
    for (int i = 0; i < 300; ++i)
        events.push_back(Event{gen.below(30000),
                               static_cast<std::uint16_t>(gen.below(4)),
                               static_cast<std::uint16_t>(gen.below(4)),
                               gen.below(2) ? std::int8_t(1) : std::int8_t(-1)});
    const EventStream s = make_stream(4, 4, 30000, std::move(events));
    const SpikeTensor t = bin_events(s, 0, 30.0, 1.0);
    REQUIRE(t.total_spikes() <= 300);
}

TEST_CASE("firing_rate formula") {
    REQUIRE(firing_rate(5, 50, 1.0) == 100.0);        // 5 spikes / 50 ms
    REQUIRE(firing_rate(0, 20, 1.0) == 0.0);
    REQUIRE(firing_rate(20, 20, 1.0) == 1000.0);      // all-ones 20 x 1 ms
    std::vector<std::uint8_t> train(20, 1);
    REQUIRE(firing_rate(train, 1.0) == 1000.0);
    REQUIRE_THROWS_AS(firing_rate(1, 0, 1.0), std::invalid_argument);
}

TEST_CASE("rate identity holds for tensor cells") {
    const EventStream s = make_stream(
        2, 2, 50000,
        {Event{1000, 0, 0, 1}, Event{7000, 0, 0, 1}, Event{14500, 0, 0, 1},
         Event{30000, 0, 0, 1}, Event{49000, 0, 0, 1}});
    const SpikeTensor t = bin_events(s, 0, 50.0, 1.0);
    std::size_t ones = 0;
    for (std::size_t k = 0; k < t.num_bins(); ++k)
        if (t.at(1, 0, 0, k)) ++ones;
    REQUIRE(firing_rate(ones, t.num_bins(), t.bin_ms) == 100.0);
}

TEST_CASE("slice_windows tiles segments and discards straddlers") {
    kinematics::LabelTrack labels;
    labels.segments.push_back({0, 600000, kinematics::LabelClass::fixation});
    labels.segments.push_back({600000, 630000, kinematics::LabelClass::saccade});
    const EventStream s = make_stream(4, 4, 700000, {});

    const auto fix200 = slice_windows(s, labels, 200.0);
    REQUIRE(fix200.size() == 3);  // 600/200 fixation windows, saccade too short
    for (const auto& t : fix200)
        REQUIRE(t.label == kinematics::LabelClass::fixation);

    const auto windows50 = slice_windows(s, labels, 50.0);
    // 12 fixation + 0 saccade (30 ms < 50 ms)
    REQUIRE(windows50.size() == 12);

    const auto windows10 = slice_windows(s, labels, 10.0);
    REQUIRE(windows10.size() == 63);  // 60 + 3
}

TEST_CASE("downscale_events OR-pools coordinates") {
    const EventStream s = make_stream(
        8, 8, 1000, {Event{10, 0, 0, 1}, Event{20, 1, 1, 1}, Event{30, 7, 7, -1}});
    const EventStream down = downscale_events(s, 2);
    REQUIRE(down.width == 4);
    REQUIRE(down.height == 4);
    const SpikeTensor t = bin_events(down, 0, 1.0, 1.0);
    // (0,0) and (1,1) collapse into cell (0,0) ON
    REQUIRE(t.total_spikes() == 2);
    REQUIRE(t.at(1, 0, 0, 0));
    REQUIRE(t.at(0, 3, 3, 0));
}
