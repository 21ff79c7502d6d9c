#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "synsacc/render.hpp"

using namespace synsacc;
using namespace synsacc::render;
using kinematics::GazeSample;

namespace {

EyeAppearance test_appearance() {
    EyeAppearance ap;
    ap.sclera_level = 200.0;
    ap.iris_level = 80.0;
    ap.pupil_level = 20.0;
    ap.background_level = 150.0;
    ap.iris_radius_px = 10.0;
    ap.pupil_radius_px = 4.0;
    ap.gain_px_per_deg = 0.9;
    return ap;
}

}  // namespace

TEST_CASE("appearance invariants are enforced") {
    EyeAppearance ap = test_appearance();
    ap.pupil_radius_px = 12.0;  // >= iris radius
    REQUIRE_THROWS_AS(ap.validate(), std::invalid_argument);
    ap = test_appearance();
    ap.iris_level = 250.0;  // not darker than sclera
    REQUIRE_THROWS_AS(ap.validate(), std::invalid_argument);
    REQUIRE_NOTHROW(test_appearance().validate());
}

TEST_CASE("centered gaze puts the pupil level at the frame center") {
    const EyeAppearance ap = test_appearance();
    const Frame f = render_frame(0.0, 0.0, ap, 64, 48);
    REQUIRE(f[24 * 64 + 32] == ap.pupil_level);
    // well outside the iris: sclera
    REQUIRE(f[2 * 64 + 2] == ap.sclera_level);
}

TEST_CASE("gaze shift translates the disks by gain * degrees") {
    EyeAppearance ap = test_appearance();
    ap.gain_px_per_deg = 4.0;
    const int w = 96, h = 64;
    const Frame base = render_frame(0.0, 0.0, ap, w, h);
    const Frame moved = render_frame(5.0, 0.0, ap, w, h);  // +20 px
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 20 < w; ++x)
            REQUIRE(moved[y * w + x + 20] == base[y * w + x]);
}

TEST_CASE("rendering is deterministic and bounded") {
    const EyeAppearance ap = test_appearance();
    const Frame a = render_frame(3.5, -2.25, ap, 64, 48);
    const Frame b = render_frame(3.5, -2.25, ap, 64, 48);
    REQUIRE(a == b);
    for (double v : a) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 255.0);
    }
}

TEST_CASE("anti-aliased rim blends linearly over one pixel") {
    EyeAppearance ap = test_appearance();
    ap.gain_px_per_deg = 1.0;
    const Frame f = render_frame(0.0, 0.0, ap, 65, 65);
    // pixel centers along the +x axis from the disk center (32.5, 32.5)
    auto value_at_distance = [&](int dx) { return f[32 * 65 + 32 + dx]; };
    REQUIRE(value_at_distance(3) == ap.pupil_level);            // d=3 < 3.5
    REQUIRE(value_at_distance(5) == ap.iris_level);             // inside iris
    REQUIRE(value_at_distance(4) ==
            ap.iris_level + 0.5 * (ap.pupil_level - ap.iris_level));  // d = 4.0 rim
}

TEST_CASE("blank frame uses the background level") {
    const EyeAppearance ap = test_appearance();
    const Frame f = blank_frame(ap, 16, 8);
    REQUIRE(f.size() == 16u * 8u);
    for (double v : f) REQUIRE(v == ap.background_level);
}

TEST_CASE("render_sequence emits one frame per tick") {
    const EyeAppearance ap = test_appearance();

    std::vector<GazeSample> constant{{0, 1.0, -1.0, 0}, {100000, 1.0, -1.0, 0}};
    const IntensityFrameSequence seq = render_sequence(constant, ap, 32, 24, 250.0);
    REQUIRE(seq.frames.size() == 25);  // 100 ms at 250 fps
    for (const Frame& f : seq.frames) REQUIRE(f == seq.frames[0]);

    std::vector<GazeSample> second{{0, 0.0, 0.0, 0}, {1000000, 2.0, 0.0, 0}};
    REQUIRE(render_sequence(second, ap, 32, 24, 250.0).frames.size() == 250);
}

TEST_CASE("frames coincident with samples use the sample gaze exactly") {
    const EyeAppearance ap = test_appearance();
    std::vector<GazeSample> samples{{0, 0.0, 0.0, 0}, {40000, 4.0, 2.0, 1},
                                    {100000, -3.0, 1.0, 2}};
    const IntensityFrameSequence seq = render_sequence(samples, ap, 48, 32, 250.0);
    // frame 10 lands exactly at t = 40 ms
    const Frame direct = render_frame(4.0, 2.0, ap, 48, 32);
    REQUIRE(seq.frames[10] == direct);
}

TEST_CASE("render_sequence rejects empty input") {
    REQUIRE_THROWS_AS(render_sequence({}, test_appearance(), 32, 24, 250.0),
                      std::invalid_argument);
}

TEST_CASE("pgm round-trips rounded intensities") {
    const EyeAppearance ap = test_appearance();
    const Frame f = render_frame(1.0, 1.0, ap, 33, 17);
    const auto path = std::filesystem::temp_directory_path() / "synsacc_test.pgm";
    write_pgm(path.string(), f, 33, 17);
    int w = 0, h = 0;
    const Frame back = read_pgm(path.string(), w, h);
    REQUIRE(w == 33);
    REQUIRE(h == 17);
    for (std::size_t i = 0; i < f.size(); ++i)
        REQUIRE(back[i] == static_cast<double>(std::llround(f[i])));
    std::filesystem::remove(path);
}

TEST_CASE("pgm reader rejects foreign formats") {
    const auto path = std::filesystem::temp_directory_path() / "synsacc_bad.pgm";
    {
        std::ofstream out(path);
        out << "P2\n4 4\n255\n";
    }
    int w = 0, h = 0;
    REQUIRE_THROWS_AS(read_pgm(path.string(), w, h), DataError);
    std::filesystem::remove(path);
}
