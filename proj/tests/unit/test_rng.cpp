#include <catch2/catch_amalgamated.hpp>

#include "synsacc/rng.hpp"

using namespace synsacc;

TEST_CASE("xoshiro256** reference vector") {
    // Values reproduced with an independent big-integer implementation of
    // splitmix64 seeding + xoshiro256**; any conforming implementation in
    // another language must match these.
    rng::Xoshiro256ss gen(0);
    REQUIRE(gen.next() == 11091344671253066420ull);
    REQUIRE(gen.next() == 13793997310169335082ull);

    rng::SplitMix64 sm{1234567};
    REQUIRE(sm.next() == 6457827717110365317ull);
    REQUIRE(sm.next() == 3203168211198807973ull);
}

TEST_CASE("uniform01 range and determinism") {
    rng::Xoshiro256ss gen(42);
    for (int i = 0; i < 10000; ++i) {
        const double u = gen.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
    rng::Xoshiro256ss a(7), b(7);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next() == b.next());
}

TEST_CASE("uniform range bounds") {
    rng::Xoshiro256ss gen(3);
    for (int i = 0; i < 1000; ++i) {
        const double v = gen.uniform(-25.0, 25.0);
        REQUIRE(v >= -25.0);
        REQUIRE(v <= 25.0);
    }
}

TEST_CASE("normal moments are sane") {
    rng::Xoshiro256ss gen(11);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = gen.normal();
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("exponential mean matches rate") {
    rng::Xoshiro256ss gen(5);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += gen.exponential(4.0);
    REQUIRE(std::abs(sum / n - 0.25) < 0.01);
}

TEST_CASE("substreams are independent and reproducible") {
    auto a = rng::substream(9, 1, 5);
    auto b = rng::substream(9, 1, 5);
    auto c = rng::substream(9, 1, 6);
    REQUIRE(a.next() == b.next());
    REQUIRE(a.next() != c.next());
}

TEST_CASE("below is unbiased at the edges") {
    rng::Xoshiro256ss gen(123);
    for (int i = 0; i < 1000; ++i) REQUIRE(gen.below(7) < 7);
}

TEST_CASE("algorithm identifier is enforced") {
    REQUIRE_NOTHROW(rng::require_algorithm("xoshiro256ss"));
    REQUIRE_THROWS_AS(rng::require_algorithm("mt19937"), ConfigError);
}
