#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "synsacc/rng.hpp"
#include "synsacc/snn_core.hpp"

using namespace synsacc;
using namespace synsacc::snn;

namespace {

codec::SpikeTensor tensor_from_bins(
    int h, int w, std::vector<std::vector<std::uint32_t>> bins) {
    codec::SpikeTensor t;
    t.height = h;
    t.width = w;
    t.bin_ms = 1.0;
    t.window_ms = static_cast<double>(bins.size());
    t.bins = std::move(bins);
    for (auto& bin : t.bins) std::sort(bin.begin(), bin.end());
    return t;
}

}  // namespace

TEST_CASE("cuba_step zero input from zero state stays silent") {
    CubaParams p;
    NeuronState state(3);
    const std::vector<double> zero(3, 0.0);
    for (int t = 0; t < 50; ++t) {
        const auto spikes = cuba_step(state, zero, p);
        for (double s : spikes) REQUIRE(s == 0.0);
        for (double v : state.voltage) REQUIRE(v == 0.0);
        for (double i : state.current) REQUIRE(i == 0.0);
    }
}

TEST_CASE("cuba_step hand trace: impulse 50 spikes at t=1 and t=2") {
    CubaParams p;  // alpha 0.75, beta 0.97, theta 1.25
    NeuronState state(1);

    auto spikes = cuba_step(state, {50.0}, p);
    REQUIRE_THAT(state.current[0], Catch::Matchers::WithinAbs(50.0, 1e-9));
    REQUIRE_THAT(state.voltage[0], Catch::Matchers::WithinAbs(1.5, 1e-9));
    REQUIRE(spikes[0] == 1.0);

    spikes = cuba_step(state, {0.0}, p);
    REQUIRE_THAT(state.current[0], Catch::Matchers::WithinAbs(37.5, 1e-9));
    REQUIRE_THAT(state.voltage[0], Catch::Matchers::WithinAbs(1.33, 1e-9));
    REQUIRE(spikes[0] == 1.0);
}

TEST_CASE("constant sub-threshold drive never spikes") {
    CubaParams p;
    p.current_retention = 0.0;  // i[t] = x[t]
    NeuronState state(1);
    double prev = 0.0;
    for (int t = 0; t < 2000; ++t) {
        const auto spikes = cuba_step(state, {1.0}, p);
        REQUIRE(spikes[0] == 0.0);
        REQUIRE(state.voltage[0] >= prev);  // monotone approach to 1.0
        REQUIRE(state.voltage[0] < 1.25);
        prev = state.voltage[0];
    }
    REQUIRE_THAT(state.voltage[0], Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("voltage exactly at threshold emits a spike (H(0) = 1)") {
    CubaParams p;
    p.current_retention = 0.0;
    p.voltage_retention = 0.0;  // y[t] = i[t] = x[t]
    NeuronState state(1);
    const auto spikes = cuba_step(state, {1.25}, p);
    REQUIRE(state.voltage[0] == 1.25);
    REQUIRE(spikes[0] == 1.0);
}

TEST_CASE("reset subtracts exactly theta on the step after a spike") {
    CubaParams p;
    p.current_retention = 0.0;
    p.voltage_retention = 1.0;  // y[t] = y[t-1] + 0*i - theta*s[t-1]
    NeuronState state(1);
    auto spikes = cuba_step(state, {2.0}, p);  // y stays 0: (1-beta)=0
    REQUIRE(spikes[0] == 0.0);
    // switch to a configuration where the drive lands once
    p.voltage_retention = 0.0;
    NeuronState st(1);
    spikes = cuba_step(st, {2.0}, p);  // y = 2.0 -> spike
    REQUIRE(spikes[0] == 1.0);
    p.voltage_retention = 1.0;
    // y[2] = 1.0*y[1] + 0 - theta*1 = 2.0 - 1.25
    spikes = cuba_step(st, {0.0}, p);
    REQUIRE(st.voltage[0] == 2.0 - 1.25);
}

TEST_CASE("dense_forward selects weight columns") {
    // all-ones 3 -> 2: spikes (1,0,1) -> currents (2,2)
    const std::vector<double> w(3 * 2, 1.0);
    const auto currents = dense_forward(w, 3, 2, {1.0, 0.0, 1.0});
    REQUIRE(currents == std::vector<double>{2.0, 2.0});

    // one-hot against an identity-like matrix
    std::vector<double> eye(3 * 3, 0.0);
    for (int i = 0; i < 3; ++i) eye[static_cast<std::size_t>(i) * 3 + i] = 1.0;
    REQUIRE(dense_forward(eye, 3, 3, {0.0, 1.0, 0.0}) ==
            std::vector<double>{0.0, 1.0, 0.0});

    REQUIRE(dense_forward(w, 3, 2, {0.0, 0.0, 0.0}) ==
            std::vector<double>{0.0, 0.0});
    REQUIRE_THROWS_AS(dense_forward(w, 3, 2, {1.0}), std::invalid_argument);
}

TEST_CASE("sparse dense path agrees with the dense path") {
    auto gen = rng::Xoshiro256ss(6);
    const std::size_t n = 40, m = 7;
    std::vector<double> w(n * m);
    for (double& v : w) v = gen.uniform(-1.0, 1.0);
    std::vector<double> spikes(n, 0.0);
    std::vector<std::uint32_t> active;
    for (std::size_t i = 0; i < n; ++i)
        if (gen.uniform01() < 0.3) {
            spikes[i] = 1.0;
            active.push_back(static_cast<std::uint32_t>(i));
        }
    const auto dense = dense_forward(w, n, m, spikes);
    const auto sparse = dense_forward_sparse(w, n, m, active);
    for (std::size_t j = 0; j < m; ++j)
        REQUIRE_THAT(sparse[j], Catch::Matchers::WithinAbs(dense[j], 1e-12));
}

TEST_CASE("conv_forward identity with a delta kernel") {
    auto gen = rng::Xoshiro256ss(8);
    const int h = 9, w = 7;
    std::vector<double> input(static_cast<std::size_t>(h) * w);
    for (double& v : input) v = gen.uniform(0.0, 1.0);
    std::vector<double> kernel(25, 0.0);
    kernel[2 * 5 + 2] = 1.0;  // center tap
    const auto out = conv_forward(kernel, 1, h, w, 1, 5, 2, input);
    REQUIRE(out.size() == input.size());
    for (std::size_t i = 0; i < input.size(); ++i)
        REQUIRE_THAT(out[i], Catch::Matchers::WithinAbs(input[i], 1e-12));
}

TEST_CASE("conv_forward requires spatial dims >= kernel") {
    const std::vector<double> kernel(25, 1.0);
    const std::vector<double> input(4 * 4, 1.0);
    REQUIRE_THROWS_AS(conv_forward(kernel, 1, 4, 4, 1, 5, 2, input),
                      std::invalid_argument);
}

TEST_CASE("conv_forward all-ones kernel sums the interior") {
    const int h = 9, w = 9;
    const std::vector<double> input(static_cast<std::size_t>(h) * w, 1.0);
    const std::vector<double> kernel(25, 1.0);
    const auto out = conv_forward(kernel, 1, h, w, 1, 5, 2, input);
    REQUIRE(out[4 * 9 + 4] == 25.0);  // fully interior
    REQUIRE(out[0] == 9.0);           // corner sees a 3x3 patch
}

TEST_CASE("sumpool_forward block sums") {
    // 2x2 block (1,1,1,0) -> 3
    const std::vector<double> input{1.0, 1.0, 1.0, 0.0};
    const auto out = sumpool_forward(1, 2, 2, 2, input);
    REQUIRE(out == std::vector<double>{3.0});

    std::vector<std::uint32_t> active{0, 1, 2};
    REQUIRE(sumpool_forward_sparse(1, 2, 2, 2, active) ==
            std::vector<double>{3.0});
}

TEST_CASE("recurrent_forward reduces to dense when self spikes are zero") {
    auto gen = rng::Xoshiro256ss(9);
    const std::size_t n = 5, m = 4;
    std::vector<double> w_in(n * m), w_rec(m * m);
    for (double& v : w_in) v = gen.uniform(-1.0, 1.0);
    for (double& v : w_rec) v = gen.uniform(-1.0, 1.0);
    const std::vector<double> spikes{1.0, 0.0, 1.0, 0.0, 1.0};
    const std::vector<double> no_self(m, 0.0);

    const auto rec = recurrent_forward(w_in, w_rec, n, m, spikes, no_self);
    const auto dense = dense_forward(w_in, n, m, spikes);
    REQUIRE(rec == dense);

    // zero W_rec: identical to dense at every step regardless of self spikes
    const std::vector<double> zero_rec(m * m, 0.0);
    const std::vector<double> self{1.0, 1.0, 0.0, 1.0};
    REQUIRE(recurrent_forward(w_in, zero_rec, n, m, spikes, self) == dense);

    // one-neuron self loop with W_in = 0 and persistent self spike
    const std::vector<double> w0{0.0};
    const std::vector<double> wr{0.625};
    const auto current = recurrent_forward(w0, wr, 1, 1, {0.0}, {1.0});
    REQUIRE(current == std::vector<double>{0.625});
}

TEST_CASE("build_dense_snn wires the documented stack") {
    const SnnModel m = build_dense_snn(16, 16);
    REQUIRE(m.layers.size() == 4);
    REQUIRE(m.layers[0].kind == LayerKind::flatten);
    REQUIRE(m.layers[1].fan_in == 512);  // 2*16*16
    REQUIRE(m.layers[1].fan_out == 512);
    REQUIRE(m.layers[2].fan_in == 512);
    REQUIRE(m.layers[3].fan_out == 2);
    // parameter count = fan_in*fan_out per dense layer, no bias
    REQUIRE(m.layers[1].param_count() == 512u * 512u);
    REQUIRE(m.layers[3].param_count() == 512u * 2u);
}

TEST_CASE("dense weight init respects the fan-in bound and f32 grid") {
    const double gain = 3.0;
    const SnnModel m = build_dense_snn(8, 8, 32, 16, CubaParams{}, 77, gain);
    const double bound = gain / std::sqrt(static_cast<double>(m.layers[1].fan_in));
    for (double w : m.layers[1].weights) {
        REQUIRE(std::abs(w) <= bound);
        REQUIRE(w == static_cast<double>(static_cast<float>(w)));
    }
    // deterministic per seed
    const SnnModel m2 = build_dense_snn(8, 8, 32, 16, CubaParams{}, 77, gain);
    REQUIRE(m.layers[1].weights == m2.layers[1].weights);
    const SnnModel m3 = build_dense_snn(8, 8, 32, 16, CubaParams{}, 78, gain);
    REQUIRE(m.layers[1].weights != m3.layers[1].weights);
}

TEST_CASE("build_conv_snn parameter counts match the layer algebra") {
    const SnnModel m = build_conv_snn(64, 64);
    // pool, conv, pool, conv, pool, conv, flatten, dense, recurrent, dense
    REQUIRE(m.layers.size() == 10);
    REQUIRE(m.layers[1].param_count() == 400);    // 2*8*25
    REQUIRE(m.layers[3].param_count() == 1600);   // 8*8*25
    REQUIRE(m.layers[5].param_count() == 400);    // 8*2*25
    REQUIRE(m.layers[0].param_count() == 0);
    REQUIRE(m.layers[2].param_count() == 0);
    REQUIRE(m.layers[6].kind == LayerKind::flatten);
    REQUIRE(m.layers[6].fan_in == 128);  // 2 * 8 * 8 after three pools
    REQUIRE(m.layers[7].fan_out == 512);
    REQUIRE(m.layers[8].kind == LayerKind::recurrent);
    REQUIRE(m.layers[8].fan_in == 512);
    REQUIRE(m.layers[8].fan_out == 256);
    REQUIRE(m.layers[9].fan_out == 2);
}

TEST_CASE("builder shapes compose for arbitrary geometry") {
    for (auto [h, w] : {std::pair{24, 40}, {48, 64}, {32, 32}}) {
        REQUIRE_NOTHROW(build_dense_snn(h, w, 16, 8).validate());
        REQUIRE_NOTHROW(build_conv_snn(h, w).validate());
    }
}

TEST_CASE("forward on all-zero input leaves every counter at zero") {
    const SnnModel m = build_dense_snn(4, 4, 8, 8, CubaParams{}, 1, 10.0);
    const auto tensor = tensor_from_bins(4, 4, {{}, {}, {}});
    const auto result = forward(m, tensor);
    REQUIRE(result.timesteps == 3);
    for (double e : result.input_events_per_layer) REQUIRE(e == 0.0);
    for (double s : result.output_spikes_per_layer) REQUIRE(s == 0.0);
    for (const auto& train : result.output_trains)
        for (double s : train) REQUIRE(s == 0.0);
}

TEST_CASE("single dense layer forward equals dense_forward + cuba_step") {
    SnnModel m;
    m.in_c = 2;
    m.in_h = 2;
    m.in_w = 2;
    m.layers.push_back(make_dense(8, 2, CubaParams{}));
    auto gen = rng::Xoshiro256ss(12);
    for (double& w : m.layers[0].weights) w = gen.uniform(-2.0, 2.0);
    m.validate();

    const auto tensor = tensor_from_bins(2, 2, {{0, 3, 5}});
    const auto result = forward(m, tensor);

    NeuronState state(2);
    std::vector<double> spikes_in(8, 0.0);
    spikes_in[0] = spikes_in[3] = spikes_in[5] = 1.0;
    const auto current = dense_forward(m.layers[0].weights, 8, 2, spikes_in);
    const auto manual = cuba_step(state, current, m.layers[0].neuron);
    REQUIRE(result.output_trains[0][0] == manual[0]);
    REQUIRE(result.output_trains[1][0] == manual[1]);
    REQUIRE(result.input_events_per_layer[0] == 3.0);
}

TEST_CASE("spike counters match an independent enumeration") {
    // 3-neuron hidden layer over 4 timesteps, checked against a direct
    // re-implementation of the dynamics.
    SnnModel m;
    m.in_c = 2;
    m.in_h = 1;
    m.in_w = 2;
    m.layers.push_back(make_dense(4, 3, CubaParams{}));
    m.layers.push_back(make_dense(3, 2, CubaParams{}));
    auto gen = rng::Xoshiro256ss(33);
    for (auto* layer : {&m.layers[0], &m.layers[1]})
        for (double& w : layer->weights) w = gen.uniform(-3.0, 3.0);
    m.validate();

    const auto tensor = tensor_from_bins(1, 2, {{0, 2}, {1}, {}, {0, 1, 2, 3}});
    const auto result = forward(m, tensor);

    // independent enumeration
    const CubaParams p;
    double i1[3] = {}, y1[3] = {}, s1[3] = {};
    double i2[2] = {}, y2[2] = {}, s2[2] = {};
    double hidden_spikes = 0.0, out_spikes = 0.0, hidden_inputs = 0.0;
    for (std::size_t t = 0; t < 4; ++t) {
        double x1[3] = {};
        for (std::uint32_t idx : tensor.bins[t])
            for (int j = 0; j < 3; ++j)
                x1[j] += m.layers[0].weights[idx * 3 + static_cast<std::uint32_t>(j)];
        double s1_new[3];
        for (int j = 0; j < 3; ++j) {
            i1[j] = p.current_retention * i1[j] + x1[j];
            y1[j] = p.voltage_retention * y1[j] +
                    (1.0 - p.voltage_retention) * i1[j] - p.threshold * s1[j];
            s1_new[j] = y1[j] >= p.threshold ? 1.0 : 0.0;
        }
        double x2[2] = {};
        for (int j = 0; j < 3; ++j) {
            s1[j] = s1_new[j];
            hidden_spikes += s1[j];
            for (int k = 0; k < 2; ++k)
                x2[k] += s1[j] * m.layers[1].weights[static_cast<std::size_t>(j) * 2 +
                                                     static_cast<std::size_t>(k)];
        }
        hidden_inputs += static_cast<double>(tensor.bins[t].size());
        for (int k = 0; k < 2; ++k) {
            i2[k] = p.current_retention * i2[k] + x2[k];
            y2[k] = p.voltage_retention * y2[k] +
                    (1.0 - p.voltage_retention) * i2[k] - p.threshold * s2[k];
            s2[k] = y2[k] >= p.threshold ? 1.0 : 0.0;
            out_spikes += s2[k];
            REQUIRE(result.output_trains[k][t] == s2[k]);
        }
    }
    REQUIRE(result.input_events_per_layer[0] == hidden_inputs);
    REQUIRE(result.output_spikes_per_layer[0] == hidden_spikes);
    REQUIRE(result.input_events_per_layer[1] == hidden_spikes);
    REQUIRE(result.output_spikes_per_layer[1] == out_spikes);
}

TEST_CASE("forward state is reset between samples") {
    const SnnModel m = build_dense_snn(4, 4, 12, 12, CubaParams{}, 3, 20.0);
    const auto tensor = tensor_from_bins(4, 4, {{1, 5, 9}, {2, 3}, {30, 31}, {7}});
    const auto a = forward(m, tensor);
    const auto b = forward(m, tensor);
    REQUIRE(a.output_trains == b.output_trains);
    REQUIRE(a.input_events_per_layer == b.input_events_per_layer);
    REQUIRE(a.output_spikes_per_layer == b.output_spikes_per_layer);
}

TEST_CASE("forward rejects mismatched geometry") {
    const SnnModel m = build_dense_snn(4, 4, 8, 8);
    const auto tensor = tensor_from_bins(4, 5, {{}});
    REQUIRE_THROWS_AS(forward(m, tensor), std::invalid_argument);
}

TEST_CASE("predict uses total spike counts with a low-index tie break") {
    std::vector<std::vector<double>> trains{{1, 1, 1, 1, 1, 1, 1, 1, 1, 1},
                                            {1, 1, 1, 0, 0, 0, 0, 0, 0, 0}};
    REQUIRE(predict(trains) == 0);  // 10 vs 3
    REQUIRE(predict({{0, 0}, {0, 0}}) == 0);
    REQUIRE(predict({{1, 1, 1, 1, 0}, {1, 1, 1, 1, 1}}) == 1);  // 4 vs 5
}

TEST_CASE("relaxed emission is the clamped integral of the surrogate") {
    const double theta = 1.25, width = 0.03;
    REQUIRE(detail::relaxed_spike(theta - width, theta, width) == 0.0);
    REQUIRE(detail::relaxed_spike(theta + width, theta, width) == width);
    REQUIRE_THAT(detail::relaxed_spike(theta, theta, width),
                 Catch::Matchers::WithinAbs(width / 2.0, 1e-15));
    // derivative at points away from the kink of the triangle
    const double h = 1e-7;
    for (double v : {theta - width / 2.0, theta + width / 3.0, theta - width / 5.0}) {
        const double fd = (detail::relaxed_spike(v + h, theta, width) -
                           detail::relaxed_spike(v - h, theta, width)) /
                          (2.0 * h);
        const double expected = 1.0 - std::abs(v - theta) / width;
        REQUIRE_THAT(fd, Catch::Matchers::WithinAbs(expected, 1e-6));
    }
}
