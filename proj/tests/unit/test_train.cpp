#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "synsacc/rng.hpp"
#include "synsacc/train.hpp"

using namespace synsacc;
using namespace synsacc::train;
using snn::CubaParams;
using snn::SnnModel;

namespace {

codec::SpikeTensor tensor_from_bins(
    int h, int w, std::vector<std::vector<std::uint32_t>> bins,
    codec::LabelClass label = codec::LabelClass::fixation) {
    codec::SpikeTensor t;
    t.height = h;
    t.width = w;
    t.bin_ms = 1.0;
    t.window_ms = static_cast<double>(bins.size());
    t.label = label;
    t.bins = std::move(bins);
    for (auto& bin : t.bins) std::sort(bin.begin(), bin.end());
    return t;
}

/// Wide-surrogate neuron for micro-net checks: keeps gradient support dense.
CubaParams soft_neuron() {
    CubaParams p;
    p.current_retention = 0.6;
    p.voltage_retention = 0.8;
    p.threshold = 0.6;
    p.surrogate_slope = 3.0;
    p.surrogate_width = 0.5;
    return p;
}

codec::SpikeTensor random_tensor(int h, int w, std::size_t T, double density,
                                 std::uint64_t seed,
                                 codec::LabelClass label) {
    auto gen = rng::Xoshiro256ss(seed);
    std::vector<std::vector<std::uint32_t>> bins(T);
    const auto cells = static_cast<std::uint32_t>(2 * h * w);
    for (auto& bin : bins)
        for (std::uint32_t c = 0; c < cells; ++c)
            if (gen.uniform01() < density) bin.push_back(c);
    return tensor_from_bins(h, w, std::move(bins), label);
}

double relaxed_loss(const SnnModel& model, const codec::SpikeTensor& tensor,
                    int label, const TrainConfig& cfg) {
    const auto result =
        snn::forward(model, tensor, nullptr, snn::EmissionMode::relaxed);
    return spike_rate_loss(result.output_trains, label, cfg.r_true, cfg.r_false);
}

/// Max BPTT-vs-central-difference deviation, normalized by the largest
/// finite-difference component.
double gradcheck_max_error(SnnModel& model, const codec::SpikeTensor& tensor,
                           int label, const TrainConfig& cfg) {
    snn::ForwardTrace trace;
    const auto result =
        snn::forward(model, tensor, &trace, snn::EmissionMode::relaxed);
    const Gradients grads = backward(model, tensor, trace, result, label, cfg,
                                     snn::EmissionMode::relaxed);

    double max_abs_err = 0.0, max_fd = 0.0;
    auto probe = [&](std::vector<double>& w, const std::vector<double>& g) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            const double h = 1e-6 * std::max(1.0, std::abs(orig));
            w[i] = orig + h;
            const double up = relaxed_loss(model, tensor, label, cfg);
            w[i] = orig - h;
            const double down = relaxed_loss(model, tensor, label, cfg);
            w[i] = orig;
            const double fd = (up - down) / (2.0 * h);
            max_abs_err = std::max(max_abs_err, std::abs(fd - g[i]));
            max_fd = std::max(max_fd, std::abs(fd));
        }
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        probe(model.layers[l].weights, grads.weights[l]);
        probe(model.layers[l].rec_weights, grads.rec_weights[l]);
    }
    return max_abs_err / std::max(max_fd, 1e-8);
}

}  // namespace

TEST_CASE("spike_rate_loss matches the hand-substituted values") {
    TrainConfig cfg;
    // perfect rates -> zero loss
    REQUIRE(spike_rate_loss({{1, 1, 0, 0}, {0, 0, 0, 0}}, 0, 0.5, 0.0) == 0.0);
    // all-spiking both classes, label 0: 0.5*((1-0.5)^2 + (1-0)^2) = 0.625
    REQUIRE(spike_rate_loss({{1, 1, 1, 1}, {1, 1, 1, 1}}, 0, 0.5, 0.0) == 0.625);
    REQUIRE(spike_rate_loss({{0, 1}, {1, 1}}, 1, 1.0, 0.5) == 0.0);
    REQUIRE_THROWS_AS(spike_rate_loss({{1.0}}, 0, 0.5, 0.0),
                      std::invalid_argument);
    (void)cfg;
}

TEST_CASE("spike_rate_loss is non-negative, zero only at the targets") {
    auto gen = rng::Xoshiro256ss(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::vector<double>> trains(2, std::vector<double>(10));
        for (auto& train : trains)
            for (double& s : train) s = gen.below(2) ? 1.0 : 0.0;
        const double loss = spike_rate_loss(trains, 0, 0.5, 0.1);
        REQUIRE(loss >= 0.0);
        const double r0 = std::accumulate(trains[0].begin(), trains[0].end(), 0.0) / 10.0;
        const double r1 = std::accumulate(trains[1].begin(), trains[1].end(), 0.0) / 10.0;
        if (loss == 0.0) {
            REQUIRE(r0 == 0.5);
            REQUIRE(r1 == 0.1);
        }
    }
}

TEST_CASE("surrogate_grad is the documented triangle") {
    REQUIRE(surrogate_grad(1.25, 1.25, 3.0, 0.03) == 3.0);
    REQUIRE(surrogate_grad(1.25 + 0.03, 1.25, 3.0, 0.03) == 0.0);
    REQUIRE(surrogate_grad(1.25 - 0.05, 1.25, 3.0, 0.03) == 0.0);
    REQUIRE_THAT(surrogate_grad(1.25 + 0.015, 1.25, 3.0, 0.03),
                 Catch::Matchers::WithinAbs(1.5, 1e-12));
    REQUIRE_THAT(surrogate_grad(1.25 - 0.015, 1.25, 3.0, 0.03),
                 Catch::Matchers::WithinAbs(1.5, 1e-12));
    REQUIRE_THROWS_AS(surrogate_grad(1.0, 1.25, 3.0, 0.0), std::invalid_argument);
}

TEST_CASE("adamw with zero gradients applies only decoupled decay") {
    SnnModel m = snn::build_dense_snn(2, 2, 3, 3, CubaParams{}, 5, 2.0);
    const auto before = m.layers[1].weights;
    AdamW opt(m, 0.1, 0.01);
    Gradients zero(m);
    opt.step(m, zero);
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double expected = static_cast<double>(
            static_cast<float>(before[i] - 0.1 * 0.01 * before[i]));
        REQUIRE(m.layers[1].weights[i] == expected);
    }
}

TEST_CASE("bptt gradients match finite differences on micro networks") {
    TrainConfig cfg;
    cfg.r_true = 0.5;
    cfg.r_false = 0.05;

    SECTION("dense stack") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            SnnModel m;
            m.in_c = 2;
            m.in_h = 1;
            m.in_w = 2;
            m.layers.push_back(snn::make_dense(4, 3, soft_neuron()));
            m.layers.push_back(snn::make_dense(3, 2, soft_neuron()));
            auto gen = rng::Xoshiro256ss(900 + seed);
            for (auto& l : m.layers)
                for (double& w : l.weights) w = gen.uniform(-1.2, 1.2);
            const auto tensor = random_tensor(1, 2, 4, 0.5, 40 + seed,
                                              codec::LabelClass::saccade);
            const double err = gradcheck_max_error(m, tensor, seed % 2, cfg);
            REQUIRE(err <= 1e-4);
        }
    }

    SECTION("recurrent stack") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            SnnModel m;
            m.in_c = 2;
            m.in_h = 1;
            m.in_w = 2;
            m.layers.push_back(snn::make_recurrent(4, 3, soft_neuron()));
            m.layers.push_back(snn::make_dense(3, 2, soft_neuron()));
            auto gen = rng::Xoshiro256ss(1300 + seed);
            for (auto& l : m.layers) {
                for (double& w : l.weights) w = gen.uniform(-1.2, 1.2);
                for (double& w : l.rec_weights) w = gen.uniform(-0.8, 0.8);
            }
            const auto tensor = random_tensor(1, 2, 3, 0.5, 70 + seed,
                                              codec::LabelClass::fixation);
            const double err = gradcheck_max_error(m, tensor, seed % 2, cfg);
            REQUIRE(err <= 1e-4);
        }
    }

    SECTION("conv and pool stack") {
        SnnModel m;
        m.in_c = 2;
        m.in_h = 4;
        m.in_w = 4;
        m.layers.push_back(snn::make_sumpool(2, 4, 4, 2, soft_neuron()));
        m.layers.push_back(snn::make_conv(2, 2, 2, 2, 2, 0, soft_neuron()));
        m.layers.push_back(snn::make_flatten(2, 1, 1));
        m.layers.push_back(snn::make_dense(2, 2, soft_neuron()));
        auto gen = rng::Xoshiro256ss(5000);
        for (auto& l : m.layers)
            for (double& w : l.weights) w = gen.uniform(-1.0, 1.0);
        m.validate();
        const auto tensor =
            random_tensor(4, 4, 3, 0.4, 99, codec::LabelClass::saccade);
        const double err = gradcheck_max_error(m, tensor, 1, cfg);
        REQUIRE(err <= 1e-4);
    }

    SECTION("detached reset changes the gradient") {
        SnnModel m;
        m.in_c = 2;
        m.in_h = 1;
        m.in_w = 2;
        m.layers.push_back(snn::make_dense(4, 2, soft_neuron()));
        auto gen = rng::Xoshiro256ss(31);
        for (double& w : m.layers[0].weights) w = gen.uniform(-1.5, 1.5);
        const auto tensor =
            random_tensor(1, 2, 4, 0.6, 11, codec::LabelClass::saccade);
        snn::ForwardTrace trace;
        const auto result =
            snn::forward(m, tensor, &trace, snn::EmissionMode::relaxed);
        TrainConfig attached = cfg;
        TrainConfig detached = cfg;
        detached.detach_reset = true;
        const auto ga = backward(m, tensor, trace, result, 1, attached,
                                 snn::EmissionMode::relaxed);
        const auto gd = backward(m, tensor, trace, result, 1, detached,
                                 snn::EmissionMode::relaxed);
        REQUIRE(ga.weights[0] != gd.weights[0]);
    }
}

TEST_CASE("delayed synapses pass the gradient check") {
    TrainConfig cfg;
    SnnModel m;
    m.in_c = 2;
    m.in_h = 1;
    m.in_w = 2;
    m.layers.push_back(snn::make_dense(4, 3, soft_neuron()));
    m.layers.push_back(snn::make_dense(3, 2, soft_neuron()));
    auto gen = rng::Xoshiro256ss(808);
    for (auto& l : m.layers)
        for (double& w : l.weights) w = gen.uniform(-1.2, 1.2);
    // fixed integer delays on the first layer
    m.layers[0].delay_max = 2;
    m.layers[0].delays.assign(4 * 3, 0);
    for (auto& d : m.layers[0].delays)
        d = static_cast<std::uint16_t>(gen.below(3));
    const auto tensor =
        random_tensor(1, 2, 5, 0.5, 21, codec::LabelClass::saccade);
    const double err = gradcheck_max_error(m, tensor, 0, cfg);
    REQUIRE(err <= 1e-4);
}

TEST_CASE("zero learning rate leaves weights unchanged") {
    SnnModel m = snn::build_dense_snn(4, 4, 6, 6, soft_neuron(), 2, 4.0);
    const auto before = m.layers[1].weights;
    std::vector<codec::SpikeTensor> set;
    for (int i = 0; i < 4; ++i)
        set.push_back(random_tensor(4, 4, 5, 0.2, 100 + i,
                                    i % 2 ? codec::LabelClass::saccade
                                          : codec::LabelClass::fixation));
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.0;
    cfg.batch_size = 2;
    bptt_train(m, set, set, cfg);
    REQUIRE(m.layers[1].weights == before);
}

TEST_CASE("training is bit-deterministic across thread counts") {
    auto make_set = [] {
        std::vector<codec::SpikeTensor> set;
        for (int i = 0; i < 8; ++i)
            set.push_back(random_tensor(4, 4, 6, 0.25, 500 + i,
                                        i % 2 ? codec::LabelClass::saccade
                                              : codec::LabelClass::fixation));
        return set;
    };
    const auto set = make_set();

    auto run = [&](int threads) {
        SnnModel m = snn::build_dense_snn(4, 4, 8, 8, soft_neuron(), 7, 4.0);
        TrainConfig cfg;
        cfg.epochs = 4;
        cfg.batch_size = 3;
        cfg.learning_rate = 0.02;
        cfg.seed = 11;
        cfg.threads = threads;
        const auto history = bptt_train(m, set, set, cfg);
        return std::pair{m, history};
    };
    const auto [m1, h1] = run(1);
    const auto [m2, h2] = run(2);
    for (std::size_t l = 0; l < m1.layers.size(); ++l)
        REQUIRE(m1.layers[l].weights == m2.layers[l].weights);
    REQUIRE(h1.loss == h2.loss);
    REQUIRE(h1.eval_accuracy == h2.eval_accuracy);
}

TEST_CASE("class relabeling with permuted output weights tracks the same loss") {
    std::vector<codec::SpikeTensor> set_a, set_b;
    for (int i = 0; i < 6; ++i) {
        auto t = random_tensor(4, 4, 6, 0.3, 700 + i,
                               i % 2 ? codec::LabelClass::saccade
                                     : codec::LabelClass::fixation);
        set_a.push_back(t);
        t.label = t.label == codec::LabelClass::saccade
                      ? codec::LabelClass::fixation
                      : codec::LabelClass::saccade;
        set_b.push_back(t);
    }
    auto run = [&](const std::vector<codec::SpikeTensor>& set, bool swap_out) {
        SnnModel m = snn::build_dense_snn(4, 4, 8, 8, soft_neuron(), 13, 4.0);
        if (swap_out) {
            auto& w = m.layers.back().weights;
            for (std::size_t i = 0; i + 1 < w.size(); i += 2) std::swap(w[i], w[i + 1]);
        }
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.batch_size = 2;
        cfg.learning_rate = 0.02;
        cfg.seed = 19;
        return bptt_train(m, set, set, cfg);
    };
    const auto base = run(set_a, false);
    const auto permuted = run(set_b, true);
    for (std::size_t e = 0; e < base.loss.size(); ++e)
        REQUIRE_THAT(permuted.loss[e],
                     Catch::Matchers::WithinAbs(base.loss[e], 1e-9));
}

TEST_CASE("single-sample overfit drives the loss down") {
    SnnModel m = snn::build_dense_snn(4, 4, 10, 10, soft_neuron(), 3, 8.0);
    std::vector<codec::SpikeTensor> set{
        random_tensor(4, 4, 8, 0.35, 42, codec::LabelClass::saccade)};
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 1;
    cfg.learning_rate = 0.05;
    cfg.weight_decay = 0.0;
    cfg.seed = 5;
    const auto history = bptt_train(m, set, set, cfg);
    auto window_mean = [&](std::size_t from, std::size_t to) {
        double s = 0.0;
        for (std::size_t i = from; i < to; ++i) s += history.loss[i];
        return s / static_cast<double>(to - from);
    };
    REQUIRE(window_mean(190, 200) < window_mean(10, 20));
    REQUIRE(history.loss.back() < history.loss.front());
}

TEST_CASE("linearly separable toy set trains to high accuracy") {
    // class 0 spikes on the left half, class 1 on the right half
    auto make_sample = [](std::uint64_t seed, int cls) {
        auto gen = rng::Xoshiro256ss(seed);
        std::vector<std::vector<std::uint32_t>> bins(20);
        for (auto& bin : bins)
            for (int e = 0; e < 8; ++e) {
                const int x = static_cast<int>(gen.below(8)) + (cls ? 8 : 0);
                const int y = static_cast<int>(gen.below(16));
                const int p = static_cast<int>(gen.below(2));
                bin.push_back(static_cast<std::uint32_t>((p * 16 + y) * 16 + x));
            }
        return bins;
    };
    std::vector<codec::SpikeTensor> train_set;
    for (int i = 0; i < 40; ++i) {
        const int cls = i % 2;
        train_set.push_back(tensor_from_bins(
            16, 16, make_sample(3000 + static_cast<std::uint64_t>(i), cls),
            cls ? codec::LabelClass::saccade : codec::LabelClass::fixation));
    }
    SnnModel m = snn::build_dense_snn(16, 16, 24, 24, CubaParams{}, 21, 60.0);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.05;
    cfg.seed = 9;
    cfg.threads = 2;
    const auto history = bptt_train(m, train_set, train_set, cfg);
    REQUIRE(history.train_accuracy.back() >= 0.95);
}

TEST_CASE("stratified subsample keeps the class ratio within one sample") {
    std::vector<codec::SpikeTensor> set;
    for (int i = 0; i < 10; ++i)
        set.push_back(random_tensor(2, 2, 2, 0.5, 10 + i,
                                    i < 6 ? codec::LabelClass::fixation
                                          : codec::LabelClass::saccade));
    const auto idx = stratified_subsample(set, 0.5, 3);
    REQUIRE(idx.size() == 5);
    int fix = 0;
    for (std::size_t i : idx)
        if (set[i].label == codec::LabelClass::fixation) ++fix;
    REQUIRE(std::abs(fix - 3) <= 1);
    REQUIRE(std::is_sorted(idx.begin(), idx.end()));

    const auto all = stratified_subsample(set, 1.0, 3);
    REQUIRE(all.size() == 10);
    REQUIRE_THROWS_AS(stratified_subsample({}, 0.5, 1), std::invalid_argument);
}

TEST_CASE("finetune with fraction 1.0 equals plain training") {
    std::vector<codec::SpikeTensor> train_set, eval_set;
    for (int i = 0; i < 6; ++i)
        train_set.push_back(random_tensor(4, 4, 5, 0.3, 60 + i,
                                          i % 2 ? codec::LabelClass::saccade
                                                : codec::LabelClass::fixation));
    for (int i = 0; i < 2; ++i)
        eval_set.push_back(random_tensor(4, 4, 5, 0.3, 90 + i,
                                         i % 2 ? codec::LabelClass::saccade
                                               : codec::LabelClass::fixation));
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.seed = 8;

    SnnModel a = snn::build_dense_snn(4, 4, 6, 6, soft_neuron(), 4, 4.0);
    SnnModel b = a;
    bptt_train(a, train_set, eval_set, cfg);
    finetune(b, train_set, eval_set, 1.0, cfg);
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        REQUIRE(a.layers[l].weights == b.layers[l].weights);
}

TEST_CASE("exploding learning rate triggers the divergence guard") {
    SnnModel m = snn::build_dense_snn(4, 4, 6, 6, soft_neuron(), 2, 4.0);
    std::vector<codec::SpikeTensor> set{
        random_tensor(4, 4, 5, 0.4, 1, codec::LabelClass::saccade),
        random_tensor(4, 4, 5, 0.4, 2, codec::LabelClass::fixation)};
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e308;
    REQUIRE_THROWS_AS(bptt_train(m, set, set, cfg), DivergenceError);
}

TEST_CASE("weight normalization produces unit incoming vectors") {
    SnnModel m = snn::build_dense_snn(4, 4, 6, 6, soft_neuron(), 2, 4.0);
    normalize_weights(m);
    const auto& layer = m.layers[1];
    for (std::size_t j = 0; j < layer.fan_out; ++j) {
        double norm = 0.0;
        for (std::size_t i = 0; i < layer.fan_in; ++i) {
            const double w = layer.weights[i * layer.fan_out + j];
            norm += w * w;
        }
        REQUIRE_THAT(std::sqrt(norm), Catch::Matchers::WithinAbs(1.0, 1e-5));
    }
}
