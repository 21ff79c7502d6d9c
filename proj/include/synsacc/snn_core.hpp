#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "synsacc/common.hpp"
#include "synsacc/parallel.hpp"
#include "synsacc/rng.hpp"
#include "synsacc/spike_codec.hpp"

namespace synsacc::snn {

/// CUBA-LIF neuron constants. Retentions are the per-step keep factors of
/// the two state variables (a framework quoting decay d means retention 1-d;
/// from_decays applies that mapping).
struct CubaParams {
    double current_retention = 0.75;  // alpha
    double voltage_retention = 0.97;  // beta
    double threshold = 1.25;          // theta
    double surrogate_slope = 3.0;
    double surrogate_width = 0.03;

    static CubaParams from_decays(double current_decay, double voltage_decay,
                                  double threshold = 1.25,
                                  double surrogate_slope = 3.0,
                                  double surrogate_width = 0.03) {
        CubaParams p;
        p.current_retention = 1.0 - current_decay;
        p.voltage_retention = 1.0 - voltage_decay;
        p.threshold = threshold;
        p.surrogate_slope = surrogate_slope;
        p.surrogate_width = surrogate_width;
        return p;
    }

    void validate() const {
        if (current_retention < 0.0 || current_retention > 1.0 ||
            voltage_retention < 0.0 || voltage_retention > 1.0)
            throw std::invalid_argument("cuba: retentions must lie in [0,1]");
        if (!(threshold > 0.0))
            throw std::invalid_argument("cuba: threshold must be > 0");
        if (!(surrogate_slope > 0.0) || !(surrogate_width > 0.0))
            throw std::invalid_argument("cuba: surrogate parameters must be > 0");
    }
};

/// Per-layer dynamic state; zeroed at the start of every sequence.
struct NeuronState {
    std::vector<double> current;      // i[t]
    std::vector<double> voltage;     // y[t]
    std::vector<double> prev_spikes;  // s[t-1]

    explicit NeuronState(std::size_t n = 0)
        : current(n, 0.0), voltage(n, 0.0), prev_spikes(n, 0.0) {}

    void reset() {
        std::fill(current.begin(), current.end(), 0.0);
        std::fill(voltage.begin(), voltage.end(), 0.0);
        std::fill(prev_spikes.begin(), prev_spikes.end(), 0.0);
    }
};

enum class EmissionMode {
    binary,  // s = H(y - theta), H(0) = 1
    relaxed  // s = clamped integral of the surrogate kernel; for grad checks
};

namespace detail {

/// Relaxed spike: the antiderivative of surrogate_grad/slope, saturating at
/// surrogate_width. Continuous, piecewise quadratic, sigma'(theta) = 1.
inline double relaxed_spike(double v, double theta, double width) {
    if (v <= theta - width) return 0.0;
    if (v >= theta + width) return width;
    const double d = v - theta;
    if (d <= 0.0) {
        const double u = d + width;
        return u * u / (2.0 * width);
    }
    const double u = width - d;
    return width - u * u / (2.0 * width);
}

}  // namespace detail

/// One discrete CUBA-LIF update, in order: current integration, voltage
/// update with previous-step reset subtraction, spike emission.
///   i[t] = alpha * i[t-1] + x[t]
///   y[t] = beta * y[t-1] + (1 - beta) * i[t] - theta * s[t-1]
///   s[t] = H(y[t] - theta), boundary inclusive
inline std::vector<double> cuba_step(NeuronState& state,
                                     const std::vector<double>& input,
                                     const CubaParams& p,
                                     EmissionMode mode = EmissionMode::binary) {
    if (input.size() != state.current.size())
        throw std::invalid_argument("cuba_step: input/state shape mismatch");
    const std::size_t n = input.size();
    std::vector<double> spikes(n);
    for (std::size_t j = 0; j < n; ++j) {
        state.current[j] = p.current_retention * state.current[j] + input[j];
        const double v = p.voltage_retention * state.voltage[j] +
                         (1.0 - p.voltage_retention) * state.current[j] -
                         p.threshold * state.prev_spikes[j];
        state.voltage[j] = v;
        const double s = mode == EmissionMode::binary
                             ? (v >= p.threshold ? 1.0 : 0.0)
                             : detail::relaxed_spike(v, p.threshold,
                                                     p.surrogate_width);
        spikes[j] = s;
        state.prev_spikes[j] = s;
    }
    return spikes;
}

enum class LayerKind { dense, conv2d, sumpool, flatten, recurrent };

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::sumpool: return "sumpool";
        case LayerKind::flatten: return "flatten";
        case LayerKind::recurrent: return "recurrent";
    }
    return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "dense") return LayerKind::dense;
    if (s == "conv2d") return LayerKind::conv2d;
    if (s == "sumpool") return LayerKind::sumpool;
    if (s == "flatten") return LayerKind::flatten;
    if (s == "recurrent") return LayerKind::recurrent;
    throw DataError("unknown layer kind: " + s);
}

/// One synaptic stage plus (except for flatten) a CUBA neuron population.
/// Dense/recurrent weights are stored input-major: weights[i*fan_out + j] is
/// the synapse input i -> neuron j, so a presynaptic spike touches one
/// contiguous row. Conv kernels are (c_out, c_in, k, k). Optional per-synapse
/// integer timestep delays apply to the feedforward weights of dense and
/// recurrent layers.
struct Layer {
    LayerKind kind = LayerKind::dense;
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, out_h = 0, out_w = 0;
    std::size_t fan_in = 0, fan_out = 0;
    int kernel = 0, stride = 1, pad = 0;
    CubaParams neuron;
    std::vector<double> weights;
    std::vector<double> rec_weights;       // recurrent only, source-major
    std::vector<std::uint16_t> delays;     // fan_in*fan_out, empty = no delays
    int delay_max = 0;

    bool has_state() const { return kind != LayerKind::flatten; }
    bool has_weights() const { return !weights.empty(); }
    std::size_t param_count() const { return weights.size() + rec_weights.size(); }
};

// --- synaptic stage primitives -----------------------------------------------

/// currents[j] = sum_i w[i, j] * spikes[i]; weights input-major (fan_in rows).
inline std::vector<double> dense_forward(const std::vector<double>& weights,
                                         std::size_t fan_in, std::size_t fan_out,
                                         const std::vector<double>& spikes_in) {
    if (spikes_in.size() != fan_in || weights.size() != fan_in * fan_out)
        throw std::invalid_argument("dense_forward: shape mismatch");
    std::vector<double> currents(fan_out, 0.0);
    for (std::size_t i = 0; i < fan_in; ++i) {
        const double s = spikes_in[i];
        if (s == 0.0) continue;
        const double* row = weights.data() + i * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) currents[j] += s * row[j];
    }
    return currents;
}

/// Sparse-input variant for binary spike index lists.
inline std::vector<double> dense_forward_sparse(
    const std::vector<double>& weights, std::size_t fan_in, std::size_t fan_out,
    const std::vector<std::uint32_t>& active) {
    if (weights.size() != fan_in * fan_out)
        throw std::invalid_argument("dense_forward_sparse: shape mismatch");
    std::vector<double> currents(fan_out, 0.0);
    for (std::uint32_t i : active) {
        if (i >= fan_in)
            throw std::invalid_argument("dense_forward_sparse: index out of range");
        const double* row = weights.data() + static_cast<std::size_t>(i) * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) currents[j] += row[j];
    }
    return currents;
}

/// 2-D cross-correlation, stride 1, zero padding; kernels (c_out, c_in, k, k).
inline std::vector<double> conv_forward(const std::vector<double>& kernels,
                                        int c_in, int h, int w, int c_out,
                                        int k, int pad,
                                        const std::vector<double>& input) {
    if (h < k || w < k)
        throw std::invalid_argument("conv_forward: spatial dims smaller than kernel");
    if (input.size() != static_cast<std::size_t>(c_in) * h * w)
        throw std::invalid_argument("conv_forward: input shape mismatch");
    if (kernels.size() != static_cast<std::size_t>(c_out) * c_in * k * k)
        throw std::invalid_argument("conv_forward: kernel shape mismatch");
    const int oh = h + 2 * pad - k + 1;
    const int ow = w + 2 * pad - k + 1;
    std::vector<double> out(static_cast<std::size_t>(c_out) * oh * ow, 0.0);
    for (int co = 0; co < c_out; ++co) {
        for (int ci = 0; ci < c_in; ++ci) {
            const double* kern =
                kernels.data() + (static_cast<std::size_t>(co) * c_in + ci) * k * k;
            const double* in = input.data() + static_cast<std::size_t>(ci) * h * w;
            double* dst = out.data() + static_cast<std::size_t>(co) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox - pad + kx;
                            if (ix < 0 || ix >= w) continue;
                            acc += kern[ky * k + kx] * in[iy * w + ix];
                        }
                    }
                    dst[oy * ow + ox] += acc;
                }
            }
        }
    }
    return out;
}

/// Non-overlapping block sums with stride = block size; no parameters. Output
/// values are synaptic currents and may exceed 1.
inline std::vector<double> sumpool_forward(int c, int h, int w, int stride,
                                           const std::vector<double>& input) {
    if (stride < 1) throw std::invalid_argument("sumpool_forward: stride must be >= 1");
    if (input.size() != static_cast<std::size_t>(c) * h * w)
        throw std::invalid_argument("sumpool_forward: input shape mismatch");
    const int oh = h / stride, ow = w / stride;
    std::vector<double> out(static_cast<std::size_t>(c) * oh * ow, 0.0);
    for (int ci = 0; ci < c; ++ci) {
        const double* in = input.data() + static_cast<std::size_t>(ci) * h * w;
        double* dst = out.data() + static_cast<std::size_t>(ci) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int dy = 0; dy < stride; ++dy)
                    for (int dx = 0; dx < stride; ++dx)
                        acc += in[(oy * stride + dy) * w + (ox * stride + dx)];
                dst[oy * ow + ox] = acc;
            }
    }
    return out;
}

inline std::vector<double> sumpool_forward_sparse(
    int c, int h, int w, int stride, const std::vector<std::uint32_t>& active) {
    const int oh = h / stride, ow = w / stride;
    std::vector<double> out(static_cast<std::size_t>(c) * oh * ow, 0.0);
    for (std::uint32_t idx : active) {
        const int ci = static_cast<int>(idx) / (h * w);
        const int rem = static_cast<int>(idx) % (h * w);
        const int y = rem / w, x = rem % w;
        const int py = y / stride, px = x / stride;
        if (py >= oh || px >= ow) continue;  // truncated border rows/cols
        out[(static_cast<std::size_t>(ci) * oh + py) * ow + px] += 1.0;
    }
    return out;
}

/// currents = W_in * spikes_in + W_rec * spikes_prev_self.
inline std::vector<double> recurrent_forward(
    const std::vector<double>& w_in, const std::vector<double>& w_rec,
    std::size_t fan_in, std::size_t fan_out,
    const std::vector<double>& spikes_in,
    const std::vector<double>& spikes_prev_self) {
    if (spikes_prev_self.size() != fan_out ||
        w_rec.size() != fan_out * fan_out)
        throw std::invalid_argument("recurrent_forward: recurrent shape mismatch");
    std::vector<double> currents = dense_forward(w_in, fan_in, fan_out, spikes_in);
    for (std::size_t i = 0; i < fan_out; ++i) {
        const double s = spikes_prev_self[i];
        if (s == 0.0) continue;
        const double* row = w_rec.data() + i * fan_out;
        for (std::size_t j = 0; j < fan_out; ++j) currents[j] += s * row[j];
    }
    return currents;
}

// --- model ---------------------------------------------------------------------

struct SnnModel {
    int in_c = 2, in_h = 0, in_w = 0;
    int class_count = 2;
    int timesteps = 0;  // nominal window length the model is configured for
    std::vector<Layer> layers;

    std::size_t total_params() const {
        std::size_t n = 0;
        for (const Layer& l : layers) n += l.param_count();
        return n;
    }

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("model: no layers");
        std::size_t expect = static_cast<std::size_t>(in_c) * in_h * in_w;
        for (const Layer& l : layers) {
            if (l.fan_in != expect)
                throw std::invalid_argument("model: layer fan_in does not compose");
            expect = l.fan_out;
        }
        if (expect != static_cast<std::size_t>(class_count))
            throw std::invalid_argument("model: output size != class count");
    }
};

namespace detail {

inline constexpr std::uint64_t kSaltWeights = 0x57E16875u;
inline constexpr std::uint64_t kSaltRecWeights = 0x57E1687Eu;
inline constexpr std::uint64_t kSaltDelays = 0xDE1A75u;

/// Uniform(-bound, +bound) fill on the f32 grid, chunked so large layers
/// initialize in parallel. Each 4M-element chunk draws from its own derived
/// substream, so the result is independent of the thread schedule.
inline void fill_uniform_f32(std::vector<double>& w, std::uint64_t seed,
                             std::uint64_t salt, std::size_t layer_index,
                             double bound) {
    if (w.empty()) return;
    constexpr std::size_t kChunk = std::size_t(1) << 22;
    const std::size_t chunks = (w.size() + kChunk - 1) / kChunk;
    parallel_for(chunks, resolve_threads(0), [&](std::size_t c) {
        auto gen = rng::substream(seed, salt,
                                  (static_cast<std::uint64_t>(layer_index) << 32) | c);
        const std::size_t end = std::min(w.size(), (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i)
            w[i] = static_cast<double>(
                static_cast<float>(gen.uniform(-bound, bound)));
    });
}

/// Uniform(-g/sqrt(fan_in), +g/sqrt(fan_in)) init, stored on the f32 grid so
/// checkpoints round-trip bit-exactly.
inline void init_layer_weights(Layer& layer, std::uint64_t seed,
                               std::size_t layer_index, double init_gain,
                               std::size_t weight_fan_in) {
    if (layer.weights.empty() && layer.rec_weights.empty()) return;
    const double bound = init_gain / std::sqrt(static_cast<double>(weight_fan_in));
    fill_uniform_f32(layer.weights, seed, kSaltWeights, layer_index, bound);
    fill_uniform_f32(layer.rec_weights, seed, kSaltRecWeights, layer_index, bound);
}

inline void init_layer_delays(Layer& layer, std::uint64_t seed,
                              std::size_t layer_index, int delay_max) {
    layer.delay_max = delay_max;
    if (delay_max <= 0) return;
    auto gen = rng::substream(seed, kSaltDelays, layer_index);
    layer.delays.resize(layer.fan_in * layer.fan_out);
    for (auto& d : layer.delays)
        d = static_cast<std::uint16_t>(
            gen.below(static_cast<std::uint64_t>(delay_max) + 1));
}

}  // namespace detail

inline Layer make_flatten(int c, int h, int w) {
    Layer l;
    l.kind = LayerKind::flatten;
    l.in_c = c;
    l.in_h = h;
    l.in_w = w;
    l.out_c = 1;
    l.out_h = 1;
    l.out_w = static_cast<int>(static_cast<std::size_t>(c) * h * w);
    l.fan_in = l.fan_out = static_cast<std::size_t>(c) * h * w;
    return l;
}

inline Layer make_dense(std::size_t fan_in, std::size_t fan_out,
                        const CubaParams& neuron) {
    Layer l;
    l.kind = LayerKind::dense;
    l.fan_in = fan_in;
    l.fan_out = fan_out;
    l.neuron = neuron;
    l.weights.assign(fan_in * fan_out, 0.0);
    return l;
}

inline Layer make_recurrent(std::size_t fan_in, std::size_t fan_out,
                            const CubaParams& neuron) {
    Layer l = make_dense(fan_in, fan_out, neuron);
    l.kind = LayerKind::recurrent;
    l.rec_weights.assign(fan_out * fan_out, 0.0);
    return l;
}

inline Layer make_conv(int c_in, int h, int w, int c_out, int kernel, int pad,
                       const CubaParams& neuron) {
    Layer l;
    l.kind = LayerKind::conv2d;
    l.in_c = c_in;
    l.in_h = h;
    l.in_w = w;
    l.kernel = kernel;
    l.pad = pad;
    l.out_c = c_out;
    l.out_h = h + 2 * pad - kernel + 1;
    l.out_w = w + 2 * pad - kernel + 1;
    l.fan_in = static_cast<std::size_t>(c_in) * h * w;
    l.fan_out = static_cast<std::size_t>(c_out) * l.out_h * l.out_w;
    l.neuron = neuron;
    l.weights.assign(static_cast<std::size_t>(c_out) * c_in * kernel * kernel, 0.0);
    return l;
}

inline Layer make_sumpool(int c, int h, int w, int stride,
                          const CubaParams& neuron) {
    Layer l;
    l.kind = LayerKind::sumpool;
    l.in_c = c;
    l.in_h = h;
    l.in_w = w;
    l.stride = stride;
    l.out_c = c;
    l.out_h = h / stride;
    l.out_w = w / stride;
    l.fan_in = static_cast<std::size_t>(c) * h * w;
    l.fan_out = static_cast<std::size_t>(c) * l.out_h * l.out_w;
    l.neuron = neuron;
    return l;
}

/// flatten -> dense h1 -> dense h2 -> dense C, all CUBA-LIF.
inline SnnModel build_dense_snn(int height, int width, int hidden1 = 512,
                                int hidden2 = 512,
                                const CubaParams& neuron = CubaParams{},
                                std::uint64_t seed = 0, double init_gain = 1.0,
                                int delay_max = 0) {
    if (height <= 0 || width <= 0)
        throw std::invalid_argument("build_dense_snn: bad geometry");
    neuron.validate();
    SnnModel m;
    m.in_c = 2;
    m.in_h = height;
    m.in_w = width;
    const std::size_t flat = 2ull * height * width;
    m.layers.push_back(make_flatten(2, height, width));
    m.layers.push_back(make_dense(flat, hidden1, neuron));
    m.layers.push_back(make_dense(hidden1, hidden2, neuron));
    m.layers.push_back(make_dense(hidden2, m.class_count, neuron));
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        detail::init_layer_weights(m.layers[l], seed, l, init_gain,
                                   m.layers[l].fan_in);
        if (m.layers[l].kind == LayerKind::dense ||
            m.layers[l].kind == LayerKind::recurrent)
            detail::init_layer_delays(m.layers[l], seed, l, delay_max);
    }
    m.validate();
    return m;
}

/// pool2 -> conv(2->8,k5,p2) -> pool2 -> conv(8->8,k5,p2) -> pool2 ->
/// conv(8->2,k5,p2) -> flatten -> dense 512 -> recurrent 512->256 -> dense C.
/// Spatial sizes derive from the input geometry.
inline SnnModel build_conv_snn(int height, int width,
                               const CubaParams& neuron = CubaParams{},
                               std::uint64_t seed = 0, double init_gain = 1.0) {
    if (height <= 0 || width <= 0)
        throw std::invalid_argument("build_conv_snn: bad geometry");
    neuron.validate();
    SnnModel m;
    m.in_c = 2;
    m.in_h = height;
    m.in_w = width;

    int h = height, w = width;
    m.layers.push_back(make_sumpool(2, h, w, 2, neuron));
    h /= 2;
    w /= 2;
    m.layers.push_back(make_conv(2, h, w, 8, 5, 2, neuron));
    m.layers.push_back(make_sumpool(8, h, w, 2, neuron));
    h /= 2;
    w /= 2;
    m.layers.push_back(make_conv(8, h, w, 8, 5, 2, neuron));
    m.layers.push_back(make_sumpool(8, h, w, 2, neuron));
    h /= 2;
    w /= 2;
    m.layers.push_back(make_conv(8, h, w, 2, 5, 2, neuron));
    m.layers.push_back(make_flatten(2, h, w));
    m.layers.push_back(make_dense(2ull * h * w, 512, neuron));
    m.layers.push_back(make_recurrent(512, 256, neuron));
    m.layers.push_back(make_dense(256, m.class_count, neuron));

    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const Layer& layer = m.layers[l];
        const std::size_t weight_fan_in =
            layer.kind == LayerKind::conv2d
                ? static_cast<std::size_t>(layer.in_c) * layer.kernel * layer.kernel
                : layer.fan_in;
        detail::init_layer_weights(m.layers[l], seed, l, init_gain, weight_fan_in);
    }
    m.validate();
    return m;
}

// --- forward pass ----------------------------------------------------------------

/// Per-timestep voltages and spikes of every stateful layer; consumed by BPTT.
struct LayerTrace {
    std::vector<std::vector<double>> voltage;  // [t][neuron]
    std::vector<std::vector<double>> spikes;
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
};

struct ForwardResult {
    std::vector<std::vector<double>> output_trains;  // [class][t]
    std::vector<double> input_events_per_layer;      // summed over the window
    std::vector<double> output_spikes_per_layer;
    std::size_t timesteps = 0;

    double class_spike_total(int c) const {
        double n = 0.0;
        for (double s : output_trains.at(c)) n += s;
        return n;
    }
};

/// argmax of per-class spike counts; ties resolve to the lower class index.
inline int predict(const std::vector<std::vector<double>>& output_trains) {
    if (output_trains.empty()) throw std::invalid_argument("predict: no trains");
    int best = 0;
    double best_count = -1.0;
    for (std::size_t c = 0; c < output_trains.size(); ++c) {
        double n = 0.0;
        for (double s : output_trains[c]) n += s;
        if (n > best_count) {
            best_count = n;
            best = static_cast<int>(c);
        }
    }
    return best;
}

namespace detail {

struct DelayRing {
    // pending[slot][j]: currents scheduled to arrive at future timesteps
    std::vector<std::vector<double>> pending;
    int size = 0;

    void init(int delay_max, std::size_t fan_out) {
        size = delay_max + 1;
        pending.assign(size, std::vector<double>(fan_out, 0.0));
    }
};

inline void scatter_delayed_sparse(const Layer& layer,
                                   const std::vector<std::uint32_t>& active,
                                   std::size_t t, DelayRing& ring) {
    const std::size_t m = layer.fan_out;
    for (std::uint32_t i : active) {
        const double* row = layer.weights.data() + static_cast<std::size_t>(i) * m;
        const std::uint16_t* drow = layer.delays.data() + static_cast<std::size_t>(i) * m;
        for (std::size_t j = 0; j < m; ++j)
            ring.pending[(t + drow[j]) % ring.size][j] += row[j];
    }
}

inline void scatter_delayed_dense(const Layer& layer,
                                  const std::vector<double>& spikes, std::size_t t,
                                  DelayRing& ring) {
    const std::size_t m = layer.fan_out;
    for (std::size_t i = 0; i < layer.fan_in; ++i) {
        const double s = spikes[i];
        if (s == 0.0) continue;
        const double* row = layer.weights.data() + i * m;
        const std::uint16_t* drow = layer.delays.data() + i * m;
        for (std::size_t j = 0; j < m; ++j)
            ring.pending[(t + drow[j]) % ring.size][j] += s * row[j];
    }
}

}  // namespace detail

/// Runs the timestep loop: per layer, synaptic stage then cuba_step, from
/// freshly zeroed state. Records mean spiking activity per layer; optionally
/// captures the full voltage/spike trace for BPTT.
inline ForwardResult forward(const SnnModel& model,
                             const codec::SpikeTensor& tensor,
                             ForwardTrace* trace = nullptr,
                             EmissionMode mode = EmissionMode::binary) {
    if (tensor.height != model.in_h || tensor.width != model.in_w)
        throw std::invalid_argument("forward: tensor geometry does not match model");
    model.validate();

    const std::size_t T = tensor.num_bins();
    const std::size_t L = model.layers.size();

    std::vector<NeuronState> states;
    states.reserve(L);
    for (const Layer& l : model.layers)
        states.emplace_back(l.has_state() ? l.fan_out : 0);

    std::vector<detail::DelayRing> rings(L);
    for (std::size_t l = 0; l < L; ++l)
        if (model.layers[l].delay_max > 0 && !model.layers[l].delays.empty())
            rings[l].init(model.layers[l].delay_max, model.layers[l].fan_out);

    if (trace) {
        trace->layers.assign(L, LayerTrace{});
        for (std::size_t l = 0; l < L; ++l)
            if (model.layers[l].has_state()) {
                trace->layers[l].voltage.resize(T);
                trace->layers[l].spikes.resize(T);
            }
    }

    ForwardResult result;
    result.timesteps = T;
    result.input_events_per_layer.assign(L, 0.0);
    result.output_spikes_per_layer.assign(L, 0.0);
    result.output_trains.assign(model.class_count, std::vector<double>(T, 0.0));

    std::vector<double> dense_in, spikes;
    std::vector<std::uint32_t> active;

    for (std::size_t t = 0; t < T; ++t) {
        const std::vector<std::uint32_t>* sparse = &tensor.bins[t];
        bool have_dense = false;
        dense_in.clear();

        for (std::size_t l = 0; l < L; ++l) {
            const Layer& layer = model.layers[l];

            double in_events = 0.0;
            if (sparse)
                in_events = static_cast<double>(sparse->size());
            else
                for (double s : dense_in) in_events += s;
            result.input_events_per_layer[l] += in_events;

            if (layer.kind == LayerKind::flatten) {
                // pure reshape; spike values pass through untouched
                continue;
            }

            std::vector<double> current;
            switch (layer.kind) {
                case LayerKind::dense:
                case LayerKind::recurrent: {
                    if (!rings[l].pending.empty()) {
                        if (sparse)
                            detail::scatter_delayed_sparse(layer, *sparse, t, rings[l]);
                        else
                            detail::scatter_delayed_dense(layer, dense_in, t, rings[l]);
                        auto& slot = rings[l].pending[t % rings[l].size];
                        current = slot;
                        std::fill(slot.begin(), slot.end(), 0.0);
                    } else {
                        current = sparse
                                      ? dense_forward_sparse(layer.weights, layer.fan_in,
                                                             layer.fan_out, *sparse)
                                      : dense_forward(layer.weights, layer.fan_in,
                                                      layer.fan_out, dense_in);
                    }
                    if (layer.kind == LayerKind::recurrent) {
                        const auto& prev_self = states[l].prev_spikes;
                        for (std::size_t i = 0; i < layer.fan_out; ++i) {
                            const double s = prev_self[i];
                            if (s == 0.0) continue;
                            const double* row = layer.rec_weights.data() + i * layer.fan_out;
                            for (std::size_t j = 0; j < layer.fan_out; ++j)
                                current[j] += s * row[j];
                        }
                    }
                    break;
                }
                case LayerKind::conv2d: {
                    if (sparse) {
                        dense_in.assign(layer.fan_in, 0.0);
                        for (std::uint32_t idx : *sparse) dense_in[idx] = 1.0;
                        have_dense = true;
                        sparse = nullptr;
                    }
                    current = conv_forward(layer.weights, layer.in_c, layer.in_h,
                                           layer.in_w, layer.out_c, layer.kernel,
                                           layer.pad, dense_in);
                    break;
                }
                case LayerKind::sumpool: {
                    current = sparse ? sumpool_forward_sparse(layer.in_c, layer.in_h,
                                                              layer.in_w, layer.stride,
                                                              *sparse)
                                     : sumpool_forward(layer.in_c, layer.in_h,
                                                       layer.in_w, layer.stride,
                                                       dense_in);
                    break;
                }
                case LayerKind::flatten:
                    break;
            }

            spikes = cuba_step(states[l], current, layer.neuron, mode);

            double out_count = 0.0;
            for (double s : spikes) out_count += s;
            result.output_spikes_per_layer[l] += out_count;

            if (trace && layer.has_state()) {
                trace->layers[l].voltage[t] = states[l].voltage;
                trace->layers[l].spikes[t] = spikes;
            }

            dense_in = std::move(spikes);
            have_dense = true;
            sparse = nullptr;
        }

        (void)have_dense;
        for (int c = 0; c < model.class_count; ++c)
            result.output_trains[c][t] = dense_in[static_cast<std::size_t>(c)];
    }
    return result;
}

}  // namespace synsacc::snn
