#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "synsacc/common.hpp"
#include "synsacc/parallel.hpp"
#include "synsacc/rng.hpp"
#include "synsacc/snn_core.hpp"

namespace synsacc::train {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 8;
    double learning_rate = 0.01;
    double weight_decay = 0.0001;
    double r_true = 0.5;    // target firing rate per timestep, true class
    double r_false = 0.02;  // target rate, other classes
    std::uint64_t seed = 0;
    bool weight_norm = false;
    bool detach_reset = false;
    int threads = 1;

    void validate() const {
        if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
        if (batch_size < 1)
            throw std::invalid_argument("train: batch_size must be >= 1");
        if (!(learning_rate >= 0.0))
            throw std::invalid_argument("train: learning_rate must be >= 0");
        if (!(weight_decay >= 0.0))
            throw std::invalid_argument("train: weight_decay must be >= 0");
        if (!(0.0 <= r_false && r_false < r_true && r_true <= 1.0))
            throw std::invalid_argument("train: need 0 <= r_false < r_true <= 1");
    }
};

/// SpikeRate loss: squared error between observed per-timestep firing rates
/// and the one-hot targets (r_true, r_false).
///   L = 1/2 sum_c ( (1/T) sum_t s_c[t] - (r_true*y_c + r_false*(1-y_c)) )^2
inline double spike_rate_loss(const std::vector<std::vector<double>>& output_trains,
                              int label, double r_true, double r_false) {
    if (output_trains.size() < 2 || output_trains[0].empty())
        throw std::invalid_argument("spike_rate_loss: need C >= 2, T >= 1");
    double loss = 0.0;
    const double T = static_cast<double>(output_trains[0].size());
    for (std::size_t c = 0; c < output_trains.size(); ++c) {
        double rate = 0.0;
        for (double s : output_trains[c]) rate += s;
        rate /= T;
        const double target = static_cast<int>(c) == label ? r_true : r_false;
        loss += (rate - target) * (rate - target);
    }
    return 0.5 * loss;
}

/// Triangular surrogate for dH/dy: slope * max(0, 1 - |y - theta| / width).
inline double surrogate_grad(double y, double theta, double slope, double width) {
    if (!(width > 0.0)) throw std::invalid_argument("surrogate_grad: width must be > 0");
    const double u = 1.0 - std::abs(y - theta) / width;
    return u > 0.0 ? slope * u : 0.0;
}

/// Per-layer weight gradients, aligned with model.layers.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> rec_weights;

    explicit Gradients(const snn::SnnModel& model) {
        weights.reserve(model.layers.size());
        rec_weights.reserve(model.layers.size());
        for (const snn::Layer& l : model.layers) {
            weights.emplace_back(l.weights.size(), 0.0);
            rec_weights.emplace_back(l.rec_weights.size(), 0.0);
        }
    }

    void zero() {
        for (auto& g : weights) std::fill(g.begin(), g.end(), 0.0);
        for (auto& g : rec_weights) std::fill(g.begin(), g.end(), 0.0);
    }

    void add_scaled(const Gradients& other, double scale) {
        for (std::size_t l = 0; l < weights.size(); ++l) {
            for (std::size_t i = 0; i < weights[l].size(); ++i)
                weights[l][i] += scale * other.weights[l][i];
            for (std::size_t i = 0; i < rec_weights[l].size(); ++i)
                rec_weights[l][i] += scale * other.rec_weights[l][i];
        }
    }
};

namespace detail {

/// Backprop through one synaptic stage: accumulates the weight gradient and
/// (optionally) the gradient w.r.t. the stage input.
inline void synop_backward(const snn::Layer& layer,
                           const std::vector<double>* dense_in,
                           const std::vector<std::uint32_t>* sparse_in,
                           const std::vector<double>& delta,
                           std::vector<double>& w_grad,
                           std::vector<double>* ds_in) {
    switch (layer.kind) {
        case snn::LayerKind::dense:
        case snn::LayerKind::recurrent: {
            const std::size_t m = layer.fan_out;
            if (sparse_in) {
                for (std::uint32_t i : *sparse_in) {
                    double* grow = w_grad.data() + static_cast<std::size_t>(i) * m;
                    for (std::size_t j = 0; j < m; ++j) grow[j] += delta[j];
                }
            } else {
                for (std::size_t i = 0; i < layer.fan_in; ++i) {
                    const double s = (*dense_in)[i];
                    if (s != 0.0) {
                        double* grow = w_grad.data() + i * m;
                        for (std::size_t j = 0; j < m; ++j) grow[j] += s * delta[j];
                    }
                }
            }
            if (ds_in) {
                for (std::size_t i = 0; i < layer.fan_in; ++i) {
                    const double* row = layer.weights.data() + i * m;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += row[j] * delta[j];
                    (*ds_in)[i] += acc;
                }
            }
            break;
        }
        case snn::LayerKind::conv2d: {
            const int k = layer.kernel, pad = layer.pad;
            const int h = layer.in_h, w = layer.in_w;
            const int oh = layer.out_h, ow = layer.out_w;
            for (int co = 0; co < layer.out_c; ++co) {
                const double* dptr =
                    delta.data() + static_cast<std::size_t>(co) * oh * ow;
                for (int ci = 0; ci < layer.in_c; ++ci) {
                    const std::size_t koff =
                        (static_cast<std::size_t>(co) * layer.in_c + ci) *
                        static_cast<std::size_t>(k) * k;
                    const double* in =
                        dense_in->data() + static_cast<std::size_t>(ci) * h * w;
                    double* dsp =
                        ds_in ? ds_in->data() + static_cast<std::size_t>(ci) * h * w
                              : nullptr;
                    for (int oy = 0; oy < oh; ++oy) {
                        for (int ox = 0; ox < ow; ++ox) {
                            const double d = dptr[oy * ow + ox];
                            if (d == 0.0) continue;
                            for (int ky = 0; ky < k; ++ky) {
                                const int iy = oy - pad + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < k; ++kx) {
                                    const int ix = ox - pad + kx;
                                    if (ix < 0 || ix >= w) continue;
                                    w_grad[koff + static_cast<std::size_t>(ky) * k + kx] +=
                                        in[iy * w + ix] * d;
                                    if (dsp)
                                        dsp[iy * w + ix] +=
                                            layer.weights[koff +
                                                          static_cast<std::size_t>(ky) * k +
                                                          kx] *
                                            d;
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case snn::LayerKind::sumpool: {
            if (!ds_in) break;
            const int s = layer.stride;
            for (int ci = 0; ci < layer.in_c; ++ci) {
                const double* dptr = delta.data() +
                                     static_cast<std::size_t>(ci) * layer.out_h *
                                         layer.out_w;
                double* dsp = ds_in->data() +
                              static_cast<std::size_t>(ci) * layer.in_h * layer.in_w;
                for (int oy = 0; oy < layer.out_h; ++oy)
                    for (int ox = 0; ox < layer.out_w; ++ox) {
                        const double d = dptr[oy * layer.out_w + ox];
                        if (d == 0.0) continue;
                        for (int dy = 0; dy < s; ++dy)
                            for (int dx = 0; dx < s; ++dx)
                                dsp[(oy * s + dy) * layer.in_w + (ox * s + dx)] += d;
                    }
            }
            break;
        }
        case snn::LayerKind::flatten:
            break;
    }
}

}  // namespace detail

/// Full-unroll BPTT gradient of the SpikeRate loss for one sample,
/// accumulated into `grads` (caller zeroes it). Gradients flow through the
/// synaptic weights, the alpha/beta recurrences, recurrent self-connections
/// and (unless detach_reset) the -theta*s[t-1] reset path, all via the
/// surrogate derivative. In relaxed mode the surrogate is the exact
/// derivative of the relaxed emission, making the gradient exact.
inline void backward_into(const snn::SnnModel& model,
                          const codec::SpikeTensor& tensor,
                          const snn::ForwardTrace& trace,
                          const snn::ForwardResult& result, int label,
                          const TrainConfig& cfg, snn::EmissionMode mode,
                          Gradients& grads) {
    const std::size_t T = result.timesteps;
    const std::size_t L = model.layers.size();

    // Stateful layers in order; flatten stages are identity connectors.
    std::vector<std::size_t> stateful;
    for (std::size_t l = 0; l < L; ++l)
        if (model.layers[l].has_state()) stateful.push_back(l);
    if (stateful.empty() || T == 0) return;
    const std::size_t last = stateful.back();

    // dL/ds for the output layer: (rate_c - target_c) / T, constant in t.
    std::vector<double> loss_ds(model.layers[last].fan_out, 0.0);
    for (std::size_t c = 0; c < loss_ds.size(); ++c) {
        double rate = 0.0;
        for (double s : result.output_trains[c]) rate += s;
        rate /= static_cast<double>(T);
        const double target =
            static_cast<int>(c) == label ? cfg.r_true : cfg.r_false;
        loss_ds[c] = (rate - target) / static_cast<double>(T);
    }

    std::vector<std::vector<double>> gy_next(L), gi_next(L), delta_next(L);
    for (std::size_t l : stateful) {
        gy_next[l].assign(model.layers[l].fan_out, 0.0);
        gi_next[l].assign(model.layers[l].fan_out, 0.0);
        delta_next[l].assign(model.layers[l].fan_out, 0.0);
    }

    // Full delta history for layers with synaptic delays.
    std::vector<std::vector<std::vector<double>>> delta_hist(L);
    for (std::size_t l : stateful)
        if (!model.layers[l].delays.empty())
            delta_hist[l].assign(T, std::vector<double>());

    // ds_to[si]: gradient w.r.t. the spikes of stateful layer si, produced by
    // the downstream layer at the same timestep.
    std::vector<std::vector<double>> ds_to(stateful.size());

    for (std::size_t tt = T; tt-- > 0;) {
        for (std::size_t si = stateful.size(); si-- > 0;) {
            const std::size_t l = stateful[si];
            const snn::Layer& layer = model.layers[l];
            const snn::CubaParams& p = layer.neuron;
            const std::size_t m = layer.fan_out;

            std::vector<double> gs(m, 0.0);
            if (l == last)
                for (std::size_t j = 0; j < m; ++j) gs[j] += loss_ds[j];
            if (!ds_to[si].empty())
                for (std::size_t j = 0; j < m; ++j) gs[j] += ds_to[si][j];
            if (!cfg.detach_reset)
                for (std::size_t j = 0; j < m; ++j)
                    gs[j] -= p.threshold * gy_next[l][j];
            if (layer.kind == snn::LayerKind::recurrent) {
                // a[t+1] += W_rec * s_self[t]
                for (std::size_t i = 0; i < m; ++i) {
                    const double* row = layer.rec_weights.data() + i * m;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j)
                        acc += row[j] * delta_next[l][j];
                    gs[i] += acc;
                }
                // dW_rec[i][j] += s_self[t-1][i] * delta[t][j] is handled when
                // the t-1 spikes are known, i.e. below using trace at t-1.
            }

            const std::vector<double>& voltage = trace.layers[l].voltage[tt];
            std::vector<double> gy(m), delta(m);
            for (std::size_t j = 0; j < m; ++j) {
                double g = surrogate_grad(voltage[j], p.threshold,
                                          p.surrogate_slope, p.surrogate_width);
                if (mode == snn::EmissionMode::relaxed) g /= p.surrogate_slope;
                gy[j] = gs[j] * g + p.voltage_retention * gy_next[l][j];
                delta[j] = (1.0 - p.voltage_retention) * gy[j] +
                           p.current_retention * gi_next[l][j];
            }

            // Input of this stage at time tt.
            const bool from_tensor = si == 0;
            const std::vector<double>* dense_in =
                from_tensor ? nullptr : &trace.layers[stateful[si - 1]].spikes[tt];
            const std::vector<std::uint32_t>* sparse_in =
                from_tensor ? &tensor.bins[tt] : nullptr;

            if (!from_tensor) {
                ds_to[si - 1].assign(model.layers[stateful[si - 1]].fan_out, 0.0);
            }
            std::vector<double>* ds_in = from_tensor ? nullptr : &ds_to[si - 1];

            if (!layer.delays.empty()) {
                delta_hist[l][tt] = delta;
                // Forward scattered w[i][j]*s_in[t][i] into a[t + d[i][j]],
                // so the weight gradient reads the stored future deltas.
                auto wire_weight = [&](std::size_t i, double s) {
                    const std::uint16_t* drow = layer.delays.data() + i * m;
                    double* grow = grads.weights[l].data() + i * m;
                    for (std::size_t j = 0; j < m; ++j) {
                        const std::size_t ta = tt + drow[j];
                        if (ta < T) grow[j] += s * delta_hist[l][ta][j];
                    }
                };
                if (sparse_in) {
                    for (std::uint32_t i : *sparse_in) wire_weight(i, 1.0);
                } else {
                    for (std::size_t i = 0; i < layer.fan_in; ++i)
                        if ((*dense_in)[i] != 0.0) wire_weight(i, (*dense_in)[i]);
                }
                if (ds_in) {
                    // Input-spike gradient flows through every synapse, active
                    // or not.
                    for (std::size_t i = 0; i < layer.fan_in; ++i) {
                        const double* wrow = layer.weights.data() + i * m;
                        const std::uint16_t* drow = layer.delays.data() + i * m;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < m; ++j) {
                            const std::size_t ta = tt + drow[j];
                            if (ta < T) acc += wrow[j] * delta_hist[l][ta][j];
                        }
                        (*ds_in)[i] += acc;
                    }
                }
            } else {
                detail::synop_backward(layer, dense_in, sparse_in, delta,
                                       grads.weights[l], ds_in);
            }

            if (layer.kind == snn::LayerKind::recurrent && tt > 0) {
                const std::vector<double>& self_prev = trace.layers[l].spikes[tt - 1];
                for (std::size_t i = 0; i < m; ++i) {
                    const double s = self_prev[i];
                    if (s == 0.0) continue;
                    double* grow = grads.rec_weights[l].data() + i * m;
                    for (std::size_t j = 0; j < m; ++j) grow[j] += s * delta[j];
                }
            }

            gy_next[l] = std::move(gy);
            gi_next[l] = std::move(delta);  // gi[t] == delta_a[t]
            delta_next[l] = gi_next[l];
        }
    }
}

inline Gradients backward(const snn::SnnModel& model,
                          const codec::SpikeTensor& tensor,
                          const snn::ForwardTrace& trace,
                          const snn::ForwardResult& result, int label,
                          const TrainConfig& cfg,
                          snn::EmissionMode mode = snn::EmissionMode::binary) {
    Gradients grads(model);
    backward_into(model, tensor, trace, result, label, cfg, mode, grads);
    return grads;
}

// --- optimizer -------------------------------------------------------------------

/// Adam with decoupled weight decay; weights are re-quantized to the float32
/// grid after every step so checkpoints round-trip bit-exactly.
class AdamW {
public:
    AdamW(const snn::SnnModel& model, double learning_rate, double weight_decay,
          double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : lr_(learning_rate),
          wd_(weight_decay),
          beta1_(beta1),
          beta2_(beta2),
          eps_(epsilon),
          m_(model),
          v_(model) {}

    void step(snn::SnnModel& model, const Gradients& grads) {
        ++steps_;
        const double bc1 = 1.0 - std::pow(beta1_, steps_);
        const double bc2 = 1.0 - std::pow(beta2_, steps_);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            update(model.layers[l].weights, grads.weights[l], m_.weights[l],
                   v_.weights[l], bc1, bc2);
            update(model.layers[l].rec_weights, grads.rec_weights[l],
                   m_.rec_weights[l], v_.rec_weights[l], bc1, bc2);
        }
    }

    std::uint64_t steps() const { return steps_; }

private:
    void update(std::vector<double>& w, const std::vector<double>& g,
                std::vector<double>& m, std::vector<double>& v, double bc1,
                double bc2) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            const double step = mhat / (std::sqrt(vhat) + eps_) + wd_ * w[i];
            w[i] = static_cast<double>(
                static_cast<float>(w[i] - lr_ * step));
        }
    }

    double lr_, wd_, beta1_, beta2_, eps_;
    std::uint64_t steps_ = 0;
    Gradients m_, v_;
};

/// Per-neuron L2 renormalization of incoming feedforward weight vectors
/// (per output channel for conv layers). Off by default.
inline void normalize_weights(snn::SnnModel& model) {
    for (snn::Layer& layer : model.layers) {
        if (!layer.has_weights()) continue;
        if (layer.kind == snn::LayerKind::conv2d) {
            const std::size_t per_out =
                static_cast<std::size_t>(layer.in_c) * layer.kernel * layer.kernel;
            for (int co = 0; co < layer.out_c; ++co) {
                double* w = layer.weights.data() + co * per_out;
                double norm = 0.0;
                for (std::size_t i = 0; i < per_out; ++i) norm += w[i] * w[i];
                norm = std::sqrt(norm);
                if (norm > 0.0)
                    for (std::size_t i = 0; i < per_out; ++i)
                        w[i] = static_cast<double>(static_cast<float>(w[i] / norm));
            }
        } else {
            const std::size_t m = layer.fan_out;
            for (std::size_t j = 0; j < m; ++j) {
                double norm = 0.0;
                for (std::size_t i = 0; i < layer.fan_in; ++i) {
                    const double w = layer.weights[i * m + j];
                    norm += w * w;
                }
                norm = std::sqrt(norm);
                if (norm > 0.0)
                    for (std::size_t i = 0; i < layer.fan_in; ++i)
                        layer.weights[i * m + j] = static_cast<double>(
                            static_cast<float>(layer.weights[i * m + j] / norm));
            }
        }
    }
}

// --- training loop ----------------------------------------------------------------

struct TrainHistory {
    std::vector<double> loss;
    std::vector<double> train_accuracy;
    std::vector<double> eval_accuracy;
    std::vector<double> seconds;  // wall clock per epoch; not reproducible
};

/// Called after every epoch; epoch is 1-based.
using EpochCallback =
    std::function<void(int epoch, const snn::SnnModel& model,
                       const TrainHistory& history)>;

namespace detail {

inline constexpr std::uint64_t kSaltShuffle = 0x5F0FF1E5u;
inline constexpr std::uint64_t kSaltSubset = 0x5AB5E7u;

inline void shuffle_indices(std::vector<std::size_t>& idx, std::uint64_t seed,
                            std::uint64_t epoch) {
    auto gen = rng::substream(seed, kSaltShuffle, epoch);
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(gen.below(i));
        std::swap(idx[i - 1], idx[j]);
    }
}

inline double eval_accuracy(const snn::SnnModel& model,
                            const std::vector<codec::SpikeTensor>& set,
                            int threads) {
    if (set.empty()) return 0.0;
    std::vector<int> correct(set.size(), 0);
    parallel_for(set.size(), resolve_threads(threads), [&](std::size_t i) {
        const auto result = snn::forward(model, set[i]);
        correct[i] =
            snn::predict(result.output_trains) == static_cast<int>(set[i].label);
    });
    const auto n = std::accumulate(correct.begin(), correct.end(), 0);
    return static_cast<double>(n) / static_cast<double>(set.size());
}

}  // namespace detail

/// Surrogate-gradient BPTT over the full unroll with AdamW. Deterministic for
/// a fixed seed: the shuffle depends only on (seed, epoch) and per-sample
/// gradients are reduced in sample-index order regardless of thread count.
inline TrainHistory bptt_train(snn::SnnModel& model,
                               const std::vector<codec::SpikeTensor>& train_set,
                               const std::vector<codec::SpikeTensor>& eval_set,
                               const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("bptt_train: empty train set");
    model.validate();

    AdamW optimizer(model, cfg.learning_rate, cfg.weight_decay);
    TrainHistory history;

    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    const auto batch =
        static_cast<std::size_t>(std::min<std::size_t>(cfg.batch_size, n));
    std::vector<Gradients> sample_grads;
    sample_grads.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) sample_grads.emplace_back(model);
    std::vector<double> sample_loss(batch, 0.0);
    std::vector<int> sample_correct(batch, 0);
    Gradients batch_grads(model);

    const unsigned workers = resolve_threads(cfg.threads);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        detail::shuffle_indices(order, cfg.seed, static_cast<std::uint64_t>(epoch));

        double epoch_loss = 0.0;
        std::size_t correct = 0;

        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t bsz = std::min(batch, n - start);
            parallel_for(bsz, workers, [&](std::size_t b) {
                const codec::SpikeTensor& sample = train_set[order[start + b]];
                snn::ForwardTrace trace;
                const auto result = snn::forward(model, sample, &trace);
                const int label = static_cast<int>(sample.label);
                sample_loss[b] =
                    spike_rate_loss(result.output_trains, label, cfg.r_true,
                                    cfg.r_false);
                sample_correct[b] = snn::predict(result.output_trains) == label;
                sample_grads[b].zero();
                backward_into(model, sample, trace, result, label, cfg,
                              snn::EmissionMode::binary, sample_grads[b]);
            });

            batch_grads.zero();
            const double scale = 1.0 / static_cast<double>(bsz);
            for (std::size_t b = 0; b < bsz; ++b) {
                batch_grads.add_scaled(sample_grads[b], scale);
                epoch_loss += sample_loss[b];
                correct += static_cast<std::size_t>(sample_correct[b]);
            }

            optimizer.step(model, batch_grads);
            if (cfg.weight_norm) normalize_weights(model);
        }

        epoch_loss /= static_cast<double>(n);
        if (!std::isfinite(epoch_loss))
            throw DivergenceError("training diverged at epoch " +
                                  std::to_string(epoch) + ": loss is not finite");
        for (const snn::Layer& layer : model.layers) {
            for (double w : layer.weights)
                if (!std::isfinite(w))
                    throw DivergenceError("training diverged at epoch " +
                                          std::to_string(epoch) +
                                          ": weights are not finite");
            for (double w : layer.rec_weights)
                if (!std::isfinite(w))
                    throw DivergenceError("training diverged at epoch " +
                                          std::to_string(epoch) +
                                          ": weights are not finite");
        }

        history.loss.push_back(epoch_loss);
        history.train_accuracy.push_back(static_cast<double>(correct) /
                                         static_cast<double>(n));
        history.eval_accuracy.push_back(
            detail::eval_accuracy(model, eval_set, cfg.threads));
        history.seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count());
        if (on_epoch) on_epoch(epoch, model, history);
    }
    return history;
}

/// Stratified seeded subsample: indices into `set`, in original order, with
/// per-class counts chosen by largest remainder so the total is
/// ceil(fraction*N) and the class ratio stays within one sample of the full
/// set's ratio.
inline std::vector<std::size_t> stratified_subsample(
    const std::vector<codec::SpikeTensor>& set, double fraction,
    std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("stratified_subsample: fraction must be in (0, 1]");
    std::vector<std::size_t> per_class[2];
    for (std::size_t i = 0; i < set.size(); ++i)
        per_class[static_cast<int>(set[i].label)].push_back(i);

    const auto total_want = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(set.size())));
    if (total_want == 0)
        throw std::invalid_argument("stratified_subsample: fraction yields zero samples");

    // Largest-remainder split of total_want across the two classes.
    double exact[2], floors[2];
    for (int c = 0; c < 2; ++c) {
        exact[c] = fraction * static_cast<double>(per_class[c].size());
        floors[c] = std::floor(exact[c]);
    }
    std::size_t want[2] = {static_cast<std::size_t>(floors[0]),
                           static_cast<std::size_t>(floors[1])};
    while (want[0] + want[1] < total_want) {
        const int c = (exact[0] - floors[0]) >= (exact[1] - floors[1]) ? 0 : 1;
        if (want[c] < per_class[c].size()) {
            ++want[c];
            floors[c] += 1.0;
        } else {
            const int o = 1 - c;
            if (want[o] >= per_class[o].size()) break;
            ++want[o];
            floors[o] += 1.0;
        }
    }

    std::vector<std::size_t> chosen;
    for (int c = 0; c < 2; ++c) {
        auto idx = per_class[c];
        auto gen = rng::substream(seed, detail::kSaltSubset,
                                  static_cast<std::uint64_t>(c));
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[static_cast<std::size_t>(gen.below(i))]);
        idx.resize(std::min(want[c], idx.size()));
        chosen.insert(chosen.end(), idx.begin(), idx.end());
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

/// Continues training a pretrained model on a stratified fraction of the
/// real train split; evaluation stays on the fixed held-out split.
inline TrainHistory finetune(snn::SnnModel& model,
                             const std::vector<codec::SpikeTensor>& real_train,
                             const std::vector<codec::SpikeTensor>& real_eval,
                             double fraction, const TrainConfig& cfg,
                             const EpochCallback& on_epoch = {},
                             std::vector<std::size_t>* used_indices = nullptr) {
    const auto indices = stratified_subsample(real_train, fraction, cfg.seed);
    std::vector<codec::SpikeTensor> subset;
    subset.reserve(indices.size());
    for (std::size_t i : indices) subset.push_back(real_train[i]);
    if (used_indices) *used_indices = indices;
    return bptt_train(model, subset, real_eval, cfg, on_epoch);
}

}  // namespace synsacc::train
