#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synsacc/common.hpp"
#include "synsacc/parallel.hpp"
#include "synsacc/snn_core.hpp"

namespace synsacc::eval {

/// Saccade is the positive class.
struct Confusion {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }

    void add(int truth, int predicted) {
        const bool pos = truth == 1;
        const bool pred_pos = predicted == 1;
        if (pos && pred_pos) ++tp;
        else if (!pos && !pred_pos) ++tn;
        else if (!pos && pred_pos) ++fp;
        else ++fn;
    }
};

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_zero_denominator = false;
    bool recall_zero_denominator = false;
    bool f1_zero_denominator = false;
};

/// Accuracy (TP+TN)/(TP+TN+FP+FN), precision TP/(TP+FP), recall TP/(TP+FN),
/// F1 = 2PR/(P+R); any zero denominator yields 0 with the matching flag set.
inline Metrics metrics(const Confusion& c) {
    if (c.total() == 0) throw std::invalid_argument("metrics: empty confusion");
    Metrics m;
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    if (c.tp + c.fp > 0)
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    else
        m.precision_zero_denominator = true;
    if (c.tp + c.fn > 0)
        m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    else
        m.recall_zero_denominator = true;
    if (m.precision + m.recall > 0.0)
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else
        m.f1_zero_denominator = true;
    return m;
}

/// Macro average over both class roles (fixation-positive view swaps the
/// confusion cells); reported alongside the saccade-positive metrics.
inline Metrics macro_metrics(const Confusion& c) {
    const Metrics pos = metrics(c);
    const Metrics neg = metrics(Confusion{c.tn, c.tp, c.fn, c.fp});
    Metrics m;
    m.accuracy = pos.accuracy;
    m.precision = 0.5 * (pos.precision + neg.precision);
    m.recall = 0.5 * (pos.recall + neg.recall);
    m.f1 = 0.5 * (pos.f1 + neg.f1);
    return m;
}

/// Spiking activity accumulated over forward passes.
struct SpikeStats {
    std::vector<double> input_events;   // per layer, summed over all samples
    std::vector<double> output_spikes;  // per layer
    std::uint64_t timesteps = 0;        // summed over all samples
    std::size_t samples = 0;

    void add(const snn::ForwardResult& r) {
        if (input_events.empty()) {
            input_events.assign(r.input_events_per_layer.size(), 0.0);
            output_spikes.assign(r.output_spikes_per_layer.size(), 0.0);
        }
        if (input_events.size() != r.input_events_per_layer.size())
            throw std::invalid_argument("spike stats: layer count mismatch");
        for (std::size_t l = 0; l < input_events.size(); ++l) {
            input_events[l] += r.input_events_per_layer[l];
            output_spikes[l] += r.output_spikes_per_layer[l];
        }
        timesteps += r.timesteps;
        ++samples;
    }

    void merge(const SpikeStats& other) {
        if (other.samples == 0) return;
        if (samples == 0) {
            *this = other;
            return;
        }
        for (std::size_t l = 0; l < input_events.size(); ++l) {
            input_events[l] += other.input_events[l];
            output_spikes[l] += other.output_spikes[l];
        }
        timesteps += other.timesteps;
        samples += other.samples;
    }

    double mean_input_events(std::size_t layer) const {
        return timesteps == 0 ? 0.0 : input_events.at(layer) / static_cast<double>(timesteps);
    }

    double mean_output_spikes(std::size_t layer) const {
        return timesteps == 0 ? 0.0 : output_spikes.at(layer) / static_cast<double>(timesteps);
    }
};

struct OpsRow {
    std::string name;
    snn::LayerKind kind = snn::LayerKind::dense;
    bool extension = false;  // beyond the dense-layer accounting scope
    double mean_events = 0.0;
    double synaptic_ops = 0.0;
    std::uint64_t ann_activations = 0;
    std::uint64_t ann_macs = 0;
};

struct OpsReport {
    std::vector<OpsRow> rows;
    double total_events = 0.0;
    double total_synaptic_ops = 0.0;
    std::uint64_t total_activations = 0;
    std::uint64_t total_macs = 0;
};

namespace detail {

/// Rows are the parameterized layers in model order: dense layers carry the
/// fan_in*fan_out MAC accounting; conv and recurrent rows are marked as an
/// extension of that scope. events_out is only consulted for recurrent
/// self-synapse traffic.
inline OpsReport build_ops_report(const snn::SnnModel& model,
                                  const std::vector<double>& events_in,
                                  const std::vector<double>& events_out) {
    OpsReport report;
    std::size_t row = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const snn::Layer& layer = model.layers[l];
        if (!layer.has_weights()) continue;
        OpsRow r;
        r.name = "layer-" + std::to_string(row);
        r.kind = layer.kind;
        r.mean_events = events_in.at(row);
        switch (layer.kind) {
            case snn::LayerKind::dense:
                r.ann_activations = layer.fan_out;
                r.ann_macs = layer.fan_in * layer.fan_out;
                r.synaptic_ops = r.mean_events * static_cast<double>(layer.fan_out);
                break;
            case snn::LayerKind::recurrent:
                r.extension = true;
                r.ann_activations = layer.fan_out;
                r.ann_macs = layer.fan_in * layer.fan_out +
                             layer.fan_out * layer.fan_out;
                r.synaptic_ops =
                    (r.mean_events + events_out.at(row)) *
                    static_cast<double>(layer.fan_out);
                break;
            case snn::LayerKind::conv2d: {
                r.extension = true;
                const std::uint64_t out_px =
                    static_cast<std::uint64_t>(layer.out_h) * layer.out_w;
                r.ann_activations = static_cast<std::uint64_t>(layer.out_c) * out_px;
                r.ann_macs = static_cast<std::uint64_t>(layer.in_c) * layer.out_c *
                             layer.kernel * layer.kernel * out_px;
                // Each input spike drives at most c_out * k^2 accumulates;
                // boundary clipping is ignored.
                r.synaptic_ops = r.mean_events *
                                 static_cast<double>(layer.out_c) *
                                 layer.kernel * layer.kernel;
                break;
            }
            default:
                break;
        }
        report.rows.push_back(r);
        report.total_events += r.mean_events;
        report.total_synaptic_ops += r.synaptic_ops;
        report.total_activations += r.ann_activations;
        report.total_macs += r.ann_macs;
        ++row;
    }
    return report;
}

}  // namespace detail

/// Synaptic-operation accounting from recorded statistics.
inline OpsReport count_ops(const snn::SnnModel& model, const SpikeStats& stats) {
    if (stats.samples == 0)
        throw std::invalid_argument("count_ops: no recorded spike statistics");
    std::vector<double> events_in, events_out;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (!model.layers[l].has_weights()) continue;
        events_in.push_back(stats.mean_input_events(l));
        events_out.push_back(stats.mean_output_spikes(l));
    }
    return detail::build_ops_report(model, events_in, events_out);
}

/// Accounting from externally supplied mean events per timestep, one value
/// per parameterized layer in model order.
inline OpsReport count_ops(const snn::SnnModel& model,
                           const std::vector<double>& mean_events_per_layer) {
    std::size_t counted = 0;
    for (const snn::Layer& l : model.layers)
        if (l.has_weights()) ++counted;
    if (mean_events_per_layer.size() != counted)
        throw std::invalid_argument(
            "count_ops: expected one mean event value per parameterized layer");
    const std::vector<double> zeros(counted, 0.0);
    return detail::build_ops_report(model, mean_events_per_layer, zeros);
}

struct SampleOutcome {
    int label = 0;
    int predicted = 0;
    std::array<double, 2> rates{};  // mean spikes per timestep per class
};

struct EvalResult {
    Confusion confusion;
    Metrics binary;        // saccade-positive
    Metrics macro;         // macro-averaged over both class roles
    OpsReport ops;
    SpikeStats stats;
    std::vector<SampleOutcome> outcomes;
};

/// Runs predict over every sample, accumulating the confusion matrix and
/// per-layer spike statistics in one pass. Parallel over samples with an
/// index-ordered deterministic reduction.
inline EvalResult evaluate(const snn::SnnModel& model,
                           const std::vector<codec::SpikeTensor>& test_set,
                           int threads = 1) {
    if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
    std::vector<SampleOutcome> outcomes(test_set.size());
    std::vector<snn::ForwardResult> results(test_set.size());

    parallel_for(test_set.size(), resolve_threads(threads), [&](std::size_t i) {
        results[i] = snn::forward(model, test_set[i]);
        SampleOutcome& o = outcomes[i];
        o.label = static_cast<int>(test_set[i].label);
        o.predicted = snn::predict(results[i].output_trains);
        const double T = static_cast<double>(results[i].timesteps);
        for (int c = 0; c < 2; ++c)
            o.rates[static_cast<std::size_t>(c)] =
                T > 0 ? results[i].class_spike_total(c) / T : 0.0;
    });

    EvalResult out;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        out.confusion.add(outcomes[i].label, outcomes[i].predicted);
        out.stats.add(results[i]);
    }
    out.outcomes = std::move(outcomes);
    out.binary = metrics(out.confusion);
    out.macro = macro_metrics(out.confusion);
    out.ops = count_ops(model, out.stats);
    return out;
}

// --- reports -------------------------------------------------------------------

inline nlohmann::json metrics_to_json(const Metrics& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"precision_zero_denominator", m.precision_zero_denominator},
            {"recall_zero_denominator", m.recall_zero_denominator},
            {"f1_zero_denominator", m.f1_zero_denominator}};
}

inline nlohmann::json ops_to_json(const OpsReport& ops) {
    nlohmann::json rows = nlohmann::json::array();
    for (const OpsRow& r : ops.rows) {
        rows.push_back({{"name", r.name},
                        {"kind", snn::to_string(r.kind)},
                        {"extension", r.extension},
                        {"mean_events_per_timestep", r.mean_events},
                        {"synaptic_ops_per_timestep", r.synaptic_ops},
                        {"ann_activations", r.ann_activations},
                        {"ann_macs", r.ann_macs}});
    }
    return {{"rows", rows},
            {"total_events", ops.total_events},
            {"total_synaptic_ops", ops.total_synaptic_ops},
            {"total_activations", ops.total_activations},
            {"total_macs", ops.total_macs}};
}

inline nlohmann::json report_to_json(const EvalResult& r) {
    return {{"confusion",
             {{"tp", r.confusion.tp},
              {"tn", r.confusion.tn},
              {"fp", r.confusion.fp},
              {"fn", r.confusion.fn}}},
            {"metrics", metrics_to_json(r.binary)},
            {"metrics_macro", metrics_to_json(r.macro)},
            {"ops", ops_to_json(r.ops)},
            {"samples", r.confusion.total()}};
}

inline void write_report_json(const std::string& path, const EvalResult& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open report for writing: " + path);
    out << report_to_json(r).dump(2) << '\n';
}

namespace detail {

inline std::string with_thousands(std::uint64_t v) {
    std::string digits = std::to_string(v);
    std::string out;
    int run = 0;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        if (run == 3) {
            out.push_back(',');
            run = 0;
        }
        out.push_back(*it);
        ++run;
    }
    return {out.rbegin(), out.rend()};
}

}  // namespace detail

/// Markdown rendering of the ops table in the usual
/// events / synapses / activations / MACs column layout.
inline void write_report_md(const std::string& path, const EvalResult& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open report for writing: " + path);
    char buf[64];
    out << "# Evaluation report\n\n";
    out << "Samples: " << r.confusion.total() << "  \n";
    std::snprintf(buf, sizeof(buf), "%.4f", r.binary.accuracy);
    out << "Accuracy: " << buf << "  \n";
    std::snprintf(buf, sizeof(buf), "%.4f", r.binary.precision);
    out << "Precision: " << buf << "  \n";
    std::snprintf(buf, sizeof(buf), "%.4f", r.binary.recall);
    out << "Recall: " << buf << "  \n";
    std::snprintf(buf, sizeof(buf), "%.4f", r.binary.f1);
    out << "F1: " << buf << "\n\n";
    out << "## Computational efficiency\n\n";
    out << "| Layer | Events | Synapses | Activations (ACs) | MACs |\n";
    out << "|-------|--------|----------|-------------------|------|\n";
    for (const OpsRow& row : r.ops.rows) {
        std::snprintf(buf, sizeof(buf), "%.2f", row.mean_events);
        out << "| " << row.name << (row.extension ? " *" : "") << " | " << buf;
        std::snprintf(buf, sizeof(buf), "%.2f", row.synaptic_ops);
        out << " | " << buf << " | " << row.ann_activations << " | "
            << detail::with_thousands(row.ann_macs) << " |\n";
    }
    std::snprintf(buf, sizeof(buf), "%.2f", r.ops.total_events);
    out << "| **Total** | **" << buf;
    std::snprintf(buf, sizeof(buf), "%.2f", r.ops.total_synaptic_ops);
    out << "** | **" << buf << "** | **" << r.ops.total_activations << "** | **"
        << detail::with_thousands(r.ops.total_macs) << "** |\n";
    bool any_ext = false;
    for (const OpsRow& row : r.ops.rows) any_ext = any_ext || row.extension;
    if (any_ext)
        out << "\n`*` conv/recurrent rows extend the dense-layer accounting "
               "scope.\n";
}

}  // namespace synsacc::eval
