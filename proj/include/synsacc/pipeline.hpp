#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "synsacc/checkpoint.hpp"
#include "synsacc/config.hpp"
#include "synsacc/eval.hpp"
#include "synsacc/event_io.hpp"
#include "synsacc/manifest.hpp"
#include "synsacc/train.hpp"

namespace synsacc::pipeline {

namespace fs = std::filesystem;

namespace detail {

inline constexpr std::uint64_t kSaltSchedule = 0x5C4EDu;
inline constexpr std::uint64_t kSaltSim = 0x51Au;
inline constexpr std::uint64_t kSaltBalance = 0xBA1Au;
inline constexpr std::uint64_t kSaltSplit = 0x592171u;

inline std::string seq_name(const char* prefix, int index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d.%s", prefix, index, ext);
    return buf;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace detail

struct WindowRef {
    std::string file;
    codec::LabelClass label;
    std::uint64_t t_start_us = 0;
    std::uint64_t t_end_us = 0;
};

/// Non-overlapping windows tiled inside each label segment (metadata only).
inline std::vector<WindowRef> collect_windows(const kinematics::LabelTrack& labels,
                                              double window_ms,
                                              const std::string& file,
                                              std::uint64_t stream_duration_us) {
    const auto window_us =
        static_cast<std::uint64_t>(std::llround(window_ms * 1000.0));
    std::vector<WindowRef> out;
    for (const auto& seg : labels.segments) {
        const std::uint64_t n = (seg.end_us - seg.start_us) / window_us;
        for (std::uint64_t j = 0; j < n; ++j) {
            const std::uint64_t t0 = seg.start_us + j * window_us;
            if (t0 + window_us > stream_duration_us) break;
            out.push_back(WindowRef{file, seg.cls, t0, t0 + window_us});
        }
    }
    return out;
}

/// Subsamples the majority class down to the minority count (seeded), then
/// restores canonical (file, t_start) order.
inline void balance_windows(std::vector<WindowRef>& windows, std::uint64_t seed) {
    std::vector<std::size_t> per_class[2];
    for (std::size_t i = 0; i < windows.size(); ++i)
        per_class[static_cast<int>(windows[i].label)].push_back(i);
    const int majority = per_class[0].size() >= per_class[1].size() ? 0 : 1;
    const std::size_t keep = per_class[1 - majority].size();
    if (per_class[majority].size() <= keep) return;

    auto& idx = per_class[majority];
    auto gen = rng::substream(seed, detail::kSaltBalance, 0);
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(gen.below(i))]);
    idx.resize(keep);

    std::vector<std::size_t> selected = per_class[1 - majority];
    selected.insert(selected.end(), idx.begin(), idx.end());
    std::sort(selected.begin(), selected.end());
    std::vector<WindowRef> kept;
    kept.reserve(selected.size());
    for (std::size_t i : selected) kept.push_back(windows[i]);
    windows = std::move(kept);
}

/// Stratified train/test assignment; at least one sample lands in each split
/// whenever a class has two or more windows.
inline codec::DatasetManifest assign_splits(std::vector<WindowRef> windows,
                                            const cfg::RunConfig& config) {
    codec::DatasetManifest m;
    m.seed = config.seed;
    m.window_ms = config.codec.window_ms;
    m.bin_ms = config.codec.bin_ms;
    m.downscale = config.codec.downscale;

    std::vector<std::size_t> per_class[2];
    for (std::size_t i = 0; i < windows.size(); ++i)
        per_class[static_cast<int>(windows[i].label)].push_back(i);

    std::vector<codec::Split> split(windows.size(), codec::Split::train);
    for (int c = 0; c < 2; ++c) {
        auto idx = per_class[c];
        auto gen = rng::substream(config.seed, detail::kSaltSplit,
                                  static_cast<std::uint64_t>(c));
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[static_cast<std::size_t>(gen.below(i))]);
        auto train_n = static_cast<std::size_t>(
            std::llround(config.codec.train_fraction * static_cast<double>(idx.size())));
        if (idx.size() >= 2) {
            train_n = std::max<std::size_t>(1, std::min(train_n, idx.size() - 1));
        } else {
            train_n = idx.size();
        }
        for (std::size_t i = train_n; i < idx.size(); ++i)
            split[idx[i]] = codec::Split::test;
    }

    for (std::size_t i = 0; i < windows.size(); ++i) {
        codec::ManifestEntry e;
        e.file = windows[i].file;
        e.label = windows[i].label;
        e.t_start_us = windows[i].t_start_us;
        e.t_end_us = windows[i].t_end_us;
        e.split = split[i];
        m.entries.push_back(std::move(e));
    }
    return m;
}

struct GenResult {
    std::string manifest_path;
    std::size_t fixation_windows = 0;
    std::size_t saccade_windows = 0;
    std::size_t train_windows = 0;
    std::size_t test_windows = 0;
    std::uint64_t total_events = 0;
};

/// Full synthesis pipeline: labeled schedule -> streamed frames -> events
/// (+noise) -> EVB1 files + label sidecars + balanced split manifest.
inline GenResult cmd_gen(const cfg::RunConfig& config, const std::string& out_dir,
                         bool emit_csv = false) {
    config.validate();
    fs::create_directories(out_dir);

    std::vector<WindowRef> windows;
    GenResult result;

    for (int s = 0; s < config.kinematics.sequences; ++s) {
        const auto schedule_seed =
            rng::derive_seed(config.seed, detail::kSaltSchedule,
                             static_cast<std::uint64_t>(s));
        auto [samples, labels] = kinematics::generate_labeled_schedule(
            config.kinematics.duration_ms, config.kinematics.max_angle_deg,
            schedule_seed, config.kinematics.fix_range_ms,
            config.kinematics.sac_range_ms);

        eventsim::SimConfig sim = config.sim;
        sim.seed = rng::derive_seed(config.seed, detail::kSaltSim,
                                    static_cast<std::uint64_t>(s));

        // Stream frames through the converter; frame timing matches
        // render_sequence (one frame per 1/fps tick across the sample span).
        eventsim::FrameToEventConverter converter(config.render.width,
                                                  config.render.height,
                                                  config.render.fps, sim);
        const std::uint64_t t0 = samples.front().t_us;
        const std::uint64_t span_us = samples.back().t_us - t0;
        const auto frame_count = std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   std::llround(static_cast<double>(span_us) * 1e-6 *
                                config.render.fps)));
        std::string frames_dir;
        if (config.render.dump_frames) {
            char dirname[32];
            std::snprintf(dirname, sizeof(dirname), "frames_%03d", s);
            frames_dir = (fs::path(out_dir) / dirname).string();
            fs::create_directories(frames_dir);
        }
        render::detail::GazeInterpolator gaze{samples};
        for (std::size_t f = 0; f < frame_count; ++f) {
            const auto t =
                t0 + static_cast<std::uint64_t>(std::llround(
                         static_cast<double>(f) * 1e6 / config.render.fps));
            double h = 0.0, v = 0.0;
            gaze.at(t, h, v);
            const render::Frame frame = render::render_frame(
                h, v, config.render.appearance, config.render.width,
                config.render.height);
            if (config.render.dump_frames) {
                char name[32];
                std::snprintf(name, sizeof(name), "frame_%06zu.pgm", f);
                render::write_pgm(frames_dir + "/" + name, frame,
                                  config.render.width, config.render.height);
            }
            converter.push(frame);
        }

        eventsim::EventStream stream = converter.finish();
        stream = eventsim::inject_noise(stream, sim);
        result.total_events += stream.events.size();

        const std::string events_name = detail::seq_name("events", s, "evb1");
        eventsim::write_evb1((fs::path(out_dir) / events_name).string(), stream);
        if (emit_csv)
            eventsim::write_events_csv(
                (fs::path(out_dir) / detail::seq_name("events", s, "csv")).string(),
                stream);
        kinematics::write_labels(
            (fs::path(out_dir) / detail::seq_name("labels", s, "json")).string(),
            labels);

        auto seq_windows = collect_windows(labels, config.codec.window_ms,
                                           events_name, stream.duration_us);
        windows.insert(windows.end(), seq_windows.begin(), seq_windows.end());
    }

    if (config.codec.balance) balance_windows(windows, config.seed);
    codec::DatasetManifest manifest = assign_splits(std::move(windows), config);

    result.manifest_path = (fs::path(out_dir) / "manifest.json").string();
    codec::write_manifest(result.manifest_path, manifest);
    cfg::write_config((fs::path(out_dir) / "config.json").string(), config, "gen");

    result.fixation_windows = manifest.count(codec::LabelClass::fixation);
    result.saccade_windows = manifest.count(codec::LabelClass::saccade);
    result.train_windows = manifest.count(codec::Split::train);
    result.test_windows = manifest.count(codec::Split::test);
    return result;
}

/// Standalone frames -> events conversion over a directory of P5 PGM files
/// (lexicographic order) at the configured render fps.
inline eventsim::EventStream cmd_simulate(const cfg::RunConfig& config,
                                          const std::string& frames_dir,
                                          const std::string& out_file,
                                          bool emit_csv = false) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(frames_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            files.push_back(entry.path().string());
    if (files.empty()) throw DataError("no .pgm frames in " + frames_dir);
    std::sort(files.begin(), files.end());

    int width = 0, height = 0;
    render::Frame first = render::read_pgm(files[0], width, height);
    eventsim::FrameToEventConverter converter(width, height, config.render.fps,
                                              config.sim);
    converter.push(first);
    for (std::size_t i = 1; i < files.size(); ++i) {
        int w = 0, h = 0;
        render::Frame frame = render::read_pgm(files[i], w, h);
        if (w != width || h != height)
            throw DataError("frame geometry changes at " + files[i]);
        converter.push(frame);
    }
    eventsim::EventStream stream = converter.finish();
    stream = eventsim::inject_noise(stream, config.sim);

    eventsim::write_evb1(out_file, stream);
    if (emit_csv) {
        fs::path csv = out_file;
        csv.replace_extension(".csv");
        eventsim::write_events_csv(csv.string(), stream);
    }
    return stream;
}

inline void write_history_csv(const std::string& path,
                              const train::TrainHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open history file for writing: " + path);
    out << "epoch,loss,train_acc,eval_acc\n";
    for (std::size_t e = 0; e < history.loss.size(); ++e)
        out << (e + 1) << ',' << detail::format_double(history.loss[e]) << ','
            << detail::format_double(history.train_accuracy[e]) << ','
            << detail::format_double(history.eval_accuracy[e]) << '\n';
}

/// Wall-clock timings are kept out of history.csv so reruns stay
/// byte-identical; they land here instead.
inline void write_timings_csv(const std::string& path,
                              const train::TrainHistory& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open timings file for writing: " + path);
    out << "epoch,seconds\n";
    char buf[40];
    for (std::size_t e = 0; e < history.seconds.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%.3f", history.seconds[e]);
        out << (e + 1) << ',' << buf << '\n';
    }
}

struct TrainRunResult {
    train::TrainHistory history;
    std::string final_checkpoint;
    std::string best_checkpoint;
    double best_eval_accuracy = 0.0;
};

namespace detail {

/// Shared run-directory writer for train and finetune.
inline TrainRunResult run_training(snn::SnnModel& model,
                                   const std::vector<codec::SpikeTensor>& train_set,
                                   const std::vector<codec::SpikeTensor>& eval_set,
                                   const cfg::RunConfig& config,
                                   const std::string& out_dir, double fraction) {
    fs::create_directories(out_dir);

    TrainRunResult result;
    snn::SnnModel best = model;
    double best_acc = -1.0;

    auto on_epoch = [&](int epoch, const snn::SnnModel& m,
                        const train::TrainHistory& h) {
        if (config.train.checkpoint_every > 0 &&
            epoch % config.train.checkpoint_every == 0) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04d.snn", epoch);
            snn::save_checkpoint((fs::path(out_dir) / name).string(), m);
        }
        if (h.eval_accuracy.back() > best_acc) {
            best_acc = h.eval_accuracy.back();
            best = m;
        }
        log::info("epoch %d: loss %.5f train %.4f eval %.4f", epoch,
                  h.loss.back(), h.train_accuracy.back(), h.eval_accuracy.back());
    };

    train::TrainConfig tc = config.train.core;
    std::vector<std::size_t> used;
    if (fraction >= 1.0) {
        result.history = train::bptt_train(model, train_set, eval_set, tc, on_epoch);
    } else {
        result.history =
            train::finetune(model, train_set, eval_set, fraction, tc, on_epoch, &used);
        nlohmann::json j = {{"fraction", fraction},
                            {"train_samples_total", train_set.size()},
                            {"train_samples_used", used.size()},
                            {"indices", used}};
        std::ofstream out((fs::path(out_dir) / "finetune.json").string());
        out << j.dump(2) << '\n';
    }

    if (best_acc < 0.0) {
        best = model;  // zero-epoch run: best == final == initialization
        best_acc = 0.0;
    }

    result.final_checkpoint = (fs::path(out_dir) / "final.snn").string();
    result.best_checkpoint = (fs::path(out_dir) / "best.snn").string();
    result.best_eval_accuracy = best_acc;
    snn::save_checkpoint(result.final_checkpoint, model);
    snn::save_checkpoint(result.best_checkpoint, best);
    write_history_csv((fs::path(out_dir) / "history.csv").string(), result.history);
    write_timings_csv((fs::path(out_dir) / "timings.csv").string(), result.history);
    return result;
}

}  // namespace detail

inline TrainRunResult cmd_train(const cfg::RunConfig& config,
                                const std::string& manifest_path,
                                const std::string& out_dir) {
    config.validate();
    codec::LoadedDataset data = codec::load_dataset(manifest_path);
    if (data.train.empty()) throw DataError("manifest has no train windows");
    snn::SnnModel model = config.build_model(data.height, data.width);
    model.timesteps = static_cast<int>(
        codec::bin_count(config.codec.window_ms, config.codec.bin_ms));
    fs::create_directories(out_dir);
    cfg::write_config((fs::path(out_dir) / "config.json").string(), config, "train");
    return detail::run_training(model, data.train, data.test, config, out_dir, 1.0);
}

struct EvalRunResult {
    eval::EvalResult result;
    double mean_loss = 0.0;
};

inline EvalRunResult cmd_eval(const cfg::RunConfig& config,
                              const std::string& checkpoint_path,
                              const std::string& manifest_path,
                              const std::string& out_dir) {
    config.validate();
    snn::SnnModel model = snn::load_checkpoint(checkpoint_path);
    codec::LoadedDataset data = codec::load_dataset(manifest_path);
    if (data.test.empty()) throw DataError("manifest has no test windows");
    if (model.in_h != data.height || model.in_w != data.width)
        throw DataError("checkpoint geometry does not match dataset");

    EvalRunResult out;
    out.result = eval::evaluate(model, data.test, config.threads);
    for (const auto& o : out.result.outcomes) {
        double loss = 0.0;
        for (int c = 0; c < 2; ++c) {
            const double target =
                c == o.label ? config.train.core.r_true : config.train.core.r_false;
            loss += (o.rates[static_cast<std::size_t>(c)] - target) *
                    (o.rates[static_cast<std::size_t>(c)] - target);
        }
        out.mean_loss += 0.5 * loss;
    }
    out.mean_loss /= static_cast<double>(out.result.outcomes.size());

    fs::create_directories(out_dir);
    cfg::write_config((fs::path(out_dir) / "config.json").string(), config, "eval");
    eval::write_report_json((fs::path(out_dir) / "report.json").string(), out.result);
    eval::write_report_md((fs::path(out_dir) / "report.md").string(), out.result);
    return out;
}

inline TrainRunResult cmd_finetune(const cfg::RunConfig& config,
                                   const std::string& checkpoint_path,
                                   const std::string& manifest_path,
                                   const std::string& out_dir) {
    config.validate();
    snn::SnnModel model = snn::load_checkpoint(checkpoint_path);
    codec::LoadedDataset data = codec::load_dataset(manifest_path);
    if (data.train.empty()) throw DataError("manifest has no train windows");
    if (model.in_h != data.height || model.in_w != data.width)
        throw DataError("checkpoint geometry does not match dataset");
    fs::create_directories(out_dir);
    cfg::write_config((fs::path(out_dir) / "config.json").string(), config,
                      "finetune");
    return detail::run_training(model, data.train, data.test, config, out_dir,
                                config.finetune.fraction);
}

struct SweepRow {
    double ts_ms = 0.0;
    double accuracy = 0.0;
    double loss = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline void write_sweep_csv(const std::string& path,
                            const std::vector<SweepRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open sweep csv for writing: " + path);
    out << "ts_ms,accuracy,loss,precision,recall,f1\n";
    for (const SweepRow& r : rows)
        out << detail::format_double(r.ts_ms) << ','
            << detail::format_double(r.accuracy) << ','
            << detail::format_double(r.loss) << ','
            << detail::format_double(r.precision) << ','
            << detail::format_double(r.recall) << ','
            << detail::format_double(r.f1) << '\n';
}

/// Temporal-resolution sweep: for each window length, re-slices the raw
/// dataset directory (events_NNN.evb1 + labels_NNN.json pairs), trains a
/// fresh model, evaluates on the arm's held-out split.
inline std::vector<SweepRow> cmd_sweep(const cfg::RunConfig& config,
                                       const std::string& dataset_dir,
                                       const std::string& out_dir) {
    config.validate();

    std::vector<std::pair<std::string, std::string>> pairs;
    for (int s = 0;; ++s) {
        const auto events = fs::path(dataset_dir) / detail::seq_name("events", s, "evb1");
        const auto labels = fs::path(dataset_dir) / detail::seq_name("labels", s, "json");
        if (!fs::exists(events)) break;
        if (!fs::exists(labels))
            throw DataError("missing label sidecar: " + labels.string());
        pairs.emplace_back(events.string(), labels.string());
    }
    if (pairs.empty())
        throw DataError("no events_NNN.evb1 sequences in " + dataset_dir);

    fs::create_directories(out_dir);
    cfg::write_config((fs::path(out_dir) / "config.json").string(), config, "sweep");

    std::vector<SweepRow> rows;
    for (std::size_t arm = 0; arm < config.sweep.ts_list.size(); ++arm) {
        const double ts = config.sweep.ts_list[arm];
        cfg::RunConfig arm_cfg = config;
        arm_cfg.codec.window_ms = ts;

        std::vector<WindowRef> windows;
        for (const auto& [events_path, labels_path] : pairs) {
            const kinematics::LabelTrack labels = kinematics::read_labels(labels_path);
            auto w = collect_windows(labels, ts,
                                     fs::path(events_path).filename().string(),
                                     labels.duration_us());
            windows.insert(windows.end(), w.begin(), w.end());
        }
        if (arm_cfg.codec.balance) balance_windows(windows, config.seed);
        codec::DatasetManifest manifest = assign_splits(std::move(windows), arm_cfg);

        char arm_name[32];
        std::snprintf(arm_name, sizeof(arm_name), "ts_%g", ts);
        const auto arm_dir = fs::path(out_dir) / arm_name;
        fs::create_directories(arm_dir);
        // Arm manifests point back into the dataset directory.
        for (auto& e : manifest.entries)
            e.file = fs::relative(fs::path(dataset_dir) / e.file, arm_dir).string();
        const std::string manifest_path = (arm_dir / "manifest.json").string();
        codec::write_manifest(manifest_path, manifest);

        codec::LoadedDataset data = codec::load_dataset(manifest_path);
        if (data.train.empty() || data.test.empty())
            throw DataError("sweep arm at " + std::to_string(ts) +
                            " ms produced an empty split");
        snn::SnnModel model = arm_cfg.build_model(data.height, data.width);
        model.timesteps = static_cast<int>(codec::bin_count(ts, arm_cfg.codec.bin_ms));
        train::TrainConfig tc = arm_cfg.train.core;
        train::bptt_train(model, data.train, data.test, tc);

        const eval::EvalResult ev = eval::evaluate(model, data.test, config.threads);
        SweepRow row;
        row.ts_ms = ts;
        row.accuracy = ev.binary.accuracy;
        row.precision = ev.binary.precision;
        row.recall = ev.binary.recall;
        row.f1 = ev.binary.f1;
        for (const auto& o : ev.outcomes) {
            double loss = 0.0;
            for (int c = 0; c < 2; ++c) {
                const double target =
                    c == o.label ? tc.r_true : tc.r_false;
                loss += (o.rates[static_cast<std::size_t>(c)] - target) *
                        (o.rates[static_cast<std::size_t>(c)] - target);
            }
            row.loss += 0.5 * loss;
        }
        row.loss /= static_cast<double>(ev.outcomes.size());
        rows.push_back(row);

        eval::write_report_json((arm_dir / "report.json").string(), ev);
    }

    write_sweep_csv((fs::path(out_dir) / "sweep.csv").string(), rows);
    return rows;
}

/// Synaptic-operation accounting of a checkpoint over a dataset's test split.
inline eval::EvalResult cmd_ops(const cfg::RunConfig& config,
                                const std::string& checkpoint_path,
                                const std::string& manifest_path,
                                const std::string& out_dir) {
    EvalRunResult run = cmd_eval(config, checkpoint_path, manifest_path, out_dir);
    return run.result;
}

}  // namespace synsacc::pipeline
