#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "synsacc/common.hpp"
#include "synsacc/event_sim.hpp"
#include "synsacc/kinematics.hpp"
#include "synsacc/render.hpp"
#include "synsacc/rng.hpp"
#include "synsacc/snn_core.hpp"
#include "synsacc/train.hpp"

namespace synsacc::cfg {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::set<std::string>& known,
                                const std::string& context) {
    if (!j.is_object())
        throw ConfigError("config section \"" + context + "\" must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key))
            throw ConfigError("unknown config key \"" + key + "\" in " + context);
    }
}

template <typename T>
void get_to(const nlohmann::json& j, const char* key, T& out,
            const std::string& context) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("bad value type for \"" + std::string(key) + "\" in " +
                          context);
    }
}

inline void get_range(const nlohmann::json& j, const char* key,
                      kinematics::DurationRangeMs& out,
                      const std::string& context) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2)
        throw ConfigError("\"" + std::string(key) + "\" in " + context +
                          " must be [lo, hi]");
    out.lo = v[0].get<double>();
    out.hi = v[1].get<double>();
}

}  // namespace detail

struct KinematicsConfig {
    double duration_ms = 30000.0;
    double max_angle_deg = 15.0;
    kinematics::DurationRangeMs fix_range_ms{50.0, 600.0};
    kinematics::DurationRangeMs sac_range_ms{20.0, 300.0};
    int sequences = 1;
};

struct RenderConfig {
    int width = 64;
    int height = 48;
    double fps = 250.0;
    bool dump_frames = false;
    render::EyeAppearance appearance;
};

struct CodecConfig {
    double window_ms = 33.0;
    double bin_ms = 1.0;
    int downscale = 1;
    double train_fraction = 0.8;
    bool balance = true;
};

struct ModelConfig {
    std::string type = "dense";  // dense | conv
    std::vector<int> hidden{128, 128};
    double init_gain = 24.0;
    int delay_max = 0;
    double threshold = 1.25;
    double current_decay = 0.25;
    double voltage_decay = 0.03;
    double surrogate_slope = 3.0;
    double surrogate_width = 0.03;

    snn::CubaParams neuron() const {
        return snn::CubaParams::from_decays(current_decay, voltage_decay, threshold,
                                            surrogate_slope, surrogate_width);
    }
};

struct TrainSection {
    train::TrainConfig core;
    int checkpoint_every = 0;  // epochs between epoch_%04d.snn dumps; 0 = off
};

struct SweepConfig {
    std::vector<double> ts_list{200, 150, 100, 80, 50, 33, 20, 10, 8};
};

struct FinetuneConfig {
    double fraction = 0.2;
};

struct RunConfig {
    std::uint64_t seed = 42;
    int threads = 0;  // 0 = hardware concurrency
    std::string rng_algorithm{rng::kAlgorithm};
    KinematicsConfig kinematics;
    RenderConfig render;
    eventsim::SimConfig sim;
    CodecConfig codec;
    ModelConfig model;
    TrainSection train;
    SweepConfig sweep;
    FinetuneConfig finetune;

    void validate() const {
        rng::require_algorithm(rng_algorithm);
        if (threads < 0) throw ConfigError("threads must be >= 0");
        if (kinematics.sequences < 1) throw ConfigError("kinematics.sequences must be >= 1");
        if (model.type != "dense" && model.type != "conv")
            throw ConfigError("model.type must be \"dense\" or \"conv\"");
        if (model.type == "dense" && model.hidden.size() != 2)
            throw ConfigError("model.hidden must list two layer sizes");
        for (int h : model.hidden)
            if (h < 1) throw ConfigError("model.hidden sizes must be >= 1");
        if (!(model.init_gain > 0.0)) throw ConfigError("model.init_gain must be > 0");
        if (model.delay_max < 0) throw ConfigError("model.delay_max must be >= 0");
        if (!(codec.train_fraction > 0.0 && codec.train_fraction < 1.0))
            throw ConfigError("codec.train_fraction must be in (0, 1)");
        if (codec.downscale < 1) throw ConfigError("codec.downscale must be >= 1");
        if (sweep.ts_list.empty()) throw ConfigError("sweep.ts_list must be non-empty");
        if (!(finetune.fraction > 0.0 && finetune.fraction <= 1.0))
            throw ConfigError("finetune.fraction must be in (0, 1]");
        try {
            sim.validate();
            render.appearance.validate();
            train::TrainConfig probe = train.core;
            probe.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }

    /// Geometry of the spike tensors this config produces.
    int tensor_height() const {
        return (render.height + codec.downscale - 1) / codec.downscale;
    }
    int tensor_width() const {
        return (render.width + codec.downscale - 1) / codec.downscale;
    }

    snn::SnnModel build_model(int height, int width) const {
        if (model.type == "conv")
            return snn::build_conv_snn(height, width, model.neuron(), seed,
                                       model.init_gain);
        return snn::build_dense_snn(height, width, model.hidden[0],
                                    model.hidden[1], model.neuron(), seed,
                                    model.init_gain, model.delay_max);
    }

    snn::SnnModel build_model() const {
        return build_model(tensor_height(), tensor_width());
    }
};

inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::get_range;
    using detail::get_to;
    using detail::reject_unknown_keys;

    RunConfig c;
    reject_unknown_keys(j,
                        {"seed", "threads", "rng", "tool_version", "command",
                         "kinematics", "render", "sim", "codec", "model", "train",
                         "sweep", "finetune"},
                        "top level");
    get_to(j, "seed", c.seed, "top level");
    get_to(j, "threads", c.threads, "top level");
    get_to(j, "rng", c.rng_algorithm, "top level");

    if (j.contains("kinematics")) {
        const auto& k = j["kinematics"];
        reject_unknown_keys(k,
                            {"duration_ms", "max_angle_deg", "fix_range_ms",
                             "sac_range_ms", "sequences"},
                            "kinematics");
        get_to(k, "duration_ms", c.kinematics.duration_ms, "kinematics");
        get_to(k, "max_angle_deg", c.kinematics.max_angle_deg, "kinematics");
        get_range(k, "fix_range_ms", c.kinematics.fix_range_ms, "kinematics");
        get_range(k, "sac_range_ms", c.kinematics.sac_range_ms, "kinematics");
        get_to(k, "sequences", c.kinematics.sequences, "kinematics");
    }
    if (j.contains("render")) {
        const auto& r = j["render"];
        reject_unknown_keys(r, {"width", "height", "fps", "dump_frames", "appearance"},
                            "render");
        get_to(r, "width", c.render.width, "render");
        get_to(r, "height", c.render.height, "render");
        get_to(r, "fps", c.render.fps, "render");
        get_to(r, "dump_frames", c.render.dump_frames, "render");
        if (r.contains("appearance")) {
            const auto& a = r["appearance"];
            reject_unknown_keys(a,
                                {"sclera_level", "iris_level", "pupil_level",
                                 "background_level", "iris_radius_px",
                                 "pupil_radius_px", "gain_px_per_deg"},
                                "render.appearance");
            get_to(a, "sclera_level", c.render.appearance.sclera_level, "render.appearance");
            get_to(a, "iris_level", c.render.appearance.iris_level, "render.appearance");
            get_to(a, "pupil_level", c.render.appearance.pupil_level, "render.appearance");
            get_to(a, "background_level", c.render.appearance.background_level,
                   "render.appearance");
            get_to(a, "iris_radius_px", c.render.appearance.iris_radius_px,
                   "render.appearance");
            get_to(a, "pupil_radius_px", c.render.appearance.pupil_radius_px,
                   "render.appearance");
            get_to(a, "gain_px_per_deg", c.render.appearance.gain_px_per_deg,
                   "render.appearance");
        }
    }
    if (j.contains("sim")) {
        const auto& s = j["sim"];
        reject_unknown_keys(s,
                            {"theta_on", "theta_off", "sigma_theta", "cutoff_hz",
                             "leak_rate_hz", "shot_rate_hz", "upsample_factor"},
                            "sim");
        get_to(s, "theta_on", c.sim.theta_on, "sim");
        get_to(s, "theta_off", c.sim.theta_off, "sim");
        get_to(s, "sigma_theta", c.sim.sigma_theta, "sim");
        get_to(s, "cutoff_hz", c.sim.cutoff_hz, "sim");
        get_to(s, "leak_rate_hz", c.sim.leak_rate_hz, "sim");
        get_to(s, "shot_rate_hz", c.sim.shot_rate_hz, "sim");
        get_to(s, "upsample_factor", c.sim.upsample_factor, "sim");
    }
    if (j.contains("codec")) {
        const auto& k = j["codec"];
        reject_unknown_keys(
            k, {"window_ms", "bin_ms", "downscale", "train_fraction", "balance"},
            "codec");
        get_to(k, "window_ms", c.codec.window_ms, "codec");
        get_to(k, "bin_ms", c.codec.bin_ms, "codec");
        get_to(k, "downscale", c.codec.downscale, "codec");
        get_to(k, "train_fraction", c.codec.train_fraction, "codec");
        get_to(k, "balance", c.codec.balance, "codec");
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        reject_unknown_keys(m,
                            {"type", "hidden", "init_gain", "delay_max", "neuron"},
                            "model");
        get_to(m, "type", c.model.type, "model");
        get_to(m, "hidden", c.model.hidden, "model");
        get_to(m, "init_gain", c.model.init_gain, "model");
        get_to(m, "delay_max", c.model.delay_max, "model");
        if (m.contains("neuron")) {
            const auto& n = m["neuron"];
            reject_unknown_keys(n,
                                {"threshold", "current_decay", "voltage_decay",
                                 "surrogate_slope", "surrogate_width"},
                                "model.neuron");
            get_to(n, "threshold", c.model.threshold, "model.neuron");
            get_to(n, "current_decay", c.model.current_decay, "model.neuron");
            get_to(n, "voltage_decay", c.model.voltage_decay, "model.neuron");
            get_to(n, "surrogate_slope", c.model.surrogate_slope, "model.neuron");
            get_to(n, "surrogate_width", c.model.surrogate_width, "model.neuron");
        }
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        reject_unknown_keys(t,
                            {"epochs", "batch_size", "learning_rate", "weight_decay",
                             "r_true", "r_false", "weight_norm", "detach_reset",
                             "checkpoint_every"},
                            "train");
        get_to(t, "epochs", c.train.core.epochs, "train");
        get_to(t, "batch_size", c.train.core.batch_size, "train");
        get_to(t, "learning_rate", c.train.core.learning_rate, "train");
        get_to(t, "weight_decay", c.train.core.weight_decay, "train");
        get_to(t, "r_true", c.train.core.r_true, "train");
        get_to(t, "r_false", c.train.core.r_false, "train");
        get_to(t, "weight_norm", c.train.core.weight_norm, "train");
        get_to(t, "detach_reset", c.train.core.detach_reset, "train");
        get_to(t, "checkpoint_every", c.train.checkpoint_every, "train");
    }
    if (j.contains("sweep")) {
        const auto& s = j["sweep"];
        reject_unknown_keys(s, {"ts_list"}, "sweep");
        get_to(s, "ts_list", c.sweep.ts_list, "sweep");
    }
    if (j.contains("finetune")) {
        const auto& f = j["finetune"];
        reject_unknown_keys(f, {"fraction"}, "finetune");
        get_to(f, "fraction", c.finetune.fraction, "finetune");
    }

    // Module seeds and thread caps follow the global settings.
    c.sim.seed = c.seed;
    c.train.core.seed = c.seed;
    c.train.core.threads = c.threads;
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config json in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

/// Fully resolved configuration: every default made explicit.
inline nlohmann::json config_to_json(const RunConfig& c) {
    return nlohmann::json{
        {"tool_version", kVersion},
        {"seed", c.seed},
        {"threads", c.threads},
        {"rng", c.rng_algorithm},
        {"kinematics",
         {{"duration_ms", c.kinematics.duration_ms},
          {"max_angle_deg", c.kinematics.max_angle_deg},
          {"fix_range_ms", {c.kinematics.fix_range_ms.lo, c.kinematics.fix_range_ms.hi}},
          {"sac_range_ms", {c.kinematics.sac_range_ms.lo, c.kinematics.sac_range_ms.hi}},
          {"sequences", c.kinematics.sequences}}},
        {"render",
         {{"width", c.render.width},
          {"height", c.render.height},
          {"fps", c.render.fps},
          {"dump_frames", c.render.dump_frames},
          {"appearance",
           {{"sclera_level", c.render.appearance.sclera_level},
            {"iris_level", c.render.appearance.iris_level},
            {"pupil_level", c.render.appearance.pupil_level},
            {"background_level", c.render.appearance.background_level},
            {"iris_radius_px", c.render.appearance.iris_radius_px},
            {"pupil_radius_px", c.render.appearance.pupil_radius_px},
            {"gain_px_per_deg", c.render.appearance.gain_px_per_deg}}}}},
        {"sim",
         {{"theta_on", c.sim.theta_on},
          {"theta_off", c.sim.theta_off},
          {"sigma_theta", c.sim.sigma_theta},
          {"cutoff_hz", c.sim.cutoff_hz},
          {"leak_rate_hz", c.sim.leak_rate_hz},
          {"shot_rate_hz", c.sim.shot_rate_hz},
          {"upsample_factor", c.sim.upsample_factor}}},
        {"codec",
         {{"window_ms", c.codec.window_ms},
          {"bin_ms", c.codec.bin_ms},
          {"downscale", c.codec.downscale},
          {"train_fraction", c.codec.train_fraction},
          {"balance", c.codec.balance}}},
        {"model",
         {{"type", c.model.type},
          {"hidden", c.model.hidden},
          {"init_gain", c.model.init_gain},
          {"delay_max", c.model.delay_max},
          {"neuron",
           {{"threshold", c.model.threshold},
            {"current_decay", c.model.current_decay},
            {"voltage_decay", c.model.voltage_decay},
            {"surrogate_slope", c.model.surrogate_slope},
            {"surrogate_width", c.model.surrogate_width}}}}},
        {"train",
         {{"epochs", c.train.core.epochs},
          {"batch_size", c.train.core.batch_size},
          {"learning_rate", c.train.core.learning_rate},
          {"weight_decay", c.train.core.weight_decay},
          {"r_true", c.train.core.r_true},
          {"r_false", c.train.core.r_false},
          {"weight_norm", c.train.core.weight_norm},
          {"detach_reset", c.train.core.detach_reset},
          {"checkpoint_every", c.train.checkpoint_every}}},
        {"sweep", {{"ts_list", c.sweep.ts_list}}},
        {"finetune", {{"fraction", c.finetune.fraction}}}};
}

inline void write_config(const std::string& path, const RunConfig& c,
                         const std::string& command = "") {
    nlohmann::json j = config_to_json(c);
    if (!command.empty()) j["command"] = command;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open config for writing: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace synsacc::cfg
