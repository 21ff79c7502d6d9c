#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synsacc/common.hpp"
#include "synsacc/snn_core.hpp"

namespace synsacc::snn {

/// Checkpoint container: u32 LE header length, JSON header (architecture,
/// neuron parameters, geometry, format version), then the raw little-endian
/// float32 weight blobs of every layer concatenated in layer order
/// (feedforward weights first, then recurrent weights where present).
/// Weights live on the float32 grid throughout training, so a save/load
/// round-trip is bit-exact.
inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

inline nlohmann::json neuron_to_json(const CubaParams& p) {
    return {{"current_retention", p.current_retention},
            {"voltage_retention", p.voltage_retention},
            {"threshold", p.threshold},
            {"surrogate_slope", p.surrogate_slope},
            {"surrogate_width", p.surrogate_width}};
}

inline CubaParams neuron_from_json(const nlohmann::json& j) {
    CubaParams p;
    p.current_retention = j.at("current_retention").get<double>();
    p.voltage_retention = j.at("voltage_retention").get<double>();
    p.threshold = j.at("threshold").get<double>();
    p.surrogate_slope = j.at("surrogate_slope").get<double>();
    p.surrogate_width = j.at("surrogate_width").get<double>();
    return p;
}

inline void append_f32_le(std::string& buf, const std::vector<double>& values) {
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int i = 0; i < 4; ++i)
            buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
}

inline void read_f32_le(std::ifstream& in, std::vector<double>& dst,
                        const std::string& path) {
    std::vector<unsigned char> raw(dst.size() * 4);
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataError("truncated checkpoint blob in " + path);
    for (std::size_t i = 0; i < dst.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
        dst[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const SnnModel& model) {
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& l : model.layers) {
        nlohmann::json jl = {{"kind", to_string(l.kind)},
                             {"in_c", l.in_c},
                             {"in_h", l.in_h},
                             {"in_w", l.in_w},
                             {"out_c", l.out_c},
                             {"out_h", l.out_h},
                             {"out_w", l.out_w},
                             {"fan_in", l.fan_in},
                             {"fan_out", l.fan_out},
                             {"kernel", l.kernel},
                             {"stride", l.stride},
                             {"pad", l.pad},
                             {"delay_max", l.delay_max},
                             {"neuron", detail::neuron_to_json(l.neuron)}};
        if (!l.delays.empty()) jl["delays"] = l.delays;
        layers.push_back(std::move(jl));
    }
    const nlohmann::json header = {{"format_version", kCheckpointFormatVersion},
                                   {"class_count", model.class_count},
                                   {"input",
                                    {{"c", model.in_c},
                                     {"h", model.in_h},
                                     {"w", model.in_w}}},
                                   {"timesteps", model.timesteps},
                                   {"layers", layers}};

    std::string buf;
    const std::string header_str = header.dump();
    const auto len = static_cast<std::uint32_t>(header_str.size());
    for (int i = 0; i < 4; ++i)
        buf.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
    buf += header_str;
    for (const Layer& l : model.layers) {
        detail::append_f32_le(buf, l.weights);
        detail::append_f32_le(buf, l.rec_weights);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("short write to checkpoint: " + path);
}

inline SnnModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);

    unsigned char len_bytes[4];
    in.read(reinterpret_cast<char*>(len_bytes), 4);
    if (in.gcount() != 4) throw DataError("truncated checkpoint header: " + path);
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i)
        len |= static_cast<std::uint32_t>(len_bytes[i]) << (8 * i);

    std::string header_str(len, '\0');
    in.read(header_str.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len))
        throw DataError("truncated checkpoint header: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint header in " + path + ": " + e.what());
    }

    SnnModel model;
    try {
        if (header.at("format_version").get<int>() != kCheckpointFormatVersion)
            throw DataError("unsupported checkpoint format version in " + path);
        model.class_count = header.at("class_count").get<int>();
        model.in_c = header.at("input").at("c").get<int>();
        model.in_h = header.at("input").at("h").get<int>();
        model.in_w = header.at("input").at("w").get<int>();
        model.timesteps = header.at("timesteps").get<int>();
        for (const auto& jl : header.at("layers")) {
            Layer l;
            l.kind = layer_kind_from_string(jl.at("kind").get<std::string>());
            l.in_c = jl.at("in_c").get<int>();
            l.in_h = jl.at("in_h").get<int>();
            l.in_w = jl.at("in_w").get<int>();
            l.out_c = jl.at("out_c").get<int>();
            l.out_h = jl.at("out_h").get<int>();
            l.out_w = jl.at("out_w").get<int>();
            l.fan_in = jl.at("fan_in").get<std::size_t>();
            l.fan_out = jl.at("fan_out").get<std::size_t>();
            l.kernel = jl.at("kernel").get<int>();
            l.stride = jl.at("stride").get<int>();
            l.pad = jl.at("pad").get<int>();
            l.delay_max = jl.at("delay_max").get<int>();
            l.neuron = detail::neuron_from_json(jl.at("neuron"));
            if (jl.contains("delays"))
                l.delays = jl["delays"].get<std::vector<std::uint16_t>>();
            switch (l.kind) {
                case LayerKind::dense:
                    l.weights.assign(l.fan_in * l.fan_out, 0.0);
                    break;
                case LayerKind::recurrent:
                    l.weights.assign(l.fan_in * l.fan_out, 0.0);
                    l.rec_weights.assign(l.fan_out * l.fan_out, 0.0);
                    break;
                case LayerKind::conv2d:
                    l.weights.assign(static_cast<std::size_t>(l.out_c) * l.in_c *
                                         l.kernel * l.kernel,
                                     0.0);
                    break;
                case LayerKind::sumpool:
                case LayerKind::flatten:
                    break;
            }
            if (!l.delays.empty() && l.delays.size() != l.fan_in * l.fan_out)
                throw DataError("checkpoint delay table shape mismatch in " + path);
            model.layers.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint schema error in " + path + ": " + e.what());
    }

    for (Layer& l : model.layers) {
        detail::read_f32_le(in, l.weights, path);
        detail::read_f32_le(in, l.rec_weights, path);
    }
    char extra = 0;
    if (in.read(&extra, 1); in.gcount() != 0)
        throw DataError("trailing bytes after checkpoint blobs: " + path);

    try {
        model.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError("checkpoint does not compose: " + std::string(e.what()));
    }
    return model;
}

}  // namespace synsacc::snn
