#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "synsacc/common.hpp"
#include "synsacc/event_io.hpp"
#include "synsacc/spike_codec.hpp"

namespace synsacc::codec {

enum class Split : int { train = 0, test = 1 };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw DataError("unknown split: " + s);
}

struct ManifestEntry {
    std::string file;  // relative to the manifest location
    LabelClass label = LabelClass::fixation;
    std::uint64_t t_start_us = 0;
    std::uint64_t t_end_us = 0;
    Split split = Split::train;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    double window_ms = 0.0;
    double bin_ms = 1.0;
    int downscale = 1;
    std::vector<ManifestEntry> entries;

    std::size_t count(LabelClass cls) const {
        std::size_t n = 0;
        for (const auto& e : entries)
            if (e.label == cls) ++n;
        return n;
    }

    std::size_t count(Split split) const {
        std::size_t n = 0;
        for (const auto& e : entries)
            if (e.split == split) ++n;
        return n;
    }
};

namespace detail {

inline void validate_manifest(const DatasetManifest& m) {
    if (!(m.window_ms > 0.0)) throw DataError("manifest: window_ms must be > 0");
    if (!(m.bin_ms > 0.0)) throw DataError("manifest: bin_ms must be > 0");
    if (m.downscale < 1) throw DataError("manifest: downscale must be >= 1");
    const auto window_us =
        static_cast<std::uint64_t>(std::llround(m.window_ms * 1000.0));
    std::set<std::tuple<std::string, std::uint64_t, std::uint64_t>> seen;
    for (const auto& e : m.entries) {
        if (e.t_end_us - e.t_start_us != window_us)
            throw DataError("manifest: entry window length differs from window_ms");
        // One window in two splits (or listed twice) would leak labels.
        if (!seen.emplace(e.file, e.t_start_us, e.t_end_us).second)
            throw DataError("manifest: duplicate or split-overlapping window " +
                            e.file + " @" + std::to_string(e.t_start_us));
    }
}

}  // namespace detail

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        entries.push_back({{"file", e.file},
                           {"label", kinematics::to_string(e.label)},
                           {"t_start_us", e.t_start_us},
                           {"t_end_us", e.t_end_us},
                           {"split", to_string(e.split)}});
    }
    return nlohmann::json{
        {"seed", m.seed},
        {"window_ms", m.window_ms},
        {"bin_ms", m.bin_ms},
        {"downscale", m.downscale},
        {"class_counts",
         {{"fixation", m.count(LabelClass::fixation)},
          {"saccade", m.count(LabelClass::saccade)}}},
        {"entries", entries}};
}

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
    detail::validate_manifest(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open manifest for writing: " + path);
    out << manifest_to_json(m).dump(2) << '\n';
}

/// Reads and fully validates a manifest: JSON shape, window consistency,
/// split disjointness, stored class counts, and existence of every
/// referenced event file (resolved relative to the manifest).
inline DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest json in " + path + ": " + e.what());
    }

    DatasetManifest m;
    try {
        m.seed = j.at("seed").get<std::uint64_t>();
        m.window_ms = j.at("window_ms").get<double>();
        m.bin_ms = j.at("bin_ms").get<double>();
        m.downscale = j.value("downscale", 1);
        for (const auto& item : j.at("entries")) {
            ManifestEntry e;
            e.file = item.at("file").get<std::string>();
            e.label = kinematics::label_from_string(item.at("label").get<std::string>());
            e.t_start_us = item.at("t_start_us").get<std::uint64_t>();
            e.t_end_us = item.at("t_end_us").get<std::uint64_t>();
            e.split = split_from_string(item.at("split").get<std::string>());
            m.entries.push_back(std::move(e));
        }
        if (j.contains("class_counts")) {
            const auto& counts = j["class_counts"];
            if (counts.at("fixation").get<std::size_t>() !=
                    m.count(LabelClass::fixation) ||
                counts.at("saccade").get<std::size_t>() !=
                    m.count(LabelClass::saccade))
                throw DataError("manifest: stored class counts disagree with entries");
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest schema error in " + path + ": " + e.what());
    }
    detail::validate_manifest(m);

    const auto base = std::filesystem::path(path).parent_path();
    for (const auto& e : m.entries) {
        const auto file = base / e.file;
        if (!std::filesystem::exists(file))
            throw DataError("manifest references missing event file: " +
                            file.string());
    }
    return m;
}

/// Windows of one split materialized as spike tensors.
struct LoadedDataset {
    int height = 0;  // tensor geometry (after downscale)
    int width = 0;
    std::vector<SpikeTensor> train;
    std::vector<SpikeTensor> test;
};

/// Recomputes every window tensor from the referenced EVB1/CSV files.
/// The manifest's curation is authoritative for window bounds, so a file's
/// recovered duration is raised to cover its windows.
inline LoadedDataset load_dataset(const std::string& manifest_path) {
    const DatasetManifest m = read_manifest(manifest_path);
    const auto base = std::filesystem::path(manifest_path).parent_path();

    std::map<std::string, std::vector<std::size_t>> by_file;
    for (std::size_t i = 0; i < m.entries.size(); ++i)
        by_file[m.entries[i].file].push_back(i);

    LoadedDataset out;
    std::vector<SpikeTensor> tensors(m.entries.size());
    for (const auto& [file, idxs] : by_file) {
        eventsim::EventStream stream = eventsim::read_events((base / file).string());
        for (std::size_t i : idxs)
            stream.duration_us = std::max(stream.duration_us, m.entries[i].t_end_us);
        if (m.downscale > 1) stream = downscale_events(stream, m.downscale);
        for (std::size_t i : idxs) {
            const ManifestEntry& e = m.entries[i];
            SpikeTensor t = bin_events(stream, e.t_start_us, m.window_ms, m.bin_ms);
            t.label = e.label;
            tensors[i] = std::move(t);
        }
        out.height = stream.height;
        out.width = stream.width;
    }
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        auto& dst = m.entries[i].split == Split::train ? out.train : out.test;
        dst.push_back(std::move(tensors[i]));
    }
    return out;
}

}  // namespace synsacc::codec
