#ifndef QUENCHWATCH_DATASET_HPP
#define QUENCHWATCH_DATASET_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "quenchwatch/error.hpp"
#include "quenchwatch/ingest.hpp"
#include "quenchwatch/synthetic.hpp"

namespace quenchwatch {

/// Series plus their quench events, as loaded from a manifest or generated.
struct Dataset {
    std::vector<VoltageSeries> series;
    std::vector<QuenchEvent> events;

    /// Events belonging to one magnet, in time order.
    std::vector<QuenchEvent> events_for(const std::string& magnet_id) const {
        std::vector<QuenchEvent> out;
        for (const auto& e : events)
            if (e.magnet_id == magnet_id)
                out.push_back(e);
        std::stable_sort(out.begin(), out.end(),
                         [](const auto& a, const auto& b) { return a.t_event_ns < b.t_event_ns; });
        return out;
    }
};

/// Provenance recorded in a manifest next to the file list.
struct ManifestInfo {
    std::optional<Tier> tier;
    std::optional<std::uint64_t> seed;
    std::optional<double> scale;
};

/// Writes one CSV per series plus events.csv and manifest.json into `dir`.
/// Returns the manifest document.
inline nlohmann::json write_dataset(const std::filesystem::path& dir, const Dataset& data, const ManifestInfo& info = {}) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["tier"] = info.tier ? nlohmann::json(std::string(to_string(*info.tier))) : nlohmann::json();
    manifest["seed"] = info.seed ? nlohmann::json(*info.seed) : nlohmann::json();
    manifest["scale"] = info.scale ? nlohmann::json(*info.scale) : nlohmann::json();

    std::uint64_t total = 0;
    nlohmann::json series = nlohmann::json::array();
    for (std::size_t k = 0; k < data.series.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "series_%03zu.csv", k);
        const auto csv = series_to_csv(data.series[k]);
        write_file(dir / name, csv);
        series.push_back({{"path", name},
                          {"magnet_id", data.series[k].magnet_id},
                          {"circuit_class", data.series[k].circuit_class},
                          {"bytes", csv.size()}});
        total += csv.size();
    }
    manifest["series"] = std::move(series);

    const auto events_csv = events_to_csv(data.events);
    write_file(dir / "events.csv", events_csv);
    manifest["events"] = {{"path", "events.csv"}, {"bytes", events_csv.size()}};
    total += events_csv.size();
    manifest["total_bytes"] = total;

    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

/// Loads every file a manifest lists. Relative paths resolve against `base_dir`.
/// A missing file raises NotFound naming the path.
inline Dataset load_dataset(const nlohmann::json& manifest, const std::filesystem::path& base_dir) {
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    if (!manifest.is_object() || !manifest.contains("series") || !manifest["series"].is_array())
        throw Error(ErrorCode::ParseError, "manifest needs a 'series' array");

    Dataset data;
    for (const auto& entry : manifest["series"]) {
        if (!entry.contains("path") || !entry["path"].is_string())
            throw Error(ErrorCode::ParseError, "manifest series entry without 'path'");
        const auto path = resolve(entry["path"].get<std::string>());
        if (!std::filesystem::exists(path))
            throw Error(ErrorCode::NotFound, path.string());
        auto s = load_series(path, entry.value("magnet_id", std::string()));
        s.circuit_class = entry.value("circuit_class", s.circuit_class);
        data.series.push_back(std::move(s));
    }
    if (manifest.contains("events") && manifest["events"].is_object()) {
        const auto path = resolve(manifest["events"].at("path").get<std::string>());
        if (!std::filesystem::exists(path))
            throw Error(ErrorCode::NotFound, path.string());
        data.events = events_from_csv(read_file(path));
    }
    return data;
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
    if (!std::filesystem::exists(manifest_path))
        throw Error(ErrorCode::NotFound, manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, manifest_path.string() + ": " + e.what());
    }
    return load_dataset(manifest, manifest_path.parent_path());
}

/// Bytes the dataset occupies once written: every series CSV plus events.csv.
inline std::uint64_t serialized_size(const Dataset& data) {
    std::uint64_t total = events_to_csv(data.events).size();
    for (const auto& s : data.series)
        total += series_to_csv(s).size();
    return total;
}

inline Dataset to_dataset(SyntheticDataset synth) {
    return {std::move(synth.series), std::move(synth.events)};
}

} // namespace quenchwatch

#endif // QUENCHWATCH_DATASET_HPP
