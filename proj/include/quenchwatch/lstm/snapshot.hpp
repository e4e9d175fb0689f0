#ifndef QUENCHWATCH_LSTM_SNAPSHOT_HPP
#define QUENCHWATCH_LSTM_SNAPSHOT_HPP

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

#include <json.hpp>

#include "quenchwatch/error.hpp"
#include "quenchwatch/ingest.hpp"
#include "quenchwatch/lstm/gate.hpp"
#include "quenchwatch/lstm/params.hpp"

namespace quenchwatch::lstm {

/// Immutable result of a training run.
struct ModelSnapshot {
    Hyperparameters hyperparameters;
    GateConfig gate_config;
    LstmNetwork network;
    /// z-score statistics the training inputs were normalized with.
    std::optional<NormalizationStats> training_stats;
    /// Median one-step residual over the training windows, in volts.
    std::optional<double> median_training_residual;

    friend bool operator==(const ModelSnapshot&, const ModelSnapshot&) = default;
};

inline constexpr std::string_view snapshot_format = "quenchwatch.model/1";

/// 17 significant digits; reads back to the identical double.
inline std::string encode_real(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

inline double decode_real(std::string_view text) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw Error(ErrorCode::ParseError, "bad real '" + std::string(text) + "'");
    return v;
}

inline void to_json(nlohmann::json& j, const Hyperparameters& hp) {
    j = {{"cell_count", hp.cell_count},   {"layer_count", hp.layer_count},     {"input_window", hp.input_window},
         {"learning_rate", hp.learning_rate}, {"epochs", hp.epochs},           {"batch_size", hp.batch_size},
         {"seed", hp.seed}};
}

/// Every field is required; negative or fractional counts are rejected.
inline void from_json(const nlohmann::json& j, Hyperparameters& hp) {
    if (!j.is_object())
        throw Error(ErrorCode::InvalidArgument, "hyperparameters must be a JSON object");
    auto count = [&](const char* key) -> std::uint64_t {
        if (!j.contains(key) || !j[key].is_number_unsigned())
            throw Error(ErrorCode::InvalidArgument, std::string("hyperparameter '") + key
                                                        + "' must be a non-negative integer");
        return j[key].get<std::uint64_t>();
    };
    hp.cell_count = count("cell_count");
    hp.layer_count = count("layer_count");
    hp.input_window = count("input_window");
    hp.epochs = count("epochs");
    hp.batch_size = count("batch_size");
    hp.seed = count("seed");
    if (!j.contains("learning_rate") || !j["learning_rate"].is_number())
        throw Error(ErrorCode::InvalidArgument, "hyperparameter 'learning_rate' must be a number");
    hp.learning_rate = j["learning_rate"].get<double>();
}

inline void to_json(nlohmann::json& j, const GateConfig& cfg) {
    j = {{"t_low", encode_real(cfg.t_low)},
         {"t_high", encode_real(cfg.t_high)},
         {"slope", encode_real(cfg.slope)},
         {"intercept", encode_real(cfg.intercept)}};
}

inline void from_json(const nlohmann::json& j, GateConfig& cfg) {
    cfg.t_low = decode_real(j.at("t_low").get<std::string>());
    cfg.t_high = decode_real(j.at("t_high").get<std::string>());
    cfg.slope = decode_real(j.at("slope").get<std::string>());
    cfg.intercept = decode_real(j.at("intercept").get<std::string>());
    cfg.validate();
}

inline nlohmann::json snapshot_to_json(const ModelSnapshot& snap) {
    nlohmann::json tensors = nlohmann::json::array();
    snap.network.for_each_tensor([&](const std::string& name, const auto& t) {
        nlohmann::json data = nlohmann::json::array();
        for (Eigen::Index k = 0; k < t.size(); ++k)
            data.push_back(encode_real(t.data()[k]));
        tensors.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"data", std::move(data)}});
    });
    nlohmann::json j = {{"format", snapshot_format},
                        {"hyperparameters", snap.hyperparameters},
                        {"gate_config", snap.gate_config},
                        {"input_size", snap.network.input_size()},
                        {"output_size", snap.network.output_size()},
                        {"tensors", std::move(tensors)}};
    j["training_stats"] = snap.training_stats
                              ? nlohmann::json{{"mean", encode_real(snap.training_stats->mean)},
                                               {"std", encode_real(snap.training_stats->std)}}
                              : nlohmann::json();
    j["median_training_residual"] =
        snap.median_training_residual ? nlohmann::json(encode_real(*snap.median_training_residual)) : nlohmann::json();
    return j;
}

inline ModelSnapshot snapshot_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string()) != snapshot_format)
            throw Error(ErrorCode::ParseError, "not a model snapshot");
        ModelSnapshot snap;
        snap.hyperparameters = j.at("hyperparameters").get<Hyperparameters>();
        snap.gate_config = j.at("gate_config").get<GateConfig>();
        snap.network = LstmNetwork::zeros(j.at("input_size").get<std::size_t>(), snap.hyperparameters.cell_count,
                                          snap.hyperparameters.layer_count, j.at("output_size").get<std::size_t>());
        const auto& tensors = j.at("tensors");
        std::size_t idx = 0;
        snap.network.for_each_tensor([&](const std::string& name, auto& t) {
            if (idx >= tensors.size())
                throw Error(ErrorCode::ShapeMismatch, "snapshot missing tensor " + name);
            const auto& entry = tensors[idx++];
            const auto& data = entry.at("data");
            if (entry.at("name").get<std::string>() != name || entry.at("shape")[0].get<Eigen::Index>() != t.rows()
                || entry.at("shape")[1].get<Eigen::Index>() != t.cols()
                || data.size() != static_cast<std::size_t>(t.size()))
                throw Error(ErrorCode::ShapeMismatch, "snapshot tensor " + name + " has the wrong name or shape");
            for (Eigen::Index k = 0; k < t.size(); ++k)
                t.data()[k] = decode_real(data[static_cast<std::size_t>(k)].template get<std::string>());
        });
        if (idx != tensors.size())
            throw Error(ErrorCode::ShapeMismatch, "snapshot has extra tensors");
        if (const auto& ts = j.value("training_stats", nlohmann::json()); ts.is_object())
            snap.training_stats = NormalizationStats{decode_real(ts.at("mean").get<std::string>()),
                                                     decode_real(ts.at("std").get<std::string>())};
        if (const auto& m = j.value("median_training_residual", nlohmann::json()); m.is_string())
            snap.median_training_residual = decode_real(m.get<std::string>());
        return snap;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("malformed snapshot: ") + e.what());
    }
}

} // namespace quenchwatch::lstm

#endif // QUENCHWATCH_LSTM_SNAPSHOT_HPP
