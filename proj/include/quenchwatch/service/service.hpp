#ifndef QUENCHWATCH_SERVICE_SERVICE_HPP
#define QUENCHWATCH_SERVICE_SERVICE_HPP

#include <algorithm>
#include <charconv>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "quenchwatch/analyzers.hpp"
#include "quenchwatch/dataset.hpp"
#include "quenchwatch/lstm.hpp"
#include "quenchwatch/pipeline.hpp"
#include "quenchwatch/service/store.hpp"
#include "quenchwatch/synthetic.hpp"

namespace quenchwatch::service {

using nlohmann::json;

/// Status code plus JSON body, independent of the transport.
struct Reply {
    int status = 200;
    json body;
};

struct ServiceConfig {
    fs::path data_dir;
    std::size_t workers = 1;
    /// Analyses over more windows than this run in the background.
    std::size_t sync_window_limit = 100;
};

enum class JobStatus { queued, running, done, failed };

NLOHMANN_JSON_SERIALIZE_ENUM(JobStatus, {{JobStatus::queued, "queued"},
                                         {JobStatus::running, "running"},
                                         {JobStatus::done, "done"},
                                         {JobStatus::failed, "failed"}})

struct TrainingJob {
    std::string job_id;
    std::string dataset_id;
    lstm::Hyperparameters hyperparameters;
    TrainingPlan plan;
    JobStatus status = JobStatus::queued;
    std::vector<double> trace;
    std::string created_at;
    std::optional<std::string> error;
    std::optional<std::size_t> divergence_epoch;
    std::optional<std::string> model_id;
};

inline void to_json(json& j, const TrainingJob& job) {
    j = {{"job_id", job.job_id},
         {"dataset_id", job.dataset_id},
         {"hyperparameters", job.hyperparameters},
         {"plan", job.plan},
         {"status", job.status},
         {"trace", job.trace},
         {"created_at", job.created_at},
         {"error", job.error ? json(*job.error) : json()},
         {"divergence_epoch", job.divergence_epoch ? json(*job.divergence_epoch) : json()},
         {"model_id", job.model_id ? json(*job.model_id) : json()}};
}

inline void from_json(const json& j, TrainingJob& job) {
    job.job_id = j.at("job_id").get<std::string>();
    job.dataset_id = j.at("dataset_id").get<std::string>();
    job.hyperparameters = j.at("hyperparameters").get<lstm::Hyperparameters>();
    job.plan = j.at("plan").get<TrainingPlan>();
    job.status = j.at("status").get<JobStatus>();
    job.trace = j.at("trace").get<std::vector<double>>();
    job.created_at = j.value("created_at", std::string());
    job.error = j.value("error", json()).is_string() ? std::optional(j["error"].get<std::string>()) : std::nullopt;
    job.divergence_epoch = j.value("divergence_epoch", json()).is_number()
                               ? std::optional(j["divergence_epoch"].get<std::size_t>())
                               : std::nullopt;
    job.model_id =
        j.value("model_id", json()).is_string() ? std::optional(j["model_id"].get<std::string>()) : std::nullopt;
}

namespace detail {

inline std::size_t parse_index(std::string_view text, std::string_view what) {
    std::size_t value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty())
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " '" + std::string(text) + "' is not an index");
    return value;
}

/// "<dataset_id>.<suffix>" -> (dataset_id, suffix).
inline std::pair<std::string, std::string> split_id(const std::string& id) {
    const auto dot = id.rfind('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == id.size())
        throw Error(ErrorCode::NotFound, "malformed id '" + id + "'");
    return {id.substr(0, dot), id.substr(dot + 1)};
}

inline std::string numbered(const char* prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%06zu", prefix, n);
    return buf;
}

/// Every `factor` consecutive samples collapse to their min and max, in index order.
inline std::vector<std::size_t> decimate_indices(std::span<const double> values, std::size_t from, std::size_t to,
                                                 std::size_t factor) {
    std::vector<std::size_t> out;
    if (factor == 1) {
        for (std::size_t k = from; k < to; ++k)
            out.push_back(k);
        return out;
    }
    for (std::size_t b = from; b < to; b += factor) {
        const std::size_t e = std::min(to, b + factor);
        std::size_t lo = b, hi = b;
        for (std::size_t k = b; k < e; ++k) {
            if (values[k] < values[lo])
                lo = k;
            if (values[k] > values[hi])
                hi = k;
        }
        out.push_back(std::min(lo, hi));
        if (lo != hi)
            out.push_back(std::max(lo, hi));
    }
    return out;
}

struct Interrupted {};

} // namespace detail

class Service {
public:
    explicit Service(ServiceConfig config) : config_(std::move(config)), store_(config_.data_dir) {
        if (config_.workers == 0)
            throw Error(ErrorCode::InvalidArgument, "at least one worker required");
        recover();
        for (std::size_t k = 0; k < config_.workers; ++k)
            workers_.emplace_back([this] { worker_loop(); });
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    ~Service() { shutdown(); }

    /// Stops the workers. A job still training is marked failed; queued jobs
    /// stay queued on disk and resume on the next start.
    void shutdown() {
        {
            std::lock_guard lock(mutex_);
            if (stopping_)
                return;
            stopping_ = true;
        }
        queue_cv_.notify_all();
        for (auto& t : workers_)
            t.join();
        workers_.clear();
        std::vector<std::thread> analyses;
        {
            std::lock_guard lock(mutex_);
            analyses.swap(analysis_threads_);
        }
        for (auto& t : analyses)
            t.join();
    }

    /// Blocks until no job is queued or running.
    void wait_idle() {
        std::unique_lock lock(mutex_);
        idle_cv_.wait(lock, [&] { return queue_.empty() && running_ == 0; });
    }

    const fs::path& data_dir() const noexcept { return store_.root(); }

    // ---- datasets -------------------------------------------------------

    Reply create_dataset(const json& body, const std::string& token = {}) {
        return idempotent("POST /datasets", token, body, [&] { return create_dataset_now(body); });
    }

    json get_dataset(const std::string& id) const {
        std::lock_guard lock(mutex_);
        return dataset_record(id);
    }

    json list_datasets() const {
        std::lock_guard lock(mutex_);
        json out = json::array();
        for (const auto& [id, rec] : datasets_)
            out.push_back({{"dataset_id", id},
                           {"series_count", rec["series_count"]},
                           {"event_count", rec["event_count"]},
                           {"bytes", rec["bytes"]},
                           {"source", rec["source"]}});
        return out;
    }

    /// Samples [from, to) of one series; decimate > 1 keeps min and max per bucket.
    json series(const std::string& series_id, std::optional<std::size_t> from = {},
                std::optional<std::size_t> to = {}, std::size_t decimate = 1) const {
        if (decimate == 0)
            throw Error(ErrorCode::InvalidArgument, "decimate must be at least 1");
        auto [dataset_id, suffix] = detail::split_id(series_id);
        const auto data = dataset(dataset_id);
        const auto k = detail::parse_index(suffix, "series");
        if (k >= data->series.size())
            throw Error(ErrorCode::NotFound, "series '" + series_id + "'");
        const auto& s = data->series[k];
        const std::size_t f = from.value_or(0);
        const std::size_t t = std::min(to.value_or(s.size()), s.size());
        if (f >= t)
            throw Error(ErrorCode::EmptyRange, "range [" + std::to_string(f) + ", " + std::to_string(t)
                                                   + ") of '" + series_id + "' holds no samples");
        const auto idx = detail::decimate_indices(s.values, f, t, decimate);
        std::vector<double> values;
        values.reserve(idx.size());
        for (auto i : idx)
            values.push_back(s.values[i]);
        std::vector<std::int64_t> events;
        for (const auto& e : data->events_for(s.magnet_id))
            events.push_back(e.t_event_ns);
        return {{"series_id", series_id},
                {"magnet_id", s.magnet_id},
                {"t0_ns", s.t0_ns},
                {"dt", s.dt},
                {"samples", s.size()},
                {"from", f},
                {"to", t},
                {"decimate", decimate},
                {"indices", idx},
                {"values", values},
                {"event_times_ns", events}};
    }

    Reply cluster(const std::string& dataset_id, const json& body, const std::string& token = {}) {
        return idempotent("POST /datasets/" + dataset_id + "/cluster", token, body,
                          [&] { return cluster_now(dataset_id, body); });
    }

    // ---- jobs -----------------------------------------------------------

    Reply submit_job(const json& body, const std::string& token = {}) {
        return idempotent("POST /jobs", token, body, [&] { return submit_job_now(body); });
    }

    json get_job(const std::string& id) const {
        std::lock_guard lock(mutex_);
        auto it = jobs_.find(id);
        if (it == jobs_.end())
            throw Error(ErrorCode::NotFound, "job '" + id + "'");
        return it->second;
    }

    json list_jobs() const {
        std::lock_guard lock(mutex_);
        json out = json::array();
        for (const auto& [id, job] : jobs_)
            out.push_back({{"job_id", id},
                           {"dataset_id", job.dataset_id},
                           {"status", job.status},
                           {"epochs_done", job.trace.size()},
                           {"model_id", job.model_id ? json(*job.model_id) : json()}});
        return out;
    }

    // ---- models ---------------------------------------------------------

    json get_model(const std::string& id) const {
        std::lock_guard lock(mutex_);
        auto it = models_.find(id);
        if (it == models_.end())
            throw Error(ErrorCode::NotFound, "model '" + id + "'");
        return it->second;
    }

    json list_models() const {
        std::lock_guard lock(mutex_);
        json out = json::array();
        for (const auto& [id, m] : models_)
            out.push_back(m);
        return out;
    }

    json get_model_snapshot(const std::string& id) const {
        return store_.get_object(get_model(id).at("snapshot_ref").get<std::string>());
    }

    Reply analyze(const std::string& model_id, const json& body, const std::string& token = {}) {
        return idempotent("POST /models/" + model_id + "/analyze", token, body,
                          [&] { return analyze_now(model_id, body); });
    }

    json get_analysis(const std::string& id) const {
        std::lock_guard lock(mutex_);
        auto it = analyses_.find(id);
        if (it == analyses_.end())
            throw Error(ErrorCode::NotFound, "analysis '" + id + "'");
        return it->second;
    }

private:
    // ---- idempotency ----------------------------------------------------

    Reply idempotent(const std::string& scope, const std::string& token, const json& body,
                     const std::function<Reply()>& fn) {
        if (token.empty())
            return fn();
        std::lock_guard serial(idempotency_mutex_);
        const auto key = scope + "\n" + token;
        const auto fingerprint = sha256_hex(scope + "\n" + body.dump());
        {
            std::lock_guard lock(mutex_);
            auto it = idempotency_.find(key);
            if (it != idempotency_.end()) {
                if (it->second.at("fingerprint") != fingerprint)
                    throw Error(ErrorCode::Conflict, "idempotency token '" + token + "' was used for a different request");
                return {it->second.at("status").get<int>(), it->second.at("body")};
            }
        }
        auto reply = fn();
        std::lock_guard lock(mutex_);
        idempotency_[key] = {{"fingerprint", fingerprint}, {"status", reply.status}, {"body", reply.body}};
        json all = json::object();
        for (const auto& [k, v] : idempotency_)
            all[k] = v;
        write_json(store_.idempotency_path(), all);
        return reply;
    }

    // ---- datasets -------------------------------------------------------

    const json& dataset_record(const std::string& id) const {
        auto it = datasets_.find(id);
        if (it == datasets_.end())
            throw Error(ErrorCode::NotFound, "dataset '" + id + "'");
        return it->second;
    }

    std::shared_ptr<const Dataset> dataset(const std::string& id) const {
        std::lock_guard lock(mutex_);
        dataset_record(id);
        auto it = dataset_cache_.find(id);
        if (it != dataset_cache_.end())
            return it->second;
        auto data = std::make_shared<const Dataset>(load_dataset(store_.dataset_dir(id) / "manifest.json"));
        dataset_cache_.emplace(id, data);
        return data;
    }

    Reply create_dataset_now(const json& body) {
        const double pre_s = body.value("pre_s", default_pre_s);
        const double post_s = body.value("post_s", default_post_s);
        if (!(pre_s >= 0.0) || !(post_s >= 0.0))
            throw Error(ErrorCode::InvalidArgument, "pre_s and post_s must be non-negative");

        Dataset data;
        ManifestInfo info;
        json source;
        if (body.contains("synthetic")) {
            const auto& s = body["synthetic"];
            const auto tier = parse_tier(s.value("tier", std::string("small")));
            const auto seed = s.value("seed", std::uint64_t{0});
            const double scale = s.value("scale", default_scale);
            auto spec = DatasetSpec::for_tier(tier, scale);
            spec.series_count = s.value("series_count", spec.series_count);
            spec.quench_rate = s.value("quench_rate", spec.quench_rate);
            data = to_dataset(generate_synthetic(spec, seed));
            info = {tier, seed, scale};
            source = {{"kind", "synthetic"},
                      {"tier", to_string(tier)},
                      {"seed", seed},
                      {"scale", scale},
                      {"series_count", spec.series_count},
                      {"quench_rate", spec.quench_rate}};
        } else if (body.contains("manifest_path") || body.contains("manifest")) {
            try {
                if (body.contains("manifest_path")) {
                    const fs::path path = body["manifest_path"].get<std::string>();
                    data = load_dataset(path);
                    source = {{"kind", "manifest"}, {"path", path.string()}};
                } else {
                    const fs::path base = body.value("base_dir", std::string("."));
                    data = load_dataset(body["manifest"], base);
                    source = {{"kind", "manifest"}, {"base_dir", base.string()}};
                }
            } catch (const Error& e) {
                if (e.code() == ErrorCode::NotFound)
                    throw Error(ErrorCode::InvalidArgument, std::string("manifest references a missing file (") + e.what() + ")");
                throw;
            }
        } else {
            throw Error(ErrorCode::InvalidArgument, "body needs 'synthetic', 'manifest' or 'manifest_path'");
        }
        for (const auto& s : data.series)
            require_valid(s);

        std::string content;
        for (const auto& s : data.series)
            content += s.magnet_id + "\n" + s.circuit_class + "\n" + series_to_csv(s);
        content += events_to_csv(data.events);
        content += "pre_s=" + lstm::encode_real(pre_s) + " post_s=" + lstm::encode_real(post_s);
        const auto id = "ds-" + sha256_hex(content).substr(0, 16);

        {
            std::lock_guard lock(mutex_);
            if (auto it = datasets_.find(id); it != datasets_.end())
                return {200, it->second};
        }

        const auto dir = store_.dataset_dir(id);
        auto staging = dir;
        staging += ".staging";
        fs::remove_all(staging);
        const auto manifest = write_dataset(staging, data, info);
        // Everything downstream sees the persisted bytes, exactly as after a restart.
        const auto stored = load_dataset(staging / "manifest.json");

        json series = json::array();
        json windows = json::array();
        std::size_t skipped = 0;
        for (std::size_t k = 0; k < stored.series.size(); ++k) {
            const auto& s = stored.series[k];
            const auto series_id = id + "." + std::to_string(k);
            series.push_back({{"series_id", series_id},
                              {"magnet_id", s.magnet_id},
                              {"circuit_class", s.circuit_class},
                              {"samples", s.size()},
                              {"t0_ns", s.t0_ns},
                              {"dt", s.dt},
                              {"duration_s", s.duration()}});
            auto extraction = extract_quench_windows(s, stored.events_for(s.magnet_id), pre_s, post_s);
            skipped += extraction.skipped.size();
            for (const auto& w : extraction.windows)
                windows.push_back({{"window_id", id + ".q" + std::to_string(windows.size())},
                                   {"series_id", series_id},
                                   {"magnet_id", s.magnet_id},
                                   {"start_index", w.start_index},
                                   {"length", w.series_slice.size()},
                                   {"t_event_offset", *w.t_event_offset},
                                   {"clamped", w.clamped}});
        }
        json record = {{"dataset_id", id},
                       {"source", source},
                       {"series_count", stored.series.size()},
                       {"event_count", stored.events.size()},
                       {"bytes", manifest["total_bytes"]},
                       {"pre_s", pre_s},
                       {"post_s", post_s},
                       {"series", series},
                       {"quench_windows", windows},
                       {"skipped_events", skipped},
                       {"created_at", utc_now()}};
        write_json(staging / "record.json", record);
        fs::remove_all(dir);
        fs::rename(staging, dir);

        std::lock_guard lock(mutex_);
        datasets_[id] = record;
        dataset_cache_[id] = std::make_shared<const Dataset>(stored);
        return {201, record};
    }

    /// Window ids "<dataset>.q<n>" or {"series_id", "from", "to"} ranges.
    std::vector<LabeledWindow> resolve_windows(const json& selection, std::vector<std::string>& ids) const {
        if (!selection.is_array())
            throw Error(ErrorCode::InvalidArgument, "'windows' must be an array");
        std::vector<LabeledWindow> out;
        for (const auto& item : selection) {
            if (item.is_string()) {
                const auto id = item.get<std::string>();
                auto [dataset_id, suffix] = detail::split_id(id);
                json rec;
                {
                    std::lock_guard lock(mutex_);
                    rec = dataset_record(dataset_id);
                }
                if (suffix.empty() || suffix[0] != 'q')
                    throw Error(ErrorCode::NotFound, "window '" + id + "'");
                const auto n = detail::parse_index(std::string_view(suffix).substr(1), "window");
                const auto& ws = rec["quench_windows"];
                if (n >= ws.size())
                    throw Error(ErrorCode::NotFound, "window '" + id + "'");
                const auto& w = ws[n];
                const auto k = detail::parse_index(detail::split_id(w["series_id"].get<std::string>()).second, "series");
                const auto data = dataset(dataset_id);
                LabeledWindow lw;
                lw.series_slice = slice(data->series[k], w["start_index"].get<std::size_t>(), w["length"].get<std::size_t>());
                lw.contains_quench = true;
                lw.t_event_offset = w["t_event_offset"].get<double>();
                lw.start_index = w["start_index"].get<std::size_t>();
                lw.clamped = w["clamped"].get<bool>();
                out.push_back(std::move(lw));
                ids.push_back(id);
            } else if (item.is_object()) {
                const auto series_id = item.at("series_id").get<std::string>();
                auto [dataset_id, suffix] = detail::split_id(series_id);
                const auto data = dataset(dataset_id);
                const auto k = detail::parse_index(suffix, "series");
                if (k >= data->series.size())
                    throw Error(ErrorCode::NotFound, "series '" + series_id + "'");
                const auto& s = data->series[k];
                const auto f = item.value("from", std::size_t{0});
                const auto t = std::min(item.value("to", s.size()), s.size());
                if (f >= t)
                    throw Error(ErrorCode::EmptyRange, "empty range in '" + series_id + "'");
                LabeledWindow lw;
                lw.series_slice = slice(s, f, t - f);
                lw.start_index = f;
                out.push_back(std::move(lw));
                ids.push_back(series_id + "[" + std::to_string(f) + ":" + std::to_string(t) + "]");
            } else {
                throw Error(ErrorCode::InvalidArgument, "window selection entries are ids or range objects");
            }
        }
        return out;
    }

    Reply cluster_now(const std::string& dataset_id, const json& body) {
        const auto data = dataset(dataset_id);
        json rec;
        {
            std::lock_guard lock(mutex_);
            rec = dataset_record(dataset_id);
        }
        const auto analyzer = body.value("analyzer", std::string("kmeans"));
        const auto params = body.value("parameters", json::object());
        const auto which = body.value("windows", std::string("quench"));

        std::vector<LabeledWindow> windows;
        std::vector<std::string> ids;
        if (which == "quench") {
            json all = json::array();
            for (const auto& w : rec["quench_windows"])
                all.push_back(w["window_id"]);
            windows = resolve_windows(all, ids);
        } else if (which == "normal") {
            const double window_s = body.at("window_s").get<double>();
            const double guard_s = body.value("guard_s", 2.0);
            const double stride_s = body.value("stride_s", window_s);
            for (std::size_t k = 0; k < data->series.size(); ++k) {
                const auto& s = data->series[k];
                for (auto& w : extract_normal_windows(s, data->events_for(s.magnet_id), window_s, guard_s, stride_s)) {
                    ids.push_back(dataset_id + "." + std::to_string(k) + "[" + std::to_string(w.start_index) + ":"
                                  + std::to_string(w.start_index + w.series_slice.size()) + "]");
                    windows.push_back(std::move(w));
                }
            }
        } else {
            throw Error(ErrorCode::InvalidArgument, "windows must be 'quench' or 'normal'");
        }
        const auto result = registry_.create(analyzer, params)->analyze(AnalyzerInput::from_windows(std::move(windows)));
        return {200, {{"dataset_id", dataset_id}, {"window_ids", ids}, {"result", result}}};
    }

    // ---- jobs -----------------------------------------------------------

    void persist(const TrainingJob& job) const { write_json(store_.job_path(job.job_id), job); }

    Reply submit_job_now(const json& body) {
        const auto dataset_id = body.at("dataset_id").get<std::string>();
        {
            std::lock_guard lock(mutex_);
            dataset_record(dataset_id);
        }
        TrainingJob job;
        job.dataset_id = dataset_id;
        job.hyperparameters = body.at("hyperparameters").get<lstm::Hyperparameters>();
        job.hyperparameters.validate();
        job.plan = body.value("plan", json::object()).get<TrainingPlan>();
        job.created_at = utc_now();

        std::lock_guard lock(mutex_);
        job.job_id = detail::numbered("job", next_job_++);
        persist(job);
        jobs_[job.job_id] = job;
        queue_.push_back(job.job_id);
        queue_cv_.notify_one();
        return {202, job};
    }

    void worker_loop() {
        for (;;) {
            std::string id;
            {
                std::unique_lock lock(mutex_);
                queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
                if (stopping_)
                    return;
                id = queue_.front();
                queue_.pop_front();
                ++running_;
                auto& job = jobs_.at(id);
                job.status = JobStatus::running;
                persist(job);
            }
            run_job(id);
            {
                std::lock_guard lock(mutex_);
                --running_;
            }
            idle_cv_.notify_all();
        }
    }

    void finish(const std::string& id, const std::function<void(TrainingJob&)>& update) {
        std::lock_guard lock(mutex_);
        auto& job = jobs_.at(id);
        update(job);
        persist(job);
    }

    void run_job(const std::string& id) {
        TrainingJob job;
        {
            std::lock_guard lock(mutex_);
            job = jobs_.at(id);
        }
        try {
            const auto data = dataset(job.dataset_id);
            auto outcome = train_on_dataset(*data, job.hyperparameters, job.plan, {}, [&](std::size_t, double loss) {
                std::lock_guard lock(mutex_);
                if (stopping_)
                    throw detail::Interrupted{};
                auto& live = jobs_.at(id);
                live.trace.push_back(loss);
                persist(live);
            });
            const auto ref = store_.put_object(lstm::snapshot_to_json(outcome.snapshot));
            const auto model_id = "model-" + id.substr(id.find('-') + 1);
            json entry = {{"model_id", model_id},
                          {"snapshot_ref", ref},
                          {"source_job_id", id},
                          {"dataset_id", job.dataset_id},
                          {"hyperparameters", job.hyperparameters},
                          {"training_stats", {{"mean", outcome.snapshot.training_stats->mean},
                                              {"std", outcome.snapshot.training_stats->std}}},
                          {"median_training_residual", *outcome.snapshot.median_training_residual},
                          {"final_loss", outcome.trace.epoch_loss.empty() ? json() : json(outcome.trace.epoch_loss.back())},
                          {"created_at", utc_now()}};
            write_json(store_.model_path(model_id), entry);
            {
                std::lock_guard lock(mutex_);
                models_[model_id] = entry;
            }
            finish(id, [&](TrainingJob& j) {
                j.status = JobStatus::done;
                j.model_id = model_id;
            });
        } catch (const detail::Interrupted&) {
            finish(id, [](TrainingJob& j) {
                j.status = JobStatus::failed;
                j.error = "interrupted by service shutdown";
            });
        } catch (const lstm::DivergenceDetected& e) {
            finish(id, [&](TrainingJob& j) {
                j.status = JobStatus::failed;
                j.error = e.what();
                j.divergence_epoch = e.epoch();
            });
        } catch (const std::exception& e) {
            finish(id, [&](TrainingJob& j) {
                j.status = JobStatus::failed;
                j.error = e.what();
            });
        }
    }

    // ---- models ---------------------------------------------------------

    std::shared_ptr<const lstm::ModelSnapshot> snapshot(const std::string& model_id) const {
        const auto ref = get_model(model_id).at("snapshot_ref").get<std::string>();
        std::lock_guard lock(mutex_);
        auto it = snapshot_cache_.find(ref);
        if (it != snapshot_cache_.end())
            return it->second;
        auto snap = std::make_shared<const lstm::ModelSnapshot>(lstm::snapshot_from_json(store_.get_object(ref)));
        snapshot_cache_.emplace(ref, snap);
        return snap;
    }

    Reply analyze_now(const std::string& model_id, const json& body) {
        const auto model = snapshot(model_id);
        std::vector<std::string> ids;
        auto windows = resolve_windows(body.value("windows", json::array()), ids);
        const auto t = body.value("threshold", json());
        const double threshold = t.is_number() ? t.get<double>() : default_threshold(*model);

        if (windows.size() <= config_.sync_window_limit) {
            const auto reports = lstm_analyze(windows, *model, threshold, ids);
            return {200, {{"model_id", model_id}, {"threshold", threshold}, {"reports", reports}}};
        }

        std::lock_guard lock(mutex_);
        const auto analysis_id = detail::numbered("analysis", next_analysis_++);
        analyses_[analysis_id] = {{"analysis_id", analysis_id},
                                  {"model_id", model_id},
                                  {"threshold", threshold},
                                  {"status", "running"},
                                  {"window_count", windows.size()},
                                  {"reports", json()}};
        analysis_threads_.emplace_back([this, analysis_id, model, threshold, windows = std::move(windows), ids] {
            json update;
            try {
                update = {{"status", "done"}, {"reports", lstm_analyze(windows, *model, threshold, ids)}};
            } catch (const std::exception& e) {
                update = {{"status", "failed"}, {"error", e.what()}};
            }
            std::lock_guard lock(mutex_);
            analyses_[analysis_id].update(update);
        });
        return {202, analyses_[analysis_id]};
    }

    // ---- restart --------------------------------------------------------

    void recover() {
        for (const auto& entry : fs::directory_iterator(store_.root() / "datasets")) {
            const auto record = entry.path() / "record.json";
            if (entry.is_directory() && fs::exists(record))
                datasets_[entry.path().filename().string()] = read_json(record);
            else if (entry.is_directory())
                fs::remove_all(entry.path()); // half-written staging directory
        }
        for (const auto& entry : fs::directory_iterator(store_.root() / "models"))
            if (entry.path().extension() == ".json")
                models_[entry.path().stem().string()] = read_json(entry.path());

        std::vector<TrainingJob> loaded;
        for (const auto& entry : fs::directory_iterator(store_.root() / "jobs"))
            if (entry.path().extension() == ".json")
                loaded.push_back(read_json(entry.path()).get<TrainingJob>());
        std::sort(loaded.begin(), loaded.end(), [](const auto& a, const auto& b) { return a.job_id < b.job_id; });
        for (auto& job : loaded) {
            const auto n = detail::parse_index(job.job_id.substr(job.job_id.find('-') + 1), "job");
            next_job_ = std::max(next_job_, n + 1);
            if (job.status == JobStatus::running) {
                job.status = JobStatus::failed;
                job.error = "interrupted by service shutdown";
                persist(job);
            } else if (job.status == JobStatus::queued) {
                queue_.push_back(job.job_id);
            }
            jobs_[job.job_id] = std::move(job);
        }
        if (fs::exists(store_.idempotency_path())) {
            const auto saved = read_json(store_.idempotency_path());
            for (const auto& [k, v] : saved.items())
                idempotency_[k] = v;
        }
    }

    ServiceConfig config_;
    Store store_;
    AnalyzerRegistry registry_ = AnalyzerRegistry::with_builtins();

    mutable std::mutex mutex_;
    std::mutex idempotency_mutex_;
    std::condition_variable queue_cv_;
    std::condition_variable idle_cv_;
    bool stopping_ = false;
    std::size_t running_ = 0;
    std::size_t next_job_ = 1;
    std::size_t next_analysis_ = 1;

    std::map<std::string, json> datasets_;
    mutable std::map<std::string, std::shared_ptr<const Dataset>> dataset_cache_;
    std::map<std::string, TrainingJob> jobs_;
    std::deque<std::string> queue_;
    std::map<std::string, json> models_;
    mutable std::map<std::string, std::shared_ptr<const lstm::ModelSnapshot>> snapshot_cache_;
    std::map<std::string, json> analyses_;
    std::map<std::string, json> idempotency_;

    std::vector<std::thread> workers_;
    std::vector<std::thread> analysis_threads_;
};

} // namespace quenchwatch::service

#endif // QUENCHWATCH_SERVICE_SERVICE_HPP
