#include <csignal>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "quenchwatch/dataset.hpp"
#include "quenchwatch/lstm.hpp"
#include "quenchwatch/pipeline.hpp"
#include "quenchwatch/service/http.hpp"
#include "quenchwatch/synthetic.hpp"

using namespace quenchwatch;
using nlohmann::json;

namespace {

int serve(const std::string& host, int port, std::string data_dir, std::size_t workers) {
    if (const char* env = std::getenv("QUENCHWATCH_DATA_DIR"); env && *env)
        data_dir = env;

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::HttpServer server({data_dir, workers});
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    std::cerr << "quenchwatch: serving /v1 on " << host << ":" << port << " (data " << data_dir << ")\n";
    try {
        server.run(host, port);
    } catch (...) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
        throw;
    }
    waiter.join();
    return 0;
}

int gen(const std::string& tier_name, std::uint64_t seed, double scale, const std::string& out,
        std::optional<std::size_t> series_count, std::optional<double> quench_rate) {
    const auto tier = parse_tier(tier_name);
    auto spec = DatasetSpec::for_tier(tier, scale);
    if (series_count)
        spec.series_count = *series_count;
    if (quench_rate)
        spec.quench_rate = *quench_rate;
    const auto data = to_dataset(generate_synthetic(spec, seed));
    const auto manifest = write_dataset(out, data, {tier, seed, scale});
    std::cout << json{{"manifest", (std::filesystem::path(out) / "manifest.json").string()},
                      {"series_count", data.series.size()},
                      {"event_count", data.events.size()},
                      {"bytes", manifest["total_bytes"]}}
                     .dump(2)
              << "\n";
    return 0;
}

int train_cmd(const std::string& manifest, const std::string& hp_file, const std::string& out,
              const std::string& trace_out, std::optional<double> guard_s, std::optional<std::size_t> stride,
              bool quiet) {
    const auto doc = json::parse(read_file(hp_file));
    const bool nested = doc.contains("hyperparameters");
    const auto hp = (nested ? doc["hyperparameters"] : doc).get<lstm::Hyperparameters>();
    auto plan = nested && doc.contains("plan") ? doc["plan"].get<TrainingPlan>() : TrainingPlan{};
    if (guard_s)
        plan.guard_s = *guard_s;
    if (stride)
        plan.stride = *stride;

    const auto data = load_dataset(manifest);
    auto outcome = train_on_dataset(data, hp, plan, {}, [&](std::size_t epoch, double loss) {
        if (!quiet)
            std::cerr << "epoch " << epoch + 1 << "/" << hp.epochs << " loss " << loss << "\n";
    });
    const auto snapshot_text = lstm::snapshot_to_json(outcome.snapshot).dump();
    if (!out.empty())
        write_file(out, snapshot_text);
    if (!trace_out.empty())
        write_file(trace_out, json{{"epoch_loss", outcome.trace.epoch_loss}}.dump() + "\n");
    std::cout << json{{"snapshot_ref", service::sha256_hex(snapshot_text)},
                      {"snapshot", out.empty() ? json() : json(out)},
                      {"epochs", outcome.trace.epoch_loss.size()},
                      {"first_loss", outcome.trace.epoch_loss.empty() ? json() : json(outcome.trace.epoch_loss.front())},
                      {"final_loss", outcome.trace.epoch_loss.empty() ? json() : json(outcome.trace.epoch_loss.back())},
                      {"median_training_residual", *outcome.snapshot.median_training_residual}}
                     .dump(2)
              << "\n";
    return 0;
}

int gradcheck_cmd(const lstm::GradientCheckOptions& opt) {
    const auto report = lstm::gradient_check(opt);
    std::printf("%-8s %14s %8s %8s  %s\n", "tensor", "max rel err", "checked", "skipped", "result");
    for (const auto& t : report.tensors)
        std::printf("%-8s %14.3e %8zu %8zu  %s\n", t.name.c_str(), t.worst_relative_error, t.checked,
                    t.skipped_near_kink, t.passed ? "ok" : "FAIL");
    std::printf("%zu trials, tolerance %.1e: %s\n", report.trials, report.tolerance,
                report.passed ? "PASS" : "FAIL");
    return report.passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quenchwatch: quench precursor detection on magnet voltage series"};
    app.require_subcommand(1);

    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP JSON API");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir = "quenchwatch-data";
    std::size_t workers = 1;
    serve_cmd->add_option("--host", host, "Listen address");
    serve_cmd->add_option("--port", port, "Listen port");
    serve_cmd->add_option("--data-dir", data_dir, "State directory (QUENCHWATCH_DATA_DIR overrides)");
    serve_cmd->add_option("--workers", workers, "Training workers")->check(CLI::PositiveNumber);

    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset");
    std::string tier = "small";
    std::uint64_t seed = 0;
    double scale = default_scale;
    std::string out_dir;
    std::optional<std::size_t> series_count;
    std::optional<double> quench_rate;
    gen_cmd->add_option("--tier", tier, "small | medium | large")->check(CLI::IsMember({"small", "medium", "large"}));
    gen_cmd->add_option("--seed", seed, "Generator seed");
    gen_cmd->add_option("--scale", scale, "Size divisor applied to the tier");
    gen_cmd->add_option("--out", out_dir, "Output directory")->required();
    gen_cmd->add_option("--series-count", series_count, "Override the tier's series count");
    gen_cmd->add_option("--quench-rate", quench_rate, "Expected quench events per series");

    auto* train = app.add_subcommand("train", "Train on a dataset's normal windows");
    std::string manifest, hp_file, snapshot_out, trace_out;
    std::optional<double> guard_s;
    std::optional<std::size_t> stride;
    bool quiet = false;
    train->add_option("--dataset", manifest, "Path to manifest.json")->required();
    train->add_option("--hp-file", hp_file, "Hyperparameter JSON")->required();
    train->add_option("--out", snapshot_out, "Write the model snapshot here");
    train->add_option("--trace-out", trace_out, "Write the per-epoch loss trace here");
    train->add_option("--guard-s", guard_s, "Exclusion half-width around quench events");
    train->add_option("--stride", stride, "Window advance in samples");
    train->add_flag("-q,--quiet", quiet, "No per-epoch progress");

    auto* gc = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
    lstm::GradientCheckOptions opt;
    gc->add_option("--trials", opt.trials);
    gc->add_option("--seed", opt.seed);
    gc->add_option("--inputs", opt.inputs);
    gc->add_option("--cells", opt.cells);
    gc->add_option("--layers", opt.layers);
    gc->add_option("--steps", opt.steps);
    gc->add_option("--tolerance", opt.tolerance);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve_cmd)
            return serve(host, port, data_dir, workers);
        if (*gen_cmd)
            return gen(tier, seed, scale, out_dir, series_count, quench_rate);
        if (*train)
            return train_cmd(manifest, hp_file, snapshot_out, trace_out, guard_s, stride, quiet);
        if (*gc)
            return gradcheck_cmd(opt);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
