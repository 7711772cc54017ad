#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "orchestrator.hpp"
#include "parallel.hpp"
#include "report.hpp"

namespace fedcyte::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3 };

/// Config source for generate/run: a file or a preset name, never both.
struct ConfigSource {
    std::string path;
    std::string preset;
};

/// Worker cap from FEDCYTE_THREADS, falling back to the hardware thread count.
inline std::size_t thread_cap() {
    if (const char* env = std::getenv("FEDCYTE_THREADS")) {
        char* end = nullptr;
        const auto v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0' || v == 0)
            throw ConfigError("FEDCYTE_THREADS must be a positive integer, got '" + std::string(env) + "'");
        return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

inline json load_source(const ConfigSource& src, json (*preset)(const std::string&)) {
    if (src.path.empty() == src.preset.empty()) throw ConfigError("give exactly one of --config or --preset");
    return src.path.empty() ? preset(src.preset) : read_json_file(src.path);
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw DataError("cannot create output directory '" + dir.string() + "'");
}

} // namespace detail

struct GenerateOutput {
    std::vector<std::filesystem::path> csv_files;
    std::filesystem::path manifest;
};

/// Writes <out>/<profile>.csv for every profile plus <out>/manifest.json.
inline GenerateOutput cmd_generate(const ConfigSource& src, const std::filesystem::path& out_dir,
                                   std::optional<std::uint64_t> seed = {}) {
    const auto g = parse_generate_config(detail::load_source(src, generate_preset), seed);
    const auto datasets = generate_synthetic(g.profiles, g.dim, g.class_sep, g.seed, g.class_names);
    detail::ensure_dir(out_dir);
    GenerateOutput out;
    json manifest = to_json(g);
    manifest["files"] = json::array();
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const auto file = out_dir / (g.profiles[i].name + ".csv");
        write_file_atomic(file, to_csv(datasets[i]));
        out.csv_files.push_back(file);
        manifest["files"].push_back(g.profiles[i].name + ".csv");
    }
    out.manifest = out_dir / "manifest.json";
    write_file_atomic(out.manifest, manifest.dump(2) + "\n");
    return out;
}

struct RunOutput {
    std::filesystem::path results;
    std::filesystem::path report;
    std::vector<json> records;
};

/**
 * Runs every experiment of the config and writes <out>/results.jsonl and
 * <out>/report.md. Experiments may run concurrently (up to `threads`
 * workers); records are always ordered by experiment index.
 */
inline RunOutput cmd_run(const ConfigSource& src, const std::filesystem::path& out_dir,
                         std::optional<std::uint64_t> seed = {}, std::size_t threads = 1) {
    const std::filesystem::path base = src.path.empty() ? std::filesystem::path{}
                                                         : std::filesystem::path(src.path).parent_path();
    auto rc = parse_run_config(detail::load_source(src, run_preset), base, seed);

    std::vector<json> records(rc.experiments.size());
    if (!rc.experiments.empty()) {
        // Every experiment shares the data section, so load it once.
        const auto data = load_experiment_data(rc.experiments.front());
        for (auto& e : rc.experiments) resolve_model_shape(e, data);
        const std::size_t outer = std::min(threads, rc.experiments.size());
        const std::size_t inner = std::max<std::size_t>(1, threads / std::max<std::size_t>(1, outer));
        parallel_for(rc.experiments.size(), outer, [&](std::size_t i) {
            RunOptions opts;
            opts.threads = inner;
            const auto runs = run_experiment(rc.experiments[i], data, opts);
            records[i] = experiment_record(i, rc.experiments[i], data.clients.front().class_names(), runs);
        });
    }
    detail::ensure_dir(out_dir);
    RunOutput out{out_dir / "results.jsonl", out_dir / "report.md", std::move(records)};
    write_file_atomic(out.results, results_document(out.records));
    write_file_atomic(out.report, render_report(out.records));
    return out;
}

/// Renders the tables of a results document.
inline std::string cmd_report(const std::filesystem::path& results_path) {
    return render_report(parse_results_document(read_text_file(results_path)));
}

} // namespace fedcyte::cli
