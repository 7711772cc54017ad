#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedcyte/cli.hpp"

namespace cli = fedcyte::cli;

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator for imbalanced, non-IID multiclass data"};
    app.require_subcommand(1);

    cli::ConfigSource source;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string results_path;

    auto add_common = [&](CLI::App* sub) {
        auto* config = sub->add_option("--config", source.path, "JSON config file");
        auto* preset = sub->add_option("--preset", source.preset, "Built-in config name");
        config->excludes(preset);
        sub->add_option("--out", out_dir, "Output directory")->required();
        sub->add_option("--seed", seed, "Override the master seed");
    };

    auto* generate = app.add_subcommand("generate", "Write synthetic client datasets as CSV");
    add_common(generate);
    auto* run = app.add_subcommand("run", "Run the configured experiments");
    add_common(run);
    auto* report = app.add_subcommand("report", "Render tables from a results document");
    report->add_option("results", results_path, "results.jsonl written by 'run'")->required();
    report->add_option("--out", out_dir, "Write report.md into this directory instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? cli::kOk : cli::kConfigError;
    }

    try {
        if (generate->parsed()) {
            const auto out = cli::cmd_generate(source, out_dir, seed);
            for (const auto& f : out.csv_files) std::cout << f.string() << "\n";
            std::cout << out.manifest.string() << "\n";
        } else if (run->parsed()) {
            const auto out = cli::cmd_run(source, out_dir, seed, cli::thread_cap());
            std::cout << out.results.string() << "\n" << out.report.string() << "\n";
        } else if (report->parsed()) {
            const auto text = cli::cmd_report(results_path);
            if (out_dir.empty()) {
                std::cout << text;
            } else {
                cli::detail::ensure_dir(out_dir);
                fedcyte::write_file_atomic(std::filesystem::path(out_dir) / "report.md", text);
            }
        }
    } catch (const fedcyte::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return cli::kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kRuntimeError;
    }
    return cli::kOk;
}
