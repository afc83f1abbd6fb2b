#include "hmch/error.hpp"
#include "hmch/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Multicontinuum homogenization experiments"};
    app.require_subcommand(1);
    int threads = 0;
    bool no_cache = false;
    std::string out;
    app.add_option("--threads", threads, "worker threads (default: hardware concurrency)")->check(CLI::NonNegativeNumber);
    app.add_flag("--no-cache", no_cache, "ignore the cell-solution cache");
    app.add_option("--out", out, "output directory (overrides the config)");

    std::string config_path;
    auto* run = app.add_subcommand("run", "run the experiment sweep");
    run->add_option("config", config_path, "config file")->required();
    auto* desc = app.add_subcommand("describe", "print the run plan without solving");
    desc->add_option("config", config_path, "config file")->required();
    app.fallthrough();

    CLI11_PARSE(app, argc, argv);

    hmch::ExperimentConfig cfg;
    try {
        cfg = hmch::load_config(config_path);
        if (threads > 0)
            cfg.threads = threads;
        if (no_cache)
            cfg.cache = false;
        if (!out.empty())
            cfg.output = out;
        hmch::validate(cfg);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }

    if (desc->parsed()) {
        hmch::describe(cfg, std::cout);
        return 0;
    }

    try {
        hmch::run_experiment(cfg, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << '\n';
        try {
            std::filesystem::create_directories(cfg.output);
            hmch::write_error_record(cfg.output / "error.json", "run", e.what(), cfg.hash_hex());
        } catch (const std::exception&) {
        }
        return 1;
    }
    return 0;
}
