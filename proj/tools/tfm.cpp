// tfm: command-line front end for the membrane limit experiments.
//
//   tfm <reduce|envelope|maps|recover|sweep|validate> [--config FILE] [--out FILE]
//       [--seed N] [--threads N]
//
// Exit status: 0 success, 1 numerical failure, 2 bad configuration.

#include <CLI11.hpp>

#include <iostream>
#include <utility>

#include "tfm/cli.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"Thin-film membrane recovery experiments"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    app.set_version_flag("--version", tfm::cli::version);
    app.add_option("--config", config_path, "config document (JSON, comments allowed)");
    app.add_option("--out", out, "output file; summaries go next to it");
    app.add_option("--seed", seed, "random seed, recorded in every header");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    const std::pair<const char*, const char*> subs[] = {
        {"reduce", "reduced bulk and surface densities at the configured matrices"},
        {"envelope", "rank-one envelope chain and QC estimate"},
        {"maps", "tilt-map and corrected-tilt diagnostics per rho"},
        {"recover", "sample the recovery deformation"},
        {"sweep", "energy convergence sweep against the limit"},
        {"validate", "structural checks of the density catalog"},
    };
    for (const auto& [name, help] : subs) app.add_subcommand(name, help);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    tfm::cli::RunResult res;
    try {
        std::string text = "{}";
        fs::path base = fs::current_path();
        if (!config_path.empty()) {
            text = tfm::read_file(config_path);
            base = fs::absolute(config_path).parent_path();
        }
        tfm::cli::RunConfig cfg;
        try {
            cfg = tfm::cli::parse_config(text, base);
        } catch (const tfm::InputError& e) {
            throw tfm::InputError((config_path.empty() ? std::string("config") : config_path) + ": " + e.what());
        }
        cfg.subcommand = app.get_subcommands().front()->get_name();
        if (seed) cfg.seed = *seed;
        cfg.threads = threads;
        cfg.out = out;
        res = tfm::cli::run(cfg);
    } catch (const tfm::InputError& e) {
        std::cerr << "tfm: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "tfm: " << e.what() << "\n";
        return 1;
    }

    try {
        for (const auto& a : res.artifacts) {
            if (out.empty()) {
                std::cout << a.content;
            } else {
                fs::path p = out;
                p += a.suffix;
                tfm::cli::write_atomic(p, a.content);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "tfm: " << e.what() << "\n";
        return 1;
    }
    if (!res.message.empty()) std::cerr << "tfm: " << res.message << (res.message.back() == '\n' ? "" : "\n");
    return res.status;
}
