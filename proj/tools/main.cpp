// latdet command-line driver: Monte Carlo detector comparisons (`run`) and
// complexity-bound reports (`bounds`).

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "latdet/latdet.hpp"

namespace {

struct CommonArgs {
    std::optional<std::string> config_path;
    std::optional<std::string> snr_text;
    std::optional<std::uint64_t> trials;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> detectors_text;
    std::optional<std::string> ordering_text;
};

void add_common_flags(CLI::App& cmd, CommonArgs& args) {
    cmd.add_option("--config", args.config_path, "Config file (key = value lines, # comments)");
    cmd.add_option("--snr", args.snr_text, "Comma-separated SNR grid in dB (inf allowed)");
    cmd.add_option("--trials", args.trials, "Monte Carlo trials per SNR point");
    cmd.add_option("--seed", args.seed, "Master seed for the reproducible RNG tree");
    cmd.add_option("--detectors", args.detectors_text,
                   "Comma-separated subset of babai,ml,qrdm,sd,ulbc_paper,ulbc_strict");
    cmd.add_option("--ordering", args.ordering_text, "Column ordering of the QR step")
        ->check(CLI::IsMember({"plain", "sorted"}));
}

latdet::SimConfig build_config(const CommonArgs& args) {
    latdet::CliOverrides overrides;
    if (args.snr_text) overrides.snr_grid = latdet::parse_snr_list(*args.snr_text);
    if (args.trials) overrides.trials_per_snr = *args.trials;
    if (args.seed) overrides.master_seed = *args.seed;
    if (args.detectors_text) overrides.detectors = latdet::parse_detector_list(*args.detectors_text);
    if (args.ordering_text) overrides.ordering = latdet::ordering_from_name(*args.ordering_text);
    return latdet::load_config(args.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MIMO lattice detection Monte Carlo driver"};
    app.require_subcommand(1);

    CommonArgs run_args;
    std::string out_path = "results.csv";
    int threads = 0;
    CLI::App* run = app.add_subcommand("run", "Run the Monte Carlo sweep and write a CSV");
    add_common_flags(*run, run_args);
    run->add_option("--out", out_path, "Output CSV path")->capture_default_str();
    run->add_option("--threads", threads,
                    "Worker threads (0 = hardware concurrency); results do not depend on this");

    CommonArgs bounds_args;
    CLI::App* bounds = app.add_subcommand("bounds", "Print the node-count bounds for a schedule");
    add_common_flags(*bounds, bounds_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const latdet::SimConfig config = build_config(run_args);
            int n_threads = threads;
            if (n_threads <= 0) {
                n_threads = static_cast<int>(std::thread::hardware_concurrency());
                if (n_threads < 1) n_threads = 1;
            }
            const latdet::ExperimentStats stats = latdet::run_experiment(config, n_threads);
            latdet::write_csv_file(stats, out_path);
            latdet::write_summary(stats, std::cout);
            std::cout << "wrote " << out_path << "\n";
        } else {
            const latdet::SimConfig config = build_config(bounds_args);
            const latdet::PamAlphabet alphabet = latdet::make_alphabet(config.constellation_size);
            const latdet::MSchedule schedule = config.make_schedule(alphabet);
            const latdet::ComplexityBounds b =
                latdet::complexity_bounds(schedule, config.n_s(), alphabet);
            std::cout << latdet::format_bounds(b);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
