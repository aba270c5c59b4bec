#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "crn/experiment.hpp"

namespace ex = crn::experiment;

namespace {

ex::CampaignConfig base_config(const std::string& path) {
    return path.empty() ? ex::CampaignConfig{} : ex::load_config(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cognitive radar network simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> policies;
    std::vector<double> latencies;
    std::optional<int> replicates, epochs, threads;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "JSON campaign config")->check(CLI::ExistingFile);
        cmd->add_option("-o,--out", out_dir, "Output directory (overrides config)");
        cmd->add_option("-s,--seed", seed, "Master seed override");
    };

    auto* run = app.add_subcommand("run", "Run a campaign and write figure CSVs");
    add_common(run);
    run->add_option("-p,--policy", policies, "Policy filter (RadarOnly, RandomP, Centralized, Distributed)");
    run->add_option("-l,--latency", latencies, "Latency sigma list for the Centralized sweep");
    run->add_option("-r,--replicates", replicates, "Replicate count override")->check(CLI::PositiveNumber);
    run->add_option("-e,--epochs", epochs, "Epoch count override")->check(CLI::PositiveNumber);
    run->add_option("-j,--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

    auto* sweep = app.add_subcommand("sweep-link", "Write ESM SNR and intercept-range curves");
    add_common(sweep);

    auto* inspect = app.add_subcommand("inspect", "Dump the trace of one replicate");
    add_common(inspect);
    std::string inspect_policy = "Distributed";
    double inspect_latency = 0.0;
    int inspect_replicate = 0;
    inspect->add_option("-p,--policy", inspect_policy, "Policy to trace");
    inspect->add_option("-l,--latency", inspect_latency, "Latency sigma");
    inspect->add_option("-r,--replicate", inspect_replicate, "Replicate index")->check(CLI::NonNegativeNumber);
    inspect->add_option("-e,--epochs", epochs, "Epoch count override")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        auto config = base_config(config_path);
        if (seed) config.master_seed = *seed;
        if (!out_dir.empty()) config.output_dir = out_dir;
        if (epochs) config.epochs = *epochs;

        if (run->parsed()) {
            if (!policies.empty()) {
                config.policies.clear();
                for (const auto& p : policies) config.policies.push_back(ex::policy_from_name(p));
            }
            if (!latencies.empty()) config.latency_sweep = latencies;
            if (replicates) config.replicates = *replicates;
            if (threads) config.threads = *threads;
            config.validate();
            const auto start = std::chrono::steady_clock::now();
            const auto report = ex::run_campaign(config);
            ex::write_campaign_outputs(report, config.output_dir);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::cout << "wrote " << config.output_dir << " (" << report.results.size() << " replicate runs, " << secs
                      << " s)\n";
            for (const auto& spec : config.runs()) {
                double util = 0.0;
                std::vector<double> medians;
                const auto reps = report.of(spec);
                for (const auto* r : reps) util += r->radar_utilization(), medians.push_back(r->median_error());
                std::sort(medians.begin(), medians.end());
                std::cout << "  " << spec.label() << ": utilization " << util / reps.size() << ", median of medians "
                          << medians[medians.size() / 2] << " m\n";
            }
        } else if (sweep->parsed()) {
            ex::write_link_sweep(config, config.output_dir);
            std::cout << "wrote " << config.output_dir << '\n';
        } else if (inspect->parsed()) {
            config.validate();
            std::filesystem::create_directories(config.output_dir);
            const std::filesystem::path dir(config.output_dir);
            std::ofstream decisions(dir / "decisions.csv"), tracks(dir / "tracks.csv"), truth(dir / "truth.csv");
            if (!decisions || !tracks || !truth) throw std::runtime_error("cannot write to " + config.output_dir);
            decisions << "step,node,mode,policy\n";
            tracks << "step,node,track,x,y,vx,vy,class,error_m\n";
            truth << "epoch,";
            crn::scene::write_snapshot_header(truth);
            ex::TraceSink sink{&decisions, &tracks, &truth};
            const ex::RunSpec spec{ex::policy_from_name(inspect_policy), inspect_latency};
            const auto family = ex::replicate_family(config, inspect_replicate);
            const auto rep = ex::run_replicate(config, family, spec, inspect_replicate, &sink);
            std::cout << spec.label() << " replicate " << inspect_replicate << ": utilization " << rep.radar_utilization()
                      << ", median error " << rep.median_error() << " m\n";
            for (const auto& e : rep.epochs) {
                std::cout << "  epoch " << e.epoch << ": nodes " << e.node_count << ", targets " << e.target_count
                          << ", radar " << e.radar_utilization << ", errors " << e.tracking_errors.size() << ", classes "
                          << e.class_count << ", formation "
                          << (e.formation_accuracy ? std::to_string(*e.formation_accuracy) : std::string("-"))
                          << ", association " << e.association_accuracy << " (" << e.association_events << ")\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
