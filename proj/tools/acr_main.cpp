#include <cstdio>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acr/data.hpp"
#include "acr/harness.hpp"
#include "acr/rng.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out;
    std::string policy;
    std::string seeds;
    std::vector<std::string> sets;

    void attach(CLI::App* cmd) {
        cmd->add_option("config", config_path, "JSON run configuration")->required();
        cmd->add_option("--out", out, "output directory override");
        cmd->add_option("--policy", policy,
                        "buffer policy override (challenging, hard, random, reservoir)");
        cmd->add_option("--seed", seeds, "seed list override, comma separated");
        cmd->add_option("--set", sets, "additional key=value config overrides");
    }

    acr::RunConfig load() const {
        acr::RunConfig config = acr::load_config(config_path);
        if (!policy.empty()) acr::apply_override(config, "policy", policy);
        if (!seeds.empty()) acr::apply_override(config, "seeds", seeds);
        if (!out.empty()) acr::apply_override(config, "out", out);
        for (const std::string& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw std::invalid_argument("--set wants key=value, got '" + kv + "'");
            }
            acr::apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
        }
        return config;
    }
};

void print_metric(const char* name, const acr::MetricStats& stats) {
    std::printf("%-8s %8.4f +/- %.4f\n", name, stats.mean, stats.stddev);
}

int do_run(const CommonFlags& flags) {
    const acr::RunConfig config = flags.load();
    const acr::ExperimentResult result = acr::run_experiment(config);
    std::printf("policy %s, %zu seed(s) -> %s\n", acr::policy_name(config.policy).c_str(),
                config.seeds.size(), config.out_dir.c_str());
    print_metric("ACC_iid", result.acc_iid);
    print_metric("BWT_iid", result.bwt_iid);
    if (!config.corruptions.empty()) {
        print_metric("ACC_ood", result.acc_ood);
        print_metric("BWT_ood", result.bwt_ood);
        std::printf("iid -> ood accuracy drop: %.4f\n",
                    result.acc_iid.mean - result.acc_ood.mean);
    }
    return 0;
}

int do_sweep(const CommonFlags& flags, const std::string& param,
             const std::string& values_text) {
    const acr::RunConfig config = flags.load();
    const std::vector<std::string> values = acr::parse_sweep_values(values_text);
    const std::vector<acr::SummaryRow> rows = acr::run_sweep(config, param, values);
    std::printf("swept %s over %zu value(s), %zu summary rows -> %s/sweep.csv\n",
                param.c_str(), values.size(), rows.size(), config.out_dir.c_str());
    return 0;
}

int do_corrupt(const std::string& stream_dir, const std::string& spec_text,
               std::uint32_t seed, const std::string& config_path) {
    const acr::CorruptionSpec spec = acr::parse_corruption(spec_text);
    acr::TaskStream stream;
    try {
        stream = acr::load_stream_cache(stream_dir);
    } catch (const std::exception&) {
        if (config_path.empty()) throw;
        stream = acr::load_config(config_path).stream.build(seed);
        acr::cache_stream(stream, stream_dir);
        std::printf("cached stream -> %s\n", stream_dir.c_str());
    }
    const std::string label = acr::corruption_label(spec);
    std::mt19937 rng = acr::seeded_rng(seed, "corrupt-" + label);
    for (const acr::Task& task : stream.tasks) {
        const std::vector<acr::Sample> noisy =
                acr::corrupt(task.test, spec, stream.side, rng);
        const std::string path = stream_dir + "/task" + std::to_string(task.id) +
                                 "_test_" + label + ".bin";
        acr::write_samples(path, noisy, stream.dim, stream.side);
        std::printf("wrote %s (%zu samples)\n", path.c_str(), noisy.size());
    }
    return 0;
}

int do_gradcheck(std::size_t configurations, std::uint32_t seed) {
    const double worst = acr::gradcheck_max_error(configurations, seed);
    std::printf("max relative gradient error over %zu configurations: %.3g\n",
                configurations, worst);
    if (worst < 1e-4) {
        std::printf("PASS (tolerance 1e-4)\n");
        return 0;
    }
    std::printf("FAIL (tolerance 1e-4)\n");
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Replay-based continual learning on synthetic task streams"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    CLI::App* cmd_run = app.add_subcommand("run", "Train and evaluate one configuration");
    run_flags.attach(cmd_run);

    CommonFlags sweep_flags;
    std::string sweep_param, sweep_values;
    CLI::App* cmd_sweep =
            app.add_subcommand("sweep", "Repeat the run across values of one config key");
    sweep_flags.attach(cmd_sweep);
    cmd_sweep->add_option("--param", sweep_param, "config key to vary, e.g. E or tau")
            ->required();
    cmd_sweep->add_option("--values", sweep_values, "comma list or lo..hi range")
            ->required();

    std::string corrupt_dir, corrupt_spec;
    std::uint32_t corrupt_seed = 0;
    CLI::App* cmd_corrupt = app.add_subcommand(
            "corrupt", "Write corrupted test sets for a cached image stream");
    cmd_corrupt->add_option("stream", corrupt_dir, "stream cache directory")->required();
    cmd_corrupt->add_option("spec", corrupt_spec, "corruption as kind:severity")
            ->required();
    cmd_corrupt->add_option("--seed", corrupt_seed, "noise seed");
    std::string corrupt_config;
    cmd_corrupt->add_option("--config", corrupt_config,
                            "config whose stream to generate and cache when the "
                            "directory holds none");

    std::string report_dir;
    CLI::App* cmd_report =
            app.add_subcommand("report", "Tabulate the aggregate rows of summary.csv files");
    cmd_report->add_option("dir", report_dir, "directory tree holding run outputs")
            ->required();

    std::size_t gradcheck_configs = 20;
    std::uint32_t gradcheck_seed = 0;
    CLI::App* cmd_gradcheck = app.add_subcommand(
            "gradcheck", "Compare backpropagation against finite differences");
    cmd_gradcheck->add_option("--configs", gradcheck_configs,
                              "random configurations to try");
    cmd_gradcheck->add_option("--seed", gradcheck_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_run) return do_run(run_flags);
        if (*cmd_sweep) return do_sweep(sweep_flags, sweep_param, sweep_values);
        if (*cmd_corrupt) {
            return do_corrupt(corrupt_dir, corrupt_spec, corrupt_seed, corrupt_config);
        }
        if (*cmd_report) {
            std::cout << acr::report_table(report_dir);
            return 0;
        }
        if (*cmd_gradcheck) return do_gradcheck(gradcheck_configs, gradcheck_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
