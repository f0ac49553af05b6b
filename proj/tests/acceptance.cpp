// Release gate for the experiment suite. Each numbered check prints one
// PASS or FAIL line with its measured values; the exit status is zero
// only when every check passes. Tolerances and budgets live right next
// to the comparisons they guard.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "acr/buffer.hpp"
#include "acr/confidence.hpp"
#include "acr/data.hpp"
#include "acr/evaluate.hpp"
#include "acr/harness.hpp"
#include "acr/model.hpp"
#include "acr/rng.hpp"
#include "acr/tensor.hpp"

namespace fs = std::filesystem;
using namespace acr;

namespace {

int failures = 0;

void report(int number, const char* name, bool pass, const std::string& detail) {
    std::printf("check %2d %s  %s (%s)\n", number, pass ? "PASS" : "FAIL", name,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string format(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    char buffer[512];
    std::vsnprintf(buffer, sizeof buffer, fmt, args);
    va_end(args);
    return buffer;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

// 1. Backprop through the encoder and proxy loss against central finite
// differences.
void check_gradients() {
    const auto start = std::chrono::steady_clock::now();
    const double err = gradcheck_max_error(20, 1);
    const double elapsed = seconds_since(start);
    report(1, "autodiff matches finite differences", err < 1e-4 && elapsed < 10.0,
           format("max rel err %.3g vs 1e-4, %.1f s vs 10 s", err, elapsed));
}

// 2. With unit temperature and the candidate set equal to every known
// class, the contrastive loss is softmax cross-entropy.
void check_loss_equivalence() {
    std::mt19937 rng = seeded_rng(2, "loss-oracle");
    std::normal_distribution<double> gauss(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 7;
        const std::size_t dim = 2 + rng() % 5;
        const std::size_t classes = 2 + rng() % 5;
        std::vector<double> z(n * dim);
        std::vector<double> w(classes * dim);
        for (double& v : z) v = gauss(rng);
        for (double& v : w) v = gauss(rng);
        std::vector<std::size_t> labels(n);
        for (std::size_t& label : labels) label = rng() % classes;
        std::vector<std::size_t> all_classes(classes);
        std::iota(all_classes.begin(), all_classes.end(), 0);
        const double contrastive =
                pcl_loss(Tensor::from_values({n, dim}, z), labels,
                         Tensor::from_values({classes, dim}, w), 1.0, all_classes)
                        .value();
        const double softmax = ce_loss(Tensor::from_values({n, dim}, z), labels,
                                       Tensor::from_values({classes, dim}, w))
                                       .value();
        worst = std::max(worst, std::fabs(contrastive - softmax));
    }
    report(2, "unit-temperature loss equals cross-entropy", worst < 1e-12,
           format("max abs diff %.3g vs 1e-12 over 100 batches", worst));
}

// 3. The ledger's streaming variance against a naive two-pass variance,
// plus the hard bound for values in [0, 1].
void check_variance_oracle() {
    std::mt19937 rng = seeded_rng(3, "variance-oracle");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double worst = 0.0;
    bool in_range = true;
    for (int trial = 0; trial < 10000; ++trial) {
        double gammas[5];
        ConfidenceLedger ledger(5, 0);
        for (std::size_t e = 0; e < 5; ++e) {
            gammas[e] = u01(rng);
            ledger.record(7, e + 1, {gammas[e], 1.0 - gammas[e]}, 0);
        }
        const double got = ledger.variance(7);
        const double mean = (gammas[0] + gammas[1] + gammas[2] + gammas[3] + gammas[4]) / 5.0;
        double expected = 0.0;
        for (double g : gammas) expected += (g - mean) * (g - mean);
        expected /= 5.0;
        worst = std::max(worst, std::fabs(got - expected));
        in_range = in_range && got >= 0.0 && got <= 0.25;
    }
    report(3, "confidence variance matches two-pass formula", worst < 1e-12 && in_range,
           format("max abs diff %.3g vs 1e-12 over 10000 sequences, bounds %s", worst,
                  in_range ? "held" : "violated"));
}

// 4. Balanced pruning holds the buffer at zero dispersion after every
// task when capacity divides evenly; plain reservoir storage does not.
void check_balance() {
    const auto start = std::chrono::steady_clock::now();
    RunConfig cfg;
    cfg.stream.kind = InputKind::Vector;
    cfg.stream.tasks = 5;
    cfg.stream.classes_per_task = 4;
    cfg.stream.samples_per_class = 50;
    cfg.stream.dim = 16;
    cfg.stream.margin = 3.0;
    cfg.policy = BufferPolicy::Challenging;
    cfg.buffer_size = 240;
    cfg.batch = 16;
    cfg.epochs = 6;
    cfg.confidence_epochs = 5;
    cfg.hidden = {32};
    cfg.embed_dim = 16;
    cfg.seeds = {0};

    const TaskStream stream = cfg.stream.build(0);
    Trainer trainer(cfg, 0, stream);
    bool balanced = true;
    for (std::size_t t = 0; t < cfg.stream.tasks; ++t) {
        trainer.train_task(t);
        balanced = balanced && trainer.buffer().cv_tasks() == 0.0 &&
                   trainer.buffer().cv_classes() == 0.0;
    }

    int skewed = 0;
    for (std::uint32_t seed = 0; seed < 5; ++seed) {
        RunConfig rcfg = cfg;
        rcfg.policy = BufferPolicy::Reservoir;
        rcfg.seeds = {seed};
        const TaskStream rstream = rcfg.stream.build(seed);
        Trainer reservoir(rcfg, seed, rstream);
        for (std::size_t t = 0; t < rcfg.stream.tasks; ++t) reservoir.train_task(t);
        if (reservoir.buffer().cv_classes() > 0.0) ++skewed;
    }
    const double elapsed = seconds_since(start);
    report(4, "balanced policies hold CV at zero, reservoir drifts",
           balanced && skewed >= 4 && elapsed < 120.0,
           format("balanced CV %s at every boundary, reservoir class CV > 0 in %d/5 "
                  "seeds vs 4, %.1f s vs 120 s",
                  balanced ? "0.00" : "nonzero", skewed, elapsed));
}

// 5. Streaming 1000 items into 100 slots keeps each item with frequency
// 1/10 across repeated trials.
void check_reservoir_uniformity() {
    std::mt19937 rng = seeded_rng(5, "retention");
    const std::size_t stream_len = 1000;
    const std::size_t capacity = 100;
    const int trials = 20000;
    std::vector<std::uint32_t> kept(stream_len, 0);
    Sample sample;
    sample.features = {0.0};
    for (int trial = 0; trial < trials; ++trial) {
        ReplayBuffer buffer(capacity, BufferPolicy::Reservoir);
        for (std::size_t i = 0; i < stream_len; ++i) {
            sample.id = i;
            buffer.reservoir_insert(rng, sample);
        }
        for (const Sample* s : buffer.all_samples()) ++kept[s->id];
    }
    double lo = 1.0;
    double hi = 0.0;
    for (std::uint32_t count : kept) {
        const double rate = static_cast<double>(count) / trials;
        lo = std::min(lo, rate);
        hi = std::max(hi, rate);
    }
    const bool pass = lo >= 0.09 && hi <= 0.11;
    report(5, "reservoir retention is uniform", pass,
           format("per-item retention in [%.4f, %.4f] vs [0.09, 0.11]", lo, hi));
}

// 6. The two summary metrics on a worked two-task example.
void check_metrics() {
    AccuracyMatrix matrix(2);
    matrix.set(0, 0, 0.9);
    matrix.set(1, 0, 0.6);
    matrix.set(1, 1, 0.8);
    const double a = acc(matrix);
    const auto b = bwt(matrix);
    const bool pass = std::fabs(a - 0.7) < 1e-15 && b.has_value() &&
                      std::fabs(*b - (-0.3)) < 1e-15;
    report(6, "accuracy and transfer formulas", pass,
           format("ACC %.17g vs 0.7, BWT %.17g vs -0.3, tol 1e-15", a,
                  b ? *b : std::nan("")));
}

// 7 and 8 share one experiment: every policy over the same five seeds on
// the default image stream, with the corruption grid enabled.
void check_ordering_and_ood(const fs::path& root) {
    const auto start = std::chrono::steady_clock::now();
    RunConfig base;
    base.seeds = {0, 1, 2, 3, 4};
    for (const char* kind : {"gaussian", "shot", "impulse", "defocus", "pixelate"}) {
        for (int severity : {1, 3, 5}) {
            base.corruptions.push_back(
                    parse_corruption(std::string(kind) + ":" + std::to_string(severity)));
        }
    }

    std::map<BufferPolicy, ExperimentResult> results;
    for (BufferPolicy policy : {BufferPolicy::Challenging, BufferPolicy::RandomBalanced,
                                BufferPolicy::Reservoir, BufferPolicy::Hard}) {
        RunConfig cfg = base;
        cfg.policy = policy;
        cfg.out_dir = (root / "policies" / policy_name(policy)).string();
        results.emplace(policy, run_experiment(cfg));
    }
    const double elapsed = seconds_since(start);

    const double ch = results.at(BufferPolicy::Challenging).acc_iid.mean;
    const double rnd = results.at(BufferPolicy::RandomBalanced).acc_iid.mean;
    const double res = results.at(BufferPolicy::Reservoir).acc_iid.mean;
    const double hard = results.at(BufferPolicy::Hard).acc_iid.mean;
    const bool ordered = ch > rnd && rnd > res && res > hard;
    const bool margin = ch - hard >= 0.03;
    report(7, "policy ordering on the default image stream",
           ordered && margin && elapsed < 900.0,
           format("mean ACC challenging %.4f > random %.4f > reservoir %.4f > hard "
                  "%.4f, top-to-bottom margin %.1f points vs 3, %.0f s vs 900 s",
                  ch, rnd, res, hard, (ch - hard) * 100.0, elapsed));

    const double ch_ood = results.at(BufferPolicy::Challenging).acc_ood.mean;
    const double res_ood = results.at(BufferPolicy::Reservoir).acc_ood.mean;
    report(8, "corrupted-set advantage over reservoir", ch_ood > res_ood,
           format("challenging iid %.4f -> ood %.4f (drop %.4f); reservoir iid %.4f "
                  "-> ood %.4f (drop %.4f)",
                  ch, ch_ood, ch - ch_ood, res, res_ood, res - res_ood));
}

// 9. Repeating a run with the same config and seeds reproduces
// summary.csv byte for byte. Goes through the command line driver when
// its path is handed in, otherwise through the library entry point.
void check_determinism(const fs::path& root, const std::string& cli) {
    RunConfig cfg;
    cfg.stream.side = 8;
    cfg.stream.samples_per_class = 10;
    cfg.stream.tasks = 2;
    cfg.stream.classes_per_task = 2;
    cfg.stream.jitter = 0.5;
    cfg.stream.outlier_fraction = 0.1;
    cfg.buffer_size = 8;
    cfg.batch = 8;
    cfg.epochs = 2;
    cfg.confidence_epochs = 2;
    cfg.tau = 0.5;
    cfg.hidden = {8};
    cfg.embed_dim = 4;
    cfg.seeds = {0, 1};
    cfg.corruptions = {parse_corruption("gaussian:3")};

    const fs::path first = root / "repeat" / "first";
    const fs::path second = root / "repeat" / "second";
    bool ran = true;
    if (!cli.empty()) {
        const fs::path config_path = root / "repeat" / "config.json";
        fs::create_directories(config_path.parent_path());
        std::ofstream(config_path) << config_to_json_text(cfg);
        const std::string base =
                "\"" + cli + "\" run \"" + config_path.string() + "\" --out \"";
        ran = std::system((base + first.string() + "\" >/dev/null 2>&1").c_str()) == 0 &&
              std::system((base + second.string() + "\" >/dev/null 2>&1").c_str()) == 0;
    } else {
        cfg.out_dir = first.string();
        run_experiment(cfg);
        cfg.out_dir = second.string();
        run_experiment(cfg);
    }
    const std::string a = read_file(first / "summary.csv");
    const std::string b = read_file(second / "summary.csv");
    const bool pass = ran && !a.empty() && a == b;
    report(9, "repeated runs are byte-identical", pass,
           format("summary.csv %zu bytes vs %zu, %s driver", a.size(), b.size(),
                  cli.empty() ? "library" : "command line"));
}

// 10. Additive gaussian noise on constant mid-gray images lands at the
// configured per-pixel variance for every severity.
void check_corruption_moment() {
    const std::size_t side = 10;
    std::vector<Sample> constant(200);
    for (std::size_t i = 0; i < constant.size(); ++i) {
        constant[i].id = i;
        constant[i].features.assign(side * side, 0.5);
    }
    const SeverityTable table;
    double worst_rel = 0.0;
    for (int severity = 1; severity <= 5; ++severity) {
        const CorruptionSpec spec =
                parse_corruption("gaussian:" + std::to_string(severity));
        std::mt19937 rng = seeded_rng(10, "corrupt-" + corruption_label(spec));
        const std::vector<Sample> noisy = corrupt(constant, spec, side, rng);
        double sum = 0.0;
        double sum_sq = 0.0;
        std::size_t count = 0;
        for (const Sample& s : noisy) {
            for (double v : s.features) {
                sum += v;
                sum_sq += v * v;
                ++count;
            }
        }
        const double mean = sum / static_cast<double>(count);
        const double var = sum_sq / static_cast<double>(count) - mean * mean;
        const double sigma = table.gaussian_sigma[static_cast<std::size_t>(severity - 1)];
        const double want = sigma * sigma;
        worst_rel = std::max(worst_rel, std::fabs(var - want) / want);
    }
    report(10, "gaussian corruption hits its configured variance", worst_rel <= 0.10,
           format("worst relative variance error %.3f vs 0.10 across severities 1-5",
                  worst_rel));
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    const fs::path root =
            fs::temp_directory_path() / ("acr_acceptance_" + std::to_string(getpid()));
    fs::create_directories(root);

    check_gradients();
    check_loss_equivalence();
    check_variance_oracle();
    check_balance();
    check_reservoir_uniformity();
    check_metrics();
    check_ordering_and_ood(root);
    check_determinism(root, cli);
    check_corruption_moment();

    if (failures == 0) {
        fs::remove_all(root);
        std::printf("all checks passed\n");
        return 0;
    }
    std::printf("%d check(s) failed, artifacts kept under %s\n", failures,
                root.string().c_str());
    return 1;
}
