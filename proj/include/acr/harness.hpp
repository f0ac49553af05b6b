#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acr/buffer.hpp"
#include "acr/confidence.hpp"
#include "acr/data.hpp"
#include "acr/evaluate.hpp"
#include "acr/model.hpp"

namespace acr {

enum class LossKind { Pcl, CrossEntropy };

std::string loss_name(LossKind loss);
LossKind loss_from_name(const std::string& name);

// "<kind>:<severity>" <-> CorruptionSpec, e.g. "gaussian:3"; the label form
// "gaussian_3" names output files.
CorruptionSpec parse_corruption(const std::string& text);
std::string corruption_label(const CorruptionSpec& spec);

struct StreamConfig {
    InputKind kind = InputKind::Image;
    std::size_t tasks = 5;
    std::size_t classes_per_task = 4;
    std::size_t samples_per_class = 250;
    std::size_t dim = 16;   // vector streams
    std::size_t side = 10;  // image streams
    double margin = 3.0;    // vector streams
    double jitter = 1.2;    // image streams
    double outlier_fraction = 0.35;
    std::string cache_dir;  // when set, load this cache instead of generating

    TaskStream build(std::uint32_t seed) const;
};

struct RunConfig {
    StreamConfig stream;
    BufferPolicy policy = BufferPolicy::Challenging;
    LossKind loss = LossKind::Pcl;
    std::size_t buffer_size = 200;      // B
    std::size_t batch = 16;             // b, current and replay batch alike
    std::size_t epochs = 20;            // m, per task
    std::size_t confidence_epochs = 5;  // E
    double tau = 0.1;
    double lr = 0.05;
    bool normalize = false;  // L2-normalize embeddings before the loss
    std::vector<std::size_t> hidden{64};
    std::size_t embed_dim = 32;
    std::vector<std::uint32_t> seeds{0, 1, 2, 3, 4};
    std::vector<CorruptionSpec> corruptions;
    std::string out_dir = "runs/out";

    void validate() const;
};

// Strict JSON parse: unknown keys are errors. `origin` labels messages.
RunConfig config_from_json_text(const std::string& text, const std::string& origin);
std::string config_to_json_text(const RunConfig& config);

// File load plus ACR_* environment overrides; command-line flags are
// applied on top by the caller, so flags > environment > file.
RunConfig load_config(const std::string& path);

// Keys are the JSON names ("policy", "tau", "stream.side", ...) plus the
// short aliases E, m, b, B used by sweeps. List values are comma joined.
void apply_override(RunConfig& config, const std::string& key, const std::string& value);
void apply_env_overrides(RunConfig& config);
std::vector<std::string> override_keys();

// Batch shape bookkeeping for one trained task. A step batch holds the
// current quarter, its augmented copy, and, once the buffer holds
// anything, a retrieved quarter with its augmented copy.
struct TaskCounters {
    std::size_t half_batches = 0;  // buffer empty: 2b rows
    std::size_t full_batches = 0;  // buffer backed: 4b rows
    std::size_t skipped_batches = 0;
};

// Incremental training state for one (config, seed) pair. Tasks must be
// trained in stream order; evaluation reads the live model.
class Trainer {
public:
    Trainer(const RunConfig& config, std::uint32_t seed, const TaskStream& stream);

    void train_task(std::size_t task_index);
    double evaluate(const std::vector<Sample>& test_set) const;

    const Mlp& encoder() const { return encoder_; }
    const ProxyClassifier& classifier() const { return classifier_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const TaskStream& stream() const { return stream_; }
    std::size_t next_task() const { return next_task_; }
    const TaskCounters& last_counters() const { return counters_; }
    const ConfidenceLedger& last_ledger() const;

private:
    void run_batch(const Task& task, ConfidenceLedger* ledger, std::size_t epoch,
                   const std::vector<const Sample*>& current);

    RunConfig config_;
    const TaskStream& stream_;
    Mlp encoder_;
    ProxyClassifier classifier_;
    ReplayBuffer buffer_;
    std::mt19937 rng_shuffle_;
    std::mt19937 rng_retrieval_;
    std::mt19937 rng_augment_;
    std::mt19937 rng_proxy_;
    std::mt19937 rng_update_;
    std::mt19937 rng_reservoir_;
    std::size_t next_task_ = 0;
    TaskCounters counters_;
    std::optional<ConfidenceLedger> ledger_;
};

struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

struct ExperimentResult {
    // One row per seed, then the "mean" aggregate row (the same rows that
    // land in summary.csv).
    std::vector<SummaryRow> rows;
    MetricStats acc_iid;
    MetricStats bwt_iid;
    MetricStats acc_ood;
    MetricStats bwt_ood;
};

// Per seed: build the stream, train every task, evaluate each stage under
// i.i.d. and every configured corruption, and write alpha_*.csv,
// confidence_task*.csv, and buffer.json under out_dir/seed<k>/. Then
// write out_dir/summary.csv and out_dir/config.json.
ExperimentResult run_experiment(const RunConfig& config);

// Runs the experiment once per value of `param`, each under
// out_dir/<param>_<value>/, and writes a combined out_dir/sweep.csv.
std::vector<SummaryRow> run_sweep(const RunConfig& base, const std::string& param,
                                  const std::vector<std::string>& values);
std::vector<std::string> parse_sweep_values(const std::string& text);  // "2,3" or "2..7"

// Collects the aggregate rows of every summary.csv under `dir` into one
// text table, best i.i.d. accuracy first.
std::string report_table(const std::string& dir);

// Worst relative error between backpropagated and central-finite-difference
// gradients over randomly drawn model/loss configurations.
double gradcheck_max_error(std::size_t configurations, std::uint32_t seed);

}  // namespace acr
