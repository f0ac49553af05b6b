#include "acr/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "acr/rng.hpp"

namespace acr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string loss_name(LossKind loss) {
    return loss == LossKind::Pcl ? "pcl" : "ce";
}

LossKind loss_from_name(const std::string& name) {
    if (name == "pcl") return LossKind::Pcl;
    if (name == "ce") return LossKind::CrossEntropy;
    throw std::invalid_argument("unknown loss '" + name + "', expected pcl or ce");
}

namespace {

std::size_t parse_size(const std::string& text, const std::string& what) {
    try {
        if (text.empty() || text[0] == '-') throw std::invalid_argument(text);
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw std::invalid_argument(what + ": expected a non-negative integer, got '" +
                                    text + "'");
    }
}

double parse_double(const std::string& text, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(what + ": expected a number, got '" + text + "'");
    }
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> pieces;
    std::string piece;
    std::istringstream in(text);
    while (std::getline(in, piece, ',')) pieces.push_back(piece);
    return pieces;
}

std::string corruption_text(const CorruptionSpec& spec) {
    return corruption_name(spec.kind) + ":" + std::to_string(spec.severity);
}

double nan_value() {
    return std::numeric_limits<double>::quiet_NaN();
}

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

CorruptionSpec parse_corruption(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= text.size()) {
        throw std::invalid_argument("corruption spec '" + text +
                                    "' must look like kind:severity");
    }
    CorruptionSpec spec;
    spec.kind = corruption_from_name(text.substr(0, colon));
    spec.severity = static_cast<int>(
            parse_size(text.substr(colon + 1), "corruption spec '" + text + "'"));
    if (spec.severity > 5) {
        throw std::invalid_argument("corruption spec '" + text +
                                    "': severity runs 0..5");
    }
    return spec;
}

std::string corruption_label(const CorruptionSpec& spec) {
    return corruption_name(spec.kind) + "_" + std::to_string(spec.severity);
}

TaskStream StreamConfig::build(std::uint32_t seed) const {
    if (!cache_dir.empty()) return load_stream_cache(cache_dir);
    if (kind == InputKind::Vector) {
        return make_synthetic_stream(tasks, classes_per_task, samples_per_class, dim,
                                     seed, margin);
    }
    return make_image_stream(tasks, classes_per_task, side, seed, samples_per_class,
                             jitter, outlier_fraction);
}

void RunConfig::validate() const {
    if (confidence_epochs == 0) {
        throw std::invalid_argument("config: confidence_epochs must be at least 1");
    }
    if (epochs < confidence_epochs) {
        throw std::invalid_argument("config: confidence horizon " +
                                    std::to_string(confidence_epochs) +
                                    " exceeds the " + std::to_string(epochs) +
                                    " epochs per task");
    }
    if (batch == 0) throw std::invalid_argument("config: batch must be at least 1");
    if (buffer_size == 0) {
        throw std::invalid_argument("config: buffer_size must be at least 1");
    }
    if (!(tau > 0.0)) throw std::invalid_argument("config: tau must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (embed_dim == 0) throw std::invalid_argument("config: embed_dim must be at least 1");
    for (std::size_t width : hidden) {
        if (width == 0) throw std::invalid_argument("config: hidden widths must be positive");
    }
    if (seeds.empty()) throw std::invalid_argument("config: seed list is empty");
    if (stream.tasks == 0 || stream.classes_per_task == 0) {
        throw std::invalid_argument("config: stream needs at least one task and class");
    }
    if (stream.samples_per_class < 2) {
        throw std::invalid_argument(
                "config: samples_per_class below 2 cannot split train/test");
    }
    if (stream.cache_dir.empty() && stream.kind == InputKind::Vector &&
        !corruptions.empty()) {
        throw std::invalid_argument("config: corruptions need an image stream");
    }
}

namespace {

std::size_t json_size(const json& v, const std::string& key, const std::string& origin) {
    if (!v.is_number_unsigned()) {
        throw std::invalid_argument(origin + ": '" + key +
                                    "' wants a non-negative integer");
    }
    return v.get<std::size_t>();
}

double json_number(const json& v, const std::string& key, const std::string& origin) {
    if (!v.is_number()) {
        throw std::invalid_argument(origin + ": '" + key + "' wants a number");
    }
    return v.get<double>();
}

std::string json_string(const json& v, const std::string& key, const std::string& origin) {
    if (!v.is_string()) {
        throw std::invalid_argument(origin + ": '" + key + "' wants a string");
    }
    return v.get<std::string>();
}

InputKind kind_from_name(const std::string& name) {
    if (name == "vector") return InputKind::Vector;
    if (name == "image") return InputKind::Image;
    throw std::invalid_argument("unknown stream kind '" + name +
                                "', expected vector or image");
}

void parse_stream_field(StreamConfig& stream, const std::string& key, const json& v,
                        const std::string& origin) {
    const std::string label = "stream." + key;
    if (key == "kind") stream.kind = kind_from_name(json_string(v, label, origin));
    else if (key == "tasks") stream.tasks = json_size(v, label, origin);
    else if (key == "classes_per_task") stream.classes_per_task = json_size(v, label, origin);
    else if (key == "samples_per_class") stream.samples_per_class = json_size(v, label, origin);
    else if (key == "dim") stream.dim = json_size(v, label, origin);
    else if (key == "side") stream.side = json_size(v, label, origin);
    else if (key == "margin") stream.margin = json_number(v, label, origin);
    else if (key == "jitter") stream.jitter = json_number(v, label, origin);
    else if (key == "outlier_fraction") stream.outlier_fraction = json_number(v, label, origin);
    else if (key == "cache_dir") stream.cache_dir = json_string(v, label, origin);
    else throw std::invalid_argument(origin + ": unknown config key '" + label + "'");
}

}  // namespace

RunConfig config_from_json_text(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(origin + ": " + e.what());
    }
    if (!doc.is_object()) {
        throw std::invalid_argument(origin + ": expected a JSON object");
    }

    RunConfig config;
    for (const auto& [key, v] : doc.items()) {
        if (key == "policy") config.policy = policy_from_name(json_string(v, key, origin));
        else if (key == "loss") config.loss = loss_from_name(json_string(v, key, origin));
        else if (key == "buffer_size") config.buffer_size = json_size(v, key, origin);
        else if (key == "batch") config.batch = json_size(v, key, origin);
        else if (key == "epochs") config.epochs = json_size(v, key, origin);
        else if (key == "confidence_epochs") config.confidence_epochs = json_size(v, key, origin);
        else if (key == "tau") config.tau = json_number(v, key, origin);
        else if (key == "lr") config.lr = json_number(v, key, origin);
        else if (key == "normalize") {
            if (!v.is_boolean()) {
                throw std::invalid_argument(origin + ": 'normalize' wants a boolean");
            }
            config.normalize = v.get<bool>();
        }
        else if (key == "embed_dim") config.embed_dim = json_size(v, key, origin);
        else if (key == "out") config.out_dir = json_string(v, key, origin);
        else if (key == "hidden") {
            if (!v.is_array()) throw std::invalid_argument(origin + ": 'hidden' wants an array");
            config.hidden.clear();
            for (const json& w : v) config.hidden.push_back(json_size(w, key, origin));
        } else if (key == "seeds") {
            if (!v.is_array()) throw std::invalid_argument(origin + ": 'seeds' wants an array");
            config.seeds.clear();
            for (const json& w : v) {
                const std::size_t s = json_size(w, key, origin);
                if (s > 0xffffffffull) {
                    throw std::invalid_argument(origin + ": seed " + std::to_string(s) +
                                                " does not fit 32 bits");
                }
                config.seeds.push_back(static_cast<std::uint32_t>(s));
            }
        } else if (key == "corruptions") {
            if (!v.is_array()) {
                throw std::invalid_argument(origin + ": 'corruptions' wants an array");
            }
            config.corruptions.clear();
            for (const json& w : v) {
                config.corruptions.push_back(parse_corruption(json_string(w, key, origin)));
            }
        } else if (key == "stream") {
            if (!v.is_object()) throw std::invalid_argument(origin + ": 'stream' wants an object");
            for (const auto& [sk, sv] : v.items()) {
                parse_stream_field(config.stream, sk, sv, origin);
            }
        } else {
            throw std::invalid_argument(origin + ": unknown config key '" + key + "'");
        }
    }
    return config;
}

std::string config_to_json_text(const RunConfig& config) {
    json stream;
    stream["kind"] = config.stream.kind == InputKind::Vector ? "vector" : "image";
    stream["tasks"] = config.stream.tasks;
    stream["classes_per_task"] = config.stream.classes_per_task;
    stream["samples_per_class"] = config.stream.samples_per_class;
    stream["dim"] = config.stream.dim;
    stream["side"] = config.stream.side;
    stream["margin"] = config.stream.margin;
    stream["jitter"] = config.stream.jitter;
    stream["outlier_fraction"] = config.stream.outlier_fraction;
    stream["cache_dir"] = config.stream.cache_dir;

    json doc;
    doc["policy"] = policy_name(config.policy);
    doc["loss"] = loss_name(config.loss);
    doc["buffer_size"] = config.buffer_size;
    doc["batch"] = config.batch;
    doc["epochs"] = config.epochs;
    doc["confidence_epochs"] = config.confidence_epochs;
    doc["tau"] = config.tau;
    doc["lr"] = config.lr;
    doc["normalize"] = config.normalize;
    doc["hidden"] = config.hidden;
    doc["embed_dim"] = config.embed_dim;
    doc["seeds"] = config.seeds;
    json specs = json::array();
    for (const CorruptionSpec& spec : config.corruptions) specs.push_back(corruption_text(spec));
    doc["corruptions"] = specs;
    doc["out"] = config.out_dir;
    doc["stream"] = stream;
    return doc.dump(2);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config file not found: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    RunConfig config = config_from_json_text(buffer.str(), path);
    apply_env_overrides(config);
    return config;
}

std::vector<std::string> override_keys() {
    return {"policy", "loss", "buffer_size", "batch", "epochs", "confidence_epochs",
            "tau", "lr", "normalize", "hidden", "embed_dim", "seeds", "corruptions", "out",
            "stream.kind", "stream.tasks", "stream.classes_per_task",
            "stream.samples_per_class", "stream.dim", "stream.side", "stream.margin",
            "stream.jitter", "stream.outlier_fraction", "stream.cache_dir"};
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
    std::string k = key;
    if (k == "E") k = "confidence_epochs";
    else if (k == "m") k = "epochs";
    else if (k == "b") k = "batch";
    else if (k == "B") k = "buffer_size";
    const std::string what = "override '" + key + "'";

    if (k == "policy") config.policy = policy_from_name(value);
    else if (k == "loss") config.loss = loss_from_name(value);
    else if (k == "buffer_size") config.buffer_size = parse_size(value, what);
    else if (k == "batch") config.batch = parse_size(value, what);
    else if (k == "epochs") config.epochs = parse_size(value, what);
    else if (k == "confidence_epochs") config.confidence_epochs = parse_size(value, what);
    else if (k == "tau") config.tau = parse_double(value, what);
    else if (k == "lr") config.lr = parse_double(value, what);
    else if (k == "normalize") {
        if (value == "true" || value == "1") config.normalize = true;
        else if (value == "false" || value == "0") config.normalize = false;
        else throw std::invalid_argument(what + ": expected true or false, got '" + value + "'");
    }
    else if (k == "embed_dim") config.embed_dim = parse_size(value, what);
    else if (k == "out") config.out_dir = value;
    else if (k == "hidden") {
        config.hidden.clear();
        for (const std::string& piece : split_list(value)) {
            config.hidden.push_back(parse_size(piece, what));
        }
        if (config.hidden.empty()) throw std::invalid_argument(what + ": empty width list");
    } else if (k == "seeds") {
        config.seeds.clear();
        for (const std::string& piece : split_list(value)) {
            const std::size_t s = parse_size(piece, what);
            if (s > 0xffffffffull) {
                throw std::invalid_argument(what + ": seed " + piece + " does not fit 32 bits");
            }
            config.seeds.push_back(static_cast<std::uint32_t>(s));
        }
        if (config.seeds.empty()) throw std::invalid_argument(what + ": empty seed list");
    } else if (k == "corruptions") {
        config.corruptions.clear();
        if (!value.empty()) {
            for (const std::string& piece : split_list(value)) {
                config.corruptions.push_back(parse_corruption(piece));
            }
        }
    } else if (k == "stream.kind") config.stream.kind = kind_from_name(value);
    else if (k == "stream.tasks") config.stream.tasks = parse_size(value, what);
    else if (k == "stream.classes_per_task") config.stream.classes_per_task = parse_size(value, what);
    else if (k == "stream.samples_per_class") config.stream.samples_per_class = parse_size(value, what);
    else if (k == "stream.dim") config.stream.dim = parse_size(value, what);
    else if (k == "stream.side") config.stream.side = parse_size(value, what);
    else if (k == "stream.margin") config.stream.margin = parse_double(value, what);
    else if (k == "stream.jitter") config.stream.jitter = parse_double(value, what);
    else if (k == "stream.outlier_fraction") config.stream.outlier_fraction = parse_double(value, what);
    else if (k == "stream.cache_dir") config.stream.cache_dir = value;
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

void apply_env_overrides(RunConfig& config) {
    for (const std::string& key : override_keys()) {
        std::string name = "ACR_";
        for (char c : key) {
            name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        if (const char* value = std::getenv(name.c_str())) {
            apply_override(config, key, value);
        }
    }
}

namespace {

Mlp make_encoder(const RunConfig& config, const TaskStream& stream, std::uint32_t seed) {
    std::mt19937 rng = seeded_rng(seed, "init");
    return Mlp(stream.dim, config.hidden, config.embed_dim, rng);
}

}  // namespace

Trainer::Trainer(const RunConfig& config, std::uint32_t seed, const TaskStream& stream)
    : config_(config),
      stream_(stream),
      encoder_(make_encoder(config, stream, seed)),
      classifier_(config.embed_dim),
      buffer_(config.buffer_size, config.policy),
      rng_shuffle_(seeded_rng(seed, "shuffle")),
      rng_retrieval_(seeded_rng(seed, "retrieval")),
      rng_augment_(seeded_rng(seed, "augment")),
      rng_proxy_(seeded_rng(seed, "proxy")),
      rng_update_(seeded_rng(seed, "update")),
      rng_reservoir_(seeded_rng(seed, "reservoir")) {
    config_.validate();
    if (stream_.tasks.empty()) throw std::invalid_argument("Trainer: empty task stream");
}

const ConfidenceLedger& Trainer::last_ledger() const {
    if (!ledger_) throw std::logic_error("last_ledger: no confidence ledger recorded");
    return *ledger_;
}

void Trainer::train_task(std::size_t task_index) {
    if (task_index >= stream_.tasks.size()) {
        throw std::out_of_range("train_task: task " + std::to_string(task_index) +
                                " beyond the " + std::to_string(stream_.tasks.size()) +
                                "-task stream");
    }
    if (task_index != next_task_) {
        throw std::logic_error("train_task: expected task " + std::to_string(next_task_) +
                               " next, got " + std::to_string(task_index));
    }
    const Task& task = stream_.tasks[task_index];
    classifier_.ensure_classes(task.classes, rng_proxy_);
    counters_ = TaskCounters{};
    const bool reservoir = config_.policy == BufferPolicy::Reservoir;
    // Reservoir admission never reads confidence, so those runs skip the
    // ledger entirely.
    if (reservoir) ledger_.reset();
    else ledger_.emplace(config_.confidence_epochs, task.id);

    const std::size_t b = config_.batch;
    const std::size_t n = task.train.size();
    const std::size_t batches = n / b;
    if (batches == 0) {
        throw std::invalid_argument("train_task: task " + std::to_string(task.id) +
                                    " holds " + std::to_string(n) +
                                    " training samples, below one batch of " +
                                    std::to_string(b));
    }
    if (n % b != 0) {
        std::cerr << "[harness] task " << task.id << ": dropping " << (n % b)
                  << " of " << n << " samples per epoch to keep full batches of " << b
                  << "\n";
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config_.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng_shuffle_);
        for (std::size_t k = 0; k < batches; ++k) {
            std::vector<const Sample*> current;
            current.reserve(b);
            for (std::size_t i = k * b; i < (k + 1) * b; ++i) {
                current.push_back(&task.train[order[i]]);
            }
            run_batch(task, ledger_ ? &*ledger_ : nullptr, epoch, current);
            if (reservoir && epoch == 1) {
                // One pass over the task fills the reservoir; repeating the
                // insert every epoch would overweight late batches.
                for (const Sample* s : current) buffer_.reservoir_insert(rng_reservoir_, *s);
            }
        }
    }

    if (!reservoir) {
        const auto quotas =
                class_quotas(config_.buffer_size, stream_.classes_per_task(task_index + 1));
        buffer_.prune_to_quotas(quotas);
        std::vector<Sample> candidates;
        candidates.reserve(n);
        std::size_t incomplete = 0;
        for (const Sample& s : task.train) {
            if (ledger_->complete(s.id)) candidates.push_back(s);
            else ++incomplete;
        }
        if (incomplete > 0) {
            std::cerr << "[harness] task " << task.id << ": " << incomplete << " of " << n
                      << " samples lack a full confidence history and stay out of the buffer\n";
        }
        switch (config_.policy) {
            case BufferPolicy::Challenging:
                buffer_.update_challenging(*ledger_, task.id, candidates, quotas);
                break;
            case BufferPolicy::Hard:
                buffer_.update_hard(*ledger_, task.id, candidates, quotas);
                break;
            case BufferPolicy::RandomBalanced:
                buffer_.update_random_balanced(rng_update_, task.id, candidates, quotas);
                break;
            case BufferPolicy::Reservoir:
                break;
        }
    }
    next_task_ = task_index + 1;
}

void Trainer::run_batch(const Task& task, ConfidenceLedger* ledger, std::size_t epoch,
                        const std::vector<const Sample*>& current) {
    const std::size_t b = current.size();
    const std::size_t dim = stream_.dim;
    std::vector<Sample> replay = buffer_.random_retrieval(rng_retrieval_, b);

    auto usable = [&]() {
        // Cross-entropy spans every known class; the contrastive loss only
        // sees the classes inside the batch and degenerates on a single one.
        if (config_.loss == LossKind::CrossEntropy) return classifier_.num_classes() >= 2;
        std::set<std::size_t> classes;
        for (const Sample* s : current) classes.insert(s->label);
        for (const Sample& s : replay) classes.insert(s.label);
        return classes.size() >= 2;
    };
    if (!usable() && !replay.empty()) {
        replay = buffer_.random_retrieval(rng_retrieval_, b);
    }
    if (!usable()) {
        std::cerr << "[harness] task " << task.id << " epoch " << epoch
                  << ": batch covers a single class, skipped\n";
        ++counters_.skipped_batches;
        return;
    }

    std::vector<Sample> current_aug;
    current_aug.reserve(b);
    for (const Sample* s : current) current_aug.push_back(*s);
    current_aug = augment(current_aug, rng_augment_, stream_);
    std::vector<Sample> replay_aug;
    if (!replay.empty()) replay_aug = augment(replay, rng_augment_, stream_);

    const std::size_t rows = replay.empty() ? 2 * b : 4 * b;
    std::vector<double> xs;
    xs.reserve(rows * dim);
    std::vector<std::size_t> labels;
    labels.reserve(rows);
    auto append = [&](const Sample& s) {
        xs.insert(xs.end(), s.features.begin(), s.features.end());
        labels.push_back(s.label);
    };
    for (const Sample* s : current) append(*s);
    for (const Sample& s : current_aug) append(s);
    for (const Sample& s : replay) append(s);
    for (const Sample& s : replay_aug) append(s);
    if (replay.empty()) ++counters_.half_batches;
    else ++counters_.full_batches;

    Tape tape;
    Tensor x = Tensor::from_values({rows, dim}, std::move(xs));
    Tensor z = encoder_.forward(x, &tape);
    if (config_.normalize) z = l2_normalize_rows(z, &tape);

    if (ledger && epoch <= config_.confidence_epochs) {
        // Confidence comes from the first quarter of the embeddings this
        // step already computed: the raw current samples, pre-update.
        const std::size_t e = config_.embed_dim;
        std::vector<double> head(z.values().begin(),
                                 z.values().begin() + static_cast<std::ptrdiff_t>(b * e));
        Tensor z_current = Tensor::from_values({b, e}, std::move(head));
        Tensor probs = class_probabilities(z_current, classifier_, config_.tau);
        const std::size_t c = classifier_.num_classes();
        for (std::size_t i = 0; i < b; ++i) {
            const Sample& s = *current[i];
            // A sample left out of an earlier epoch (skipped or dropped
            // batch) fell out of sequence; the ledger rejects epoch gaps.
            if (ledger->recorded_epochs(s.id) != epoch - 1) continue;
            std::vector<double> row(probs.values().begin() + static_cast<std::ptrdiff_t>(i * c),
                                    probs.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
            ledger->record(s.id, epoch, row, s.label);
        }
    }

    Tensor loss = config_.loss == LossKind::Pcl
            ? pcl_loss(z, labels, classifier_.proxies(), config_.tau, &tape)
            : ce_loss(z, labels, classifier_.proxies(), &tape);
    tape.backward(loss);
    std::vector<Tensor> params = encoder_.parameters();
    params.push_back(classifier_.proxies());
    sgd_step(std::move(params), config_.lr);
}

double Trainer::evaluate(const std::vector<Sample>& test_set) const {
    return eval_task(encoder_, classifier_, test_set);
}

namespace {

SummaryRow run_seed(const RunConfig& config, std::uint32_t seed) {
    const TaskStream stream = config.stream.build(seed);
    if (!config.corruptions.empty() && stream.side == 0) {
        throw std::invalid_argument("run: corruptions need an image stream");
    }
    const std::size_t tasks = stream.tasks.size();
    Trainer trainer(config, seed, stream);

    const fs::path seed_dir = fs::path(config.out_dir) / ("seed" + std::to_string(seed));
    fs::create_directories(seed_dir);

    // Corrupt each test set once up front so every stage scores the same
    // perturbed pixels.
    std::vector<std::pair<std::string, std::vector<std::vector<Sample>>>> corrupted;
    for (const CorruptionSpec& spec : config.corruptions) {
        const std::string label = corruption_label(spec);
        std::mt19937 rng = seeded_rng(seed, "corrupt-" + label);
        std::vector<std::vector<Sample>> sets;
        sets.reserve(tasks);
        for (const Task& task : stream.tasks) {
            sets.push_back(corrupt(task.test, spec, stream.side, rng));
        }
        corrupted.emplace_back(label, std::move(sets));
    }

    AccuracyMatrix alpha_iid(tasks);
    std::vector<AccuracyMatrix> alpha_ood(corrupted.size(), AccuracyMatrix(tasks));
    for (std::size_t t = 0; t < tasks; ++t) {
        trainer.train_task(t);
        if (config.policy != BufferPolicy::Reservoir) {
            std::map<std::size_t, std::size_t> class_of;
            for (const Sample& s : stream.tasks[t].train) class_of[s.id] = s.label;
            trainer.last_ledger().write_csv(
                    (seed_dir / ("confidence_task" + std::to_string(t) + ".csv")).string(),
                    class_of);
        }
        for (std::size_t j = 0; j <= t; ++j) {
            alpha_iid.set(t, j, trainer.evaluate(stream.tasks[j].test));
            for (std::size_t c = 0; c < corrupted.size(); ++c) {
                alpha_ood[c].set(t, j, trainer.evaluate(corrupted[c].second[j]));
            }
        }
    }

    alpha_iid.write_csv((seed_dir / "alpha_iid.csv").string());
    for (std::size_t c = 0; c < corrupted.size(); ++c) {
        alpha_ood[c].write_csv(
                (seed_dir / ("alpha_ood_" + corrupted[c].first + ".csv")).string());
    }
    trainer.buffer().write_snapshot((seed_dir / "buffer.json").string());

    SummaryRow row;
    row.policy = policy_name(config.policy);
    row.seed = std::to_string(seed);
    row.acc_iid = acc(alpha_iid);
    row.bwt_iid = bwt(alpha_iid).value_or(nan_value());
    if (!alpha_ood.empty()) {
        const AccuracyMatrix ood_mean = average_matrices(alpha_ood);
        ood_mean.write_csv((seed_dir / "alpha_ood_mean.csv").string());
        row.acc_ood = acc(ood_mean);
        row.bwt_ood = bwt(ood_mean).value_or(nan_value());
    } else {
        row.acc_ood = nan_value();
        row.bwt_ood = nan_value();
    }
    row.cv_tasks = trainer.buffer().cv_tasks();
    row.cv_classes = trainer.buffer().cv_classes();
    return row;
}

MetricStats stats_of(const std::vector<double>& xs) {
    MetricStats s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    double sq = 0.0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(xs.size())));
    return s;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config) {
    config.validate();
    fs::create_directories(config.out_dir);
    const fs::path config_path = fs::path(config.out_dir) / "config.json";
    {
        std::ofstream out(config_path);
        if (!out) throw std::runtime_error("run: cannot write " + config_path.string());
        out << config_to_json_text(config) << "\n";
    }

    ExperimentResult result;
    for (std::uint32_t seed : config.seeds) result.rows.push_back(run_seed(config, seed));

    std::vector<double> acc_iid, bwt_iid, acc_ood, bwt_ood;
    double cv_tasks = 0.0, cv_classes = 0.0;
    for (const SummaryRow& row : result.rows) {
        acc_iid.push_back(row.acc_iid);
        bwt_iid.push_back(row.bwt_iid);
        acc_ood.push_back(row.acc_ood);
        bwt_ood.push_back(row.bwt_ood);
        cv_tasks += row.cv_tasks;
        cv_classes += row.cv_classes;
    }
    result.acc_iid = stats_of(acc_iid);
    result.bwt_iid = stats_of(bwt_iid);
    result.acc_ood = stats_of(acc_ood);
    result.bwt_ood = stats_of(bwt_ood);

    SummaryRow mean_row;
    mean_row.policy = policy_name(config.policy);
    mean_row.seed = "mean";
    mean_row.acc_iid = result.acc_iid.mean;
    mean_row.bwt_iid = result.bwt_iid.mean;
    mean_row.acc_ood = result.acc_ood.mean;
    mean_row.bwt_ood = result.bwt_ood.mean;
    mean_row.cv_tasks = cv_tasks / static_cast<double>(result.rows.size());
    mean_row.cv_classes = cv_classes / static_cast<double>(result.rows.size());
    result.rows.push_back(mean_row);

    write_summary_csv((fs::path(config.out_dir) / "summary.csv").string(), result.rows);
    return result;
}

std::vector<std::string> parse_sweep_values(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("sweep: empty value list");
    const auto dots = text.find("..");
    if (dots != std::string::npos && text.find(',') == std::string::npos) {
        const std::size_t lo = parse_size(text.substr(0, dots), "sweep range '" + text + "'");
        const std::size_t hi = parse_size(text.substr(dots + 2), "sweep range '" + text + "'");
        if (lo > hi) throw std::invalid_argument("sweep: descending range '" + text + "'");
        std::vector<std::string> values;
        for (std::size_t v = lo; v <= hi; ++v) values.push_back(std::to_string(v));
        return values;
    }
    std::vector<std::string> values = split_list(text);
    for (const std::string& v : values) {
        if (v.empty()) throw std::invalid_argument("sweep: empty entry in '" + text + "'");
    }
    return values;
}

std::vector<SummaryRow> run_sweep(const RunConfig& base, const std::string& param,
                                  const std::vector<std::string>& values) {
    if (values.empty()) throw std::invalid_argument("sweep: no values");
    fs::create_directories(base.out_dir);
    std::vector<SummaryRow> all;
    std::string csv = "param,value,policy,seed,ACC_iid,BWT_iid,ACC_ood,BWT_ood,CV_tasks,CV_classes\n";
    for (const std::string& value : values) {
        RunConfig config = base;
        apply_override(config, param, value);
        config.out_dir = (fs::path(base.out_dir) / (param + "_" + value)).string();
        const ExperimentResult result = run_experiment(config);
        for (const SummaryRow& row : result.rows) {
            csv += param + "," + value + "," + row.policy + "," + row.seed + "," +
                   fmt6(row.acc_iid) + "," + fmt6(row.bwt_iid) + "," + fmt6(row.acc_ood) +
                   "," + fmt6(row.bwt_ood) + "," + fmt6(row.cv_tasks) + "," +
                   fmt6(row.cv_classes) + "\n";
            all.push_back(row);
        }
    }
    const fs::path sweep_path = fs::path(base.out_dir) / "sweep.csv";
    std::ofstream out(sweep_path);
    if (!out) throw std::runtime_error("sweep: cannot write " + sweep_path.string());
    out << csv;
    return all;
}

std::string report_table(const std::string& dir) {
    if (!fs::exists(dir)) throw std::runtime_error("report: no such directory: " + dir);

    std::vector<fs::path> files;
    if (fs::is_regular_file(dir)) {
        files.push_back(dir);
    } else {
        for (const auto& entry : fs::recursive_directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().filename() == "summary.csv") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
    }

    struct Entry {
        std::string where;
        SummaryRow row;
    };
    std::vector<Entry> entries;
    for (const fs::path& file : files) {
        std::string where = fs::relative(file.parent_path(), dir).string();
        if (where.empty() || where == ".") where = ".";
        for (const SummaryRow& row : read_summary_csv(file.string())) {
            if (row.seed == "mean") entries.push_back({where, row});
        }
    }
    if (entries.empty()) throw std::runtime_error("report: no summary.csv under " + dir);

    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (std::isnan(a.row.acc_iid)) return false;
        if (std::isnan(b.row.acc_iid)) return true;
        return a.row.acc_iid > b.row.acc_iid;
    });

    char line[256];
    std::string table;
    std::snprintf(line, sizeof line, "%-16s %-24s %9s %9s %9s %9s %9s %10s\n", "policy",
                  "run", "ACC_iid", "BWT_iid", "ACC_ood", "BWT_ood", "CV_tasks",
                  "CV_classes");
    table += line;
    for (const Entry& e : entries) {
        std::snprintf(line, sizeof line, "%-16s %-24s %9.4f %9.4f %9.4f %9.4f %9.2f %10.2f\n",
                      e.row.policy.c_str(), e.where.c_str(), e.row.acc_iid, e.row.bwt_iid,
                      e.row.acc_ood, e.row.bwt_ood, e.row.cv_tasks, e.row.cv_classes);
        table += line;
    }
    return table;
}

double gradcheck_max_error(std::size_t configurations, std::uint32_t seed) {
    if (configurations == 0) throw std::invalid_argument("gradcheck: zero configurations");
    double worst = 0.0;
    for (std::size_t k = 0; k < configurations; ++k) {
        std::mt19937 rng = seeded_rng(seed, "gradcheck-" + std::to_string(k));
        auto draw = [&rng](std::size_t lo, std::size_t hi) {
            return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
        };
        const std::size_t input_dim = draw(2, 6);
        const std::size_t hidden = draw(2, 8);
        const std::size_t embed = draw(2, 6);
        const std::size_t classes = draw(2, 5);
        const std::size_t batch = draw(3, 8);
        const double tau = std::uniform_real_distribution<double>(0.2, 2.0)(rng);

        Mlp model(input_dim, {hidden}, embed, rng);
        ProxyClassifier clf(embed);
        std::vector<std::size_t> all_classes(classes);
        std::iota(all_classes.begin(), all_classes.end(), std::size_t{0});
        clf.ensure_classes(all_classes, rng);

        Tensor x = Tensor::uniform({batch, input_dim}, -1.5, 1.5, rng);
        // Odd configurations route through the normalized-embedding path,
        // which is ill-conditioned near zero embeddings (a sample whose
        // hidden units are all inactive). Finite differences are
        // meaningless at that corner, so sample batches clear of it.
        const bool normalize = k % 2 == 1;
        if (normalize) {
            auto min_row_norm = [&]() {
                const Tensor raw = model.forward(x);
                double lo = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < raw.rows(); ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < raw.cols(); ++j) {
                        s += raw.at(i, j) * raw.at(i, j);
                    }
                    lo = std::min(lo, std::sqrt(s));
                }
                return lo;
            };
            for (int attempt = 0; attempt < 100 && min_row_norm() < 1e-2; ++attempt) {
                x = Tensor::uniform({batch, input_dim}, -1.5, 1.5, rng);
            }
        }
        std::vector<std::size_t> labels(batch);
        for (std::size_t& label : labels) label = draw(0, classes - 1);
        labels[0] = 0;
        labels[1] = 1;  // keep at least two classes in the batch

        auto loss_value = [&]() {
            Tensor z = model.forward(x);
            if (normalize) z = l2_normalize_rows(z);
            return pcl_loss(z, labels, clf.proxies(), tau).value();
        };

        Tape tape;
        Tensor z = model.forward(x, &tape);
        if (normalize) z = l2_normalize_rows(z, &tape);
        Tensor loss = pcl_loss(z, labels, clf.proxies(), tau, &tape);
        tape.backward(loss);

        std::vector<Tensor> params = model.parameters();
        params.push_back(clf.proxies());
        const double step = 1e-5;
        for (Tensor& p : params) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                double& slot = p.values()[i];
                const double kept = slot;
                slot = kept + step;
                const double up = loss_value();
                slot = kept - step;
                const double down = loss_value();
                slot = kept;
                const double fd = (up - down) / (2.0 * step);
                const double ad = std::as_const(p).grad()[i];
                const double err =
                        std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
                worst = std::max(worst, err);
            }
            p.zero_grad();
        }
    }
    return worst;
}

}  // namespace acr
