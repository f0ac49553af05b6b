#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "acr/confidence.hpp"

namespace acr {

struct Sample {
    std::size_t id = 0;
    std::vector<double> features;
    std::size_t label = 0;
    std::size_t task_id = 0;
};

enum class BufferPolicy { Challenging, Hard, RandomBalanced, Reservoir };

std::string policy_name(BufferPolicy policy);
BufferPolicy policy_from_name(const std::string& name);

// Per-class slot allocation: floor(capacity / (t * |C^task|)) for each
// class, remaining slots handed out one at a time in (task, class) order.
// task_classes[i] lists task i's class ids in order. When capacity cannot
// cover one slot per class, the earliest classes get one slot each and a
// warning goes to stderr.
std::map<std::size_t, std::size_t> class_quotas(
        std::size_t capacity, const std::vector<std::vector<std::size_t>>& task_classes);

// (population std / mean) * 100; NaN when every count is zero.
double coefficient_of_variation(const std::vector<std::size_t>& counts);

// Capacity-bounded replay store. Balanced policies keep samples
// partitioned task -> class with each class list ordered by its policy
// key (most retained first), so pruning is list truncation. The
// Reservoir policy ignores the partition structure and keeps one flat
// uniformly-sampled list.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, BufferPolicy policy);

    std::size_t capacity() const { return capacity_; }
    BufferPolicy policy() const { return policy_; }
    std::size_t size() const;
    bool empty() const { return size() == 0; }

    // Truncates every stored class list down to its new quota, returning
    // the dropped tail samples. Balanced policies only.
    std::vector<Sample> prune_to_quotas(const std::map<std::size_t, std::size_t>& quotas);

    // Selection per class of the incoming task: highest variance first,
    // lowest mean confidence first, or uniform without replacement.
    // The chosen samples replace any previous list for that class.
    void update_challenging(const ConfidenceLedger& ledger, std::size_t task_id,
                            const std::vector<Sample>& task_samples,
                            const std::map<std::size_t, std::size_t>& quotas);
    void update_hard(const ConfidenceLedger& ledger, std::size_t task_id,
                     const std::vector<Sample>& task_samples,
                     const std::map<std::size_t, std::size_t>& quotas);
    void update_random_balanced(std::mt19937& rng, std::size_t task_id,
                                const std::vector<Sample>& task_samples,
                                const std::map<std::size_t, std::size_t>& quotas);

    // Algorithm-R single insertion; n_seen counts this sample.
    void reservoir_insert(std::mt19937& rng, const Sample& sample);
    std::size_t stream_count() const { return n_seen_; }

    // Uniform with replacement over everything stored; empty buffer
    // yields an empty batch.
    std::vector<Sample> random_retrieval(std::mt19937& rng, std::size_t batch) const;

    std::map<std::size_t, std::size_t> per_task_counts() const;
    std::map<std::size_t, std::size_t> per_class_counts() const;
    double cv_tasks() const;
    double cv_classes() const;

    // Stored samples in deterministic order (partition order, or stream
    // order under Reservoir).
    std::vector<const Sample*> all_samples() const;
    const std::vector<Sample>* class_list(std::size_t task_id, std::size_t class_id) const;

    void write_snapshot(const std::string& path) const;

private:
    void require_policy(bool balanced, const char* op) const;
    void store_selection(std::size_t task_id, std::size_t class_id,
                         std::vector<Sample> chosen);

    std::size_t capacity_;
    BufferPolicy policy_;
    std::map<std::size_t, std::map<std::size_t, std::vector<Sample>>> partitions_;
    std::vector<Sample> flat_;  // Reservoir storage
    std::size_t n_seen_ = 0;
};

}  // namespace acr
