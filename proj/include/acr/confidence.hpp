#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace acr {

// Per-sample confidence history over the first E epochs of one task.
// record() appends the probability assigned to the sample's own class;
// variance() and mean_confidence() summarize the full E-long history to
// separate easy samples (high mean, low variance) from boundary samples
// (fluctuating) and outliers (low mean).
class ConfidenceLedger {
public:
    ConfidenceLedger(std::size_t horizon, std::size_t task_id);

    std::size_t horizon() const { return horizon_; }
    std::size_t task_id() const { return task_id_; }

    // epoch is 1-based and must arrive in order for a given sample.
    void record(std::size_t sample_id, std::size_t epoch,
                const std::vector<double>& probs, std::size_t target);

    bool complete(std::size_t sample_id) const;
    std::size_t recorded_epochs(std::size_t sample_id) const;

    double variance(std::size_t sample_id) const;         // population, divide by E
    double mean_confidence(std::size_t sample_id) const;

    // Descending variance, ties by ascending sample id. The class id only
    // labels error messages; callers pass the ids belonging to that class.
    std::vector<std::size_t> rank_class(std::size_t class_id,
                                        std::vector<std::size_t> sample_ids) const;

    std::size_t tracked_samples() const { return records_.size(); }

    // One row per sample: id, class, the E confidences, variance.
    void write_csv(const std::string& path,
                   const std::map<std::size_t, std::size_t>& class_of) const;

private:
    const std::vector<double>& history(std::size_t sample_id, const char* op) const;

    std::size_t horizon_;
    std::size_t task_id_;
    std::map<std::size_t, std::vector<double>> records_;
};

}  // namespace acr
