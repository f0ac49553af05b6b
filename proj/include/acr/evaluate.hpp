#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "acr/data.hpp"
#include "acr/model.hpp"

namespace acr {

// Lower-triangular record of test accuracies: entry (stage, task) is the
// accuracy on task's held-out set after training through `stage`.
class AccuracyMatrix {
public:
    explicit AccuracyMatrix(std::size_t tasks);

    std::size_t task_count() const { return tasks_; }
    void set(std::size_t stage, std::size_t task, double accuracy);
    double at(std::size_t stage, std::size_t task) const;
    bool has(std::size_t stage, std::size_t task) const;

    // rows = stage, cols = task; upper-triangle cells stay empty
    void write_csv(const std::string& path) const;

private:
    std::size_t tasks_;
    std::vector<std::vector<double>> values_;  // values_[stage][task], NaN = unset
};

// Mean of the final row (requires the full row).
double acc(const AccuracyMatrix& matrix);

// Mean over earlier tasks of final-row accuracy minus the accuracy right
// after that task was learned; absent when there is only one task.
std::optional<double> bwt(const AccuracyMatrix& matrix);

// Fraction of samples whose argmax over every known proxy hits the label;
// ties resolve to the lowest class index.
double eval_task(const Mlp& encoder, const ProxyClassifier& clf,
                 const std::vector<Sample>& test_set);

// Entrywise mean; inputs must agree on shape and on which cells are set.
AccuracyMatrix average_matrices(const std::vector<AccuracyMatrix>& matrices);

struct SummaryRow {
    std::string policy;
    std::string seed;  // a number, or "mean" for the aggregate row
    double acc_iid = 0.0;
    double bwt_iid = 0.0;
    double acc_ood = 0.0;
    double bwt_ood = 0.0;
    double cv_tasks = 0.0;
    double cv_classes = 0.0;
};

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::string& path);

}  // namespace acr
