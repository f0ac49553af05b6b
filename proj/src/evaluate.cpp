#include "acr/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace acr {

AccuracyMatrix::AccuracyMatrix(std::size_t tasks) : tasks_(tasks) {
    if (tasks == 0) throw std::invalid_argument("AccuracyMatrix: zero tasks");
    values_.assign(tasks, std::vector<double>(tasks, std::nan("")));
}

void AccuracyMatrix::set(std::size_t stage, std::size_t task, double accuracy) {
    if (stage >= tasks_ || task > stage) {
        throw std::out_of_range("AccuracyMatrix::set: entry (" + std::to_string(stage) +
                                "," + std::to_string(task) +
                                ") outside the lower triangle of " +
                                std::to_string(tasks_));
    }
    if (accuracy < 0.0 || accuracy > 1.0) {
        throw std::invalid_argument("AccuracyMatrix::set: accuracy " +
                                    std::to_string(accuracy) + " outside [0,1]");
    }
    values_[stage][task] = accuracy;
}

bool AccuracyMatrix::has(std::size_t stage, std::size_t task) const {
    return stage < tasks_ && task < tasks_ && !std::isnan(values_[stage][task]);
}

double AccuracyMatrix::at(std::size_t stage, std::size_t task) const {
    if (!has(stage, task)) {
        throw std::out_of_range("AccuracyMatrix::at: entry (" + std::to_string(stage) +
                                "," + std::to_string(task) + ") was never recorded");
    }
    return values_[stage][task];
}

void AccuracyMatrix::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("AccuracyMatrix: cannot open " + path);
    out << "stage";
    for (std::size_t j = 0; j < tasks_; ++j) out << ",task" << j;
    out << "\n";
    char buf[32];
    for (std::size_t i = 0; i < tasks_; ++i) {
        out << i;
        for (std::size_t j = 0; j < tasks_; ++j) {
            out << ",";
            if (has(i, j)) {
                std::snprintf(buf, sizeof(buf), "%.6f", values_[i][j]);
                out << buf;
            }
        }
        out << "\n";
    }
}

double acc(const AccuracyMatrix& matrix) {
    const std::size_t T = matrix.task_count();
    double total = 0.0;
    for (std::size_t j = 0; j < T; ++j) total += matrix.at(T - 1, j);
    return total / static_cast<double>(T);
}

std::optional<double> bwt(const AccuracyMatrix& matrix) {
    const std::size_t T = matrix.task_count();
    if (T < 2) return std::nullopt;
    double total = 0.0;
    for (std::size_t j = 0; j + 1 < T; ++j) {
        total += matrix.at(T - 1, j) - matrix.at(j, j);
    }
    return total / static_cast<double>(T - 1);
}

double eval_task(const Mlp& encoder, const ProxyClassifier& clf,
                 const std::vector<Sample>& test_set) {
    if (test_set.empty()) throw std::invalid_argument("eval_task: empty test set");
    const std::size_t known = clf.num_classes();
    std::vector<double> features;
    features.reserve(test_set.size() * encoder.input_dim());
    for (const Sample& s : test_set) {
        if (s.label >= known) {
            throw std::out_of_range("eval_task: test label " + std::to_string(s.label) +
                                    " has no proxy (only " + std::to_string(known) +
                                    " classes known)");
        }
        features.insert(features.end(), s.features.begin(), s.features.end());
    }

    Tensor x = Tensor::from_values({test_set.size(), encoder.input_dim()},
                                   std::move(features));
    Tensor logits = matmul_nt(encoder.forward(x), clf.proxies());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < known; ++c) {
            if (logits.at(i, c) > logits.at(i, best)) best = c;
        }
        if (best == test_set[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

AccuracyMatrix average_matrices(const std::vector<AccuracyMatrix>& matrices) {
    if (matrices.empty()) throw std::invalid_argument("average_matrices: no matrices");
    const std::size_t T = matrices.front().task_count();
    AccuracyMatrix out(T);
    for (std::size_t i = 0; i < T; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const bool present = matrices.front().has(i, j);
            double total = 0.0;
            for (const AccuracyMatrix& m : matrices) {
                if (m.task_count() != T || m.has(i, j) != present) {
                    throw std::invalid_argument(
                            "average_matrices: matrices disagree on recorded entries");
                }
                if (present) total += m.at(i, j);
            }
            if (present) out.set(i, j, total / static_cast<double>(matrices.size()));
        }
    }
    return out;
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_summary_csv: cannot open " + path);
    out << "policy,seed,ACC_iid,BWT_iid,ACC_ood,BWT_ood,CV_tasks,CV_classes\n";
    char buf[32];
    for (const SummaryRow& r : rows) {
        out << r.policy << "," << r.seed;
        for (double v : {r.acc_iid, r.bwt_iid, r.acc_ood, r.bwt_ood, r.cv_tasks,
                         r.cv_classes}) {
            std::snprintf(buf, sizeof(buf), "%.6f", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_summary_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("read_summary_csv: " + path + " is empty");
    }
    if (line != "policy,seed,ACC_iid,BWT_iid,ACC_ood,BWT_ood,CV_tasks,CV_classes") {
        throw std::runtime_error("read_summary_csv: unexpected header in " + path);
    }
    std::vector<SummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream cells(line);
        SummaryRow r;
        std::string field;
        std::getline(cells, r.policy, ',');
        std::getline(cells, r.seed, ',');
        double* slots[6] = {&r.acc_iid, &r.bwt_iid, &r.acc_ood,
                            &r.bwt_ood, &r.cv_tasks, &r.cv_classes};
        for (double* slot : slots) {
            if (!std::getline(cells, field, ',')) {
                throw std::runtime_error("read_summary_csv: short row in " + path);
            }
            *slot = std::strtod(field.c_str(), nullptr);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace acr
