#include "acr/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace acr {

ConfidenceLedger::ConfidenceLedger(std::size_t horizon, std::size_t task_id)
    : horizon_(horizon), task_id_(task_id) {
    if (horizon == 0) throw std::invalid_argument("ConfidenceLedger: zero epoch horizon");
}

void ConfidenceLedger::record(std::size_t sample_id, std::size_t epoch,
                              const std::vector<double>& probs, std::size_t target) {
    if (epoch == 0 || epoch > horizon_) {
        throw std::invalid_argument("record: epoch " + std::to_string(epoch) +
                                    " outside 1.." + std::to_string(horizon_));
    }
    if (target >= probs.size()) {
        throw std::out_of_range("record: target class " + std::to_string(target) +
                                " outside probability row of " +
                                std::to_string(probs.size()));
    }
    double total = 0.0;
    for (double p : probs) total += p;
    if (std::abs(total - 1.0) > 1e-6) {
        throw std::invalid_argument("record: probability row sums to " +
                                    std::to_string(total) + ", not 1");
    }
    const double gamma = probs[target];
    if (gamma < 0.0 || gamma > 1.0 + 1e-9) {
        throw std::invalid_argument("record: confidence " + std::to_string(gamma) +
                                    " outside [0,1]");
    }

    std::vector<double>& seq = records_[sample_id];
    if (epoch <= seq.size()) {
        throw std::runtime_error("record: sample " + std::to_string(sample_id) +
                                 " already has a record for epoch " +
                                 std::to_string(epoch));
    }
    if (epoch != seq.size() + 1) {
        throw std::runtime_error("record: sample " + std::to_string(sample_id) +
                                 " skipped from epoch " + std::to_string(seq.size()) +
                                 " to " + std::to_string(epoch));
    }
    seq.push_back(gamma);
}

bool ConfidenceLedger::complete(std::size_t sample_id) const {
    auto it = records_.find(sample_id);
    return it != records_.end() && it->second.size() == horizon_;
}

std::size_t ConfidenceLedger::recorded_epochs(std::size_t sample_id) const {
    auto it = records_.find(sample_id);
    return it == records_.end() ? 0 : it->second.size();
}

const std::vector<double>& ConfidenceLedger::history(std::size_t sample_id,
                                                     const char* op) const {
    auto it = records_.find(sample_id);
    if (it == records_.end() || it->second.size() != horizon_) {
        throw std::runtime_error(std::string(op) + ": sample " +
                                 std::to_string(sample_id) + " has " +
                                 std::to_string(it == records_.end() ? 0
                                                                     : it->second.size()) +
                                 " of " + std::to_string(horizon_) + " records");
    }
    return it->second;
}

double ConfidenceLedger::mean_confidence(std::size_t sample_id) const {
    const std::vector<double>& seq = history(sample_id, "mean_confidence");
    double total = 0.0;
    for (double g : seq) total += g;
    return total / static_cast<double>(horizon_);
}

double ConfidenceLedger::variance(std::size_t sample_id) const {
    const std::vector<double>& seq = history(sample_id, "variance");
    // Welford's running moments, population form
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const double delta = seq[i] - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (seq[i] - mean);
    }
    return m2 / static_cast<double>(horizon_);
}

std::vector<std::size_t> ConfidenceLedger::rank_class(
        std::size_t class_id, std::vector<std::size_t> sample_ids) const {
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(sample_ids.size());
    for (std::size_t id : sample_ids) {
        if (!complete(id)) {
            throw std::runtime_error("rank_class: class " + std::to_string(class_id) +
                                     " sample " + std::to_string(id) +
                                     " lacks complete records");
        }
        keyed.emplace_back(variance(id), id);
    }
    std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < keyed.size(); ++i) sample_ids[i] = keyed[i].second;
    return sample_ids;
}

void ConfidenceLedger::write_csv(const std::string& path,
                                 const std::map<std::size_t, std::size_t>& class_of) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    out << "sample_id,class";
    for (std::size_t e = 1; e <= horizon_; ++e) out << ",gamma_" << e;
    out << ",variance\n";
    char buf[32];
    for (const auto& [id, seq] : records_) {
        if (seq.size() != horizon_) continue;
        auto cls = class_of.find(id);
        out << id << "," << (cls == class_of.end() ? -1 : static_cast<long>(cls->second));
        for (double g : seq) {
            std::snprintf(buf, sizeof(buf), "%.9g", g);
            out << "," << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.9g", variance(id));
        out << "," << buf << "\n";
    }
}

}  // namespace acr
