#include "acr/buffer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <json.hpp>

namespace acr {

std::string policy_name(BufferPolicy policy) {
    switch (policy) {
        case BufferPolicy::Challenging: return "challenging";
        case BufferPolicy::Hard: return "hard";
        case BufferPolicy::RandomBalanced: return "random";
        case BufferPolicy::Reservoir: return "reservoir";
    }
    throw std::logic_error("policy_name: unknown policy tag");
}

BufferPolicy policy_from_name(const std::string& name) {
    if (name == "challenging") return BufferPolicy::Challenging;
    if (name == "hard") return BufferPolicy::Hard;
    if (name == "random") return BufferPolicy::RandomBalanced;
    if (name == "reservoir") return BufferPolicy::Reservoir;
    throw std::invalid_argument("unknown buffer policy '" + name +
                                "' (expected challenging, hard, random, or reservoir)");
}

std::map<std::size_t, std::size_t> class_quotas(
        std::size_t capacity, const std::vector<std::vector<std::size_t>>& task_classes) {
    if (capacity == 0) throw std::invalid_argument("class_quotas: zero capacity");
    const std::size_t t = task_classes.size();
    if (t == 0) throw std::invalid_argument("class_quotas: no tasks");
    std::size_t total_classes = 0;
    for (const auto& classes : task_classes) {
        if (classes.empty()) throw std::invalid_argument("class_quotas: empty class set");
        total_classes += classes.size();
    }

    std::map<std::size_t, std::size_t> quota;
    if (capacity < total_classes) {
        std::cerr << "[buffer] capacity " << capacity << " below " << total_classes
                  << " classes; only the first " << capacity
                  << " classes receive a slot\n";
        std::size_t left = capacity;
        for (const auto& classes : task_classes) {
            for (std::size_t c : classes) {
                quota[c] = left > 0 ? 1 : 0;
                if (left > 0) --left;
            }
        }
        return quota;
    }

    std::size_t allocated = 0;
    for (const auto& classes : task_classes) {
        const std::size_t per_class = capacity / (t * classes.size());
        for (std::size_t c : classes) {
            quota[c] = per_class;
            allocated += per_class;
        }
    }
    // hand out the remainder one slot at a time, earliest (task, class) first
    while (allocated < capacity) {
        for (const auto& classes : task_classes) {
            for (std::size_t c : classes) {
                if (allocated == capacity) return quota;
                ++quota[c];
                ++allocated;
            }
        }
    }
    return quota;
}

double coefficient_of_variation(const std::vector<std::size_t>& counts) {
    if (counts.empty()) {
        throw std::invalid_argument("coefficient_of_variation: no counts");
    }
    double mean = 0.0;
    for (std::size_t c : counts) mean += static_cast<double>(c);
    mean /= static_cast<double>(counts.size());
    if (mean == 0.0) return std::nan("");
    double var = 0.0;
    for (std::size_t c : counts) {
        const double d = static_cast<double>(c) - mean;
        var += d * d;
    }
    var /= static_cast<double>(counts.size());
    return std::sqrt(var) / mean * 100.0;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, BufferPolicy policy)
    : capacity_(capacity), policy_(policy) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
}

std::size_t ReplayBuffer::size() const {
    if (policy_ == BufferPolicy::Reservoir) return flat_.size();
    std::size_t total = 0;
    for (const auto& [task, classes] : partitions_) {
        for (const auto& [cls, list] : classes) total += list.size();
    }
    return total;
}

void ReplayBuffer::require_policy(bool balanced, const char* op) const {
    const bool is_balanced = policy_ != BufferPolicy::Reservoir;
    if (balanced != is_balanced) {
        throw std::logic_error(std::string(op) + ": not available under the " +
                               policy_name(policy_) + " policy");
    }
}

std::vector<Sample> ReplayBuffer::prune_to_quotas(
        const std::map<std::size_t, std::size_t>& quotas) {
    require_policy(true, "prune_to_quotas");
    std::vector<Sample> removed;
    for (auto& [task, classes] : partitions_) {
        for (auto& [cls, list] : classes) {
            auto it = quotas.find(cls);
            if (it == quotas.end()) {
                throw std::invalid_argument("prune_to_quotas: stored class " +
                                            std::to_string(cls) + " has no new quota");
            }
            const std::size_t keep = it->second;
            while (list.size() > keep) {
                removed.push_back(std::move(list.back()));
                list.pop_back();
            }
        }
    }
    return removed;
}

void ReplayBuffer::store_selection(std::size_t task_id, std::size_t class_id,
                                   std::vector<Sample> chosen) {
    std::vector<Sample>& slot = partitions_[task_id][class_id];
    const std::size_t others = size() - slot.size();
    if (others + chosen.size() > capacity_) {
        throw std::logic_error("buffer update would exceed capacity " +
                               std::to_string(capacity_) + "; prune before updating");
    }
    slot = std::move(chosen);
}

namespace {

std::map<std::size_t, std::vector<const Sample*>> group_by_class(
        std::size_t task_id, const std::vector<Sample>& task_samples) {
    std::map<std::size_t, std::vector<const Sample*>> grouped;
    for (const Sample& s : task_samples) {
        if (s.task_id != task_id) {
            throw std::invalid_argument("buffer update: sample " + std::to_string(s.id) +
                                        " is from task " + std::to_string(s.task_id) +
                                        ", not " + std::to_string(task_id));
        }
        grouped[s.label].push_back(&s);
    }
    return grouped;
}

std::size_t quota_for(const std::map<std::size_t, std::size_t>& quotas,
                      std::size_t class_id) {
    auto it = quotas.find(class_id);
    if (it == quotas.end()) {
        throw std::invalid_argument("buffer update: no quota for class " +
                                    std::to_string(class_id));
    }
    return it->second;
}

void warn_shortfall(std::size_t class_id, std::size_t have, std::size_t quota) {
    if (have < quota) {
        std::cerr << "[buffer] class " << class_id << " has " << have
                  << " samples for a quota of " << quota << "; storing all\n";
    }
}

}  // namespace

void ReplayBuffer::update_challenging(const ConfidenceLedger& ledger, std::size_t task_id,
                                      const std::vector<Sample>& task_samples,
                                      const std::map<std::size_t, std::size_t>& quotas) {
    if (policy_ != BufferPolicy::Challenging) {
        throw std::logic_error("update_challenging: buffer policy is " +
                               policy_name(policy_));
    }
    for (auto& [cls, members] : group_by_class(task_id, task_samples)) {
        const std::size_t quota = quota_for(quotas, cls);
        warn_shortfall(cls, members.size(), quota);

        std::map<std::size_t, const Sample*> by_id;
        std::vector<std::size_t> ids;
        for (const Sample* s : members) {
            by_id[s->id] = s;
            ids.push_back(s->id);
        }
        std::vector<std::size_t> ranked = ledger.rank_class(cls, std::move(ids));
        std::vector<Sample> chosen;
        for (std::size_t i = 0; i < std::min(quota, ranked.size()); ++i) {
            chosen.push_back(*by_id[ranked[i]]);
        }
        store_selection(task_id, cls, std::move(chosen));
    }
}

void ReplayBuffer::update_hard(const ConfidenceLedger& ledger, std::size_t task_id,
                               const std::vector<Sample>& task_samples,
                               const std::map<std::size_t, std::size_t>& quotas) {
    if (policy_ != BufferPolicy::Hard) {
        throw std::logic_error("update_hard: buffer policy is " + policy_name(policy_));
    }
    for (auto& [cls, members] : group_by_class(task_id, task_samples)) {
        const std::size_t quota = quota_for(quotas, cls);
        warn_shortfall(cls, members.size(), quota);

        std::vector<std::pair<double, const Sample*>> keyed;
        for (const Sample* s : members) {
            keyed.emplace_back(ledger.mean_confidence(s->id), s);
        }
        std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return a.second->id < b.second->id;
        });
        std::vector<Sample> chosen;
        for (std::size_t i = 0; i < std::min(quota, keyed.size()); ++i) {
            chosen.push_back(*keyed[i].second);
        }
        store_selection(task_id, cls, std::move(chosen));
    }
}

void ReplayBuffer::update_random_balanced(std::mt19937& rng, std::size_t task_id,
                                          const std::vector<Sample>& task_samples,
                                          const std::map<std::size_t, std::size_t>& quotas) {
    if (policy_ != BufferPolicy::RandomBalanced) {
        throw std::logic_error("update_random_balanced: buffer policy is " +
                               policy_name(policy_));
    }
    for (auto& [cls, members] : group_by_class(task_id, task_samples)) {
        const std::size_t quota = quota_for(quotas, cls);
        warn_shortfall(cls, members.size(), quota);

        // partial Fisher-Yates over index positions
        std::vector<std::size_t> idx(members.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        const std::size_t take = std::min(quota, members.size());
        for (std::size_t i = 0; i < take; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        std::vector<Sample> chosen;
        for (std::size_t i = 0; i < take; ++i) chosen.push_back(*members[idx[i]]);
        store_selection(task_id, cls, std::move(chosen));
    }
}

void ReplayBuffer::reservoir_insert(std::mt19937& rng, const Sample& sample) {
    require_policy(false, "reservoir_insert");
    ++n_seen_;
    if (flat_.size() < capacity_) {
        flat_.push_back(sample);
        return;
    }
    std::uniform_int_distribution<std::size_t> slot(0, n_seen_ - 1);
    const std::size_t j = slot(rng);
    if (j < capacity_) flat_[j] = sample;
}

std::vector<Sample> ReplayBuffer::random_retrieval(std::mt19937& rng,
                                                   std::size_t batch) const {
    std::vector<const Sample*> stored = all_samples();
    std::vector<Sample> out;
    if (stored.empty()) return out;
    std::uniform_int_distribution<std::size_t> pick(0, stored.size() - 1);
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(*stored[pick(rng)]);
    return out;
}

std::map<std::size_t, std::size_t> ReplayBuffer::per_task_counts() const {
    std::map<std::size_t, std::size_t> counts;
    for (const Sample* s : all_samples()) ++counts[s->task_id];
    return counts;
}

std::map<std::size_t, std::size_t> ReplayBuffer::per_class_counts() const {
    std::map<std::size_t, std::size_t> counts;
    for (const Sample* s : all_samples()) ++counts[s->label];
    return counts;
}

namespace {

double cv_of_counts(const std::map<std::size_t, std::size_t>& counts) {
    if (counts.empty()) return std::nan("");
    std::vector<std::size_t> values;
    for (const auto& [key, n] : counts) values.push_back(n);
    return coefficient_of_variation(values);
}

}  // namespace

double ReplayBuffer::cv_tasks() const { return cv_of_counts(per_task_counts()); }

double ReplayBuffer::cv_classes() const { return cv_of_counts(per_class_counts()); }

std::vector<const Sample*> ReplayBuffer::all_samples() const {
    std::vector<const Sample*> out;
    if (policy_ == BufferPolicy::Reservoir) {
        for (const Sample& s : flat_) out.push_back(&s);
        return out;
    }
    for (const auto& [task, classes] : partitions_) {
        for (const auto& [cls, list] : classes) {
            for (const Sample& s : list) out.push_back(&s);
        }
    }
    return out;
}

const std::vector<Sample>* ReplayBuffer::class_list(std::size_t task_id,
                                                    std::size_t class_id) const {
    auto task_it = partitions_.find(task_id);
    if (task_it == partitions_.end()) return nullptr;
    auto cls_it = task_it->second.find(class_id);
    if (cls_it == task_it->second.end()) return nullptr;
    return &cls_it->second;
}

void ReplayBuffer::write_snapshot(const std::string& path) const {
    nlohmann::json j;
    j["capacity"] = capacity_;
    j["policy"] = policy_name(policy_);
    j["stored"] = size();

    nlohmann::json tasks = nlohmann::json::array();
    std::map<std::size_t, std::map<std::size_t, std::vector<std::size_t>>> grouped;
    for (const Sample* s : all_samples()) grouped[s->task_id][s->label].push_back(s->id);
    for (const auto& [task, classes] : grouped) {
        nlohmann::json jt;
        jt["task"] = task;
        jt["classes"] = nlohmann::json::array();
        for (const auto& [cls, ids] : classes) {
            jt["classes"].push_back({{"class", cls}, {"ids", ids}, {"count", ids.size()}});
        }
        tasks.push_back(std::move(jt));
    }
    j["tasks"] = std::move(tasks);

    std::vector<std::size_t> task_counts, class_counts;
    for (const auto& [key, n] : per_task_counts()) task_counts.push_back(n);
    for (const auto& [key, n] : per_class_counts()) class_counts.push_back(n);
    j["task_counts"] = task_counts;
    j["class_counts"] = class_counts;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_snapshot: cannot open " + path);
    out << j.dump(2) << "\n";
}

}  // namespace acr
