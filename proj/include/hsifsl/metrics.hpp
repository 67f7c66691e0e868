#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "hsifsl/tensor.hpp"

namespace hsifsl {

/// Rows = true class, columns = predicted class (both 0-based locals).
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;  // classes x classes

    explicit ConfusionMatrix(std::size_t c = 0) : classes(c), counts(c * c, 0) {}

    std::uint64_t& at(std::size_t truth, std::size_t pred) {
        return counts[truth * classes + pred];
    }
    std::uint64_t at(std::size_t truth, std::size_t pred) const {
        return counts[truth * classes + pred];
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto v : counts) t += v;
        return t;
    }

    void merge(const ConfusionMatrix& other) {
        if (other.classes != classes)
            throw std::invalid_argument("confusion matrix: class count mismatch");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    }
};

struct MetricsEntry {
    double oa = 0, aa = 0, kappa = 0;
    std::vector<double> per_class;  // per-class recall; NaN when the class is absent
    std::uint64_t total = 0;
    std::uint64_t seed = 0;
};

/// OA = trace/total; AA = mean per-class recall over classes that occur;
/// kappa = (p_o - p_e) / (1 - p_e) with p_e from the row/column marginals.
inline MetricsEntry compute_metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw std::invalid_argument("compute_metrics: empty matrix");
    const std::size_t c = cm.classes;

    MetricsEntry m;
    m.total = total;
    std::uint64_t trace = 0;
    std::vector<std::uint64_t> row(c, 0), col(c, 0);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            row[i] += cm.at(i, j);
            col[j] += cm.at(i, j);
            if (i == j) trace += cm.at(i, j);
        }

    m.oa = static_cast<double>(trace) / static_cast<double>(total);

    double recall_sum = 0;
    std::size_t present = 0;
    m.per_class.assign(c, std::nan(""));
    for (std::size_t i = 0; i < c; ++i) {
        if (row[i] == 0) continue;
        m.per_class[i] = static_cast<double>(cm.at(i, i)) / static_cast<double>(row[i]);
        recall_sum += m.per_class[i];
        ++present;
    }
    m.aa = present ? recall_sum / static_cast<double>(present) : 0.0;

    double pe = 0;
    for (std::size_t i = 0; i < c; ++i)
        pe += static_cast<double>(row[i]) * static_cast<double>(col[i]);
    pe /= static_cast<double>(total) * static_cast<double>(total);
    m.kappa = (1.0 - pe) > 0 ? (m.oa - pe) / (1.0 - pe) : (m.oa >= 1.0 ? 1.0 : 0.0);
    return m;
}

struct MetricsReport {
    std::vector<MetricsEntry> entries;  // one per seed
    double mean_oa = 0, mean_aa = 0, mean_kappa = 0;
    double std_oa = 0, std_aa = 0, std_kappa = 0;
};

/// Mean and sample standard deviation (n-1; zero for a single entry).
inline MetricsReport aggregate_metrics(std::vector<MetricsEntry> entries) {
    if (entries.empty()) throw std::invalid_argument("aggregate_metrics: no entries");
    MetricsReport rep;
    rep.entries = std::move(entries);
    const double n = static_cast<double>(rep.entries.size());
    auto stats = [&](auto get, double& mean, double& std) {
        mean = 0;
        for (const auto& e : rep.entries) mean += get(e);
        mean /= n;
        std = 0;
        if (rep.entries.size() > 1) {
            for (const auto& e : rep.entries) {
                const double d = get(e) - mean;
                std += d * d;
            }
            std = std::sqrt(std / (n - 1.0));
        }
    };
    stats([](const MetricsEntry& e) { return e.oa; }, rep.mean_oa, rep.std_oa);
    stats([](const MetricsEntry& e) { return e.aa; }, rep.mean_aa, rep.std_aa);
    stats([](const MetricsEntry& e) { return e.kappa; }, rep.mean_kappa, rep.std_kappa);
    return rep;
}

inline nlohmann::json metrics_to_json(const MetricsEntry& m, const ConfusionMatrix& cm) {
    nlohmann::json confusion = nlohmann::json::array();
    for (std::size_t i = 0; i < cm.classes; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < cm.classes; ++j) row.push_back(cm.at(i, j));
        confusion.push_back(row);
    }
    nlohmann::json per_class = nlohmann::json::array();
    for (double v : m.per_class)
        per_class.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    return {{"oa", m.oa},       {"aa", m.aa},
            {"kappa", m.kappa}, {"per_class", per_class},
            {"confusion", confusion}, {"seed", m.seed}};
}

inline nlohmann::json report_to_json(const MetricsReport& rep) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& e : rep.entries)
        seeds.push_back({{"seed", e.seed}, {"oa", e.oa}, {"aa", e.aa},
                         {"kappa", e.kappa}});
    return {{"mean", {{"oa", rep.mean_oa}, {"aa", rep.mean_aa},
                      {"kappa", rep.mean_kappa}}},
            {"std", {{"oa", rep.std_oa}, {"aa", rep.std_aa},
                     {"kappa", rep.std_kappa}}},
            {"seeds", seeds}};
}

}  // namespace hsifsl
