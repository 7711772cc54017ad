#pragma once

#include <cstdint>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "params.hpp"

namespace fedcyte {

/// Confusion matrix (rows = true class, columns = predicted) and derived scores.
/// Classes with zero support are left out of balanced accuracy and macro F1.
struct MetricsReport {
    std::vector<std::vector<std::int64_t>> confusion;
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;
    std::vector<double> per_class_recall;
    std::vector<std::int64_t> support;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline MetricsReport metrics_from_confusion(std::vector<std::vector<std::int64_t>> confusion) {
    const std::size_t c = confusion.size();
    MetricsReport r;
    r.support.assign(c, 0);
    r.per_class_f1.assign(c, 0.0);
    r.per_class_recall.assign(c, 0.0);
    std::vector<std::int64_t> predicted(c, 0);
    std::int64_t total = 0, correct = 0;
    for (std::size_t t = 0; t < c; ++t) {
        if (confusion[t].size() != c) throw DimensionError("confusion matrix must be square");
        for (std::size_t p = 0; p < c; ++p) {
            const auto v = confusion[t][p];
            if (v < 0) throw DataError("confusion matrix entries must be non-negative");
            r.support[t] += v;
            predicted[p] += v;
            total += v;
        }
        correct += confusion[t][t];
    }
    if (total == 0) throw DataError("metrics: no samples");

    double recall_sum = 0.0, f1_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < c; ++k) {
        const auto tp = static_cast<double>(confusion[k][k]);
        const double precision = predicted[k] > 0 ? tp / static_cast<double>(predicted[k]) : 0.0;
        const double recall = r.support[k] > 0 ? tp / static_cast<double>(r.support[k]) : 0.0;
        r.per_class_recall[k] = recall;
        r.per_class_f1[k] = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        if (r.support[k] > 0) {
            ++present;
            recall_sum += recall;
            f1_sum += r.per_class_f1[k];
        }
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    r.balanced_accuracy = recall_sum / static_cast<double>(present);
    r.macro_f1 = f1_sum / static_cast<double>(present);
    r.confusion = std::move(confusion);
    return r;
}

inline MetricsReport evaluate(const ModelSpec& spec, const ParamVector& w, const LabeledDataset& ds) {
    if (ds.empty()) throw DataError("evaluate: empty dataset");
    if (ds.num_classes() != spec.num_classes) throw DimensionError("evaluate: class count does not match model");
    const std::size_t c = spec.num_classes;
    std::vector<std::vector<std::int64_t>> confusion(c, std::vector<std::int64_t>(c, 0));
    for (std::size_t i = 0; i < ds.size(); ++i) ++confusion[ds.label(i)][predict(spec, w, ds.row(i))];
    return metrics_from_confusion(std::move(confusion));
}

} // namespace fedcyte
