#pragma once

// Classification metrics used by the detection experiments. Counts are kept
// as exact integers; derived ratios follow the usual conventions (empty
// denominators give 0).

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fdialab {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
};

struct DetectionMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    ConfusionCounts counts;
};

inline DetectionMetrics metrics_from_confusion(const ConfusionCounts& c) {
    DetectionMetrics m;
    m.counts = c;
    const std::uint64_t total = c.total();
    if (total == 0) throw std::invalid_argument("metrics: empty confusion matrix");
    m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
    m.precision = (c.tp + c.fp) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    m.recall = (c.tp + c.fn) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

// Per-class one-vs-rest breakdown for the localizer.
struct ClassMetrics {
    int label = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::uint64_t support = 0;
};

struct MulticlassMetrics {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    std::vector<std::vector<std::uint64_t>> confusion;  // [actual][predicted]
};

inline MulticlassMetrics multiclass_metrics(const std::vector<int>& actual,
                                            const std::vector<int>& predicted,
                                            int n_classes) {
    if (actual.size() != predicted.size() || actual.empty())
        throw std::invalid_argument("multiclass metrics: bad label vectors");
    MulticlassMetrics out;
    out.confusion.assign(static_cast<std::size_t>(n_classes),
                         std::vector<std::uint64_t>(static_cast<std::size_t>(n_classes), 0));
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        int a = actual[i], p = predicted[i];
        if (a < 0 || a >= n_classes || p < 0 || p >= n_classes)
            throw std::invalid_argument("multiclass metrics: label out of range");
        ++out.confusion[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)];
        if (a == p) ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(actual.size());
    for (int c = 0; c < n_classes; ++c) {
        std::uint64_t tp = out.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
        std::uint64_t row = 0, col = 0;
        for (int j = 0; j < n_classes; ++j) {
            row += out.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
            col += out.confusion[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
        }
        ClassMetrics cm;
        cm.label = c;
        cm.support = row;
        cm.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        cm.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        cm.f1 = (cm.precision + cm.recall) > 0.0
                    ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                    : 0.0;
        out.per_class.push_back(cm);
    }
    return out;
}

}  // namespace fdialab
