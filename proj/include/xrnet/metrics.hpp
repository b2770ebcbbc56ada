#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xrnet/error.hpp"

namespace xrnet {

// K x K count table; rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<std::vector<std::uint64_t>> counts;
    std::vector<std::string> class_names;

    std::size_t num_classes() const { return counts.size(); }
    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(std::size_t k) const;
    std::uint64_t col_sum(std::size_t k) const;
};

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                 std::size_t num_classes,
                                 std::vector<std::string> class_names = {});

struct ClassMetrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;  // true instances of the class
    bool degenerate = false;    // some 0/0 was defined as 0
};

struct ClassificationReport {
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    std::uint64_t total = 0;
};

// precision = diag/col_sum, recall = diag/row_sum, F1 their harmonic mean;
// 0/0 cells are defined as 0 and flagged. Macro values are unweighted means.
ClassificationReport classification_report(const ConfusionMatrix& cm);

// CSV schema: "class,precision,recall,f1,support" data rows, then a macro
// row and an accuracy row. Values carry full precision.
std::string report_csv(const ClassificationReport& report);
ClassificationReport parse_report_csv(const std::string& csv);

// Plain-text aligned table; percentages with 2 decimal places.
std::string report_table(const ClassificationReport& report, const ConfusionMatrix& cm);

// Standalone SVG heatmap of the confusion matrix with per-cell counts.
// Byte-deterministic for identical inputs.
std::string confusion_svg(const ConfusionMatrix& cm);

}  // namespace xrnet
