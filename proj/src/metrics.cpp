#include "xrnet/metrics.hpp"

#include <algorithm>
#include <cstdlib>

#include "xrnet/text.hpp"

namespace xrnet {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t sum = 0;
    for (const auto& row : counts) {
        for (const std::uint64_t cell : row) {
            sum += cell;
        }
    }
    return sum;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t sum = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        sum += counts[k][k];
    }
    return sum;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t k) const {
    std::uint64_t sum = 0;
    for (const std::uint64_t cell : counts[k]) {
        sum += cell;
    }
    return sum;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t k) const {
    std::uint64_t sum = 0;
    for (const auto& row : counts) {
        sum += row[k];
    }
    return sum;
}

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                 std::size_t num_classes,
                                 std::vector<std::string> class_names) {
    if (y_true.size() != y_pred.size()) {
        throw DataError(str_printf("label sequences differ in length: %zu vs %zu",
                                   y_true.size(), y_pred.size()));
    }
    if (num_classes == 0) {
        throw ConfigError("confusion matrix needs at least one class");
    }
    ConfusionMatrix cm;
    cm.counts.assign(num_classes, std::vector<std::uint64_t>(num_classes, 0));
    if (class_names.empty()) {
        for (std::size_t k = 0; k < num_classes; ++k) {
            class_names.push_back("class_" + std::to_string(k));
        }
    }
    if (class_names.size() != num_classes) {
        throw ConfigError(str_printf("%zu class names given for %zu classes",
                                     class_names.size(), num_classes));
    }
    cm.class_names = std::move(class_names);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || static_cast<std::size_t>(t) >= num_classes) {
            throw DataError(str_printf("true label %d out of range for %zu classes", t,
                                       num_classes));
        }
        if (p < 0 || static_cast<std::size_t>(p) >= num_classes) {
            throw DataError(str_printf("predicted label %d out of range for %zu classes", p,
                                       num_classes));
        }
        ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return cm;
}

ClassificationReport classification_report(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) {
        throw DataError("classification report over zero samples");
    }
    ClassificationReport report;
    report.total = total;
    report.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
    for (std::size_t k = 0; k < cm.num_classes(); ++k) {
        ClassMetrics m;
        m.name = cm.class_names[k];
        const std::uint64_t diag = cm.counts[k][k];
        const std::uint64_t row = cm.row_sum(k);
        const std::uint64_t col = cm.col_sum(k);
        m.support = row;
        if (col == 0) {
            m.precision = 0.0;
            m.degenerate = true;
        } else {
            m.precision = static_cast<double>(diag) / static_cast<double>(col);
        }
        if (row == 0) {
            m.recall = 0.0;
            m.degenerate = true;
        } else {
            m.recall = static_cast<double>(diag) / static_cast<double>(row);
        }
        if (m.precision + m.recall == 0.0) {
            m.f1 = 0.0;
            m.degenerate = true;
        } else {
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        }
        precision_sum += m.precision;
        recall_sum += m.recall;
        f1_sum += m.f1;
        report.per_class.push_back(std::move(m));
    }
    const double k = static_cast<double>(cm.num_classes());
    report.macro_precision = precision_sum / k;
    report.macro_recall = recall_sum / k;
    report.macro_f1 = f1_sum / k;
    return report;
}

std::string report_csv(const ClassificationReport& report) {
    std::string out = "class,precision,recall,f1,support\n";
    for (const ClassMetrics& m : report.per_class) {
        out += m.name;
        out += ',';
        out += format_exact(m.precision);
        out += ',';
        out += format_exact(m.recall);
        out += ',';
        out += format_exact(m.f1);
        out += ',';
        out += std::to_string(m.support);
        out += '\n';
    }
    out += "macro,";
    out += format_exact(report.macro_precision);
    out += ',';
    out += format_exact(report.macro_recall);
    out += ',';
    out += format_exact(report.macro_f1);
    out += ',';
    out += std::to_string(report.total);
    out += '\n';
    out += "accuracy,";
    out += format_exact(report.accuracy);
    out += ",,,";
    out += std::to_string(report.total);
    out += '\n';
    return out;
}

ClassificationReport parse_report_csv(const std::string& csv) {
    const std::vector<std::string> lines = split(csv, '\n');
    if (lines.size() < 4 || lines[0] != "class,precision,recall,f1,support") {
        throw DataError("malformed report CSV");
    }
    ClassificationReport report;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) {
            continue;
        }
        const std::vector<std::string> fields = split(lines[i], ',');
        if (fields.size() != 5) {
            throw DataError(str_printf("report CSV line %zu has %zu fields", i + 1,
                                       fields.size()));
        }
        if (fields[0] == "macro") {
            report.macro_precision = std::strtod(fields[1].c_str(), nullptr);
            report.macro_recall = std::strtod(fields[2].c_str(), nullptr);
            report.macro_f1 = std::strtod(fields[3].c_str(), nullptr);
            report.total = std::strtoull(fields[4].c_str(), nullptr, 10);
        } else if (fields[0] == "accuracy") {
            report.accuracy = std::strtod(fields[1].c_str(), nullptr);
            report.total = std::strtoull(fields[4].c_str(), nullptr, 10);
        } else {
            ClassMetrics m;
            m.name = fields[0];
            m.precision = std::strtod(fields[1].c_str(), nullptr);
            m.recall = std::strtod(fields[2].c_str(), nullptr);
            m.f1 = std::strtod(fields[3].c_str(), nullptr);
            m.support = std::strtoull(fields[4].c_str(), nullptr, 10);
            report.per_class.push_back(std::move(m));
        }
    }
    return report;
}

std::string report_table(const ClassificationReport& report, const ConfusionMatrix& cm) {
    std::size_t name_width = 9;  // fits "accuracy"
    for (const ClassMetrics& m : report.per_class) {
        name_width = std::max(name_width, m.name.size());
    }
    const int w = static_cast<int>(name_width);
    std::string out;
    out += str_printf("%-*s %10s %10s %10s %10s\n", w, "class", "precision", "recall",
                      "f1", "support");
    for (const ClassMetrics& m : report.per_class) {
        out += str_printf("%-*s %9.2f%% %9.2f%% %9.2f%% %10llu%s\n", w, m.name.c_str(),
                          m.precision * 100.0, m.recall * 100.0, m.f1 * 100.0,
                          static_cast<unsigned long long>(m.support),
                          m.degenerate ? "  (degenerate)" : "");
    }
    out += str_printf("%-*s %9.2f%% %9.2f%% %9.2f%% %10llu\n", w, "macro",
                      report.macro_precision * 100.0, report.macro_recall * 100.0,
                      report.macro_f1 * 100.0,
                      static_cast<unsigned long long>(report.total));
    out += str_printf("%-*s %9.2f%%\n", w, "accuracy", report.accuracy * 100.0);
    out += "\nconfusion matrix (rows: true, columns: predicted)\n";
    std::size_t cell_width = 6;
    for (const std::string& name : cm.class_names) {
        cell_width = std::max(cell_width, name.size() + 1);
    }
    const int cw = static_cast<int>(cell_width);
    out += str_printf("%-*s", w, "");
    for (const std::string& name : cm.class_names) {
        out += str_printf(" %*s", cw, name.c_str());
    }
    out += '\n';
    for (std::size_t i = 0; i < cm.num_classes(); ++i) {
        out += str_printf("%-*s", w, cm.class_names[i].c_str());
        for (std::size_t j = 0; j < cm.num_classes(); ++j) {
            out += str_printf(" %*llu", cw, static_cast<unsigned long long>(cm.counts[i][j]));
        }
        out += '\n';
    }
    return out;
}

namespace {

std::string xml_escape(const std::string& text) {
    std::string out;
    for (const char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string confusion_svg(const ConfusionMatrix& cm) {
    const std::size_t k = cm.num_classes();
    const int cell = 96, margin = 110, title_gap = 40;
    const int grid = cell * static_cast<int>(k);
    const int width = margin + grid + 20;
    const int height = title_gap + grid + margin;
    std::uint64_t max_count = 1;
    for (const auto& row : cm.counts) {
        for (const std::uint64_t c : row) {
            max_count = std::max(max_count, c);
        }
    }
    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += str_printf("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                      "viewBox=\"0 0 %d %d\" font-family=\"monospace\">\n",
                      width, height, width, height);
    svg += str_printf("  <text x=\"%d\" y=\"24\" font-size=\"16\">confusion matrix "
                      "(rows: true, columns: predicted)</text>\n", margin);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const std::uint64_t count = cm.counts[i][j];
            // Darker blue for larger counts; text flips to white on dark cells.
            const int level = static_cast<int>((count * 200) / max_count);
            const int r = 235 - level, g = 240 - level, b = 255;
            const int x = margin + static_cast<int>(j) * cell;
            const int y = title_gap + static_cast<int>(i) * cell;
            svg += str_printf("  <rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                              "fill=\"rgb(%d,%d,%d)\" stroke=\"black\"/>\n",
                              x, y, cell, cell, r, g, b);
            svg += str_printf("  <text x=\"%d\" y=\"%d\" font-size=\"18\" "
                              "text-anchor=\"middle\" fill=\"%s\">%llu</text>\n",
                              x + cell / 2, y + cell / 2 + 6,
                              level > 120 ? "white" : "black",
                              static_cast<unsigned long long>(count));
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        svg += str_printf("  <text x=\"%d\" y=\"%d\" font-size=\"13\" "
                          "text-anchor=\"end\">%s</text>\n",
                          margin - 8, title_gap + static_cast<int>(i) * cell + cell / 2 + 4,
                          xml_escape(cm.class_names[i]).c_str());
        svg += str_printf("  <text x=\"%d\" y=\"%d\" font-size=\"13\" "
                          "text-anchor=\"middle\">%s</text>\n",
                          margin + static_cast<int>(i) * cell + cell / 2,
                          title_gap + grid + 24, xml_escape(cm.class_names[i]).c_str());
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace xrnet
