#ifndef AXCRAWL_EVAL_HPP
#define AXCRAWL_EVAL_HPP

#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "axcrawl/ax_model.hpp"
#include "axcrawl/tasks.hpp"

namespace axcrawl {

class UnparseablePrediction : public std::runtime_error {
public:
    explicit UnparseablePrediction(const std::string& raw)
        : std::runtime_error("unparseable prediction: '" + raw + "'") {}
};

class PredictorFailure : public std::runtime_error {
public:
    explicit PredictorFailure(const std::string& what) : std::runtime_error(what) {}
};

struct Prediction {
    enum class Kind { Click, Type };
    Kind kind = Kind::Click;
    std::optional<Point> point;  // pixels
    std::optional<std::string> text;
    std::string raw;

    bool operator==(const Prediction&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

struct Scanner {
    const std::string& s;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool literal(const char* word) {
        skip_ws();
        const std::size_t n = std::string_view(word).size();
        if (s.compare(pos, n, word) != 0) return false;
        pos += n;
        return true;
    }
    std::optional<double> number() {
        skip_ws();
        std::size_t start = pos;
        if (pos < s.size() && (s[pos] == '-' || s[pos] == '+')) ++pos;
        bool digits = false;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            ++pos;
            digits = true;
        }
        if (pos < s.size() && s[pos] == '.') {
            ++pos;
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
                ++pos;
                digits = true;
            }
        }
        if (!digits) {
            pos = start;
            return std::nullopt;
        }
        return std::stod(s.substr(start, pos - start));
    }
    bool done() {
        skip_ws();
        return pos == s.size();
    }
};

}  // namespace detail

/// Accepts the dataset grammars "left click, (x, y)" and "type <text>" with
/// tolerant whitespace around the click tokens. The typed text is everything
/// after "type " verbatim.
inline Prediction parse_prediction(const std::string& raw) {
    const std::string s = detail::trim(raw);
    Prediction p;
    p.raw = raw;

    if (s.rfind("type ", 0) == 0 && s.size() > 5) {
        p.kind = Prediction::Kind::Type;
        p.text = s.substr(5);
        return p;
    }

    detail::Scanner sc{s};
    if (sc.literal("left") && sc.literal("click") && sc.literal(",") && sc.literal("(")) {
        const auto x = sc.number();
        if (x && sc.literal(",")) {
            const auto y = sc.number();
            if (y && sc.literal(")") && sc.done()) {
                p.kind = Prediction::Kind::Click;
                p.point = Point{*x, *y};
                return p;
            }
        }
    }
    throw UnparseablePrediction(raw);
}

/// Success rule: click predictions (pixel space) scale down by the record's
/// scaling factor and must land inside the target bbox, edges inclusive;
/// input predictions must match the gold text byte-exactly. A kind mismatch
/// never succeeds.
inline bool judge(const Prediction& pred, const TaskRecord& record) {
    const bool record_is_click = record.action.rfind("left click", 0) == 0;
    if (record_is_click) {
        if (pred.kind != Prediction::Kind::Click || !pred.point) return false;
        const Point in_points{pred.point->x / record.scaling_factor,
                              pred.point->y / record.scaling_factor};
        return record.element_data.bbox.contains(in_points);
    }
    if (record.action.rfind("type ", 0) == 0) {
        if (pred.kind != Prediction::Kind::Type || !pred.text) return false;
        return *pred.text == record.action.substr(5);
    }
    return false;
}

// ---------------------------------------------------------------------------
// Evaluation loop.
// ---------------------------------------------------------------------------

/// A predictor maps one record to a raw prediction string. Built-in
/// predictors may read the gold record (the oracle is harness self-test
/// only); external adapters see only the image path, tree, and task.
using Predictor = std::function<std::string(const TaskRecord&)>;

struct EvalReport {
    double overall_accuracy = 0.0;
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> by_task_category;
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> by_element_category;
    std::vector<double> per_run_accuracies;
    std::pair<double, double> mean_and_stddev{0.0, 0.0};
};

inline EvalReport evaluate(const std::vector<TaskRecord>& dataset, const Predictor& predictor,
                           int runs = 1) {
    if (dataset.empty()) throw std::invalid_argument("empty dataset");
    if (runs < 1) throw std::invalid_argument("runs must be >= 1");

    EvalReport report;
    std::uint64_t successes = 0;
    for (int run = 0; run < runs; ++run) {
        std::uint64_t run_successes = 0;
        for (const auto& record : dataset) {
            bool ok = false;
            try {
                const std::string raw = predictor(record);
                ok = judge(parse_prediction(raw), record);
            } catch (const UnparseablePrediction&) {
                ok = false;  // scored failure, not an exclusion
            } catch (const std::exception&) {
                ok = false;  // predictor failure counts against it
            }
            auto& tc = report.by_task_category[record.task_category];
            auto& ec = report.by_element_category[record.element_category];
            tc.second += 1;
            ec.second += 1;
            if (ok) {
                tc.first += 1;
                ec.first += 1;
                ++run_successes;
                ++successes;
            }
        }
        report.per_run_accuracies.push_back(static_cast<double>(run_successes) / dataset.size());
    }
    report.overall_accuracy =
        static_cast<double>(successes) / (static_cast<double>(dataset.size()) * runs);

    double mean = 0.0;
    for (double a : report.per_run_accuracies) mean += a;
    mean /= report.per_run_accuracies.size();
    double var = 0.0;
    if (report.per_run_accuracies.size() > 1) {
        for (double a : report.per_run_accuracies) var += (a - mean) * (a - mean);
        var /= (report.per_run_accuracies.size() - 1);
    }
    report.mean_and_stddev = {mean, std::sqrt(var)};
    return report;
}

// ---------------------------------------------------------------------------
// Built-in predictors.
// ---------------------------------------------------------------------------

/// Reads the gold record and answers perfectly. Harness self-test only.
inline Predictor oracle_predictor() {
    return [](const TaskRecord& r) -> std::string {
        if (r.action.rfind("type ", 0) == 0) return r.action;
        const Point c = r.element_data.bbox.center();
        char buf[64];
        std::snprintf(buf, sizeof(buf), "left click, (%.3f, %.3f)", c.x * r.scaling_factor,
                      c.y * r.scaling_factor);
        return buf;
    };
}

/// Uniform click over the screen (the rendered window area), in pixels.
inline Predictor random_predictor(std::uint64_t seed) {
    auto state = std::make_shared<std::uint64_t>(seed);
    return [state](const TaskRecord& r) -> std::string {
        const BBox& win = r.a11y_path.window_bbox;
        const double w_px = win.w * r.scaling_factor;
        const double h_px = win.h * r.scaling_factor;
        auto unit = [&] {
            return static_cast<double>(detail::splitmix64(*state) >> 11) * 0x1.0p-53;
        };
        const double x = win.x * r.scaling_factor + unit() * w_px;
        const double y = win.y * r.scaling_factor + unit() * h_px;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "left click, (%.6f, %.6f)", x, y);
        return buf;
    };
}

inline Predictor fixed_point_predictor(double x, double y) {
    return [x, y](const TaskRecord&) -> std::string {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "left click, (%.3f, %.3f)", x, y);
        return buf;
    };
}

/// Always emits something outside both grammars.
inline Predictor never_parse_predictor() {
    return [](const TaskRecord&) -> std::string { return "press the button"; };
}

// ---------------------------------------------------------------------------
// Report formatting.
// ---------------------------------------------------------------------------

enum class ReportStyle { Markdown, Csv };

namespace detail {

inline std::string percent_cell(const std::pair<std::uint64_t, std::uint64_t>& cell) {
    if (cell.second == 0) return "—";  // em dash for empty categories
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * cell.first / cell.second);
    return buf;
}

inline std::vector<std::string> ordered_categories(
    const std::map<std::string, std::pair<std::uint64_t, std::uint64_t>>& cells,
    const std::vector<std::string>& canonical) {
    std::vector<std::string> out;
    for (const auto& c : canonical)
        if (cells.count(c)) out.push_back(c);
    for (const auto& [c, _] : cells) {
        bool known = false;
        for (const auto& k : canonical)
            if (k == c) known = true;
        if (!known) out.push_back(c);
    }
    return out;
}

inline void format_axis(std::ostringstream& out, const std::string& title,
                        const std::map<std::string, std::pair<std::uint64_t, std::uint64_t>>& cells,
                        const std::vector<std::string>& canonical, double overall,
                        ReportStyle style) {
    const auto cats = ordered_categories(cells, canonical);
    char overall_buf[32];
    std::snprintf(overall_buf, sizeof(overall_buf), "%.2f%%", 100.0 * overall);
    if (style == ReportStyle::Markdown) {
        out << "| " << title << " |";
        for (const auto& c : cats) out << " " << c << " |";
        out << " Overall |\n";
        out << "| --- |";
        for (std::size_t i = 0; i < cats.size() + 1; ++i) out << " --- |";
        out << "\n| accuracy |";
        for (const auto& c : cats) out << " " << percent_cell(cells.at(c)) << " |";
        out << " " << overall_buf << " |\n";
    } else {
        out << title;
        for (const auto& c : cats) out << "," << c;
        out << ",Overall\naccuracy";
        for (const auto& c : cats) out << "," << percent_cell(cells.at(c));
        out << "," << overall_buf << "\n";
    }
}

}  // namespace detail

inline std::string format_report(const EvalReport& r, ReportStyle style) {
    std::ostringstream out;
    detail::format_axis(out, "Task category", r.by_task_category, task_categories(),
                        r.overall_accuracy, style);
    out << "\n";
    detail::format_axis(out, "Element category", r.by_element_category, element_categories(),
                        r.overall_accuracy, style);
    if (r.per_run_accuracies.size() > 1) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f%% ± %.2f%%", 100.0 * r.mean_and_stddev.first,
                      100.0 * r.mean_and_stddev.second);
        out << "\n" << (style == ReportStyle::Markdown ? "**Runs**: " : "runs,") <<
            r.per_run_accuracies.size() << (style == ReportStyle::Markdown ? ", mean " : ",") << buf
            << "\n";
    }
    return out.str();
}

inline ordered_json eval_report_to_json(const EvalReport& r) {
    ordered_json j;
    j["overall_accuracy"] = r.overall_accuracy;
    ordered_json tc, ec;
    for (const auto& [c, cell] : r.by_task_category)
        tc[c] = ordered_json::array({cell.first, cell.second});
    for (const auto& [c, cell] : r.by_element_category)
        ec[c] = ordered_json::array({cell.first, cell.second});
    j["by_task_category"] = tc;
    j["by_element_category"] = ec;
    j["per_run_accuracies"] = r.per_run_accuracies;
    j["mean"] = r.mean_and_stddev.first;
    j["stddev"] = r.mean_and_stddev.second;
    return j;
}

}  // namespace axcrawl

#endif  // AXCRAWL_EVAL_HPP
