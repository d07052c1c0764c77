#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vap/errors.hpp"
#include "vap/io/jsonl.hpp"

namespace vap::metrics {

struct LabelSet {
    std::map<std::string, int> entries; // video_id -> class index
    int num_classes = 0;
};

struct ClassStats {
    int class_index = 0;
    std::int64_t count = 0;   // N_i
    std::int64_t correct = 0; // M_i
    std::optional<double> accuracy; // unset when the class has no samples
};

struct EvaluationReport {
    std::vector<ClassStats> per_class; // one entry per class index
    double mean = 0.0;                 // average of per-class accuracies
    double overall_top1 = 0.0;         // M / N
    std::int64_t total = 0;
    std::int64_t total_correct = 0;
    std::size_t extra_predictions = 0; // predictions for unlabeled videos (ignored)
};

// Mean per-class top-1 accuracy: average of M_i/N_i over the classes that
// appear in the label set. strict_classes turns an absent class into an
// error instead of excluding it from the mean.
inline EvaluationReport mean_class_accuracy(const std::map<std::string, int>& predictions,
                                            const LabelSet& labels,
                                            bool strict_classes = false) {
    if (labels.entries.empty()) {
        throw ValidationError("label set is empty");
    }
    if (labels.num_classes <= 0) {
        throw ValidationError("label set has no classes");
    }
    for (const auto& [video_id, cls] : labels.entries) {
        if (cls < 0 || cls >= labels.num_classes) {
            throw ValidationError("label for video '" + video_id + "' out of range");
        }
    }

    std::vector<std::string> missing;
    for (const auto& [video_id, label] : labels.entries) {
        if (!predictions.count(video_id)) {
            missing.push_back(video_id);
        }
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << missing.size() << " labeled video(s) lack predictions:";
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i) {
            msg << ' ' << missing[i];
        }
        if (missing.size() > 10) {
            msg << " ...";
        }
        throw ValidationError(msg.str());
    }

    EvaluationReport report;
    report.per_class.resize(static_cast<std::size_t>(labels.num_classes));
    for (int c = 0; c < labels.num_classes; ++c) {
        report.per_class[static_cast<std::size_t>(c)].class_index = c;
    }
    for (const auto& [video_id, prediction] : predictions) {
        auto it = labels.entries.find(video_id);
        if (it == labels.entries.end()) {
            ++report.extra_predictions;
            continue;
        }
        if (prediction < 0 || prediction >= labels.num_classes) {
            throw ValidationError("prediction " + std::to_string(prediction) +
                                  " for video '" + video_id + "' outside [0, " +
                                  std::to_string(labels.num_classes) + ")");
        }
        ClassStats& stats = report.per_class[static_cast<std::size_t>(it->second)];
        ++stats.count;
        if (prediction == it->second) {
            ++stats.correct;
        }
    }

    double accuracy_sum = 0.0;
    int populated = 0;
    for (ClassStats& stats : report.per_class) {
        report.total += stats.count;
        report.total_correct += stats.correct;
        if (stats.count > 0) {
            stats.accuracy = static_cast<double>(stats.correct) /
                             static_cast<double>(stats.count);
            accuracy_sum += *stats.accuracy;
            ++populated;
        } else if (strict_classes) {
            throw ValidationError("class " + std::to_string(stats.class_index) +
                                  " has no labeled samples (strict mode)");
        }
    }
    report.mean = accuracy_sum / static_cast<double>(populated);
    report.overall_top1 =
        static_cast<double>(report.total_correct) / static_cast<double>(report.total);
    return report;
}

// Mean as a leaderboard percentage, rounded half-up to two decimals.
inline std::string format_mean_pct(double mean) {
    const long long scaled = static_cast<long long>(std::floor(mean * 10000.0 + 0.5));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld.%02lld", scaled / 100, scaled % 100);
    return buf;
}

// Plain-text leaderboard, row order preserved.
inline std::string leaderboard_table(
    const std::vector<std::pair<std::string, EvaluationReport>>& reports) {
    if (reports.empty()) {
        throw ValidationError("leaderboard requires at least one report");
    }
    std::size_t width = 6; // "method"
    for (const auto& [name, report] : reports) {
        width = std::max(width, name.size());
    }
    std::ostringstream out;
    out << "method";
    out << std::string(width - 6 + 2, ' ') << "mean\n";
    for (const auto& [name, report] : reports) {
        out << name << std::string(width - name.size() + 2, ' ')
            << format_mean_pct(report.mean) << '\n';
    }
    return out.str();
}

inline io::json leaderboard_json(
    const std::vector<std::pair<std::string, EvaluationReport>>& reports) {
    io::json rows = io::json::array();
    for (const auto& [name, report] : reports) {
        rows.push_back({{"method", name}, {"mean_pct", format_mean_pct(report.mean)}});
    }
    return rows;
}

inline io::json report_json(const EvaluationReport& report,
                            const std::vector<std::string>& class_names) {
    io::json per_class = io::json::array();
    for (const ClassStats& stats : report.per_class) {
        io::json row;
        row["class"] = stats.class_index;
        if (static_cast<std::size_t>(stats.class_index) < class_names.size()) {
            row["name"] = class_names[static_cast<std::size_t>(stats.class_index)];
        }
        row["count"] = stats.count;
        row["correct"] = stats.correct;
        if (stats.accuracy) {
            row["accuracy"] = *stats.accuracy;
        } else {
            row["accuracy"] = nullptr;
        }
        per_class.push_back(std::move(row));
    }
    io::json j;
    j["mean"] = report.mean;
    j["overall_top1"] = report.overall_top1;
    j["total"] = report.total;
    j["correct"] = report.total_correct;
    j["per_class"] = std::move(per_class);
    j["warnings"] = io::json{{"extra_predictions", report.extra_predictions}};
    return j;
}

// --- label file -----------------------------------------------------------

// Two-column records: video_id then class index or class name. Tab wins as
// separator when present so class names may contain spaces.
inline LabelSet load_labels(const std::filesystem::path& path,
                            const std::vector<std::string>& class_names) {
    std::ifstream in = io::open_input(path);
    LabelSet labels;
    labels.num_classes = static_cast<int>(class_names.size());

    std::map<std::string, int> name_to_index;
    for (std::size_t i = 0; i < class_names.size(); ++i) {
        name_to_index[class_names[i]] = static_cast<int>(i);
    }

    std::string line;
    std::size_t line_no = 0;
    const std::string source = path.string();
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        std::string video_id;
        std::string cls;
        const auto tab = line.find('\t');
        if (tab != std::string::npos) {
            video_id = line.substr(0, tab);
            cls = line.substr(tab + 1);
        } else {
            const auto space = line.find_first_of(" \t");
            if (space == std::string::npos) {
                throw ParseError(source, line_no, "expected 'video_id <class>'");
            }
            video_id = line.substr(0, space);
            cls = line.substr(line.find_first_not_of(" \t", space));
        }
        if (video_id.empty() || cls.empty()) {
            throw ParseError(source, line_no, "expected 'video_id <class>'");
        }

        int class_index = -1;
        if (std::all_of(cls.begin(), cls.end(), [](unsigned char c) { return std::isdigit(c); })) {
            class_index = std::stoi(cls);
        } else {
            auto it = name_to_index.find(cls);
            if (it == name_to_index.end()) {
                throw ParseError(source, line_no, "unknown class name '" + cls + "'");
            }
            class_index = it->second;
        }
        if (class_index < 0 || class_index >= labels.num_classes) {
            throw ParseError(source, line_no,
                             "class index " + std::to_string(class_index) + " outside [0, " +
                                 std::to_string(labels.num_classes) + ")");
        }
        if (!labels.entries.emplace(video_id, class_index).second) {
            throw ParseError(source, line_no, "duplicate label for video '" + video_id + "'");
        }
    }
    if (labels.entries.empty()) {
        throw ValidationError("label file '" + source + "' is empty");
    }
    return labels;
}

} // namespace vap::metrics
