#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vap/errors.hpp"
#include "vap/io/jsonl.hpp"

namespace vap::fusion {

// Normalized per-class probabilities: entries in [0,1], summing to 1
// within 1e-9. Produced by softmax and preserved by every fusion step
// (all of them are convex combinations or re-normalizations).
using ProbVector = std::vector<double>;

inline bool is_prob_vector(const ProbVector& p, double tol = 1e-9) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) {
            return false;
        }
        sum += v;
    }
    return !p.empty() && std::abs(sum - 1.0) <= tol;
}

// Smallest index attaining the maximum.
inline int argmax(const std::vector<double>& values) {
    if (values.empty()) {
        throw ValidationError("argmax of empty vector");
    }
    return static_cast<int>(std::max_element(values.begin(), values.end()) -
                            values.begin());
}

// Max-shifted softmax: p_i = exp(l_i - max) / sum_j exp(l_j - max).
inline ProbVector softmax(const std::vector<double>& logits) {
    if (logits.empty()) {
        throw ValidationError("softmax of empty vector");
    }
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double l : logits) {
        if (!std::isfinite(l)) {
            throw ValidationError("softmax input contains a non-finite entry");
        }
        max_logit = std::max(max_logit, l);
    }
    ProbVector probs(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - max_logit);
        sum += probs[i];
    }
    for (double& p : probs) {
        p /= sum;
    }
    return probs;
}

// Arithmetic mean per class across TTA views.
inline ProbVector fuse_views(const std::vector<ProbVector>& views) {
    if (views.empty()) {
        throw ValidationError("fuse_views requires at least one view");
    }
    const std::size_t classes = views.front().size();
    ProbVector out(classes, 0.0);
    for (const ProbVector& view : views) {
        if (view.size() != classes) {
            throw ValidationError("fuse_views: inconsistent class counts");
        }
        for (std::size_t i = 0; i < classes; ++i) {
            out[i] += view[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(views.size());
    for (double& v : out) {
        v *= inv;
    }
    return out;
}

enum class VariantAggregation {
    sum_softmax, // per-class sum of probabilities, then softmax of the sum
    mean,        // plain per-class average
};

// Combines the probability vectors of one base model's fine-tune variants
// into a single prediction. The default re-applies softmax to the summed
// probabilities, which compresses but never reorders the classes.
inline ProbVector aggregate_variants(const std::vector<ProbVector>& variants,
                                     std::size_t expected_count,
                                     VariantAggregation mode = VariantAggregation::sum_softmax) {
    if (variants.size() != expected_count) {
        throw ValidationError("variant aggregation expected " +
                              std::to_string(expected_count) + " inputs, got " +
                              std::to_string(variants.size()));
    }
    if (mode == VariantAggregation::mean) {
        return fuse_views(variants);
    }
    const std::size_t classes = variants.front().size();
    std::vector<double> sums(classes, 0.0);
    for (const ProbVector& v : variants) {
        if (v.size() != classes) {
            throw ValidationError("variant aggregation: inconsistent class counts");
        }
        for (std::size_t i = 0; i < classes; ++i) {
            sums[i] += v[i];
        }
    }
    return softmax(sums);
}

enum class Strategy { vote, weighted };
enum class ViewFusion {
    prob_mean,  // softmax per view, then average probabilities
    logit_mean, // average logits across views, then one softmax
};

// Resolved ensemble settings. model_order entries are either raw model ids
// or variant-group ids; variant_groups maps a group id to the raw model ids
// it aggregates.
struct EnsembleConfig {
    Strategy strategy = Strategy::weighted;
    std::vector<std::string> model_order;
    std::string tiebreak_model;
    std::vector<double> raw_weights; // aligned with model_order
    std::map<std::string, std::vector<std::string>> variant_groups;
    ViewFusion view_fusion = ViewFusion::prob_mean;
    VariantAggregation variant_aggregation = VariantAggregation::sum_softmax;

    void validate() const {
        if (model_order.empty()) {
            throw ConfigError("model_order must not be empty");
        }
        std::set<std::string> seen(model_order.begin(), model_order.end());
        if (seen.size() != model_order.size()) {
            throw ConfigError("model_order contains duplicates");
        }
        if (strategy == Strategy::vote && tiebreak_model.empty()) {
            throw ConfigError("vote strategy requires a tiebreak_model");
        }
        if (!tiebreak_model.empty() &&
            std::find(model_order.begin(), model_order.end(), tiebreak_model) ==
                model_order.end()) {
            throw ConfigError("tiebreak_model '" + tiebreak_model +
                              "' is not in model_order");
        }
        if (strategy == Strategy::weighted) {
            if (raw_weights.size() != model_order.size()) {
                throw ConfigError("raw_weights must align with model_order (" +
                                  std::to_string(raw_weights.size()) + " vs " +
                                  std::to_string(model_order.size()) + ")");
            }
            for (double w : raw_weights) {
                if (!std::isfinite(w)) {
                    throw ConfigError("raw_weights must be finite");
                }
            }
        }
        for (const auto& [group, members] : variant_groups) {
            if (members.empty()) {
                throw ConfigError("variant group '" + group + "' is empty");
            }
            if (std::find(model_order.begin(), model_order.end(), group) ==
                model_order.end()) {
                throw ConfigError("variant group '" + group + "' is not in model_order");
            }
        }
    }

    // Raw model ids whose logits must be present: group members plus the
    // ungrouped model_order entries.
    std::vector<std::string> raw_model_ids() const {
        std::vector<std::string> raw;
        for (const std::string& id : model_order) {
            auto it = variant_groups.find(id);
            if (it == variant_groups.end()) {
                raw.push_back(id);
            } else {
                raw.insert(raw.end(), it->second.begin(), it->second.end());
            }
        }
        return raw;
    }
};

// Plurality vote over per-model top-1 predictions. Any tie for first place
// falls back to the designated tie-break model's prediction.
inline int ensemble_vote(const std::vector<std::pair<std::string, int>>& per_model_top1,
                         const EnsembleConfig& config) {
    if (per_model_top1.size() != config.model_order.size()) {
        throw ValidationError("vote expects one prediction per model in model_order");
    }
    int tiebreak_prediction = -1;
    std::map<int, int> counts;
    for (std::size_t i = 0; i < per_model_top1.size(); ++i) {
        const auto& [model_id, prediction] = per_model_top1[i];
        if (model_id != config.model_order[i]) {
            throw ValidationError("vote predictions out of order: expected '" +
                                  config.model_order[i] + "', got '" + model_id + "'");
        }
        ++counts[prediction];
        if (model_id == config.tiebreak_model) {
            tiebreak_prediction = prediction;
        }
    }
    if (tiebreak_prediction < 0) {
        throw ValidationError("tie-break model '" + config.tiebreak_model +
                              "' has no prediction");
    }

    int best_class = -1;
    int best_count = 0;
    bool tied = false;
    for (const auto& [cls, count] : counts) {
        if (count > best_count) {
            best_class = cls;
            best_count = count;
            tied = false;
        } else if (count == best_count) {
            tied = true;
        }
    }
    return tied ? tiebreak_prediction : best_class;
}

// Convex combination with weights = softmax(raw_weights); returns the
// argmax class (smallest index on ties) and the fused vector.
inline std::pair<int, ProbVector> ensemble_weighted(
    const std::vector<std::pair<std::string, ProbVector>>& per_model_probs,
    const EnsembleConfig& config) {
    if (per_model_probs.size() != config.model_order.size()) {
        throw ValidationError("weighted ensemble expects one vector per model in model_order");
    }
    const ProbVector weights = softmax(config.raw_weights);
    const std::size_t classes = per_model_probs.front().second.size();
    ProbVector fused(classes, 0.0);
    for (std::size_t m = 0; m < per_model_probs.size(); ++m) {
        const auto& [model_id, probs] = per_model_probs[m];
        if (model_id != config.model_order[m]) {
            throw ValidationError("weighted inputs out of order: expected '" +
                                  config.model_order[m] + "', got '" + model_id + "'");
        }
        if (probs.size() != classes) {
            throw ValidationError("weighted ensemble: inconsistent class counts");
        }
        for (std::size_t i = 0; i < classes; ++i) {
            fused[i] += weights[m] * probs[i];
        }
    }
    return {argmax(fused), std::move(fused)};
}

// --- end-to-end fusion -------------------------------------------------------

struct LogitsRecord {
    std::string video_id;
    std::string model_id;
    int view_id = 0;
    std::vector<double> logits;
};

struct VideoPrediction {
    std::string video_id;
    int pred_class = 0;
    ProbVector probs;
};

namespace detail {

inline ProbVector fuse_model_views(const std::map<int, std::vector<double>>& views,
                                   ViewFusion mode) {
    if (mode == ViewFusion::logit_mean) {
        std::vector<double> mean(views.begin()->second.size(), 0.0);
        for (const auto& [view_id, logits] : views) {
            if (logits.size() != mean.size()) {
                throw ValidationError("inconsistent logits lengths across views");
            }
            for (std::size_t i = 0; i < mean.size(); ++i) {
                mean[i] += logits[i];
            }
        }
        for (double& v : mean) {
            v /= static_cast<double>(views.size());
        }
        return softmax(mean);
    }
    std::vector<ProbVector> per_view;
    per_view.reserve(views.size());
    for (const auto& [view_id, logits] : views) {
        per_view.push_back(softmax(logits));
    }
    return fuse_views(per_view);
}

} // namespace detail

// Full fusion pipeline over an unordered set of logits records:
// softmax per view, TTA fusion per model, variant-group aggregation, then
// the configured ensemble. Output is sorted by video_id and independent of
// input record order.
inline std::vector<VideoPrediction> run_fusion(const std::vector<LogitsRecord>& records,
                                               std::size_t num_classes,
                                               const EnsembleConfig& config,
                                               int expected_views) {
    config.validate();
    if (expected_views < 1) {
        throw ConfigError("expected_views must be >= 1");
    }
    const std::vector<std::string> raw_models = config.raw_model_ids();
    const std::set<std::string> raw_model_set(raw_models.begin(), raw_models.end());

    // video -> model -> view -> logits
    std::map<std::string, std::map<std::string, std::map<int, std::vector<double>>>> indexed;
    for (const LogitsRecord& record : records) {
        if (record.logits.size() != num_classes) {
            throw ValidationError("logits for (" + record.video_id + ", " +
                                  record.model_id + ", view " +
                                  std::to_string(record.view_id) + ") have length " +
                                  std::to_string(record.logits.size()) + ", expected " +
                                  std::to_string(num_classes));
        }
        if (!raw_model_set.count(record.model_id)) {
            throw ValidationError("logits reference unknown model '" + record.model_id + "'");
        }
        if (record.view_id < 0 || record.view_id >= expected_views) {
            throw ValidationError("view_id " + std::to_string(record.view_id) +
                                  " outside [0, " + std::to_string(expected_views) +
                                  ") for video '" + record.video_id + "'");
        }
        auto& slot = indexed[record.video_id][record.model_id];
        if (!slot.emplace(record.view_id, record.logits).second) {
            throw ValidationError("duplicate logits for (" + record.video_id + ", " +
                                  record.model_id + ", view " +
                                  std::to_string(record.view_id) + ")");
        }
    }

    std::vector<VideoPrediction> out;
    out.reserve(indexed.size());
    for (const auto& [video_id, models] : indexed) {
        // Every raw model must contribute every view.
        std::vector<ProbVector> raw_probs;
        std::map<std::string, ProbVector> per_raw_model;
        for (const std::string& model_id : raw_models) {
            auto it = models.find(model_id);
            if (it == models.end()) {
                throw ValidationError("video '" + video_id + "' has no logits for model '" +
                                      model_id + "'");
            }
            const auto& views = it->second;
            if (static_cast<int>(views.size()) != expected_views) {
                std::ostringstream missing;
                missing << "video '" << video_id << "', model '" << model_id
                        << "' missing view_ids:";
                for (int v = 0; v < expected_views; ++v) {
                    if (!views.count(v)) {
                        missing << ' ' << v;
                    }
                }
                throw ValidationError(missing.str());
            }
            per_raw_model[model_id] = detail::fuse_model_views(views, config.view_fusion);
        }

        // Collapse variant groups, keeping model_order.
        std::vector<std::pair<std::string, ProbVector>> effective;
        effective.reserve(config.model_order.size());
        for (const std::string& id : config.model_order) {
            auto group = config.variant_groups.find(id);
            if (group == config.variant_groups.end()) {
                effective.emplace_back(id, per_raw_model.at(id));
            } else {
                std::vector<ProbVector> members;
                members.reserve(group->second.size());
                for (const std::string& member : group->second) {
                    members.push_back(per_raw_model.at(member));
                }
                effective.emplace_back(id, aggregate_variants(members, members.size(),
                                                              config.variant_aggregation));
            }
        }

        VideoPrediction prediction;
        prediction.video_id = video_id;
        if (config.strategy == Strategy::weighted) {
            auto [cls, fused] = ensemble_weighted(effective, config);
            prediction.pred_class = cls;
            prediction.probs = std::move(fused);
        } else {
            std::vector<std::pair<std::string, int>> top1;
            std::vector<ProbVector> probs;
            top1.reserve(effective.size());
            for (const auto& [id, p] : effective) {
                top1.emplace_back(id, argmax(p));
                probs.push_back(p);
            }
            prediction.pred_class = ensemble_vote(top1, config);
            prediction.probs = fuse_views(probs); // informational summary
        }
        out.push_back(std::move(prediction));
    }
    return out;
}

// --- wire formats -------------------------------------------------------------

inline LogitsRecord parse_logits_record(const io::json& j, const std::string& source,
                                        std::size_t line) {
    LogitsRecord record;
    record.video_id = io::require_string(j, "video_id", source, line);
    record.model_id = io::require_string(j, "model_id", source, line);
    record.view_id = static_cast<int>(io::require_int(j, "view_id", source, line));
    const io::json& logits = io::require_field(j, "logits", source, line);
    if (!logits.is_array() || logits.empty()) {
        throw ParseError(source, line, "field 'logits' must be a non-empty array");
    }
    record.logits.reserve(logits.size());
    for (const auto& v : logits) {
        if (!v.is_number()) {
            throw ParseError(source, line, "logits entries must be numbers");
        }
        record.logits.push_back(v.get<double>());
    }
    return record;
}

inline io::json logits_record_json(const LogitsRecord& record) {
    io::json j;
    j["video_id"] = record.video_id;
    j["model_id"] = record.model_id;
    j["view_id"] = record.view_id;
    j["logits"] = record.logits;
    return j;
}

inline io::json prediction_record_json(const VideoPrediction& prediction,
                                       const std::vector<std::string>& class_names) {
    io::json j;
    j["video_id"] = prediction.video_id;
    j["pred_class"] = prediction.pred_class;
    j["pred_name"] = class_names.at(static_cast<std::size_t>(prediction.pred_class));
    j["probs"] = prediction.probs;
    return j;
}

// Class map: one class name per line, line number = class index.
inline std::vector<std::string> load_class_map(const std::filesystem::path& path) {
    std::ifstream in = io::open_input(path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        names.push_back(line);
    }
    if (names.empty()) {
        throw ValidationError("class map '" + path.string() + "' is empty");
    }
    return names;
}

} // namespace vap::fusion
