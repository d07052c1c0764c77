#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vap/errors.hpp"
#include "vap/fusion.hpp"
#include "vap/rng.hpp"

namespace vap::mock {

// Logit margin the synthetic target class receives. A target that equals
// the true label gets the larger margin, so wrong predictions come out
// less confident than right ones; that asymmetry is what lets ensembles
// outvote a single wrong model in end-to-end fixtures.
inline constexpr double kLabelMargin = 6.0;
inline constexpr double kOffLabelMargin = 2.5;

struct ModelSkill {
    std::string model_id;
    double skill = 1.0; // probability the model targets the true label
};

struct MockPredictorSpec {
    std::uint64_t seed = 0;
    std::vector<ModelSkill> models;
    double noise_scale = 1.0;

    void validate() const {
        if (models.empty()) {
            throw ConfigError("mock predictor needs at least one model");
        }
        std::set<std::string> ids;
        for (const ModelSkill& m : models) {
            if (m.model_id.empty()) {
                throw ConfigError("mock model ids must not be empty");
            }
            if (!ids.insert(m.model_id).second) {
                throw ConfigError("duplicate mock model id '" + m.model_id + "'");
            }
            if (!(m.skill >= 0.0 && m.skill <= 1.0)) {
                throw ConfigError("skill for model '" + m.model_id +
                                  "' must be in [0, 1]");
            }
        }
        if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
            throw ConfigError("noise_scale must be finite and >= 0");
        }
    }
};

// Seeded synthetic logits for every (video, model, view). Per (video, model)
// a splitmix64 stream derived from (seed, video id, model id) first draws
// the target class -- the true label with probability skill, otherwise a
// uniformly random class -- then per view emits uniform noise in
// [-noise_scale, noise_scale) per class with the margin added on the target.
// Integer-only key derivation keeps the files identical across platforms.
inline std::vector<fusion::LogitsRecord> synthesize_logits(
    const MockPredictorSpec& spec,
    const std::vector<std::pair<std::string, int>>& labeled_videos,
    int num_classes, int num_views) {
    spec.validate();
    if (num_classes < 2) {
        throw ValidationError("mock predictor needs at least 2 classes");
    }
    if (num_views < 1) {
        throw ValidationError("mock predictor needs at least 1 view");
    }

    std::vector<fusion::LogitsRecord> records;
    records.reserve(labeled_videos.size() * spec.models.size() *
                    static_cast<std::size_t>(num_views));
    for (const auto& [video_id, label] : labeled_videos) {
        if (label < 0 || label >= num_classes) {
            throw ValidationError("label for video '" + video_id + "' outside [0, " +
                                  std::to_string(num_classes) + ")");
        }
        for (const ModelSkill& model : spec.models) {
            SplitMix64 rng = derive_stream(
                spec.seed, {fnv1a64(video_id), fnv1a64(model.model_id)});
            const bool on_label = rng.next_unit() < model.skill;
            const int target =
                on_label ? label
                         : static_cast<int>(rng.next_below(
                               static_cast<std::uint64_t>(num_classes)));
            const double margin = target == label ? kLabelMargin : kOffLabelMargin;

            for (int view = 0; view < num_views; ++view) {
                fusion::LogitsRecord record;
                record.video_id = video_id;
                record.model_id = model.model_id;
                record.view_id = view;
                record.logits.resize(static_cast<std::size_t>(num_classes));
                for (int c = 0; c < num_classes; ++c) {
                    record.logits[static_cast<std::size_t>(c)] =
                        spec.noise_scale * rng.next_symmetric();
                }
                record.logits[static_cast<std::size_t>(target)] += margin;
                records.push_back(std::move(record));
            }
        }
    }
    return records;
}

} // namespace vap::mock
