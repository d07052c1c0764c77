#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vap/errors.hpp"
#include "vap/fusion.hpp"
#include "vap/io/jsonl.hpp"
#include "vap/metrics.hpp"
#include "vap/mock_predictor.hpp"
#include "vap/roi.hpp"
#include "vap/tta.hpp"

namespace vap::pipeline {

namespace fs = std::filesystem;

// Per-video failures collected within one stage; the CLI renders these as a
// machine-readable error list.
class StageFailures : public ValidationError {
public:
    StageFailures(const std::string& stage,
                  std::vector<std::pair<std::string, std::string>> failures)
        : ValidationError(stage + " failed for " + std::to_string(failures.size()) +
                          " video(s); first: " + failures.front().second),
          stage_(stage), failures_(std::move(failures)) {}

    const std::string& stage() const { return stage_; }
    const std::vector<std::pair<std::string, std::string>>& failures() const {
        return failures_;
    }

private:
    std::string stage_;
    std::vector<std::pair<std::string, std::string>> failures_;
};

struct Paths {
    fs::path detections;
    fs::path manifest;
    fs::path class_map;
    fs::path labels;
    fs::path logits;     // optional; defaults to <output_dir>/logits.jsonl
    fs::path output_dir = "out";
};

struct RoiParams {
    double score_threshold = 0.0;
    double pad_fraction = 0.0;
    bool fallback_full_frame = false;
};

struct PipelineConfig {
    Paths paths;
    RoiParams roi;
    tta::TtaConfig tta;
    fusion::EnsembleConfig ensemble;
    mock::MockPredictorSpec mock;
    bool strict = false;

    fs::path crop_plan_path() const { return paths.output_dir / "crop_plan.jsonl"; }
    fs::path tta_plan_path() const { return paths.output_dir / "tta_plan.jsonl"; }
    fs::path logits_path() const {
        return paths.logits.empty() ? paths.output_dir / "logits.jsonl" : paths.logits;
    }
    fs::path predictions_path() const { return paths.output_dir / "predictions.jsonl"; }
    fs::path model_predictions_path(const std::string& model_id) const {
        std::string safe = model_id;
        for (char& c : safe) {
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') {
                c = '_';
            }
        }
        return paths.output_dir / ("predictions." + safe + ".jsonl");
    }
    fs::path report_path() const { return paths.output_dir / "report.json"; }

    std::string strategy_name() const {
        return ensemble.strategy == fusion::Strategy::vote ? "vote" : "weighted";
    }
};

// --- config file ------------------------------------------------------------

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline fusion::Strategy parse_strategy(const std::string& s) {
    if (s == "vote") return fusion::Strategy::vote;
    if (s == "weighted") return fusion::Strategy::weighted;
    throw ConfigError("unknown ensemble strategy '" + s + "' (expected vote|weighted)");
}

inline fusion::ViewFusion parse_view_fusion(const std::string& s) {
    if (s == "prob_mean") return fusion::ViewFusion::prob_mean;
    if (s == "logit_mean") return fusion::ViewFusion::logit_mean;
    throw ConfigError("unknown view_fusion '" + s + "' (expected prob_mean|logit_mean)");
}

inline fusion::VariantAggregation parse_variant_aggregation(const std::string& s) {
    if (s == "sum_softmax") return fusion::VariantAggregation::sum_softmax;
    if (s == "mean") return fusion::VariantAggregation::mean;
    throw ConfigError("unknown variant_aggregation '" + s +
                      "' (expected sum_softmax|mean)");
}

} // namespace detail

// Loads the declarative pipeline config. Relative paths resolve against the
// config file's directory; VAP_OUTPUT_DIR overrides paths.output_dir.
inline PipelineConfig load_config(const fs::path& config_path) {
    io::json j;
    try {
        j = io::json::parse(io::read_text_file(config_path));
    } catch (const io::json::parse_error& e) {
        throw ConfigError("config '" + config_path.string() + "' is not valid JSON: " +
                          e.what());
    }
    if (!j.is_object()) {
        throw ConfigError("config '" + config_path.string() + "' must be a JSON object");
    }

    PipelineConfig config;
    const fs::path base = config_path.has_parent_path() ? config_path.parent_path()
                                                        : fs::path(".");

    if (j.contains("paths")) {
        const auto& p = j["paths"];
        if (p.contains("detections")) config.paths.detections = detail::resolve(base, p["detections"]);
        if (p.contains("manifest")) config.paths.manifest = detail::resolve(base, p["manifest"]);
        if (p.contains("class_map")) config.paths.class_map = detail::resolve(base, p["class_map"]);
        if (p.contains("labels")) config.paths.labels = detail::resolve(base, p["labels"]);
        if (p.contains("logits")) config.paths.logits = detail::resolve(base, p["logits"]);
        if (p.contains("output_dir")) config.paths.output_dir = detail::resolve(base, p["output_dir"]);
    }
    if (const char* env_out = std::getenv("VAP_OUTPUT_DIR"); env_out && *env_out) {
        config.paths.output_dir = fs::path(env_out);
    }

    if (j.contains("roi")) {
        const auto& r = j["roi"];
        if (r.contains("score_threshold")) config.roi.score_threshold = r["score_threshold"].get<double>();
        if (r.contains("pad_fraction")) config.roi.pad_fraction = r["pad_fraction"].get<double>();
        if (r.contains("fallback_full_frame")) config.roi.fallback_full_frame = r["fallback_full_frame"].get<bool>();
        if (config.roi.score_threshold < 0.0 || config.roi.score_threshold > 1.0) {
            throw ConfigError("roi.score_threshold must be in [0, 1]");
        }
        if (config.roi.pad_fraction < 0.0) {
            throw ConfigError("roi.pad_fraction must be >= 0");
        }
    }

    if (j.contains("tta")) {
        const auto& t = j["tta"];
        if (t.contains("clip_len")) config.tta.clip_len = t["clip_len"].get<int>();
        if (t.contains("stride")) config.tta.stride = t["stride"].get<int>();
        if (t.contains("temporal_views")) config.tta.temporal_views = t["temporal_views"].get<int>();
        if (t.contains("spatial_views")) config.tta.spatial_views = t["spatial_views"].get<int>();
        if (config.tta.clip_len < 1 || config.tta.stride < 1 || config.tta.temporal_views < 1) {
            throw ConfigError("tta.clip_len, tta.stride and tta.temporal_views must be >= 1");
        }
    }

    if (j.contains("ensemble")) {
        const auto& e = j["ensemble"];
        if (e.contains("strategy")) {
            config.ensemble.strategy = detail::parse_strategy(e["strategy"].get<std::string>());
        }
        if (e.contains("model_order")) {
            config.ensemble.model_order = e["model_order"].get<std::vector<std::string>>();
        }
        if (e.contains("tiebreak_model")) {
            config.ensemble.tiebreak_model = e["tiebreak_model"].get<std::string>();
        }
        if (e.contains("raw_weights")) {
            config.ensemble.raw_weights = e["raw_weights"].get<std::vector<double>>();
        }
        if (e.contains("umt_variant_groups")) {
            for (const auto& [group, members] : e["umt_variant_groups"].items()) {
                config.ensemble.variant_groups[group] =
                    members.get<std::vector<std::string>>();
            }
        }
        if (e.contains("view_fusion")) {
            config.ensemble.view_fusion =
                detail::parse_view_fusion(e["view_fusion"].get<std::string>());
        }
        if (e.contains("variant_aggregation")) {
            config.ensemble.variant_aggregation =
                detail::parse_variant_aggregation(e["variant_aggregation"].get<std::string>());
        }
    }

    if (j.contains("mock")) {
        const auto& m = j["mock"];
        if (m.contains("seed")) config.mock.seed = m["seed"].get<std::uint64_t>();
        if (m.contains("noise_scale")) config.mock.noise_scale = m["noise_scale"].get<double>();
        if (m.contains("per_model_skill")) {
            for (const auto& [model_id, skill] : m["per_model_skill"].items()) {
                config.mock.models.push_back({model_id, skill.get<double>()});
            }
        }
    }

    return config;
}

// --- stages -------------------------------------------------------------------

namespace detail {

inline void require_input(const fs::path& path, const std::string& what) {
    if (path.empty()) {
        throw ConfigError("config is missing the " + what + " path");
    }
    if (!fs::exists(path)) {
        throw IoError(what + " file '" + path.string() + "' does not exist");
    }
}

inline std::map<std::string, roi::VideoInfo> load_manifest_file(const fs::path& path) {
    require_input(path, "manifest");
    auto in = io::open_input(path);
    return roi::read_manifest(in, path.string());
}

} // namespace detail

struct CropPlanResult {
    std::size_t videos = 0;
    std::size_t dropped_boxes = 0;
    std::vector<roi::RecordIssue> issues;
};

// Detections + manifest -> crop_plan.jsonl (one line per video, sorted).
inline CropPlanResult run_crop_plan(const PipelineConfig& config) {
    detail::require_input(config.paths.detections, "detections");
    const auto manifest = detail::load_manifest_file(config.paths.manifest);

    auto detections_in = io::open_input(config.paths.detections);
    roi::IngestResult ingest = roi::ingest_detections(
        detections_in, config.paths.detections.string(), manifest, config.strict);

    std::vector<roi::CropSpec> specs;
    std::vector<std::pair<std::string, std::string>> failures;
    for (const roi::DetectionTrack& track : ingest.tracks) {
        try {
            roi::BoundingBox union_box;
            try {
                union_box = roi::consolidate_box(track, config.roi.score_threshold);
            } catch (const NoDetectionsError&) {
                if (!config.roi.fallback_full_frame) {
                    throw;
                }
                union_box = {0.0, 0.0, static_cast<double>(track.frame_width),
                             static_cast<double>(track.frame_height), 1.0};
            }
            specs.push_back(roi::make_crop_spec(track.video_id, union_box,
                                                track.frame_width, track.frame_height,
                                                config.roi.pad_fraction));
        } catch (const ValidationError& e) {
            failures.emplace_back(track.video_id, e.what());
        }
    }
    if (!failures.empty()) {
        throw StageFailures("crop-plan", std::move(failures));
    }

    io::AtomicFileWriter writer(config.crop_plan_path());
    for (const roi::CropSpec& spec : specs) {
        writer.write_line(roi::crop_plan_record(spec).dump());
    }
    writer.commit();
    return {specs.size(), ingest.dropped_boxes, std::move(ingest.issues)};
}

struct TtaPlanResult {
    std::size_t videos = 0;
    std::size_t views = 0;
};

// Crop plan + manifest -> tta_plan.jsonl (one line per view, sorted by
// video then view_id). Composes the roi stage when the crop plan file is
// not there yet; the handoff stays on disk either way.
inline TtaPlanResult run_tta_plan(const PipelineConfig& config) {
    const auto manifest = detail::load_manifest_file(config.paths.manifest);
    if (!fs::exists(config.crop_plan_path())) {
        run_crop_plan(config);
    }
    detail::require_input(config.crop_plan_path(), "crop plan");

    std::vector<roi::CropSpec> specs;
    io::for_each_json_line_in_file(
        config.crop_plan_path(), [&](std::size_t line, const io::json& j) {
            specs.push_back(
                roi::parse_crop_plan_record(j, config.crop_plan_path().string(), line));
        });

    TtaPlanResult result;
    std::vector<std::pair<std::string, std::string>> failures;
    io::AtomicFileWriter writer(config.tta_plan_path());
    for (const roi::CropSpec& spec : specs) {
        auto it = manifest.find(spec.video_id);
        if (it == manifest.end()) {
            throw ConfigError("crop plan references video '" + spec.video_id +
                              "' absent from the manifest");
        }
        try {
            tta::TtaPlan plan = tta::build_tta_plan(it->second, spec, config.tta);
            for (const tta::View& view : plan.views) {
                writer.write_line(tta::tta_view_record(plan.video_id, view).dump());
            }
            result.views += plan.views.size();
            ++result.videos;
        } catch (const ValidationError& e) {
            failures.emplace_back(spec.video_id, e.what());
        }
    }
    if (!failures.empty()) {
        throw StageFailures("tta-plan", std::move(failures));
    }
    writer.commit();
    return result;
}

struct MockPredictResult {
    std::size_t records = 0;
};

// Labels + manifest -> synthetic logits for every (video, model, view).
inline MockPredictResult run_mock_predict(const PipelineConfig& config) {
    const auto manifest = detail::load_manifest_file(config.paths.manifest);
    detail::require_input(config.paths.class_map, "class map");
    detail::require_input(config.paths.labels, "labels");
    const auto class_names = fusion::load_class_map(config.paths.class_map);
    const auto labels = metrics::load_labels(config.paths.labels, class_names);

    std::vector<std::pair<std::string, int>> labeled_videos;
    std::vector<std::pair<std::string, std::string>> failures;
    labeled_videos.reserve(manifest.size());
    for (const auto& [video_id, info] : manifest) {
        auto it = labels.entries.find(video_id);
        if (it == labels.entries.end()) {
            failures.emplace_back(video_id, "video '" + video_id + "' has no label");
        } else {
            labeled_videos.emplace_back(video_id, it->second);
        }
    }
    if (!failures.empty()) {
        throw StageFailures("mock-predict", std::move(failures));
    }

    const auto records = mock::synthesize_logits(
        config.mock, labeled_videos, static_cast<int>(class_names.size()),
        config.tta.views_per_video());

    io::AtomicFileWriter writer(config.logits_path());
    for (const fusion::LogitsRecord& record : records) {
        writer.write_line(fusion::logits_record_json(record).dump());
    }
    writer.commit();
    return {records.size()};
}

namespace detail {

inline std::vector<fusion::LogitsRecord> load_logits(const fs::path& path) {
    require_input(path, "logits");
    std::vector<fusion::LogitsRecord> records;
    io::for_each_json_line_in_file(path, [&](std::size_t line, const io::json& j) {
        records.push_back(fusion::parse_logits_record(j, path.string(), line));
    });
    return records;
}

inline void write_predictions(const fs::path& path,
                              const std::vector<fusion::VideoPrediction>& predictions,
                              const std::vector<std::string>& class_names) {
    io::AtomicFileWriter writer(path);
    for (const fusion::VideoPrediction& p : predictions) {
        writer.write_line(fusion::prediction_record_json(p, class_names).dump());
    }
    writer.commit();
}

} // namespace detail

struct FuseResult {
    std::size_t videos = 0;
    fs::path output;
};

// Logits -> per-video ensemble predictions.
inline FuseResult run_fuse(const PipelineConfig& config) {
    detail::require_input(config.paths.class_map, "class map");
    const auto class_names = fusion::load_class_map(config.paths.class_map);
    const auto records = detail::load_logits(config.logits_path());
    const auto predictions =
        fusion::run_fusion(records, class_names.size(), config.ensemble,
                           config.tta.views_per_video());
    detail::write_predictions(config.predictions_path(), predictions, class_names);
    return {predictions.size(), config.predictions_path()};
}

// Degenerate single-model fusion used for leaderboard rows: keeps the
// model's variant group (if any) and fuses with weight 1.
inline fusion::EnsembleConfig single_model_config(const fusion::EnsembleConfig& base,
                                                  const std::string& model_id) {
    fusion::EnsembleConfig single;
    single.strategy = fusion::Strategy::weighted;
    single.model_order = {model_id};
    single.tiebreak_model = model_id;
    single.raw_weights = {1.0};
    auto group = base.variant_groups.find(model_id);
    if (group != base.variant_groups.end()) {
        single.variant_groups[model_id] = group->second;
    }
    single.view_fusion = base.view_fusion;
    single.variant_aggregation = base.variant_aggregation;
    return single;
}

struct EvaluateResult {
    std::vector<std::pair<std::string, metrics::EvaluationReport>> reports;
    std::string table;
};

// Evaluates one or more named prediction files and writes report.json.
inline EvaluateResult run_evaluate(
    const PipelineConfig& config,
    const std::vector<std::pair<std::string, fs::path>>& prediction_files) {
    detail::require_input(config.paths.class_map, "class map");
    detail::require_input(config.paths.labels, "labels");
    const auto class_names = fusion::load_class_map(config.paths.class_map);
    const auto labels = metrics::load_labels(config.paths.labels, class_names);

    EvaluateResult result;
    for (const auto& [name, path] : prediction_files) {
        detail::require_input(path, "predictions");
        std::map<std::string, int> predictions;
        io::for_each_json_line_in_file(path, [&](std::size_t line, const io::json& j) {
            const std::string video_id =
                io::require_string(j, "video_id", path.string(), line);
            const int pred_class =
                static_cast<int>(io::require_int(j, "pred_class", path.string(), line));
            if (!predictions.emplace(video_id, pred_class).second) {
                throw ParseError(path.string(), line,
                                 "duplicate prediction for video '" + video_id + "'");
            }
        });
        result.reports.emplace_back(
            name, metrics::mean_class_accuracy(predictions, labels, config.strict));
    }

    result.table = metrics::leaderboard_table(result.reports);

    io::json methods = io::json::array();
    for (const auto& [name, report] : result.reports) {
        io::json entry;
        entry["method"] = name;
        const io::json details = metrics::report_json(report, class_names);
        for (const auto& [key, value] : details.items()) {
            entry[key] = value;
        }
        methods.push_back(std::move(entry));
    }
    io::json report_doc;
    report_doc["methods"] = std::move(methods);
    report_doc["leaderboard"] = metrics::leaderboard_json(result.reports);

    io::AtomicFileWriter writer(config.report_path());
    writer.stream() << report_doc.dump(2) << '\n';
    writer.commit();
    return result;
}

struct RunAllResult {
    CropPlanResult crop;
    TtaPlanResult tta;
    MockPredictResult mock;
    EvaluateResult evaluation;
};

// The whole pipeline: crop-plan, tta-plan, mock-predict, fuse (ensemble and
// one degenerate single-model pass per model_order entry), evaluate.
inline RunAllResult run_all(const PipelineConfig& config) {
    RunAllResult result;
    result.crop = run_crop_plan(config);
    result.tta = run_tta_plan(config);
    result.mock = run_mock_predict(config);

    const auto class_names = fusion::load_class_map(config.paths.class_map);
    const auto records = detail::load_logits(config.logits_path());
    const int views = config.tta.views_per_video();

    std::vector<std::pair<std::string, fs::path>> prediction_files;
    for (const std::string& model_id : config.ensemble.model_order) {
        const fusion::EnsembleConfig single = single_model_config(config.ensemble, model_id);
        const std::vector<std::string> raw_ids = single.raw_model_ids();
        const std::set<std::string> raw(raw_ids.begin(), raw_ids.end());
        std::vector<fusion::LogitsRecord> subset;
        for (const fusion::LogitsRecord& r : records) {
            if (raw.count(r.model_id)) {
                subset.push_back(r);
            }
        }
        const auto predictions =
            fusion::run_fusion(subset, class_names.size(), single, views);
        const fs::path path = config.model_predictions_path(model_id);
        detail::write_predictions(path, predictions, class_names);
        prediction_files.emplace_back(model_id, path);
    }

    const auto ensemble_predictions =
        fusion::run_fusion(records, class_names.size(), config.ensemble, views);
    detail::write_predictions(config.predictions_path(), ensemble_predictions, class_names);
    prediction_files.emplace_back(config.strategy_name(), config.predictions_path());

    result.evaluation = run_evaluate(config, prediction_files);
    return result;
}

} // namespace vap::pipeline
