#include <cstdint>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "vap/pipeline.hpp"

namespace {

using vap::pipeline::PipelineConfig;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

void print_warnings(const vap::pipeline::CropPlanResult& result) {
    if (result.dropped_boxes > 0) {
        std::cerr << "warning: dropped " << result.dropped_boxes
                  << " box(es) degenerate after clamping\n";
    }
    for (const auto& issue : result.issues) {
        std::cerr << "warning: skipped record: " << issue.message << '\n';
    }
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const vap::pipeline::StageFailures& e) {
        nlohmann::ordered_json err;
        err["error"] = e.what();
        err["stage"] = e.stage();
        auto failures = nlohmann::ordered_json::array();
        for (const auto& [video_id, message] : e.failures()) {
            failures.push_back({{"video_id", video_id}, {"message", message}});
        }
        err["failures"] = std::move(failures);
        std::cerr << err.dump() << '\n';
        return kExitValidation;
    } catch (const vap::IoError& e) {
        std::cerr << nlohmann::ordered_json{{"error", e.what()}}.dump() << '\n';
        return kExitIo;
    } catch (const vap::ValidationError& e) {
        std::cerr << nlohmann::ordered_json{{"error", e.what()}}.dump() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::ordered_json{{"error", e.what()}}.dump() << '\n';
        return kExitIo;
    }
}

std::vector<std::pair<std::string, std::filesystem::path>> parse_pred_args(
    const std::vector<std::string>& args, const PipelineConfig& config) {
    std::vector<std::pair<std::string, std::filesystem::path>> files;
    for (const std::string& arg : args) {
        const auto eq = arg.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
            throw vap::ValidationError("--pred expects NAME=PATH, got '" + arg + "'");
        }
        files.emplace_back(arg.substr(0, eq), arg.substr(eq + 1));
    }
    if (files.empty()) {
        files.emplace_back(config.strategy_name(), config.predictions_path());
    }
    return files;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"vap - deterministic crop/TTA planning, logits fusion and "
                 "per-class accuracy evaluation for video action recognition"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool strict = false;
    app.add_option("--config", config_path, "pipeline config file (JSON)")->required();
    auto* seed_opt = app.add_option("--seed", seed, "override the mock predictor seed");
    app.add_flag("--strict", strict,
                 "treat recoverable record issues and empty classes as errors");

    double score_threshold = 0.0;
    double pad_fraction = 0.0;
    bool fallback_full_frame = false;
    auto* score_opt = app.add_option("--score-threshold", score_threshold,
                                     "minimum detection score included in the union")
                          ->check(CLI::Range(0.0, 1.0));
    auto* pad_opt = app.add_option("--pad-fraction", pad_fraction,
                                   "padding around the union box, as a fraction of "
                                   "its longer side")
                        ->check(CLI::NonNegativeNumber);
    app.add_flag("--fallback-full-frame", fallback_full_frame,
                 "use the full frame for videos without usable detections");

    int clip_len = 0, stride = 0, temporal_views = 0, spatial_views = 0;
    auto* clip_opt = app.add_option("--clip-len", clip_len, "frames per clip window")
                         ->check(CLI::PositiveNumber);
    auto* stride_opt = app.add_option("--stride", stride, "frame stride inside a clip")
                           ->check(CLI::PositiveNumber);
    auto* temporal_opt =
        app.add_option("--temporal-views", temporal_views, "number of clip windows")
            ->check(CLI::PositiveNumber);
    auto* spatial_opt =
        app.add_option("--spatial-views", spatial_views, "number of spatial crops")
            ->check(CLI::PositiveNumber);

    auto* crop = app.add_subcommand(
        "crop-plan", "consolidate per-frame detections into one crop spec per video");
    auto* ttap = app.add_subcommand(
        "tta-plan", "emit the temporal x spatial view plan for every cropped video");
    auto* mock = app.add_subcommand(
        "mock-predict", "synthesize deterministic logits from labels (test scaffolding)");
    auto* fuse = app.add_subcommand(
        "fuse", "fuse per-view logits into per-video ensemble predictions");
    auto* eval = app.add_subcommand(
        "evaluate", "score predictions with mean per-class accuracy");
    auto* all = app.add_subcommand("run-all", "run every stage in order");

    std::vector<std::string> pred_args;
    eval->add_option("--pred", pred_args,
                     "NAME=PATH prediction file to score (repeatable; default: the "
                     "fuse output)");

    for (CLI::App* sub : {crop, ttap, mock, fuse, eval, all}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    return run_guarded([&] {
        PipelineConfig config = vap::pipeline::load_config(config_path);
        if (seed_opt->count() > 0) {
            config.mock.seed = seed;
        }
        config.strict = strict;
        if (score_opt->count() > 0) {
            config.roi.score_threshold = score_threshold;
        }
        if (pad_opt->count() > 0) {
            config.roi.pad_fraction = pad_fraction;
        }
        if (fallback_full_frame) {
            config.roi.fallback_full_frame = true;
        }
        if (clip_opt->count() > 0) {
            config.tta.clip_len = clip_len;
        }
        if (stride_opt->count() > 0) {
            config.tta.stride = stride;
        }
        if (temporal_opt->count() > 0) {
            config.tta.temporal_views = temporal_views;
        }
        if (spatial_opt->count() > 0) {
            config.tta.spatial_views = spatial_views;
        }

        if (crop->parsed()) {
            auto result = vap::pipeline::run_crop_plan(config);
            print_warnings(result);
            std::cout << "crop-plan: " << result.videos << " video(s) -> "
                      << config.crop_plan_path().string() << '\n';
        } else if (ttap->parsed()) {
            auto result = vap::pipeline::run_tta_plan(config);
            std::cout << "tta-plan: " << result.videos << " video(s), " << result.views
                      << " view(s) -> " << config.tta_plan_path().string() << '\n';
        } else if (mock->parsed()) {
            auto result = vap::pipeline::run_mock_predict(config);
            std::cout << "mock-predict: " << result.records << " logits record(s) -> "
                      << config.logits_path().string() << '\n';
        } else if (fuse->parsed()) {
            auto result = vap::pipeline::run_fuse(config);
            std::cout << "fuse: " << result.videos << " video(s) -> "
                      << result.output.string() << '\n';
        } else if (eval->parsed()) {
            auto result =
                vap::pipeline::run_evaluate(config, parse_pred_args(pred_args, config));
            for (const auto& [name, report] : result.reports) {
                if (report.extra_predictions > 0) {
                    std::cerr << "warning: " << name << ": " << report.extra_predictions
                              << " prediction(s) for unlabeled videos ignored\n";
                }
            }
            std::cout << result.table;
            std::cout << "report -> " << config.report_path().string() << '\n';
        } else if (all->parsed()) {
            auto result = vap::pipeline::run_all(config);
            print_warnings(result.crop);
            std::cout << "crop-plan: " << result.crop.videos << " video(s)\n";
            std::cout << "tta-plan: " << result.tta.views << " view(s)\n";
            std::cout << "mock-predict: " << result.mock.records << " logits record(s)\n";
            std::cout << result.evaluation.table;
            std::cout << "report -> " << config.report_path().string() << '\n';
        }
    });
}
