#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vap/errors.hpp"
#include "vap/io/jsonl.hpp"
#include "vap/roi.hpp"

namespace vap::tta {

struct ClipWindow {
    std::int64_t start_frame = 0;
    std::vector<std::int64_t> frame_indices; // length == clip_len, non-decreasing
};

enum class CropPosition { first, center, last };

inline const char* to_string(CropPosition p) {
    switch (p) {
        case CropPosition::first: return "first";
        case CropPosition::center: return "center";
        case CropPosition::last: return "last";
    }
    return "?";
}

// Square crop inside the ROI-cropped frame.
struct SpatialCrop {
    int x = 0;
    int y = 0;
    int side = 0;
    CropPosition position = CropPosition::first;
};

struct TtaConfig {
    int clip_len = 16;
    int stride = 1;
    int temporal_views = 5;
    int spatial_views = 3;

    int views_per_video() const { return temporal_views * spatial_views; }
};

struct View {
    int view_id = 0; // temporal_index * spatial_views + spatial_index
    ClipWindow clip;
    SpatialCrop crop;
};

struct TtaPlan {
    std::string video_id;
    std::vector<View> views;
};

// Uniformly spaced fixed-length windows. With span = (clip_len-1)*stride + 1,
// window k starts at round(k * (num_frames - span) / (num_views - 1)); videos
// shorter than one span start at 0 and repeat the tail frame.
inline std::vector<ClipWindow> temporal_windows(const std::string& video_id,
                                                std::int64_t num_frames, int clip_len,
                                                int stride, int num_views) {
    if (num_frames <= 0) {
        throw EmptyVideoError(video_id);
    }
    if (clip_len < 1 || stride < 1 || num_views < 1) {
        throw ValidationError("clip_len, stride and temporal views must be >= 1");
    }

    const std::int64_t span = static_cast<std::int64_t>(clip_len - 1) * stride + 1;
    std::vector<ClipWindow> windows;
    windows.reserve(static_cast<std::size_t>(num_views));
    for (int k = 0; k < num_views; ++k) {
        ClipWindow window;
        if (num_frames >= span) {
            window.start_frame =
                num_views == 1
                    ? 0
                    : std::llround(static_cast<double>(k) *
                                   static_cast<double>(num_frames - span) /
                                   static_cast<double>(num_views - 1));
        } else {
            window.start_frame = 0;
        }
        window.frame_indices.reserve(static_cast<std::size_t>(clip_len));
        for (int j = 0; j < clip_len; ++j) {
            const std::int64_t idx = window.start_frame + static_cast<std::int64_t>(j) * stride;
            window.frame_indices.push_back(std::min(idx, num_frames - 1));
        }
        windows.push_back(std::move(window));
    }
    return windows;
}

// Three square crops of side min(w, h) slid along the longer dimension:
// first / center (floored midpoint) / last. Only the 3-crop scheme exists.
inline std::vector<SpatialCrop> spatial_crops(int crop_w, int crop_h, int num_views = 3) {
    if (crop_w < 1 || crop_h < 1) {
        throw ValidationError("crop dimensions must be positive");
    }
    if (num_views != 3) {
        throw ConfigError("unsupported spatial_views=" + std::to_string(num_views) +
                          " (only the 3-crop first/center/last scheme is implemented)");
    }
    const int side = std::min(crop_w, crop_h);
    const int travel = std::max(crop_w, crop_h) - side;
    const bool horizontal = crop_w >= crop_h;

    std::vector<SpatialCrop> crops;
    crops.reserve(3);
    const int offsets[3] = {0, travel / 2, travel};
    const CropPosition tags[3] = {CropPosition::first, CropPosition::center,
                                  CropPosition::last};
    for (int i = 0; i < 3; ++i) {
        SpatialCrop crop;
        crop.side = side;
        crop.position = tags[i];
        if (horizontal) {
            crop.x = offsets[i];
            crop.y = 0;
        } else {
            crop.x = 0;
            crop.y = offsets[i];
        }
        crops.push_back(crop);
    }
    return crops;
}

// Cross product of temporal windows and spatial crops, view_id ordered
// temporal-major. Pure function of (num_frames, crop dims, config).
inline TtaPlan build_tta_plan(const roi::VideoInfo& video, const roi::CropSpec& crop_spec,
                              const TtaConfig& config) {
    if (video.video_id != crop_spec.video_id) {
        throw ValidationError("crop spec for '" + crop_spec.video_id +
                              "' applied to video '" + video.video_id + "'");
    }
    const std::vector<ClipWindow> windows = temporal_windows(
        video.video_id, video.num_frames, config.clip_len, config.stride,
        config.temporal_views);
    const std::vector<SpatialCrop> crops =
        spatial_crops(crop_spec.crop_w, crop_spec.crop_h, config.spatial_views);

    TtaPlan plan;
    plan.video_id = video.video_id;
    plan.views.reserve(windows.size() * crops.size());
    for (std::size_t t = 0; t < windows.size(); ++t) {
        for (std::size_t s = 0; s < crops.size(); ++s) {
            View view;
            view.view_id = static_cast<int>(t * crops.size() + s);
            view.clip = windows[t];
            view.crop = crops[s];
            plan.views.push_back(std::move(view));
        }
    }
    return plan;
}

// --- tta plan wire format ---------------------------------------------------

inline io::json tta_view_record(const std::string& video_id, const View& view) {
    io::json j;
    j["video_id"] = video_id;
    j["view_id"] = view.view_id;
    j["frames"] = view.clip.frame_indices;
    j["crop"] = io::json{{"x", view.crop.x}, {"y", view.crop.y}, {"side", view.crop.side}};
    return j;
}

} // namespace vap::tta
