#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "vap/errors.hpp"
#include "vap/io/jsonl.hpp"

namespace vap::roi {

// Axis-aligned detection box, origin top-left, real-valued pixel coords.
struct BoundingBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;
    double score = 1.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }

    bool contains(const BoundingBox& other) const {
        return x1 <= other.x1 && y1 <= other.y1 && x2 >= other.x2 && y2 >= other.y2;
    }
};

struct FrameDetections {
    std::int64_t frame_index = 0;
    std::vector<BoundingBox> boxes;
};

struct DetectionTrack {
    std::string video_id;
    int frame_width = 0;
    int frame_height = 0;
    std::vector<FrameDetections> frames; // strictly increasing frame_index
};

// Per-video sidecar entry: pixel dimensions and frame count.
struct VideoInfo {
    std::string video_id;
    int width = 0;
    int height = 0;
    std::int64_t num_frames = 0;
};

// Integer, codec-safe crop rectangle for one video. crop_w/crop_h are even.
struct CropSpec {
    std::string video_id;
    BoundingBox union_box; // consolidated box the crop was derived from, score 1.0
    int crop_x = 0;
    int crop_y = 0;
    int crop_w = 0;
    int crop_h = 0;
};

struct RecordIssue {
    std::size_t line = 0;
    std::string message;
};

struct IngestResult {
    std::vector<DetectionTrack> tracks; // sorted by video_id, one per manifest entry
    std::size_t dropped_boxes = 0;      // degenerate after clamping
    std::vector<RecordIssue> issues;    // record-level validation failures (skipped records)
};

// --- manifest -------------------------------------------------------------

inline VideoInfo parse_manifest_entry(const io::json& j, const std::string& source,
                                      std::size_t line) {
    VideoInfo info;
    info.video_id = io::require_string(j, "video_id", source, line);
    info.width = static_cast<int>(io::require_int(j, "width", source, line));
    info.height = static_cast<int>(io::require_int(j, "height", source, line));
    info.num_frames = io::require_int(j, "num_frames", source, line);
    if (info.width <= 0 || info.height <= 0) {
        throw ParseError(source, line, "width/height must be positive");
    }
    if (info.num_frames < 0) {
        throw ParseError(source, line, "num_frames must be non-negative");
    }
    return info;
}

inline std::map<std::string, VideoInfo> read_manifest(std::istream& in,
                                                      const std::string& source) {
    std::map<std::string, VideoInfo> manifest;
    io::for_each_json_line(in, source, [&](std::size_t line, const io::json& j) {
        VideoInfo info = parse_manifest_entry(j, source, line);
        if (!manifest.emplace(info.video_id, info).second) {
            throw ParseError(source, line, "duplicate video_id '" + info.video_id + "'");
        }
    });
    return manifest;
}

// --- ingestion ------------------------------------------------------------

// Groups line-delimited detection records by video, sorts by frame index,
// clamps boxes to frame bounds and drops the ones that collapse to zero
// area. Record-level validation failures are collected (fatal under strict).
// Every manifest video produces a track, possibly with no frames.
inline IngestResult ingest_detections(std::istream& in, const std::string& source,
                                      const std::map<std::string, VideoInfo>& manifest,
                                      bool strict = false) {
    IngestResult result;
    std::map<std::string, std::map<std::int64_t, std::vector<BoundingBox>>> grouped;

    io::for_each_json_line(in, source, [&](std::size_t line, const io::json& j) {
        const std::string video_id = io::require_string(j, "video_id", source, line);
        const std::int64_t frame = io::require_int(j, "frame", source, line);
        BoundingBox box;
        box.x1 = io::require_number(j, "x1", source, line);
        box.y1 = io::require_number(j, "y1", source, line);
        box.x2 = io::require_number(j, "x2", source, line);
        box.y2 = io::require_number(j, "y2", source, line);
        box.score = io::require_number(j, "score", source, line);

        auto it = manifest.find(video_id);
        if (it == manifest.end()) {
            throw ConfigError(source + ":" + std::to_string(line) +
                              ": video '" + video_id + "' has no manifest entry");
        }
        const VideoInfo& info = it->second;

        auto reject = [&](const std::string& why) {
            result.issues.push_back({line, source + ":" + std::to_string(line) + ": " + why});
        };
        if (frame < 0) {
            reject("negative frame index");
            return;
        }
        if (!std::isfinite(box.x1) || !std::isfinite(box.y1) ||
            !std::isfinite(box.x2) || !std::isfinite(box.y2) ||
            !std::isfinite(box.score)) {
            reject("non-finite coordinate or score");
            return;
        }
        if (box.x1 >= box.x2 || box.y1 >= box.y2) {
            reject("empty box (x1 >= x2 or y1 >= y2)");
            return;
        }
        if (box.score < 0.0 || box.score > 1.0) {
            reject("score outside [0, 1]");
            return;
        }

        box.x1 = std::clamp(box.x1, 0.0, static_cast<double>(info.width));
        box.x2 = std::clamp(box.x2, 0.0, static_cast<double>(info.width));
        box.y1 = std::clamp(box.y1, 0.0, static_cast<double>(info.height));
        box.y2 = std::clamp(box.y2, 0.0, static_cast<double>(info.height));
        if (box.x1 >= box.x2 || box.y1 >= box.y2) {
            ++result.dropped_boxes;
            return;
        }
        grouped[video_id][frame].push_back(box);
    });

    if (strict && !result.issues.empty()) {
        throw ValidationError("strict mode: " + std::to_string(result.issues.size()) +
                              " invalid detection record(s); first: " +
                              result.issues.front().message);
    }

    result.tracks.reserve(manifest.size());
    for (const auto& [video_id, info] : manifest) {
        DetectionTrack track;
        track.video_id = video_id;
        track.frame_width = info.width;
        track.frame_height = info.height;
        auto it = grouped.find(video_id);
        if (it != grouped.end()) {
            track.frames.reserve(it->second.size());
            for (auto& [frame_index, boxes] : it->second) {
                track.frames.push_back({frame_index, std::move(boxes)});
            }
        }
        result.tracks.push_back(std::move(track));
    }
    return result;
}

// --- consolidation and crop planning ---------------------------------------

// Coordinate-wise min/max envelope of every box at or above the score
// threshold, across all frames.
inline BoundingBox consolidate_box(const DetectionTrack& track,
                                   double score_threshold = 0.0) {
    BoundingBox out;
    out.x1 = std::numeric_limits<double>::infinity();
    out.y1 = std::numeric_limits<double>::infinity();
    out.x2 = -std::numeric_limits<double>::infinity();
    out.y2 = -std::numeric_limits<double>::infinity();
    out.score = 1.0;
    bool any = false;
    for (const FrameDetections& frame : track.frames) {
        for (const BoundingBox& box : frame.boxes) {
            if (box.score < score_threshold) {
                continue;
            }
            out.x1 = std::min(out.x1, box.x1);
            out.y1 = std::min(out.y1, box.y1);
            out.x2 = std::max(out.x2, box.x2);
            out.y2 = std::max(out.y2, box.y2);
            any = true;
        }
    }
    if (!any) {
        throw NoDetectionsError(track.video_id);
    }
    return out;
}

namespace detail {

// Smallest even integer >= v (and >= 2, since crops must have area).
inline int even_ceil(double v) {
    long long c = static_cast<long long>(std::ceil(v));
    if (c % 2 != 0) {
        ++c;
    }
    return static_cast<int>(std::max<long long>(c, 2));
}

// Places an even-length span of size `extent` starting at floor(lo) so that
// [lo, hi] stays covered; slides back when the rounded span overruns the
// frame, and gives up 2px only when the frame dimension itself is odd and
// fully spanned.
inline void fit_axis(double lo, double hi, int frame_dim, int& origin, int& extent) {
    origin = static_cast<int>(std::floor(lo));
    extent = even_ceil(hi - origin);
    if (origin + extent > frame_dim) {
        origin = frame_dim - extent;
        if (origin < 0) {
            origin = 0;
            extent -= 2;
        }
    }
}

} // namespace detail

// Expands the union box by pad_fraction x max(width, height) on each side,
// clamps to the frame, and produces the integer even-dimension crop
// containing it. Throws NoDetectionsError when the padded box misses the
// frame entirely.
inline CropSpec make_crop_spec(const std::string& video_id, const BoundingBox& union_box,
                               int frame_width, int frame_height,
                               double pad_fraction = 0.0) {
    if (frame_width < 2 || frame_height < 2) {
        throw ValidationError("video '" + video_id + "': frame dimensions " +
                              std::to_string(frame_width) + "x" +
                              std::to_string(frame_height) + " are too small to crop");
    }
    if (pad_fraction < 0.0 || !std::isfinite(pad_fraction)) {
        throw ValidationError("pad_fraction must be finite and >= 0");
    }
    if (!std::isfinite(union_box.x1) || !std::isfinite(union_box.y1) ||
        !std::isfinite(union_box.x2) || !std::isfinite(union_box.y2)) {
        throw ValidationError("video '" + video_id + "': union box is not finite");
    }

    const double pad = pad_fraction * std::max(union_box.width(), union_box.height());
    double x1 = std::clamp(union_box.x1 - pad, 0.0, static_cast<double>(frame_width));
    double x2 = std::clamp(union_box.x2 + pad, 0.0, static_cast<double>(frame_width));
    double y1 = std::clamp(union_box.y1 - pad, 0.0, static_cast<double>(frame_height));
    double y2 = std::clamp(union_box.y2 + pad, 0.0, static_cast<double>(frame_height));
    if (x1 >= x2 || y1 >= y2) {
        throw NoDetectionsError(video_id);
    }

    CropSpec spec;
    spec.video_id = video_id;
    spec.union_box = union_box;
    spec.union_box.score = 1.0;
    detail::fit_axis(x1, x2, frame_width, spec.crop_x, spec.crop_w);
    detail::fit_axis(y1, y2, frame_height, spec.crop_y, spec.crop_h);
    return spec;
}

// FFmpeg-style crop filter string: "crop=W:H:X:Y".
inline std::string emit_crop_filter(const CropSpec& spec) {
    return "crop=" + std::to_string(spec.crop_w) + ":" + std::to_string(spec.crop_h) +
           ":" + std::to_string(spec.crop_x) + ":" + std::to_string(spec.crop_y);
}

// --- crop plan wire format --------------------------------------------------

inline io::json crop_plan_record(const CropSpec& spec) {
    io::json j;
    j["video_id"] = spec.video_id;
    j["crop_x"] = spec.crop_x;
    j["crop_y"] = spec.crop_y;
    j["crop_w"] = spec.crop_w;
    j["crop_h"] = spec.crop_h;
    j["filter"] = emit_crop_filter(spec);
    return j;
}

inline CropSpec parse_crop_plan_record(const io::json& j, const std::string& source,
                                       std::size_t line) {
    CropSpec spec;
    spec.video_id = io::require_string(j, "video_id", source, line);
    spec.crop_x = static_cast<int>(io::require_int(j, "crop_x", source, line));
    spec.crop_y = static_cast<int>(io::require_int(j, "crop_y", source, line));
    spec.crop_w = static_cast<int>(io::require_int(j, "crop_w", source, line));
    spec.crop_h = static_cast<int>(io::require_int(j, "crop_h", source, line));
    if (spec.crop_w < 2 || spec.crop_h < 2 || spec.crop_w % 2 != 0 || spec.crop_h % 2 != 0) {
        throw ParseError(source, line, "crop dimensions must be even and >= 2");
    }
    if (spec.crop_x < 0 || spec.crop_y < 0) {
        throw ParseError(source, line, "crop origin must be non-negative");
    }
    spec.union_box = {static_cast<double>(spec.crop_x), static_cast<double>(spec.crop_y),
                      static_cast<double>(spec.crop_x + spec.crop_w),
                      static_cast<double>(spec.crop_y + spec.crop_h), 1.0};
    return spec;
}

} // namespace vap::roi
