#include "vap/roi.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

namespace vap::roi {
namespace {

DetectionTrack make_track(std::vector<BoundingBox> boxes, int width = 100,
                          int height = 100) {
    DetectionTrack track;
    track.video_id = "v1";
    track.frame_width = width;
    track.frame_height = height;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        track.frames.push_back({static_cast<std::int64_t>(i), {boxes[i]}});
    }
    return track;
}

std::map<std::string, VideoInfo> one_video_manifest(int width = 100, int height = 100) {
    return {{"v1", {"v1", width, height, 100}}};
}

TEST(IngestDetections, SingleRecordPassesThrough) {
    std::istringstream in(
        R"({"video_id":"v1","frame":0,"x1":10,"y1":20,"x2":50,"y2":60,"score":0.9})");
    IngestResult result = ingest_detections(in, "test", one_video_manifest());
    ASSERT_EQ(result.tracks.size(), 1u);
    const DetectionTrack& track = result.tracks[0];
    ASSERT_EQ(track.frames.size(), 1u);
    ASSERT_EQ(track.frames[0].boxes.size(), 1u);
    const BoundingBox& box = track.frames[0].boxes[0];
    EXPECT_DOUBLE_EQ(box.x1, 10.0);
    EXPECT_DOUBLE_EQ(box.y1, 20.0);
    EXPECT_DOUBLE_EQ(box.x2, 50.0);
    EXPECT_DOUBLE_EQ(box.y2, 60.0);
    EXPECT_DOUBLE_EQ(box.score, 0.9);
    EXPECT_EQ(result.dropped_boxes, 0u);
    EXPECT_TRUE(result.issues.empty());
}

TEST(IngestDetections, ClampsAtFrameBoundary) {
    std::istringstream in(
        R"({"video_id":"v1","frame":0,"x1":-5,"y1":10,"x2":50,"y2":60,"score":0.5})");
    IngestResult result = ingest_detections(in, "test", one_video_manifest());
    const BoundingBox& box = result.tracks[0].frames[0].boxes[0];
    EXPECT_DOUBLE_EQ(box.x1, 0.0);
    EXPECT_DOUBLE_EQ(box.x2, 50.0);
}

TEST(IngestDetections, FullyOutOfFrameBoxIsDroppedWithWarning) {
    std::istringstream in(
        R"({"video_id":"v1","frame":0,"x1":120,"y1":10,"x2":130,"y2":60,"score":0.5})");
    IngestResult result = ingest_detections(in, "test", one_video_manifest());
    EXPECT_EQ(result.dropped_boxes, 1u);
    EXPECT_TRUE(result.tracks[0].frames.empty());
}

TEST(IngestDetections, MalformedLineNamesLineNumber) {
    std::istringstream in(
        "{\"video_id\":\"v1\",\"frame\":0,\"x1\":1,\"y1\":1,\"x2\":2,\"y2\":2,\"score\":0.5}\n"
        "not json\n");
    try {
        ingest_detections(in, "dets", one_video_manifest());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("dets:2"), std::string::npos);
    }
}

TEST(IngestDetections, MissingFieldIsParseError) {
    std::istringstream in(R"({"video_id":"v1","frame":0,"x1":1,"y1":1,"x2":2,"y2":2})");
    EXPECT_THROW(ingest_detections(in, "test", one_video_manifest()), ParseError);
}

TEST(IngestDetections, EmptyBoxCollectedAsIssue) {
    std::istringstream in(
        R"({"video_id":"v1","frame":0,"x1":50,"y1":10,"x2":50,"y2":60,"score":0.5})");
    IngestResult result = ingest_detections(in, "test", one_video_manifest());
    ASSERT_EQ(result.issues.size(), 1u);
    EXPECT_EQ(result.issues[0].line, 1u);
    EXPECT_TRUE(result.tracks[0].frames.empty());
}

TEST(IngestDetections, StrictModeTurnsIssuesFatal) {
    std::istringstream in(
        R"({"video_id":"v1","frame":0,"x1":50,"y1":10,"x2":40,"y2":60,"score":0.5})");
    EXPECT_THROW(ingest_detections(in, "test", one_video_manifest(), /*strict=*/true),
                 ValidationError);
}

TEST(IngestDetections, UnknownVideoIsConfigError) {
    std::istringstream in(
        R"({"video_id":"mystery","frame":0,"x1":1,"y1":1,"x2":2,"y2":2,"score":0.5})");
    EXPECT_THROW(ingest_detections(in, "test", one_video_manifest()), ConfigError);
}

TEST(IngestDetections, ScoreOutsideUnitIntervalIsIssue) {
    std::istringstream in(
        R"({"video_id":"v1","frame":0,"x1":1,"y1":1,"x2":2,"y2":2,"score":1.5})");
    IngestResult result = ingest_detections(in, "test", one_video_manifest());
    EXPECT_EQ(result.issues.size(), 1u);
}

TEST(IngestDetections, GroupsAndSortsByFrame) {
    std::istringstream in(
        "{\"video_id\":\"v1\",\"frame\":7,\"x1\":1,\"y1\":1,\"x2\":2,\"y2\":2,\"score\":0.5}\n"
        "{\"video_id\":\"v1\",\"frame\":3,\"x1\":1,\"y1\":1,\"x2\":2,\"y2\":2,\"score\":0.5}\n"
        "{\"video_id\":\"v1\",\"frame\":3,\"x1\":5,\"y1\":5,\"x2\":6,\"y2\":6,\"score\":0.5}\n");
    IngestResult result = ingest_detections(in, "test", one_video_manifest());
    const DetectionTrack& track = result.tracks[0];
    ASSERT_EQ(track.frames.size(), 2u);
    EXPECT_EQ(track.frames[0].frame_index, 3);
    EXPECT_EQ(track.frames[0].boxes.size(), 2u);
    EXPECT_EQ(track.frames[1].frame_index, 7);
}

TEST(IngestDetections, ManifestVideoWithoutDetectionsYieldsEmptyTrack) {
    std::istringstream in("");
    auto manifest = one_video_manifest();
    manifest.emplace("v2", VideoInfo{"v2", 64, 64, 10});
    IngestResult result = ingest_detections(in, "test", manifest);
    ASSERT_EQ(result.tracks.size(), 2u);
    EXPECT_TRUE(result.tracks[0].frames.empty());
    EXPECT_TRUE(result.tracks[1].frames.empty());
    EXPECT_EQ(result.tracks[1].video_id, "v2");
}

TEST(ConsolidateBox, UnionOfTwoBoxes) {
    DetectionTrack track = make_track({{10, 20, 50, 60, 0.9}, {30, 10, 70, 40, 0.8}});
    BoundingBox box = consolidate_box(track, 0.0);
    EXPECT_DOUBLE_EQ(box.x1, 10.0);
    EXPECT_DOUBLE_EQ(box.y1, 10.0);
    EXPECT_DOUBLE_EQ(box.x2, 70.0);
    EXPECT_DOUBLE_EQ(box.y2, 60.0);
    EXPECT_DOUBLE_EQ(box.score, 1.0);
}

TEST(ConsolidateBox, SingleBoxIdentity) {
    DetectionTrack track = make_track({{10, 20, 50, 60, 0.9}});
    BoundingBox box = consolidate_box(track);
    EXPECT_DOUBLE_EQ(box.x1, 10.0);
    EXPECT_DOUBLE_EQ(box.y1, 20.0);
    EXPECT_DOUBLE_EQ(box.x2, 50.0);
    EXPECT_DOUBLE_EQ(box.y2, 60.0);
}

TEST(ConsolidateBox, ThresholdFiltersLowScores) {
    DetectionTrack track = make_track({{10, 20, 50, 60, 0.9}, {0, 0, 99, 99, 0.2}});
    BoundingBox box = consolidate_box(track, 0.5);
    EXPECT_DOUBLE_EQ(box.x1, 10.0);
    EXPECT_DOUBLE_EQ(box.x2, 50.0);
}

TEST(ConsolidateBox, NoSurvivorsThrowsWithVideoId) {
    DetectionTrack track = make_track({{10, 20, 50, 60, 0.3}});
    try {
        consolidate_box(track, 0.5);
        FAIL() << "expected NoDetectionsError";
    } catch (const NoDetectionsError& e) {
        EXPECT_EQ(e.video_id(), "v1");
    }
}

TEST(ConsolidateBox, EmptyTrackThrows) {
    DetectionTrack track;
    track.video_id = "v1";
    track.frame_width = 100;
    track.frame_height = 100;
    EXPECT_THROW(consolidate_box(track), NoDetectionsError);
}

// Brute-force oracle: min/max scan over every surviving coordinate.
BoundingBox brute_force_union(const DetectionTrack& track, double threshold) {
    std::vector<double> xs1, ys1, xs2, ys2;
    for (const auto& frame : track.frames) {
        for (const auto& box : frame.boxes) {
            if (box.score >= threshold) {
                xs1.push_back(box.x1);
                ys1.push_back(box.y1);
                xs2.push_back(box.x2);
                ys2.push_back(box.y2);
            }
        }
    }
    BoundingBox out;
    out.x1 = *std::min_element(xs1.begin(), xs1.end());
    out.y1 = *std::min_element(ys1.begin(), ys1.end());
    out.x2 = *std::max_element(xs2.begin(), xs2.end());
    out.y2 = *std::max_element(ys2.begin(), ys2.end());
    out.score = 1.0;
    return out;
}

DetectionTrack random_track(std::mt19937_64& rng, int width, int height,
                            int max_frames, int max_boxes) {
    std::uniform_int_distribution<int> frame_count(1, max_frames);
    std::uniform_int_distribution<int> box_count(1, max_boxes);
    std::uniform_real_distribution<double> ux(0.0, width - 1.0);
    std::uniform_real_distribution<double> uy(0.0, height - 1.0);
    std::uniform_real_distribution<double> uscore(0.0, 1.0);

    DetectionTrack track;
    track.video_id = "v1";
    track.frame_width = width;
    track.frame_height = height;
    const int frames = frame_count(rng);
    for (int f = 0; f < frames; ++f) {
        FrameDetections frame;
        frame.frame_index = f;
        const int boxes = box_count(rng);
        for (int b = 0; b < boxes; ++b) {
            double x1 = ux(rng), x2 = ux(rng);
            double y1 = uy(rng), y2 = uy(rng);
            if (x1 > x2) std::swap(x1, x2);
            if (y1 > y2) std::swap(y1, y2);
            frame.boxes.push_back({x1, y1, x2 + 1.0, y2 + 1.0, uscore(rng)});
        }
        track.frames.push_back(std::move(frame));
    }
    return track;
}

TEST(ConsolidateBox, MatchesBruteForceOnRandomTracks) {
    std::mt19937_64 rng(20240501);
    for (int i = 0; i < 200; ++i) {
        DetectionTrack track = random_track(rng, 1920, 1080, 50, 5);
        BoundingBox got = consolidate_box(track, 0.0);
        BoundingBox want = brute_force_union(track, 0.0);
        EXPECT_EQ(got.x1, want.x1);
        EXPECT_EQ(got.y1, want.y1);
        EXPECT_EQ(got.x2, want.x2);
        EXPECT_EQ(got.y2, want.y2);
    }
}

TEST(ConsolidateBox, UnionMonotonicUnderAddedBoxes) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 900.0);
    for (int i = 0; i < 200; ++i) {
        DetectionTrack track = random_track(rng, 1000, 1000, 20, 3);
        BoundingBox before = consolidate_box(track);
        double x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
        if (x1 > x2) std::swap(x1, x2);
        if (y1 > y2) std::swap(y1, y2);
        track.frames.back().boxes.push_back({x1, y1, x2 + 1.0, y2 + 1.0, 0.9});
        BoundingBox after = consolidate_box(track);
        EXPECT_TRUE(after.contains(before));
    }
}

TEST(ConsolidateBox, IdempotentOnOwnResult) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 50; ++i) {
        DetectionTrack track = random_track(rng, 640, 480, 10, 4);
        BoundingBox once = consolidate_box(track);
        DetectionTrack self = make_track({once}, 640, 480);
        BoundingBox twice = consolidate_box(self);
        EXPECT_EQ(once.x1, twice.x1);
        EXPECT_EQ(once.y1, twice.y1);
        EXPECT_EQ(once.x2, twice.x2);
        EXPECT_EQ(once.y2, twice.y2);
    }
}

TEST(ConsolidateBox, ContainsEverySurvivingBox) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 100; ++i) {
        DetectionTrack track = random_track(rng, 800, 600, 20, 4);
        const double threshold = 0.3;
        bool any = false;
        for (const auto& frame : track.frames) {
            for (const auto& box : frame.boxes) {
                any |= box.score >= threshold;
            }
        }
        if (!any) {
            continue;
        }
        BoundingBox result = consolidate_box(track, threshold);
        for (const auto& frame : track.frames) {
            for (const auto& box : frame.boxes) {
                if (box.score >= threshold) {
                    EXPECT_TRUE(result.contains(box));
                }
            }
        }
    }
}

TEST(ConsolidateBox, OrderIndependent) {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 50; ++i) {
        DetectionTrack track = random_track(rng, 640, 480, 15, 4);
        BoundingBox base = consolidate_box(track);

        DetectionTrack shuffled = track;
        std::shuffle(shuffled.frames.begin(), shuffled.frames.end(), rng);
        for (auto& frame : shuffled.frames) {
            std::shuffle(frame.boxes.begin(), frame.boxes.end(), rng);
        }
        BoundingBox permuted = consolidate_box(shuffled);
        EXPECT_EQ(base.x1, permuted.x1);
        EXPECT_EQ(base.y1, permuted.y1);
        EXPECT_EQ(base.x2, permuted.x2);
        EXPECT_EQ(base.y2, permuted.y2);
    }
}

TEST(MakeCropSpec, ExactIntegersStayPut) {
    CropSpec spec = make_crop_spec("v1", {10, 10, 70, 60, 1.0}, 100, 100, 0.0);
    EXPECT_EQ(spec.crop_x, 10);
    EXPECT_EQ(spec.crop_y, 10);
    EXPECT_EQ(spec.crop_w, 60);
    EXPECT_EQ(spec.crop_h, 50);
}

// Hand-applied rounding rules: floor origin, ceil extent to even.
TEST(MakeCropSpec, FractionalBoxRoundsOutward) {
    CropSpec spec = make_crop_spec("v1", {10.5, 10.5, 70.3, 60.7, 1.0}, 100, 100, 0.0);
    EXPECT_EQ(spec.crop_x, 10);
    EXPECT_EQ(spec.crop_y, 10);
    EXPECT_EQ(spec.crop_w, 62);
    EXPECT_EQ(spec.crop_h, 52);
    // containment oracle: crop covers the box clipped to the frame
    EXPECT_LE(spec.crop_x, 10.5);
    EXPECT_LE(spec.crop_y, 10.5);
    EXPECT_GE(spec.crop_x + spec.crop_w, 70.3);
    EXPECT_GE(spec.crop_y + spec.crop_h, 60.7);
}

TEST(MakeCropSpec, ClampDominatesPadding) {
    CropSpec spec = make_crop_spec("v1", {0, 0, 100, 100, 1.0}, 100, 100, 0.1);
    EXPECT_EQ(spec.crop_x, 0);
    EXPECT_EQ(spec.crop_y, 0);
    EXPECT_EQ(spec.crop_w, 100);
    EXPECT_EQ(spec.crop_h, 100);
}

TEST(MakeCropSpec, PaddingExpandsBySideFraction) {
    // pad = 0.1 * max(20, 10) = 2
    CropSpec spec = make_crop_spec("v1", {40, 40, 60, 50, 1.0}, 100, 100, 0.1);
    EXPECT_EQ(spec.crop_x, 38);
    EXPECT_EQ(spec.crop_y, 38);
    EXPECT_EQ(spec.crop_w, 24);
    EXPECT_EQ(spec.crop_h, 14);
}

TEST(MakeCropSpec, SlidesBackWhenEvenRoundingOverrunsFrame) {
    // floor(9.8) = 9, even_ceil(100 - 9) = 92, 9 + 92 > 100 -> slide to x = 8
    CropSpec spec = make_crop_spec("v1", {9.8, 0, 100, 50, 1.0}, 100, 100, 0.0);
    EXPECT_EQ(spec.crop_x, 8);
    EXPECT_EQ(spec.crop_w, 92);
    EXPECT_LE(spec.crop_x, 9.8);
    EXPECT_GE(spec.crop_x + spec.crop_w, 100.0);
}

TEST(MakeCropSpec, OddFrameFullSpanShrinksByTwo) {
    CropSpec spec = make_crop_spec("v1", {0.5, 0, 101, 100, 1.0}, 101, 100, 0.0);
    EXPECT_EQ(spec.crop_x, 0);
    EXPECT_EQ(spec.crop_w, 100);
    EXPECT_EQ(spec.crop_h, 100);
}

TEST(MakeCropSpec, BoxOutsideFrameThrows) {
    EXPECT_THROW(make_crop_spec("v1", {200, 200, 300, 300, 1.0}, 100, 100, 0.0),
                 NoDetectionsError);
}

TEST(MakeCropSpec, TinyFrameThrows) {
    EXPECT_THROW(make_crop_spec("v1", {0, 0, 1, 1, 1.0}, 1, 100, 0.0), ValidationError);
    EXPECT_THROW(make_crop_spec("v1", {0, 0, 1, 1, 1.0}, 100, 1, 0.0), ValidationError);
}

TEST(MakeCropSpec, NegativePadThrows) {
    EXPECT_THROW(make_crop_spec("v1", {0, 0, 10, 10, 1.0}, 100, 100, -0.1),
                 ValidationError);
}

TEST(MakeCropSpec, RandomizedCropsStayInBoundsAndEven) {
    std::mt19937_64 rng(20240502);
    std::uniform_int_distribution<int> dim(2, 2000);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    std::uniform_real_distribution<double> pad(0.0, 0.5);
    for (int i = 0; i < 2000; ++i) {
        const int width = dim(rng);
        const int height = dim(rng);
        double x1 = frac(rng) * width, x2 = frac(rng) * width;
        double y1 = frac(rng) * height, y2 = frac(rng) * height;
        if (x1 > x2) std::swap(x1, x2);
        if (y1 > y2) std::swap(y1, y2);
        if (x1 == x2 || y1 == y2) {
            continue;
        }
        CropSpec spec = make_crop_spec("v1", {x1, y1, x2, y2, 1.0}, width, height, pad(rng));
        EXPECT_GE(spec.crop_x, 0);
        EXPECT_GE(spec.crop_y, 0);
        EXPECT_LE(spec.crop_x + spec.crop_w, width);
        EXPECT_LE(spec.crop_y + spec.crop_h, height);
        EXPECT_EQ(spec.crop_w % 2, 0);
        EXPECT_EQ(spec.crop_h % 2, 0);
        EXPECT_GE(spec.crop_w, 2);
        EXPECT_GE(spec.crop_h, 2);
    }
}

TEST(EmitCropFilter, FormatsAsFfmpegCropFilter) {
    CropSpec spec;
    spec.video_id = "v1";
    spec.crop_x = 10;
    spec.crop_y = 10;
    spec.crop_w = 60;
    spec.crop_h = 50;
    EXPECT_EQ(emit_crop_filter(spec), "crop=60:50:10:10");
}

TEST(EmitCropFilter, FullFrame) {
    CropSpec spec;
    spec.crop_x = 0;
    spec.crop_y = 0;
    spec.crop_w = 100;
    spec.crop_h = 100;
    EXPECT_EQ(emit_crop_filter(spec), "crop=100:100:0:0");
}

TEST(EmitCropFilter, ComposesWithFractionalRounding) {
    CropSpec spec = make_crop_spec("v1", {10.5, 10.5, 70.3, 60.7, 1.0}, 100, 100, 0.0);
    EXPECT_EQ(emit_crop_filter(spec), "crop=62:52:10:10");
}

TEST(CropPlanRecord, RoundTripsThroughJson) {
    CropSpec spec = make_crop_spec("v1", {10, 10, 70, 60, 1.0}, 100, 100, 0.0);
    io::json j = crop_plan_record(spec);
    EXPECT_EQ(j.dump(),
              R"({"video_id":"v1","crop_x":10,"crop_y":10,"crop_w":60,"crop_h":50,"filter":"crop=60:50:10:10"})");
    CropSpec parsed = parse_crop_plan_record(j, "plan", 1);
    EXPECT_EQ(parsed.video_id, "v1");
    EXPECT_EQ(parsed.crop_x, spec.crop_x);
    EXPECT_EQ(parsed.crop_w, spec.crop_w);
}

TEST(CropPlanRecord, RejectsOddDimensions) {
    io::json j = {{"video_id", "v1"}, {"crop_x", 0}, {"crop_y", 0},
                  {"crop_w", 61},    {"crop_h", 50}, {"filter", "crop=61:50:0:0"}};
    EXPECT_THROW(parse_crop_plan_record(j, "plan", 1), ParseError);
}

TEST(ReadManifest, ParsesAndRejectsDuplicates) {
    std::istringstream in(
        "{\"video_id\":\"a\",\"width\":100,\"height\":50,\"num_frames\":10}\n"
        "{\"video_id\":\"a\",\"width\":100,\"height\":50,\"num_frames\":10}\n");
    EXPECT_THROW(read_manifest(in, "manifest"), ParseError);
}

TEST(ReadManifest, RejectsNonPositiveDims) {
    std::istringstream in("{\"video_id\":\"a\",\"width\":0,\"height\":50,\"num_frames\":10}\n");
    EXPECT_THROW(read_manifest(in, "manifest"), ParseError);
}

} // namespace
} // namespace vap::roi
