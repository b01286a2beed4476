#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "c3det/core/dataset.hpp"
#include "c3det/evalharness.hpp"
#include "helpers.hpp"

using namespace c3det;

namespace {

std::vector<LabeledImage> scenes(int n, int objects, int classes = 3) {
    RandomSource rng(21, "scenes");
    std::vector<LabeledImage> out;
    for (int i = 0; i < n; ++i) out.push_back(testutil::random_scene(rng, 64, 64, classes, objects, "im" + std::to_string(i)));
    return out;
}

// Finds every box but gets the class wrong unless the object was clicked.
InferFn click_oracle(int classes) {
    return [classes](const LabeledImage& img, std::span<const UserInput> in) {
        std::vector<Detection> d;
        for (int i = 0; i < img.num_objects(); ++i) {
            const auto& o = img.objects[static_cast<std::size_t>(i)];
            bool clicked = false;
            for (const auto& u : in) clicked |= u.gt_index == i;
            d.push_back({o.box, clicked ? o.class_id : (o.class_id + 1) % classes, 0.5});
        }
        return d;
    };
}

}  // namespace

TEST(Passthrough, RewritesHighestScoringContainingBox) {
    std::vector<Detection> d{{make_box(0, 0, 10, 10), 0, 0.4},
                             {make_box(2, 2, 12, 12), 1, 0.7},
                             {make_box(30, 30, 40, 40), 2, 0.9}};
    const std::vector<UserInput> in{{5, 5, 2, -1}, {50, 50, 0, -1}};
    const auto out = passthrough(d, in);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0], d[0]);
    EXPECT_EQ(out[1].class_id, 2);
    EXPECT_EQ(out[1].score, 1.0);
    EXPECT_EQ(out[1].box, d[1].box);
    EXPECT_EQ(out[2], d[2]);
    EXPECT_EQ(passthrough(d, {}), d);
}

TEST(Session, PrefixesCappedAndCached) {
    auto test = scenes(3, 4);
    test[1].objects.resize(2);
    std::map<std::string, std::vector<std::vector<UserInput>>> calls;
    InferFn rec = [&](const LabeledImage& img, std::span<const UserInput> in) {
        calls[img.image_id].emplace_back(in.begin(), in.end());
        return std::vector<Detection>{};
    };
    const auto pts = run_session(rec, test, session_stream(1, 0), 6, 0.5);
    ASSERT_EQ(pts.size(), 7u);
    for (int t = 0; t <= 6; ++t) EXPECT_EQ(pts[static_cast<std::size_t>(t)].clicks, t);
    EXPECT_EQ(calls["im0"].size(), 5u);  // 0..4 clicks
    EXPECT_EQ(calls["im1"].size(), 3u);  // 0..2 clicks
    for (const auto& [id, seq] : calls)
        for (std::size_t k = 0; k < seq.size(); ++k) {
            ASSERT_EQ(seq[k].size(), k);
            if (k) EXPECT_TRUE(std::equal(seq[k - 1].begin(), seq[k - 1].end(), seq[k].begin()));
        }
}

TEST(Session, OracleCurveMatchesHandCount) {
    // With one class per object wrong until clicked, mAP at t clicks is the
    // per-class AP of the clicked objects; all clicked gives 1.
    const auto test = scenes(4, 5);
    const auto pts = run_session(click_oracle(3), test, session_stream(2, 0), 6, 0.5);
    EXPECT_DOUBLE_EQ(pts.front().map_value, 0.0);
    EXPECT_DOUBLE_EQ(pts[5].map_value, 1.0);
    EXPECT_DOUBLE_EQ(pts[6].map_value, 1.0);
    for (std::size_t t = 1; t < pts.size(); ++t) EXPECT_GE(pts[t].map_value, pts[t - 1].map_value);
}

TEST(Protocol, DeterministicAndPaired) {
    const auto test = scenes(5, 6);
    EvalConfig cfg;
    cfg.sessions = 3;
    cfg.max_clicks = 4;
    cfg.seed = 8;
    const auto a = run_protocol(click_oracle(3), test, cfg);
    const auto b = run_protocol(click_oracle(3), test, cfg);
    ASSERT_EQ(a.points.size(), 15u);
    for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_EQ(a.points[i].map_value, b.points[i].map_value);
    cfg.seed = 9;
    const auto c = run_protocol(click_oracle(3), test, cfg);
    bool differs = false;
    for (std::size_t i = 0; i < a.points.size(); ++i) differs |= a.points[i].map_value != c.points[i].map_value;
    EXPECT_TRUE(differs);
}

TEST(Summary, PopulationStdOracle) {
    std::vector<CurvePoint> pts{{0, 0, 0.1}, {0, 1, 0.3}, {0, 2, 0.2}, {1, 0, 0.5}, {1, 1, 0.5}, {1, 2, 0.8}};
    const auto s = summarize(pts);
    ASSERT_EQ(s.clicks, (std::vector<int>{0, 1}));
    EXPECT_EQ(s.sessions, 3);
    EXPECT_NEAR(s.mean[0], 0.2, 1e-12);
    EXPECT_NEAR(s.std[0], std::sqrt((0.01 + 0.01 + 0.0) / 3), 1e-12);
    EXPECT_NEAR(s.mean[1], 0.6, 1e-12);
    EXPECT_NEAR(s.std[1], std::sqrt((0.01 + 0.01 + 0.04) / 3), 1e-12);
}

TEST(Summary, SingleSessionHasZeroStd) {
    const auto test = scenes(2, 3);
    EvalConfig cfg;
    cfg.sessions = 1;
    cfg.max_clicks = 3;
    const auto r = run_protocol(click_oracle(3), test, cfg);
    for (double s : r.summary.std) EXPECT_EQ(s, 0.0);
}

TEST(Csv, Formats) {
    const std::vector<CurvePoint> pts{{0, 0, 0.25}, {1, 0, 0.5}};
    std::ostringstream c, s;
    write_curve_csv(c, pts);
    write_summary_csv(s, summarize(pts));
    EXPECT_EQ(c.str(), "clicks,session,map\n0,0,0.25\n1,0,0.5\n");
    EXPECT_EQ(s.str(), "clicks,mean,std\n0,0.25,0\n1,0.5,0\n");
}

TEST(Config, Validation) {
    EvalConfig c;
    c.sessions = 0;
    EXPECT_THROW(c.validate(), Error);
    c = EvalConfig{};
    c.max_clicks = -1;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Matrix, WritesAllArtifacts) {
    const auto dir = testutil::temp_dir("matrix");
    const ClassCatalog cat({"a", "b", "c"});
    ModelConfig m = ModelConfig::profile("desk");
    m.backbone_channels = 8;
    m.lf_channels = 4;
    m.fusion_proj_channels = 8;
    m.head_channels = 8;
    CheckpointMap ckpts;
    for (Variant v : {Variant::Full, Variant::DetectorOnly}) {
        m.variant = v;
        Detector d(m, cat, 4);
        ckpts[variant_name(v)] = dir / (std::string(variant_name(v)) + ".ckpt");
        d.save(ckpts[variant_name(v)]);
    }
    auto test = scenes(2, 3);
    EvalConfig cfg;
    cfg.sessions = 2;
    cfg.max_clicks = 2;
    const auto res = run_matrix({"full", "detector_only", "passthrough"}, ckpts, test, cat, cfg, dir / "out");
    ASSERT_EQ(res.size(), 3u);
    for (const char* f : {"full_curve.csv", "full_summary.csv", "passthrough_curve.csv", "detector_only_summary.csv",
                          "matrix.csv", "curves.svg"})
        EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;
    const std::string curve = read_file(dir / "out" / "full_curve.csv");
    EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 1 + 2 * 3);
    EXPECT_NE(read_file(dir / "out" / "curves.svg").find("<svg"), std::string::npos);
    EXPECT_THROW(run_matrix({"lf_only"}, ckpts, test, cat, cfg, dir / "out2"), Error);
}
