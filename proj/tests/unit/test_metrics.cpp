#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "c3det/metrics.hpp"
#include "helpers.hpp"

using namespace c3det;

namespace {

// Oracle: greedy matching by explicit loops, AP as the mean over ground truth
// of the best precision at or after each true positive's rank.
double oracle_ap(const std::vector<ImageEval>& images, int cls, double thr) {
    struct Item {
        double score;
        std::size_t img, idx;
    };
    std::vector<Item> items;
    int num_gt = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t j = 0; j < images[i].detections.size(); ++j)
            if (cls < 0 || images[i].detections[j].class_id == cls) items.push_back({images[i].detections[j].score, i, j});
        for (const auto& g : images[i].ground_truth)
            if (cls < 0 || g.class_id == cls) ++num_gt;
    }
    if (num_gt == 0) return 0.0;
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });
    std::vector<std::vector<bool>> used(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) used[i].assign(images[i].ground_truth.size(), false);
    std::vector<int> tp(items.size(), 0);
    for (std::size_t r = 0; r < items.size(); ++r) {
        const auto& d = images[items[r].img].detections[items[r].idx];
        const auto& gts = images[items[r].img].ground_truth;
        double best = -1;
        std::size_t arg = 0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[items[r].img][g] || gts[g].class_id != d.class_id) continue;
            const double ix = std::max(0.0, std::min(d.box.x_max, gts[g].box.x_max) - std::max(d.box.x_min, gts[g].box.x_min));
            const double iy = std::max(0.0, std::min(d.box.y_max, gts[g].box.y_max) - std::max(d.box.y_min, gts[g].box.y_min));
            const double inter = ix * iy;
            const double u = d.box.area() + gts[g].box.area() - inter;
            const double v = u > 0 ? inter / u : 0.0;
            if (v > best) {
                best = v;
                arg = g;
            }
        }
        if (best >= thr) {
            used[items[r].img][arg] = true;
            tp[r] = 1;
        }
    }
    std::vector<double> prec(items.size());
    int cum = 0;
    for (std::size_t r = 0; r < items.size(); ++r) prec[r] = (cum += tp[r]) / static_cast<double>(r + 1);
    double ap = 0;
    for (std::size_t r = 0; r < items.size(); ++r) {
        if (!tp[r]) continue;
        ap += *std::max_element(prec.begin() + static_cast<std::ptrdiff_t>(r), prec.end());
    }
    return ap / num_gt;
}

ImageEval random_eval(RandomSource& rng, int classes) {
    ImageEval e;
    const int ng = static_cast<int>(rng.uniform_int(0, 6));
    for (int i = 0; i < ng; ++i) {
        const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
        e.ground_truth.push_back({make_box(x, y, x + rng.uniform(3, 12), y + rng.uniform(3, 12)),
                                  static_cast<int>(rng.uniform_int(0, classes - 1))});
    }
    const int nd = static_cast<int>(rng.uniform_int(0, 8));
    for (int i = 0; i < nd; ++i) {
        Detection d;
        if (!e.ground_truth.empty() && rng.uniform() < 0.6) {
            const auto& g = e.ground_truth[static_cast<std::size_t>(rng.uniform_int(0, ng - 1))];
            const double j = rng.uniform(-3, 3);
            d.box = make_box(g.box.x_min + j, g.box.y_min + j, g.box.x_max + j, g.box.y_max);
            d.class_id = rng.uniform() < 0.8 ? g.class_id : static_cast<int>(rng.uniform_int(0, classes - 1));
        } else {
            const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
            d.box = make_box(x, y, x + 8, y + 8);
            d.class_id = static_cast<int>(rng.uniform_int(0, classes - 1));
        }
        // Coarse scores make ties common.
        d.score = std::round(rng.uniform() * 10) / 10;
        e.detections.push_back(d);
    }
    return e;
}

}  // namespace

TEST(Iou, KnownValues) {
    const Box a = make_box(0, 0, 2, 2), b = make_box(1, 0, 3, 2);
    EXPECT_NEAR(iou(a, b), 1.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, make_box(2, 0, 4, 2)), 0.0);
    EXPECT_DOUBLE_EQ(iou(a, make_box(5, 5, 6, 6)), 0.0);
    EXPECT_NEAR(iou(make_box(0, 0, 4, 4), make_box(1, 1, 3, 3)), 0.25, 1e-12);
}

TEST(Iou, SymmetricAndBounded) {
    RandomSource rng(1, "iou");
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(0, 10), y = rng.uniform(0, 10);
        const Box a = make_box(x, y, x + rng.uniform(0.1, 5), y + rng.uniform(0.1, 5));
        const double u = rng.uniform(0, 10), v = rng.uniform(0, 10);
        const Box b = make_box(u, v, u + rng.uniform(0.1, 5), v + rng.uniform(0.1, 5));
        EXPECT_DOUBLE_EQ(iou(a, b), iou(b, a));
        EXPECT_GE(iou(a, b), 0.0);
        EXPECT_LE(iou(a, b), 1.0);
    }
}

TEST(Ap, PerfectDetectionsGiveOne) {
    RandomSource rng(2, "p");
    const auto img = testutil::random_scene(rng, 100, 100, 3, 10);
    std::vector<Detection> dets;
    for (const auto& o : img.objects) dets.push_back({o.box, o.class_id, 0.9});
    EXPECT_DOUBLE_EQ(average_precision(dets, img.objects, 0.5), 1.0);
}

TEST(Ap, HandComputedCurve) {
    // Ranks: TP, FP, TP with 3 ground truths: 1/3 * 1 + 1/3 * 2/3.
    EXPECT_NEAR(ap_from_flags({true, false, true}, 3), (1.0 + 2.0 / 3.0) / 3.0, 1e-12);
    // The precision envelope lifts the first TP: FP, TP, TP -> precisions .5, 2/3.
    EXPECT_NEAR(ap_from_flags({false, true, true}, 2), (2.0 / 3.0 + 2.0 / 3.0) / 2.0, 1e-12);
    EXPECT_DOUBLE_EQ(ap_from_flags({}, 4), 0.0);
    EXPECT_DOUBLE_EQ(ap_from_flags({false}, 0), 0.0);
}

TEST(Ap, DuplicateDetectionIsFalsePositive) {
    const std::vector<GroundTruthObject> gt{{make_box(0, 0, 10, 10), 0}};
    const std::vector<Detection> dets{{make_box(0, 0, 10, 10), 0, 0.9}, {make_box(0, 0, 10, 10), 0, 0.8}};
    EXPECT_DOUBLE_EQ(average_precision(dets, gt, 0.5), 1.0);
    const std::vector<Detection> rev{{make_box(0, 0, 10, 10), 0, 0.9}, {make_box(0, 0, 10, 10), 0, 0.95}};
    EXPECT_DOUBLE_EQ(average_precision(rev, gt, 0.5), 1.0);
}

TEST(Ap, WrongClassNeverMatches) {
    const std::vector<GroundTruthObject> gt{{make_box(0, 0, 10, 10), 0}};
    const std::vector<Detection> dets{{make_box(0, 0, 10, 10), 1, 0.9}};
    EXPECT_DOUBLE_EQ(average_precision(dets, gt, 0.5), 0.0);
}

TEST(Ap, MatchesOracleOnRandomScenes) {
    RandomSource rng(3, "oracle");
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<ImageEval> imgs;
        const int n = static_cast<int>(rng.uniform_int(1, 4));
        for (int i = 0; i < n; ++i) imgs.push_back(random_eval(rng, 3));
        for (int c = -1; c < 3; ++c)
            for (double thr : {0.3, 0.5, 0.75})
                ASSERT_NEAR(average_precision(imgs, c, thr), oracle_ap(imgs, c, thr), 1e-12)
                    << "trial " << trial << " class " << c << " thr " << thr;
    }
}

TEST(Map, AveragesOverClassesWithGroundTruth) {
    GroundTruthById gts{{"a", {{make_box(0, 0, 10, 10), 0}, {make_box(20, 20, 30, 30), 2}}}};
    DetectionsById dets{{"a", {{make_box(0, 0, 10, 10), 0, 0.9}, {make_box(50, 50, 60, 60), 1, 0.99}}}};
    const double thr[] = {0.5};
    const auto r = map_at(dets, gts, thr);
    ASSERT_EQ(r.per_class_ap.size(), 2u);
    EXPECT_DOUBLE_EQ(r.per_class_ap.at(0), 1.0);
    EXPECT_DOUBLE_EQ(r.per_class_ap.at(2), 0.0);
    EXPECT_DOUBLE_EQ(r.map_value, 0.5);
}

TEST(Map, UnknownImageThrows) {
    GroundTruthById gts{{"a", {{make_box(0, 0, 10, 10), 0}}}};
    DetectionsById dets{{"b", {}}};
    const double thr[] = {0.5};
    EXPECT_THROW(map_at(dets, gts, thr), Error);
}

TEST(Map, CocoThresholdsAndAverage) {
    const auto t = coco_thresholds();
    ASSERT_EQ(t.size(), 10u);
    EXPECT_NEAR(t.front(), 0.5, 1e-12);
    EXPECT_NEAR(t.back(), 0.95, 1e-12);
    GroundTruthById gts{{"a", {{make_box(0, 0, 10, 10), 0}}}};
    // IoU 0.81: matched for thresholds 0.5 .. 0.8 (7 of 10).
    DetectionsById dets{{"a", {{make_box(0, 0, 10, 8.1), 0, 0.9}}}};
    const auto r = map_at(dets, gts, t);
    EXPECT_NEAR(r.map_value, 0.7, 1e-12);
}

TEST(Map, CsvRows) {
    EvalResult r;
    r.per_class_ap = {{0, 0.5}, {3, 0.25}};
    r.map_value = 0.375;
    std::ostringstream os;
    write_eval_header(os);
    write_eval_rows(os, 4, 1, r);
    const std::string s = os.str();
    EXPECT_NE(s.find("4,1,0,0.5"), std::string::npos);
    EXPECT_NE(s.find("4,1,3,0.25"), std::string::npos);
    EXPECT_NE(s.find("4,1,mAP,0.375"), std::string::npos);
}
