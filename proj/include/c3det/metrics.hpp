#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "c3det/core/types.hpp"

namespace c3det {

double iou(const Box& a, const Box& b) noexcept;

/// Detections and ground truth of one image.
struct ImageEval {
    std::vector<Detection> detections;
    std::vector<GroundTruthObject> ground_truth;
};

/// All-point interpolated AP with greedy score-ordered matching, pooled over
/// images. A detection is a true positive when its best-IoU unmatched
/// same-class ground truth in the same image reaches `iou_thr`. Score ties
/// keep input order (image order, then list order). `class_id < 0` pools all
/// classes (matching still requires equal class ids). Returns 0 when there is
/// no ground truth.
double average_precision(std::span<const ImageEval> images, int class_id, double iou_thr);

/// Single-image convenience over all classes.
double average_precision(std::span<const Detection> dets, std::span<const GroundTruthObject> gts, double iou_thr);

/// Area under the all-point interpolated PR curve given the TP flags of the
/// score-sorted detections.
double ap_from_flags(const std::vector<bool>& tp, int num_gt);

struct EvalResult {
    std::vector<double> thresholds;
    /// AP per class averaged over thresholds; only classes with ground truth.
    std::map<int, double> per_class_ap;
    /// mAP at each threshold.
    std::vector<double> map_per_threshold;
    double map_value = 0.0;
};

using DetectionsById = std::map<std::string, std::vector<Detection>>;
using GroundTruthById = std::map<std::string, std::vector<GroundTruthObject>>;

/// Per-class AP pooled over all images, averaged over classes that have at
/// least one ground-truth instance, then over thresholds. Throws when a
/// detection list names an image without ground truth entry.
EvalResult map_at(const DetectionsById& dets, const GroundTruthById& gts, std::span<const double> thresholds);

/// 0.50:0.05:0.95
std::vector<double> coco_thresholds();

/// CSV rows (clicks, session, class_id|"mAP", value).
void write_eval_rows(std::ostream& out, int clicks, int session, const EvalResult& r);
void write_eval_header(std::ostream& out);

}  // namespace c3det
