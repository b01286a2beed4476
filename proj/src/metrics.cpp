#include "c3det/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace c3det {

double iou(const Box& a, const Box& b) noexcept {
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double ap_from_flags(const std::vector<bool>& tp, int num_gt) {
    if (num_gt <= 0) return 0.0;
    const std::size_t n = tp.size();
    std::vector<double> precision(n), recall(n);
    double ctp = 0, cfp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        (tp[i] ? ctp : cfp) += 1.0;
        precision[i] = ctp / (ctp + cfp);
        recall[i] = ctp / num_gt;
    }
    // precision envelope from the right
    for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return ap;
}

double average_precision(std::span<const ImageEval> images, int class_id, double iou_thr) {
    struct Ref {
        std::size_t image;
        std::size_t det;
        double score;
    };
    std::vector<Ref> order;
    int num_gt = 0;
    std::vector<std::vector<bool>> matched(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& im = images[i];
        for (std::size_t d = 0; d < im.detections.size(); ++d) {
            if (class_id < 0 || im.detections[d].class_id == class_id) order.push_back({i, d, im.detections[d].score});
        }
        for (const auto& g : im.ground_truth)
            if (class_id < 0 || g.class_id == class_id) ++num_gt;
        matched[i].assign(im.ground_truth.size(), false);
    }
    std::stable_sort(order.begin(), order.end(), [](const Ref& a, const Ref& b) { return a.score > b.score; });

    std::vector<bool> tp;
    tp.reserve(order.size());
    for (const auto& r : order) {
        const auto& im = images[r.image];
        const auto& det = im.detections[r.det];
        double best = -1.0;
        std::size_t best_g = 0;
        for (std::size_t g = 0; g < im.ground_truth.size(); ++g) {
            if (matched[r.image][g] || im.ground_truth[g].class_id != det.class_id) continue;
            const double o = iou(det.box, im.ground_truth[g].box);
            if (o > best) {
                best = o;
                best_g = g;
            }
        }
        if (best >= iou_thr && best >= 0.0) {
            matched[r.image][best_g] = true;
            tp.push_back(true);
        } else {
            tp.push_back(false);
        }
    }
    return ap_from_flags(tp, num_gt);
}

double average_precision(std::span<const Detection> dets, std::span<const GroundTruthObject> gts, double iou_thr) {
    ImageEval im{{dets.begin(), dets.end()}, {gts.begin(), gts.end()}};
    return average_precision(std::span<const ImageEval>(&im, 1), -1, iou_thr);
}

std::vector<double> coco_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

EvalResult map_at(const DetectionsById& dets, const GroundTruthById& gts, std::span<const double> thresholds) {
    if (thresholds.empty()) throw Error("metrics", "no IoU thresholds given");
    for (const auto& [id, _] : dets) {
        if (!gts.count(id)) throw Error("metrics", "detections reference unknown image id '" + id + "'");
    }
    std::vector<ImageEval> images;
    std::set<int> classes;
    for (const auto& [id, g] : gts) {
        ImageEval im;
        im.ground_truth = g;
        if (auto it = dets.find(id); it != dets.end()) im.detections = it->second;
        for (const auto& o : g) classes.insert(o.class_id);
        images.push_back(std::move(im));
    }
    EvalResult r;
    r.thresholds.assign(thresholds.begin(), thresholds.end());
    for (int c : classes) r.per_class_ap[c] = 0.0;
    for (double thr : thresholds) {
        double sum = 0.0;
        for (int c : classes) {
            const double ap = average_precision(images, c, thr);
            r.per_class_ap[c] += ap / static_cast<double>(thresholds.size());
            sum += ap;
        }
        r.map_per_threshold.push_back(classes.empty() ? 0.0 : sum / static_cast<double>(classes.size()));
    }
    r.map_value = std::accumulate(r.map_per_threshold.begin(), r.map_per_threshold.end(), 0.0) /
                  static_cast<double>(r.map_per_threshold.size());
    return r;
}

void write_eval_header(std::ostream& out) { out << "clicks,session,class_id,value\n"; }

void write_eval_rows(std::ostream& out, int clicks, int session, const EvalResult& r) {
    for (const auto& [c, ap] : r.per_class_ap) out << clicks << ',' << session << ',' << c << ',' << format_real(ap) << '\n';
    out << clicks << ',' << session << ",mAP," << format_real(r.map_value) << '\n';
}

}  // namespace c3det
