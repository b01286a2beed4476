#include "c3det/model/head.hpp"

#include <algorithm>
#include <cmath>

#include "c3det/metrics.hpp"

namespace c3det {

namespace {
constexpr double kMaxLogSize = 6.0;
constexpr double kObjectnessPrior = 0.01;
}  // namespace

template <class T>
DenseHead<T>::DenseHead(int in_channels, int hidden, int num_classes, int stride)
    : num_classes_(num_classes),
      stride_(stride),
      conv_("head.conv", in_channels, hidden, 3, 1),
      out_("head.out", hidden, HeadOutput<T>::channels(num_classes), 1, 1) {}

template <class T>
void DenseHead<T>::init(std::uint64_t seed) {
    RandomSource r1(seed, "init/head.conv");
    conv_.init(r1);
    RandomSource r2(seed, "init/head.out");
    for (auto& v : out_.weight().value) v = static_cast<T>(r2.normal(0.0, 0.01));
    std::fill(out_.bias().value.begin(), out_.bias().value.end(), T(0));
    out_.bias().value[0] = static_cast<T>(-std::log((1.0 - kObjectnessPrior) / kObjectnessPrior));
}

template <class T>
HeadOutput<T> DenseHead<T>::forward(const nn::Tensor<T>& features) {
    HeadOutput<T> h;
    h.t = out_.forward(relu_.forward(conv_.forward(features)));
    h.num_classes = num_classes_;
    h.stride = stride_;
    return h;
}

template <class T>
nn::Tensor<T> DenseHead<T>::backward(const nn::Tensor<T>& d_out) {
    return conv_.backward(relu_.backward(out_.backward(d_out, true)), true);
}

template <class T>
std::vector<nn::Param<T>*> DenseHead<T>::params() {
    auto p = conv_.params();
    for (auto* q : out_.params()) p.push_back(q);
    return p;
}

template <class T>
Box decode_cell_box(const HeadOutput<T>& h, int y, int x, int image_width, int image_height) {
    const double s = h.stride;
    const double cx = (x + 0.5) * s + static_cast<double>(h.delta(0, y, x)) * s;
    const double cy = (y + 0.5) * s + static_cast<double>(h.delta(1, y, x)) * s;
    const double bw = s * std::exp(std::clamp(static_cast<double>(h.delta(2, y, x)), -kMaxLogSize, kMaxLogSize));
    const double bh = s * std::exp(std::clamp(static_cast<double>(h.delta(3, y, x)), -kMaxLogSize, kMaxLogSize));
    Box b{cx - 0.5 * bw, cy - 0.5 * bh, cx + 0.5 * bw, cy + 0.5 * bh};
    b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(image_width));
    b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(image_width));
    b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(image_height));
    b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(image_height));
    return b;
}

template <class T>
double cell_score(const HeadOutput<T>& h, int y, int x, int* best_class) {
    int best = 0;
    double mx = h.class_logit(0, y, x);
    for (int c = 1; c < h.num_classes; ++c) {
        const double l = h.class_logit(c, y, x);
        if (l > mx) {
            mx = l;
            best = c;
        }
    }
    double z = 0.0;
    for (int c = 0; c < h.num_classes; ++c) z += std::exp(static_cast<double>(h.class_logit(c, y, x)) - mx);
    const double p_obj = 1.0 / (1.0 + std::exp(-static_cast<double>(h.objectness(y, x))));
    if (best_class) *best_class = best;
    return p_obj / z;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold, int top_n) {
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<Detection> keep;
    for (const auto& d : dets) {
        if (static_cast<int>(keep.size()) >= top_n) break;
        bool suppressed = false;
        for (const auto& k : keep) {
            if (k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) keep.push_back(d);
    }
    return keep;
}

template <class T>
std::vector<Detection> decode(const HeadOutput<T>& h, double score_threshold, double nms_iou, int top_n,
                              int image_width, int image_height) {
    std::vector<Detection> cand;
    for (int y = 0; y < h.grid_h(); ++y) {
        for (int x = 0; x < h.grid_w(); ++x) {
            int cls = 0;
            const double score = cell_score(h, y, x, &cls);
            if (!(score >= score_threshold)) continue;
            const Box b = decode_cell_box(h, y, x, image_width, image_height);
            if (!b.valid()) continue;
            cand.push_back({b, cls, score});
        }
    }
    return nms(std::move(cand), nms_iou, top_n);
}

template class DenseHead<float>;
template class DenseHead<double>;
template Box decode_cell_box<float>(const HeadOutput<float>&, int, int, int, int);
template Box decode_cell_box<double>(const HeadOutput<double>&, int, int, int, int);
template double cell_score<float>(const HeadOutput<float>&, int, int, int*);
template double cell_score<double>(const HeadOutput<double>&, int, int, int*);
template std::vector<Detection> decode<float>(const HeadOutput<float>&, double, double, int, int, int);
template std::vector<Detection> decode<double>(const HeadOutput<double>&, double, double, int, int, int);

}  // namespace c3det
