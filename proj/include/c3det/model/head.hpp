#pragma once

#include <span>
#include <vector>

#include "c3det/core/types.hpp"
#include "c3det/model/config.hpp"
#include "c3det/nn/layers.hpp"

namespace c3det {

/// Dense per-cell predictions. Channel layout: 0 objectness logit,
/// 1..C class logits, then dx, dy, log w, log h (in units of stride,
/// relative to the cell centre).
template <class T>
struct HeadOutput {
    nn::Tensor<T> t;
    int num_classes = 0;
    int stride = 4;

    int grid_h() const noexcept { return t.h; }
    int grid_w() const noexcept { return t.w; }
    T objectness(int y, int x) const noexcept { return t.at(0, y, x); }
    T class_logit(int c, int y, int x) const noexcept { return t.at(1 + c, y, x); }
    T delta(int d, int y, int x) const noexcept { return t.at(1 + num_classes + d, y, x); }
    static int channels(int num_classes) noexcept { return 1 + num_classes + 4; }
};

/// 3x3 conv + ReLU followed by a 1x1 prediction layer.
template <class T>
class DenseHead {
public:
    DenseHead() = default;
    DenseHead(int in_channels, int hidden, int num_classes, int stride);

    void init(std::uint64_t seed);
    HeadOutput<T> forward(const nn::Tensor<T>& features);
    nn::Tensor<T> backward(const nn::Tensor<T>& d_out);
    std::vector<nn::Param<T>*> params();

private:
    int num_classes_ = 0;
    int stride_ = 4;
    nn::Conv2d<T> conv_;
    nn::ReLU<T> relu_;
    nn::Conv2d<T> out_;
};

/// Box predicted by a cell, clipped to the image. May be degenerate.
template <class T>
Box decode_cell_box(const HeadOutput<T>& h, int y, int x, int image_width, int image_height);

/// score = sigmoid(objectness) * max softmax(class)
template <class T>
double cell_score(const HeadOutput<T>& h, int y, int x, int* best_class = nullptr);

/// Per-cell decode above `score_threshold`, class-wise NMS at `nms_iou`, at
/// most `top_n` detections sorted by score.
template <class T>
std::vector<Detection> decode(const HeadOutput<T>& h, double score_threshold, double nms_iou, int top_n,
                              int image_width, int image_height);

/// Greedy class-wise NMS; input order breaks score ties.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold, int top_n);

}  // namespace c3det
