#pragma once

#include <span>
#include <vector>

#include "c3det/core/types.hpp"
#include "c3det/model/config.hpp"
#include "c3det/model/head.hpp"

namespace c3det {

/// One pre-NMS prediction seen by the user-input enforcing loss.
template <class T>
struct UelCandidate {
    Box box;
    std::vector<T> logits;
    int cell_y = -1;
    int cell_x = -1;
};

template <class T>
struct UelResult {
    double value = 0.0;
    int pairs = 0;  // (prediction, input) pairs with non-zero IoU
    std::vector<std::vector<T>> d_logits;
};

/// Sum over (prediction j, input k) pairs whose boxes overlap (IoU > 0) of
/// the class loss between prediction j's logits and input k's class. The box
/// of input k is the ground-truth object it was simulated from; inputs
/// without that association are rejected.
template <class T>
UelResult<T> uel_loss(std::span<const UelCandidate<T>> candidates, std::span<const UserInput> inputs,
                      const LabeledImage& gt, ClassLoss loss, double focal_gamma = 2.0);

/// Cells whose score reaches `score_floor`, decoded to boxes (non-degenerate only).
template <class T>
std::vector<UelCandidate<T>> pre_nms_candidates(const HeadOutput<T>& h, double score_floor, int image_width,
                                                int image_height);

/// Class loss for one logit vector; adds dL/dlogits into `grad` when non-null.
template <class T>
double class_loss(std::span<const T> logits, int target, ClassLoss loss, double focal_gamma, T* grad);

/// Sigmoid focal loss for one logit; adds the derivative into `grad` when non-null.
double sigmoid_focal(double logit, bool positive, double alpha, double gamma, double* grad);

struct LossBreakdown {
    double total = 0.0;
    double cls = 0.0;
    double box = 0.0;
    double uel = 0.0;  // weighted contribution to total
    int num_positive = 0;
    int uel_pairs = 0;
};

template <class T>
struct LossResult {
    LossBreakdown parts;
    nn::Tensor<T> grad;  // dL/d(head output)
};

/// Positive cell of each ground-truth object (the cell holding its centre).
/// When two objects share a cell, the one whose centre is nearer the cell
/// centre wins. Returns per-cell object index or -1.
std::vector<int> assign_targets(const LabeledImage& gt, int grid_h, int grid_w, int stride);

/// L = L_cls + L_box + lambda * L_UEL, each normalised by max(1, #positives).
/// L_cls: sigmoid focal objectness over all cells + softmax cross-entropy on
/// positives. L_box: L1 on the four deltas of positives.
/// Throws when any term is non-finite.
template <class T>
LossResult<T> total_loss(const HeadOutput<T>& head, const LabeledImage& gt, std::span<const UserInput> inputs,
                         const ModelConfig& cfg);

}  // namespace c3det
