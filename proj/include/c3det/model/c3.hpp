#pragma once

// Class-wise collated correlation.
//
// For every user input k with feature-resolution weight map U_k (sums to 1):
//   template   T_k(i)   = sum_{x,y} F(i,x,y) U_k(x,y)
//   correlation M_k(x,y) = sum_i T_k(i) F(i,x,y)
//   collation  F_C3(c,x,y) = max_{k : class_k = c} M_k(x,y), zero if class c has no input.
// Every stage has a hand-written backward pass.

#include <span>
#include <vector>

#include "c3det/heatmaps.hpp"
#include "c3det/model/config.hpp"
#include "c3det/nn/tensor.hpp"

namespace c3det {

template <class T>
using FeatureMap = nn::Tensor<T>;

/// Weighted global sum pooling of F (channels x H x W) with U (H x W).
template <class T>
std::vector<T> extract_template(const FeatureMap<T>& features, std::span<const T> weights);
/// dF += dT (outer) U
template <class T>
void extract_template_backward(std::span<const T> d_template, std::span<const T> weights, FeatureMap<T>& d_features);

/// Per-pixel dot product of the template with F. Returns a 1 x H x W map.
template <class T>
FeatureMap<T> correlate(std::span<const T> tmpl, const FeatureMap<T>& features);
/// d_template = sum_p dM(p) F(:,p); dF += T (outer) dM
template <class T>
void correlate_backward(const FeatureMap<T>& d_map, std::span<const T> tmpl, const FeatureMap<T>& features,
                        std::vector<T>& d_template, FeatureMap<T>& d_features);

/// Collated maps plus, per output element, the index of the winning input map
/// (-1 for classes without inputs). Ties resolve to the earliest input.
template <class T>
struct Collation {
    FeatureMap<T> output;
    std::vector<int> source;
};

template <class T>
Collation<T> collate_correlations(std::span<const FeatureMap<T>> maps, std::span<const int> class_ids,
                                  int num_classes);
/// Routes gradient of the collated output back to the winning maps.
template <class T>
std::vector<FeatureMap<T>> collate_correlations_backward(const FeatureMap<T>& d_output, const Collation<T>& c,
                                                         std::size_t num_maps);

/// One user input prepared for the C3 pathway.
struct C3Input {
    Heatmap weights;  // at feature resolution, sums to 1
    int class_id = 0;
};

/// Renders each input at image resolution with `sigma`, resizes to the
/// feature grid and normalises.
std::vector<C3Input> prepare_c3_inputs(std::span<const UserInput> inputs, double sigma, int image_height,
                                       int image_width, int feature_height, int feature_width);

/// Stateful module: forward caches what backward needs.
template <class T>
class C3Module {
public:
    explicit C3Module(CorrelationOrder order = CorrelationOrder::CorrelateThenCollate) : order_(order) {}

    FeatureMap<T> forward(const FeatureMap<T>& features, std::span<const C3Input> inputs, int num_classes);
    /// Accumulates dL/dF into `d_features`.
    void backward(const FeatureMap<T>& d_output, FeatureMap<T>& d_features) const;

    CorrelationOrder order() const noexcept { return order_; }

private:
    struct Branch {
        std::vector<T> weights;
        std::vector<T> tmpl;
        int class_id = 0;
    };

    CorrelationOrder order_;
    const FeatureMap<T>* features_ = nullptr;
    std::vector<Branch> branches_;
    Collation<T> collation_;
};

}  // namespace c3det
