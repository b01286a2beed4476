#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "c3det/core/types.hpp"
#include "c3det/heatmaps.hpp"
#include "c3det/model/c3.hpp"
#include "c3det/model/config.hpp"
#include "c3det/model/head.hpp"
#include "c3det/nn/layers.hpp"

namespace c3det {

/// Four 3x3 conv blocks; the first log2(stride) blocks downsample by 2.
/// Widths are out/2 for the first block and `out` after. ReLU follows each
/// block except the last when `standardize` is set, in which case the last
/// block is followed by a per-channel affine standardisation instead.
template <class T>
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(std::string name, int in_channels, int out_channels, int stride, bool standardize);

    void init(std::uint64_t seed);
    nn::Tensor<T> forward(const nn::Tensor<T>& x);
    /// Returns dL/dx when requested.
    nn::Tensor<T> backward(const nn::Tensor<T>& dy, bool need_input_grad);
    std::vector<nn::Param<T>*> params();

    int in_channels() const noexcept { return convs_.front().in_channels(); }
    int out_channels() const noexcept { return convs_.back().out_channels(); }

private:
    std::string name_;
    bool standardize_ = false;
    std::vector<nn::Conv2d<T>> convs_;
    std::vector<nn::ReLU<T>> relus_;
    nn::ChannelNorm<T> norm_;
};

/// Channel concatenation [F_I, F_LF, F_C3] followed by a 1x1 projection + ReLU.
template <class T>
class Fusion {
public:
    Fusion() = default;
    Fusion(int backbone_channels, int lf_channels, int num_classes, int out_channels);

    void init(std::uint64_t seed);
    nn::Tensor<T> forward(const nn::Tensor<T>& f_i, const nn::Tensor<T>& f_lf, const nn::Tensor<T>& f_c3);
    struct Grads {
        nn::Tensor<T> f_i, f_lf, f_c3;
    };
    Grads backward(const nn::Tensor<T>& dy);
    std::vector<nn::Param<T>*> params() { return proj_.params(); }
    int concat_channels() const noexcept { return bc_ + lc_ + nc_; }

private:
    int bc_ = 0, lc_ = 0, nc_ = 0;
    nn::Conv2d<T> proj_;
    nn::ReLU<T> relu_;
};

/// Image tensor (3 x H x W) standardised as (v - 0.5) / 0.25.
template <class T>
nn::Tensor<T> image_tensor(const Image& img);

/// Stack of class heatmaps as a C x H x W tensor.
template <class T>
nn::Tensor<T> stack_tensor(const ClassHeatmapStack& stack);

/// The interactive detector: backbone, late-fusion extractor, C3 module,
/// fusion and dense head, wired according to the variant in ModelConfig.
/// Forward caches activations for a single backward pass; one instance must
/// not be used from two threads at once.
template <class T>
class C3Det {
public:
    C3Det(ModelConfig cfg, int num_classes, std::uint64_t seed = 0);

    const ModelConfig& config() const noexcept { return cfg_; }
    int num_classes() const noexcept { return num_classes_; }

    HeadOutput<T> forward(const Image& image, std::span<const UserInput> inputs);
    /// Backpropagates dL/d(head output) through the network, accumulating
    /// parameter gradients.
    void backward(const nn::Tensor<T>& d_head);

    std::vector<nn::Param<T>*> params();

    // Stage access (valid after forward).
    const nn::Tensor<T>& f_i() const noexcept { return f_i_; }
    const nn::Tensor<T>& f_lf() const noexcept { return f_lf_; }
    const nn::Tensor<T>& f_c3() const noexcept { return f_c3_; }

    nn::Tensor<T> backbone_forward(const nn::Tensor<T>& x) { return backbone_.forward(x); }
    nn::Tensor<T> lf_forward(const ClassHeatmapStack& stack);

    /// Copies parameter values from another instance of any precision.
    template <class U>
    void copy_params_from(C3Det<U>& other) {
        auto dst = params();
        auto src = other.params();
        for (std::size_t i = 0; i < dst.size(); ++i)
            for (std::size_t j = 0; j < dst[i]->size(); ++j) dst[i]->value[j] = static_cast<T>(src[i]->value[j]);
    }

private:
    ModelConfig cfg_;
    int num_classes_;
    FeatureExtractor<T> backbone_;
    FeatureExtractor<T> lf_;
    C3Module<T> c3_;
    Fusion<T> fusion_;
    DenseHead<T> head_;

    nn::Tensor<T> f_i_, f_lf_, f_c3_;
};

}  // namespace c3det
