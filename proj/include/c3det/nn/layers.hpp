#pragma once

#include <string>
#include <vector>

#include "c3det/core/random.hpp"
#include "c3det/nn/tensor.hpp"

namespace c3det::nn {

/// Square convolution with kernel 1 or 3, zero padding kernel/2, stride 1 or 2.
/// Output spatial size is ceil(in / stride). Weights are [cout, cin*k*k].
template <class T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int cin, int cout, int kernel, int stride);

    /// He-normal weights, zero bias.
    void init(RandomSource& rng, double gain = 2.0);

    Tensor<T> forward(const Tensor<T>& x);
    /// Accumulates parameter gradients. Returns dL/dx when `need_input_grad`.
    Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad);

    int in_channels() const noexcept { return cin_; }
    int out_channels() const noexcept { return cout_; }
    int kernel() const noexcept { return k_; }
    int stride() const noexcept { return stride_; }
    static int out_size(int in, int stride) noexcept { return (in + stride - 1) / stride; }

    Param<T>& weight() noexcept { return weight_; }
    Param<T>& bias() noexcept { return bias_; }
    std::vector<Param<T>*> params() { return {&weight_, &bias_}; }

private:
    bool pointwise() const noexcept { return k_ == 1 && stride_ == 1; }

    int cin_ = 0, cout_ = 0, k_ = 1, stride_ = 1;
    Param<T> weight_;
    Param<T> bias_;
    // cached for backward
    int in_h_ = 0, in_w_ = 0;
    std::vector<T> col_;
    Tensor<T> input_;
};

template <class T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy) const;

private:
    Tensor<T> out_;
};

/// Per-sample, per-channel standardisation over space with a learned affine:
/// y = gamma * (x - mean) / sqrt(var + eps) + beta.
template <class T>
class ChannelNorm {
public:
    ChannelNorm() = default;
    ChannelNorm(std::string name, int channels, double eps = 1e-5);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

    std::vector<Param<T>*> params() { return {&gamma_, &beta_}; }

private:
    int channels_ = 0;
    double eps_ = 1e-5;
    Param<T> gamma_;
    Param<T> beta_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

void im2col3x3(const float* x, int c, int h, int w, int stride, float* col);
void im2col3x3(const double* x, int c, int h, int w, int stride, double* col);
void col2im3x3(const float* col, int c, int h, int w, int stride, float* dx);
void col2im3x3(const double* col, int c, int h, int w, int stride, double* dx);

}  // namespace c3det::nn
