#include "c3det/nn/layers.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "c3det/simd/kernels.hpp"

namespace c3det::nn {

namespace {

template <class T>
void im2col_impl(const T* x, int c, int h, int w, int stride, T* col) {
    const int oh = Conv2d<T>::out_size(h, stride);
    const int ow = Conv2d<T>::out_size(w, stride);
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    for (int ci = 0; ci < c; ++ci) {
        const T* xc = x + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * ohw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    T* dst = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst, 0, sizeof(T) * ow);
                        continue;
                    }
                    const T* src = xc + static_cast<std::size_t>(iy) * w;
                    if (stride == 1) {
                        // ix = ox + kx - 1
                        const int lo = kx == 0 ? 1 : 0;
                        const int hi = kx == 2 ? ow - 1 : ow;
                        if (lo > 0) dst[0] = T(0);
                        if (hi < ow) dst[ow - 1] = T(0);
                        std::memcpy(dst + lo, src + lo + kx - 1, sizeof(T) * static_cast<std::size_t>(hi - lo));
                    } else {
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kx - 1;
                            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_impl(const T* col, int c, int h, int w, int stride, T* dx) {
    const int oh = Conv2d<T>::out_size(h, stride);
    const int ow = Conv2d<T>::out_size(w, stride);
    const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
    std::memset(dx, 0, sizeof(T) * static_cast<std::size_t>(c) * h * w);
    for (int ci = 0; ci < c; ++ci) {
        T* xc = dx + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * ohw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * ow;
                    T* dst = xc + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

void im2col3x3(const float* x, int c, int h, int w, int stride, float* col) { im2col_impl(x, c, h, w, stride, col); }
void im2col3x3(const double* x, int c, int h, int w, int stride, double* col) { im2col_impl(x, c, h, w, stride, col); }
void col2im3x3(const float* col, int c, int h, int w, int stride, float* dx) { col2im_impl(col, c, h, w, stride, dx); }
void col2im3x3(const double* col, int c, int h, int w, int stride, double* dx) { col2im_impl(col, c, h, w, stride, dx); }

template <class T>
Conv2d<T>::Conv2d(std::string name, int cin, int cout, int kernel, int stride)
    : cin_(cin),
      cout_(cout),
      k_(kernel),
      stride_(stride),
      weight_(name + ".weight", {cout, cin * kernel * kernel}),
      bias_(name + ".bias", {cout}) {
    if (kernel != 1 && kernel != 3) throw std::invalid_argument("Conv2d: kernel must be 1 or 3");
    if (stride != 1 && stride != 2) throw std::invalid_argument("Conv2d: stride must be 1 or 2");
    if (kernel == 1 && stride != 1) throw std::invalid_argument("Conv2d: 1x1 kernels take stride 1");
    if (cin <= 0 || cout <= 0) throw std::invalid_argument("Conv2d: channel counts must be positive");
}

template <class T>
void Conv2d<T>::init(RandomSource& rng, double gain) {
    const double fan_in = static_cast<double>(cin_) * k_ * k_;
    const double std = std::sqrt(gain / fan_in);
    for (auto& v : weight_.value) v = static_cast<T>(rng.normal(0.0, std));
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <class T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
    if (x.c != cin_) throw std::invalid_argument("Conv2d " + weight_.name + ": expected " + std::to_string(cin_) +
                                                 " input channels, got " + std::to_string(x.c));
    in_h_ = x.h;
    in_w_ = x.w;
    const int oh = out_size(x.h, stride_);
    const int ow = out_size(x.w, stride_);
    const int ohw = oh * ow;
    Tensor<T> y(cout_, oh, ow);
    for (int co = 0; co < cout_; ++co) std::fill_n(y.channel(co), ohw, bias_.value[static_cast<std::size_t>(co)]);
    const int kk = cin_ * k_ * k_;
    if (pointwise()) {
        input_ = x;
        simd::gemm_nn(cout_, ohw, kk, weight_.value.data(), kk, x.data(), ohw, y.data(), ohw, true);
    } else {
        col_.resize(static_cast<std::size_t>(kk) * ohw);
        im2col3x3(x.data(), x.c, x.h, x.w, stride_, col_.data());
        simd::gemm_nn(cout_, ohw, kk, weight_.value.data(), kk, col_.data(), ohw, y.data(), ohw, true);
    }
    return y;
}

template <class T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
    const int ohw = dy.h * dy.w;
    const int kk = cin_ * k_ * k_;
    for (int co = 0; co < cout_; ++co) {
        const T* g = dy.channel(co);
        T s = T(0);
        for (int i = 0; i < ohw; ++i) s += g[i];
        bias_.grad[static_cast<std::size_t>(co)] += s;
    }
    const T* col = pointwise() ? input_.data() : col_.data();
    simd::gemm_nt(cout_, kk, ohw, dy.data(), ohw, col, ohw, weight_.grad.data(), kk, true);
    if (!need_input_grad) return {};
    Tensor<T> dx(cin_, in_h_, in_w_);
    if (pointwise()) {
        simd::gemm_tn(kk, ohw, cout_, weight_.value.data(), kk, dy.data(), ohw, dx.data(), ohw, false);
    } else {
        std::vector<T> dcol(static_cast<std::size_t>(kk) * ohw);
        simd::gemm_tn(kk, ohw, cout_, weight_.value.data(), kk, dy.data(), ohw, dcol.data(), ohw, false);
        col2im3x3(dcol.data(), cin_, in_h_, in_w_, stride_, dx.data());
    }
    return dx;
}

template <class T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
    out_ = Tensor<T>(x.c, x.h, x.w);
    simd::relu(x.data(), out_.data(), x.size());
    return out_;
}

template <class T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) const {
    Tensor<T> dx(dy.c, dy.h, dy.w);
    for (std::size_t i = 0; i < dy.size(); ++i) dx.v[i] = out_.v[i] > T(0) ? dy.v[i] : T(0);
    return dx;
}

template <class T>
ChannelNorm<T>::ChannelNorm(std::string name, int channels, double eps)
    : channels_(channels), eps_(eps), gamma_(name + ".gamma", {channels}), beta_(name + ".beta", {channels}) {
    std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
}

template <class T>
Tensor<T> ChannelNorm<T>::forward(const Tensor<T>& x) {
    if (x.c != channels_) throw std::invalid_argument("ChannelNorm: channel mismatch");
    const std::size_t n = x.plane();
    xhat_ = Tensor<T>(x.c, x.h, x.w);
    inv_std_.assign(static_cast<std::size_t>(x.c), T(0));
    Tensor<T> y(x.c, x.h, x.w);
    for (int ch = 0; ch < x.c; ++ch) {
        const T* src = x.channel(ch);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += src[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = src[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[static_cast<std::size_t>(ch)] = static_cast<T>(inv);
        const T g = gamma_.value[static_cast<std::size_t>(ch)];
        const T b = beta_.value[static_cast<std::size_t>(ch)];
        T* xh = xhat_.channel(ch);
        T* dst = y.channel(ch);
        for (std::size_t i = 0; i < n; ++i) {
            xh[i] = static_cast<T>((src[i] - mean) * inv);
            dst[i] = g * xh[i] + b;
        }
    }
    return y;
}

template <class T>
Tensor<T> ChannelNorm<T>::backward(const Tensor<T>& dy) {
    const std::size_t n = dy.plane();
    Tensor<T> dx(dy.c, dy.h, dy.w);
    for (int ch = 0; ch < dy.c; ++ch) {
        const auto c = static_cast<std::size_t>(ch);
        const T* g = dy.channel(ch);
        const T* xh = xhat_.channel(ch);
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum_g += g[i];
            sum_gx += static_cast<double>(g[i]) * xh[i];
        }
        gamma_.grad[c] += static_cast<T>(sum_gx);
        beta_.grad[c] += static_cast<T>(sum_g);
        // dxhat = gamma * g; dx = inv/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
        const double gm = gamma_.value[c];
        const double inv = inv_std_[c];
        const double nn = static_cast<double>(n);
        T* d = dx.channel(ch);
        for (std::size_t i = 0; i < n; ++i)
            d[i] = static_cast<T>(gm * inv / nn * (nn * g[i] - sum_g - xh[i] * sum_gx));
    }
    return dx;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class ReLU<float>;
template class ReLU<double>;
template class ChannelNorm<float>;
template class ChannelNorm<double>;

}  // namespace c3det::nn
