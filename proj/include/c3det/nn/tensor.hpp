#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace c3det::nn {

/// Dense channels x height x width tensor for a single sample.
template <class T>
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int channels, int height, int width, T fill = T(0))
        : c(channels), h(height), w(width), v(static_cast<std::size_t>(channels) * height * width, fill) {}

    std::size_t size() const noexcept { return v.size(); }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    T* data() noexcept { return v.data(); }
    const T* data() const noexcept { return v.data(); }
    T* channel(int ch) noexcept { return v.data() + static_cast<std::size_t>(ch) * plane(); }
    const T* channel(int ch) const noexcept { return v.data() + static_cast<std::size_t>(ch) * plane(); }
    T& at(int ch, int y, int x) noexcept { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    T at(int ch, int y, int x) const noexcept { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }

    bool same_shape(const Tensor& o) const noexcept { return c == o.c && h == o.h && w == o.w; }
    void zero() noexcept { std::fill(v.begin(), v.end(), T(0)); }
    bool all_finite() const noexcept {
        return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(c, h, w);
        for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

/// Trainable parameter with its gradient accumulator.
template <class T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;

    Param() = default;
    Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        value.assign(count, T(0));
        grad.assign(count, T(0));
    }
    std::size_t size() const noexcept { return value.size(); }
    void zero_grad() noexcept { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Channel-wise concatenation.
template <class T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
    int c = 0;
    for (const auto* p : parts) c += p->c;
    Tensor<T> out(c, parts.front()->h, parts.front()->w);
    std::size_t off = 0;
    for (const auto* p : parts) {
        std::copy(p->v.begin(), p->v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(off));
        off += p->v.size();
    }
    return out;
}

}  // namespace c3det::nn
