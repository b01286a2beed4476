#pragma once

#include <span>
#include <vector>

#include "c3det/core/types.hpp"

namespace c3det {

/// Single-channel H x W map, row-major.
struct Heatmap {
    int width = 0;
    int height = 0;
    double sigma = 0;
    std::vector<float> values;

    Heatmap() = default;
    Heatmap(int w, int h, double s = 0) : width(w), height(h), sigma(s), values(static_cast<std::size_t>(w) * h, 0.0f) {}

    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    double sum() const;
    bool same_shape(const Heatmap& o) const noexcept { return width == o.width && height == o.height; }
};

/// One map per class index; classes without inputs hold zeros.
struct ClassHeatmapStack {
    std::vector<Heatmap> maps;

    int num_classes() const noexcept { return static_cast<int>(maps.size()); }
};

struct ClassedHeatmap {
    const Heatmap* map = nullptr;
    int class_id = 0;
};

/// Gaussian of std-dev `sigma` centred at (x, y) in pixel-index coordinates,
/// zeroed beyond 3 sigma. Peak 1 at the continuous centre.
Heatmap render_gaussian(double x, double y, double sigma, int height, int width);

/// Pixel-wise max per class over the given maps.
ClassHeatmapStack collate_by_class(std::span<const ClassedHeatmap> inputs, int num_classes, int height, int width);

/// Renders every input and collates by class.
ClassHeatmapStack render_class_stack(std::span<const UserInput> inputs, int num_classes, double sigma, int height,
                                     int width);

/// Bilinear resize (half-pixel centres, edge clamp) followed by division by
/// the total, so the result sums to 1. Throws when the resized map sums to
/// at most 1e-12.
Heatmap resize_normalize(const Heatmap& h, int target_height, int target_width);

/// Bilinear resize alone.
Heatmap resize_bilinear(const Heatmap& h, int target_height, int target_width);

}  // namespace c3det
