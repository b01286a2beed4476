#include "c3det/heatmaps.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "c3det/simd/kernels.hpp"

namespace c3det {

double Heatmap::sum() const {
    double s = 0.0;
    for (float v : values) s += v;
    return s;
}

Heatmap render_gaussian(double x, double y, double sigma, int height, int width) {
    if (!(sigma > 0.0)) throw Error("heatmaps", "sigma must be positive");
    if (width <= 0 || height <= 0) throw Error("heatmaps", "empty heatmap shape");
    if (x < 0.0 || y < 0.0 || x > width || y > height) throw Error("heatmaps", "position outside heatmap");
    Heatmap h(width, height, sigma);
    const double radius = 3.0 * sigma;
    const double r2 = radius * radius;
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const int x0 = std::max(0, static_cast<int>(std::ceil(x - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(x + radius)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(y - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(y + radius)));
    for (int py = y0; py <= y1; ++py) {
        const double dy = py - y;
        for (int px = x0; px <= x1; ++px) {
            const double dx = px - x;
            const double d2 = dx * dx + dy * dy;
            if (d2 > r2) continue;
            h.at(py, px) = static_cast<float>(std::exp(-d2 * inv));
        }
    }
    return h;
}

ClassHeatmapStack collate_by_class(std::span<const ClassedHeatmap> inputs, int num_classes, int height, int width) {
    if (num_classes <= 0) throw Error("heatmaps", "num_classes must be positive");
    ClassHeatmapStack stack;
    stack.maps.assign(static_cast<std::size_t>(num_classes), Heatmap(width, height));
    for (const auto& in : inputs) {
        if (in.map == nullptr || in.map->width != width || in.map->height != height)
            throw Error("heatmaps", "heatmap shape mismatch in collate_by_class");
        if (in.class_id < 0 || in.class_id >= num_classes) throw Error("heatmaps", "class id out of range");
        auto& dst = stack.maps[static_cast<std::size_t>(in.class_id)];
        simd::max_inplace(dst.values.data(), in.map->values.data(), dst.values.size());
        dst.sigma = in.map->sigma;
    }
    return stack;
}

ClassHeatmapStack render_class_stack(std::span<const UserInput> inputs, int num_classes, double sigma, int height,
                                     int width) {
    std::vector<Heatmap> rendered;
    rendered.reserve(inputs.size());
    std::vector<ClassedHeatmap> refs;
    for (const auto& u : inputs) rendered.push_back(render_gaussian(u.x, u.y, sigma, height, width));
    for (std::size_t k = 0; k < inputs.size(); ++k) refs.push_back({&rendered[k], inputs[k].class_id});
    return collate_by_class(refs, num_classes, height, width);
}

Heatmap resize_bilinear(const Heatmap& h, int target_height, int target_width) {
    if (target_height <= 0 || target_width <= 0) throw Error("heatmaps", "empty resize target");
    Heatmap out(target_width, target_height, h.sigma);
    const double sy = static_cast<double>(h.height) / target_height;
    const double sx = static_cast<double>(h.width) / target_width;
    for (int oy = 0; oy < target_height; ++oy) {
        const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(h.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, h.height - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < target_width; ++ox) {
            const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(h.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, h.width - 1);
            const double wx = fx - x0;
            const double top = (1.0 - wx) * h.at(y0, x0) + wx * h.at(y0, x1);
            const double bot = (1.0 - wx) * h.at(y1, x0) + wx * h.at(y1, x1);
            out.at(oy, ox) = static_cast<float>((1.0 - wy) * top + wy * bot);
        }
    }
    return out;
}

Heatmap resize_normalize(const Heatmap& h, int target_height, int target_width) {
    Heatmap out = resize_bilinear(h, target_height, target_width);
    const double total = out.sum();
    if (!(total > 1e-12)) throw Error("heatmaps", "cannot normalize an all-zero heatmap");
    for (float& v : out.values) v = static_cast<float>(v / total);
    return out;
}

}  // namespace c3det
