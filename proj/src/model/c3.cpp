#include "c3det/model/c3.hpp"

#include <algorithm>

#include "c3det/core/types.hpp"
#include "c3det/simd/kernels.hpp"

namespace c3det {

template <class T>
std::vector<T> extract_template(const FeatureMap<T>& features, std::span<const T> weights) {
    const int hw = static_cast<int>(features.plane());
    if (weights.size() != features.plane()) throw Error("model", "template weights do not match feature map shape");
    std::vector<T> out(static_cast<std::size_t>(features.c));
    simd::gemm_nt(features.c, 1, hw, features.data(), hw, weights.data(), hw, out.data(), 1, false);
    return out;
}

template <class T>
void extract_template_backward(std::span<const T> d_template, std::span<const T> weights, FeatureMap<T>& d_features) {
    for (int i = 0; i < d_features.c; ++i)
        simd::axpy(d_template[static_cast<std::size_t>(i)], weights.data(), d_features.channel(i), d_features.plane());
}

template <class T>
FeatureMap<T> correlate(std::span<const T> tmpl, const FeatureMap<T>& features) {
    if (tmpl.size() != static_cast<std::size_t>(features.c)) throw Error("model", "template/feature channel mismatch");
    const int hw = static_cast<int>(features.plane());
    FeatureMap<T> m(1, features.h, features.w);
    simd::gemm_nn(1, hw, features.c, tmpl.data(), features.c, features.data(), hw, m.data(), hw, false);
    return m;
}

template <class T>
void correlate_backward(const FeatureMap<T>& d_map, std::span<const T> tmpl, const FeatureMap<T>& features,
                        std::vector<T>& d_template, FeatureMap<T>& d_features) {
    const int hw = static_cast<int>(features.plane());
    d_template.assign(static_cast<std::size_t>(features.c), T(0));
    simd::gemm_nt(features.c, 1, hw, features.data(), hw, d_map.data(), hw, d_template.data(), 1, false);
    for (int i = 0; i < features.c; ++i)
        simd::axpy(tmpl[static_cast<std::size_t>(i)], d_map.data(), d_features.channel(i), features.plane());
}

template <class T>
Collation<T> collate_correlations(std::span<const FeatureMap<T>> maps, std::span<const int> class_ids,
                                  int num_classes) {
    if (maps.size() != class_ids.size()) throw Error("model", "collate: maps and class ids differ in length");
    Collation<T> c;
    const int h = maps.empty() ? 0 : maps.front().h;
    const int w = maps.empty() ? 0 : maps.front().w;
    c.output = FeatureMap<T>(num_classes, h, w);
    const std::size_t hw = c.output.plane();
    c.source.assign(static_cast<std::size_t>(num_classes) * hw, -1);
    for (std::size_t k = 0; k < maps.size(); ++k) {
        const int cls = class_ids[k];
        if (cls < 0 || cls >= num_classes) throw Error("model", "collate: class id out of range");
        if (maps[k].h != h || maps[k].w != w || maps[k].c != 1) throw Error("model", "collate: map shape mismatch");
        T* dst = c.output.channel(cls);
        int* src_idx = c.source.data() + static_cast<std::size_t>(cls) * hw;
        const T* m = maps[k].data();
        for (std::size_t p = 0; p < hw; ++p) {
            if (src_idx[p] < 0 || m[p] > dst[p]) {
                dst[p] = m[p];
                src_idx[p] = static_cast<int>(k);
            }
        }
    }
    return c;
}

template <class T>
std::vector<FeatureMap<T>> collate_correlations_backward(const FeatureMap<T>& d_output, const Collation<T>& c,
                                                         std::size_t num_maps) {
    std::vector<FeatureMap<T>> d(num_maps, FeatureMap<T>(1, d_output.h, d_output.w));
    const std::size_t hw = d_output.plane();
    for (int cls = 0; cls < d_output.c; ++cls) {
        const T* g = d_output.channel(cls);
        const int* src = c.source.data() + static_cast<std::size_t>(cls) * hw;
        for (std::size_t p = 0; p < hw; ++p)
            if (src[p] >= 0) d[static_cast<std::size_t>(src[p])].v[p] += g[p];
    }
    return d;
}

std::vector<C3Input> prepare_c3_inputs(std::span<const UserInput> inputs, double sigma, int image_height,
                                       int image_width, int feature_height, int feature_width) {
    std::vector<C3Input> out;
    out.reserve(inputs.size());
    for (const auto& u : inputs) {
        const Heatmap full = render_gaussian(u.x, u.y, sigma, image_height, image_width);
        out.push_back({resize_normalize(full, feature_height, feature_width), u.class_id});
    }
    return out;
}

template <class T>
FeatureMap<T> C3Module<T>::forward(const FeatureMap<T>& features, std::span<const C3Input> inputs, int num_classes) {
    features_ = &features;
    branches_.clear();
    const std::size_t hw = features.plane();
    auto to_weights = [&](const Heatmap& h) {
        if (static_cast<std::size_t>(h.width) * h.height != hw || h.width != features.w)
            throw Error("model", "C3 weight map does not match feature resolution");
        return std::vector<T>(h.values.begin(), h.values.end());
    };

    if (order_ == CorrelationOrder::CorrelateThenCollate) {
        for (const auto& in : inputs) branches_.push_back({to_weights(in.weights), {}, in.class_id});
    } else {
        // class-wise max of the normalised maps, renormalised to sum 1
        for (int cls = 0; cls < num_classes; ++cls) {
            std::vector<T> merged;
            for (const auto& in : inputs) {
                if (in.class_id != cls) continue;
                auto w = to_weights(in.weights);
                if (merged.empty()) {
                    merged = std::move(w);
                } else {
                    for (std::size_t p = 0; p < hw; ++p) merged[p] = std::max(merged[p], w[p]);
                }
            }
            if (merged.empty()) continue;
            T total = T(0);
            for (T v : merged) total += v;
            for (T& v : merged) v /= total;
            branches_.push_back({std::move(merged), {}, cls});
        }
    }

    std::vector<FeatureMap<T>> maps;
    std::vector<int> classes;
    for (auto& b : branches_) {
        b.tmpl = extract_template<T>(features, b.weights);
        maps.push_back(correlate<T>(b.tmpl, features));
        classes.push_back(b.class_id);
    }
    if (maps.empty()) {
        collation_.output = FeatureMap<T>(num_classes, features.h, features.w);
        collation_.source.assign(collation_.output.size(), -1);
    } else {
        collation_ = collate_correlations<T>(maps, classes, num_classes);
    }
    return collation_.output;
}

template <class T>
void C3Module<T>::backward(const FeatureMap<T>& d_output, FeatureMap<T>& d_features) const {
    if (branches_.empty()) return;
    const auto d_maps = collate_correlations_backward<T>(d_output, collation_, branches_.size());
    std::vector<T> d_tmpl;
    for (std::size_t k = 0; k < branches_.size(); ++k) {
        correlate_backward<T>(d_maps[k], branches_[k].tmpl, *features_, d_tmpl, d_features);
        extract_template_backward<T>(d_tmpl, branches_[k].weights, d_features);
    }
}

#define C3DET_INSTANTIATE(T)                                                                                     \
    template std::vector<T> extract_template<T>(const FeatureMap<T>&, std::span<const T>);                       \
    template void extract_template_backward<T>(std::span<const T>, std::span<const T>, FeatureMap<T>&);          \
    template FeatureMap<T> correlate<T>(std::span<const T>, const FeatureMap<T>&);                               \
    template void correlate_backward<T>(const FeatureMap<T>&, std::span<const T>, const FeatureMap<T>&,          \
                                        std::vector<T>&, FeatureMap<T>&);                                        \
    template Collation<T> collate_correlations<T>(std::span<const FeatureMap<T>>, std::span<const int>, int);    \
    template std::vector<FeatureMap<T>> collate_correlations_backward<T>(const FeatureMap<T>&, const Collation<T>&, \
                                                                         std::size_t);                           \
    template class C3Module<T>;

C3DET_INSTANTIATE(float)
C3DET_INSTANTIATE(double)

#undef C3DET_INSTANTIATE

}  // namespace c3det
