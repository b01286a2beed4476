#include "c3det/model/network.hpp"

#include <bit>

namespace c3det {

template <class T>
FeatureExtractor<T>::FeatureExtractor(std::string name, int in_channels, int out_channels, int stride, bool standardize)
    : name_(std::move(name)), standardize_(standardize) {
    const int downsamples = std::countr_zero(static_cast<unsigned>(stride));
    int cin = in_channels;
    for (int b = 0; b < 4; ++b) {
        const int cout = b == 0 ? out_channels / 2 : out_channels;
        convs_.emplace_back(name_ + ".conv" + std::to_string(b + 1), cin, cout, 3, b < downsamples ? 2 : 1);
        cin = cout;
    }
    relus_.resize(4);
    if (standardize_) norm_ = nn::ChannelNorm<T>(name_ + ".norm", out_channels);
}

template <class T>
void FeatureExtractor<T>::init(std::uint64_t seed) {
    for (auto& c : convs_) {
        RandomSource rng(seed, "init/" + c.weight().name);
        c.init(rng);
    }
}

template <class T>
nn::Tensor<T> FeatureExtractor<T>::forward(const nn::Tensor<T>& x) {
    nn::Tensor<T> h = x;
    for (std::size_t b = 0; b < convs_.size(); ++b) {
        h = convs_[b].forward(h);
        const bool last = b + 1 == convs_.size();
        h = (last && standardize_) ? norm_.forward(h) : relus_[b].forward(h);
    }
    return h;
}

template <class T>
nn::Tensor<T> FeatureExtractor<T>::backward(const nn::Tensor<T>& dy, bool need_input_grad) {
    nn::Tensor<T> g = dy;
    for (std::size_t b = convs_.size(); b-- > 0;) {
        const bool last = b + 1 == convs_.size();
        g = (last && standardize_) ? norm_.backward(g) : relus_[b].backward(g);
        g = convs_[b].backward(g, b > 0 || need_input_grad);
    }
    return g;
}

template <class T>
std::vector<nn::Param<T>*> FeatureExtractor<T>::params() {
    std::vector<nn::Param<T>*> p;
    for (auto& c : convs_)
        for (auto* q : c.params()) p.push_back(q);
    if (standardize_)
        for (auto* q : norm_.params()) p.push_back(q);
    return p;
}

template <class T>
Fusion<T>::Fusion(int backbone_channels, int lf_channels, int num_classes, int out_channels)
    : bc_(backbone_channels),
      lc_(lf_channels),
      nc_(num_classes),
      proj_("fuse.proj", backbone_channels + lf_channels + num_classes, out_channels, 1, 1) {}

template <class T>
void Fusion<T>::init(std::uint64_t seed) {
    RandomSource rng(seed, "init/fuse.proj");
    proj_.init(rng);
}

template <class T>
nn::Tensor<T> Fusion<T>::forward(const nn::Tensor<T>& f_i, const nn::Tensor<T>& f_lf, const nn::Tensor<T>& f_c3) {
    if (f_i.h != f_lf.h || f_i.w != f_lf.w || f_i.h != f_c3.h || f_i.w != f_c3.w)
        throw Error("model", "fuse: spatial dimensions differ");
    if (f_i.c != bc_ || f_lf.c != lc_ || f_c3.c != nc_) throw Error("model", "fuse: channel counts differ from config");
    const nn::Tensor<T>* parts[] = {&f_i, &f_lf, &f_c3};
    return relu_.forward(proj_.forward(nn::concat_channels<T>(parts)));
}

template <class T>
typename Fusion<T>::Grads Fusion<T>::backward(const nn::Tensor<T>& dy) {
    const nn::Tensor<T> dcat = proj_.backward(relu_.backward(dy), true);
    Grads g{nn::Tensor<T>(bc_, dy.h, dy.w), nn::Tensor<T>(lc_, dy.h, dy.w), nn::Tensor<T>(nc_, dy.h, dy.w)};
    const auto n_i = g.f_i.size(), n_lf = g.f_lf.size();
    std::copy_n(dcat.v.begin(), n_i, g.f_i.v.begin());
    std::copy_n(dcat.v.begin() + static_cast<std::ptrdiff_t>(n_i), n_lf, g.f_lf.v.begin());
    std::copy_n(dcat.v.begin() + static_cast<std::ptrdiff_t>(n_i + n_lf), g.f_c3.size(), g.f_c3.v.begin());
    return g;
}

template <class T>
nn::Tensor<T> image_tensor(const Image& img) {
    nn::Tensor<T> t(3, img.height, img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) t.v[i] = static_cast<T>((img.data[i] - 0.5) / 0.25);
    return t;
}

template <class T>
nn::Tensor<T> stack_tensor(const ClassHeatmapStack& stack) {
    const auto& first = stack.maps.front();
    nn::Tensor<T> t(stack.num_classes(), first.height, first.width);
    for (int c = 0; c < stack.num_classes(); ++c) {
        const auto& m = stack.maps[static_cast<std::size_t>(c)].values;
        std::copy(m.begin(), m.end(), t.channel(c));
    }
    return t;
}

template <class T>
C3Det<T>::C3Det(ModelConfig cfg, int num_classes, std::uint64_t seed)
    : cfg_(cfg),
      num_classes_(num_classes),
      backbone_("backbone", cfg.uses_early_fusion() ? 3 + num_classes : 3, cfg.backbone_channels, cfg.stride, true),
      lf_("lf", num_classes, cfg.lf_channels, cfg.stride, false),
      c3_(cfg.correlation_order()),
      fusion_(cfg.backbone_channels, cfg.lf_channels, num_classes, cfg.fusion_proj_channels),
      head_(cfg.fusion_proj_channels, cfg.head_channels, num_classes, cfg.stride) {
    cfg_.validate();
    if (num_classes <= 0) throw Error("model", "num_classes must be positive");
    backbone_.init(seed);
    lf_.init(seed);
    fusion_.init(seed);
    head_.init(seed);
}

template <class T>
nn::Tensor<T> C3Det<T>::lf_forward(const ClassHeatmapStack& stack) {
    return lf_.forward(stack_tensor<T>(stack));
}

template <class T>
HeadOutput<T> C3Det<T>::forward(const Image& image, std::span<const UserInput> inputs) {
    for (const auto& u : inputs)
        if (u.class_id < 0 || u.class_id >= num_classes_) throw Error("model", "user input class id out of range");
    const int h = image.height, w = image.width;
    nn::Tensor<T> x = image_tensor<T>(image);
    if (cfg_.uses_early_fusion()) {
        const auto stack = render_class_stack(inputs, num_classes_, cfg_.sigma_early, h, w);
        const nn::Tensor<T> hm = stack_tensor<T>(stack);
        const nn::Tensor<T>* parts[] = {&x, &hm};
        x = nn::concat_channels<T>(parts);
    }
    f_i_ = backbone_.forward(x);
    const int fh = f_i_.h, fw = f_i_.w;

    if (cfg_.uses_lf()) {
        f_lf_ = lf_forward(render_class_stack(inputs, num_classes_, cfg_.sigma_lf, h, w));
    } else {
        f_lf_ = nn::Tensor<T>(cfg_.lf_channels, fh, fw);
    }
    if (cfg_.uses_c3()) {
        const auto c3_inputs = prepare_c3_inputs(inputs, cfg_.sigma_c3, h, w, fh, fw);
        f_c3_ = c3_.forward(f_i_, c3_inputs, num_classes_);
    } else {
        f_c3_ = nn::Tensor<T>(num_classes_, fh, fw);
    }
    return head_.forward(fusion_.forward(f_i_, f_lf_, f_c3_));
}

template <class T>
void C3Det<T>::backward(const nn::Tensor<T>& d_head) {
    auto g = fusion_.backward(head_.backward(d_head));
    if (cfg_.uses_c3()) c3_.backward(g.f_c3, g.f_i);
    if (cfg_.uses_lf()) lf_.backward(g.f_lf, false);
    backbone_.backward(g.f_i, false);
}

template <class T>
std::vector<nn::Param<T>*> C3Det<T>::params() {
    std::vector<nn::Param<T>*> p = backbone_.params();
    for (auto* q : lf_.params()) p.push_back(q);
    for (auto* q : fusion_.params()) p.push_back(q);
    for (auto* q : head_.params()) p.push_back(q);
    return p;
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;
template class Fusion<float>;
template class Fusion<double>;
template class C3Det<float>;
template class C3Det<double>;
template nn::Tensor<float> image_tensor<float>(const Image&);
template nn::Tensor<double> image_tensor<double>(const Image&);
template nn::Tensor<float> stack_tensor<float>(const ClassHeatmapStack&);
template nn::Tensor<double> stack_tensor<double>(const ClassHeatmapStack&);

}  // namespace c3det
