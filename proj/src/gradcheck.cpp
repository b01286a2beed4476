#include "c3det/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "c3det/core/random.hpp"
#include "c3det/model/c3.hpp"
#include "c3det/model/losses.hpp"
#include "c3det/model/network.hpp"

namespace c3det {

namespace {

using Map = nn::Tensor<double>;

Map random_map(RandomSource& rng, int c, int h, int w) {
    Map m(c, h, w);
    for (double& v : m.v) v = rng.normal();
    return m;
}

std::vector<double> random_vec(RandomSource& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

std::vector<double> random_weights(RandomSource& rng, std::size_t n) {
    std::vector<double> v(n);
    double s = 0.0;
    for (double& x : v) s += (x = rng.uniform(0.05, 1.0));
    for (double& x : v) x /= s;
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double*> coords_of(std::vector<double>& v) {
    std::vector<double*> p;
    for (double& x : v) p.push_back(&x);
    return p;
}

LabeledImage random_scene(RandomSource& rng, int size, int num_classes, int objects) {
    LabeledImage img;
    img.image_id = "gradcheck";
    img.pixels = Image(size, size);
    for (float& v : img.pixels.data) v = static_cast<float>(rng.uniform());
    for (int i = 0; i < objects; ++i) {
        const double w = rng.uniform(3.0, 7.0), h = rng.uniform(3.0, 7.0);
        const double x = rng.uniform(0.0, size - w), y = rng.uniform(0.0, size - h);
        img.objects.push_back({{x, y, x + w, y + h}, static_cast<int>(rng.uniform_int(0, num_classes - 1))});
    }
    return img;
}

std::vector<UserInput> clicks_on(const LabeledImage& img, int k) {
    std::vector<UserInput> u;
    for (int i = 0; i < k && i < img.num_objects(); ++i) {
        const auto& o = img.objects[static_cast<std::size_t>(i)];
        u.push_back({o.box.center_x(), o.box.center_y(), o.class_id, i});
    }
    return u;
}

}  // namespace

GradCheckResult compare_gradients(std::string name, const std::function<double()>& loss,
                                  const std::vector<double*>& coords, const std::vector<double>& analytic,
                                  double eps, double tolerance, double floor) {
    GradCheckResult r;
    r.name = std::move(name);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        double* x = coords[i];
        const double orig = *x;
        *x = orig + eps;
        const double up = loss();
        *x = orig - eps;
        const double down = loss();
        *x = orig;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic[i] - numeric) / denom);
        ++r.checked;
    }
    r.passed = r.checked > 0 && r.max_rel_error < tolerance;
    return r;
}

std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed) {
    RandomSource rng(seed, "gradcheck");
    std::vector<GradCheckResult> out;

    {  // template extraction
        Map f = random_map(rng, 5, 6, 7);
        const auto u = random_weights(rng, f.plane());
        const auto r = random_vec(rng, 5);
        Map df(5, 6, 7);
        extract_template_backward<double>(r, u, df);
        out.push_back(compare_gradients(
            "extract_template", [&] { return dot(extract_template<double>(f, u), r); }, coords_of(f.v), df.v));
    }
    {  // correlation
        Map f = random_map(rng, 5, 6, 7);
        auto t = random_vec(rng, 5);
        const Map r = random_map(rng, 1, 6, 7);
        auto loss = [&] { return dot(correlate<double>(t, f).v, r.v); };
        std::vector<double> dt;
        Map df(5, 6, 7);
        correlate_backward<double>(r, t, f, dt, df);
        out.push_back(compare_gradients("correlate.features", loss, coords_of(f.v), df.v));
        out.push_back(compare_gradients("correlate.template", loss, coords_of(t), dt));
    }
    {  // class-wise collation (no ties for continuous random maps)
        std::vector<Map> maps;
        for (int k = 0; k < 4; ++k) maps.push_back(random_map(rng, 1, 5, 5));
        const std::vector<int> cls = {0, 2, 0, 2};
        const Map r = random_map(rng, 3, 5, 5);
        auto loss = [&] { return dot(collate_correlations<double>(maps, cls, 3).output.v, r.v); };
        const auto c = collate_correlations<double>(maps, cls, 3);
        const auto dm = collate_correlations_backward<double>(r, c, maps.size());
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (std::size_t k = 0; k < maps.size(); ++k) {
            for (double& v : maps[k].v) coords.push_back(&v);
            analytic.insert(analytic.end(), dm[k].v.begin(), dm[k].v.end());
        }
        out.push_back(compare_gradients("collate", loss, coords, analytic));
    }
    {  // whole C3 module, both orders
        for (auto order : {CorrelationOrder::CorrelateThenCollate, CorrelationOrder::CollateThenCorrelate}) {
            Map f = random_map(rng, 4, 8, 8);
            std::vector<C3Input> inputs;
            for (int k = 0; k < 3; ++k) {
                Heatmap h;
                h.width = h.height = 8;
                const auto w = random_weights(rng, 64);
                h.values.assign(w.begin(), w.end());
                inputs.push_back({h, k == 2 ? 0 : k});
            }
            const Map r = random_map(rng, 3, 8, 8);
            C3Module<double> m(order);
            auto loss = [&] { return dot(m.forward(f, inputs, 3).v, r.v); };
            loss();
            Map df(4, 8, 8);
            m.backward(r, df);
            const bool ctc = order == CorrelationOrder::CorrelateThenCollate;
            out.push_back(compare_gradients(ctc ? "c3.correlate_then_collate" : "c3.collate_then_correlate", loss,
                                            coords_of(f.v), df.v));
        }
    }
    {  // fusion
        Fusion<double> fuse(4, 3, 2, 5);
        fuse.init(seed);
        Map a = random_map(rng, 4, 4, 4), b = random_map(rng, 3, 4, 4), c = random_map(rng, 2, 4, 4);
        const Map r = random_map(rng, 5, 4, 4);
        auto loss = [&] { return dot(fuse.forward(a, b, c).v, r.v); };
        loss();
        auto g = fuse.backward(r);
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (auto* t : {&a, &b, &c})
            for (double& v : t->v) coords.push_back(&v);
        for (const auto* t : {&g.f_i, &g.f_lf, &g.f_c3}) analytic.insert(analytic.end(), t->v.begin(), t->v.end());
        for (auto* p : fuse.params()) {
            for (double& v : p->value) coords.push_back(&v);
            analytic.insert(analytic.end(), p->grad.begin(), p->grad.end());
        }
        out.push_back(compare_gradients("fuse", loss, coords, analytic));
    }
    {  // head losses and UEL through total_loss on the raw head tensor
        const int nc = 3;
        LabeledImage scene = random_scene(rng, 32, nc, 6);
        const auto inputs = clicks_on(scene, 3);
        ModelConfig cfg;
        HeadOutput<double> head;
        head.num_classes = nc;
        head.stride = 4;
        head.t = random_map(rng, HeadOutput<double>::channels(nc), 8, 8);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                head.t.at(0, y, x) = rng.uniform(-1.0, 2.0);
                for (int d = 0; d < 4; ++d) head.t.at(1 + nc + d, y, x) = rng.uniform(-0.3, 0.3) + (d >= 2 ? 0.3 : 0.0);
            }
        for (bool with_uel : {false, true}) {
            cfg.lambda_uel = with_uel ? 1.0 : 0.0;
            const std::span<const UserInput> in = with_uel ? std::span<const UserInput>(inputs) : std::span<const UserInput>{};
            auto loss = [&] { return total_loss<double>(head, scene, in, cfg).parts.total; };
            const auto lr = total_loss<double>(head, scene, in, cfg);
            out.push_back(compare_gradients(with_uel ? "head_losses+uel" : "head_losses", loss, coords_of(head.t.v),
                                            lr.grad.v));
        }
    }
    {  // UEL on explicit candidates
        LabeledImage scene = random_scene(rng, 32, 4, 5);
        const auto inputs = clicks_on(scene, 4);
        std::vector<UelCandidate<double>> cand;
        for (int j = 0; j < 12; ++j) {
            UelCandidate<double> c;
            const auto& o = scene.objects[static_cast<std::size_t>(j % scene.num_objects())].box;
            c.box = {o.x_min + rng.uniform(-1, 1), o.y_min + rng.uniform(-1, 1), o.x_max + rng.uniform(-1, 1),
                     o.y_max + rng.uniform(-1, 1)};
            c.logits = random_vec(rng, 4);
            cand.push_back(c);
        }
        for (auto kind : {ClassLoss::CrossEntropy, ClassLoss::Focal}) {
            auto loss = [&] { return uel_loss<double>(cand, inputs, scene, kind).value; };
            const auto r = uel_loss<double>(cand, inputs, scene, kind);
            std::vector<double*> coords;
            std::vector<double> analytic;
            for (std::size_t j = 0; j < cand.size(); ++j) {
                for (double& v : cand[j].logits) coords.push_back(&v);
                analytic.insert(analytic.end(), r.d_logits[j].begin(), r.d_logits[j].end());
            }
            out.push_back(compare_gradients(kind == ClassLoss::Focal ? "uel.focal" : "uel.ce", loss, coords, analytic));
        }
    }
    {  // end-to-end network parameters (subset of coordinates)
        ModelConfig cfg;
        cfg.backbone_channels = 4;
        cfg.lf_channels = 4;
        cfg.fusion_proj_channels = 4;
        cfg.head_channels = 4;
        const int nc = 3;
        C3Det<double> net(cfg, nc, seed);
        // zero biases put ReLU inputs exactly on the kink where the input is zero
        for (auto* p : net.params())
            if (p->name.ends_with(".bias"))
                for (double& v : p->value) v += rng.uniform(-0.2, 0.2);
        LabeledImage scene = random_scene(rng, 16, nc, 3);
        const auto inputs = clicks_on(scene, 2);
        auto loss = [&] { return total_loss<double>(net.forward(scene.pixels, inputs), scene, inputs, cfg).parts.total; };
        const auto head = net.forward(scene.pixels, inputs);
        const auto lr = total_loss<double>(head, scene, inputs, cfg);
        for (auto* p : net.params()) p->zero_grad();
        net.backward(lr.grad);
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (auto* p : net.params()) {
            const std::size_t n = p->size();
            for (std::size_t i = 0; i < n; i += std::max<std::size_t>(1, n / 6)) {
                coords.push_back(&p->value[i]);
                analytic.push_back(p->grad[i]);
            }
        }
        out.push_back(compare_gradients("network", loss, coords, analytic));
    }
    return out;
}

}  // namespace c3det
