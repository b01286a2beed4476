#include "c3det/model/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "c3det/metrics.hpp"

namespace c3det {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

template <class T>
std::vector<double> softmax(std::span<const T> logits) {
    double mx = logits[0];
    for (T l : logits) mx = std::max(mx, static_cast<double>(l));
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(static_cast<double>(logits[i]) - mx));
    for (double& v : p) v /= z;
    return p;
}

}  // namespace

double sigmoid_focal(double logit, bool positive, double alpha, double gamma, double* grad) {
    const double p = 1.0 / (1.0 + std::exp(-logit));
    if (positive) {
        const double log_p = -softplus(-logit);
        const double q = 1.0 - p;
        const double loss = -alpha * std::pow(q, gamma) * log_p;
        if (grad) *grad += alpha * (gamma * std::pow(q, gamma) * p * log_p - std::pow(q, gamma + 1.0));
        return loss;
    }
    const double log_q = -softplus(logit);
    const double loss = -(1.0 - alpha) * std::pow(p, gamma) * log_q;
    if (grad) *grad += -(1.0 - alpha) * (gamma * std::pow(p, gamma) * (1.0 - p) * log_q - std::pow(p, gamma + 1.0));
    return loss;
}

template <class T>
double class_loss(std::span<const T> logits, int target, ClassLoss loss, double focal_gamma, T* grad) {
    const auto p = softmax(logits);
    const auto t = static_cast<std::size_t>(target);
    const double q = std::max(p[t], 1e-300);
    if (loss == ClassLoss::CrossEntropy) {
        if (grad)
            for (std::size_t i = 0; i < p.size(); ++i) grad[i] += static_cast<T>(p[i] - (i == t ? 1.0 : 0.0));
        double mx = logits[0];
        for (T l : logits) mx = std::max(mx, static_cast<double>(l));
        double z = 0.0;
        for (T l : logits) z += std::exp(static_cast<double>(l) - mx);
        return -(static_cast<double>(logits[t]) - mx - std::log(z));
    }
    const double log_q = std::log(q);
    const double w = std::pow(1.0 - q, focal_gamma);
    if (grad) {
        const double dl_dq = focal_gamma * std::pow(1.0 - q, focal_gamma - 1.0) * log_q - w / q;
        for (std::size_t i = 0; i < p.size(); ++i)
            grad[i] += static_cast<T>(dl_dq * q * ((i == t ? 1.0 : 0.0) - p[i]));
    }
    return -w * log_q;
}

template <class T>
UelResult<T> uel_loss(std::span<const UelCandidate<T>> candidates, std::span<const UserInput> inputs,
                      const LabeledImage& gt, ClassLoss loss, double focal_gamma) {
    UelResult<T> r;
    r.d_logits.resize(candidates.size());
    for (std::size_t j = 0; j < candidates.size(); ++j) r.d_logits[j].assign(candidates[j].logits.size(), T(0));
    for (const auto& u : inputs) {
        if (!u.has_gt() || u.gt_index >= gt.num_objects())
            throw Error("model", "user input has no recorded ground-truth association");
        const Box& target = gt.objects[static_cast<std::size_t>(u.gt_index)].box;
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            if (!(iou(candidates[j].box, target) > 0.0)) continue;
            r.value += class_loss<T>(candidates[j].logits, u.class_id, loss, focal_gamma, r.d_logits[j].data());
            ++r.pairs;
        }
    }
    return r;
}

template <class T>
std::vector<UelCandidate<T>> pre_nms_candidates(const HeadOutput<T>& h, double score_floor, int image_width,
                                                int image_height) {
    std::vector<UelCandidate<T>> out;
    for (int y = 0; y < h.grid_h(); ++y) {
        for (int x = 0; x < h.grid_w(); ++x) {
            if (!(cell_score(h, y, x) >= score_floor)) continue;
            const Box b = decode_cell_box(h, y, x, image_width, image_height);
            if (!b.valid()) continue;
            UelCandidate<T> c;
            c.box = b;
            c.cell_y = y;
            c.cell_x = x;
            c.logits.resize(static_cast<std::size_t>(h.num_classes));
            for (int k = 0; k < h.num_classes; ++k) c.logits[static_cast<std::size_t>(k)] = h.class_logit(k, y, x);
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::vector<int> assign_targets(const LabeledImage& gt, int grid_h, int grid_w, int stride) {
    std::vector<int> owner(static_cast<std::size_t>(grid_h) * grid_w, -1);
    std::vector<double> dist(owner.size(), 0.0);
    for (int i = 0; i < gt.num_objects(); ++i) {
        const Box& b = gt.objects[static_cast<std::size_t>(i)].box;
        const int gx = std::clamp(static_cast<int>(std::floor(b.center_x() / stride)), 0, grid_w - 1);
        const int gy = std::clamp(static_cast<int>(std::floor(b.center_y() / stride)), 0, grid_h - 1);
        const double dx = b.center_x() - (gx + 0.5) * stride;
        const double dy = b.center_y() - (gy + 0.5) * stride;
        const double d = dx * dx + dy * dy;
        const auto cell = static_cast<std::size_t>(gy) * grid_w + gx;
        if (owner[cell] < 0 || d < dist[cell]) {
            owner[cell] = i;
            dist[cell] = d;
        }
    }
    return owner;
}

template <class T>
LossResult<T> total_loss(const HeadOutput<T>& head, const LabeledImage& gt, std::span<const UserInput> inputs,
                         const ModelConfig& cfg) {
    const int gh = head.grid_h();
    const int gw = head.grid_w();
    const int nc = head.num_classes;
    const double s = head.stride;
    LossResult<T> r;
    r.grad = nn::Tensor<T>(head.t.c, gh, gw);

    const auto owner = assign_targets(gt, gh, gw, head.stride);
    int npos = 0;
    for (int o : owner) npos += o >= 0 ? 1 : 0;
    const double norm = 1.0 / std::max(1, npos);
    r.parts.num_positive = npos;

    double obj_loss = 0.0, cls_loss = 0.0, box_loss = 0.0;
    std::vector<T> logits(static_cast<std::size_t>(nc));
    std::vector<T> dlog(static_cast<std::size_t>(nc));
    for (int y = 0; y < gh; ++y) {
        for (int x = 0; x < gw; ++x) {
            const int o = owner[static_cast<std::size_t>(y) * gw + x];
            double g = 0.0;
            obj_loss += sigmoid_focal(head.objectness(y, x), o >= 0, cfg.focal_alpha, cfg.focal_gamma, &g);
            r.grad.at(0, y, x) += static_cast<T>(g * norm);
            if (o < 0) continue;
            const auto& obj = gt.objects[static_cast<std::size_t>(o)];
            for (int c = 0; c < nc; ++c) logits[static_cast<std::size_t>(c)] = head.class_logit(c, y, x);
            std::fill(dlog.begin(), dlog.end(), T(0));
            cls_loss += class_loss<T>(logits, obj.class_id, ClassLoss::CrossEntropy, cfg.focal_gamma, dlog.data());
            for (int c = 0; c < nc; ++c) r.grad.at(1 + c, y, x) += static_cast<T>(dlog[static_cast<std::size_t>(c)] * norm);
            const double target[4] = {(obj.box.center_x() - (x + 0.5) * s) / s, (obj.box.center_y() - (y + 0.5) * s) / s,
                                      std::log(obj.box.width() / s), std::log(obj.box.height() / s)};
            for (int d = 0; d < 4; ++d) {
                const double diff = static_cast<double>(head.delta(d, y, x)) - target[d];
                box_loss += std::abs(diff);
                const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
                r.grad.at(1 + nc + d, y, x) += static_cast<T>(sgn * norm);
            }
        }
    }

    double uel = 0.0;
    const double lambda = cfg.effective_lambda_uel();
    if (lambda > 0.0 && !inputs.empty()) {
        const auto cand = pre_nms_candidates(head, cfg.uel_score_floor, gt.pixels.width, gt.pixels.height);
        const auto u = uel_loss<T>(cand, inputs, gt, cfg.uel_loss, cfg.focal_gamma);
        uel = lambda * u.value * norm;
        r.parts.uel_pairs = u.pairs;
        for (std::size_t j = 0; j < cand.size(); ++j)
            for (int c = 0; c < nc; ++c)
                r.grad.at(1 + c, cand[j].cell_y, cand[j].cell_x) +=
                    static_cast<T>(lambda * norm * u.d_logits[j][static_cast<std::size_t>(c)]);
    }

    r.parts.cls = (obj_loss + cls_loss) * norm;
    r.parts.box = box_loss * norm;
    r.parts.uel = uel;
    r.parts.total = r.parts.cls + r.parts.box + r.parts.uel;
    const std::pair<const char*, double> terms[] = {{"cls", r.parts.cls}, {"box", r.parts.box}, {"uel", r.parts.uel}};
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v))
            throw Error("model", std::string("non-finite loss term '") + name + "' on image '" + gt.image_id + "'");
    }
    return r;
}

#define C3DET_INSTANTIATE(T)                                                                                       \
    template UelResult<T> uel_loss<T>(std::span<const UelCandidate<T>>, std::span<const UserInput>,                \
                                      const LabeledImage&, ClassLoss, double);                                     \
    template std::vector<UelCandidate<T>> pre_nms_candidates<T>(const HeadOutput<T>&, double, int, int);           \
    template double class_loss<T>(std::span<const T>, int, ClassLoss, double, T*);                                 \
    template LossResult<T> total_loss<T>(const HeadOutput<T>&, const LabeledImage&, std::span<const UserInput>,    \
                                         const ModelConfig&);

C3DET_INSTANTIATE(float)
C3DET_INSTANTIATE(double)

#undef C3DET_INSTANTIATE

}  // namespace c3det
