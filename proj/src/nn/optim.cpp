#include "c3det/nn/optim.hpp"

#include <stdexcept>

namespace c3det::nn {

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw std::invalid_argument("unknown optimizer '" + s + "'");
}

const char* optimizer_name(OptimizerKind k) noexcept { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

Optimizer::Optimizer(std::vector<Param<float>*> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
        m_.emplace_back(p->size(), 0.0f);
        v_.emplace_back(cfg_.kind == OptimizerKind::Adam ? p->size() : 0, 0.0f);
    }
}

void Optimizer::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

double Optimizer::step(double lr, double grad_scale) {
    ++t_;
    double sq = 0.0;
    for (auto* p : params_)
        for (float g : p->grad) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq) * grad_scale;
    double scale = grad_scale;
    if (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) scale *= cfg_.grad_clip / norm;

    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = *params_[pi];
        auto& m = m_[pi];
        // biases and norm affines are not decayed
        const bool decay = p.shape.size() > 1;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double g = p.grad[i] * scale;
            if (decay) g += cfg_.weight_decay * p.value[i];
            if (cfg_.kind == OptimizerKind::Sgd) {
                m[i] = static_cast<float>(cfg_.momentum * m[i] + g);
                p.value[i] -= static_cast<float>(lr * m[i]);
            } else {
                auto& v = v_[pi];
                m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g);
                v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g);
                const double mh = m[i] / bc1;
                const double vh = v[i] / bc2;
                p.value[i] -= static_cast<float>(lr * mh / (std::sqrt(vh) + cfg_.eps));
            }
        }
        p.zero_grad();
    }
    return norm;
}

}  // namespace c3det::nn
