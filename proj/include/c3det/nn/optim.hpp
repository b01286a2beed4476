#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "c3det/nn/tensor.hpp"

namespace c3det::nn {

enum class OptimizerKind { Sgd, Adam };

OptimizerKind parse_optimizer(const std::string& s);
const char* optimizer_name(OptimizerKind k) noexcept;

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double momentum = 0.9;  // sgd
    double beta1 = 0.9;     // adam
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double grad_clip = 10.0;  // global L2 norm; <= 0 disables
};

/// Momentum SGD or Adam over a fixed parameter list. Gradients are consumed
/// and zeroed by step().
class Optimizer {
public:
    Optimizer(std::vector<Param<float>*> params, OptimizerConfig cfg);

    /// Returns the pre-clip global gradient norm.
    double step(double lr, double grad_scale = 1.0);
    void zero_grad();
    long long steps() const noexcept { return t_; }

private:
    std::vector<Param<float>*> params_;
    OptimizerConfig cfg_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    long long t_ = 0;
};

}  // namespace c3det::nn
