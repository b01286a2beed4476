#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace c3det {

enum class Variant {
    Full,                  // LF + C3 + UEL
    LfOnly,                // LF + UEL
    C3Only,                // C3 + UEL
    NoUel,                 // LF + C3
    CollateThenCorrelate,  // LF + C3 (collate first) + UEL
    EarlyFusion,           // heatmaps concatenated to the image
    LateFusionBaseline,    // LF only
    DetectorOnly,          // no user inputs
};

const char* variant_name(Variant v) noexcept;
Variant parse_variant(const std::string& s);
std::vector<Variant> all_variants();

enum class CorrelationOrder { CorrelateThenCollate, CollateThenCorrelate };

enum class ClassLoss { CrossEntropy, Focal };

struct ModelConfig {
    int backbone_channels = 64;
    int stride = 4;
    int lf_channels = 64;
    int fusion_proj_channels = 64;
    int head_channels = 64;
    Variant variant = Variant::Full;
    double lambda_uel = 1.0;
    double sigma_lf = 1.0;
    double sigma_c3 = 1.0;
    double sigma_early = 9.0;
    ClassLoss uel_loss = ClassLoss::CrossEntropy;
    double uel_score_floor = 0.01;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    double score_threshold = 0.05;
    double nms_iou = 0.5;
    int top_n = 300;

    bool uses_lf() const noexcept;
    bool uses_c3() const noexcept;
    bool uses_early_fusion() const noexcept;
    bool uses_inputs() const noexcept { return uses_lf() || uses_c3() || uses_early_fusion(); }
    double effective_lambda_uel() const noexcept;
    CorrelationOrder correlation_order() const noexcept;

    void validate() const;

    /// Named profiles: "default", "desk" (small widths and lambda_uel 0.1 for CPU training) and
    /// "paper-profile" (256-channel widths; documented, not used by tests).
    static ModelConfig profile(const std::string& name);
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

}  // namespace c3det
