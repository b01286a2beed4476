#include "c3det/model/config.hpp"

#include "c3det/core/types.hpp"

namespace c3det {

namespace {

struct VariantName {
    Variant v;
    const char* name;
};

constexpr VariantName kVariants[] = {
    {Variant::Full, "full"},
    {Variant::LfOnly, "lf_only"},
    {Variant::C3Only, "c3_only"},
    {Variant::NoUel, "no_uel"},
    {Variant::CollateThenCorrelate, "collate_then_correlate"},
    {Variant::EarlyFusion, "early_fusion"},
    {Variant::LateFusionBaseline, "late_fusion_baseline"},
    {Variant::DetectorOnly, "detector_only"},
};

}  // namespace

const char* variant_name(Variant v) noexcept {
    for (const auto& e : kVariants)
        if (e.v == v) return e.name;
    return "?";
}

Variant parse_variant(const std::string& s) {
    for (const auto& e : kVariants)
        if (s == e.name) return e.v;
    throw Error("model", "unknown variant '" + s + "'");
}

std::vector<Variant> all_variants() {
    std::vector<Variant> out;
    for (const auto& e : kVariants) out.push_back(e.v);
    return out;
}

bool ModelConfig::uses_lf() const noexcept {
    switch (variant) {
        case Variant::Full:
        case Variant::LfOnly:
        case Variant::NoUel:
        case Variant::CollateThenCorrelate:
        case Variant::LateFusionBaseline: return true;
        default: return false;
    }
}

bool ModelConfig::uses_c3() const noexcept {
    switch (variant) {
        case Variant::Full:
        case Variant::C3Only:
        case Variant::NoUel:
        case Variant::CollateThenCorrelate: return true;
        default: return false;
    }
}

bool ModelConfig::uses_early_fusion() const noexcept { return variant == Variant::EarlyFusion; }

double ModelConfig::effective_lambda_uel() const noexcept {
    switch (variant) {
        case Variant::Full:
        case Variant::LfOnly:
        case Variant::C3Only:
        case Variant::CollateThenCorrelate: return lambda_uel;
        default: return 0.0;
    }
}

CorrelationOrder ModelConfig::correlation_order() const noexcept {
    return variant == Variant::CollateThenCorrelate ? CorrelationOrder::CollateThenCorrelate
                                                    : CorrelationOrder::CorrelateThenCollate;
}

void ModelConfig::validate() const {
    if (backbone_channels <= 0 || lf_channels <= 0 || fusion_proj_channels <= 0 || head_channels <= 0)
        throw Error("model", "channel counts must be positive");
    if (backbone_channels % 4 != 0 || lf_channels % 4 != 0)
        throw Error("model", "backbone/lf channels must be multiples of 4");
    if (stride != 2 && stride != 4 && stride != 8) throw Error("model", "stride must be 2, 4 or 8");
    if (!(sigma_lf > 0 && sigma_c3 > 0 && sigma_early > 0)) throw Error("model", "sigmas must be positive");
    if (lambda_uel < 0) throw Error("model", "lambda_uel must be non-negative");
    if (top_n <= 0) throw Error("model", "top_n must be positive");
}

ModelConfig ModelConfig::profile(const std::string& name) {
    ModelConfig c;
    if (name == "default") return c;
    if (name == "desk") {
        c.backbone_channels = 32;
        c.lf_channels = 16;
        c.fusion_proj_channels = 32;
        c.head_channels = 32;
        c.lambda_uel = 0.1;
        return c;
    }
    if (name == "paper-profile") {
        c.backbone_channels = 256;
        c.lf_channels = 256;
        c.fusion_proj_channels = 256;
        c.head_channels = 256;
        c.uel_loss = ClassLoss::Focal;
        return c;
    }
    throw Error("model", "unknown model profile '" + name + "'");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {
        {"backbone_channels", c.backbone_channels},
        {"stride", c.stride},
        {"lf_channels", c.lf_channels},
        {"fusion_proj_channels", c.fusion_proj_channels},
        {"head_channels", c.head_channels},
        {"variant", variant_name(c.variant)},
        {"lambda_uel", c.lambda_uel},
        {"sigma_lf", c.sigma_lf},
        {"sigma_c3", c.sigma_c3},
        {"sigma_early", c.sigma_early},
        {"uel_loss", c.uel_loss == ClassLoss::Focal ? "focal" : "cross_entropy"},
        {"uel_score_floor", c.uel_score_floor},
        {"focal_alpha", c.focal_alpha},
        {"focal_gamma", c.focal_gamma},
        {"score_threshold", c.score_threshold},
        {"nms_iou", c.nms_iou},
        {"top_n", c.top_n},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
    if (j.contains("profile")) c = ModelConfig::profile(j.at("profile").get<std::string>());
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("backbone_channels", c.backbone_channels);
    get("stride", c.stride);
    get("lf_channels", c.lf_channels);
    get("fusion_proj_channels", c.fusion_proj_channels);
    get("head_channels", c.head_channels);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    get("lambda_uel", c.lambda_uel);
    get("sigma_lf", c.sigma_lf);
    get("sigma_c3", c.sigma_c3);
    get("sigma_early", c.sigma_early);
    if (j.contains("uel_loss")) {
        const auto s = j.at("uel_loss").get<std::string>();
        if (s == "focal") c.uel_loss = ClassLoss::Focal;
        else if (s == "cross_entropy") c.uel_loss = ClassLoss::CrossEntropy;
        else throw Error("model", "unknown uel_loss '" + s + "'");
    }
    get("uel_score_floor", c.uel_score_floor);
    get("focal_alpha", c.focal_alpha);
    get("focal_gamma", c.focal_gamma);
    get("score_threshold", c.score_threshold);
    get("nms_iou", c.nms_iou);
    get("top_n", c.top_n);
    c.validate();
    return c;
}

}  // namespace c3det
