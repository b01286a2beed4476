#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "c3det/core/types.hpp"
#include "c3det/model/config.hpp"
#include "c3det/model/network.hpp"

namespace c3det {

/// Float network plus the class catalogue it was trained on.
class Detector {
public:
    Detector(ModelConfig cfg, ClassCatalog catalog, std::uint64_t seed = 0);

    const ModelConfig& config() const noexcept { return net_.config(); }
    const ClassCatalog& catalog() const noexcept { return catalog_; }
    C3Det<float>& network() noexcept { return net_; }

    /// Post-NMS detections for an image and the user inputs on it.
    std::vector<Detection> detect(const Image& image, std::span<const UserInput> inputs);

    /// Single-file checkpoint: magic, format version, JSON header (model
    /// config, classes, tensor index, free-form metadata), float32 data.
    void save(const std::filesystem::path& path, const nlohmann::json& metadata = nlohmann::json::object());
    static Detector load(const std::filesystem::path& path);
    /// Rejects a checkpoint whose class list differs from `expected`.
    static Detector load(const std::filesystem::path& path, const ClassCatalog& expected);

    const nlohmann::json& metadata() const noexcept { return metadata_; }

private:
    ClassCatalog catalog_;
    C3Det<float> net_;
    nlohmann::json metadata_ = nlohmann::json::object();
};

/// Header of a checkpoint without loading tensors.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace c3det
