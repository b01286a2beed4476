#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "c3det/core/random.hpp"
#include "c3det/core/types.hpp"

namespace c3det {

enum class SpriteShape { Disk, Square, Triangle, Cross, Ring, Diamond };

struct SpriteClass {
    std::string name;
    SpriteShape shape;
    float rgb[3];
};

/// The eight sprite classes. Classes 0/1 and 2/3 share a shape and have
/// near colours.
const std::vector<SpriteClass>& sprite_classes();
/// Pairs of confusable class ids.
std::vector<std::pair<int, int>> confusable_pairs();

struct GenConfig {
    int width = 256;
    int height = 256;
    int objects_min = 10;
    int objects_max = 60;
    int size_min = 6;
    int size_max = 16;
    double max_pair_iou = 0.3;
    int max_attempts = 10000;  // per object
    // Background clutter.
    double background_min = 0.30;
    double background_max = 0.55;
    double texture_amplitude = 0.08;
    int texture_cells = 16;
    double pixel_noise = 0.02;
    int clutter_specks = 40;
    // Swap the colours of each confusable pair with probability 1/2 per image,
    // so colour alone cannot separate the pair.
    bool swap_pair_colours = true;
    int train_count = 500;
    int val_count = 50;
    int test_count = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const GenConfig& c);
GenConfig gen_config_from_json(const nlohmann::json& j, GenConfig base = {});

/// Anti-aliased coverage of one sprite, in [0,1], over a `size_w` x `size_h`
/// local window whose top-left pixel is at (x0, y0) in image coordinates.
struct SpriteMask {
    int x0 = 0, y0 = 0, w = 0, h = 0;
    std::vector<float> coverage;
    /// Tight pixel extent of the non-zero coverage.
    Box bounds() const;
};
SpriteMask render_sprite(SpriteShape shape, double cx, double cy, double width, double height);

struct GeneratedImage {
    LabeledImage image;
    int placement_failures = 0;
    bool pair_swapped[2] = {false, false};
};

/// Deterministic function of (config, split, index).
GeneratedImage generate_image(const GenConfig& cfg, Split split, int index);

struct GenReport {
    int images = 0;
    int objects = 0;
    int placement_failures = 0;
};

/// Writes a full dataset (meta.json, every split, manifest.json) under `out_root`.
/// Returns per-split reports keyed by split name.
std::vector<std::pair<Split, GenReport>> generate(const GenConfig& cfg, const std::filesystem::path& out_root);

}  // namespace c3det
