#include "c3det/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "c3det/core/dataset.hpp"
#include "c3det/metrics.hpp"

namespace c3det {

namespace {

constexpr int kSuper = 4;

bool inside(SpriteShape s, double u, double v) {
    switch (s) {
        case SpriteShape::Disk: return u * u + v * v <= 1.0;
        case SpriteShape::Square: return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
        case SpriteShape::Triangle: return v >= -1.0 && v <= 1.0 && std::abs(u) <= 0.5 * (v + 1.0);
        case SpriteShape::Cross:
            return (std::abs(u) <= 1.0 && std::abs(v) <= 0.35) || (std::abs(u) <= 0.35 && std::abs(v) <= 1.0);
        case SpriteShape::Ring: {
            const double r2 = u * u + v * v;
            return r2 <= 1.0 && r2 >= 0.3;
        }
        case SpriteShape::Diamond: return std::abs(u) + std::abs(v) <= 1.0;
    }
    return false;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void render_background(const GenConfig& cfg, RandomSource& rng, Image& img) {
    const double base = rng.uniform(cfg.background_min, cfg.background_max);
    double tint[3];
    for (double& t : tint) t = rng.uniform(-0.03, 0.03);
    const int n = cfg.texture_cells + 1;
    std::vector<double> grid(static_cast<std::size_t>(n) * n);
    for (double& g : grid) g = rng.uniform(-cfg.texture_amplitude, cfg.texture_amplitude);
    for (int y = 0; y < img.height; ++y) {
        const double gy = (y + 0.5) / img.height * cfg.texture_cells;
        const int iy = std::min(static_cast<int>(gy), cfg.texture_cells - 1);
        const double fy = gy - iy;
        for (int x = 0; x < img.width; ++x) {
            const double gx = (x + 0.5) / img.width * cfg.texture_cells;
            const int ix = std::min(static_cast<int>(gx), cfg.texture_cells - 1);
            const double fx = gx - ix;
            auto g = [&](int a, int b) { return grid[static_cast<std::size_t>(a) * n + b]; };
            const double tex = (1 - fy) * ((1 - fx) * g(iy, ix) + fx * g(iy, ix + 1)) +
                               fy * ((1 - fx) * g(iy + 1, ix) + fx * g(iy + 1, ix + 1));
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = clamp01(base + tint[c] + tex);
        }
    }
    for (int k = 0; k < cfg.clutter_specks; ++k) {
        const int s = static_cast<int>(rng.uniform_int(1, 3));
        const int x0 = static_cast<int>(rng.uniform_int(0, img.width - s));
        const int y0 = static_cast<int>(rng.uniform_int(0, img.height - s));
        const double grey = rng.uniform(0.1, 0.9);
        for (int y = y0; y < y0 + s; ++y)
            for (int x = x0; x < x0 + s; ++x)
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = clamp01(0.5 * img.at(c, y, x) + 0.5 * grey);
    }
}

void add_pixel_noise(const GenConfig& cfg, RandomSource& rng, Image& img) {
    if (cfg.pixel_noise <= 0) return;
    for (float& v : img.data) v = clamp01(v + rng.normal(0.0, cfg.pixel_noise));
}

}  // namespace

const std::vector<SpriteClass>& sprite_classes() {
    static const std::vector<SpriteClass> classes = {
        {"red_disk", SpriteShape::Disk, {0.90f, 0.20f, 0.15f}},
        {"rose_disk", SpriteShape::Disk, {0.85f, 0.25f, 0.35f}},
        {"blue_square", SpriteShape::Square, {0.15f, 0.35f, 0.90f}},
        {"slate_square", SpriteShape::Square, {0.25f, 0.35f, 0.75f}},
        {"green_triangle", SpriteShape::Triangle, {0.15f, 0.80f, 0.25f}},
        {"yellow_cross", SpriteShape::Cross, {0.95f, 0.85f, 0.15f}},
        {"cyan_ring", SpriteShape::Ring, {0.15f, 0.85f, 0.90f}},
        {"magenta_diamond", SpriteShape::Diamond, {0.85f, 0.20f, 0.85f}},
    };
    return classes;
}

std::vector<std::pair<int, int>> confusable_pairs() { return {{0, 1}, {2, 3}}; }

void GenConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error("synthgen", m); };
    if (width < 16 || height < 16) fail("canvas must be at least 16x16");
    if (objects_min < 0 || objects_max < objects_min) fail("objects_per_image range is invalid");
    if (size_min < 4 || size_max < size_min) fail("object size range must start at 4 px or more");
    if (size_max + 2 > std::min(width, height)) fail("objects do not fit the canvas");
    if (!(max_pair_iou >= 0.0 && max_pair_iou <= 1.0)) fail("max_pair_iou must lie in [0,1]");
    if (max_attempts < 1) fail("max_attempts must be positive");
    if (texture_cells < 1) fail("texture_cells must be positive");
    if (train_count < 0 || val_count < 0 || test_count < 0) fail("split counts must be non-negative");
}

nlohmann::json to_json(const GenConfig& c) {
    return {{"canvas", {c.width, c.height}},
            {"objects_per_image", {c.objects_min, c.objects_max}},
            {"object_size", {c.size_min, c.size_max}},
            {"max_pair_iou", c.max_pair_iou},
            {"max_attempts", c.max_attempts},
            {"background",
             {{"min", c.background_min},
              {"max", c.background_max},
              {"texture_amplitude", c.texture_amplitude},
              {"texture_cells", c.texture_cells},
              {"pixel_noise", c.pixel_noise},
              {"clutter_specks", c.clutter_specks}}},
            {"swap_pair_colours", c.swap_pair_colours},
            {"counts", {{"train", c.train_count}, {"val", c.val_count}, {"test", c.test_count}}},
            {"seed", c.seed}};
}

GenConfig gen_config_from_json(const nlohmann::json& j, GenConfig c) {
    try {
        if (j.contains("canvas")) {
            c.width = j["canvas"].at(0);
            c.height = j["canvas"].at(1);
        }
        if (j.contains("objects_per_image")) {
            c.objects_min = j["objects_per_image"].at(0);
            c.objects_max = j["objects_per_image"].at(1);
        }
        if (j.contains("object_size")) {
            c.size_min = j["object_size"].at(0);
            c.size_max = j["object_size"].at(1);
        }
        c.max_pair_iou = j.value("max_pair_iou", c.max_pair_iou);
        c.max_attempts = j.value("max_attempts", c.max_attempts);
        if (j.contains("background")) {
            const auto& b = j["background"];
            c.background_min = b.value("min", c.background_min);
            c.background_max = b.value("max", c.background_max);
            c.texture_amplitude = b.value("texture_amplitude", c.texture_amplitude);
            c.texture_cells = b.value("texture_cells", c.texture_cells);
            c.pixel_noise = b.value("pixel_noise", c.pixel_noise);
            c.clutter_specks = b.value("clutter_specks", c.clutter_specks);
        }
        c.swap_pair_colours = j.value("swap_pair_colours", c.swap_pair_colours);
        if (j.contains("counts")) {
            const auto& n = j["counts"];
            c.train_count = n.value("train", c.train_count);
            c.val_count = n.value("val", c.val_count);
            c.test_count = n.value("test", c.test_count);
        }
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error("synthgen", std::string("bad generator config: ") + e.what());
    }
    c.validate();
    return c;
}

Box SpriteMask::bounds() const {
    int x_lo = w, x_hi = -1, y_lo = h, y_hi = -1;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (coverage[static_cast<std::size_t>(y) * w + x] <= 0.0f) continue;
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    }
    if (x_hi < 0) return {};
    return {static_cast<double>(x0 + x_lo), static_cast<double>(y0 + y_lo), static_cast<double>(x0 + x_hi + 1),
            static_cast<double>(y0 + y_hi + 1)};
}

SpriteMask render_sprite(SpriteShape shape, double cx, double cy, double width, double height) {
    SpriteMask m;
    m.x0 = static_cast<int>(std::floor(cx - 0.5 * width)) - 1;
    m.y0 = static_cast<int>(std::floor(cy - 0.5 * height)) - 1;
    m.w = static_cast<int>(std::ceil(cx + 0.5 * width)) + 1 - m.x0;
    m.h = static_cast<int>(std::ceil(cy + 0.5 * height)) + 1 - m.y0;
    m.coverage.assign(static_cast<std::size_t>(m.w) * m.h, 0.0f);
    const double rx = 0.5 * width, ry = 0.5 * height;
    for (int y = 0; y < m.h; ++y) {
        for (int x = 0; x < m.w; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSuper; ++sy) {
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double px = m.x0 + x + (sx + 0.5) / kSuper;
                    const double py = m.y0 + y + (sy + 0.5) / kSuper;
                    hits += inside(shape, (px - cx) / rx, (py - cy) / ry) ? 1 : 0;
                }
            }
            m.coverage[static_cast<std::size_t>(y) * m.w + x] = static_cast<float>(hits) / (kSuper * kSuper);
        }
    }
    return m;
}

GeneratedImage generate_image(const GenConfig& cfg, Split split, int index) {
    const auto& classes = sprite_classes();
    char id[32];
    std::snprintf(id, sizeof id, "%s_%05d", split_name(split), index);
    RandomSource rng(cfg.seed, std::string("synthgen/") + id);

    GeneratedImage out;
    out.image.image_id = id;
    out.image.pixels = Image(cfg.width, cfg.height);
    Image& img = out.image.pixels;
    RandomSource bg_rng = rng.fork("background");
    render_background(cfg, bg_rng, img);

    const auto pairs = confusable_pairs();
    std::vector<int> colour_of(classes.size());
    for (std::size_t c = 0; c < classes.size(); ++c) colour_of[c] = static_cast<int>(c);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const bool swap = cfg.swap_pair_colours && rng.uniform() < 0.5;
        out.pair_swapped[p] = swap;
        if (swap) std::swap(colour_of[static_cast<std::size_t>(pairs[p].first)],
                            colour_of[static_cast<std::size_t>(pairs[p].second)]);
    }

    const int n_target = static_cast<int>(rng.uniform_int(cfg.objects_min, cfg.objects_max));
    for (int k = 0; k < n_target; ++k) {
        const int cls = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(classes.size()) - 1));
        const double w = rng.uniform(cfg.size_min, cfg.size_max);
        const double h = std::clamp(w * rng.uniform(0.8, 1.25), static_cast<double>(cfg.size_min),
                                    static_cast<double>(cfg.size_max));
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
            const double cx = rng.uniform(0.5 * w + 1.0, cfg.width - 0.5 * w - 1.0);
            const double cy = rng.uniform(0.5 * h + 1.0, cfg.height - 0.5 * h - 1.0);
            const SpriteMask mask = render_sprite(classes[static_cast<std::size_t>(cls)].shape, cx, cy, w, h);
            const Box box = mask.bounds();
            if (!box.valid()) continue;
            bool clash = false;
            for (const auto& o : out.image.objects) {
                if (iou(o.box, box) > cfg.max_pair_iou) {
                    clash = true;
                    break;
                }
            }
            if (clash) continue;
            const auto& col = classes[static_cast<std::size_t>(colour_of[static_cast<std::size_t>(cls)])].rgb;
            double rgb[3];
            for (int c = 0; c < 3; ++c) rgb[c] = std::clamp(col[c] + rng.uniform(-0.04, 0.04), 0.0, 1.0);
            for (int y = 0; y < mask.h; ++y) {
                for (int x = 0; x < mask.w; ++x) {
                    const float a = mask.coverage[static_cast<std::size_t>(y) * mask.w + x];
                    if (a <= 0.0f) continue;
                    for (int c = 0; c < 3; ++c) {
                        float& p = img.at(c, mask.y0 + y, mask.x0 + x);
                        p = static_cast<float>((1.0 - a) * p + a * rgb[c]);
                    }
                }
            }
            out.image.objects.push_back({box, cls});
            placed = true;
        }
        if (!placed) ++out.placement_failures;
    }
    RandomSource noise_rng = rng.fork("noise");
    add_pixel_noise(cfg, noise_rng, img);
    return out;
}

std::vector<std::pair<Split, GenReport>> generate(const GenConfig& cfg, const std::filesystem::path& out_root) {
    cfg.validate();
    const auto& classes = sprite_classes();
    std::vector<std::string> names;
    for (const auto& c : classes) names.push_back(c.name);
    save_meta(out_root, DatasetMeta{ClassCatalog(names), cfg.width, cfg.height});

    std::vector<std::pair<Split, GenReport>> reports;
    nlohmann::json split_stats = nlohmann::json::object();
    const std::pair<Split, int> splits[] = {
        {Split::Train, cfg.train_count}, {Split::Val, cfg.val_count}, {Split::Test, cfg.test_count}};
    for (const auto& [split, count] : splits) {
        GenReport rep;
        std::vector<int> per_class(classes.size(), 0);
        int n_min = count > 0 ? cfg.objects_max : 0, n_max = 0;
        for (int i = 0; i < count; ++i) {
            auto g = generate_image(cfg, split, i);
            if (g.placement_failures > 0)
                std::clog << "synthgen: " << g.image.image_id << ": " << g.placement_failures
                          << " object(s) could not be placed\n";
            rep.placement_failures += g.placement_failures;
            rep.objects += g.image.num_objects();
            n_min = std::min(n_min, g.image.num_objects());
            n_max = std::max(n_max, g.image.num_objects());
            for (const auto& o : g.image.objects) ++per_class[static_cast<std::size_t>(o.class_id)];
            save_dataset(out_root, split, {g.image});
            ++rep.images;
        }
        split_stats[split_name(split)] = {{"images", rep.images},
                                          {"objects", rep.objects},
                                          {"objects_per_image", {n_min, n_max}},
                                          {"per_class", per_class},
                                          {"placement_failures", rep.placement_failures}};
        reports.emplace_back(split, rep);
    }

    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [a, b] : confusable_pairs()) pairs.push_back({a, b});
    nlohmann::json manifest = {{"generator", to_json(cfg)},
                               {"classes", names},
                               {"confusable", true},
                               {"confusable_pairs", pairs},
                               {"splits", split_stats}};
    write_file_atomic(out_root / "manifest.json", manifest.dump(2) + "\n");
    return reports;
}

}  // namespace c3det
