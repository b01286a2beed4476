#include <gtest/gtest.h>

#include <cmath>

#include "c3det/core/dataset.hpp"
#include "c3det/metrics.hpp"
#include "c3det/synthgen.hpp"
#include "helpers.hpp"

using namespace c3det;

namespace {
GenConfig small_config() {
    GenConfig c;
    c.seed = 11;
    c.train_count = 3;
    c.val_count = 2;
    c.test_count = 2;
    return c;
}
}  // namespace

TEST(Synthgen, EightClassesWithTwoConfusablePairs) {
    ASSERT_EQ(sprite_classes().size(), 8u);
    const auto pairs = confusable_pairs();
    ASSERT_EQ(pairs.size(), 2u);
    for (auto [a, b] : pairs) {
        EXPECT_EQ(sprite_classes()[static_cast<std::size_t>(a)].shape, sprite_classes()[static_cast<std::size_t>(b)].shape);
        double d = 0;
        for (int c = 0; c < 3; ++c) {
            const double x = sprite_classes()[static_cast<std::size_t>(a)].rgb[c] - sprite_classes()[static_cast<std::size_t>(b)].rgb[c];
            d += x * x;
        }
        EXPECT_LT(std::sqrt(d), 0.25);
        EXPECT_GT(std::sqrt(d), 0.0);
    }
}

TEST(Synthgen, DeterministicPerIndex) {
    const auto cfg = small_config();
    const auto a = generate_image(cfg, Split::Train, 4);
    const auto b = generate_image(cfg, Split::Train, 4);
    EXPECT_EQ(a.image.image_id, "train_00004");
    EXPECT_EQ(a.image.pixels.data, b.image.pixels.data);
    EXPECT_EQ(a.image.objects, b.image.objects);
    const auto c = generate_image(cfg, Split::Train, 5);
    EXPECT_NE(a.image.pixels.data, c.image.pixels.data);
    const auto d = generate_image(cfg, Split::Test, 4);
    EXPECT_NE(a.image.pixels.data, d.image.pixels.data);
}

TEST(Synthgen, ObjectCountsSizesAndOverlap) {
    const auto cfg = small_config();
    for (int i = 0; i < 30; ++i) {
        const auto g = generate_image(cfg, Split::Train, i);
        const auto& objs = g.image.objects;
        EXPECT_GE(static_cast<int>(objs.size()) + g.placement_failures, cfg.objects_min);
        EXPECT_LE(static_cast<int>(objs.size()) + g.placement_failures, cfg.objects_max);
        EXPECT_GE(objs.size(), 10u);
        for (std::size_t a = 0; a < objs.size(); ++a) {
            const Box& b = objs[a].box;
            EXPECT_GE(b.x_min, 0);
            EXPECT_GE(b.y_min, 0);
            EXPECT_LE(b.x_max, cfg.width);
            EXPECT_LE(b.y_max, cfg.height);
            EXPECT_LE(b.width(), cfg.size_max + 1);
            EXPECT_LE(b.height(), cfg.size_max + 1);
            EXPECT_GE(b.width(), cfg.size_min - 2);
            for (std::size_t o = a + 1; o < objs.size(); ++o) EXPECT_LE(iou(b, objs[o].box), cfg.max_pair_iou);
        }
        for (float v : g.image.pixels.data) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
    }
}

TEST(Synthgen, ClassFrequenciesUniform) {
    const auto cfg = small_config();
    std::vector<int> counts(8, 0);
    int total = 0;
    int swaps = 0;
    const int n = 120;
    for (int i = 0; i < n; ++i) {
        const auto g = generate_image(cfg, Split::Val, i);
        for (const auto& o : g.image.objects) {
            ++counts[static_cast<std::size_t>(o.class_id)];
            ++total;
        }
        swaps += g.pair_swapped[0] + g.pair_swapped[1];
    }
    double chi2 = 0;
    for (int c : counts) chi2 += (c - total / 8.0) * (c - total / 8.0) / (total / 8.0);
    EXPECT_LT(chi2, 24.32);  // 7 dof, p = 0.001
    // 240 Bernoulli(1/2) draws: mean 120, sd ~7.75
    EXPECT_NEAR(swaps, n, 4 * 7.75);
}

TEST(Synthgen, MaskInsideLabelBox) {
    RandomSource rng(3, "mask");
    for (int i = 0; i < 200; ++i) {
        const auto shape = static_cast<SpriteShape>(rng.uniform_int(0, 5));
        const SpriteMask m = render_sprite(shape, rng.uniform(20, 40), rng.uniform(20, 40), rng.uniform(6, 16), rng.uniform(6, 16));
        const Box b = m.bounds();
        ASSERT_TRUE(b.valid());
        bool touches[4] = {false, false, false, false};
        for (int y = 0; y < m.h; ++y)
            for (int x = 0; x < m.w; ++x) {
                const float a = m.coverage[static_cast<std::size_t>(y) * m.w + x];
                ASSERT_GE(a, 0.0f);
                ASSERT_LE(a, 1.0f);
                if (a <= 0.0f) continue;
                const int px = m.x0 + x, py = m.y0 + y;
                ASSERT_GE(px, b.x_min);
                ASSERT_LT(px, b.x_max);
                ASSERT_GE(py, b.y_min);
                ASSERT_LT(py, b.y_max);
                touches[0] |= px == b.x_min;
                touches[1] |= px + 1 == b.x_max;
                touches[2] |= py == b.y_min;
                touches[3] |= py + 1 == b.y_max;
            }
        for (bool t : touches) EXPECT_TRUE(t);
    }
}

TEST(Synthgen, ColourSwapCanBeDisabled) {
    auto cfg = small_config();
    cfg.swap_pair_colours = false;
    for (int i = 0; i < 10; ++i) {
        const auto g = generate_image(cfg, Split::Train, i);
        EXPECT_FALSE(g.pair_swapped[0]);
        EXPECT_FALSE(g.pair_swapped[1]);
    }
}

TEST(Synthgen, WritesDatasetAndManifest) {
    const auto root = testutil::temp_dir("synth");
    const auto cfg = small_config();
    const auto reports = generate(cfg, root);
    ASSERT_EQ(reports.size(), 3u);
    const auto meta = load_meta(root);
    EXPECT_EQ(meta.classes.size(), 8);
    EXPECT_EQ(meta.width, 256);
    const auto manifest = nlohmann::json::parse(read_file(root / "manifest.json"));
    EXPECT_TRUE(manifest.at("confusable").get<bool>());
    EXPECT_EQ(manifest.at("confusable_pairs").size(), 2u);
    for (const auto& [split, rep] : reports) {
        const auto data = load_dataset(root, split);
        ASSERT_EQ(static_cast<int>(data.size()), rep.images);
        int objects = 0;
        for (const auto& img : data) objects += img.num_objects();
        EXPECT_EQ(objects, rep.objects);
    }
    const auto again = generate_image(cfg, Split::Test, 1);
    const auto loaded = load_image(root, Split::Test, "test_00001", meta);
    EXPECT_EQ(loaded.objects, again.image.objects);
}

TEST(Synthgen, ConfigValidationAndJson) {
    GenConfig c;
    c.objects_min = 5;
    c.objects_max = 4;
    EXPECT_THROW(c.validate(), Error);
    c = GenConfig{};
    c.size_min = 0;
    EXPECT_THROW(c.validate(), Error);
    GenConfig d;
    d.seed = 99;
    d.train_count = 7;
    EXPECT_EQ(to_json(gen_config_from_json(to_json(d))), to_json(d));
}
