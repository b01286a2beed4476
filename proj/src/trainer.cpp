#include "c3det/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "c3det/core/dataset.hpp"
#include "c3det/evalharness.hpp"

namespace c3det {

namespace {

Error fail(const std::string& m) { return Error("trainer", m); }

double validation_map(Detector& det, std::span<const LabeledImage> val, int clicks, std::uint64_t seed) {
    SimConfig sim;
    sim.eval_max_clicks = clicks;
    const RandomSource root(seed, "train/val");
    std::vector<std::vector<Detection>> dets;
    for (const auto& img : val) {
        RandomSource r = root.fork(img.image_id);
        const auto inputs = session_clicks(img, r, sim);
        dets.push_back(det.detect(img.pixels, inputs));
    }
    return dataset_map(val, dets, 0.5);
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw fail("epochs must be at least 1");
    if (batch_size < 1) throw fail("batch_size must be at least 1");
    if (!(lr > 0.0)) throw fail("lr must be positive");
    if (warmup_steps < 0) throw fail("warmup_steps must be non-negative");
    if (!std::is_sorted(lr_decay_epochs.begin(), lr_decay_epochs.end()) ||
        std::adjacent_find(lr_decay_epochs.begin(), lr_decay_epochs.end()) != lr_decay_epochs.end())
        throw fail("lr_decay_epochs must be strictly ascending");
    if (!(lr_decay_factor > 0.0)) throw fail("lr_decay_factor must be positive");
    if (!(data_fraction > 0.0 && data_fraction <= 1.0)) throw fail("data_fraction must lie in (0,1]");
    if (val_clicks < 0) throw fail("val_clicks must be non-negative");
    if (val_every_epochs < 1) throw fail("val_every_epochs must be at least 1");
}

TrainConfig TrainConfig::profile(const std::string& name) {
    TrainConfig c;
    if (name == "desk") return c;
    if (name == "paper-profile") {
        c.epochs = 12;
        c.lr = 0.01;
        c.warmup_steps = 500;
        c.lr_decay_epochs = {8, 11};
        c.lr_decay_factor = 0.1;
        c.val_every_epochs = 1;
        c.optimizer.kind = nn::OptimizerKind::Sgd;
        return c;
    }
    throw fail("unknown training profile '" + name + "'");
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j = {{"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"lr", c.lr},
                        {"warmup_steps", c.warmup_steps},
                        {"lr_decay_epochs", c.lr_decay_epochs},
                        {"lr_decay_factor", c.lr_decay_factor},
                        {"seed", c.seed},
                        {"data_fraction", c.data_fraction},
                        {"augment_hflip", c.augment_hflip},
                        {"val_clicks", c.val_clicks},
                        {"val_every_epochs", c.val_every_epochs},
                        {"optimizer",
                         {{"kind", nn::optimizer_name(c.optimizer.kind)},
                          {"momentum", c.optimizer.momentum},
                          {"beta1", c.optimizer.beta1},
                          {"beta2", c.optimizer.beta2},
                          {"eps", c.optimizer.eps},
                          {"weight_decay", c.optimizer.weight_decay},
                          {"grad_clip", c.optimizer.grad_clip}}}};
    j["input_seed"] = c.input_seed ? nlohmann::json(*c.input_seed) : nlohmann::json(nullptr);
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
        if (j.contains("lr_decay_epochs")) c.lr_decay_epochs = j["lr_decay_epochs"].get<std::vector<int>>();
        c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
        c.seed = j.value("seed", c.seed);
        if (j.contains("input_seed") && !j["input_seed"].is_null()) c.input_seed = j["input_seed"].get<std::uint64_t>();
        c.data_fraction = j.value("data_fraction", c.data_fraction);
        c.augment_hflip = j.value("augment_hflip", c.augment_hflip);
        c.val_clicks = j.value("val_clicks", c.val_clicks);
        c.val_every_epochs = j.value("val_every_epochs", c.val_every_epochs);
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            if (o.contains("kind")) c.optimizer.kind = nn::parse_optimizer(o["kind"].get<std::string>());
            c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
            c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
            c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
            c.optimizer.eps = o.value("eps", c.optimizer.eps);
            c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
            c.optimizer.grad_clip = o.value("grad_clip", c.optimizer.grad_clip);
        }
    } catch (const nlohmann::json::exception& e) {
        throw fail(std::string("bad training config: ") + e.what());
    }
    c.validate();
    return c;
}

std::size_t subset_size(std::size_t n, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw fail("data fraction must lie in (0,1]");
    if (n == 0) return 0;
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n);
}

std::vector<LabeledImage> subset(std::vector<LabeledImage> train, double fraction, std::uint64_t seed) {
    const std::size_t k = subset_size(train.size(), fraction);
    RandomSource rng(seed, "train/subset");
    rng.shuffle(train);
    train.resize(k);
    return train;
}

double learning_rate(const TrainConfig& c, long long step, int epoch) {
    double lr = c.lr;
    for (int e : c.lr_decay_epochs)
        if (epoch >= e) lr *= c.lr_decay_factor;
    if (step < c.warmup_steps) lr *= static_cast<double>(step + 1) / c.warmup_steps;
    return lr;
}

LabeledImage hflip(const LabeledImage& src) {
    LabeledImage out = src;
    const int w = src.pixels.width;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < src.pixels.height; ++y)
            for (int x = 0; x < w; ++x) out.pixels.at(c, y, x) = src.pixels.at(c, y, w - 1 - x);
    for (auto& o : out.objects) {
        const double x0 = o.box.x_min;
        o.box.x_min = w - o.box.x_max;
        o.box.x_max = w - x0;
    }
    return out;
}

void write_loss_header(std::ostream& out) { out << "step,epoch,lr,loss_total,loss_cls,loss_box,loss_uel\n"; }

void write_loss_row(std::ostream& out, const LossRow& r) {
    out << r.step << ',' << r.epoch << ',' << format_real(r.lr) << ',' << format_real(r.loss.total) << ','
        << format_real(r.loss.cls) << ',' << format_real(r.loss.box) << ',' << format_real(r.loss.uel) << '\n';
}

TrainResult train(std::span<const LabeledImage> data, std::span<const LabeledImage> val, const ClassCatalog& catalog,
                  const ModelConfig& model_cfg, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const ProgressFn& progress) {
    cfg.validate();
    model_cfg.validate();
    if (data.empty()) throw fail("no training images");
    const auto images = subset(std::vector<LabeledImage>(data.begin(), data.end()), cfg.data_fraction, cfg.seed);
    const std::uint64_t input_seed = cfg.input_seed.value_or(cfg.seed);

    std::filesystem::create_directories(out_dir);
    write_file_atomic(out_dir / "train_config.json",
                      nlohmann::json({{"model", to_json(model_cfg)},
                                      {"train", to_json(cfg)},
                                      {"classes", catalog.names()},
                                      {"train_images", images.size()}})
                              .dump(2) +
                          "\n");

    Detector det(model_cfg, catalog, cfg.seed);
    auto params = det.network().params();
    nn::Optimizer opt(params, cfg.optimizer);
    const SimConfig sim;

    TrainResult res;
    res.k_histogram.assign(static_cast<std::size_t>(sim.n_u_max) + 1, 0);
    res.final_checkpoint = out_dir / "final.ckpt";
    res.best_checkpoint = out_dir / "best.ckpt";
    const auto last_checkpoint = out_dir / "last.ckpt";
    auto meta = [&](int epoch, long long step, double vmap) {
        return nlohmann::json{{"variant", variant_name(model_cfg.variant)},
                              {"epoch", epoch},
                              {"step", step},
                              {"val_map", vmap},
                              {"seed", cfg.seed}};
    };
    det.save(last_checkpoint, meta(-1, 0, -1.0));

    std::ofstream log(out_dir / "loss_log.csv", std::ios::trunc);
    if (!log) throw fail("cannot write " + (out_dir / "loss_log.csv").string());
    write_loss_header(log);

    const std::size_t n = images.size();
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t steps_per_epoch = (n + bs - 1) / bs;
    long long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        RandomSource order_rng(cfg.seed, "train/order/epoch" + std::to_string(epoch));
        order_rng.shuffle(order);

        for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
            const double lr = learning_rate(cfg, step, epoch);
            LossRow row{step, epoch, lr, {}};
            const std::size_t lo = b * bs, hi = std::min(n, lo + bs);
            const std::string tag = "step" + std::to_string(step) + "/";
            for (std::size_t i = lo; i < hi; ++i) {
                const LabeledImage& src = images[order[i]];
                RandomSource aug(cfg.seed, "train/aug/" + tag + src.image_id);
                const bool flip = cfg.augment_hflip && aug.uniform() < 0.5;
                const LabeledImage flipped = flip ? hflip(src) : LabeledImage{};
                const LabeledImage& img = flip ? flipped : src;
                RandomSource click_rng(input_seed, "train/inputs/" + tag + src.image_id);
                const auto inputs = sample_training_inputs(img, click_rng, sim);
                ++res.k_histogram[inputs.size()];

                const auto head = det.network().forward(img.pixels, inputs);
                LossResult<float> loss;
                try {
                    loss = total_loss<float>(head, img, inputs, model_cfg);
                } catch (const Error& e) {
                    throw fail(std::string(e.what()) + " at step " + std::to_string(step) + "; last good checkpoint " +
                               last_checkpoint.string());
                }
                det.network().backward(loss.grad);
                const double scale = 1.0 / static_cast<double>(hi - lo);
                row.loss.total += loss.parts.total * scale;
                row.loss.cls += loss.parts.cls * scale;
                row.loss.box += loss.parts.box * scale;
                row.loss.uel += loss.parts.uel * scale;
                row.loss.num_positive += loss.parts.num_positive;
                row.loss.uel_pairs += loss.parts.uel_pairs;
            }
            for (auto* p : params)
                for (float g : p->grad)
                    if (!std::isfinite(g))
                        throw fail("non-finite gradient in '" + p->name + "' at step " + std::to_string(step) +
                                   "; last good checkpoint " + last_checkpoint.string());
            opt.step(lr, 1.0 / static_cast<double>(hi - lo));
            write_loss_row(log, row);
            log.flush();
            res.log.push_back(row);
            if (progress) progress(row);
        }

        double vmap = -1.0;
        const bool last_epoch = epoch + 1 == cfg.epochs;
        if (!val.empty() && ((epoch + 1) % cfg.val_every_epochs == 0 || last_epoch))
            vmap = validation_map(det, val, cfg.val_clicks, cfg.seed);
        det.save(last_checkpoint, meta(epoch, step, vmap));
        const bool improved = val.empty() ? last_epoch : vmap > res.best_val_map;
        if (improved && (vmap >= 0.0 || val.empty())) {
            res.best_val_map = vmap;
            res.best_epoch = epoch;
            det.save(res.best_checkpoint, meta(epoch, step, vmap));
        }
    }
    det.save(res.final_checkpoint, meta(cfg.epochs - 1, step, -1.0));
    return res;
}

}  // namespace c3det
