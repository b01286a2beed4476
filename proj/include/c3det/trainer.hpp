#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "c3det/core/types.hpp"
#include "c3det/model/config.hpp"
#include "c3det/model/detector.hpp"
#include "c3det/model/losses.hpp"
#include "c3det/nn/optim.hpp"
#include "c3det/simulate.hpp"

namespace c3det {

struct TrainConfig {
    int epochs = 16;
    int batch_size = 8;
    double lr = 1e-3;
    int warmup_steps = 100;
    std::vector<int> lr_decay_epochs{12, 15};  // ascending; lr *= lr_decay_factor at the start of each
    double lr_decay_factor = 0.1;
    std::uint64_t seed = 0;
    /// Seed of the click-sampling stream; defaults to `seed`.
    std::optional<std::uint64_t> input_seed;
    double data_fraction = 1.0;
    bool augment_hflip = true;
    nn::OptimizerConfig optimizer;
    /// Validation mAP@0.5 at `val_clicks` clicks picks the best checkpoint.
    int val_clicks = 20;
    int val_every_epochs = 4;

    void validate() const;
    /// "desk" (Adam, short schedule) or "paper-profile" (momentum SGD,
    /// lr 0.01 after a 500-step warmup, x0.1 decays).
    static TrainConfig profile(const std::string& name);
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Seeded shuffle, then the first max(1, floor(fraction * N)) images.
std::vector<LabeledImage> subset(std::vector<LabeledImage> train, double fraction, std::uint64_t seed);
/// Number of images `subset` keeps.
std::size_t subset_size(std::size_t n, double fraction);

/// Learning rate at a global step within an epoch: linear warmup from
/// lr/warmup_steps to lr over the first warmup_steps steps, then step decay.
double learning_rate(const TrainConfig& c, long long step, int epoch);

/// Mirror image and boxes about the vertical axis.
LabeledImage hflip(const LabeledImage& img);

struct LossRow {
    long long step = 0;
    int epoch = 0;
    double lr = 0.0;
    LossBreakdown loss;
};

void write_loss_header(std::ostream& out);
void write_loss_row(std::ostream& out, const LossRow& r);

struct TrainResult {
    std::vector<LossRow> log;
    std::filesystem::path final_checkpoint;
    std::filesystem::path best_checkpoint;
    double best_val_map = -1.0;
    int best_epoch = -1;
    /// Number of simulated inputs drawn for each training sample.
    std::vector<int> k_histogram;
};

using ProgressFn = std::function<void(const LossRow&)>;

/// Trains a fresh model. Writes under `out_dir`: loss_log.csv,
/// train_config.json, last.ckpt (after every epoch), best.ckpt and
/// final.ckpt. `val` may be empty (best = last epoch). A non-finite loss
/// aborts with Error("trainer", ...) and leaves last.ckpt from the last
/// completed epoch in place.
TrainResult train(std::span<const LabeledImage> data, std::span<const LabeledImage> val, const ClassCatalog& catalog,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg, const std::filesystem::path& out_dir,
                  const ProgressFn& progress = {});

}  // namespace c3det
