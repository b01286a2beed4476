#pragma once

#include <optional>
#include <vector>

#include "c3det/core/random.hpp"
#include "c3det/core/types.hpp"

namespace c3det {

struct SimConfig {
    int n_u_max = 20;          // training: N_u ~ U{0..n_u_max}
    int eval_max_clicks = 20;  // evaluation: clicks per image
    int eval_sessions = 5;

    void validate() const;
};

/// Click for ground-truth object `index`: its box centre and class.
UserInput click_for_object(const LabeledImage& gt, int index);

/// Training-time synthesis: K = min(N_u, N_a) distinct objects.
std::vector<UserInput> sample_training_inputs(const LabeledImage& gt, RandomSource& rng, const SimConfig& cfg = {});

struct SessionState {
    std::vector<int> remaining;
    std::vector<UserInput> issued;

    static SessionState start(const LabeledImage& gt);
};

struct ClickResult {
    std::optional<UserInput> input;  // empty once exhausted
    SessionState state;
};

ClickResult next_click(SessionState state, const LabeledImage& gt, RandomSource& rng, const SimConfig& cfg = {});

/// The whole click sequence of one evaluation session for one image
/// (length min(N_a, eval_max_clicks)).
std::vector<UserInput> session_clicks(const LabeledImage& gt, RandomSource& rng, const SimConfig& cfg = {});

}  // namespace c3det
