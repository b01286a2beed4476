#include "c3det/simulate.hpp"

#include <algorithm>
#include <numeric>

namespace c3det {

void SimConfig::validate() const {
    if (n_u_max <= 0 || eval_max_clicks <= 0 || eval_sessions <= 0)
        throw Error("simulate", "SimConfig fields must be positive");
}

UserInput click_for_object(const LabeledImage& gt, int index) {
    if (index < 0 || index >= gt.num_objects()) throw Error("simulate", "object index out of range");
    const auto& o = gt.objects[static_cast<std::size_t>(index)];
    return UserInput{o.box.center_x(), o.box.center_y(), o.class_id, index};
}

std::vector<UserInput> sample_training_inputs(const LabeledImage& gt, RandomSource& rng, const SimConfig& cfg) {
    const int n_u = static_cast<int>(rng.uniform_int(0, cfg.n_u_max));
    const int n_a = gt.num_objects();
    const int k = std::min(n_u, n_a);
    std::vector<int> idx(static_cast<std::size_t>(n_a));
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<UserInput> out;
    out.reserve(static_cast<std::size_t>(k));
    // partial Fisher-Yates: the first k slots become a uniform sample without replacement
    for (int i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(i, n_a - 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
        out.push_back(click_for_object(gt, idx[static_cast<std::size_t>(i)]));
    }
    return out;
}

SessionState SessionState::start(const LabeledImage& gt) {
    SessionState s;
    s.remaining.resize(gt.objects.size());
    std::iota(s.remaining.begin(), s.remaining.end(), 0);
    return s;
}

ClickResult next_click(SessionState state, const LabeledImage& gt, RandomSource& rng, const SimConfig& cfg) {
    if (state.remaining.empty() || static_cast<int>(state.issued.size()) >= cfg.eval_max_clicks)
        return {std::nullopt, std::move(state)};
    const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(state.remaining.size()) - 1));
    const int object = state.remaining[pick];
    state.remaining.erase(state.remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    UserInput u = click_for_object(gt, object);
    state.issued.push_back(u);
    return {u, std::move(state)};
}

std::vector<UserInput> session_clicks(const LabeledImage& gt, RandomSource& rng, const SimConfig& cfg) {
    SessionState s = SessionState::start(gt);
    while (true) {
        ClickResult r = next_click(std::move(s), gt, rng, cfg);
        s = std::move(r.state);
        if (!r.input) break;
    }
    return s.issued;
}

}  // namespace c3det
