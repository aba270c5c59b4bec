#include "crn/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace crn::policy {

const char* mode_name(Mode m) { return m == Mode::ActiveRadar ? "radar" : "esm"; }

double shannon_entropy_normalized(std::span<const double> distribution) {
    if (distribution.size() < 2) throw std::invalid_argument("shannon_entropy_normalized: need at least two states");
    double h = 0.0;
    for (double x : distribution) {
        if (x < 0.0) throw std::invalid_argument("shannon_entropy_normalized: negative probability");
        if (x > 0.0) h -= x * std::log2(x);
    }
    return h / std::log2(static_cast<double>(distribution.size()));
}

std::pair<double, double> centralized_reward(std::span<const TrackEstimates> tracks) {
    if (tracks.empty()) return {0.0, 0.0};
    double radar = 0.0, esm = 0.0;
    for (const auto& t : tracks) {
        radar += shannon_entropy_normalized(t.motion);
        esm += shannon_entropy_normalized(t.signal);
    }
    const double n = static_cast<double>(tracks.size());
    return {radar / n, esm / n};
}

Mode ucb_select(const BanditState& state) {
    for (std::size_t i = 0; i < 2; ++i)
        if (state.count[i] == 0) return arm_mode(i);
    const double log_t = std::log(static_cast<double>(std::max(state.t, 1)));
    std::array<double, 2> index{};
    for (std::size_t i = 0; i < 2; ++i) index[i] = state.mean[i] + std::sqrt(log_t / state.count[i]);
    return index[1] > index[0] ? Mode::PassiveEsm : Mode::ActiveRadar;
}

void ucb_record(BanditState& state, Mode pulled, double reward) {
    const auto i = arm_index(pulled);
    ++state.count[i];
    state.mean[i] += (reward - state.mean[i]) / state.count[i];
}

std::pair<double, double> distributed_utility(std::span<const TrackAgeClass> tracks, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("distributed_utility: gamma must be in (0, 1)");
    if (tracks.empty()) return {gamma, 1.0 - gamma};
    double radar = 0.0, esm = 0.0;
    for (const auto& t : tracks) {
        const double f = t.class_motion_entropy.value_or(gamma);
        const double w = 1.0 / static_cast<double>(std::max(t.age, 1));
        radar += w * f;
        esm += w * (1.0 - f);
    }
    const double n = static_cast<double>(tracks.size());
    return {radar / n, esm / n};
}

Mode sample_mode(std::pair<double, double> weights, Rng& rng) {
    const auto [radar, esm] = weights;
    if (radar < 0.0 || esm < 0.0) throw std::invalid_argument("sample_mode: negative weight");
    const double total = radar + esm;
    if (!(total > 0.0)) throw std::invalid_argument("sample_mode: both weights are zero");
    return rng.bernoulli(radar / total) ? Mode::ActiveRadar : Mode::PassiveEsm;
}

Mode baseline_select(BaselineKind kind, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("baseline_select: p must be in [0, 1]");
    if (kind == BaselineKind::RadarOnly) return Mode::ActiveRadar;
    return rng.bernoulli(p) ? Mode::ActiveRadar : Mode::PassiveEsm;
}

double sample_latency(const LatencyModel& model, Rng& rng) {
    if (model.sigma < 0.0) throw std::invalid_argument("latency sigma must be >= 0");
    if (model.sigma == 0.0) return 0.0;
    return rng.lognormal(0.0, model.sigma);
}

}  // namespace crn::policy
