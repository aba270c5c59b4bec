#include "crn/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace crn::sensing {

namespace {

constexpr double kFourPiSquared = 16.0 * std::numbers::pi * std::numbers::pi;

bool unit_interval(double p) { return p >= 0.0 && p <= 1.0; }

scene::Vec2 clamp_to(const scene::Region& region, scene::Vec2 p) {
    p.x() = std::clamp(p.x(), 0.0, region.side_length);
    p.y() = std::clamp(p.y(), 0.0, region.side_length);
    return p;
}

}  // namespace

void InterceptFactors::validate() const {
    if (!unit_interval(p_space) || !unit_interval(p_freq) || !unit_interval(p_time))
        throw std::invalid_argument("intercept factors must lie in [0, 1]");
}

double noise_power(const EsmLinkParams& link) {
    return kBoltzmann * link.noise_temp * link.noise_figure * link.bandwidth;
}

double esm_snr_db(const EsmLinkParams& link, double range) {
    if (!(range > 0.0)) throw std::invalid_argument("esm_snr_db: range must be > 0");
    const double four_pi_r = 4.0 * std::numbers::pi * range;
    const double snr = link.target_tx_power * link.target_tx_gain * link.rx_gain * link.wavelength * link.wavelength /
                       (four_pi_r * four_pi_r * noise_power(link) * link.losses);
    return 10.0 * std::log10(snr);
}

double max_esm_range(const EsmLinkParams& link) {
    return std::sqrt(link.target_tx_power * link.target_tx_gain * link.rx_gain * link.wavelength * link.wavelength /
                     (kFourPiSquared * noise_power(link) * link.losses));
}

double intercept_probability(const InterceptFactors& f) {
    f.validate();
    return f.p_space * f.p_freq * f.p_time;
}

double intercept_sensitivity(const RadarInterceptParams& p) {
    return kBoltzmann * p.noise_temp * p.noise_figure * p.bandwidth * p.required_snr;
}

double max_intercept_range(const RadarInterceptParams& p, double duty) {
    if (!unit_interval(duty)) throw std::invalid_argument("max_intercept_range: duty must be in [0, 1]");
    return std::sqrt(duty * p.transmit_power * p.transmit_gain * p.intercept_gain * p.one_way_loss * p.wavelength *
                     p.wavelength / (kFourPiSquared * p.system_loss * intercept_sensitivity(p)));
}

std::vector<Detection> radar_scan(const scene::Node& node, const scene::SceneState& scene, const RadarScanParams& params,
                                  Rng& rng) {
    if (!unit_interval(params.detection_probability)) throw std::invalid_argument("radar_scan: P_D must be in [0, 1]");
    std::vector<Detection> out;
    const double r2 = node.radar_range * node.radar_range;
    for (const auto& t : scene.targets) {
        if (!t.alive || (t.position() - node.position).squaredNorm() > r2) continue;
        const int returns = rng.poisson(params.mean_extent);
        for (int k = 0; k < returns; ++k) {
            if (!rng.bernoulli(params.detection_probability)) continue;
            scene::Vec2 z = t.position() + scene::Vec2(rng.normal(0.0, params.position_sigma), rng.normal(0.0, params.position_sigma));
            out.push_back({node.id, scene.step, clamp_to(scene.region, z), t.id});
        }
    }
    const int false_alarms = rng.poisson(params.false_alarm_rate);
    for (int k = 0; k < false_alarms; ++k) {
        // Uniform over the disk intersected with the region, by rejection.
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const double rad = node.radar_range * std::sqrt(rng.uniform());
            const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
            scene::Vec2 z = node.position + rad * scene::Vec2(std::cos(ang), std::sin(ang));
            if (scene.region.contains(z)) {
                out.push_back({node.id, scene.step, z, -1});
                break;
            }
        }
    }
    return out;
}

std::vector<SignalObservation> esm_scan(const scene::Node& node, const scene::SceneState& scene,
                                        const EsmScanParams& params, Rng& rng) {
    const double p_intercept = intercept_probability(params.factors);
    const double esm_range = max_esm_range(node.esm_link);
    const double r2 = node.radar_range * node.radar_range;
    std::vector<SignalObservation> out;
    for (const auto& t : scene.targets) {
        if (!t.alive || t.signal_state == markov::kSilentSignal) continue;
        const scene::Vec2 d = t.position() - node.position;
        if (d.squaredNorm() > r2 || d.norm() >= esm_range) continue;
        if (!rng.bernoulli(p_intercept)) continue;
        const double bearing = std::atan2(d.y(), d.x()) + rng.normal(0.0, params.bearing_sigma);
        out.push_back({node.id, scene.step, t.signal_state, bearing, t.id});
    }
    return out;
}

}  // namespace crn::sensing
