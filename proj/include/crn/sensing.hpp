#pragma once

#include <vector>

#include "crn/link_params.hpp"
#include "crn/rng.hpp"
#include "crn/scene.hpp"

namespace crn::sensing {

/// Per-domain intercept probabilities of an in-range emission.
struct InterceptFactors {
    double p_space = 0.8;
    double p_freq = 1.0;
    double p_time = 0.9;

    void validate() const;
};

/// One radar return. `source_target` is -1 for a false alarm.
struct Detection {
    int node_id = 0;
    int step = 0;
    scene::Vec2 position = scene::Vec2::Zero();
    int source_target = -1;
};

/// One passive intercept. `source_target` is ground truth for evaluation only.
struct SignalObservation {
    int node_id = 0;
    int step = 0;
    int signal_state = 0;
    double bearing = 0.0;  // rad, atan2 convention from the node
    int source_target = -1;
};

struct RadarScanParams {
    double detection_probability = 0.9;
    double false_alarm_rate = 1.0;  // expected false alarms per scan
    double mean_extent = 3.0;       // expected returns per target before thinning
    double position_sigma = 25.0;   // m, per axis
};

struct EsmScanParams {
    InterceptFactors factors;
    double bearing_sigma = 0.034906585039886591;  // 2 degrees
};

/// Receiver noise power k T0 F B, watts.
double noise_power(const EsmLinkParams& link);

/// Instantaneous ESM SNR in dB at range R (m). Throws std::invalid_argument for R <= 0.
double esm_snr_db(const EsmLinkParams& link, double range);

/// Range at which esm_snr_db is exactly 0 dB.
double max_esm_range(const EsmLinkParams& link);

/// P_S * P_F * P_T.
double intercept_probability(const InterceptFactors& f);

/// Intercept receiver sensitivity k T0 F1 B1 SNR_I, watts.
double intercept_sensitivity(const RadarInterceptParams& p);

/// Maximum range at which an intercept receiver detects the node, with the
/// transmit power averaged over the radar duty cycle.
double max_intercept_range(const RadarInterceptParams& p, double duty);

/// Extended-object radar scan: Poisson(mean_extent) returns per covered target,
/// each kept with P_D, plus Poisson(lambda_FA) false alarms uniform over the
/// covered disk (clipped to the region).
std::vector<Detection> radar_scan(const scene::Node& node, const scene::SceneState& scene, const RadarScanParams& params,
                                  Rng& rng);

/// Passive scan: every covered, emitting, in-ESM-range target is intercepted with
/// probability P_I and reported with its true signal state and a noisy bearing.
std::vector<SignalObservation> esm_scan(const scene::Node& node, const scene::SceneState& scene,
                                        const EsmScanParams& params, Rng& rng);

}  // namespace crn::sensing
