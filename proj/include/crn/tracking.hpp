#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "crn/markov.hpp"
#include "crn/sensing.hpp"

namespace crn::tracking {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix<double, 4, 4>;

/// Weighted Gaussian over the planar state (x, vx, y, vy).
/// `class_tag` is the class whose tuning drives this component's dynamics, -1 if untuned.
struct GaussianComponent {
    double weight = 0.0;
    Vec4 mean = Vec4::Zero();
    Mat4 cov = Mat4::Identity();
    int class_tag = -1;
};

/// One Gaussian mixture per motion model; together they carry the PHD intensity.
class PhdMixture {
public:
    explicit PhdMixture(std::size_t n_models = 3) : models_(n_models) {}

    std::size_t model_count() const { return models_.size(); }
    std::vector<GaussianComponent>& model(std::size_t i) { return models_[i]; }
    const std::vector<GaussianComponent>& model(std::size_t i) const { return models_[i]; }

    double mass() const;
    double mass(std::size_t model) const;
    std::size_t component_count() const;

private:
    std::vector<std::vector<GaussianComponent>> models_;
};

/// Dynamics and noise overrides applied to components tagged with a class.
struct ClassTuning {
    markov::RowMatrix mixing;
    std::optional<std::vector<double>> process_noise;  // per motion model, m/s^2
};
using TuningTable = std::map<int, ClassTuning>;

struct FilterParams {
    double detection_probability = 0.9;
    double false_alarm_rate = 1.0;      // expected clutter returns per scan
    double clutter_density = 1.0 / (3.141592653589793 * 2000.0 * 2000.0);  // per m^2
    double survival_probability = 0.99;
    double birth_weight = 0.02;  // per motion model, per scan
    Vec2 birth_center = Vec2::Zero();
    double birth_position_sigma = 1200.0;  // m
    double birth_velocity_sigma = 25.0;    // m/s
    std::vector<double> process_noise{0.5, 2.0, 1.2};  // white-acceleration sigma per model, m/s^2
    double measurement_sigma = 25.0;                   // m per axis
    double prune_threshold = 1e-5;
    double merge_threshold = 4.0;  // squared Mahalanobis
    std::size_t max_components = 200;
    double extraction_threshold = 0.5;
    double extraction_max_sigma = 300.0;  // components broader than this (m) are not extracted
    double cluster_gate = 9.0;            // squared Mahalanobis for cross-model grouping
    double track_gate = 150.0;            // m, estimate-to-track continuity gate
    int confirm_hits = 2;
    int confirm_window = 3;
    int delete_misses = 5;
    double dt = 1.0;
    double default_self_transition = 0.9;
    // On passive steps, a confirmed track with no associated intercept logs the silent state.
    bool infer_silence = false;

    std::size_t model_count() const { return process_noise.size(); }
};

enum class TrackStatus { Tentative, Confirmed };

struct Track {
    int track_id = 0;
    Vec4 state = Vec4::Zero();
    Mat4 cov = Mat4::Identity();
    int age = 0;  // steps since confirmation; 1 on the confirming step, 0 while tentative
    TrackStatus status = TrackStatus::Tentative;
    std::vector<double> motion_model_posterior;
    std::optional<int> class_assignment;
    std::vector<std::pair<int, int>> motion_history;  // (step, estimated motion model) on radar steps
    std::vector<std::pair<int, int>> signal_history;  // (step, intercepted signal state)
    int first_step = 0;
    // M-of-N bookkeeping over radar scans, most recent last.
    std::vector<bool> scan_hits;
    int consecutive_misses = 0;
    bool matched_this_step = false;

    bool confirmed() const { return status == TrackStatus::Confirmed; }
    Vec2 position() const { return {state(0), state(2)}; }
    Vec2 velocity() const { return {state(1), state(3)}; }
};

/// Constant-velocity transition for a step of `dt` seconds.
Mat4 transition_matrix(double dt);
/// Discretized white-acceleration process noise with standard deviation `accel_sigma`.
Mat4 process_noise(double accel_sigma, double dt);

/// Pools each model-j component into every model i with weight scaled by P(j -> i).
/// Tagged components use their class's mixing matrix when present in `tunings`.
/// Throws std::invalid_argument on dimension mismatch.
PhdMixture phd_mix(const PhdMixture& mixture, const markov::RowMatrix& transition, const TuningTable& tunings = {});

/// Propagates every component through its model's dynamics, scales weights by
/// the survival probability and (optionally) appends one birth component per model.
PhdMixture phd_predict(const PhdMixture& mixture, const FilterParams& params, const TuningTable& tunings = {},
                       bool with_birth = true);

/// GM-PHD measurement update followed by pruning, merging and the component cap.
PhdMixture phd_update(const PhdMixture& mixture, std::span<const sensing::Detection> detections, const FilterParams& params);

/// The update without housekeeping; exposed for tests of the raw recursion.
PhdMixture phd_update_raw(const PhdMixture& mixture, std::span<const sensing::Detection> detections,
                          const FilterParams& params);

/// Prune below threshold, merge within squared Mahalanobis distance, cap component count.
void reduce_mixture(PhdMixture& mixture, const FilterParams& params);

/// A cross-model cluster of components whose total weight passed the extraction threshold.
struct StateEstimate {
    Vec4 mean = Vec4::Zero();
    Mat4 cov = Mat4::Identity();
    double weight = 0.0;
    std::vector<double> model_mass;
};

std::vector<StateEstimate> extract_estimates(const PhdMixture& mixture, const FilterParams& params);

/// Gated nearest-neighbour continuity with M-of-N confirmation. `radar_step` marks
/// steps that count as scans for confirmation and deletion; on other steps
/// unmatched tracks coast. `next_track_id` is advanced for new tracks.
std::vector<Track> extract_tracks(const PhdMixture& mixture, std::vector<Track> previous, const FilterParams& params,
                                  int step, bool radar_step, int& next_track_id);

/// Normalized per-model mass of components inside the track's gate; keeps the
/// previous posterior when the gate is empty in every model.
std::vector<double> estimate_motion_model(const PhdMixture& mixture, Track& track, const FilterParams& params);

/// Index of the largest entry; ties resolve to the lowest index.
int most_likely(std::span<const double> distribution);

/// Tags components inside the track's gate with `class_id`.
void tag_components(PhdMixture& mixture, const Track& track, int class_id, const FilterParams& params);

/// Bearing-gated association of passive intercepts to confirmed tracks.
/// Returns (observation index, track index) pairs.
std::vector<std::pair<std::size_t, std::size_t>> associate_signals(const Vec2& node_position,
                                                                   std::span<const sensing::SignalObservation> observations,
                                                                   std::span<const Track> tracks, double bearing_gate);

/// Per-node multiple-model GM-PHD filter with track management and class tuning.
class NodeFilter {
public:
    explicit NodeFilter(FilterParams params);

    /// One filter cycle. Radar steps run mix/predict(with birth)/update; passive
    /// steps mix and predict only. Confirmed, detected tracks log their motion model.
    void step(int step, bool radar, std::span<const sensing::Detection> detections);

    /// Records passive intercepts on the tracks they associate with.
    void record_signals(int step, std::span<const sensing::SignalObservation> observations, double bearing_gate);

    /// Class tuning: substitute the class mixing matrix (and process noise, when
    /// known) for the components of this track.
    void set_tuning(int class_id, ClassTuning tuning);
    void assign_class(int track_id, int class_id);
    void clear_tuning();

    const std::vector<Track>& tracks() const { return tracks_; }
    const PhdMixture& mixture() const { return mixture_; }
    const FilterParams& params() const { return params_; }

private:
    FilterParams params_;
    markov::RowMatrix default_mixing_;
    TuningTable tunings_;
    PhdMixture mixture_;
    std::vector<Track> tracks_;
    int next_track_id_ = 0;
};

}  // namespace crn::tracking
