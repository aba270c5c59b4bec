#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crn/classes.hpp"
#include "crn/markov.hpp"
#include "crn/policy.hpp"
#include "crn/scene.hpp"
#include "crn/sensing.hpp"
#include "crn/tracking.hpp"

namespace crn::experiment {

enum class PolicyKind { RadarOnly = 0, RandomP = 1, Centralized = 2, Distributed = 3 };

std::string policy_name(PolicyKind kind);
/// Accepts the names produced by policy_name (case-insensitive). Throws std::invalid_argument.
PolicyKind policy_from_name(const std::string& name);
bool uses_classes(PolicyKind kind);

/// One simulated configuration: a policy at a given network latency.
struct RunSpec {
    PolicyKind policy = PolicyKind::RadarOnly;
    double latency_sigma = 0.0;

    std::string label() const;
    std::uint64_t stream_key() const;
};

struct CampaignConfig {
    scene::SceneConfig scene;
    double region_side = 10000.0;
    markov::FamilyOptions family;
    std::string family_path;  // load the family from JSON instead of sampling one per replicate
    sensing::RadarScanParams radar;
    sensing::EsmScanParams esm;
    tracking::FilterParams filter;
    classes::FormationOptions formation;

    double gamma = 0.2;
    double random_p = 0.8;
    double bearing_gate_deg = 5.0;
    int association_min_signal = 1;  // intercepts a track needs before class association
    int formation_min_motion = 3;    // FC records need this much evidence to enter class formation
    int formation_min_signal = 2;
    double fc_merge_gate = 100.0;  // m, joins reports of different nodes into one FC record
    double error_gate = 500.0;     // m, track-to-truth gate for tracking error
    double ospa_cutoff = 500.0;
    double ospa_order = 2.0;

    std::vector<PolicyKind> policies{PolicyKind::RadarOnly, PolicyKind::RandomP, PolicyKind::Centralized,
                                     PolicyKind::Distributed};
    std::vector<double> latency_sweep{0.0, 1.0, 3.0};
    int epochs = 15;
    int epoch_steps = 25;
    int replicates = 30;
    std::uint64_t master_seed = 20240611;
    std::string output_dir = "results";
    int threads = 0;  // 0 = hardware concurrency

    /// Throws std::invalid_argument.
    void validate() const;
    /// Every policy at zero latency, then Centralized at each non-zero sweep value.
    std::vector<RunSpec> runs() const;
};

void to_json(nlohmann::json& j, const CampaignConfig& c);
/// Missing keys keep their defaults. Throws std::invalid_argument on bad values.
CampaignConfig config_from_json(const nlohmann::json& j);
CampaignConfig load_config(const std::string& path);

struct EpochReport {
    int epoch = 0;
    std::vector<double> tracking_errors;   // m
    std::vector<double> node_utilization;  // radar share per node
    std::vector<double> intercept_ranges;  // m, one per node
    double radar_utilization = 0.0;        // over all node-steps
    std::optional<double> formation_accuracy;
    double association_accuracy = 0.0;
    int association_events = 0;
    int class_count = 0;
    std::vector<double> mean_age;  // s, per step
    double ospa_mean = 0.0;
    int spurious_estimates = 0;
    int node_count = 0;
    int target_count = 0;
};

struct ReplicateReport {
    RunSpec run;
    int replicate = 0;
    std::vector<EpochReport> epochs;

    std::vector<double> tracking_errors() const;
    double median_error() const;   // NaN without samples
    double radar_utilization() const;
    std::vector<double> intercept_ranges() const;
};

/// Optional per-step trace outputs; null streams are skipped.
struct TraceSink {
    std::ostream* decisions = nullptr;  // step,node,mode,policy
    std::ostream* tracks = nullptr;     // step,node,track,x,y,vx,vy,class,error
    std::ostream* truth = nullptr;      // scene snapshot rows
};

/// What the fusion center has learned so far; persists across the epochs of one replicate.
struct ClassMemory {
    std::vector<classes::TargetEvidence> pool;  // accumulated formation inputs
    std::vector<int> pool_truth;                // truth class per pool entry, -1 when unknown (scoring only)
    std::vector<classes::EstimatedClass> classes;
    std::vector<int> class_truth;  // majority truth class per formed class (scoring only)
};

/// Family for one replicate: loaded from config.family_path or sampled from the replicate stream.
markov::TargetFamily replicate_family(const CampaignConfig& config, int replicate);

/// Filter parameters for a node, consistent with the scene and radar settings.
tracking::FilterParams node_filter_params(const CampaignConfig& config, const scene::Node& node);

/// One epoch: fresh scene, per-step mode selection, scans, filtering, class
/// association and latency-delayed reports; class formation at the end.
EpochReport run_epoch(const CampaignConfig& config, const markov::TargetFamily& family, const RunSpec& run,
                      int replicate, int epoch, ClassMemory& memory, TraceSink* trace = nullptr);

/// All epochs of one replicate under one run. Deterministic in (config, family, run, replicate).
ReplicateReport run_replicate(const CampaignConfig& config, const markov::TargetFamily& family, const RunSpec& run,
                              int replicate, TraceSink* trace = nullptr);

struct CampaignReport {
    CampaignConfig config;
    std::vector<ReplicateReport> results;  // run-major, then replicate

    std::vector<const ReplicateReport*> of(const RunSpec& run) const;
};

/// Runs every run spec for every replicate; scenes use common random numbers across runs.
CampaignReport run_campaign(const CampaignConfig& config);

/// Writes one CSV per figure and summary.json. Throws std::runtime_error when the directory is unwritable.
void write_campaign_outputs(const CampaignReport& report, const std::string& output_dir);

/// ESM SNR and intercept-range curves for the configured link parameters.
void write_link_sweep(const CampaignConfig& config, const std::string& output_dir);

struct ErrorSamples {
    std::vector<double> errors;
    int spurious = 0;
};

/// Per confirmed track, distance to the nearest truth within `gate`; the rest count as spurious.
ErrorSamples tracking_error_samples(std::span<const tracking::Track> tracks, std::span<const scene::Vec2> truth,
                                    double gate);

/// Right-continuous empirical CDF at each distinct value. Throws std::invalid_argument when empty.
std::vector<std::pair<double, double>> ecdf(std::span<const double> samples);

/// OSPA distance with cutoff c and order p; 0 when both sets are empty.
double ospa(std::span<const scene::Vec2> estimates, std::span<const scene::Vec2> truth, double cutoff, double order);

/// Mean age of alive targets at each of `steps` + 1 scene states starting from `initial`.
std::vector<double> mean_age_series(scene::SceneState initial, const scene::SceneConfig& config,
                                    const markov::TargetFamily& family, int steps, Rng& rng);

/// Spearman rank correlation; ties get average ranks. NaN when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

/// Maneuvering-target trial: one node, radar every step, targets of one class;
/// mean tracking error of an untuned and a class-tuned filter on the same measurements.
struct TunedTrialOptions {
    int steps = 60;
    int targets = 4;
    double region_side = 4000.0;
    double radar_range = 2000.0;
};
struct TunedTrialResult {
    double untuned_error = 0.0;
    double tuned_error = 0.0;
    std::size_t samples = 0;
};
TunedTrialResult tuned_filter_trial(std::uint64_t seed, const TunedTrialOptions& options = {});

/// Tuning derived from a known class: its motion transition and per-model process noise.
tracking::ClassTuning tuning_from_class(const markov::TargetClassSpec& cls, double nominal_speed);

}  // namespace crn::experiment
