#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "crn/link_params.hpp"
#include "crn/markov.hpp"
#include "crn/rng.hpp"

namespace crn::scene {

using Vec2 = Eigen::Vector2d;

/// Square planar region [0, side]^2.
struct Region {
    double side_length = 10'000.0;  // m

    double area() const { return side_length * side_length; }
    bool contains(const Vec2& p) const {
        return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= side_length && p.y() <= side_length;
    }
};

struct Node {
    int id = 0;
    Vec2 position = Vec2::Zero();
    double radar_range = 2000.0;  // radius of the covered disk, m
    sensing::EsmLinkParams esm_link;
    sensing::RadarInterceptParams intercept_params;
};

struct TargetTruth {
    int id = 0;
    markov::Kinematics kinematic_state = markov::Kinematics::Zero();
    int motion_state = 0;
    int signal_state = 0;
    int class_id = 0;
    int birth_time = 0;
    bool alive = true;
    double turn_rate = 0.0;  // signed rate for the current constant-turn sojourn, rad/s

    Vec2 position() const { return {kinematic_state(0), kinematic_state(2)}; }
    Vec2 velocity() const { return {kinematic_state(1), kinematic_state(3)}; }
};

struct SceneConfig {
    double node_density = 0.2e-6;    // per m^2
    double target_density = 0.3e-6;  // per m^2
    double survival_probability = 0.98;
    double false_alarm_rate = 1.0;  // expected false alarms per radar scan per node
    double step_duration = 1.0;     // s
    double radar_range = 2000.0;    // m
    double min_speed = 10.0;        // m/s
    double max_speed = 40.0;        // m/s
    bool planar = true;             // z, vz frozen at 0; the only supported mode for now
    sensing::EsmLinkParams esm_link;
    sensing::RadarInterceptParams intercept_params;

    void validate() const;
};

struct SceneState {
    Region region;
    std::vector<Node> nodes;
    std::vector<TargetTruth> targets;  // alive targets only
    int step = 0;
    int next_target_id = 0;

    const TargetTruth* find_target(int id) const;
};

/// Poisson point process draw of nodes and targets; classes uniform over the
/// family, chain states from the class stationary distributions.
SceneState generate_scene(const SceneConfig& config, const Region& region, const markov::TargetFamily& family, Rng& rng);

/// Survival thinning with probability p_s followed by Poisson((1 - p_s) * lambda_M * |B|) births,
/// which keeps the expected alive count at lambda_M * |B|.
void step_lifecycle(SceneState& scene, const SceneConfig& config, const markov::TargetFamily& family, Rng& rng);

/// Moves every alive target one step under its current motion state, then steps
/// both chains. Targets reflect off the region boundary.
void advance_targets(SceneState& scene, const SceneConfig& config, const markov::TargetFamily& family, Rng& rng);

/// Full simulation tick: lifecycle, motion, step counter.
void step_scene(SceneState& scene, const SceneConfig& config, const markov::TargetFamily& family, Rng& rng);

/// 1 - exp(-lambda_N * E|C_n|).
double coverage_probability(double node_density, double mean_cover_area);

/// Alive targets within the node's radar range (inclusive), by id, in scene order.
std::vector<int> covered_targets(const Node& node, const SceneState& scene);

/// Mean age (seconds) of alive targets; 0 when none.
double mean_target_age(const SceneState& scene, double dt);

void write_snapshot_header(std::ostream& out);
/// One row per alive target: step,target_id,class,x,y,vx,vy,motion_state,signal_state
void write_snapshot_rows(std::ostream& out, const SceneState& scene);

}  // namespace crn::scene
