#include "crn/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace crn::scene {

namespace {

TargetTruth spawn_target(SceneState& scene, const SceneConfig& config, const markov::TargetFamily& family, Rng& rng) {
    TargetTruth t;
    t.id = scene.next_target_id++;
    const auto& cls = family.classes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(family.classes.size()) - 1))];
    t.class_id = cls.class_id;
    t.motion_state = rng.categorical(cls.motion_stationary.values());
    t.signal_state = rng.categorical(cls.signal_stationary.values());
    const double side = scene.region.side_length;
    const double speed = rng.uniform(config.min_speed, config.max_speed);
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    t.kinematic_state << rng.uniform(0.0, side), speed * std::cos(heading), rng.uniform(0.0, side),
        speed * std::sin(heading), 0.0, 0.0;
    t.turn_rate = rng.bernoulli(0.5) ? cls.turn_rate : -cls.turn_rate;
    t.birth_time = scene.step;
    t.alive = true;
    return t;
}

// Mirror a coordinate and its velocity back into [0, side].
void reflect(double& x, double& v, double side) {
    for (int guard = 0; guard < 4 && (x < 0.0 || x > side); ++guard) {
        if (x < 0.0) {
            x = -x;
            v = -v;
        } else if (x > side) {
            x = 2.0 * side - x;
            v = -v;
        }
    }
    x = std::clamp(x, 0.0, side);
}

}  // namespace

void SceneConfig::validate() const {
    if (!(node_density >= 0.0) || !(target_density >= 0.0)) throw std::invalid_argument("densities must be >= 0");
    if (!(survival_probability > 0.0 && survival_probability <= 1.0))
        throw std::invalid_argument("survival_probability must be in (0, 1]");
    if (!(step_duration > 0.0)) throw std::invalid_argument("step_duration must be > 0");
    if (!(radar_range > 0.0)) throw std::invalid_argument("radar_range must be > 0");
    if (!(false_alarm_rate >= 0.0)) throw std::invalid_argument("false_alarm_rate must be >= 0");
    if (!(min_speed >= 0.0 && max_speed >= min_speed)) throw std::invalid_argument("invalid speed range");
    if (!planar) throw std::invalid_argument("only planar scenes are supported");
}

const TargetTruth* SceneState::find_target(int id) const {
    for (const auto& t : targets)
        if (t.id == id) return &t;
    return nullptr;
}

SceneState generate_scene(const SceneConfig& config, const Region& region, const markov::TargetFamily& family, Rng& rng) {
    config.validate();
    if (!(region.side_length > 0.0)) throw std::invalid_argument("region must have positive area");
    if (family.classes.empty()) throw std::invalid_argument("target family is empty");

    SceneState scene;
    scene.region = region;
    const int n_nodes = rng.poisson(config.node_density * region.area());
    scene.nodes.reserve(static_cast<std::size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) {
        Node n;
        n.id = i;
        n.position = {rng.uniform(0.0, region.side_length), rng.uniform(0.0, region.side_length)};
        n.radar_range = config.radar_range;
        n.esm_link = config.esm_link;
        n.intercept_params = config.intercept_params;
        scene.nodes.push_back(n);
    }
    const int n_targets = rng.poisson(config.target_density * region.area());
    scene.targets.reserve(static_cast<std::size_t>(n_targets));
    for (int i = 0; i < n_targets; ++i) scene.targets.push_back(spawn_target(scene, config, family, rng));
    return scene;
}

void step_lifecycle(SceneState& scene, const SceneConfig& config, const markov::TargetFamily& family, Rng& rng) {
    for (auto& t : scene.targets) t.alive = rng.bernoulli(config.survival_probability);
    std::erase_if(scene.targets, [](const TargetTruth& t) { return !t.alive; });
    const double birth_mean = (1.0 - config.survival_probability) * config.target_density * scene.region.area();
    const int births = rng.poisson(birth_mean);
    for (int i = 0; i < births; ++i) scene.targets.push_back(spawn_target(scene, config, family, rng));
}

void advance_targets(SceneState& scene, const SceneConfig& config, const markov::TargetFamily& family, Rng& rng) {
    const double side = scene.region.side_length;
    for (auto& t : scene.targets) {
        const auto& cls = family.find(t.class_id);
        t.kinematic_state = markov::propagate_kinematics(t.kinematic_state, t.motion_state, cls, config.step_duration,
                                                         t.turn_rate, rng);
        reflect(t.kinematic_state(0), t.kinematic_state(1), side);
        reflect(t.kinematic_state(2), t.kinematic_state(3), side);
        const int next_motion = markov::step_chain(t.motion_state, cls.motion_transition, rng);
        if (next_motion != t.motion_state && next_motion == static_cast<int>(markov::MotionModel::ConstantTurn))
            t.turn_rate = rng.bernoulli(0.5) ? cls.turn_rate : -cls.turn_rate;
        t.motion_state = next_motion;
        t.signal_state = markov::step_chain(t.signal_state, cls.signal_transition, rng);
    }
}

void step_scene(SceneState& scene, const SceneConfig& config, const markov::TargetFamily& family, Rng& rng) {
    ++scene.step;
    step_lifecycle(scene, config, family, rng);
    advance_targets(scene, config, family, rng);
}

double coverage_probability(double node_density, double mean_cover_area) {
    if (node_density < 0.0 || mean_cover_area < 0.0) throw std::invalid_argument("coverage_probability: negative input");
    if (std::isinf(mean_cover_area)) return node_density > 0.0 ? 1.0 : 0.0;
    return 1.0 - std::exp(-node_density * mean_cover_area);
}

std::vector<int> covered_targets(const Node& node, const SceneState& scene) {
    std::vector<int> out;
    const double r2 = node.radar_range * node.radar_range;
    for (const auto& t : scene.targets) {
        if (!t.alive) continue;
        if ((t.position() - node.position).squaredNorm() <= r2) out.push_back(t.id);
    }
    return out;
}

double mean_target_age(const SceneState& scene, double dt) {
    if (scene.targets.empty()) return 0.0;
    double total = 0.0;
    for (const auto& t : scene.targets) total += static_cast<double>(scene.step - t.birth_time) * dt;
    return total / static_cast<double>(scene.targets.size());
}

void write_snapshot_header(std::ostream& out) { out << "step,target_id,class,x,y,vx,vy,motion_state,signal_state\n"; }

void write_snapshot_rows(std::ostream& out, const SceneState& scene) {
    for (const auto& t : scene.targets) {
        const auto& k = t.kinematic_state;
        out << scene.step << ',' << t.id << ',' << t.class_id << ',' << k(0) << ',' << k(2) << ',' << k(1) << ',' << k(3)
            << ',' << t.motion_state << ',' << t.signal_state << '\n';
    }
}

}  // namespace crn::scene
