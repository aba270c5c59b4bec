#include "crn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace crn::experiment {

namespace {

enum Stream : std::uint64_t {
    kFamilyStream = 1,
    kSceneStream = 2,
    kSensingStream = 3,
    kDecisionStream = 4,
    kLatencyStream = 5,
    kClusterStream = 6,
    kTrialStream = 7,
};

constexpr double kDegree = std::numbers::pi / 180.0;

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json link_json(const sensing::EsmLinkParams& p) {
    return {{"target_tx_power", p.target_tx_power}, {"target_tx_gain", p.target_tx_gain}, {"rx_gain", p.rx_gain},
            {"wavelength", p.wavelength},           {"losses", p.losses},                 {"noise_figure", p.noise_figure},
            {"bandwidth", p.bandwidth},             {"noise_temp", p.noise_temp}};
}

void read_link(const json& j, sensing::EsmLinkParams& p) {
    read(j, "target_tx_power", p.target_tx_power);
    read(j, "target_tx_gain", p.target_tx_gain);
    read(j, "rx_gain", p.rx_gain);
    read(j, "wavelength", p.wavelength);
    read(j, "losses", p.losses);
    read(j, "noise_figure", p.noise_figure);
    read(j, "bandwidth", p.bandwidth);
    read(j, "noise_temp", p.noise_temp);
}

json intercept_json(const sensing::RadarInterceptParams& p) {
    return {{"transmit_power", p.transmit_power}, {"transmit_gain", p.transmit_gain}, {"intercept_gain", p.intercept_gain},
            {"one_way_loss", p.one_way_loss},     {"system_loss", p.system_loss},     {"wavelength", p.wavelength},
            {"noise_figure", p.noise_figure},     {"bandwidth", p.bandwidth},         {"required_snr", p.required_snr},
            {"noise_temp", p.noise_temp}};
}

void read_intercept(const json& j, sensing::RadarInterceptParams& p) {
    read(j, "transmit_power", p.transmit_power);
    read(j, "transmit_gain", p.transmit_gain);
    read(j, "intercept_gain", p.intercept_gain);
    read(j, "one_way_loss", p.one_way_loss);
    read(j, "system_loss", p.system_loss);
    read(j, "wavelength", p.wavelength);
    read(j, "noise_figure", p.noise_figure);
    read(j, "bandwidth", p.bandwidth);
    read(j, "required_snr", p.required_snr);
    read(j, "noise_temp", p.noise_temp);
}

double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Minimum-cost assignment of rows to columns for a square cost matrix.
double assignment_cost(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    if (n == 0) return 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    for (std::size_t j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
    return total;
}

// What a node reports to the fusion center. `truth_class` is carried for scoring only.
struct FcEvent {
    enum class Kind { Motion, Signal, Reward };
    Kind kind = Kind::Motion;
    int node = 0;
    int track = 0;
    int step = 0;
    scene::Vec2 position = scene::Vec2::Zero();
    int state = 0;
    policy::Mode mode = policy::Mode::ActiveRadar;
    double reward = 0.0;
    int truth_class = -1;
};

struct FcRecord {
    classes::ObservationLog motion;
    classes::ObservationLog signal;
    scene::Vec2 last_position = scene::Vec2::Zero();
    int last_step = -1;
    std::map<int, int> class_votes;

    int truth_class() const {
        int best = -1, votes = 0;
        for (const auto& [c, n] : class_votes)
            if (n > votes) best = c, votes = n;
        return best;
    }
};

// Fusion-center view of the epoch's targets, built from delivered reports.
class FcLedger {
public:
    explicit FcLedger(double gate) : gate_(gate) {}

    void ingest(const FcEvent& e) {
        const auto key = std::make_pair(e.node, e.track);
        std::size_t idx = 0;
        if (auto it = links_.find(key); it != links_.end()) {
            idx = it->second;
        } else {
            idx = find_nearby(e);
            links_.emplace(key, idx);
        }
        auto& r = records_[idx];
        if (e.kind == FcEvent::Kind::Motion)
            r.motion.merge(e.step, e.state);
        else
            r.signal.merge(e.step, e.state);
        if (e.step >= r.last_step) {
            r.last_step = e.step;
            r.last_position = e.position;
        }
        if (e.truth_class >= 0) ++r.class_votes[e.truth_class];
    }

    const std::vector<FcRecord>& records() const { return records_; }

private:
    std::size_t find_nearby(const FcEvent& e) {
        std::size_t best = records_.size();
        double best_d = gate_;
        for (std::size_t i = 0; i < records_.size(); ++i) {
            if (std::abs(records_[i].last_step - e.step) > 2) continue;
            const double d = (records_[i].last_position - e.position).norm();
            if (d <= best_d) best = i, best_d = d;
        }
        if (best == records_.size()) {
            records_.emplace_back();
            records_.back().last_position = e.position;
            records_.back().last_step = e.step;
        }
        return best;
    }

    double gate_;
    std::vector<FcRecord> records_;
    std::map<std::pair<int, int>, std::size_t> links_;
};

struct TruthLink {
    int target = -1;
    int class_id = -1;
    double distance = 0.0;
};

TruthLink nearest_truth(const scene::SceneState& sc, const scene::Vec2& p, double gate) {
    TruthLink best;
    double best_d = gate;
    for (const auto& t : sc.targets) {
        const double d = (t.position() - p).norm();
        if (d <= best_d) {
            best_d = d;
            best = {t.id, t.class_id, d};
        }
    }
    return best;
}

const classes::EstimatedClass* find_class(const ClassMemory& memory, int class_id, std::size_t* index = nullptr) {
    for (std::size_t i = 0; i < memory.classes.size(); ++i)
        if (memory.classes[i].class_id == class_id) {
            if (index) *index = i;
            return &memory.classes[i];
        }
    return nullptr;
}

std::vector<int> states_of(const std::vector<std::pair<int, int>>& history) {
    std::vector<int> out;
    out.reserve(history.size());
    for (const auto& [step, state] : history) out.push_back(state);
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(12);
    return out;
}

}  // namespace

std::string policy_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::RadarOnly: return "RadarOnly";
        case PolicyKind::RandomP: return "RandomP";
        case PolicyKind::Centralized: return "Centralized";
        case PolicyKind::Distributed: return "Distributed";
    }
    return "unknown";
}

PolicyKind policy_from_name(const std::string& name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (auto k : {PolicyKind::RadarOnly, PolicyKind::RandomP, PolicyKind::Centralized, PolicyKind::Distributed}) {
        std::string n;
        for (char c : policy_name(k)) n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (n == lower) return k;
    }
    throw std::invalid_argument("unknown policy: " + name);
}

bool uses_classes(PolicyKind kind) { return kind == PolicyKind::Centralized || kind == PolicyKind::Distributed; }

std::string RunSpec::label() const {
    if (latency_sigma == 0.0) return policy_name(policy);
    return policy_name(policy) + "_latency" + fmt(latency_sigma);
}

std::uint64_t RunSpec::stream_key() const {
    return static_cast<std::uint64_t>(policy) * 1'000'003ULL + static_cast<std::uint64_t>(std::llround(latency_sigma * 1000.0));
}

void CampaignConfig::validate() const {
    scene.validate();
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (epoch_steps < 1) throw std::invalid_argument("epoch_steps must be >= 1");
    if (!(region_side > 0.0)) throw std::invalid_argument("region_side must be > 0");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
    if (!(random_p >= 0.0 && random_p <= 1.0)) throw std::invalid_argument("random_p must be in [0, 1]");
    if (policies.empty()) throw std::invalid_argument("policy list is empty");
    for (double s : latency_sweep)
        if (!(s >= 0.0)) throw std::invalid_argument("latency sigma must be >= 0");
    if (formation.k_max < 1 || formation.restarts < 1 || formation.null_draws < 0) throw std::invalid_argument("invalid formation options");
    if (!(error_gate > 0.0) || !(ospa_cutoff > 0.0) || !(ospa_order >= 1.0))
        throw std::invalid_argument("invalid metric parameters");
    if (threads < 0) throw std::invalid_argument("threads must be >= 0");
}

std::vector<RunSpec> CampaignConfig::runs() const {
    std::vector<RunSpec> out;
    for (auto p : policies) out.push_back({p, 0.0});
    if (std::find(policies.begin(), policies.end(), PolicyKind::Centralized) != policies.end())
        for (double s : latency_sweep)
            if (s > 0.0) out.push_back({PolicyKind::Centralized, s});
    return out;
}

void to_json(json& j, const CampaignConfig& c) {
    const auto& s = c.scene;
    const auto& f = c.filter;
    std::vector<std::string> policies;
    for (auto p : c.policies) policies.push_back(policy_name(p));
    j = json{
        {"scene",
         {{"node_density", s.node_density},
          {"target_density", s.target_density},
          {"survival_probability", s.survival_probability},
          {"false_alarm_rate", s.false_alarm_rate},
          {"step_duration", s.step_duration},
          {"radar_range", s.radar_range},
          {"min_speed", s.min_speed},
          {"max_speed", s.max_speed},
          {"esm_link", link_json(s.esm_link)},
          {"intercept_params", intercept_json(s.intercept_params)}}},
        {"region_side", c.region_side},
        {"family",
         {{"n_classes", c.family.n_classes},
          {"motion_states", c.family.motion_states},
          {"signal_states", c.family.signal_states},
          {"separation", c.family.separation},
          {"entry_floor", c.family.entry_floor},
          {"max_attempts", c.family.max_attempts}}},
        {"family_path", c.family_path},
        {"radar",
         {{"detection_probability", c.radar.detection_probability},
          {"mean_extent", c.radar.mean_extent},
          {"position_sigma", c.radar.position_sigma}}},
        {"esm",
         {{"p_space", c.esm.factors.p_space},
          {"p_freq", c.esm.factors.p_freq},
          {"p_time", c.esm.factors.p_time},
          {"bearing_sigma_deg", c.esm.bearing_sigma / kDegree}}},
        {"filter",
         {{"survival_probability", f.survival_probability},
          {"birth_weight", f.birth_weight},
          {"birth_position_sigma", f.birth_position_sigma},
          {"birth_velocity_sigma", f.birth_velocity_sigma},
          {"process_noise", f.process_noise},
          {"prune_threshold", f.prune_threshold},
          {"merge_threshold", f.merge_threshold},
          {"max_components", f.max_components},
          {"extraction_threshold", f.extraction_threshold},
          {"extraction_max_sigma", f.extraction_max_sigma},
          {"cluster_gate", f.cluster_gate},
          {"track_gate", f.track_gate},
          {"confirm_hits", f.confirm_hits},
          {"confirm_window", f.confirm_window},
          {"delete_misses", f.delete_misses},
          {"default_self_transition", f.default_self_transition},
          {"infer_silence", f.infer_silence}}},
        {"formation",
         {{"k_max", c.formation.k_max},
          {"restarts", c.formation.restarts},
          {"max_iterations", c.formation.max_iterations},
          {"silhouette_floor", c.formation.silhouette_floor},
          {"null_draws", c.formation.null_draws},
          {"null_restarts", c.formation.null_restarts},
          {"p", c.formation.p}}},
        {"gamma", c.gamma},
        {"random_p", c.random_p},
        {"bearing_gate_deg", c.bearing_gate_deg},
        {"association_min_signal", c.association_min_signal},
        {"formation_min_motion", c.formation_min_motion},
        {"formation_min_signal", c.formation_min_signal},
        {"fc_merge_gate", c.fc_merge_gate},
        {"error_gate", c.error_gate},
        {"ospa_cutoff", c.ospa_cutoff},
        {"ospa_order", c.ospa_order},
        {"policies", policies},
        {"latency_sweep", c.latency_sweep},
        {"epochs", c.epochs},
        {"epoch_steps", c.epoch_steps},
        {"replicates", c.replicates},
        {"master_seed", c.master_seed},
        {"output_dir", c.output_dir},
        {"threads", c.threads},
    };
}

CampaignConfig config_from_json(const json& j) {
    CampaignConfig c;
    try {
        if (j.contains("scene")) {
            const auto& s = j.at("scene");
            read(s, "node_density", c.scene.node_density);
            read(s, "target_density", c.scene.target_density);
            read(s, "survival_probability", c.scene.survival_probability);
            read(s, "false_alarm_rate", c.scene.false_alarm_rate);
            read(s, "step_duration", c.scene.step_duration);
            read(s, "radar_range", c.scene.radar_range);
            read(s, "min_speed", c.scene.min_speed);
            read(s, "max_speed", c.scene.max_speed);
            if (s.contains("esm_link")) read_link(s.at("esm_link"), c.scene.esm_link);
            if (s.contains("intercept_params")) read_intercept(s.at("intercept_params"), c.scene.intercept_params);
        }
        read(j, "region_side", c.region_side);
        if (j.contains("family")) {
            const auto& f = j.at("family");
            read(f, "n_classes", c.family.n_classes);
            read(f, "motion_states", c.family.motion_states);
            read(f, "signal_states", c.family.signal_states);
            read(f, "separation", c.family.separation);
            read(f, "entry_floor", c.family.entry_floor);
            read(f, "max_attempts", c.family.max_attempts);
        }
        read(j, "family_path", c.family_path);
        if (j.contains("radar")) {
            const auto& r = j.at("radar");
            read(r, "detection_probability", c.radar.detection_probability);
            read(r, "mean_extent", c.radar.mean_extent);
            read(r, "position_sigma", c.radar.position_sigma);
        }
        if (j.contains("esm")) {
            const auto& e = j.at("esm");
            read(e, "p_space", c.esm.factors.p_space);
            read(e, "p_freq", c.esm.factors.p_freq);
            read(e, "p_time", c.esm.factors.p_time);
            if (e.contains("bearing_sigma_deg")) c.esm.bearing_sigma = e.at("bearing_sigma_deg").get<double>() * kDegree;
        }
        if (j.contains("filter")) {
            const auto& f = j.at("filter");
            auto& p = c.filter;
            read(f, "survival_probability", p.survival_probability);
            read(f, "birth_weight", p.birth_weight);
            read(f, "birth_position_sigma", p.birth_position_sigma);
            read(f, "birth_velocity_sigma", p.birth_velocity_sigma);
            read(f, "process_noise", p.process_noise);
            read(f, "prune_threshold", p.prune_threshold);
            read(f, "merge_threshold", p.merge_threshold);
            read(f, "max_components", p.max_components);
            read(f, "extraction_threshold", p.extraction_threshold);
            read(f, "extraction_max_sigma", p.extraction_max_sigma);
            read(f, "cluster_gate", p.cluster_gate);
            read(f, "track_gate", p.track_gate);
            read(f, "confirm_hits", p.confirm_hits);
            read(f, "confirm_window", p.confirm_window);
            read(f, "delete_misses", p.delete_misses);
            read(f, "default_self_transition", p.default_self_transition);
            read(f, "infer_silence", p.infer_silence);
        }
        if (j.contains("formation")) {
            const auto& f = j.at("formation");
            read(f, "k_max", c.formation.k_max);
            read(f, "restarts", c.formation.restarts);
            read(f, "max_iterations", c.formation.max_iterations);
            read(f, "silhouette_floor", c.formation.silhouette_floor);
            read(f, "null_draws", c.formation.null_draws);
            read(f, "null_restarts", c.formation.null_restarts);
            read(f, "p", c.formation.p);
        }
        read(j, "gamma", c.gamma);
        read(j, "random_p", c.random_p);
        read(j, "bearing_gate_deg", c.bearing_gate_deg);
        read(j, "association_min_signal", c.association_min_signal);
        read(j, "formation_min_motion", c.formation_min_motion);
        read(j, "formation_min_signal", c.formation_min_signal);
        read(j, "fc_merge_gate", c.fc_merge_gate);
        read(j, "error_gate", c.error_gate);
        read(j, "ospa_cutoff", c.ospa_cutoff);
        read(j, "ospa_order", c.ospa_order);
        if (j.contains("policies")) {
            c.policies.clear();
            for (const auto& p : j.at("policies")) c.policies.push_back(policy_from_name(p.get<std::string>()));
        }
        read(j, "latency_sweep", c.latency_sweep);
        read(j, "epochs", c.epochs);
        read(j, "epoch_steps", c.epoch_steps);
        read(j, "replicates", c.replicates);
        read(j, "master_seed", c.master_seed);
        read(j, "output_dir", c.output_dir);
        read(j, "threads", c.threads);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

CampaignConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

std::vector<double> ReplicateReport::tracking_errors() const {
    std::vector<double> out;
    for (const auto& e : epochs) out.insert(out.end(), e.tracking_errors.begin(), e.tracking_errors.end());
    return out;
}

double ReplicateReport::median_error() const { return median_of(tracking_errors()); }

double ReplicateReport::radar_utilization() const {
    double radar = 0.0, total = 0.0;
    for (const auto& e : epochs)
        for (double u : e.node_utilization) radar += u, total += 1.0;
    return total > 0.0 ? radar / total : 0.0;
}

std::vector<double> ReplicateReport::intercept_ranges() const {
    std::vector<double> out;
    for (const auto& e : epochs) out.insert(out.end(), e.intercept_ranges.begin(), e.intercept_ranges.end());
    return out;
}

std::vector<const ReplicateReport*> CampaignReport::of(const RunSpec& run) const {
    std::vector<const ReplicateReport*> out;
    for (const auto& r : results)
        if (r.run.policy == run.policy && r.run.latency_sigma == run.latency_sigma) out.push_back(&r);
    return out;
}

markov::TargetFamily replicate_family(const CampaignConfig& config, int replicate) {
    if (!config.family_path.empty()) return markov::load_family(config.family_path);
    Rng rng(derive_seed(config.master_seed, {static_cast<std::uint64_t>(replicate), kFamilyStream}));
    return markov::sample_family(config.family, rng);
}

tracking::FilterParams node_filter_params(const CampaignConfig& config, const scene::Node& node) {
    tracking::FilterParams p = config.filter;
    p.detection_probability = config.radar.detection_probability;
    p.false_alarm_rate = config.scene.false_alarm_rate;
    p.clutter_density = 1.0 / (std::numbers::pi * node.radar_range * node.radar_range);
    p.birth_center = node.position;
    p.measurement_sigma = config.radar.position_sigma;
    p.dt = config.scene.step_duration;
    return p;
}

EpochReport run_epoch(const CampaignConfig& config, const markov::TargetFamily& family, const RunSpec& run, int replicate,
                      int epoch, ClassMemory& memory, TraceSink* trace) {
    const auto rep = static_cast<std::uint64_t>(replicate);
    const auto ep = static_cast<std::uint64_t>(epoch);
    const auto key = run.stream_key();
    Rng scene_rng(derive_seed(config.master_seed, {rep, ep, kSceneStream}));
    Rng sensing_rng(derive_seed(config.master_seed, {rep, ep, kSensingStream, key}));
    Rng decision_rng(derive_seed(config.master_seed, {rep, ep, kDecisionStream, key}));
    Rng latency_rng(derive_seed(config.master_seed, {rep, ep, kLatencyStream, key}));
    Rng cluster_rng(derive_seed(config.master_seed, {rep, ep, kClusterStream, key}));

    const double dt = config.scene.step_duration;
    const bool class_policy = uses_classes(run.policy);
    const double bearing_gate = config.bearing_gate_deg * kDegree;
    const std::size_t n_motion = family.motion_states();
    const std::size_t n_signal = family.signal_states();

    auto sc = scene::generate_scene(config.scene, scene::Region{config.region_side}, family, scene_rng);
    const std::size_t n_nodes = sc.nodes.size();

    std::vector<tracking::NodeFilter> filters;
    filters.reserve(n_nodes);
    for (const auto& node : sc.nodes) {
        filters.emplace_back(node_filter_params(config, node));
        if (class_policy)
            for (const auto& c : memory.classes) filters.back().set_tuning(c.class_id, {c.motion_transition, std::nullopt});
    }
    std::vector<policy::BanditState> bandits(n_nodes);
    std::vector<int> radar_steps(n_nodes, 0);

    auto radar_params = config.radar;
    radar_params.false_alarm_rate = config.scene.false_alarm_rate;
    const policy::LatencyModel latency{run.latency_sigma};
    policy::DeliveryQueue<FcEvent> queue;
    FcLedger ledger(config.fc_merge_gate);

    EpochReport report;
    report.epoch = epoch;
    report.node_count = static_cast<int>(n_nodes);
    report.target_count = static_cast<int>(sc.targets.size());
    int association_correct = 0;
    double ospa_total = 0.0;
    int ospa_count = 0;
    const int step_offset = epoch * config.epoch_steps;

    for (int s = 0; s < config.epoch_steps; ++s) {
        if (s > 0) scene::step_scene(sc, config.scene, family, scene_rng);
        report.mean_age.push_back(scene::mean_target_age(sc, dt));
        if (trace && trace->truth) {
            std::ostringstream rows;
            scene::write_snapshot_rows(rows, sc);
            std::istringstream lines(rows.str());
            for (std::string line; std::getline(lines, line);) *trace->truth << epoch << ',' << line << '\n';
        }
        std::vector<scene::Vec2> truth_positions;
        truth_positions.reserve(sc.targets.size());
        for (const auto& t : sc.targets) truth_positions.push_back(t.position());

        for (std::size_t n = 0; n < n_nodes; ++n) {
            const auto& node = sc.nodes[n];
            auto& filter = filters[n];

            policy::Mode mode = policy::Mode::ActiveRadar;
            switch (run.policy) {
                case PolicyKind::RadarOnly:
                    mode = policy::baseline_select(policy::BaselineKind::RadarOnly, config.random_p, decision_rng);
                    break;
                case PolicyKind::RandomP:
                    mode = policy::baseline_select(policy::BaselineKind::RandomP, config.random_p, decision_rng);
                    break;
                case PolicyKind::Centralized:
                    bandits[n].t = s + 1;
                    mode = policy::ucb_select(bandits[n]);
                    break;
                case PolicyKind::Distributed: {
                    std::vector<policy::TrackAgeClass> inputs;
                    for (const auto& t : filter.tracks()) {
                        if (!t.confirmed()) continue;
                        policy::TrackAgeClass in{std::max(t.age, 1), std::nullopt};
                        if (t.class_assignment)
                            if (const auto* c = find_class(memory, *t.class_assignment))
                                in.class_motion_entropy = policy::shannon_entropy_normalized(c->motion_stationary.values());
                        inputs.push_back(in);
                    }
                    mode = policy::sample_mode(policy::distributed_utility(inputs, config.gamma), decision_rng);
                    break;
                }
            }
            const bool radar = mode == policy::Mode::ActiveRadar;
            if (radar) {
                const auto dets = sensing::radar_scan(node, sc, radar_params, sensing_rng);
                filter.step(s, true, dets);
                ++radar_steps[n];
            } else {
                const auto obs = sensing::esm_scan(node, sc, config.esm, sensing_rng);
                filter.step(s, false, {});
                filter.record_signals(s, obs, bearing_gate);
            }
            if (trace && trace->decisions)
                *trace->decisions << step_offset + s << ',' << node.id << ',' << policy::mode_name(mode) << ','
                                  << run.label() << '\n';

            // Online class association from the node's own logs.
            if (class_policy && !memory.classes.empty()) {
                for (const auto& t : filter.tracks()) {
                    if (!t.confirmed() || static_cast<int>(t.signal_history.size()) < config.association_min_signal) continue;
                    const auto motion = classes::estimate_stationary(states_of(t.motion_history), n_motion);
                    const auto signal = classes::estimate_stationary(states_of(t.signal_history), n_signal);
                    const auto assigned = classes::associate_class(motion.values(), signal.values(), memory.classes);
                    if (!assigned) continue;
                    if (t.class_assignment != assigned) filter.assign_class(t.track_id, *assigned);
                    const auto link = nearest_truth(sc, t.position(), config.error_gate);
                    if (link.target < 0) continue;
                    std::size_t idx = 0;
                    find_class(memory, *assigned, &idx);
                    ++report.association_events;
                    if (idx < memory.class_truth.size() && memory.class_truth[idx] == link.class_id) ++association_correct;
                }
            }

            // Reports to the fusion center.
            std::vector<policy::TrackEstimates> estimates;
            for (const auto& t : filter.tracks()) {
                if (!t.confirmed()) continue;
                const auto link = nearest_truth(sc, t.position(), config.error_gate);
                const auto& history = radar ? t.motion_history : t.signal_history;
                if (!history.empty() && history.back().first == s) {
                    FcEvent e;
                    e.kind = radar ? FcEvent::Kind::Motion : FcEvent::Kind::Signal;
                    e.node = node.id;
                    e.track = t.track_id;
                    e.step = s;
                    e.position = t.position();
                    e.state = history.back().second;
                    e.truth_class = link.class_id;
                    queue.push(policy::apply_latency(e, s, latency, latency_rng, dt));
                }
                if (run.policy == PolicyKind::Centralized)
                    estimates.push_back({classes::estimate_stationary(states_of(t.motion_history), n_motion).vector(),
                                         classes::estimate_stationary(states_of(t.signal_history), n_signal).vector()});
            }
            if (run.policy == PolicyKind::Centralized) {
                const auto [r_radar, r_esm] = policy::centralized_reward(estimates);
                FcEvent e;
                e.kind = FcEvent::Kind::Reward;
                e.node = static_cast<int>(n);
                e.step = s;
                e.mode = mode;
                e.reward = radar ? r_radar : r_esm;
                queue.push(policy::apply_latency(e, s, latency, latency_rng, dt));
            }

            // Metrics.
            const auto samples = tracking_error_samples(filter.tracks(), truth_positions, config.error_gate);
            report.tracking_errors.insert(report.tracking_errors.end(), samples.errors.begin(), samples.errors.end());
            report.spurious_estimates += samples.spurious;
            std::vector<scene::Vec2> estimates_xy, covered_xy;
            for (const auto& t : filter.tracks())
                if (t.confirmed()) estimates_xy.push_back(t.position());
            const double r2 = node.radar_range * node.radar_range;
            for (const auto& p : truth_positions)
                if ((p - node.position).squaredNorm() <= r2) covered_xy.push_back(p);
            if (!estimates_xy.empty() || !covered_xy.empty()) {
                ospa_total += ospa(estimates_xy, covered_xy, config.ospa_cutoff, config.ospa_order);
                ++ospa_count;
            }
            if (trace && trace->tracks)
                for (const auto& t : filter.tracks()) {
                    if (!t.confirmed()) continue;
                    const auto link = nearest_truth(sc, t.position(), config.error_gate);
                    *trace->tracks << step_offset + s << ',' << node.id << ',' << t.track_id << ',' << t.state(0) << ','
                                   << t.state(2) << ',' << t.state(1) << ',' << t.state(3) << ','
                                   << t.class_assignment.value_or(-1) << ',';
                    if (link.target >= 0)
                        *trace->tracks << link.distance;
                    else
                        *trace->tracks << "nan";
                    *trace->tracks << '\n';
                }
        }

        // Fusion-center event loop: the only place bandit statistics change.
        for (const auto& delivered : queue.drain(s)) {
            const auto& e = delivered.payload;
            if (e.kind == FcEvent::Kind::Reward)
                policy::ucb_record(bandits[static_cast<std::size_t>(e.node)], e.mode, e.reward);
            else
                ledger.ingest(e);
        }
    }

    for (std::size_t n = 0; n < n_nodes; ++n) {
        const double duty = static_cast<double>(radar_steps[n]) / static_cast<double>(config.epoch_steps);
        report.node_utilization.push_back(duty);
        report.intercept_ranges.push_back(sensing::max_intercept_range(sc.nodes[n].intercept_params, duty));
    }
    double util = 0.0;
    for (int r : radar_steps) util += r;
    report.radar_utilization = n_nodes ? util / (static_cast<double>(n_nodes) * config.epoch_steps) : 0.0;
    report.association_accuracy =
        report.association_events > 0 ? static_cast<double>(association_correct) / report.association_events : 0.0;
    report.ospa_mean = ospa_count > 0 ? ospa_total / ospa_count : 0.0;

    // Epoch end: class formation over everything delivered so far.
    if (class_policy) {
        for (const auto& r : ledger.records()) {
            if (static_cast<int>(r.motion.size()) < config.formation_min_motion ||
                static_cast<int>(r.signal.size()) < config.formation_min_signal)
                continue;
            memory.pool.push_back({r.motion.states(), r.signal.states()});
            memory.pool_truth.push_back(r.truth_class());
        }
        if (!memory.pool.empty()) {
            auto formed = classes::form_classes(memory.pool, n_motion, n_signal, config.formation, cluster_rng);
            std::vector<int> labels, truth;
            for (std::size_t i = 0; i < memory.pool.size(); ++i) {
                if (memory.pool_truth[i] < 0) continue;
                labels.push_back(formed.labels[i]);
                truth.push_back(memory.pool_truth[i]);
            }
            memory.class_truth = classes::majority_labels(labels, truth, formed.k);
            if (!labels.empty()) report.formation_accuracy = classes::majority_label_accuracy(labels, truth);
            memory.classes = std::move(formed.classes);
        }
    }
    report.class_count = static_cast<int>(memory.classes.size());
    return report;
}

ReplicateReport run_replicate(const CampaignConfig& config, const markov::TargetFamily& family, const RunSpec& run,
                              int replicate, TraceSink* trace) {
    config.validate();
    ReplicateReport out;
    out.run = run;
    out.replicate = replicate;
    ClassMemory memory;
    for (int e = 0; e < config.epochs; ++e) out.epochs.push_back(run_epoch(config, family, run, replicate, e, memory, trace));
    return out;
}

CampaignReport run_campaign(const CampaignConfig& config) {
    config.validate();
    const auto runs = config.runs();
    std::vector<markov::TargetFamily> families;
    families.reserve(static_cast<std::size_t>(config.replicates));
    for (int r = 0; r < config.replicates; ++r) families.push_back(replicate_family(config, r));

    CampaignReport report;
    report.config = config;
    const std::size_t reps = static_cast<std::size_t>(config.replicates);
    const std::size_t tasks = runs.size() * reps;
    report.results.resize(tasks);

    std::size_t workers = config.threads > 0 ? static_cast<std::size_t>(config.threads)
                                             : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, tasks);
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
        try {
            for (std::size_t i = next++; i < tasks; i = next++) {
                const auto& run = runs[i / reps];
                const int rep = static_cast<int>(i % reps);
                report.results[i] = run_replicate(config, families[static_cast<std::size_t>(rep)], run, rep);
            }
        } catch (...) {
            errors[w] = std::current_exception();
            next = tasks;
        }
    };
    if (workers <= 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return report;
}

void write_campaign_outputs(const CampaignReport& report, const std::string& output_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + output_dir);
    const auto& config = report.config;
    const auto runs = config.runs();

    {
        auto out = open_output(dir / "utilization.csv");
        out << "run,replicate,epoch,node,radar_share\n";
        for (const auto& r : report.results)
            for (const auto& e : r.epochs)
                for (std::size_t n = 0; n < e.node_utilization.size(); ++n)
                    out << r.run.label() << ',' << r.replicate << ',' << e.epoch << ',' << n << ',' << e.node_utilization[n]
                        << '\n';
    }
    {
        auto out = open_output(dir / "intercept_range.csv");
        out << "run,replicate,epoch,node,duty,max_intercept_range_m\n";
        for (const auto& r : report.results)
            for (const auto& e : r.epochs)
                for (std::size_t n = 0; n < e.intercept_ranges.size(); ++n)
                    out << r.run.label() << ',' << r.replicate << ',' << e.epoch << ',' << n << ',' << e.node_utilization[n]
                        << ',' << e.intercept_ranges[n] << '\n';
    }
    {
        auto out = open_output(dir / "tracking_error_ecdf.csv");
        out << "run,latency_sigma,error_m,cdf\n";
        constexpr std::size_t kMaxPoints = 400;
        for (const auto& run : runs) {
            std::vector<double> pooled;
            for (const auto* r : report.of(run)) {
                const auto e = r->tracking_errors();
                pooled.insert(pooled.end(), e.begin(), e.end());
            }
            if (pooled.empty()) continue;
            const auto curve = ecdf(pooled);
            const std::size_t stride = std::max<std::size_t>(1, curve.size() / kMaxPoints);
            for (std::size_t i = 0; i < curve.size(); i += stride)
                out << run.label() << ',' << run.latency_sigma << ',' << curve[i].first << ',' << curve[i].second << '\n';
            if ((curve.size() - 1) % stride != 0)
                out << run.label() << ',' << run.latency_sigma << ',' << curve.back().first << ',' << curve.back().second
                    << '\n';
        }
    }
    {
        auto out = open_output(dir / "tracking_error_replicates.csv");
        out << "run,latency_sigma,replicate,median_error_m,mean_error_m,samples,spurious,ospa_m\n";
        for (const auto& r : report.results) {
            const auto errors = r.tracking_errors();
            int spurious = 0;
            double ospa_sum = 0.0;
            for (const auto& e : r.epochs) spurious += e.spurious_estimates, ospa_sum += e.ospa_mean;
            out << r.run.label() << ',' << r.run.latency_sigma << ',' << r.replicate << ',' << median_of(errors) << ','
                << mean_of(errors) << ',' << errors.size() << ',' << spurious << ','
                << ospa_sum / static_cast<double>(r.epochs.size()) << '\n';
        }
    }
    {
        auto out = open_output(dir / "class_accuracy.csv");
        out << "run,replicate,epoch,formation_accuracy,association_accuracy,association_events,class_count\n";
        for (const auto& r : report.results) {
            if (!uses_classes(r.run.policy)) continue;
            for (const auto& e : r.epochs) {
                out << r.run.label() << ',' << r.replicate << ',' << e.epoch << ',';
                if (e.formation_accuracy)
                    out << *e.formation_accuracy;
                else
                    out << "nan";
                out << ',' << e.association_accuracy << ',' << e.association_events << ',' << e.class_count << '\n';
            }
        }
    }
    {
        auto out = open_output(dir / "mean_age.csv");
        out << "epoch,step,mean_age_s\n";
        const auto first = report.of(runs.front());
        if (!first.empty()) {
            for (int e = 0; e < config.epochs; ++e)
                for (int s = 0; s < config.epoch_steps; ++s) {
                    double sum = 0.0;
                    for (const auto* r : first) sum += r->epochs[static_cast<std::size_t>(e)].mean_age[static_cast<std::size_t>(s)];
                    out << e << ',' << s << ',' << sum / static_cast<double>(first.size()) << '\n';
                }
        }
    }

    json summary = json::object();
    for (const auto& run : runs) {
        const auto reps = report.of(run);
        std::vector<double> pooled, medians, utils, ranges, formation, association;
        for (const auto* r : reps) {
            const auto e = r->tracking_errors();
            pooled.insert(pooled.end(), e.begin(), e.end());
            medians.push_back(r->median_error());
            utils.push_back(r->radar_utilization());
            const auto ir = r->intercept_ranges();
            ranges.insert(ranges.end(), ir.begin(), ir.end());
            const auto& last = r->epochs.back();
            if (last.formation_accuracy) formation.push_back(*last.formation_accuracy);
            if (uses_classes(run.policy)) association.push_back(last.association_accuracy);
        }
        json entry{{"policy", policy_name(run.policy)},
                   {"latency_sigma", run.latency_sigma},
                   {"median_error_m", pooled.empty() ? json(nullptr) : json(median_of(pooled))},
                   {"replicate_median_error_m", medians.empty() ? json(nullptr) : json(median_of(medians))},
                   {"radar_utilization", mean_of(utils)},
                   {"mean_intercept_range_m", mean_of(ranges)}};
        if (!formation.empty()) entry["final_formation_accuracy"] = mean_of(formation);
        if (!association.empty()) entry["final_association_accuracy"] = mean_of(association);
        summary[run.label()] = entry;
    }
    json doc{{"master_seed", config.master_seed}, {"replicates", config.replicates}, {"runs", summary}};
    json cfg;
    to_json(cfg, config);
    doc["config"] = cfg;
    auto out = open_output(dir / "summary.json");
    out << doc.dump(2) << '\n';
}

void write_link_sweep(const CampaignConfig& config, const std::string& output_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + output_dir);
    {
        auto out = open_output(dir / "esm_snr.csv");
        out << "range_m,snr_db\n";
        for (int km = 1; km <= 200; ++km) out << km * 1000.0 << ',' << sensing::esm_snr_db(config.scene.esm_link, km * 1000.0) << '\n';
    }
    {
        auto out = open_output(dir / "intercept_range_vs_duty.csv");
        out << "duty,max_intercept_range_m\n";
        for (int i = 0; i <= 20; ++i) {
            const double duty = i / 20.0;
            out << duty << ',' << sensing::max_intercept_range(config.scene.intercept_params, duty) << '\n';
        }
    }
    auto out = open_output(dir / "link_summary.json");
    out << json{{"max_esm_range_m", sensing::max_esm_range(config.scene.esm_link)},
                {"max_intercept_range_full_duty_m", sensing::max_intercept_range(config.scene.intercept_params, 1.0)},
                {"intercept_probability", sensing::intercept_probability(config.esm.factors)}}
               .dump(2)
        << '\n';
}

ErrorSamples tracking_error_samples(std::span<const tracking::Track> tracks, std::span<const scene::Vec2> truth,
                                    double gate) {
    ErrorSamples out;
    for (const auto& t : tracks) {
        if (!t.confirmed()) continue;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : truth) best = std::min(best, (p - t.position()).norm());
        if (best <= gate)
            out.errors.push_back(best);
        else
            ++out.spurious;
    }
    return out;
}

std::vector<std::pair<double, double>> ecdf(std::span<const double> samples) {
    if (samples.empty()) throw std::invalid_argument("ecdf: no samples");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::pair<double, double>> out;
    const double n = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
        out.emplace_back(sorted[i], static_cast<double>(i + 1) / n);
    }
    return out;
}

double ospa(std::span<const scene::Vec2> estimates, std::span<const scene::Vec2> truth, double cutoff, double order) {
    if (!(cutoff > 0.0) || !(order >= 1.0)) throw std::invalid_argument("ospa: invalid cutoff or order");
    const std::size_t m = estimates.size(), n = truth.size();
    const std::size_t size = std::max(m, n);
    if (size == 0) return 0.0;
    const double penalty = std::pow(cutoff, order);
    std::vector<std::vector<double>> cost(size, std::vector<double>(size, penalty));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cost[i][j] = std::pow(std::min(cutoff, (estimates[i] - truth[j]).norm()), order);
    return std::pow(assignment_cost(cost) / static_cast<double>(size), 1.0 / order);
}

std::vector<double> mean_age_series(scene::SceneState initial, const scene::SceneConfig& config,
                                    const markov::TargetFamily& family, int steps, Rng& rng) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    out.push_back(scene::mean_target_age(initial, config.step_duration));
    for (int s = 0; s < steps; ++s) {
        scene::step_scene(initial, config, family, rng);
        out.push_back(scene::mean_target_age(initial, config.step_duration));
    }
    return out;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double mx = mean_of(rx), my = mean_of(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

tracking::ClassTuning tuning_from_class(const markov::TargetClassSpec& cls, double nominal_speed) {
    tracking::ClassTuning tuning{cls.motion_transition.matrix(), std::nullopt};
    std::vector<double> q = cls.process_noise_scale;
    const auto turn = static_cast<std::size_t>(markov::MotionModel::ConstantTurn);
    if (turn < q.size()) q[turn] = std::hypot(q[turn], nominal_speed * cls.turn_rate);
    tuning.process_noise = std::move(q);
    return tuning;
}

TunedTrialResult tuned_filter_trial(std::uint64_t seed, const TunedTrialOptions& options) {
    Rng rng(derive_seed(seed, {kTrialStream}));
    markov::FamilyOptions fo;
    fo.n_classes = 1;
    const auto family = markov::sample_family(fo, rng);
    const auto& cls = family.classes.front();

    scene::SceneConfig sc_config;
    sc_config.survival_probability = 1.0;
    sc_config.radar_range = options.radar_range;
    scene::SceneState sc;
    sc.region.side_length = options.region_side;
    const scene::Vec2 center(options.region_side / 2.0, options.region_side / 2.0);
    scene::Node node;
    node.position = center;
    node.radar_range = options.radar_range;
    sc.nodes.push_back(node);
    for (int i = 0; i < options.targets; ++i) {
        scene::TargetTruth t;
        t.id = sc.next_target_id++;
        t.class_id = cls.class_id;
        t.motion_state = rng.categorical(cls.motion_stationary.values());
        t.signal_state = 0;
        const double r = 0.6 * options.radar_range * std::sqrt(rng.uniform());
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double speed = rng.uniform(sc_config.min_speed, sc_config.max_speed);
        const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
        t.kinematic_state << center.x() + r * std::cos(a), speed * std::cos(heading), center.y() + r * std::sin(a),
            speed * std::sin(heading), 0.0, 0.0;
        t.turn_rate = rng.bernoulli(0.5) ? cls.turn_rate : -cls.turn_rate;
        sc.targets.push_back(t);
    }

    CampaignConfig config;
    config.scene = sc_config;
    const auto params = node_filter_params(config, node);
    tracking::NodeFilter untuned(params), tuned(params);
    tuned.set_tuning(cls.class_id, tuning_from_class(cls, 0.5 * (sc_config.min_speed + sc_config.max_speed)));

    sensing::RadarScanParams radar;
    std::vector<double> err_untuned, err_tuned;
    constexpr int kWarmup = 5;
    for (int s = 0; s < options.steps; ++s) {
        if (s > 0) scene::step_scene(sc, sc_config, family, rng);
        const auto dets = sensing::radar_scan(node, sc, radar, rng);
        untuned.step(s, true, dets);
        tuned.step(s, true, dets);
        for (const auto& t : tuned.tracks())
            if (t.confirmed() && !t.class_assignment) tuned.assign_class(t.track_id, cls.class_id);
        if (s < kWarmup) continue;
        std::vector<scene::Vec2> truth;
        for (const auto& t : sc.targets) truth.push_back(t.position());
        const auto a = tracking_error_samples(untuned.tracks(), truth, config.error_gate);
        const auto b = tracking_error_samples(tuned.tracks(), truth, config.error_gate);
        err_untuned.insert(err_untuned.end(), a.errors.begin(), a.errors.end());
        err_tuned.insert(err_tuned.end(), b.errors.begin(), b.errors.end());
    }
    TunedTrialResult out;
    out.untuned_error = mean_of(err_untuned);
    out.tuned_error = mean_of(err_tuned);
    out.samples = std::min(err_untuned.size(), err_tuned.size());
    return out;
}

}  // namespace crn::experiment
