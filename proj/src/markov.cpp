#include "crn/markov.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "crn/metric.hpp"

namespace crn::markov {

namespace {

RowMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    RowMatrix m(n, n);
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        if (static_cast<Eigen::Index>(r.size()) != n) throw std::invalid_argument("transition matrix must be square");
        Eigen::Index j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

std::vector<double> sample_dirichlet_row(int n, double floor, Rng& rng) {
    std::vector<double> g(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& x : g) {
        x = rng.gamma(1.0);
        total += x;
    }
    const double scale = 1.0 - floor * n;
    for (auto& x : g) x = floor + scale * x / total;
    return g;
}

TransitionMatrix sample_matrix(int n, double floor, Rng& rng) {
    RowMatrix m(n, n);
    for (int i = 0; i < n; ++i) {
        auto row = sample_dirichlet_row(n, floor, rng);
        for (int j = 0; j < n; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
    }
    return TransitionMatrix(std::move(m));
}

double log_uniform(double lo, double hi, Rng& rng) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

}  // namespace

bool is_ergodic(const RowMatrix& p) {
    const auto n = p.rows();
    if (n == 0) return false;
    using BoolMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
    BoolMat a = (p.array() > 0.0).cast<int>();
    BoolMat acc = a;
    // Wielandt bound: a primitive n x n matrix has A^k > 0 for k = (n-1)^2 + 1.
    const Eigen::Index bound = (n - 1) * (n - 1) + 1;
    for (Eigen::Index k = 1; k <= bound; ++k) {
        if ((acc.array() > 0).all()) return true;
        acc = ((acc * a).array() > 0).cast<int>();
    }
    return (acc.array() > 0).all();
}

TransitionMatrix::TransitionMatrix(RowMatrix entries) : p_(std::move(entries)) {
    if (p_.rows() == 0 || p_.rows() != p_.cols()) throw std::invalid_argument("transition matrix must be square and non-empty");
    if (!p_.allFinite() || (p_.array() < 0.0).any()) throw std::invalid_argument("transition matrix entries must be finite and >= 0");
    for (Eigen::Index i = 0; i < p_.rows(); ++i)
        if (std::abs(p_.row(i).sum() - 1.0) > kRowTolerance) throw std::invalid_argument("transition matrix rows must sum to 1");
    if (!is_ergodic(p_)) throw std::invalid_argument("transition matrix is not ergodic");
}

TransitionMatrix::TransitionMatrix(std::initializer_list<std::initializer_list<double>> rows) : TransitionMatrix(from_rows(rows)) {}

TransitionMatrix TransitionMatrix::identity_like_sticky(std::size_t n, double self_probability) {
    RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if (n == 1) {
        m(0, 0) = 1.0;
        return TransitionMatrix(std::move(m));
    }
    const double off = (1.0 - self_probability) / static_cast<double>(n - 1);
    m.setConstant(off);
    m.diagonal().setConstant(self_probability);
    return TransitionMatrix(std::move(m));
}

StationaryDistribution::StationaryDistribution(std::vector<double> probabilities) : p_(std::move(probabilities)) {
    if (p_.empty()) throw std::invalid_argument("distribution must be non-empty");
    double total = 0.0;
    for (double x : p_) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("distribution entries must be finite and >= 0");
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("distribution must sum to 1");
}

StationaryDistribution StationaryDistribution::uniform(std::size_t n) {
    return StationaryDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

StationaryDistribution stationary_distribution(const TransitionMatrix& p) {
    const auto n = static_cast<Eigen::Index>(p.size());
    // Solve (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    Eigen::MatrixXd a = p.matrix().transpose() - Eigen::MatrixXd::Identity(n, n);
    a.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    Eigen::VectorXd pi = a.fullPivLu().solve(b);
    // Clip round-off negatives and renormalize.
    std::vector<double> out(static_cast<std::size_t>(n));
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = std::max(0.0, pi(i));
        total += out[static_cast<std::size_t>(i)];
    }
    for (auto& x : out) x /= total;
    return StationaryDistribution(std::move(out));
}

double stationary_residual(const StationaryDistribution& pi, const TransitionMatrix& p) {
    const auto n = p.size();
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += pi[i] * p(i, j);
        worst = std::max(worst, std::abs(s - pi[j]));
    }
    return worst;
}

int step_chain(int state, const TransitionMatrix& p, Rng& rng) {
    if (state < 0 || static_cast<std::size_t>(state) >= p.size()) throw std::out_of_range("chain state out of range");
    return rng.categorical(p.row(static_cast<std::size_t>(state)));
}

TargetClassSpec::TargetClassSpec(int id, TransitionMatrix motion, TransitionMatrix signal, std::vector<double> noise_scale,
                                 double turn_rate_rad_s)
    : class_id(id),
      motion_transition(std::move(motion)),
      signal_transition(std::move(signal)),
      motion_stationary(stationary_distribution(motion_transition)),
      signal_stationary(stationary_distribution(signal_transition)),
      process_noise_scale(std::move(noise_scale)),
      turn_rate(turn_rate_rad_s) {
    if (process_noise_scale.size() != motion_transition.size())
        throw std::invalid_argument("process_noise_scale must have one entry per motion state");
}

const TargetClassSpec& TargetFamily::find(int class_id) const {
    for (const auto& c : classes)
        if (c.class_id == class_id) return c;
    throw std::out_of_range("unknown class id " + std::to_string(class_id));
}

std::vector<std::string> default_motion_names(int n) {
    static const char* kNames[] = {"constant_velocity", "constant_acceleration", "constant_turn"};
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.emplace_back(i < 3 ? kNames[i] : "maneuver_" + std::to_string(i));
    return out;
}

std::vector<std::string> default_signal_names(int n) {
    static const char* kNames[] = {"silent", "voice", "telemetry", "beacon"};
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.emplace_back(i < 4 ? kNames[i] : "emission_" + std::to_string(i));
    return out;
}

TargetFamily sample_family(const FamilyOptions& options, Rng& rng) {
    if (options.n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
    if (!(options.separation > 0.0)) throw std::invalid_argument("separation must be > 0");
    if (options.motion_states < 1 || options.signal_states < 2) throw std::invalid_argument("state spaces too small");
    if (options.entry_floor * std::max(options.motion_states, options.signal_states) >= 1.0)
        throw std::invalid_argument("entry floor too large for the state space");

    TargetFamily family;
    family.motion_space = default_motion_names(options.motion_states);
    family.signal_space = default_signal_names(options.signal_states);

    int attempts = 0;
    while (static_cast<int>(family.classes.size()) < options.n_classes) {
        if (++attempts > options.max_attempts)
            throw ConstructionError("sample_family: separation " + std::to_string(options.separation) +
                                    " unattainable for " + std::to_string(options.n_classes) + " classes");
        auto motion = sample_matrix(options.motion_states, options.entry_floor, rng);
        auto signal = sample_matrix(options.signal_states, options.entry_floor, rng);
        std::vector<double> noise(static_cast<std::size_t>(options.motion_states));
        for (int i = 0; i < options.motion_states; ++i) {
            noise[static_cast<std::size_t>(i)] = (i == 1 || i > 2) ? log_uniform(1.0, 3.0, rng)   // accelerating
                                                                   : log_uniform(0.05, 0.3, rng);  // CV / CT jitter
        }
        const double turn = rng.uniform(3.0, 9.0) * std::numbers::pi / 180.0;
        TargetClassSpec candidate(static_cast<int>(family.classes.size()), std::move(motion), std::move(signal),
                                  std::move(noise), turn);
        bool separated = true;
        for (const auto& other : family.classes) {
            if (classes::wasserstein_p(candidate.motion_stationary.values(), other.motion_stationary.values(), 2.0) <
                    options.separation ||
                classes::wasserstein_p(candidate.signal_stationary.values(), other.signal_stationary.values(), 2.0) <
                    options.separation) {
                separated = false;
                break;
            }
        }
        if (separated) family.classes.push_back(std::move(candidate));
    }
    return family;
}

Kinematics propagate_kinematics_mean(const Kinematics& s, int motion_state, double dt, double turn_rate) {
    Kinematics out = s;
    const bool turning = motion_state == static_cast<int>(MotionModel::ConstantTurn) && std::abs(turn_rate) > 1e-12;
    if (!turning) {
        out(0) = s(0) + s(1) * dt;
        out(2) = s(2) + s(3) * dt;
        return out;
    }
    const double w = turn_rate;
    const double swt = std::sin(w * dt), cwt = std::cos(w * dt);
    out(0) = s(0) + (swt / w) * s(1) - ((1.0 - cwt) / w) * s(3);
    out(2) = s(2) + ((1.0 - cwt) / w) * s(1) + (swt / w) * s(3);
    out(1) = cwt * s(1) - swt * s(3);
    out(3) = swt * s(1) + cwt * s(3);
    return out;
}

Kinematics propagate_kinematics(const Kinematics& state, int motion_state, const TargetClassSpec& cls, double dt,
                                double turn_rate, Rng& rng) {
    if (motion_state < 0 || static_cast<std::size_t>(motion_state) >= cls.process_noise_scale.size())
        throw std::out_of_range("motion state out of range");
    Kinematics out = propagate_kinematics_mean(state, motion_state, dt, turn_rate);
    const double sigma = cls.process_noise_scale[static_cast<std::size_t>(motion_state)];
    if (sigma > 0.0) {
        const double ax = rng.normal(0.0, sigma);
        const double ay = rng.normal(0.0, sigma);
        out(0) += 0.5 * ax * dt * dt;
        out(1) += ax * dt;
        out(2) += 0.5 * ay * dt * dt;
        out(3) += ay * dt;
    }
    return out;
}

namespace {

nlohmann::json matrix_json(const TransitionMatrix& p) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto r = p.row(i);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

TransitionMatrix matrix_from_json(const nlohmann::json& j) {
    const auto n = static_cast<Eigen::Index>(j.size());
    RowMatrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = j.at(static_cast<std::size_t>(i));
        if (static_cast<Eigen::Index>(r.size()) != n) throw std::invalid_argument("family file: matrix not square");
        for (Eigen::Index k = 0; k < n; ++k) m(i, k) = r.at(static_cast<std::size_t>(k)).get<double>();
    }
    return TransitionMatrix(std::move(m));
}

}  // namespace

void to_json(nlohmann::json& j, const TargetFamily& family) {
    j = nlohmann::json::object();
    j["motion_space"] = family.motion_space;
    j["signal_space"] = family.signal_space;
    auto& arr = j["classes"] = nlohmann::json::array();
    for (const auto& c : family.classes) {
        arr.push_back({{"class_id", c.class_id},
                       {"motion_transition", matrix_json(c.motion_transition)},
                       {"signal_transition", matrix_json(c.signal_transition)},
                       {"motion_stationary", c.motion_stationary.vector()},
                       {"signal_stationary", c.signal_stationary.vector()},
                       {"process_noise_scale", c.process_noise_scale},
                       {"turn_rate", c.turn_rate}});
    }
}

TargetFamily family_from_json(const nlohmann::json& j) {
    TargetFamily family;
    family.motion_space = j.at("motion_space").get<std::vector<std::string>>();
    family.signal_space = j.at("signal_space").get<std::vector<std::string>>();
    for (const auto& c : j.at("classes")) {
        // Stationary vectors are recomputed from the matrices; the stored copies are informational.
        family.classes.emplace_back(c.at("class_id").get<int>(), matrix_from_json(c.at("motion_transition")),
                                    matrix_from_json(c.at("signal_transition")),
                                    c.at("process_noise_scale").get<std::vector<double>>(), c.at("turn_rate").get<double>());
        const auto& cls = family.classes.back();
        if (cls.motion_transition.size() != family.motion_states() || cls.signal_transition.size() != family.signal_states())
            throw std::invalid_argument("family file: class state spaces differ from the family");
    }
    if (family.classes.empty()) throw std::invalid_argument("family file: no classes");
    return family;
}

void save_family(const TargetFamily& family, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write family file " + path);
    nlohmann::json j = family;
    out << j.dump(2) << '\n';
}

TargetFamily load_family(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read family file " + path);
    return family_from_json(nlohmann::json::parse(in));
}

}  // namespace crn::markov
