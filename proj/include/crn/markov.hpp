#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crn/rng.hpp"

namespace crn::markov {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Target kinematic state (x, vx, y, vy, z, vz) in meters and meters/second.
using Kinematics = Eigen::Matrix<double, 6, 1>;

/// Motion models of the default 3-state motion space. Indices beyond CT behave as CA.
enum class MotionModel : int { ConstantVelocity = 0, ConstantAcceleration = 1, ConstantTurn = 2 };

/// Signal state 0 is always "no emission".
inline constexpr int kSilentSignal = 0;

class ConstructionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-stochastic, ergodic (irreducible and aperiodic) transition matrix.
/// Validated at construction; immutable afterwards.
class TransitionMatrix {
public:
    static constexpr double kRowTolerance = 1e-9;

    /// Throws std::invalid_argument if not square, not row-stochastic or not ergodic.
    explicit TransitionMatrix(RowMatrix entries);
    TransitionMatrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t size() const { return static_cast<std::size_t>(p_.rows()); }
    double operator()(std::size_t i, std::size_t j) const { return p_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
    std::span<const double> row(std::size_t i) const { return {p_.data() + i * size(), size()}; }
    const RowMatrix& matrix() const { return p_; }

    static TransitionMatrix identity_like_sticky(std::size_t n, double self_probability);

private:
    RowMatrix p_;
};

/// True if the nonnegative matrix is primitive (some power strictly positive),
/// which for a stochastic matrix means irreducible and aperiodic.
bool is_ergodic(const RowMatrix& p);

/// Probability vector; sums to 1 within 1e-9, nonnegative.
class StationaryDistribution {
public:
    explicit StationaryDistribution(std::vector<double> probabilities);

    static StationaryDistribution uniform(std::size_t n);

    std::size_t size() const { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    std::span<const double> values() const { return p_; }
    const std::vector<double>& vector() const { return p_; }

private:
    std::vector<double> p_;
};

/// Left eigenvector pi = pi P normalized to sum 1.
StationaryDistribution stationary_distribution(const TransitionMatrix& p);

/// Largest |pi - pi P| entry.
double stationary_residual(const StationaryDistribution& pi, const TransitionMatrix& p);

/// Next state drawn from row `state`.
int step_chain(int state, const TransitionMatrix& p, Rng& rng);

struct TargetClassSpec {
    int class_id = 0;
    TransitionMatrix motion_transition;
    TransitionMatrix signal_transition;
    StationaryDistribution motion_stationary;
    StationaryDistribution signal_stationary;
    /// White-acceleration standard deviation per motion state, m/s^2.
    std::vector<double> process_noise_scale;
    /// Turn rate magnitude used while in the constant-turn state, rad/s.
    double turn_rate = 0.0;

    TargetClassSpec(int id, TransitionMatrix motion, TransitionMatrix signal,
                    std::vector<double> noise_scale, double turn_rate_rad_s);
};

struct TargetFamily {
    std::vector<TargetClassSpec> classes;
    std::vector<std::string> motion_space;
    std::vector<std::string> signal_space;

    std::size_t motion_states() const { return motion_space.size(); }
    std::size_t signal_states() const { return signal_space.size(); }
    const TargetClassSpec& find(int class_id) const;
};

struct FamilyOptions {
    int n_classes = 3;
    int motion_states = 3;
    int signal_states = 4;
    double separation = 0.1;
    double entry_floor = 0.01;
    int max_attempts = 20000;
};

/// Rejection-samples Dirichlet(1) rows (with an entry floor) until every pair of
/// classes is at least `separation` apart in both motion and signal stationary
/// distributions. Throws ConstructionError when the attempt budget runs out.
TargetFamily sample_family(const FamilyOptions& options, Rng& rng);

std::vector<std::string> default_motion_names(int n);
std::vector<std::string> default_signal_names(int n);

/// Applies one step of the given motion model with additive white Gaussian
/// acceleration noise scaled by the class. z and vz are carried unchanged.
/// `turn_rate` is the signed rate for the current constant-turn sojourn.
Kinematics propagate_kinematics(const Kinematics& state, int motion_state, const TargetClassSpec& cls,
                                double dt, double turn_rate, Rng& rng);

/// Noise-free version of the same transition.
Kinematics propagate_kinematics_mean(const Kinematics& state, int motion_state, double dt, double turn_rate);

void to_json(nlohmann::json& j, const TargetFamily& family);
TargetFamily family_from_json(const nlohmann::json& j);
void save_family(const TargetFamily& family, const std::string& path);
TargetFamily load_family(const std::string& path);

}  // namespace crn::markov
