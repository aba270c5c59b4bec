#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "crn/markov.hpp"
#include "crn/metric.hpp"
#include "crn/rng.hpp"

namespace crn::classes {

/// Time-ordered (step, state) observations of one chain for one target.
class ObservationLog {
public:
    /// Throws std::invalid_argument unless `step` is strictly after the last entry.
    void add(int step, int state);
    /// Inserts keeping order; a duplicate step is ignored. Used when merging logs from several nodes.
    void merge(int step, int state);

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const std::vector<std::pair<int, int>>& entries() const { return entries_; }
    std::vector<int> states() const;

private:
    std::vector<std::pair<int, int>> entries_;
};

/// Empirical state frequencies; an empty log yields the uniform distribution.
markov::StationaryDistribution estimate_stationary(std::span<const int> states, std::size_t n_states);

/// Counts of i -> j over adjacent entries of one log.
markov::RowMatrix transition_counts(std::span<const int> states, std::size_t n_states);

/// Row-normalized counts; rows with no visits are uniform.
markov::RowMatrix normalize_counts(const markov::RowMatrix& counts);

/// Transition estimate pooled over several logs (pairs never span two logs).
markov::RowMatrix estimate_transition(std::span<const std::vector<int>> logs, std::size_t n_states);
markov::RowMatrix estimate_transition(std::span<const int> states, std::size_t n_states);

struct EstimatedClass {
    int class_id = 0;
    markov::StationaryDistribution motion_stationary;
    markov::StationaryDistribution signal_stationary;
    markov::RowMatrix motion_transition;
    int member_count = 0;
};

/// Per-target input to class formation: the FC-side unions of motion and signal logs.
struct TargetEvidence {
    std::vector<int> motion_states;
    std::vector<int> signal_states;
};

/// Clustering feature: stationary estimates of both chains.
struct Feature {
    std::vector<double> motion;
    std::vector<double> signal;
};

Feature make_feature(const TargetEvidence& evidence, std::size_t n_motion, std::size_t n_signal);

/// W_p(motion) + W_p(signal): equal-weight sum used for both clustering and association.
double feature_distance(const Feature& a, const Feature& b, double p = 2.0);

struct FormationOptions {
    int k_max = 6;
    int restarts = 50;
    int max_iterations = 100;
    double silhouette_floor = 0.2;
    double p = 2.0;
    // Single-class reference: logs resimulated from the pooled chains; a split must
    // beat the best silhouette of every draw. 0 disables the check.
    int null_draws = 19;
    int null_restarts = 5;
};

struct FormationResult {
    std::vector<EstimatedClass> classes;
    std::vector<int> labels;  // per input target, index into classes
    int k = 0;
    double silhouette = 0.0;
    double null_silhouette = 0.0;  // largest best-split silhouette over the single-class draws
};

struct KMeansResult {
    std::vector<int> labels;
    std::vector<Feature> centroids;
    double inertia = 0.0;
};

/// k-means++ seeded, restarted k-means under feature_distance; centroids are
/// coordinate-wise means renormalized onto each simplex.
KMeansResult kmeans(std::span<const Feature> points, int k, const FormationOptions& options, Rng& rng);

/// Mean silhouette coefficient; singleton clusters contribute 0.
double silhouette_score(std::span<const Feature> points, std::span<const int> labels, int k, double p = 2.0);

/// Clusters targets for k in [1, k_max]; k is the silhouette argmax over
/// k >= 2, or 1 when the best silhouette is below the floor or does not beat the
/// single-class reference draws. Empty input yields no classes.
FormationResult form_classes(std::span<const TargetEvidence> targets, std::size_t n_motion, std::size_t n_signal,
                             const FormationOptions& options, Rng& rng);

/// argmin over classes of W2(motion) + W2(signal); ties go to the lowest class id.
std::optional<int> associate_class(std::span<const double> motion, std::span<const double> signal,
                                   std::span<const EstimatedClass> classes);

/// Fraction of items whose cluster's majority truth label equals their own truth label.
double majority_label_accuracy(std::span<const int> labels, std::span<const int> truth);

/// Majority truth label per cluster (-1 for empty clusters).
std::vector<int> majority_labels(std::span<const int> labels, std::span<const int> truth, int k);

}  // namespace crn::classes
