#include "crn/classes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace crn::classes {

namespace {

std::vector<double> renormalize(std::vector<double> v) {
    double total = 0.0;
    for (double x : v) total += x;
    if (!(total > 0.0)) return std::vector<double>(v.size(), 1.0 / static_cast<double>(v.size()));
    for (auto& x : v) x /= total;
    return v;
}

Feature mean_feature(std::span<const Feature> points, std::span<const int> labels, int cluster) {
    Feature c{std::vector<double>(points.front().motion.size(), 0.0), std::vector<double>(points.front().signal.size(), 0.0)};
    int count = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (labels[i] != cluster) continue;
        ++count;
        for (std::size_t v = 0; v < c.motion.size(); ++v) c.motion[v] += points[i].motion[v];
        for (std::size_t v = 0; v < c.signal.size(); ++v) c.signal[v] += points[i].signal[v];
    }
    if (count == 0) return c;
    c.motion = renormalize(std::move(c.motion));
    c.signal = renormalize(std::move(c.signal));
    return c;
}

std::vector<Feature> seed_plus_plus(std::span<const Feature> points, int k, double p, Rng& rng) {
    std::vector<Feature> centroids;
    centroids.push_back(points[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(points.size()) - 1))]);
    std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double d = feature_distance(points[i], centroids.back(), p);
            d2[i] = std::min(d2[i], d * d);
            total += d2[i];
        }
        if (!(total > 0.0)) {
            // All points coincide with existing centroids; duplicate one.
            centroids.push_back(points[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(points.size()) - 1))]);
            continue;
        }
        centroids.push_back(points[static_cast<std::size_t>(rng.categorical(d2))]);
    }
    return centroids;
}

std::vector<double> distance_matrix(std::span<const Feature> points, double p) {
    const std::size_t n = points.size();
    std::vector<double> dmat(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dmat[i * n + j] = dmat[j * n + i] = feature_distance(points[i], points[j], p);
    return dmat;
}

double silhouette_from_distances(const std::vector<double>& dmat, std::size_t n, std::span<const int> labels, int k) {
    if (n < 2 || k < 2) return 0.0;
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    double total = 0.0;
    std::vector<double> sums(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        const auto own = static_cast<std::size_t>(labels[i]);
        if (sizes[own] <= 1) continue;  // s(i) = 0
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) sums[static_cast<std::size_t>(labels[j])] += dmat[i * n + j];
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < sums.size(); ++c)
            if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        if (!std::isfinite(b)) continue;
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

struct Split {
    KMeansResult km;
    int k = 1;
    double silhouette = -1.0;
};

Split best_split(std::span<const Feature> points, const FormationOptions& options, Rng& rng) {
    Split best;
    const int k_max = std::min<int>(options.k_max, static_cast<int>(points.size()) - 1);
    if (k_max < 2) return best;
    const auto dmat = distance_matrix(points, options.p);
    for (int k = 2; k <= k_max; ++k) {
        auto km = kmeans(points, k, options, rng);
        const double sil = silhouette_from_distances(dmat, points.size(), km.labels, k);
        if (sil > best.silhouette) best = {std::move(km), k, sil};
    }
    return best;
}

// Draws a path of the given length from a row-stochastic matrix, starting from `initial`.
std::vector<int> simulate_log(const markov::RowMatrix& p, std::span<const double> initial, std::size_t length, Rng& rng) {
    std::vector<int> out;
    out.reserve(length);
    if (length == 0) return out;
    int s = rng.categorical(initial);
    std::vector<double> row(static_cast<std::size_t>(p.cols()));
    for (std::size_t k = 0; k < length; ++k) {
        out.push_back(s);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = p(s, static_cast<Eigen::Index>(j));
        s = rng.categorical(row);
    }
    return out;
}

double null_silhouette(std::span<const TargetEvidence> targets, std::size_t n_motion, std::size_t n_signal,
                       const FormationOptions& options, Rng& rng) {
    std::vector<std::vector<int>> motion_logs, signal_logs;
    std::vector<int> all_motion, all_signal;
    for (const auto& t : targets) {
        motion_logs.push_back(t.motion_states);
        signal_logs.push_back(t.signal_states);
        all_motion.insert(all_motion.end(), t.motion_states.begin(), t.motion_states.end());
        all_signal.insert(all_signal.end(), t.signal_states.begin(), t.signal_states.end());
    }
    const auto pm = estimate_transition(motion_logs, n_motion);
    const auto ps = estimate_transition(signal_logs, n_signal);
    const auto im = estimate_stationary(all_motion, n_motion).vector();
    const auto is = estimate_stationary(all_signal, n_signal).vector();

    FormationOptions quick = options;
    quick.restarts = std::max(1, options.null_restarts);
    double worst = -1.0;
    std::vector<Feature> points(targets.size());
    for (int d = 0; d < options.null_draws; ++d) {
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const TargetEvidence ev{simulate_log(pm, im, targets[i].motion_states.size(), rng),
                                    simulate_log(ps, is, targets[i].signal_states.size(), rng)};
            points[i] = make_feature(ev, n_motion, n_signal);
        }
        worst = std::max(worst, best_split(points, quick, rng).silhouette);
    }
    return worst;
}

}  // namespace

void ObservationLog::add(int step, int state) {
    if (!entries_.empty() && step <= entries_.back().first)
        throw std::invalid_argument("ObservationLog: steps must be strictly increasing");
    entries_.emplace_back(step, state);
}

void ObservationLog::merge(int step, int state) {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), step,
                               [](const std::pair<int, int>& e, int s) { return e.first < s; });
    if (it != entries_.end() && it->first == step) return;
    entries_.insert(it, {step, state});
}

std::vector<int> ObservationLog::states() const {
    std::vector<int> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.second);
    return out;
}

markov::StationaryDistribution estimate_stationary(std::span<const int> states, std::size_t n_states) {
    if (n_states == 0) throw std::invalid_argument("estimate_stationary: empty state space");
    if (states.empty()) return markov::StationaryDistribution::uniform(n_states);
    std::vector<double> freq(n_states, 0.0);
    for (int s : states) {
        if (s < 0 || static_cast<std::size_t>(s) >= n_states) throw std::out_of_range("estimate_stationary: state out of range");
        freq[static_cast<std::size_t>(s)] += 1.0;
    }
    for (auto& f : freq) f /= static_cast<double>(states.size());
    return markov::StationaryDistribution(std::move(freq));
}

markov::RowMatrix transition_counts(std::span<const int> states, std::size_t n_states) {
    const auto n = static_cast<Eigen::Index>(n_states);
    markov::RowMatrix counts = markov::RowMatrix::Zero(n, n);
    for (std::size_t k = 1; k < states.size(); ++k) {
        const int i = states[k - 1], j = states[k];
        if (i < 0 || j < 0 || i >= n || j >= n) throw std::out_of_range("transition_counts: state out of range");
        counts(i, j) += 1.0;
    }
    return counts;
}

markov::RowMatrix normalize_counts(const markov::RowMatrix& counts) {
    markov::RowMatrix out = counts;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double total = out.row(i).sum();
        if (total > 0.0) {
            out.row(i) /= total;
        } else {
            out.row(i).setConstant(1.0 / static_cast<double>(out.cols()));
        }
    }
    return out;
}

markov::RowMatrix estimate_transition(std::span<const std::vector<int>> logs, std::size_t n_states) {
    const auto n = static_cast<Eigen::Index>(n_states);
    markov::RowMatrix counts = markov::RowMatrix::Zero(n, n);
    for (const auto& log : logs) counts += transition_counts(log, n_states);
    return normalize_counts(counts);
}

markov::RowMatrix estimate_transition(std::span<const int> states, std::size_t n_states) {
    return normalize_counts(transition_counts(states, n_states));
}

Feature make_feature(const TargetEvidence& evidence, std::size_t n_motion, std::size_t n_signal) {
    return {estimate_stationary(evidence.motion_states, n_motion).vector(),
            estimate_stationary(evidence.signal_states, n_signal).vector()};
}

double feature_distance(const Feature& a, const Feature& b, double p) {
    return wasserstein_p(a.motion, b.motion, p) + wasserstein_p(a.signal, b.signal, p);
}

KMeansResult kmeans(std::span<const Feature> points, int k, const FormationOptions& options, Rng& rng) {
    if (points.empty()) throw std::invalid_argument("kmeans: no points");
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    k = std::min<int>(k, static_cast<int>(points.size()));
    const std::size_t n = points.size();

    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    const int restarts = k == 1 ? 1 : std::max(1, options.restarts);
    for (int r = 0; r < restarts; ++r) {
        std::vector<Feature> centroids = seed_plus_plus(points, k, options.p, rng);
        std::vector<int> labels(n, -1);
        std::vector<double> dist(n, 0.0);
        for (int iter = 0; iter < options.max_iterations; ++iter) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int arg = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (int c = 0; c < k; ++c) {
                    const double d = feature_distance(points[i], centroids[static_cast<std::size_t>(c)], options.p);
                    if (d < bd) {
                        bd = d;
                        arg = c;
                    }
                }
                dist[i] = bd;
                if (labels[i] != arg) {
                    labels[i] = arg;
                    changed = true;
                }
            }
            // Empty clusters take the point farthest from its centroid.
            for (int c = 0; c < k; ++c) {
                if (std::find(labels.begin(), labels.end(), c) != labels.end()) continue;
                const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
                labels[far] = c;
                dist[far] = 0.0;
                changed = true;
            }
            for (int c = 0; c < k; ++c) centroids[static_cast<std::size_t>(c)] = mean_feature(points, labels, c);
            if (!changed) break;
        }
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = feature_distance(points[i], centroids[static_cast<std::size_t>(labels[i])], options.p);
            inertia += d * d;
        }
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.labels = labels;
            best.centroids = centroids;
        }
    }
    return best;
}

double silhouette_score(std::span<const Feature> points, std::span<const int> labels, int k, double p) {
    if (points.size() < 2 || k < 2) return 0.0;
    return silhouette_from_distances(distance_matrix(points, p), points.size(), labels, k);
}

FormationResult form_classes(std::span<const TargetEvidence> targets, std::size_t n_motion, std::size_t n_signal,
                             const FormationOptions& options, Rng& rng) {
    FormationResult result;
    if (targets.empty()) return result;
    std::vector<Feature> points;
    points.reserve(targets.size());
    for (const auto& t : targets) points.push_back(make_feature(t, n_motion, n_signal));

    KMeansResult chosen = kmeans(points, 1, options, rng);
    int chosen_k = 1;
    auto split = best_split(points, options, rng);
    if (split.k >= 2 && split.silhouette >= options.silhouette_floor) {
        if (options.null_draws > 0) result.null_silhouette = null_silhouette(targets, n_motion, n_signal, options, rng);
        if (options.null_draws <= 0 || split.silhouette > result.null_silhouette) {
            chosen = std::move(split.km);
            chosen_k = split.k;
        }
    }
    result.k = chosen_k;
    result.silhouette = std::max(split.silhouette, 0.0);
    result.labels = chosen.labels;

    for (int c = 0; c < chosen_k; ++c) {
        std::vector<std::vector<int>> member_logs;
        int members = 0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (chosen.labels[i] != c) continue;
            ++members;
            member_logs.push_back(targets[i].motion_states);
        }
        const auto& centroid = chosen.centroids[static_cast<std::size_t>(c)];
        result.classes.push_back(EstimatedClass{c, markov::StationaryDistribution(renormalize(centroid.motion)),
                                                markov::StationaryDistribution(renormalize(centroid.signal)),
                                                estimate_transition(member_logs, n_motion), members});
    }
    return result;
}

std::optional<int> associate_class(std::span<const double> motion, std::span<const double> signal,
                                   std::span<const EstimatedClass> classes) {
    std::optional<int> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& c : classes) {
        const double d = wasserstein_p(motion, c.motion_stationary.values(), 2.0) +
                         wasserstein_p(signal, c.signal_stationary.values(), 2.0);
        if (d < best_d || (d == best_d && best && c.class_id < *best)) {
            best_d = d;
            best = c.class_id;
        }
    }
    return best;
}

std::vector<int> majority_labels(std::span<const int> labels, std::span<const int> truth, int k) {
    std::vector<std::map<int, int>> votes(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0 && labels[i] < k) ++votes[static_cast<std::size_t>(labels[i])][truth[i]];
    std::vector<int> out(static_cast<std::size_t>(k), -1);
    for (int c = 0; c < k; ++c) {
        int best_count = 0;
        for (const auto& [label, count] : votes[static_cast<std::size_t>(c)])
            if (count > best_count) {
                best_count = count;
                out[static_cast<std::size_t>(c)] = label;
            }
    }
    return out;
}

double majority_label_accuracy(std::span<const int> labels, std::span<const int> truth) {
    if (labels.size() != truth.size()) throw std::invalid_argument("majority_label_accuracy: size mismatch");
    if (labels.empty()) return 0.0;
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    const auto majority = majority_labels(labels, truth, k);
    int correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= 0 && majority[static_cast<std::size_t>(labels[i])] == truth[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace crn::classes
