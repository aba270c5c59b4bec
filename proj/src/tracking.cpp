#include "crn/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace crn::tracking {

namespace {

using Mat24 = Eigen::Matrix<double, 2, 4>;
using Mat42 = Eigen::Matrix<double, 4, 2>;

Mat24 measurement_matrix() {
    Mat24 h = Mat24::Zero();
    h(0, 0) = 1.0;
    h(1, 2) = 1.0;
    return h;
}

Vec2 position_of(const Vec4& x) { return {x(0), x(2)}; }

Mat2 position_cov(const Mat4& p) {
    Mat2 out;
    out << p(0, 0), p(0, 2), p(2, 0), p(2, 2);
    return out;
}

// Symmetrize and floor eigenvalues at 1e-9 when the Cholesky factorization fails.
void condition(Mat4& p) {
    p = 0.5 * (p + p.transpose());
    Eigen::LLT<Mat4> llt(p);
    if (llt.info() == Eigen::Success) return;
    Eigen::SelfAdjointEigenSolver<Mat4> es(p);
    Vec4 ev = es.eigenvalues().cwiseMax(1e-9);
    p = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    p = 0.5 * (p + p.transpose());
}

double mahalanobis2(const Vec2& d, const Mat2& s) { return d.dot(s.ldlt().solve(d)); }

double max_position_sigma(const Mat4& p) { return std::sqrt(std::max(p(0, 0), p(2, 2))); }

double wrap_angle(double a) {
    while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
    while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

bool in_track_gate(const GaussianComponent& c, const Track& track, const FilterParams& params) {
    const Vec2 d = position_of(c.mean) - track.position();
    if (d.norm() > params.track_gate) return false;
    return mahalanobis2(d, position_cov(c.cov) + position_cov(track.cov)) <= params.cluster_gate;
}

}  // namespace

double PhdMixture::mass() const {
    double m = 0.0;
    for (std::size_t i = 0; i < models_.size(); ++i) m += mass(i);
    return m;
}

double PhdMixture::mass(std::size_t model) const {
    double m = 0.0;
    for (const auto& c : models_[model]) m += c.weight;
    return m;
}

std::size_t PhdMixture::component_count() const {
    std::size_t n = 0;
    for (const auto& m : models_) n += m.size();
    return n;
}

Mat4 transition_matrix(double dt) {
    Mat4 f = Mat4::Identity();
    f(0, 1) = dt;
    f(2, 3) = dt;
    return f;
}

Mat4 process_noise(double accel_sigma, double dt) {
    const double q = accel_sigma * accel_sigma;
    const double dt2 = dt * dt, dt3 = dt2 * dt, dt4 = dt3 * dt;
    Mat4 out = Mat4::Zero();
    for (int axis = 0; axis < 2; ++axis) {
        const int p = 2 * axis, v = p + 1;
        out(p, p) = q * dt4 / 4.0;
        out(p, v) = out(v, p) = q * dt3 / 2.0;
        out(v, v) = q * dt2;
    }
    return out;
}

PhdMixture phd_mix(const PhdMixture& mixture, const markov::RowMatrix& transition, const TuningTable& tunings) {
    const auto n = mixture.model_count();
    if (static_cast<std::size_t>(transition.rows()) != n || static_cast<std::size_t>(transition.cols()) != n)
        throw std::invalid_argument("phd_mix: transition matrix dimension does not match model count");
    PhdMixture out(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (const auto& c : mixture.model(j)) {
            const markov::RowMatrix* p = &transition;
            if (c.class_tag >= 0) {
                auto it = tunings.find(c.class_tag);
                if (it != tunings.end()) {
                    if (static_cast<std::size_t>(it->second.mixing.rows()) != n)
                        throw std::invalid_argument("phd_mix: tuned mixing matrix dimension mismatch");
                    p = &it->second.mixing;
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double pji = (*p)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
                if (pji <= 0.0) continue;
                GaussianComponent copy = c;
                copy.weight = c.weight * pji;
                out.model(i).push_back(std::move(copy));
            }
        }
    }
    return out;
}

PhdMixture phd_predict(const PhdMixture& mixture, const FilterParams& params, const TuningTable& tunings, bool with_birth) {
    const auto n = mixture.model_count();
    if (params.model_count() != n) throw std::invalid_argument("phd_predict: process noise count does not match model count");
    const Mat4 f = transition_matrix(params.dt);
    std::vector<Mat4> q_default(n);
    for (std::size_t i = 0; i < n; ++i) q_default[i] = process_noise(params.process_noise[i], params.dt);

    PhdMixture out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& dst = out.model(i);
        dst.reserve(mixture.model(i).size() + 1);
        for (const auto& c : mixture.model(i)) {
            const Mat4* q = &q_default[i];
            Mat4 q_tuned;
            if (c.class_tag >= 0) {
                auto it = tunings.find(c.class_tag);
                if (it != tunings.end() && it->second.process_noise && it->second.process_noise->size() == n) {
                    q_tuned = process_noise((*it->second.process_noise)[i], params.dt);
                    q = &q_tuned;
                }
            }
            GaussianComponent p;
            p.weight = params.survival_probability * c.weight;
            p.mean = f * c.mean;
            p.cov = f * c.cov * f.transpose() + *q;
            p.cov = 0.5 * (p.cov + p.cov.transpose());
            p.class_tag = c.class_tag;
            dst.push_back(std::move(p));
        }
        if (with_birth && params.birth_weight > 0.0) {
            GaussianComponent b;
            b.weight = params.birth_weight;
            b.mean << params.birth_center.x(), 0.0, params.birth_center.y(), 0.0;
            const double sp = params.birth_position_sigma * params.birth_position_sigma;
            const double sv = params.birth_velocity_sigma * params.birth_velocity_sigma;
            b.cov = Vec4(sp, sv, sp, sv).asDiagonal();
            dst.push_back(std::move(b));
        }
    }
    return out;
}

PhdMixture phd_update_raw(const PhdMixture& mixture, std::span<const sensing::Detection> detections,
                          const FilterParams& params) {
    const auto n = mixture.model_count();
    const double pd = params.detection_probability;
    PhdMixture out(n);

    // Missed-detection terms.
    for (std::size_t i = 0; i < n; ++i) {
        auto& dst = out.model(i);
        dst.reserve(mixture.model(i).size() * (1 + detections.size()));
        for (const auto& c : mixture.model(i)) {
            GaussianComponent m = c;
            m.weight = (1.0 - pd) * c.weight;
            dst.push_back(std::move(m));
        }
    }
    if (detections.empty() || pd <= 0.0) return out;

    // Per-component Kalman quantities, flattened across models.
    struct Prepared {
        std::size_t model;
        const GaussianComponent* comp;
        Vec2 z_pred;
        Mat2 s_inv;
        double norm;  // 1 / (2 pi sqrt(det S))
        Mat42 gain;
        Mat4 cov_post;
    };
    const Mat24 h = measurement_matrix();
    const Mat2 r = Mat2::Identity() * params.measurement_sigma * params.measurement_sigma;
    std::vector<Prepared> prepared;
    prepared.reserve(mixture.component_count());
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& c : mixture.model(i)) {
            Prepared p{i, &c, h * c.mean, Mat2::Zero(), 0.0, Mat42::Zero(), Mat4::Zero()};
            const Mat2 s = h * c.cov * h.transpose() + r;
            const double det = s.determinant();
            p.s_inv = s.inverse();
            p.norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
            p.gain = c.cov * h.transpose() * p.s_inv;
            const Mat4 ikh = Mat4::Identity() - p.gain * h;
            // Joseph form keeps the posterior symmetric positive definite.
            p.cov_post = ikh * c.cov * ikh.transpose() + p.gain * r * p.gain.transpose();
            p.cov_post = 0.5 * (p.cov_post + p.cov_post.transpose());
            prepared.push_back(p);
        }
    }

    const double kappa = params.false_alarm_rate * params.clutter_density;
    constexpr double kGate = 40.0;  // squared Mahalanobis; exp(-20) terms are negligible
    std::vector<double> lik(prepared.size());
    for (const auto& det : detections) {
        const Vec2 z = det.position;
        double denom = kappa;
        for (std::size_t k = 0; k < prepared.size(); ++k) {
            const Vec2 d = z - prepared[k].z_pred;
            const double m2 = d.dot(prepared[k].s_inv * d);
            lik[k] = m2 > kGate ? 0.0 : pd * prepared[k].comp->weight * prepared[k].norm * std::exp(-0.5 * m2);
            denom += lik[k];
        }
        if (!(denom > 0.0)) continue;
        for (std::size_t k = 0; k < prepared.size(); ++k) {
            if (lik[k] <= 0.0) continue;
            const auto& p = prepared[k];
            GaussianComponent u;
            u.weight = lik[k] / denom;
            u.mean = p.comp->mean + p.gain * (z - p.z_pred);
            u.cov = p.cov_post;
            u.class_tag = p.comp->class_tag;
            out.model(p.model).push_back(std::move(u));
        }
    }
    return out;
}

void reduce_mixture(PhdMixture& mixture, const FilterParams& params) {
    for (std::size_t i = 0; i < mixture.model_count(); ++i) {
        auto& comps = mixture.model(i);
        std::erase_if(comps, [&](const GaussianComponent& c) { return !(c.weight >= params.prune_threshold); });
        if (comps.empty()) continue;

        std::vector<std::size_t> order(comps.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return comps[a].weight > comps[b].weight; });
        std::vector<Mat4> inv(comps.size());
        for (std::size_t k = 0; k < comps.size(); ++k) inv[k] = comps[k].cov.inverse();

        std::vector<bool> used(comps.size(), false);
        std::vector<GaussianComponent> merged;
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const std::size_t j = order[oi];
            if (used[j]) continue;
            double w = 0.0;
            Vec4 mean = Vec4::Zero();
            std::vector<std::size_t> members;
            for (std::size_t ok = oi; ok < order.size(); ++ok) {
                const std::size_t k = order[ok];
                if (used[k]) continue;
                const Vec4 d = comps[k].mean - comps[j].mean;
                if (d.dot(inv[k] * d) <= params.merge_threshold) {
                    used[k] = true;
                    members.push_back(k);
                    w += comps[k].weight;
                    mean += comps[k].weight * comps[k].mean;
                }
            }
            GaussianComponent m;
            m.weight = w;
            m.class_tag = comps[j].class_tag;
            if (members.size() == 1) {
                m.mean = comps[j].mean;
                m.cov = comps[j].cov;
            } else {
                mean /= w;
                Mat4 cov = Mat4::Zero();
                for (auto k : members) {
                    const Vec4 d = comps[k].mean - mean;
                    cov += comps[k].weight * (comps[k].cov + d * d.transpose());
                }
                m.mean = mean;
                m.cov = cov / w;
            }
            condition(m.cov);
            merged.push_back(std::move(m));
        }
        comps = std::move(merged);
    }

    // Global component cap: keep the heaviest.
    const std::size_t total = mixture.component_count();
    if (total > params.max_components && params.max_components > 0) {
        std::vector<double> weights;
        weights.reserve(total);
        for (std::size_t i = 0; i < mixture.model_count(); ++i)
            for (const auto& c : mixture.model(i)) weights.push_back(c.weight);
        std::nth_element(weights.begin(), weights.begin() + static_cast<std::ptrdiff_t>(params.max_components - 1),
                         weights.end(), std::greater<>());
        const double cutoff = weights[params.max_components - 1];
        std::size_t kept = 0;
        for (std::size_t i = 0; i < mixture.model_count(); ++i) {
            auto& comps = mixture.model(i);
            std::vector<GaussianComponent> keep;
            for (auto& c : comps) {
                if (c.weight > cutoff || (c.weight == cutoff && kept < params.max_components)) {
                    if (kept < params.max_components) {
                        keep.push_back(std::move(c));
                        ++kept;
                    }
                }
            }
            comps = std::move(keep);
        }
    }
}

PhdMixture phd_update(const PhdMixture& mixture, std::span<const sensing::Detection> detections, const FilterParams& params) {
    PhdMixture out = phd_update_raw(mixture, detections, params);
    reduce_mixture(out, params);
    return out;
}

std::vector<StateEstimate> extract_estimates(const PhdMixture& mixture, const FilterParams& params) {
    struct Ref {
        std::size_t model;
        const GaussianComponent* comp;
    };
    std::vector<Ref> refs;
    for (std::size_t i = 0; i < mixture.model_count(); ++i)
        for (const auto& c : mixture.model(i))
            if (max_position_sigma(c.cov) <= params.extraction_max_sigma) refs.push_back({i, &c});
    std::stable_sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) { return a.comp->weight > b.comp->weight; });

    std::vector<StateEstimate> out;
    std::vector<bool> used(refs.size(), false);
    for (std::size_t s = 0; s < refs.size(); ++s) {
        if (used[s]) continue;
        const auto& seed = *refs[s].comp;
        StateEstimate est;
        est.model_mass.assign(mixture.model_count(), 0.0);
        std::vector<std::size_t> members;
        for (std::size_t k = s; k < refs.size(); ++k) {
            if (used[k]) continue;
            const Vec2 d = position_of(refs[k].comp->mean) - position_of(seed.mean);
            if (k != s && mahalanobis2(d, position_cov(seed.cov) + position_cov(refs[k].comp->cov)) > params.cluster_gate) continue;
            used[k] = true;
            members.push_back(k);
            est.weight += refs[k].comp->weight;
            est.mean += refs[k].comp->weight * refs[k].comp->mean;
            est.model_mass[refs[k].model] += refs[k].comp->weight;
        }
        if (!(est.weight > params.extraction_threshold)) continue;
        est.mean /= est.weight;
        Mat4 cov = Mat4::Zero();
        for (auto k : members) {
            const Vec4 d = refs[k].comp->mean - est.mean;
            cov += refs[k].comp->weight * (refs[k].comp->cov + d * d.transpose());
        }
        est.cov = cov / est.weight;
        condition(est.cov);
        out.push_back(std::move(est));
    }
    return out;
}

std::vector<Track> extract_tracks(const PhdMixture& mixture, std::vector<Track> previous, const FilterParams& params,
                                  int step, bool radar_step, int& next_track_id) {
    const auto estimates = extract_estimates(mixture, params);
    const Mat4 f = transition_matrix(params.dt);

    struct Pair {
        double dist;
        std::size_t track, est;
    };
    std::vector<Pair> pairs;
    for (std::size_t t = 0; t < previous.size(); ++t) {
        const Vec2 predicted = previous[t].position() + params.dt * previous[t].velocity();
        for (std::size_t e = 0; e < estimates.size(); ++e) {
            const double d = (position_of(estimates[e].mean) - predicted).norm();
            if (d <= params.track_gate) pairs.push_back({d, t, e});
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.dist < b.dist; });
    std::vector<int> track_to_est(previous.size(), -1);
    std::vector<bool> est_used(estimates.size(), false);
    for (const auto& p : pairs) {
        if (track_to_est[p.track] >= 0 || est_used[p.est]) continue;
        track_to_est[p.track] = static_cast<int>(p.est);
        est_used[p.est] = true;
    }

    std::vector<Track> out;
    out.reserve(previous.size() + estimates.size());
    for (std::size_t t = 0; t < previous.size(); ++t) {
        Track tr = std::move(previous[t]);
        const bool matched = track_to_est[t] >= 0;
        tr.matched_this_step = matched;
        if (matched) {
            const auto& e = estimates[static_cast<std::size_t>(track_to_est[t])];
            tr.state = e.mean;
            tr.cov = e.cov;
        } else {
            tr.state = f * tr.state;
            tr.cov = f * tr.cov * f.transpose();
        }
        const bool was_confirmed = tr.confirmed();
        if (radar_step) {
            tr.scan_hits.push_back(matched);
            if (static_cast<int>(tr.scan_hits.size()) > params.confirm_window) tr.scan_hits.erase(tr.scan_hits.begin());
            tr.consecutive_misses = matched ? 0 : tr.consecutive_misses + 1;
            if (!was_confirmed) {
                const int hits = static_cast<int>(std::count(tr.scan_hits.begin(), tr.scan_hits.end(), true));
                if (hits >= params.confirm_hits) {
                    tr.status = TrackStatus::Confirmed;
                    tr.age = 1;
                } else if (static_cast<int>(tr.scan_hits.size()) >= params.confirm_window) {
                    continue;  // failed confirmation
                }
            }
            if (tr.consecutive_misses >= params.delete_misses) continue;
        }
        if (was_confirmed) ++tr.age;
        out.push_back(std::move(tr));
    }
    if (radar_step) {
        for (std::size_t e = 0; e < estimates.size(); ++e) {
            if (est_used[e]) continue;
            Track tr;
            tr.track_id = next_track_id++;
            tr.state = estimates[e].mean;
            tr.cov = estimates[e].cov;
            tr.first_step = step;
            tr.scan_hits.push_back(true);
            tr.matched_this_step = true;
            double total = std::accumulate(estimates[e].model_mass.begin(), estimates[e].model_mass.end(), 0.0);
            tr.motion_model_posterior = estimates[e].model_mass;
            for (auto& x : tr.motion_model_posterior) x /= total;
            if (params.confirm_hits <= 1) {
                tr.status = TrackStatus::Confirmed;
                tr.age = 1;
            }
            out.push_back(std::move(tr));
        }
    }
    return out;
}

std::vector<double> estimate_motion_model(const PhdMixture& mixture, Track& track, const FilterParams& params) {
    const auto n = mixture.model_count();
    std::vector<double> mass(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& c : mixture.model(i)) {
            if (!in_track_gate(c, track, params)) continue;
            mass[i] += c.weight;
            total += c.weight;
        }
    }
    if (total > 0.0) {
        for (auto& m : mass) m /= total;
        track.motion_model_posterior = mass;
    } else if (track.motion_model_posterior.size() != n) {
        track.motion_model_posterior.assign(n, 1.0 / static_cast<double>(n));
    }
    return track.motion_model_posterior;
}

int most_likely(std::span<const double> distribution) {
    if (distribution.empty()) throw std::invalid_argument("most_likely: empty distribution");
    std::size_t best = 0;
    for (std::size_t i = 1; i < distribution.size(); ++i)
        if (distribution[i] > distribution[best]) best = i;
    return static_cast<int>(best);
}

void tag_components(PhdMixture& mixture, const Track& track, int class_id, const FilterParams& params) {
    for (std::size_t i = 0; i < mixture.model_count(); ++i)
        for (auto& c : mixture.model(i))
            if (in_track_gate(c, track, params)) c.class_tag = class_id;
}

std::vector<std::pair<std::size_t, std::size_t>> associate_signals(const Vec2& node_position,
                                                                   std::span<const sensing::SignalObservation> observations,
                                                                   std::span<const Track> tracks, double bearing_gate) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t o = 0; o < observations.size(); ++o) {
        double best = bearing_gate;
        std::optional<std::size_t> best_track;
        for (std::size_t t = 0; t < tracks.size(); ++t) {
            if (!tracks[t].confirmed()) continue;
            const Vec2 d = tracks[t].position() - node_position;
            const double diff = std::abs(wrap_angle(std::atan2(d.y(), d.x()) - observations[o].bearing));
            if (diff <= best) {
                if (diff == best && best_track) continue;
                best = diff;
                best_track = t;
            }
        }
        if (best_track) out.emplace_back(o, *best_track);
    }
    return out;
}

NodeFilter::NodeFilter(FilterParams params)
    : params_(std::move(params)),
      default_mixing_(markov::TransitionMatrix::identity_like_sticky(params_.model_count(), params_.default_self_transition).matrix()),
      mixture_(params_.model_count()) {}

void NodeFilter::step(int step, bool radar, std::span<const sensing::Detection> detections) {
    mixture_ = phd_mix(mixture_, default_mixing_, tunings_);
    mixture_ = phd_predict(mixture_, params_, tunings_, radar);
    if (radar) {
        mixture_ = phd_update(mixture_, detections, params_);
    } else {
        reduce_mixture(mixture_, params_);
    }
    tracks_ = extract_tracks(mixture_, std::move(tracks_), params_, step, radar, next_track_id_);
    for (auto& t : tracks_) {
        if (t.class_assignment) tag_components(mixture_, t, *t.class_assignment, params_);
        if (!radar || !t.confirmed() || !t.matched_this_step) continue;
        const auto posterior = estimate_motion_model(mixture_, t, params_);
        t.motion_history.emplace_back(step, most_likely(posterior));
    }
}

void NodeFilter::record_signals(int step, std::span<const sensing::SignalObservation> observations, double bearing_gate) {
    if (tracks_.empty()) return;
    const Vec2 node = params_.birth_center;
    std::vector<bool> heard(tracks_.size(), false);
    for (const auto& [o, t] : associate_signals(node, observations, tracks_, bearing_gate)) {
        auto& hist = tracks_[t].signal_history;
        heard[t] = true;
        if (!hist.empty() && hist.back().first == step) continue;  // one intercept per track per step
        hist.emplace_back(step, observations[o].signal_state);
    }
    if (!params_.infer_silence) return;
    for (std::size_t t = 0; t < tracks_.size(); ++t)
        if (!heard[t] && tracks_[t].confirmed()) tracks_[t].signal_history.emplace_back(step, markov::kSilentSignal);
}

void NodeFilter::set_tuning(int class_id, ClassTuning tuning) {
    if (static_cast<std::size_t>(tuning.mixing.rows()) != params_.model_count() ||
        static_cast<std::size_t>(tuning.mixing.cols()) != params_.model_count())
        throw std::invalid_argument("set_tuning: mixing matrix dimension mismatch");
    tunings_[class_id] = std::move(tuning);
}

void NodeFilter::assign_class(int track_id, int class_id) {
    for (auto& t : tracks_) {
        if (t.track_id != track_id) continue;
        t.class_assignment = class_id;
        tag_components(mixture_, t, class_id, params_);
        return;
    }
}

void NodeFilter::clear_tuning() { tunings_.clear(); }

}  // namespace crn::tracking
