#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crn/classes.hpp"

using namespace crn;
using namespace crn::classes;

namespace {

std::vector<int> sample_path(const markov::TransitionMatrix& p, int n, Rng& rng) {
    std::vector<double> pi(stationary_distribution(p).vector());
    int s = rng.categorical(pi);
    std::vector<int> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(s);
        s = step_chain(s, p, rng);
    }
    return out;
}

double tv(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += 0.5 * std::abs(a[i] - b[i]);
    return d;
}

EstimatedClass class_from_spec(const markov::TargetClassSpec& c) {
    return EstimatedClass{c.class_id, c.motion_stationary, c.signal_stationary, c.motion_transition.matrix(), 1};
}

struct Labelled {
    std::vector<TargetEvidence> evidence;
    std::vector<int> truth;
};

Labelled sample_targets(const markov::TargetFamily& fam, int per_class, int length, Rng& rng) {
    Labelled out;
    for (const auto& c : fam.classes)
        for (int i = 0; i < per_class; ++i) {
            out.evidence.push_back({sample_path(c.motion_transition, length, rng), sample_path(c.signal_transition, length, rng)});
            out.truth.push_back(c.class_id);
        }
    return out;
}

}  // namespace

TEST_CASE("observation log ordering") {
    ObservationLog log;
    log.add(1, 0);
    log.add(4, 2);
    CHECK_THROWS_AS(log.add(4, 1), std::invalid_argument);
    CHECK_THROWS_AS(log.add(2, 1), std::invalid_argument);
    log.merge(2, 1);
    log.merge(4, 3);  // duplicate step ignored
    log.merge(9, 0);
    CHECK(log.states() == std::vector<int>{0, 1, 2, 0});
    for (std::size_t i = 1; i < log.size(); ++i) CHECK(log.entries()[i].first > log.entries()[i - 1].first);
}

TEST_CASE("estimate_stationary") {
    const std::vector<int> states{0, 0, 1, 0};
    const auto pi = estimate_stationary(states, 2);
    CHECK(pi[0] == doctest::Approx(0.75));
    CHECK(pi[1] == doctest::Approx(0.25));
    const auto empty = estimate_stationary(std::vector<int>{}, 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(empty[i] == doctest::Approx(0.25));

    Rng rng(1);
    const markov::TransitionMatrix p{{0.7, 0.2, 0.1}, {0.3, 0.3, 0.4}, {0.2, 0.5, 0.3}};
    const auto truth = stationary_distribution(p);
    const auto path = sample_path(p, 100'000, rng);
    CHECK(tv(estimate_stationary(path, 3).values(), truth.values()) <= 0.01);

    // Expected TV error shrinks with sample size.
    std::vector<double> mean_error;
    for (int n : {100, 1000, 10'000}) {
        double e = 0.0;
        for (int r = 0; r < 60; ++r) e += tv(estimate_stationary(sample_path(p, n, rng), 3).values(), truth.values());
        mean_error.push_back(e / 60.0);
    }
    CHECK(mean_error[0] > mean_error[1]);
    CHECK(mean_error[1] > mean_error[2]);
}

TEST_CASE("estimate_transition") {
    // Two logs [0,0,1] and [1,0]: from 0 {0->0, 0->1}, from 1 {1->0}.
    const std::vector<std::vector<int>> logs{{0, 0, 1}, {1, 0}};
    const auto m = estimate_transition(logs, 2);
    CHECK(m(0, 0) == doctest::Approx(0.5));
    CHECK(m(0, 1) == doctest::Approx(0.5));
    CHECK(m(1, 0) == doctest::Approx(1.0));
    CHECK(m(1, 1) == doctest::Approx(0.0));

    const auto single = estimate_transition(std::vector<int>{2}, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(single(i, j) == doctest::Approx(1.0 / 3.0));

    Rng rng(2);
    const markov::TransitionMatrix p{{0.7, 0.2, 0.1}, {0.3, 0.3, 0.4}, {0.2, 0.5, 0.3}};
    const auto est = estimate_transition(sample_path(p, 100'000, rng), 3);
    CHECK((est - p.matrix()).cwiseAbs().maxCoeff() <= 0.02);

    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> s(static_cast<std::size_t>(rng.uniform_int(0, 12)));
        for (auto& v : s) v = rng.uniform_int(0, 3);
        const auto t = estimate_transition(s, 4);
        for (int i = 0; i < 4; ++i) {
            CHECK(t.row(i).sum() == doctest::Approx(1.0));
            CHECK(t.row(i).minCoeff() >= 0.0);
        }
        const auto pi = estimate_stationary(s, 4);
        CHECK(std::accumulate(pi.values().begin(), pi.values().end(), 0.0) == doctest::Approx(1.0));
    }
}

TEST_CASE("distance examples and metric properties") {
    const std::vector<double> a{1.0, 0.0}, b{0.0, 1.0};
    CHECK(wasserstein_p(a, a) == 0.0);
    CHECK(wasserstein_p(a, b, 2.0) == doctest::Approx(1.0));
    const std::vector<double> c{0.8, 0.2}, d{0.6, 0.4};
    CHECK(wasserstein_p(c, d, 2.0) == doctest::Approx(0.2));
    CHECK_THROWS_AS(wasserstein_p(a, std::vector<double>{1.0, 0.0, 0.0}), std::invalid_argument);

    Rng rng(3);
    auto simplex_point = [&](std::size_t n) {
        std::vector<double> v(n);
        double s = 0.0;
        for (auto& x : v) s += (x = rng.gamma(1.0));
        for (auto& x : v) x /= s;
        return v;
    };
    for (int i = 0; i < 1000; ++i) {
        const auto x = simplex_point(4), y = simplex_point(4), z = simplex_point(4);
        const double p = 1.0 + 2.0 * rng.uniform();
        CHECK(wasserstein_p(x, x, p) == 0.0);
        CHECK(wasserstein_p(x, y, p) >= 0.0);
        CHECK(wasserstein_p(x, y, p) == doctest::Approx(wasserstein_p(y, x, p)).epsilon(1e-12));
        CHECK(wasserstein_p(x, z, p) <= wasserstein_p(x, y, p) + wasserstein_p(y, z, p) + 1e-12);
    }
}

TEST_CASE("associate_class") {
    CHECK_FALSE(associate_class(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}, {}).has_value());

    const markov::StationaryDistribution m0({0.6, 0.2, 0.2}), m1({0.2, 0.6, 0.2}), s0({0.7, 0.3}), s1({0.3, 0.7});
    const std::vector<EstimatedClass> two{{0, m0, s0, markov::RowMatrix::Identity(3, 3), 1},
                                          {1, m1, s1, markov::RowMatrix::Identity(3, 3), 1}};
    CHECK(associate_class(m1.values(), s1.values(), two) == 1);
    CHECK(associate_class(m0.values(), s0.values(), two) == 0);
    // Midpoint between the two centroids: equidistant, lower id wins in either order.
    const std::vector<double> mid_m{0.4, 0.4, 0.2}, mid_s{0.5, 0.5};
    CHECK(associate_class(mid_m, mid_s, two) == 0);
    std::vector<EstimatedClass> swapped{two[1], two[0]};
    CHECK(associate_class(mid_m, mid_s, swapped) == 0);

    // Permuting the class list never changes a non-tied choice.
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<EstimatedClass> cls;
        for (int k = 0; k < 5; ++k) {
            std::vector<double> mv(3), sv(4);
            double a = 0, b = 0;
            for (auto& x : mv) a += (x = rng.uniform());
            for (auto& x : sv) b += (x = rng.uniform());
            for (auto& x : mv) x /= a;
            for (auto& x : sv) x /= b;
            cls.push_back({k, markov::StationaryDistribution(mv), markov::StationaryDistribution(sv),
                           markov::RowMatrix::Identity(3, 3), 1});
        }
        const std::vector<double> qm{0.3, 0.3, 0.4}, qs{0.1, 0.2, 0.3, 0.4};
        const auto first = associate_class(qm, qs, cls);
        std::shuffle(cls.begin(), cls.end(), rng.engine());
        CHECK(associate_class(qm, qs, cls) == first);
    }
}

TEST_CASE("association accuracy from observed chains") {
    Rng rng(5);
    const auto fam = markov::sample_family(markov::FamilyOptions{}, rng);
    std::vector<EstimatedClass> known;
    for (const auto& c : fam.classes) known.push_back(class_from_spec(c));
    const auto& target = fam.classes[2];
    int hits = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        const auto mv = estimate_stationary(sample_path(target.motion_transition, 20, rng), fam.motion_states());
        const auto sv = estimate_stationary(sample_path(target.signal_transition, 20, rng), fam.signal_states());
        hits += associate_class(mv.values(), sv.values(), known) == target.class_id;
    }
    MESSAGE("association accuracy at 20 observations: ", hits / double(trials));
    CHECK(hits >= 0.8 * trials);
}

TEST_CASE("form_classes") {
    Rng rng(6);
    FormationOptions opts;
    SUBCASE("empty input") {
        const auto r = form_classes({}, 3, 4, opts, rng);
        CHECK(r.classes.empty());
        CHECK(r.k == 0);
    }
    SUBCASE("one class") {
        // The split test has about a 5% false-split rate by construction, so check the rate.
        markov::FamilyOptions fo;
        fo.n_classes = 1;
        int single = 0;
        for (int rep = 0; rep < 10; ++rep) {
            const auto fam = markov::sample_family(fo, rng);
            const auto data = sample_targets(fam, 40, 400, rng);
            const auto r = form_classes(data.evidence, 3, 4, opts, rng);
            if (r.k != 1) continue;
            ++single;
            REQUIRE(r.classes.size() == 1);
            CHECK(r.classes[0].member_count == 40);
            CHECK(tv(r.classes[0].motion_stationary.values(), fam.classes[0].motion_stationary.values()) < 0.03);
        }
        CHECK(single >= 8);
    }
    SUBCASE("three separated classes") {
        int correct_k = 0;
        for (int rep = 0; rep < 5; ++rep) {
            const auto fam = markov::sample_family(markov::FamilyOptions{}, rng);
            const auto data = sample_targets(fam, 20, 400, rng);
            const auto r = form_classes(data.evidence, 3, 4, opts, rng);
            correct_k += r.k == 3;
            REQUIRE(r.labels.size() == data.truth.size());
            CHECK(majority_label_accuracy(r.labels, data.truth) >= 0.9);
            for (const auto& c : r.classes) {
                CHECK(c.motion_transition.rows() == 3);
                for (int i = 0; i < 3; ++i) CHECK(c.motion_transition.row(i).sum() == doctest::Approx(1.0));
            }
        }
        CHECK(correct_k == 5);
    }
}

TEST_CASE("kmeans and silhouette on separated blobs") {
    Rng rng(7);
    std::vector<Feature> pts;
    std::vector<int> truth;
    const std::vector<std::vector<double>> centres{{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}};
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 15; ++i) {
            std::vector<double> m = centres[c];
            m[0] += 0.02 * rng.uniform();
            double s = m[0] + m[1] + m[2];
            for (auto& x : m) x /= s;
            pts.push_back({m, {0.5, 0.5}});
            truth.push_back(c);
        }
    FormationOptions opts;
    const auto km = kmeans(pts, 3, opts, rng);
    CHECK(majority_label_accuracy(km.labels, truth) == 1.0);
    CHECK(silhouette_score(pts, km.labels, 3) > 0.8);
    const auto km2 = kmeans(pts, 2, opts, rng);
    CHECK(silhouette_score(pts, km2.labels, 2) < silhouette_score(pts, km.labels, 3));
    for (const auto& c : km.centroids) CHECK(std::accumulate(c.motion.begin(), c.motion.end(), 0.0) == doctest::Approx(1.0));

    const std::vector<int> labels{0, 0, 1, 1, 1}, t{2, 2, 2, 0, 0};
    CHECK(majority_label_accuracy(labels, t) == doctest::Approx(0.8));
    CHECK(majority_labels(labels, t, 3) == std::vector<int>{2, 0, -1});
}

TEST_CASE("feature distance is the equal-weight sum") {
    const Feature a{{1.0, 0.0}, {0.5, 0.5}}, b{{0.0, 1.0}, {0.7, 0.3}};
    CHECK(feature_distance(a, b) == doctest::Approx(1.0 + 0.2));
    const TargetEvidence ev{{0, 0, 1, 2}, {}};
    const auto f = make_feature(ev, 3, 4);
    CHECK(f.motion == std::vector<double>{0.5, 0.25, 0.25});
    CHECK(f.signal == std::vector<double>{0.25, 0.25, 0.25, 0.25});
}
