#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "crn/sensing.hpp"

using namespace crn;
using namespace crn::sensing;

namespace {

// Oracle in decibel arithmetic: SNR = Pt + Gt + Gr + 20log(lambda) - 20log(4 pi R) - (kT0 + F + B) - L.
double snr_db_oracle(double range) {
    const double pt = 0.0, gains = 0.0;
    const double lambda_db = 20.0 * std::log10(0.2998);
    const double spreading = 20.0 * std::log10(4.0 * std::numbers::pi * range);
    const double noise_db = 10.0 * std::log10(1.380649e-23 * 290.0) + 10.0 + 60.0;
    const double loss_db = 10.0 * std::log10(2.0);
    return pt + gains + lambda_db - spreading - noise_db - loss_db;
}

double bisect_zero_snr(const EsmLinkParams& link) {
    double lo = 1.0, hi = 1e9;
    for (int i = 0; i < 200; ++i) {
        const double mid = std::sqrt(lo * hi);
        (esm_snr_db(link, mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

scene::SceneState one_target_scene(double x, double y, int signal_state) {
    scene::SceneState sc;
    scene::TargetTruth t;
    t.id = 7;
    t.kinematic_state(0) = x;
    t.kinematic_state(2) = y;
    t.signal_state = signal_state;
    sc.targets.push_back(t);
    return sc;
}

scene::Node centre_node() {
    scene::Node n;
    n.id = 3;
    n.position = {5000.0, 5000.0};
    n.radar_range = 2000.0;
    return n;
}

}  // namespace

TEST_CASE("esm_snr_db") {
    const EsmLinkParams link;
    CHECK(std::abs(esm_snr_db(link, 100e3) - (-1.48)) < 0.005);
    CHECK(std::abs(esm_snr_db(link, 10e3) - 18.52) < 0.005);
    CHECK(std::abs(esm_snr_db(link, 100e3) - snr_db_oracle(100e3)) < 1e-9);
    CHECK(std::abs(esm_snr_db(link, 37e3) - snr_db_oracle(37e3)) < 1e-9);
    CHECK(std::abs(esm_snr_db(link, 10e3) - esm_snr_db(link, 100e3) - 20.0) < 1e-9);
    for (double r : {1e3, 5e3, 42e3})
        CHECK(std::abs(esm_snr_db(link, r) - esm_snr_db(link, 2.0 * r) - 20.0 * std::log10(2.0)) < 1e-9);
    CHECK_THROWS_AS(esm_snr_db(link, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(esm_snr_db(link, -5.0), std::invalid_argument);

    double prev = esm_snr_db(link, 10.0);
    for (double r = 20.0; r < 1e6; r *= 1.3) {
        const double s = esm_snr_db(link, r);
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("max_esm_range") {
    EsmLinkParams link;
    const double r = max_esm_range(link);
    CHECK(std::abs(r - 84.31e3) < 10.0);
    CHECK(std::abs(r - bisect_zero_snr(link)) < 1e-3);
    CHECK(std::abs(esm_snr_db(link, r)) < 1e-9);
    EsmLinkParams strong = link;
    strong.target_tx_power *= 4.0;
    CHECK(max_esm_range(strong) == doctest::Approx(2.0 * r).epsilon(1e-12));
    double prev = 0.0;
    for (double p = 0.1; p < 100.0; p *= 2.0) {
        link.target_tx_power = p;
        CHECK(max_esm_range(link) > prev);
        prev = max_esm_range(link);
    }
}

TEST_CASE("intercept_probability") {
    CHECK(intercept_probability({1.0, 1.0, 1.0}) == 1.0);
    CHECK(intercept_probability({0.5, 1.0, 0.5}) == 0.25);
    CHECK(intercept_probability({0.0, 0.7, 0.9}) == 0.0);
    CHECK(intercept_probability({0.7, 0.0, 0.9}) == 0.0);
    CHECK(intercept_probability({0.7, 0.9, 0.0}) == 0.0);
    CHECK(intercept_probability(InterceptFactors{}) == doctest::Approx(0.72));
    CHECK_THROWS_AS(intercept_probability({1.1, 1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(intercept_probability({1.0, -0.1, 1.0}), std::invalid_argument);
}

TEST_CASE("max_intercept_range") {
    const RadarInterceptParams p;
    CHECK(max_intercept_range(p, 0.0) == 0.0);
    // sqrt(P lambda^2 / ((4 pi)^2 k T0 F B)) written out term by term.
    const double sensitivity = 1.380649e-23 * 290.0 * 10.0 * 1e6;
    const double oracle = std::sqrt(1000.0 * 0.09 / (157.91367041742973 * sensitivity));
    CHECK(max_intercept_range(p, 1.0) == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(std::abs(max_intercept_range(p, 1.0) - 3.773e6) < 0.001e6);
    CHECK(max_intercept_range(p, 0.64) == doctest::Approx(0.8 * max_intercept_range(p, 1.0)).epsilon(1e-12));
    double prev = 0.0;
    for (double d = 0.05; d <= 1.0; d += 0.05) {
        CHECK(max_intercept_range(p, d) > prev);
        prev = max_intercept_range(p, d);
    }
    CHECK(max_intercept_range(p, 0.3) == max_intercept_range(p, 0.3));
    CHECK_THROWS_AS(max_intercept_range(p, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(max_intercept_range(p, -0.1), std::invalid_argument);
}

TEST_CASE("radar_scan") {
    const auto node = centre_node();
    Rng rng(1);
    SUBCASE("nothing to see") {
        RadarScanParams params;
        params.detection_probability = 0.0;
        params.false_alarm_rate = 0.0;
        const auto sc = one_target_scene(5100.0, 5100.0, 1);
        for (int i = 0; i < 100; ++i) CHECK(radar_scan(node, sc, params, rng).empty());
        params.detection_probability = 1.2;
        CHECK_THROWS_AS(radar_scan(node, sc, params, rng), std::invalid_argument);
    }
    SUBCASE("thinned extended returns") {
        RadarScanParams params;
        params.false_alarm_rate = 0.0;
        const auto sc = one_target_scene(5500.0, 4800.0, 1);
        const int scans = 10'000;
        double total = 0.0, sx = 0.0, sxx = 0.0;
        for (int i = 0; i < scans; ++i) {
            const auto dets = radar_scan(node, sc, params, rng);
            total += static_cast<double>(dets.size());
            for (const auto& d : dets) {
                CHECK(d.source_target == 7);
                CHECK(d.node_id == 3);
                const double e = d.position.x() - 5500.0;
                sx += e;
                sxx += e * e;
            }
        }
        const double mean = total / scans;
        // Poisson(2.7) count: standard error sqrt(2.7 / 1e4).
        CHECK(std::abs(mean - 2.7) < 4.0 * std::sqrt(2.7 / scans));
        CHECK(std::abs(std::sqrt(sxx / total - (sx / total) * (sx / total)) - 25.0) < 0.5);
    }
    SUBCASE("out-of-range target is never detected") {
        RadarScanParams params;
        params.false_alarm_rate = 0.0;
        const auto sc = one_target_scene(5000.0, 7000.5, 1);
        for (int i = 0; i < 1000; ++i) CHECK(radar_scan(node, sc, params, rng).empty());
    }
    SUBCASE("false alarms are uniform over the covered disk") {
        RadarScanParams params;
        params.false_alarm_rate = 5.0;
        scene::SceneState empty;
        const int scans = 10'000;
        std::vector<double> u;
        double total = 0.0;
        for (int i = 0; i < scans; ++i) {
            const auto dets = radar_scan(node, empty, params, rng);
            total += static_cast<double>(dets.size());
            for (const auto& d : dets) {
                CHECK(d.source_target == -1);
                const double r = (d.position - node.position).norm();
                CHECK(r <= 2000.0 + 1e-9);
                u.push_back(r * r / (2000.0 * 2000.0));  // uniform on a disk <=> r^2 uniform
            }
        }
        CHECK(std::abs(total / scans - 5.0) < 4.0 * std::sqrt(5.0 / scans));
        std::sort(u.begin(), u.end());
        double ks = 0.0;
        const double n = static_cast<double>(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) ks = std::max({ks, (i + 1) / n - u[i], u[i] - i / n});
        CHECK(ks < 1.628 / std::sqrt(n));
    }
    SUBCASE("mean count over many targets") {
        RadarScanParams params;
        scene::SceneState sc;
        for (int k = 0; k < 4; ++k) {
            scene::TargetTruth t;
            t.id = k;
            t.kinematic_state(0) = 4000.0 + 500.0 * k;
            t.kinematic_state(2) = 5200.0;
            sc.targets.push_back(t);
        }
        const int scans = 100'000;
        double total = 0.0;
        for (int i = 0; i < scans; ++i) total += static_cast<double>(radar_scan(node, sc, params, rng).size());
        CHECK(std::abs(total / scans - (4 * 3.0 * 0.9 + 1.0)) < 0.02 * (4 * 3.0 * 0.9 + 1.0));
    }
}

TEST_CASE("esm_scan") {
    const auto node = centre_node();
    Rng rng(2);
    SUBCASE("silent targets are never intercepted") {
        EsmScanParams params;
        params.factors = {1.0, 1.0, 1.0};
        const auto sc = one_target_scene(5200.0, 5000.0, 0);
        for (int i = 0; i < 1000; ++i) CHECK(esm_scan(node, sc, params, rng).empty());
    }
    SUBCASE("certain intercept reports the true state") {
        EsmScanParams params;
        params.factors = {1.0, 1.0, 1.0};
        const auto sc = one_target_scene(5000.0, 6000.0, 2);
        double sb = 0.0, sbb = 0.0;
        const int scans = 10'000;
        for (int i = 0; i < scans; ++i) {
            const auto obs = esm_scan(node, sc, params, rng);
            REQUIRE(obs.size() == 1);
            CHECK(obs[0].signal_state == 2);
            CHECK(obs[0].source_target == 7);
            const double e = obs[0].bearing - std::numbers::pi / 2.0;
            sb += e;
            sbb += e * e;
        }
        CHECK(std::abs(sb / scans) < 4.0 * params.bearing_sigma / std::sqrt(scans));
        CHECK(std::abs(std::sqrt(sbb / scans) - 2.0 * std::numbers::pi / 180.0) < 0.001);
    }
    SUBCASE("intercept frequency") {
        EsmScanParams params;
        params.factors = {0.6, 1.0, 1.0};
        const auto sc = one_target_scene(5300.0, 5300.0, 1);
        int hits = 0;
        for (int i = 0; i < 10'000; ++i) hits += static_cast<int>(esm_scan(node, sc, params, rng).size());
        CHECK(std::abs(hits / 1e4 - 0.6) <= 0.02);
    }
    SUBCASE("never reports out-of-range or silent targets") {
        EsmScanParams params;
        params.factors = {1.0, 1.0, 1.0};
        scene::SceneState sc;
        for (int k = 0; k < 50; ++k) {
            scene::TargetTruth t;
            t.id = k;
            t.kinematic_state(0) = 200.0 * k;
            t.kinematic_state(2) = 5000.0 + 37.0 * k;
            t.signal_state = k % 4;
            sc.targets.push_back(t);
        }
        for (int i = 0; i < 200; ++i)
            for (const auto& o : esm_scan(node, sc, params, rng)) {
                const auto* t = sc.find_target(o.source_target);
                REQUIRE(t != nullptr);
                CHECK(t->signal_state != 0);
                CHECK(o.signal_state == t->signal_state);
                CHECK((t->position() - node.position).norm() <= node.radar_range);
            }
    }
    SUBCASE("beyond the link range nothing is heard") {
        EsmScanParams params;
        params.factors = {1.0, 1.0, 1.0};
        auto weak = node;
        weak.esm_link.target_tx_power = 1e-9;  // max range ~ 2.7 m
        const auto sc = one_target_scene(5500.0, 5000.0, 1);
        for (int i = 0; i < 100; ++i) CHECK(esm_scan(weak, sc, params, rng).empty());
    }
}
