#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "crn/scene.hpp"

using namespace crn;
using namespace crn::scene;

namespace {

markov::TargetFamily test_family(std::uint64_t seed = 1) {
    Rng rng(seed);
    return markov::sample_family(markov::FamilyOptions{}, rng);
}

double poisson_pmf(int k, double mean) { return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0)); }

// Chi-square statistic of integer samples against Poisson(mean), pooling tails so every
// bin expects at least 5 counts. Returns (statistic, degrees of freedom).
std::pair<double, int> poisson_chi_square(const std::vector<int>& samples, double mean) {
    const double n = static_cast<double>(samples.size());
    std::vector<std::pair<int, int>> bins;  // [lo, hi]
    int lo = 0;
    double acc = 0.0;
    for (int k = 0; k < 1000; ++k) {
        acc += poisson_pmf(k, mean) * n;
        if (acc >= 5.0 && k > mean) {
            double tail = 0.0;
            for (int j = k + 1; j < k + 200; ++j) tail += poisson_pmf(j, mean) * n;
            if (tail < 5.0) {
                bins.emplace_back(lo, 1'000'000);
                break;
            }
        }
        if (acc >= 5.0) {
            bins.emplace_back(lo, k);
            lo = k + 1;
            acc = 0.0;
        }
    }
    double stat = 0.0;
    for (const auto& [a, b] : bins) {
        double expected = 0.0;
        for (int k = a; k <= std::min(b, a + 2000); ++k) expected += poisson_pmf(k, mean) * n;
        const auto observed = static_cast<double>(std::count_if(samples.begin(), samples.end(), [&](int s) { return s >= a && s <= b; }));
        stat += (observed - expected) * (observed - expected) / expected;
    }
    return {stat, static_cast<int>(bins.size()) - 1};
}

// Upper 1% points of the chi-square distribution (Wilson-Hilferty approximation).
double chi_square_critical_99(int df) {
    const double z = 2.3263478740408408;
    const double a = 2.0 / (9.0 * df);
    return df * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

// Kolmogorov-Smirnov distance of samples from U(0, 1).
double ks_uniform(std::vector<double> u) {
    std::sort(u.begin(), u.end());
    const double n = static_cast<double>(u.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        d = std::max({d, (i + 1) / n - u[i], u[i] - i / n});
    return d;
}

}  // namespace

TEST_CASE("generate_scene counts follow the Poisson law") {
    const auto fam = test_family();
    SceneConfig cfg;
    const Region region{10'000.0};
    const int seeds = 10'000;
    std::vector<int> nodes, targets;
    std::vector<double> ux, uy;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(derive_seed(42, {static_cast<std::uint64_t>(s)}));
        const auto sc = generate_scene(cfg, region, fam, rng);
        nodes.push_back(static_cast<int>(sc.nodes.size()));
        targets.push_back(static_cast<int>(sc.targets.size()));
        if (s < 500)
            for (const auto& t : sc.targets) {
                ux.push_back(t.position().x() / region.side_length);
                uy.push_back(t.position().y() / region.side_length);
                CHECK(region.contains(t.position()));
                CHECK(t.birth_time == 0);
            }
    }
    double mean_nodes = 0.0, mean_targets = 0.0;
    for (int i = 0; i < seeds; ++i) mean_nodes += nodes[i], mean_targets += targets[i];
    mean_nodes /= seeds;
    mean_targets /= seeds;
    CHECK(std::abs(mean_nodes - 20.0) <= 3.0 * std::sqrt(20.0) / 100.0);
    CHECK(std::abs(mean_targets - 30.0) <= 3.0 * std::sqrt(30.0) / 100.0);

    const auto [chi_n, df_n] = poisson_chi_square(nodes, 20.0);
    CHECK(chi_n < chi_square_critical_99(df_n));
    const auto [chi_t, df_t] = poisson_chi_square(targets, 30.0);
    CHECK(chi_t < chi_square_critical_99(df_t));

    const double ks_crit = 1.628 / std::sqrt(static_cast<double>(ux.size()));
    CHECK(ks_uniform(ux) < ks_crit);
    CHECK(ks_uniform(uy) < ks_crit);
}

TEST_CASE("generate_scene edge cases") {
    const auto fam = test_family();
    Rng rng(1);
    SceneConfig cfg;
    cfg.target_density = 0.0;
    for (int i = 0; i < 100; ++i) CHECK(generate_scene(cfg, Region{10'000.0}, fam, rng).targets.empty());
    CHECK_THROWS_AS(generate_scene(cfg, Region{0.0}, fam, rng), std::invalid_argument);
    markov::TargetFamily empty;
    CHECK_THROWS_AS(generate_scene(SceneConfig{}, Region{}, empty, rng), std::invalid_argument);
    SceneConfig bad;
    bad.survival_probability = 0.0;
    CHECK_THROWS_AS(generate_scene(bad, Region{}, fam, rng), std::invalid_argument);
    bad = SceneConfig{};
    bad.step_duration = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = SceneConfig{};
    bad.node_density = -1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("initial chain states follow the class stationary distributions") {
    const auto fam = test_family(3);
    SceneConfig cfg;
    cfg.target_density = 5e-6;
    std::vector<std::vector<double>> counts(fam.classes.size(), std::vector<double>(fam.signal_states(), 0.0));
    std::vector<double> totals(fam.classes.size(), 0.0);
    for (int s = 0; s < 400; ++s) {
        Rng rng(derive_seed(7, {static_cast<std::uint64_t>(s)}));
        const auto sc = generate_scene(cfg, Region{}, fam, rng);
        for (const auto& t : sc.targets) {
            counts[static_cast<std::size_t>(t.class_id)][static_cast<std::size_t>(t.signal_state)] += 1.0;
            totals[static_cast<std::size_t>(t.class_id)] += 1.0;
        }
    }
    for (std::size_t c = 0; c < fam.classes.size(); ++c) {
        CHECK(std::abs(totals[c] / (totals[0] + totals[1] + totals[2]) - 1.0 / 3.0) < 0.01);
        for (std::size_t s = 0; s < fam.signal_states(); ++s)
            CHECK(std::abs(counts[c][s] / totals[c] - fam.classes[c].signal_stationary[s]) < 0.01);
    }
}

TEST_CASE("step_lifecycle") {
    const auto fam = test_family();
    SUBCASE("no deaths or births with certain survival") {
        SceneConfig cfg;
        cfg.survival_probability = 1.0;
        Rng rng(5);
        auto sc = generate_scene(cfg, Region{}, fam, rng);
        const auto n0 = sc.targets.size();
        const int next_id = sc.next_target_id;
        for (int i = 0; i < 100; ++i) step_scene(sc, cfg, fam, rng);
        CHECK(sc.targets.size() == n0);
        CHECK(sc.next_target_id == next_id);
        for (const auto& t : sc.targets) CHECK(sc.region.contains(t.position()));
    }
    SUBCASE("birth mean balances deaths") {
        SceneConfig cfg;
        Rng rng(6);
        auto sc = generate_scene(cfg, Region{}, fam, rng);
        const int steps = 10'000;
        long births = 0;
        double alive_sum = 0.0;
        std::vector<double> series;
        for (int i = 0; i < steps; ++i) {
            const int before = sc.next_target_id;
            step_lifecycle(sc, cfg, fam, rng);
            ++sc.step;
            births += sc.next_target_id - before;
            alive_sum += static_cast<double>(sc.targets.size());
            series.push_back(static_cast<double>(sc.targets.size()));
        }
        // (1 - p_s) * lambda_M * |B| = 0.02 * 30
        CHECK(std::abs(static_cast<double>(births) / steps - 0.6) < 0.03);
        CHECK(std::abs(alive_sum / steps - 30.0) < 0.05 * 30.0);

        // No trend: least-squares slope within two standard errors of zero. The count is
        // autocorrelated over about one lifetime, so the effective sample size is
        // steps / (2 / (1 - p_s)).
        double tm = (steps - 1) / 2.0, ym = alive_sum / steps, sxy = 0.0, sxx = 0.0;
        for (int i = 0; i < steps; ++i) {
            sxy += (i - tm) * (series[i] - ym);
            sxx += (i - tm) * (i - tm);
        }
        const double slope = sxy / sxx;
        double resid = 0.0;
        for (int i = 0; i < steps; ++i) {
            const double e = series[i] - ym - slope * (i - tm);
            resid += e * e;
        }
        const double n_eff = steps / (2.0 / (1.0 - cfg.survival_probability));
        const double se = std::sqrt(resid / (steps - 2) / sxx * (steps / n_eff));
        CHECK(std::abs(slope) <= 2.0 * se);
    }
}

TEST_CASE("coverage_probability") {
    CHECK(coverage_probability(0.0, 1e7) == 0.0);
    CHECK(coverage_probability(0.2e-6, std::numeric_limits<double>::infinity()) == 1.0);
    const double area = std::numbers::pi * 2000.0 * 2000.0;
    CHECK(coverage_probability(0.2e-6, area) == doctest::Approx(1.0 - std::exp(-0.2 * std::numbers::pi * 4.0)).epsilon(1e-12));
    CHECK(coverage_probability(0.2e-6, area) == doctest::Approx(0.9190).epsilon(1e-4));
    CHECK_THROWS_AS(coverage_probability(-1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(coverage_probability(1.0, -1.0), std::invalid_argument);
}

TEST_CASE("covered_targets") {
    SceneState sc;
    Node node;
    node.position = {5000.0, 5000.0};
    node.radar_range = 2000.0;
    CHECK(covered_targets(node, sc).empty());

    TargetTruth inside, outside;
    inside.id = 1;
    inside.kinematic_state(0) = 5000.0 + 2000.0 - 1e-6;
    inside.kinematic_state(2) = 5000.0;
    outside.id = 2;
    outside.kinematic_state(0) = 5000.0;
    outside.kinematic_state(2) = 5000.0 + 2000.0 + 1e-6;
    sc.targets = {inside, outside};
    CHECK(covered_targets(node, sc) == std::vector<int>{1});

    // Expected count lambda_M * pi * r^2 for a node away from the border.
    const auto fam = test_family();
    SceneConfig cfg;
    double total = 0.0;
    const int trials = 4000;
    for (int s = 0; s < trials; ++s) {
        Rng rng(derive_seed(11, {static_cast<std::uint64_t>(s)}));
        const auto scene = generate_scene(cfg, Region{}, fam, rng);
        total += static_cast<double>(covered_targets(node, scene).size());
        Node wide = node;
        wide.radar_range = 3000.0;
        const auto a = covered_targets(node, scene);
        const auto b = covered_targets(wide, scene);
        CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    }
    const double expected = cfg.target_density * std::numbers::pi * 2000.0 * 2000.0;
    CHECK(std::abs(total / trials - expected) < 4.0 * std::sqrt(expected / trials));
}

TEST_CASE("mean age and snapshots") {
    const auto fam = test_family();
    SceneConfig cfg;
    Rng rng(9);
    auto sc = generate_scene(cfg, Region{}, fam, rng);
    CHECK(mean_target_age(sc, 1.0) == 0.0);
    std::ostringstream out;
    write_snapshot_header(out);
    write_snapshot_rows(out, sc);
    const auto text = out.str();
    CHECK(text.rfind("step,target_id,class,x,y,vx,vy,motion_state,signal_state\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == sc.targets.size() + 1);
}

TEST_CASE("scene evolution is reproducible") {
    const auto fam = test_family();
    SceneConfig cfg;
    Rng a(77), b(77);
    auto sa = generate_scene(cfg, Region{}, fam, a);
    auto sb = generate_scene(cfg, Region{}, fam, b);
    for (int i = 0; i < 50; ++i) {
        step_scene(sa, cfg, fam, a);
        step_scene(sb, cfg, fam, b);
    }
    REQUIRE(sa.targets.size() == sb.targets.size());
    for (std::size_t i = 0; i < sa.targets.size(); ++i) CHECK(sa.targets[i].kinematic_state == sb.targets[i].kinematic_state);
}
