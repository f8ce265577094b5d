#include "hdout/consistency.hpp"
#include "hdout/errors.hpp"
#include "hdout/harness.hpp"
#include "hdout/model.hpp"
#include "hdout/stats.hpp"
#include "support.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

using namespace hdout;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

MixtureModelSpec spiked(std::size_t d, double lambda) {
    MixtureModelSpec s;
    s.d = d;
    s.directions.assign(d, {1.0, 1.0, 0.0, std::nullopt});
    s.directions[0] = {lambda, lambda, 0.0, std::nullopt};
    return s;
}

TierStructure single_tier(const MixtureModelSpec& spec, ScaleSchedule delta, double c) {
    const std::array<std::size_t, 1> sizes{1};
    const std::array<ScaleSchedule, 1> deltas{delta};
    return TierStructure::from_model(spec, sizes, deltas, c);
}

const CheckResult* find(const std::vector<CheckResult>& checks, const std::string& name, std::size_t index) {
    for (const auto& c : checks)
        if (c.name == name && c.index == index) return &c;
    return nullptr;
}

} // namespace

TEST_CASE("population eigenvalues") {
    CHECK(population_eigenvalue({1.0, 2000.0, 0.02, std::nullopt}) == doctest::Approx(40.98));
    CHECK(asymptotic_eigenvalue({1.0, 2000.0, 0.02, std::nullopt}) == doctest::Approx(40.0));
    CHECK(population_eigenvalue({7.0, 123.0, 0.0, std::nullopt}) == 7.0);
    CHECK(asymptotic_eigenvalue({7.0, 123.0, 0.0, std::nullopt}) == 7.0);
    CHECK(population_eigenvalue({0.0, 5.0, 1.0, std::nullopt}) == 5.0);
}

TEST_CASE("Marchenko-Pastur bounds") {
    auto b = mp_bulk_bounds(0.0, 1.0);
    CHECK(b.low == 1.0);
    CHECK(b.high == 1.0);
    b = mp_bulk_bounds(1.0, 1.0);
    CHECK(b.low == doctest::Approx(0.0));
    CHECK(b.high == doctest::Approx(4.0));
    b = mp_bulk_bounds(0.5, 2.0);
    CHECK(b.low == doctest::Approx(0.1716).epsilon(1e-3));
    CHECK(b.high == doctest::Approx(5.8284).epsilon(1e-4));
    CHECK_THROWS_AS(mp_bulk_bounds(kInf, 1.0), ConfigError);
    CHECK_THROWS_AS(mp_bulk_bounds(-1.0, 1.0), ConfigError);
}

TEST_CASE("regime classification") {
    SUBCASE("delta = n, d = n is all-strong from n = 100") {
        const auto spec = spiked(200, 10.0);
        const auto t = single_tier(spec, {1.0, 1.0}, 1.0);
        const auto r = classify_regime(t, 100, 100);
        CHECK(r.kind == RegimeKind::all_strong);
        CHECK(r.ratios[0] == doctest::Approx(0.01));
        CHECK(r.angle_behavior[0] == "consistent");
        CHECK(classify_regime(t, 10, 10).kind == RegimeKind::degenerate);
    }
    SUBCASE("two tiers, partial(1)") {
        MixtureModelSpec spec = spiked(10, 100.0);
        spec.directions[1] = {2.0, 2.0, 0.0, std::nullopt};
        const std::array<std::size_t, 2> sizes{1, 1};
        const std::array<ScaleSchedule, 2> deltas{ScaleSchedule{1.0, 2.0}, ScaleSchedule{1.0, 0.0}};
        const auto t = TierStructure::from_model(spec, sizes, deltas, kInf);
        const auto r = classify_regime(t, 10000, 1000000);
        CHECK(r.kind == RegimeKind::partial);
        CHECK(r.h == 1);
        CHECK(r.ratios[0] == doctest::Approx(1e-6));
        CHECK(r.ratios[1] == doctest::Approx(100.0));
        CHECK(r.angle_behavior[1] == "strongly_inconsistent");
    }
    SUBCASE("ratio 0.5 is degenerate") {
        const auto spec = spiked(10, 2.0);
        const auto t = single_tier(spec, {2.0, 0.0}, 1.0);
        const auto r = classify_regime(t, 10, 10);
        CHECK(r.ratios[0] == doctest::Approx(0.5));
        CHECK(r.kind == RegimeKind::degenerate);
        CHECK(r.angle_behavior[0] == "undetermined");
    }
    SUBCASE("every spike weak is partial(0)") {
        const auto spec = spiked(50000, 5.0);
        const auto t = single_tier(spec, {5.0, 0.0}, kInf);
        const auto r = classify_regime(t, 100, 50000);
        CHECK(r.kind == RegimeKind::partial);
        CHECK(r.h == 0);
    }
}

TEST_CASE("tier validation") {
    const auto spec = spiked(10, 5.0);
    const std::array<std::size_t, 1> sizes{1};
    const std::array<ScaleSchedule, 2> two{ScaleSchedule{}, ScaleSchedule{}};
    CHECK_THROWS_AS(TierStructure::from_model(spec, sizes, two, 1.0), ConfigError);
    TierStructure t = single_tier(spec, {5.0, 0.0}, 1.0);
    t.tiers[0].size = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = single_tier(spec, {5.0, 0.0}, 1.0);
    t.c = -1.0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("angle to subspace") {
    Eigen::VectorXd e1 = Eigen::VectorXd::Unit(3, 0);
    const std::array<std::size_t, 1> one{0}, two{1};
    const std::array<std::size_t, 2> both{0, 1};
    CHECK(angle_to_subspace(e1, one) == doctest::Approx(0.0));
    CHECK(angle_to_subspace(e1, two) == doctest::Approx(90.0));
    Eigen::VectorXd v(3);
    v << 1, 1, 0;
    v /= std::sqrt(2.0);
    CHECK(angle_to_subspace(v, one) == doctest::Approx(45.0));
    CHECK(angle_to_subspace(v, both) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK_THROWS_AS(angle_to_subspace(2.0 * e1, one), NormalizationError);

    // with an explicit basis the angle is measured against its columns
    const Eigen::MatrixXd Q = random_orthonormal(3, 4);
    CHECK(angle_to_subspace(Q.col(1), two, &Q) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(angle_to_subspace(Q.col(1), one, &Q) == doctest::Approx(90.0));

    // enlarging the set never increases the angle
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Eigen::VectorXd u = testing::gaussian_matrix(8, 1, seed).col(0).normalized();
        double prev = 90.0;
        std::vector<std::size_t> set;
        for (std::size_t k = 0; k < 8; ++k) {
            set.push_back(k);
            const double a = angle_to_subspace(u, set);
            CHECK(a <= prev + 1e-12);
            prev = a;
        }
        CHECK(prev == doctest::Approx(0.0).epsilon(1e-6));
    }
}

TEST_CASE("subspace energy") {
    const Eigen::MatrixXd X = testing::gaussian_matrix(6, 20, 3);
    const auto s = sample_covariance_spectrum(X);
    const std::array<std::size_t, 6> all{0, 1, 2, 3, 4, 5};
    for (std::size_t k = 0; k < 6; ++k) CHECK(subspace_energy(s, k, all) == doctest::Approx(1.0));
    const std::array<std::size_t, 2> some{0, 1};
    CHECK(subspace_energy(s, 0, some) <= 1.0);
    const std::array<std::size_t, 1> missing{6};
    CHECK_THROWS_AS(subspace_energy(s, 0, missing), ConfigError);
    CHECK_THROWS_AS(subspace_energy(s, 6, some), ConfigError);

    const auto wide = sample_covariance_spectrum(testing::gaussian_matrix(30, 5, 3));
    const std::array<std::size_t, 5> five{0, 1, 2, 3, 4};
    for (std::size_t k = 0; k < 30; ++k) CHECK(subspace_energy(wide, k, five) <= 1.0 + 1e-12);
}

TEST_CASE("outlier score") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(3, 40);
    X(0, 0) = 5.0;
    for (int j = 1; j < 40; ++j) X(1, j) = (j % 2 ? 0.1 : -0.1);
    X(2, 5) = 0.01;
    const auto s = sample_covariance_spectrum(X);
    const std::array<std::size_t, 1> first{0};
    const auto score = outlier_score(s, X, first);
    CHECK(score(0) == doctest::Approx(25.0));
    CHECK(score(1) == doctest::Approx(0.0));
    CHECK_THROWS_AS(outlier_score(s, X, std::span<const std::size_t>{}), ConfigError);
    const std::array<double, 2> bad_weights{1.0, 2.0};
    CHECK_THROWS_AS(outlier_score(s, X, first, bad_weights), ConfigError);
    const auto w = energy_weights(s, 0, first);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == doctest::Approx(1.0));
}

TEST_CASE("c = 0 skips eigenvector checks") {
    const auto spec = spiked(5, 50.0);
    const auto ds = generate(spec, 400, 1);
    const auto t = single_tier(spec, {50.0, 0.0}, 0.0);
    for (const auto& c : eigenvector_checks(ds, t)) CHECK(c.verdict == Verdict::skipped);
    const auto ev = eigenvalue_checks(ds, t);
    const auto* ratio = find(ev, "eigenvalue_ratio", 1);
    REQUIRE(ratio);
    CHECK(ratio->verdict == Verdict::pass);
}

TEST_CASE("degenerate regime skips the bulk") {
    const auto spec = spiked(100, 2.0);
    const auto ds = generate(spec, 100, 1);
    const auto t = single_tier(spec, {2.0, 0.0}, 1.0);
    const auto ev = eigenvalue_checks(ds, t);
    const auto* bulk = find(ev, "bulk", 0);
    REQUIRE(bulk);
    CHECK(bulk->verdict == Verdict::skipped);
    for (const auto& c : eigenvector_checks(ds, t))
        if (c.name != "noise_subspace_angle") CHECK(c.verdict == Verdict::skipped);
}

TEST_CASE("all-strong spike passes ratio, bulk and angle checks") {
    // delta = n^1.2 with d = n = 400: ratio 400 / 400^2.2 ~ 0.0014
    const std::size_t n = 400;
    const double lambda = std::pow(400.0, 1.2);
    const auto spec = spiked(n, lambda);
    const auto t = single_tier(spec, {1.0, 1.2}, 1.0);
    int passes = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto ds = generate(spec, n, seed, Retention::never);
        const auto s = sample_covariance_spectrum(ds.X);
        bool ok = true;
        for (const auto& c : eigenvalue_checks(ds, t, s)) ok = ok && c.verdict != Verdict::fail;
        for (const auto& c : eigenvector_checks(ds, t, s)) ok = ok && c.verdict != Verdict::fail;
        passes += ok;
    }
    CHECK(passes >= 9);
}

TEST_CASE("toy example leading eigenvalue near 3000") {
    const auto spec = toy_spec();
    int inside = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto ds = generate(spec, kToyN, toy_seed(1, seed), Retention::never);
        SpectrumOptions o;
        o.compute_vectors = false;
        const double r = sample_covariance_spectrum(ds.X, o).eigenvalues(0) / 3000.0;
        inside += r >= 0.8 && r <= 1.2;
    }
    CHECK(inside >= 18);
}

TEST_CASE("strong inconsistency of a weak spike") {
    // n = 50, d = 20000, lambda = 5: d / (n lambda) = 80
    const std::size_t n = 50, d = 20000;
    const auto spec = spiked(d, 5.0);
    const auto t = single_tier(spec, {5.0, 0.0}, kInf);
    int passes = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto ds = generate(spec, n, seed, Retention::never);
        const auto checks = eigenvector_checks(ds, t);
        const auto* c = find(checks, "inner_product", 1);
        REQUIRE(c);
        CHECK(c->tolerance == doctest::Approx(3.0 * std::sqrt(50.0 * 5.0 / 20000.0)));
        passes += c->verdict == Verdict::pass;
        const auto ev = eigenvalue_checks(ds, t);
        const auto* upper = find(ev, "bulk_scaled_upper", 1);
        REQUIRE(upper);
    }
    CHECK(passes >= 18);
}
