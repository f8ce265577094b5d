#include "hdout/errors.hpp"
#include "hdout/harness.hpp"
#include "hdout/model.hpp"
#include "hdout/rng.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace hdout;

namespace {

double sample_variance_of_row(const Eigen::MatrixXd& Y, Eigen::Index row) {
    // mean-zero model: second moment about zero
    return Y.row(row).squaredNorm() / static_cast<double>(Y.cols());
}

MixtureModelSpec single_direction(double tau1, double tau2, double w) {
    MixtureModelSpec s;
    s.d = 1;
    s.directions = {{tau1, tau2, w, std::nullopt}};
    return s;
}

} // namespace

TEST_SUITE("rng") {
    TEST_CASE("stream derivation is deterministic and label sensitive") {
        CHECK(rng::derive_seed(1, "noise", 0) == rng::derive_seed(1, "noise", 0));
        CHECK(rng::derive_seed(1, "noise", 0) != rng::derive_seed(1, "membership", 0));
        CHECK(rng::derive_seed(1, "noise", 0) != rng::derive_seed(1, "noise", 1));
        CHECK(rng::derive_seed(1, "noise", 0) != rng::derive_seed(2, "noise", 0));
        // FNV-1a reference value for the empty string and "a"
        CHECK(rng::hash_label("") == 0xCBF29CE484222325ULL);
        CHECK(rng::hash_label("a") == 0xAF63DC4C8601EC8CULL);
    }

    TEST_CASE("uniform01 stays in [0, 1)") {
        auto eng = rng::make_engine(5, "u");
        double lo = 1.0, hi = 0.0;
        for (int i = 0; i < 100000; ++i) {
            const double u = rng::uniform01(eng);
            lo = std::min(lo, u);
            hi = std::max(hi, u);
        }
        CHECK(lo >= 0.0);
        CHECK(hi < 1.0);
        CHECK(lo < 1e-3);
        CHECK(hi > 1.0 - 1e-3);
    }
}

TEST_SUITE("builders") {
    TEST_CASE("variable specific") {
        const std::size_t vars[] = {1};
        const auto s = build_variable_specific(3, vars, 100.0, 0.1);
        REQUIRE(s.directions.size() == 3);
        CHECK(s.directions[1].tau1 == 1.0);
        CHECK(s.directions[1].tau2 == 100.0);
        CHECK(s.directions[1].w == 0.1);
        CHECK(s.directions[0].tau2 == 1.0);
        CHECK(s.directions[2].w == 0.0);
        CHECK(s.basis.kind == BasisKind::standard);
        CHECK(s.outlier_indices() == std::vector<std::size_t>{1});
    }

    TEST_CASE("variable specific without outlier variables") {
        const auto s = build_variable_specific(5, {}, 100.0, 0.1);
        CHECK(s.outlier_indices().empty());
        CHECK(s.main_indices().size() == 5);
    }

    TEST_CASE("variable specific out of range") {
        const std::size_t vars[] = {3};  // 1-based variable 4 of 3
        CHECK_THROWS_AS(build_variable_specific(3, vars, 100.0, 0.1), ConfigError);
        CHECK_THROWS_AS(build_variable_specific(3, {}, 0.0, 0.1), ConfigError);
    }

    TEST_CASE("scale mixture") {
        const auto s = build_scale_mixture(4, 1.0, 9.0, 0.05);
        CHECK(s.membership == MembershipMode::coupled);
        std::set<int> groups;
        for (const auto& d : s.directions) {
            CHECK(d.tau1 == 1.0);
            CHECK(d.tau2 == 9.0);
            CHECK(d.w == 0.05);
            REQUIRE(d.group.has_value());
            groups.insert(*d.group);
        }
        CHECK(groups.size() == 1);
        CHECK_THROWS_AS(build_scale_mixture(4, 9.0, 1.0, 0.05), ConfigError);
        CHECK_THROWS_AS(build_scale_mixture(4, 1.0, 9.0, 0.0), ConfigError);
    }

    TEST_CASE("scale mixture outlier samples use the large variance in every coordinate") {
        // coordinates of an outlier sample are sqrt(9) z; recover z from the stored coefficients
        const auto s = build_scale_mixture(2000, 1.0, 9.0, 0.3);
        const auto ds = generate(s, 20, 11, Retention::always);
        const auto flags = ds.outlier_flags();
        for (std::size_t j = 0; j < 20; ++j) {
            const double v = ds.Y->col(static_cast<Eigen::Index>(j)).squaredNorm() / 2000.0;
            if (flags[j])
                CHECK(v == doctest::Approx(9.0).epsilon(0.15));
            else
                CHECK(v == doctest::Approx(1.0).epsilon(0.15));
        }
    }

    TEST_CASE("shifted: degenerate no-shift case") {
        Eigen::VectorXd mu(2), base(2);
        mu << 3, 4;
        base << 1, 1;
        const auto s = build_shifted(2, mu, 0.0, 0.0, 0.0, base);
        CHECK(s.basis.matrix(0, 0) == doctest::Approx(0.6));
        CHECK(s.basis.matrix(1, 0) == doctest::Approx(0.8));
        CHECK(s.directions[0].tau1 == doctest::Approx(1.0));
        CHECK(s.directions[0].tau2 == doctest::Approx(1.0));
        CHECK(s.directions[0].w == 0.0);
        const Eigen::MatrixXd U = basis_matrix(s);
        CHECK((U.transpose() * U - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("shifted: variance reparameterization") {
        Eigen::VectorXd mu(2), base(2);
        mu << 1, 0;
        base << 1, 1;
        const auto s = build_shifted(2, mu, 1.0, 4.0, 0.1, base);
        // sigma^2 |mu|^2 + U_1^T Sigma U_1 with U_1 = e_1
        CHECK(s.directions[0].tau1 == doctest::Approx(2.0));
        CHECK(s.directions[0].tau2 == doctest::Approx(5.0));
        CHECK(s.directions[0].w == doctest::Approx(0.1));
        CHECK(s.directions[1].w == 0.0);
    }

    TEST_CASE("shifted: zero mu") {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(2), base = Eigen::VectorXd::Ones(2);
        CHECK_THROWS_AS(build_shifted(2, mu, 1.0, 4.0, 0.1, base), ConfigError);
    }
}

TEST_SUITE("validation") {
    TEST_CASE("invalid specs are rejected") {
        MixtureModelSpec s;
        CHECK_THROWS_AS(s.validate(), ConfigError);  // d = 0
        s = single_direction(1.0, 1.0, 1.5);
        CHECK_THROWS_AS(s.validate(), ConfigError);
        s = single_direction(-1.0, 1.0, 0.0);
        CHECK_THROWS_AS(s.validate(), ConfigError);
        s = single_direction(1.0, 1.0, 0.0);
        s.d = 2;
        CHECK_THROWS_AS(s.validate(), ConfigError);
    }

    TEST_CASE("explicit basis must be orthonormal within 1e-10") {
        MixtureModelSpec s;
        s.d = 2;
        s.directions.assign(2, {1.0, 1.0, 0.0, std::nullopt});
        s.basis.kind = BasisKind::explicit_matrix;
        s.basis.matrix = Eigen::MatrixXd::Identity(2, 2);
        CHECK_NOTHROW(s.validate());
        s.basis.matrix(0, 0) = 1.0 + 1e-9;
        CHECK_THROWS_AS(s.validate(), ConfigError);
        s.basis.matrix = Eigen::MatrixXd::Identity(3, 3);
        CHECK_THROWS_AS(s.validate(), ConfigError);
    }

    TEST_CASE("coupled groups must share w") {
        MixtureModelSpec s;
        s.d = 2;
        s.membership = MembershipMode::coupled;
        s.directions = {{1.0, 9.0, 0.1, 0}, {1.0, 9.0, 0.2, 0}};
        CHECK_THROWS_AS(s.validate(), ConfigError);
        s.directions[1].w = 0.1;
        CHECK_NOTHROW(s.validate());
    }

    TEST_CASE("generate needs n >= 1") {
        CHECK_THROWS_AS(generate(single_direction(1, 1, 0), 0, 1), ConfigError);
    }
}

TEST_SUITE("generate") {
    TEST_CASE("w = 0 everywhere gives empty memberships") {
        MixtureModelSpec s;
        s.d = 7;
        s.directions.assign(7, {1.0, 1.0, 0.0, std::nullopt});
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const auto ds = generate(s, 13, seed);
            for (const auto& m : ds.memberships) CHECK(m.empty());
            CHECK(ds.X.rows() == 7);
            CHECK(ds.X.cols() == 13);
        }
    }

    TEST_CASE("coupled scale mixture: equal membership sets") {
        const auto s = build_scale_mixture(5, 1.0, 9.0, 0.5);
        const auto ds = generate(s, 6, 42);
        for (const auto& m : ds.memberships) CHECK(m == ds.memberships[0]);
    }

    TEST_CASE("determinism: identical (spec, n, seed) is bit-identical") {
        const std::size_t vars[] = {0, 2};
        auto s = build_variable_specific(6, vars, 50.0, 0.3);
        s.basis.kind = BasisKind::seeded_random;
        s.basis.seed = 9;
        const auto a = generate(s, 40, 77);
        const auto b = generate(s, 40, 77);
        CHECK(a.X == b.X);
        CHECK(a.memberships == b.memberships);
        const auto c = generate(s, 40, 78);
        CHECK(a.X != c.X);
    }

    TEST_CASE("memberships are untouched by the variances") {
        const std::size_t vars[] = {1};
        const auto a = generate(build_variable_specific(4, vars, 50.0, 0.2), 200, 5);
        const auto b = generate(build_variable_specific(4, vars, 5000.0, 0.2), 200, 5);
        CHECK(a.memberships == b.memberships);
    }

    TEST_CASE("memberships are sorted, in range and match the retained coefficients") {
        const std::size_t vars[] = {0};
        const auto ds = generate(build_variable_specific(3, vars, 1e6, 0.3), 500, 3, Retention::always);
        const auto& s = ds.memberships[0];
        CHECK(std::is_sorted(s.begin(), s.end()));
        // with tau2 = 1e6 the branch is visible in |y|: |z| > 5 for a unit-variance draw has
        // probability 6e-7, |1000 z| < 5 has probability 0.004
        std::size_t big = 0;
        for (Eigen::Index j = 0; j < 500; ++j)
            if (std::abs((*ds.Y)(0, j)) > 5.0) ++big;
        CHECK(big <= s.size());
        CHECK(big + 3 >= s.size());
        for (std::size_t j : s) CHECK(j < 500);
    }

    TEST_CASE("column variance law") {
        const std::size_t n = 100000;
        const double v = 4.0;
        const auto ds = generate(single_direction(v, v, 0.0), n, 123);
        const double var = sample_variance_of_row(ds.X, 0);
        CHECK(std::abs(var / v - 1.0) <= 3.0 * std::sqrt(2.0 / static_cast<double>(n)));
    }

    TEST_CASE("population eigenvalue of an outlier direction") {
        const std::size_t n = 100000;
        const auto ds = generate(single_direction(1.0, 50.0, 0.1), n, 321);
        const double expected = 0.9 * 1.0 + 0.1 * 50.0;
        CHECK(std::abs(sample_variance_of_row(ds.X, 0) / expected - 1.0) <= 0.05);
        CHECK(static_cast<double>(ds.memberships[0].size()) / n == doctest::Approx(0.1).epsilon(0.05));
    }

    TEST_CASE("basis isometry and reconstruction") {
        MixtureModelSpec s;
        s.d = 20;
        s.directions.assign(20, {1.0, 1.0, 0.0, std::nullopt});
        s.directions[0] = {5.0, 5.0, 0.0, std::nullopt};
        s.directions[3] = {1.0, 30.0, 0.2, std::nullopt};
        s.basis.kind = BasisKind::seeded_random;
        s.basis.seed = 17;
        const auto ds = generate(s, 15, 8, Retention::always);
        REQUIRE(ds.retains_coefficients());
        const Eigen::MatrixXd U = basis_matrix(s);
        CHECK((U.transpose() * U - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((U * *ds.Y - ds.X).cwiseAbs().maxCoeff() < 1e-12);
        for (Eigen::Index j = 0; j < 15; ++j)
            CHECK(ds.X.col(j).norm() == doctest::Approx(ds.Y->col(j).norm()).epsilon(1e-8));
    }

    TEST_CASE("retention policy") {
        const auto s = single_direction(1, 1, 0);
        CHECK(generate(s, 10, 1).retains_coefficients());
        CHECK_FALSE(generate(s, 10, 1, Retention::never).retains_coefficients());
        MixtureModelSpec big;
        big.d = 5000;
        big.directions.assign(5000, {1.0, 1.0, 0.0, std::nullopt});
        CHECK_FALSE(generate(big, 2001, 1).retains_coefficients());  // d n >= 1e7
        CHECK(generate(big, 1999, 1).retains_coefficients());
    }

    TEST_CASE("noise distributions have mean 0 and variance 1") {
        for (auto dist : {NoiseDist::gaussian, NoiseDist::rademacher, NoiseDist::uniform}) {
            auto s = single_direction(1, 1, 0);
            s.noise = dist;
            const auto ds = generate(s, 200000, 4);
            const double mean = ds.X.mean();
            const double var = ds.X.squaredNorm() / 200000.0;
            CHECK(std::abs(mean) < 0.01);
            CHECK(var == doctest::Approx(1.0).epsilon(0.01));
            if (dist == NoiseDist::rademacher) CHECK(ds.X.cwiseAbs().minCoeff() == 1.0);
            if (dist == NoiseDist::uniform) CHECK(ds.X.cwiseAbs().maxCoeff() <= std::sqrt(3.0));
        }
    }

    TEST_CASE("toy outlier count is Binomial(200, 0.02)") {
        // only outlier directions consume membership draws, so a 10-dimensional copy of the
        // toy spec has the same memberships as the full one
        auto small = toy_spec();
        small.d = 10;
        small.directions.resize(10);
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const auto full = generate(toy_spec(), 200, seed, Retention::never);
            const auto part = generate(small, 200, seed, Retention::never);
            CHECK(full.memberships[9] == part.memberships[9]);
        }
        double total = 0.0;
        for (std::uint64_t seed = 0; seed < 1000; ++seed)
            total += static_cast<double>(generate(small, 200, seed, Retention::never).memberships[9].size());
        const double mean = total / 1000.0;
        CHECK(mean >= 3.0);
        CHECK(mean <= 5.0);
    }
}
