#include "hdout/model.hpp"

#include "hdout/errors.hpp"
#include "hdout/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>

namespace hdout {

namespace {

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

/// A set of directions that share one Bernoulli(w) draw per sample.
struct DrawUnit {
    double w;
    std::vector<std::size_t> directions;
};

std::vector<DrawUnit> draw_units(const MixtureModelSpec& spec) {
    std::vector<DrawUnit> units;
    std::map<int, std::size_t> group_slot;
    for (std::size_t i = 0; i < spec.d; ++i) {
        const auto& dir = spec.directions[i];
        if (!dir.is_outlier()) continue;
        if (spec.membership == MembershipMode::coupled && dir.group) {
            auto [it, inserted] = group_slot.try_emplace(*dir.group, units.size());
            if (inserted) units.push_back({dir.w, {}});
            units[it->second].directions.push_back(i);
        } else {
            units.push_back({dir.w, {i}});
        }
    }
    return units;
}

class NoiseSampler {
public:
    NoiseSampler(NoiseDist dist, rng::Engine eng) : dist_(dist), eng_(std::move(eng)) {}

    double operator()() {
        switch (dist_) {
        case NoiseDist::gaussian:
            return normal_(eng_);
        case NoiseDist::rademacher:
            return (eng_() >> 63) ? 1.0 : -1.0;
        case NoiseDist::uniform:
            // U(-sqrt3, sqrt3) has unit variance
            return std::sqrt(3.0) * (2.0 * rng::uniform01(eng_) - 1.0);
        }
        return 0.0;
    }

private:
    NoiseDist dist_;
    rng::Engine eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace

void MixtureModelSpec::validate() const {
    if (d == 0) throw ConfigError("model: d must be at least 1");
    if (directions.size() != d)
        throw ConfigError("model: expected " + std::to_string(d) + " directions, got " +
                          std::to_string(directions.size()));
    for (std::size_t i = 0; i < d; ++i) {
        const auto& dir = directions[i];
        if (!finite_nonneg(dir.tau1) || !finite_nonneg(dir.tau2))
            throw ConfigError("model: direction " + std::to_string(i + 1) +
                              " needs finite non-negative variances");
        if (!(dir.w >= 0.0 && dir.w <= 1.0))
            throw ConfigError("model: direction " + std::to_string(i + 1) + " has w outside [0, 1]");
    }
    if (basis.kind == BasisKind::explicit_matrix) {
        const auto& U = basis.matrix;
        if (static_cast<std::size_t>(U.rows()) != d || static_cast<std::size_t>(U.cols()) != d)
            throw ConfigError("model: explicit basis must be d x d");
        if (!U.allFinite()) throw ConfigError("model: explicit basis has non-finite entries");
        const Eigen::MatrixXd gram = U.transpose() * U;
        const double err = (gram - Eigen::MatrixXd::Identity(U.cols(), U.cols())).cwiseAbs().maxCoeff();
        if (err > kOrthonormalTolerance)
            throw ConfigError("model: explicit basis is not orthonormal (max |U^T U - I| = " +
                              std::to_string(err) + ")");
    }
    if (membership == MembershipMode::coupled) {
        std::map<int, double> group_w;
        for (const auto& dir : directions) {
            if (!dir.group) continue;
            auto [it, inserted] = group_w.try_emplace(*dir.group, dir.w);
            if (!inserted && it->second != dir.w)
                throw ConfigError("model: directions in coupling group " + std::to_string(*dir.group) +
                                  " must share the same w");
        }
    }
}

std::vector<std::size_t> MixtureModelSpec::outlier_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < directions.size(); ++i)
        if (directions[i].is_outlier()) out.push_back(i);
    return out;
}

std::vector<std::size_t> MixtureModelSpec::main_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < directions.size(); ++i)
        if (!directions[i].is_outlier()) out.push_back(i);
    return out;
}

Eigen::MatrixXd random_orthonormal(std::size_t d, std::uint64_t seed) {
    auto eng = rng::make_engine(seed, "basis");
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd G(d, d);
    for (Eigen::Index j = 0; j < G.cols(); ++j)
        for (Eigen::Index i = 0; i < G.rows(); ++i) G(i, j) = normal(eng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
    // Fix column signs so that R has a positive diagonal; makes Q unique.
    const Eigen::MatrixXd& R = qr.matrixQR();
    for (Eigen::Index j = 0; j < Q.cols(); ++j)
        if (R(j, j) < 0.0) Q.col(j) *= -1.0;
    return Q;
}

Eigen::MatrixXd basis_matrix(const MixtureModelSpec& spec) {
    switch (spec.basis.kind) {
    case BasisKind::standard:
        return Eigen::MatrixXd::Identity(spec.d, spec.d);
    case BasisKind::explicit_matrix:
        return spec.basis.matrix;
    case BasisKind::seeded_random:
        return random_orthonormal(spec.d, spec.basis.seed);
    }
    return {};
}

std::vector<bool> GeneratedDataset::outlier_flags() const {
    std::vector<bool> flags(n, false);
    for (const auto& s : memberships)
        for (std::size_t j : s) flags[j] = true;
    return flags;
}

MixtureModelSpec build_variable_specific(std::size_t d, std::span<const std::size_t> outlier_vars,
                                         double tau2, double w) {
    if (!(tau2 > 0.0)) throw ConfigError("variable-specific: tau2 must be positive");
    MixtureModelSpec spec;
    spec.d = d;
    spec.directions.assign(d, DirectionSpec{1.0, 1.0, 0.0, std::nullopt});
    for (std::size_t v : outlier_vars) {
        if (v >= d)
            throw ConfigError("variable-specific: variable index " + std::to_string(v + 1) +
                              " out of range 1.." + std::to_string(d));
        spec.directions[v] = DirectionSpec{1.0, tau2, w, std::nullopt};
    }
    spec.validate();
    return spec;
}

MixtureModelSpec build_scale_mixture(std::size_t d, double sigma1_sq, double sigma2_sq, double p) {
    if (!(sigma1_sq > 0.0) || !(sigma2_sq > sigma1_sq))
        throw ConfigError("scale mixture: requires sigma2^2 > sigma1^2 > 0");
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("scale mixture: requires 0 < p < 1");
    MixtureModelSpec spec;
    spec.d = d;
    spec.directions.assign(d, DirectionSpec{sigma1_sq, sigma2_sq, p, 0});
    spec.membership = MembershipMode::coupled;
    spec.validate();
    return spec;
}

MixtureModelSpec build_shifted(std::size_t d, const Eigen::VectorXd& mu, double sigma1_sq,
                               double sigma2_sq, double p, const Eigen::VectorXd& base_cov_diag) {
    if (static_cast<std::size_t>(mu.size()) != d || static_cast<std::size_t>(base_cov_diag.size()) != d)
        throw ConfigError("shifted: mu and base covariance diagonal must have length d");
    const double norm = mu.norm();
    if (!(norm > 0.0)) throw ConfigError("shifted: mu must be nonzero");

    // Householder reflection mapping e_1 onto mu/|mu|; its columns complete U_1
    // to an orthonormal basis.
    const Eigen::VectorXd u = mu / norm;
    Eigen::MatrixXd U = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd v = -u;
    v(0) += 1.0;
    const double vv = v.squaredNorm();
    if (vv > 0.0) U -= (2.0 / vv) * v * v.transpose();
    U.col(0) = u;

    const double norm_sq = norm * norm;
    const double v1 = base_cov_diag(0);
    MixtureModelSpec spec;
    spec.d = d;
    spec.directions.reserve(d);
    spec.directions.push_back({sigma1_sq * norm_sq + v1, sigma2_sq * norm_sq + v1, p, std::nullopt});
    for (std::size_t i = 1; i < d; ++i)
        spec.directions.push_back({base_cov_diag(i), base_cov_diag(i), 0.0, std::nullopt});
    spec.basis.kind = BasisKind::explicit_matrix;
    spec.basis.matrix = std::move(U);
    spec.validate();
    return spec;
}

GeneratedDataset generate(const MixtureModelSpec& spec, std::size_t n, std::uint64_t seed,
                          Retention retention) {
    if (n == 0) throw ConfigError("generate: n must be at least 1");
    spec.validate();
    const std::size_t d = spec.d;

    GeneratedDataset out;
    out.spec = spec;
    out.seed = seed;
    out.n = n;
    out.memberships.assign(d, {});

    // Branch selection has its own stream so variances never perturb it.
    const auto units = draw_units(spec);
    std::vector<std::vector<bool>> in_tau2(d);
    for (const auto& unit : units)
        for (std::size_t i : unit.directions) in_tau2[i].assign(n, false);
    auto membership_eng = rng::make_engine(seed, "membership");
    for (std::size_t j = 0; j < n; ++j) {
        for (const auto& unit : units) {
            if (rng::uniform01(membership_eng) < unit.w) {
                for (std::size_t i : unit.directions) {
                    in_tau2[i][j] = true;
                    out.memberships[i].push_back(j);
                }
            }
        }
    }

    std::vector<double> sd1(d), sd2(d);
    for (std::size_t i = 0; i < d; ++i) {
        sd1[i] = std::sqrt(spec.directions[i].tau1);
        sd2[i] = std::sqrt(spec.directions[i].tau2);
    }
    NoiseSampler z(spec.noise, rng::make_engine(seed, "noise"));
    Eigen::MatrixXd Y(d, n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < d; ++i) {
            const bool outlying = !in_tau2[i].empty() && in_tau2[i][j];
            Y(i, j) = (outlying ? sd2[i] : sd1[i]) * z();
        }
    }

    const bool keep = retention == Retention::always ||
                      (retention == Retention::automatic && d * n < kRetentionLimit);
    if (spec.basis.kind == BasisKind::standard) {
        if (keep) out.Y = Y;
        out.X = std::move(Y);
    } else {
        out.X = basis_matrix(spec) * Y;
        if (keep) out.Y = std::move(Y);
    }
    return out;
}

} // namespace hdout
