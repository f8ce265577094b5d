#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

/**
 * Mixture model for high-dimensional outliers.
 *
 * An observation is X_j = sum_i y_ij U_i over an orthonormal basis {U_i}.
 * Each coefficient is a two-branch scale mixture:
 *
 *     y_ij = sqrt(tau1_i) z_ij   with probability 1 - w_i
 *     y_ij = sqrt(tau2_i) z_ij   with probability w_i
 *
 * where the z_ij are iid with mean 0, variance 1 and finite fourth moment.
 * Directions with w_i > 0 are outlier components; s_i records which samples
 * took the tau2 branch.
 *
 * Indices in this API are 0-based. Exported files (membership JSON, CSV
 * headers) use 1-based indices.
 */
namespace hdout {

struct DirectionSpec {
    double tau1 = 1.0;
    double tau2 = 1.0;
    double w = 0.0;
    /// Coupling group; only consulted in MembershipMode::coupled.
    std::optional<int> group;

    bool is_outlier() const noexcept { return w > 0.0; }
};

enum class BasisKind { standard, explicit_matrix, seeded_random };

struct Basis {
    BasisKind kind = BasisKind::standard;
    std::uint64_t seed = 0;   // seeded_random only
    Eigen::MatrixXd matrix;   // explicit_matrix only, d x d, columns are U_i
};

enum class NoiseDist { gaussian, rademacher, uniform };

enum class MembershipMode { independent, coupled };

struct MixtureModelSpec {
    std::size_t d = 0;
    std::vector<DirectionSpec> directions;
    Basis basis;
    NoiseDist noise = NoiseDist::gaussian;
    MembershipMode membership = MembershipMode::independent;

    /// Throws ConfigError on any violated invariant.
    void validate() const;

    std::vector<std::size_t> outlier_indices() const;
    std::vector<std::size_t> main_indices() const;
};

/// Max |U^T U - I| entry allowed for an explicit basis.
inline constexpr double kOrthonormalTolerance = 1e-10;

/// Materializes the d x d basis matrix (identity for the standard basis).
Eigen::MatrixXd basis_matrix(const MixtureModelSpec& spec);

/// Orthonormal d x d matrix from the QR factors of a seeded Gaussian matrix.
Eigen::MatrixXd random_orthonormal(std::size_t d, std::uint64_t seed);

struct GeneratedDataset {
    Eigen::MatrixXd X;                  // d x n
    std::optional<Eigen::MatrixXd> Y;   // coefficients, when retained
    std::vector<std::vector<std::size_t>> memberships;  // s_i per direction, sorted
    MixtureModelSpec spec;
    std::uint64_t seed = 0;
    std::size_t n = 0;

    bool retains_coefficients() const noexcept { return Y.has_value(); }

    /// true for sample j iff j belongs to some s_i.
    std::vector<bool> outlier_flags() const;
};

enum class Retention { automatic, always, never };

/// Automatic retention keeps Y while d*n stays below this many entries.
inline constexpr std::size_t kRetentionLimit = 10'000'000;

// Outlier archetypes

/// Standard basis; listed variables get (1, tau2, w), all others (1, 1, 0).
MixtureModelSpec build_variable_specific(std::size_t d, std::span<const std::size_t> outlier_vars,
                                         double tau2, double w);

/// Scatter outliers: every direction (sigma1_sq, sigma2_sq, p) with one shared
/// membership draw per sample.
MixtureModelSpec build_scale_mixture(std::size_t d, double sigma1_sq, double sigma2_sq, double p);

/// Outliers shifted along mu, expressed through the variance along U_1 = mu/|mu|.
/// base_cov_diag holds U_i^T Sigma U_i in the constructed basis.
MixtureModelSpec build_shifted(std::size_t d, const Eigen::VectorXd& mu, double sigma1_sq,
                               double sigma2_sq, double p, const Eigen::VectorXd& base_cov_diag);

/// Draws n observations. Pure function of (spec, n, seed): memberships come
/// from the stream (seed, "membership"), the z values from (seed, "noise").
GeneratedDataset generate(const MixtureModelSpec& spec, std::size_t n, std::uint64_t seed,
                          Retention retention = Retention::automatic);

} // namespace hdout
