#pragma once

#include "hdout/model.hpp"
#include "hdout/spectra.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

/**
 * Tier machinery and finite-sample checks of PCA consistency under the
 * mixture model.
 *
 * Spike eigenvalues 1..K are grouped in tiers H_1..H_M sharing a growth
 * scale delta_m(n). With ratio_m = d / (n delta_m):
 *
 *   ratio_M -> 0                      all spikes consistent (eigenvalue
 *                                     ratios -> 1, subspace angles -> 0)
 *   ratio_h -> 0, ratio_{h+1} -> inf  tiers 1..h consistent, the remaining
 *                                     spikes are swallowed by the bulk and
 *                                     their eigenvectors strongly inconsistent
 *
 * The limit statements are checked at a single (n, d) with explicit
 * thresholds: a tier is strong when ratio <= 0.05 and weak when ratio >= 20.
 */
namespace hdout {

/// Exact population eigenvalue (1 - w) tau1 + w tau2.
double population_eigenvalue(const DirectionSpec& dir);

/// Leading-order eigenvalue: tau1 for a main component, w tau2 for an outlier component.
double asymptotic_eigenvalue(const DirectionSpec& dir);

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Marchenko-Pastur support edges c_lambda (1 -+ sqrt(c))^2.
Interval mp_bulk_bounds(double c, double c_lambda);

/// delta(n) = coefficient * n^exponent.
struct ScaleSchedule {
    double coefficient = 1.0;
    double exponent = 0.0;

    double at(double n) const;
};

struct Tier {
    std::size_t first = 0;  ///< 0-based index of the first spike in the tier
    std::size_t size = 0;
    ScaleSchedule delta;
};

struct TierStructure {
    std::size_t K = 0;
    std::vector<Tier> tiers;
    std::vector<std::size_t> I_out;
    std::vector<std::size_t> I_main;
    double c_lambda = 1.0;
    /// Limit of d/n; may be 0 or infinity.
    double c = 1.0;

    std::size_t M() const noexcept { return tiers.size(); }
    /// p_m = q_1 + ... + q_m, with p_0 = 0.
    std::size_t partial_sum(std::size_t m) const;
    /// Tier (0-based) holding spike index i.
    std::size_t tier_of(std::size_t i) const;

    /// Throws ConfigError unless the tiers partition 0..K-1 consecutively.
    void validate() const;

    /// Assumption-4 style ordering delta_1 > ... > delta_M > lambda_{K+1} at n.
    bool ordered_at(double n) const;

    /// Tiers from tier sizes and scales. Spikes are the first K directions of
    /// the model; I_out / I_main follow from their w.
    static TierStructure from_model(const MixtureModelSpec& spec, std::span<const std::size_t> sizes,
                                    std::span<const ScaleSchedule> deltas, double c,
                                    double c_lambda = 1.0);
};

struct Thresholds {
    double strong = 0.05;
    double weak = 20.0;
};

enum class RegimeKind { all_strong, partial, degenerate };

std::string to_string(RegimeKind kind);

struct RegimeReport {
    std::vector<double> ratios;  ///< d / (n delta_m) per tier
    RegimeKind kind = RegimeKind::degenerate;
    /// Number of strong tiers in the partial regime (0 when every spike is weak).
    std::size_t h = 0;
    /// Leading tiers that are individually strong, whatever the overall regime.
    std::size_t strong_prefix = 0;
    /// delta_m(n) for each spike index, the predicted eigenvalue scale.
    std::vector<double> predicted_eigenvalues;
    /// Per tier: "consistent", "strongly_inconsistent" or "undetermined".
    std::vector<std::string> angle_behavior;
};

RegimeReport classify_regime(const TierStructure& tiers, std::size_t n, std::size_t d,
                             const Thresholds& thresholds = {});

enum class Verdict { pass, fail, skipped };

std::string to_string(Verdict v);

struct CheckResult {
    std::string name;
    std::size_t index = 0;  ///< 1-based spike or tier index, 0 when not applicable
    Verdict verdict = Verdict::skipped;
    double observed = std::numeric_limits<double>::quiet_NaN();
    double predicted = std::numeric_limits<double>::quiet_NaN();
    double tolerance = std::numeric_limits<double>::quiet_NaN();
    std::string note;
};

struct EigenvalueCheckOptions {
    Thresholds thresholds;
    /// Pass iff |lambda_hat_i / lambda_i - 1| <= ratio_tolerance.
    double ratio_tolerance = 0.2;
    /// Relative widening of the bulk envelope.
    double bulk_slack = 0.1;
};

/**
 * Eigenvalue verdicts at one (n, d).
 *
 * Spikes in leading strong tiers: ratio to the asymptotic eigenvalue.
 * Bulk with finite c: extreme bulk eigenvalues inside the Marchenko-Pastur
 * envelope at the realized d/n. Bulk with c = inf and weak spikes of a
 * partial regime: n lambda_hat / d inside the envelope around c_lambda at the
 * realized n/d. Everything the regime does not cover is reported as skipped.
 */
std::vector<CheckResult> eigenvalue_checks(const GeneratedDataset& dataset, const TierStructure& tiers,
                                           const SpectralDecomposition& decomp,
                                           const EigenvalueCheckOptions& options = {});

std::vector<CheckResult> eigenvalue_checks(const GeneratedDataset& dataset, const TierStructure& tiers,
                                           const EigenvalueCheckOptions& options = {});

/// Angle in degrees between unit vector v and span{U_i : i in set}. With no
/// basis the U_i are the standard basis vectors.
double angle_to_subspace(const Eigen::VectorXd& v, std::span<const std::size_t> set,
                         const Eigen::MatrixXd* basis = nullptr);

/// sum over i in pcs of (entry `row` of U_hat_i)^2. With a basis the
/// eigenvectors are first rotated into it (U^T U_hat).
double subspace_energy(const SpectralDecomposition& decomp, std::size_t row, std::span<const std::size_t> pcs,
                       const Eigen::MatrixXd* basis = nullptr);

struct EigenvectorCheckOptions {
    Thresholds thresholds;
    /// Rate-based checks pass iff observed <= k_slack * rate expression.
    double k_slack = 3.0;
};

/**
 * Eigenvector verdicts at one (n, d).
 *
 * Strong tiers: angle(U_hat_i, S_m) in radians against k_slack times the
 * convergence rate of the tier. Singleton tiers are individual angles.
 * Weak spikes of a partial regime: |<U_hat_i, U_i>| against
 * k_slack sqrt(n lambda_i / d). c = 0 is outside the eigenvector theory and is
 * skipped; the noise-subspace angle is reported as a skipped diagnostic.
 */
std::vector<CheckResult> eigenvector_checks(const GeneratedDataset& dataset, const TierStructure& tiers,
                                            const SpectralDecomposition& decomp,
                                            const EigenvectorCheckOptions& options = {});

std::vector<CheckResult> eigenvector_checks(const GeneratedDataset& dataset, const TierStructure& tiers,
                                            const EigenvectorCheckOptions& options = {});

/// Per-sample squared norm of the projection of X_j on the selected PCs.
/// Optional weights multiply each PC's contribution.
Eigen::VectorXd outlier_score(const SpectralDecomposition& decomp, const Eigen::MatrixXd& X,
                              std::span<const std::size_t> pcs, std::span<const double> weights = {});

/// Weights (entry `row` of U_hat_i)^2 for i in pcs; emphasizes PCs that carry a known direction.
std::vector<double> energy_weights(const SpectralDecomposition& decomp, std::size_t row,
                                   std::span<const std::size_t> pcs);

} // namespace hdout
