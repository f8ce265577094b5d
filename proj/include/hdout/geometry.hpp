#pragma once

#include "hdout/model.hpp"
#include "hdout/rng.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

/**
 * HDLSS geometry of the mixture model.
 *
 * Scaled squared norms (1/d)|X_j|^2 and distances (1/d)|X_j - X_l|^2
 * concentrate as d grows. Non-outliers settle on a sphere of radius
 * (sigma^2 d)^{1/2}; outliers behave according to how many outlier
 * directions they take part in:
 *
 *   positive fraction p_out:  (1/d)|X|^2 -> p_out tau + (1 - p_out) sigma^2
 *   growing K, K tau / d -> r: (1/d)|X|^2 -> r + sigma^2
 *   fixed K:                  (1/d)|X|^2 ->_d (r/K) chi^2_K + sigma^2
 *
 * Scenarios here use a single coupled outlier group spanning the first
 * K(d) directions, so an outlier sample is outlying in all of them.
 */
namespace hdout {

/// tau^(d) as a function of d (and of K(d) for the linear schedule).
struct TauSchedule {
    enum class Kind { constant, linear, power };
    Kind kind = Kind::constant;
    double value = 1.0;  ///< constant: tau; power: multiplier of d^alpha
    double alpha = 0.0;  ///< power exponent

    /// `r` is only used by the linear schedule, tau = r d / K.
    double at(std::size_t d, std::size_t K, double r) const;
};

struct PositiveFraction {
    double p_out = 1.0;
};
struct GrowingK {
    double r = 0.0;
    double k_exponent = 0.5;  ///< K(d) = ceil(d^k_exponent)
};
struct FixedK {
    std::size_t K = 1;
    double r = 0.0;
};

using GeometryRegime = std::variant<PositiveFraction, GrowingK, FixedK>;

struct GeometryScenario {
    double sigma_sq = 1.0;
    TauSchedule tau;
    GeometryRegime regime = PositiveFraction{};
    /// Probability that a sample is an outlier (the shared w of the group).
    double outlier_weight = 0.3;

    void validate() const;
    std::size_t outlier_directions(std::size_t d) const;
    double tau_at(std::size_t d) const;
    /// Mixture model realizing this scenario at dimension d.
    MixtureModelSpec model_at(std::size_t d) const;
};

/// Distribution of scale * chi^2_K + shift.
class ChiSquareLimit {
public:
    ChiSquareLimit(double scale, std::size_t K, double shift);

    double mean() const noexcept { return scale_ * static_cast<double>(K_) + shift_; }
    double cdf(double x) const;
    double sample(rng::Engine& eng) const;

    double scale() const noexcept { return scale_; }
    std::size_t dof() const noexcept { return K_; }
    double shift() const noexcept { return shift_; }

private:
    double scale_;
    std::size_t K_;
    double shift_;
};

/// A limit is either a constant or (fixed-K regime) a distribution.
using Limit = std::variant<double, ChiSquareLimit>;

double limit_mean(const Limit& limit);

enum class PairClass { non_non, out_non, out_out };

std::string to_string(PairClass c);

Limit limit_norm(const GeometryScenario& scenario, bool is_outlier);

/// Throws UnsupportedCaseError for out_out: no prediction exists for two outliers.
Limit limit_distance(const GeometryScenario& scenario, PairClass pair_class);

struct GeometryReport {
    std::size_t d = 0;
    Eigen::VectorXd scaled_norms;      ///< (1/d)|X_j|^2
    Eigen::MatrixXd scaled_distances;  ///< (1/d)|X_j - X_l|^2, symmetric, zero diagonal
    std::vector<bool> is_outlier;

    PairClass pair_class(std::size_t j, std::size_t l) const;
};

GeometryReport empirical_geometry(const GeneratedDataset& dataset);
GeometryReport empirical_geometry(const Eigen::MatrixXd& X, std::vector<bool> is_outlier);

struct ClassSummary {
    std::string name;  ///< norm_non, norm_out, dist_non_non, dist_out_non, dist_out_out
    std::size_t count = 0;
    double empirical_mean = 0.0;  ///< NaN when the class is empty
    std::optional<double> predicted;
    std::optional<double> gap;
};

/// Class means of the report, with predicted limits when a scenario is given.
std::vector<ClassSummary> summarize(const GeometryReport& report, const GeometryScenario* scenario = nullptr);

struct TransitionRow {
    std::size_t d = 0;
    std::size_t K = 0;
    double tau = 0.0;
    double limit = 0.0;                 ///< predicted outlier scaled-norm mean
    double median_outlier_gap = 0.0;    ///< |outlier class mean - limit|
    double median_non_gap = 0.0;        ///< |non-outlier class mean - sigma^2|
    double median_class_difference = 0.0;
    std::size_t reps_with_outliers = 0;
};

struct TransitionTable {
    std::vector<TransitionRow> rows;
    /// Median outlier gap at the largest d does not exceed the one at the smallest d.
    bool gap_not_increasing = false;
};

TransitionTable transition_sweep(const GeometryScenario& scenario, std::span<const std::size_t> dims,
                                 std::size_t n, std::size_t reps, std::uint64_t seed,
                                 std::size_t threads = 1);

} // namespace hdout
