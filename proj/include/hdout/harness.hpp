#pragma once

#include "hdout/consistency.hpp"
#include "hdout/geometry.hpp"
#include "hdout/model.hpp"
#include "hdout/spectra.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hdout {

// ---------------------------------------------------------------------------
// Toy example: n = 200, d = 3000, nine main spikes and one outlier spike on e_10

inline constexpr std::size_t kToyN = 200;
inline constexpr std::size_t kToyD = 3000;
inline constexpr std::size_t kToyOutlierDirection = 9;  // e_10, 0-based

/// The toy model. Direction 10 is (tau1 = 1, tau2 = 2000, w = 0.02).
MixtureModelSpec toy_spec();

/// Squared entries of the first 12 coordinates of U_hat_1..U_hat_11, the
/// eigenvalues lambda_hat_1..11 and the angles (degrees) between U_hat_i and e_10.
struct ToyTable {
    Eigen::Matrix<double, 12, 11> squares = Eigen::Matrix<double, 12, 11>::Zero();
    std::array<double, 11> eigenvalues{};
    std::array<double, 11> angles_e10{};
};

ToyTable toy_table(const SpectralDecomposition& decomp);

/// Per-seed statistics behind the toy criteria.
struct ToySeedStats {
    std::uint64_t seed = 0;
    std::size_t outliers = 0;  ///< |s_10|
    double lambda1 = 0.0, lambda2 = 0.0, lambda11 = 0.0;
    double angle1_deg = 0.0;      ///< angle(U_hat_1, e_1)
    double angle2_deg = 0.0;      ///< angle(U_hat_2, e_2)
    double energy10 = 0.0;        ///< sum_{i<=10} u_hat_{10,i}^2
    double max_single10 = 0.0;    ///< max_{i<=10} u_hat_{10,i}^2
    double min_angle_e10 = 0.0;   ///< min_{i<=10} angle(U_hat_i, e_10)
    double outlier_score_out = std::numeric_limits<double>::quiet_NaN();
    double outlier_score_non = std::numeric_limits<double>::quiet_NaN();
};

/// Acceptance thresholds for the toy example. Fractions are of the seeds run.
struct ToyCriteria {
    double lambda1_low = 2400, lambda1_high = 3700;
    double lambda2_low = 800, lambda2_high = 1200;
    double lambda11_low = 10, lambda11_high = 25;
    double angle1_max_deg = 5.0, angle2_max_deg = 10.0, angle_fraction = 0.9;
    double energy_min = 0.8, energy_fraction = 0.8;
    double max_single = 0.35, max_single_fraction = 0.8;
    double min_angle_deg = 55.0, min_angle_fraction = 0.8;
};

struct ToyExampleResult {
    std::vector<ToySeedStats> seeds;
    std::vector<ToyTable> tables;
    ToyTable median;
    std::vector<CheckResult> verdicts;

    bool passed() const;
};

ToySeedStats toy_seed_stats(const GeneratedDataset& dataset, const SpectralDecomposition& decomp);

/// Runs the toy model for `reps` seeds derived from `seed` (through toy_config).
ToyExampleResult toy_example(std::uint64_t seed, std::size_t reps, std::size_t threads = 1,
                             const ToyCriteria& criteria = {});

/// Seed of replication r of the toy example.
std::uint64_t toy_seed(std::uint64_t seed, std::size_t r);

// ---------------------------------------------------------------------------
// Independent eigen-oracle

struct JacobiResult {
    Eigen::VectorXd values;   ///< descending
    Eigen::MatrixXd vectors;  ///< sign-fixed columns
    std::size_t sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is <= 1e-12
/// (relative to the matrix norm). For verification of the main solver, k <= 50.
JacobiResult oracle_eigen(const Eigen::MatrixXd& A);

// ---------------------------------------------------------------------------
// Scenarios

enum class CheckKind { geometry, eigenvalues, eigenvectors, toy_table };

std::string to_string(CheckKind k);

/// One spike of a spiked family; its asymptotic eigenvalue is delta(n).
struct SpikeSpec {
    ScaleSchedule delta;
    double w = 0.0;  ///< > 0 makes it an outlier spike with tau2 = delta / w
};

struct ModelFamily {
    enum class Kind { fixed, spiked, geometry, toy };
    Kind kind = Kind::spiked;

    MixtureModelSpec fixed_model;      ///< fixed
    std::vector<SpikeSpec> spikes;     ///< spiked
    std::vector<std::size_t> tier_sizes;  ///< default: one tier per spike
    double c_lambda = 1.0;
    NoiseDist noise = NoiseDist::gaussian;
    GeometryScenario geometry;         ///< geometry

    MixtureModelSpec model_at(std::size_t n, std::size_t d) const;
    /// Spike count of the model.
    std::size_t spike_count() const;
    TierStructure tiers_at(std::size_t n, std::size_t d, double c) const;
};

struct SweepPoint {
    std::size_t n = 0;
    std::size_t d = 0;
};

struct Tolerances {
    double ratio = 0.2;
    double bulk_slack = 0.1;
    double k_slack = 3.0;
    double strong = 0.05;
    double weak = 20.0;
    double pass_fraction = 0.8;  ///< fraction of seeds a per-seed check must pass in
    double geometry_relative = 0.05;
};

struct ScenarioConfig {
    std::string name = "scenario";
    ModelFamily model;
    std::vector<SweepPoint> sweep;
    std::size_t replications = 1;
    std::uint64_t seed = 0;
    std::vector<CheckKind> checks;
    Tolerances tolerances;
    /// Limit of d/n for the tier structure; NaN means d/n at the last sweep point.
    double c = std::numeric_limits<double>::quiet_NaN();
    std::size_t threads = 1;

    void validate() const;
    double c_limit() const;
};

/// Single-point scenario running the toy model with the toy_table check.
ScenarioConfig toy_config(std::uint64_t seed, std::size_t reps, std::size_t threads = 1);

/// Seed of replication `rep` at sweep point `point`.
std::uint64_t replication_seed(const ScenarioConfig& config, std::size_t point, std::size_t rep);

/// A per-seed check aggregated over replications.
struct AggregatedCheck {
    std::size_t point = 0;
    std::size_t n = 0, d = 0;
    std::string name;
    std::size_t index = 0;
    Verdict verdict = Verdict::skipped;
    std::size_t passes = 0, fails = 0, skips = 0;
    double pass_fraction = std::numeric_limits<double>::quiet_NaN();
    double required_fraction = 0.0;
    double median_observed = std::numeric_limits<double>::quiet_NaN();
    double predicted = std::numeric_limits<double>::quiet_NaN();
    double tolerance = std::numeric_limits<double>::quiet_NaN();
    std::string note;
};

struct StatRow {
    std::size_t n = 0, d = 0, rep = 0;
    std::string statistic;
    double value = 0.0;
};

enum class TrendTarget { decreasing, bounded };
enum class TrendVerdict { decreasing, flat, increasing, undefined };

std::string to_string(TrendVerdict v);

struct TrendResult {
    std::string statistic;
    std::vector<double> medians;  ///< one per sweep point
    TrendVerdict verdict = TrendVerdict::undefined;
    TrendTarget target = TrendTarget::decreasing;
    double bound = std::numeric_limits<double>::infinity();
    bool passed = false;
};

/// Trend of medians, first point against last.
TrendResult evaluate_trend(std::string statistic, std::vector<double> medians, TrendTarget target,
                           double bound = std::numeric_limits<double>::infinity());

struct RunReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::size_t replications = 0;
    std::vector<SweepPoint> sweep;
    std::vector<AggregatedCheck> checks;
    std::vector<TrendResult> trends;
    std::vector<StatRow> rows;
    std::optional<ToyExampleResult> toy;

    bool passed() const;
};

RunReport run_scenario(const ScenarioConfig& config);

/// Statistics tracked across a convergence sweep.
struct TrackedStatistic {
    enum class Kind {
        eigenvalue_ratio_error,  ///< |lambda_hat_i / lambda_i - 1|
        subspace_angle,          ///< angle(U_hat_i, S_m) in radians, S_m the tier of i
        outlier_norm_gap,        ///< |outlier class mean scaled norm - limit| (geometry family)
    };
    Kind kind = Kind::eigenvalue_ratio_error;
    std::size_t index = 0;  ///< 0-based spike index
    TrendTarget target = TrendTarget::decreasing;
    double bound = std::numeric_limits<double>::infinity();

    std::string label() const;
};

struct TrendReport {
    std::vector<SweepPoint> sweep;
    std::vector<TrendResult> trends;
    std::vector<StatRow> rows;

    bool passed() const;
};

/// Per-point medians of each tracked statistic and their trend verdicts.
/// Needs at least 3 sweep points with increasing n.
TrendReport convergence_sweep(const ScenarioConfig& config, const std::vector<TrackedStatistic>& tracked);

// ---------------------------------------------------------------------------
// Persistence

/// `<base>/<scenario>/<timestamp>`, created; a suffix keeps it unique.
std::filesystem::path make_run_directory(const std::filesystem::path& base, const std::string& scenario);

/// Writes report.json and statistics.csv (plus toy_table.csv for toy runs).
void write_run_report(const RunReport& report, const std::filesystem::path& dir);

} // namespace hdout
