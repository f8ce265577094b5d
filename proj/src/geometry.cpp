#include "hdout/geometry.hpp"

#include "hdout/errors.hpp"
#include "hdout/parallel.hpp"
#include "hdout/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace hdout {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

/// Limit of K(d) tau(d) / d implied by the schedule pair; infinity if it diverges.
double implied_product_limit(const GeometryScenario& s, const GrowingK& g) {
    switch (s.tau.kind) {
    case TauSchedule::Kind::linear:
        return g.r;
    case TauSchedule::Kind::constant:
        return 0.0;
    case TauSchedule::Kind::power: {
        const double e = g.k_exponent + s.tau.alpha - 1.0;
        if (std::abs(e) < 1e-12) return s.tau.value;
        return e < 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    }
    return kNaN;
}

} // namespace

double TauSchedule::at(std::size_t d, std::size_t K, double r) const {
    switch (kind) {
    case Kind::constant:
        return value;
    case Kind::linear:
        return r * static_cast<double>(d) / static_cast<double>(K);
    case Kind::power:
        return value * std::pow(static_cast<double>(d), alpha);
    }
    return kNaN;
}

void GeometryScenario::validate() const {
    if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) throw ConfigError("geometry: sigma^2 must be positive");
    if (!(outlier_weight > 0.0 && outlier_weight <= 1.0))
        throw ConfigError("geometry: outlier weight must lie in (0, 1]");
    std::visit(overloaded{
                   [&](const PositiveFraction& p) {
                       if (!(p.p_out > 0.0 && p.p_out <= 1.0))
                           throw ConfigError("geometry: p_out must lie in (0, 1]");
                       if (tau.kind != TauSchedule::Kind::constant || !(tau.value >= 0.0))
                           throw ConfigError("geometry: positive-fraction regime needs a constant tau >= 0");
                   },
                   [&](const GrowingK& g) {
                       if (!(g.r >= 0.0)) throw ConfigError("geometry: r must be non-negative");
                       if (!(g.k_exponent > 0.0 && g.k_exponent < 1.0))
                           throw ConfigError("geometry: growing-K exponent must lie in (0, 1)");
                       const double implied = implied_product_limit(*this, g);
                       if (!(std::abs(implied - g.r) <= 1e-12 * std::max(1.0, g.r)))
                           throw ConfigError("geometry: tau schedule implies K tau / d -> " +
                                             std::to_string(implied) + ", regime states r = " +
                                             std::to_string(g.r));
                   },
                   [&](const FixedK& f) {
                       if (f.K < 1) throw ConfigError("geometry: fixed-K regime needs K >= 1");
                       if (!(f.r >= 0.0)) throw ConfigError("geometry: r must be non-negative");
                       if (tau.kind != TauSchedule::Kind::linear)
                           throw ConfigError("geometry: fixed-K regime needs the linear schedule tau = r d / K");
                   },
               },
               regime);
}

std::size_t GeometryScenario::outlier_directions(std::size_t d) const {
    const std::size_t K = std::visit(
        overloaded{
            [&](const PositiveFraction& p) {
                return static_cast<std::size_t>(std::llround(p.p_out * static_cast<double>(d)));
            },
            [&](const GrowingK& g) {
                return static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(d), g.k_exponent)));
            },
            [&](const FixedK& f) {
                if (f.K > d) throw ConfigError("geometry: fixed K exceeds d");
                return f.K;
            },
        },
        regime);
    return std::clamp<std::size_t>(K, 1, d);
}

double GeometryScenario::tau_at(std::size_t d) const {
    const double r = std::visit(overloaded{
                                    [](const PositiveFraction&) { return 0.0; },
                                    [](const GrowingK& g) { return g.r; },
                                    [](const FixedK& f) { return f.r; },
                                },
                                regime);
    return tau.at(d, outlier_directions(d), r);
}

MixtureModelSpec GeometryScenario::model_at(std::size_t d) const {
    validate();
    const std::size_t K = outlier_directions(d);
    const double t = tau_at(d);
    MixtureModelSpec spec;
    spec.d = d;
    spec.directions.assign(d, DirectionSpec{sigma_sq, sigma_sq, 0.0, std::nullopt});
    for (std::size_t i = 0; i < K; ++i) spec.directions[i] = DirectionSpec{sigma_sq, t, outlier_weight, 0};
    spec.membership = MembershipMode::coupled;
    spec.validate();
    return spec;
}

ChiSquareLimit::ChiSquareLimit(double scale, std::size_t K, double shift) : scale_(scale), K_(K), shift_(shift) {
    if (K == 0) throw ConfigError("chi-square limit needs K >= 1");
    if (!(scale >= 0.0)) throw ConfigError("chi-square limit needs a non-negative scale");
}

double ChiSquareLimit::cdf(double x) const {
    const double t = x - shift_;
    if (scale_ == 0.0) return t >= 0.0 ? 1.0 : 0.0;
    if (t <= 0.0) return 0.0;
    return boost::math::gamma_p(0.5 * static_cast<double>(K_), t / (2.0 * scale_));
}

double ChiSquareLimit::sample(rng::Engine& eng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    double acc = 0.0;
    for (std::size_t k = 0; k < K_; ++k) {
        const double z = normal(eng);
        acc += z * z;
    }
    return scale_ * acc + shift_;
}

double limit_mean(const Limit& limit) {
    return std::visit(overloaded{
                          [](double v) { return v; },
                          [](const ChiSquareLimit& c) { return c.mean(); },
                      },
                      limit);
}

std::string to_string(PairClass c) {
    switch (c) {
    case PairClass::non_non:
        return "non_non";
    case PairClass::out_non:
        return "out_non";
    case PairClass::out_out:
        return "out_out";
    }
    return "?";
}

Limit limit_norm(const GeometryScenario& s, bool is_outlier) {
    s.validate();
    if (!is_outlier) return s.sigma_sq;
    return std::visit(overloaded{
                          [&](const PositiveFraction& p) -> Limit {
                              return p.p_out * s.tau.value + (1.0 - p.p_out) * s.sigma_sq;
                          },
                          [&](const GrowingK& g) -> Limit { return g.r + s.sigma_sq; },
                          [&](const FixedK& f) -> Limit {
                              return ChiSquareLimit(f.r / static_cast<double>(f.K), f.K, s.sigma_sq);
                          },
                      },
                      s.regime);
}

Limit limit_distance(const GeometryScenario& s, PairClass pair_class) {
    s.validate();
    switch (pair_class) {
    case PairClass::non_non:
        return 2.0 * s.sigma_sq;
    case PairClass::out_out:
        throw UnsupportedCaseError("geometry: no limit is available for outlier/outlier distances");
    case PairClass::out_non:
        break;
    }
    return std::visit(overloaded{
                          [&](const PositiveFraction& p) -> Limit {
                              return p.p_out * (s.tau.value - s.sigma_sq) + 2.0 * s.sigma_sq;
                          },
                          [&](const GrowingK& g) -> Limit { return g.r + 2.0 * s.sigma_sq; },
                          [&](const FixedK& f) -> Limit {
                              return ChiSquareLimit(f.r / static_cast<double>(f.K), f.K, 2.0 * s.sigma_sq);
                          },
                      },
                      s.regime);
}

PairClass GeometryReport::pair_class(std::size_t j, std::size_t l) const {
    const int outliers = static_cast<int>(is_outlier[j]) + static_cast<int>(is_outlier[l]);
    return outliers == 0 ? PairClass::non_non : outliers == 1 ? PairClass::out_non : PairClass::out_out;
}

GeometryReport empirical_geometry(const Eigen::MatrixXd& X, std::vector<bool> is_outlier) {
    const Eigen::Index n = X.cols();
    if (static_cast<Eigen::Index>(is_outlier.size()) != n)
        throw DataError("geometry: outlier flags must match the sample count");
    GeometryReport report;
    report.d = static_cast<std::size_t>(X.rows());
    const double inv_d = 1.0 / static_cast<double>(X.rows());
    report.scaled_norms = X.colwise().squaredNorm().transpose() * inv_d;
    report.scaled_distances = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index l = j + 1; l < n; ++l) {
            const double v = (X.col(j) - X.col(l)).squaredNorm() * inv_d;
            report.scaled_distances(j, l) = v;
            report.scaled_distances(l, j) = v;
        }
    }
    report.is_outlier = std::move(is_outlier);
    return report;
}

GeometryReport empirical_geometry(const GeneratedDataset& dataset) {
    return empirical_geometry(dataset.X, dataset.outlier_flags());
}

std::vector<ClassSummary> summarize(const GeometryReport& report, const GeometryScenario* scenario) {
    std::vector<double> norm_non, norm_out, dist_nn, dist_on, dist_oo;
    const auto n = static_cast<std::size_t>(report.scaled_norms.size());
    for (std::size_t j = 0; j < n; ++j) {
        (report.is_outlier[j] ? norm_out : norm_non).push_back(report.scaled_norms(j));
        for (std::size_t l = j + 1; l < n; ++l) {
            const double v = report.scaled_distances(j, l);
            switch (report.pair_class(j, l)) {
            case PairClass::non_non:
                dist_nn.push_back(v);
                break;
            case PairClass::out_non:
                dist_on.push_back(v);
                break;
            case PairClass::out_out:
                dist_oo.push_back(v);
                break;
            }
        }
    }
    auto make = [](std::string name, const std::vector<double>& v, std::optional<double> predicted) {
        ClassSummary s;
        s.name = std::move(name);
        s.count = v.size();
        s.empirical_mean = v.empty() ? kNaN : stats::mean(v);
        s.predicted = predicted;
        if (predicted && !v.empty()) s.gap = std::abs(s.empirical_mean - *predicted);
        return s;
    };
    std::optional<double> p_nn, p_no, p_dnn, p_don;
    if (scenario) {
        p_nn = limit_mean(limit_norm(*scenario, false));
        p_no = limit_mean(limit_norm(*scenario, true));
        p_dnn = limit_mean(limit_distance(*scenario, PairClass::non_non));
        p_don = limit_mean(limit_distance(*scenario, PairClass::out_non));
    }
    return {make("norm_non", norm_non, p_nn), make("norm_out", norm_out, p_no),
            make("dist_non_non", dist_nn, p_dnn), make("dist_out_non", dist_on, p_don),
            make("dist_out_out", dist_oo, std::nullopt)};
}

TransitionTable transition_sweep(const GeometryScenario& scenario, std::span<const std::size_t> dims,
                                 std::size_t n, std::size_t reps, std::uint64_t seed, std::size_t threads) {
    scenario.validate();
    if (dims.size() < 3) throw ConfigError("transition sweep: needs at least 3 dimensions");
    for (std::size_t p = 1; p < dims.size(); ++p)
        if (dims[p] <= dims[p - 1]) throw ConfigError("transition sweep: dimensions must increase");
    if (n < 1 || reps < 1) throw ConfigError("transition sweep: n and reps must be at least 1");

    const double non_limit = scenario.sigma_sq;
    const double out_limit = limit_mean(limit_norm(scenario, true));

    struct Cell {
        double out_mean = kNaN;
        double non_mean = kNaN;
    };
    std::vector<Cell> cells(dims.size() * reps);
    std::vector<MixtureModelSpec> models;
    for (std::size_t d : dims) models.push_back(scenario.model_at(d));

    parallel_for(cells.size(), threads, [&](std::size_t idx) {
        const std::size_t p = idx / reps;
        const std::size_t r = idx % reps;
        const auto rep_seed = rng::derive_seed(rng::derive_seed(seed, "transition", p), "rep", r);
        const auto data = generate(models[p], n, rep_seed, Retention::never);
        const auto flags = data.outlier_flags();
        const double inv_d = 1.0 / static_cast<double>(dims[p]);
        std::vector<double> out, non;
        for (std::size_t j = 0; j < n; ++j)
            (flags[j] ? out : non).push_back(data.X.col(j).squaredNorm() * inv_d);
        cells[idx] = {out.empty() ? kNaN : stats::mean(out), non.empty() ? kNaN : stats::mean(non)};
    });

    TransitionTable table;
    for (std::size_t p = 0; p < dims.size(); ++p) {
        std::vector<double> out_gap, non_gap, diff;
        TransitionRow row;
        row.d = dims[p];
        row.K = scenario.outlier_directions(dims[p]);
        row.tau = scenario.tau_at(dims[p]);
        row.limit = out_limit;
        for (std::size_t r = 0; r < reps; ++r) {
            const Cell& c = cells[p * reps + r];
            if (std::isfinite(c.out_mean)) {
                ++row.reps_with_outliers;
                out_gap.push_back(std::abs(c.out_mean - out_limit));
                if (std::isfinite(c.non_mean)) diff.push_back(std::abs(c.out_mean - c.non_mean));
            }
            if (std::isfinite(c.non_mean)) non_gap.push_back(std::abs(c.non_mean - non_limit));
        }
        row.median_outlier_gap = stats::median(out_gap);
        row.median_non_gap = stats::median(non_gap);
        row.median_class_difference = stats::median(diff);
        table.rows.push_back(row);
    }
    table.gap_not_increasing = table.rows.back().median_outlier_gap <= table.rows.front().median_outlier_gap;
    return table;
}

} // namespace hdout
