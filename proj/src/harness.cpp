#include "hdout/harness.hpp"

#include "hdout/errors.hpp"
#include "hdout/io.hpp"
#include "hdout/parallel.hpp"
#include "hdout/rng.hpp"
#include "hdout/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

namespace hdout {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t required_count(double fraction, std::size_t total) {
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-9));
}

CheckResult range_check(std::string name, std::size_t index, double value, double lo, double hi, double anchor) {
    CheckResult c;
    c.name = std::move(name);
    c.index = index;
    c.observed = value;
    c.predicted = anchor;
    c.verdict = (value >= lo && value <= hi) ? Verdict::pass : Verdict::fail;
    std::ostringstream note;
    note << "median over seeds in [" << lo << ", " << hi << "]";
    c.note = note.str();
    return c;
}

CheckResult fraction_check(std::string name, std::size_t index, std::size_t passes, std::size_t total,
                           double fraction, const std::string& what) {
    CheckResult c;
    c.name = std::move(name);
    c.index = index;
    const std::size_t need = required_count(fraction, total);
    std::ostringstream note;
    note << what << " in >= " << need << " of " << total << " seeds";
    c.note = note.str();
    if (total == 0) {
        c.verdict = Verdict::skipped;
        c.note += " (no eligible seeds)";
        return c;
    }
    c.observed = static_cast<double>(passes) / static_cast<double>(total);
    c.predicted = fraction;
    c.tolerance = static_cast<double>(need);
    c.verdict = passes >= need ? Verdict::pass : Verdict::fail;
    return c;
}

std::vector<std::size_t> iota_indices(std::size_t count, std::size_t first = 0) {
    std::vector<std::size_t> v(count);
    std::iota(v.begin(), v.end(), first);
    return v;
}

std::vector<CheckResult> toy_verdicts(const std::vector<ToySeedStats>& seeds, const ToyCriteria& cr) {
    const std::size_t reps = seeds.size();
    auto collect = [&](auto member) {
        std::vector<double> v;
        for (const auto& s : seeds) v.push_back(s.*member);
        return v;
    };
    auto count_if = [&](auto pred) {
        return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), pred));
    };

    std::vector<CheckResult> out;
    out.push_back(range_check("toy_median_eigenvalue", 1, stats::median(collect(&ToySeedStats::lambda1)),
                              cr.lambda1_low, cr.lambda1_high, 3000.0));
    out.push_back(range_check("toy_median_eigenvalue", 2, stats::median(collect(&ToySeedStats::lambda2)),
                              cr.lambda2_low, cr.lambda2_high, 1000.0));
    out.push_back(range_check("toy_median_eigenvalue", 11, stats::median(collect(&ToySeedStats::lambda11)),
                              cr.lambda11_low, cr.lambda11_high, kNaN));

    std::ostringstream w1, w2, we, ws, wa;
    w1 << "angle(U_hat_1, e_1) <= " << cr.angle1_max_deg << " deg";
    w2 << "angle(U_hat_2, e_2) <= " << cr.angle2_max_deg << " deg";
    we << "sum_{i<=10} u_hat_{10,i}^2 >= " << cr.energy_min;
    ws << "max_{i<=10} u_hat_{10,i}^2 <= " << cr.max_single;
    wa << "min_{i<=10} angle(U_hat_i, e_10) >= " << cr.min_angle_deg << " deg";

    out.push_back(fraction_check("toy_angle_e1", 1,
                                 count_if([&](const auto& s) { return s.angle1_deg <= cr.angle1_max_deg; }), reps,
                                 cr.angle_fraction, w1.str()));
    out.push_back(fraction_check("toy_angle_e2", 2,
                                 count_if([&](const auto& s) { return s.angle2_deg <= cr.angle2_max_deg; }), reps,
                                 cr.angle_fraction, w2.str()));
    out.push_back(fraction_check("toy_energy_e10", 10,
                                 count_if([&](const auto& s) { return s.energy10 >= cr.energy_min; }), reps,
                                 cr.energy_fraction, we.str()));
    out.push_back(fraction_check("toy_max_single_e10", 10,
                                 count_if([&](const auto& s) { return s.max_single10 <= cr.max_single; }), reps,
                                 cr.max_single_fraction, ws.str()));
    out.push_back(fraction_check("toy_min_angle_e10", 10,
                                 count_if([&](const auto& s) { return s.min_angle_e10 >= cr.min_angle_deg; }), reps,
                                 cr.min_angle_fraction, wa.str()));

    // seeds without outliers have no outlier mean and are left out
    std::size_t eligible = 0, higher = 0;
    for (const auto& s : seeds) {
        if (s.outliers == 0 || !std::isfinite(s.outlier_score_out)) continue;
        ++eligible;
        if (s.outlier_score_out > s.outlier_score_non) ++higher;
    }
    out.push_back(fraction_check("toy_outlier_score", 10, higher, eligible, cr.energy_fraction,
                                 "e_10-weighted score: outlier mean > non-outlier mean"));
    return out;
}

ToyTable median_table(const std::vector<ToyTable>& tables) {
    ToyTable m;
    if (tables.empty()) return m;
    std::vector<double> buf(tables.size());
    auto med = [&](auto get) {
        for (std::size_t t = 0; t < tables.size(); ++t) buf[t] = get(tables[t]);
        return stats::median(buf);
    };
    for (int k = 0; k < 12; ++k)
        for (int i = 0; i < 11; ++i) m.squares(k, i) = med([&](const ToyTable& t) { return t.squares(k, i); });
    for (std::size_t i = 0; i < 11; ++i) {
        m.eigenvalues[i] = med([&](const ToyTable& t) { return t.eigenvalues[i]; });
        m.angles_e10[i] = med([&](const ToyTable& t) { return t.angles_e10[i]; });
    }
    return m;
}

struct ToyRep {
    ToySeedStats stats;
    ToyTable table;
};

} // namespace

// ---------------------------------------------------------------------------
// Toy example

MixtureModelSpec toy_spec() {
    MixtureModelSpec spec;
    spec.d = kToyD;
    spec.directions.assign(kToyD, DirectionSpec{1.0, 1.0, 0.0, std::nullopt});
    const double main_tau[9] = {3000, 1000, 100, 90, 80, 70, 60, 50, 40};
    for (std::size_t i = 0; i < 9; ++i) spec.directions[i] = {main_tau[i], main_tau[i], 0.0, std::nullopt};
    spec.directions[kToyOutlierDirection] = {1.0, 2000.0, 0.02, std::nullopt};
    return spec;
}

ToyTable toy_table(const SpectralDecomposition& decomp) {
    if (decomp.retained() < 11 || decomp.d < 12) throw DataError("toy table: needs 11 eigenvectors of dimension >= 12");
    ToyTable t;
    const std::size_t e10[] = {kToyOutlierDirection};
    for (int i = 0; i < 11; ++i) {
        for (int k = 0; k < 12; ++k) t.squares(k, i) = decomp.eigenvectors(k, i) * decomp.eigenvectors(k, i);
        t.eigenvalues[i] = decomp.eigenvalues(i);
        t.angles_e10[i] = angle_to_subspace(decomp.eigenvectors.col(i), e10);
    }
    return t;
}

ToySeedStats toy_seed_stats(const GeneratedDataset& dataset, const SpectralDecomposition& decomp) {
    if (decomp.retained() < 11) throw DataError("toy statistics: needs 11 eigenvectors");
    ToySeedStats s;
    s.seed = dataset.seed;
    s.outliers = dataset.memberships.at(kToyOutlierDirection).size();
    s.lambda1 = decomp.eigenvalues(0);
    s.lambda2 = decomp.eigenvalues(1);
    s.lambda11 = decomp.eigenvalues(10);
    const std::size_t e1[] = {0}, e2[] = {1}, e10[] = {kToyOutlierDirection};
    s.angle1_deg = angle_to_subspace(decomp.eigenvectors.col(0), e1);
    s.angle2_deg = angle_to_subspace(decomp.eigenvectors.col(1), e2);

    const auto pcs = iota_indices(10);
    s.energy10 = subspace_energy(decomp, kToyOutlierDirection, pcs);
    s.max_single10 = 0.0;
    s.min_angle_e10 = 90.0;
    for (std::size_t i : pcs) {
        const double u = decomp.eigenvectors(static_cast<Eigen::Index>(kToyOutlierDirection), static_cast<Eigen::Index>(i));
        s.max_single10 = std::max(s.max_single10, u * u);
        s.min_angle_e10 = std::min(s.min_angle_e10, angle_to_subspace(decomp.eigenvectors.col(i), e10));
    }

    const auto weights = energy_weights(decomp, kToyOutlierDirection, pcs);
    const Eigen::VectorXd score = outlier_score(decomp, dataset.X, pcs, weights);
    const auto& members = dataset.memberships[kToyOutlierDirection];
    std::vector<bool> is_out(dataset.n, false);
    for (std::size_t j : members) is_out[j] = true;
    std::vector<double> out_scores, non_scores;
    for (std::size_t j = 0; j < dataset.n; ++j) (is_out[j] ? out_scores : non_scores).push_back(score(static_cast<Eigen::Index>(j)));
    s.outlier_score_out = stats::mean(out_scores);
    s.outlier_score_non = stats::mean(non_scores);
    return s;
}

ScenarioConfig toy_config(std::uint64_t seed, std::size_t reps, std::size_t threads) {
    ScenarioConfig c;
    c.name = "toy";
    c.model.kind = ModelFamily::Kind::toy;
    c.sweep = {{kToyN, kToyD}};
    c.replications = reps;
    c.seed = seed;
    c.checks = {CheckKind::toy_table};
    c.threads = threads;
    return c;
}

std::uint64_t toy_seed(std::uint64_t seed, std::size_t r) { return replication_seed(toy_config(seed, 1, 1), 0, r); }

bool ToyExampleResult::passed() const {
    return std::none_of(verdicts.begin(), verdicts.end(), [](const auto& c) { return c.verdict == Verdict::fail; });
}

ToyExampleResult toy_example(std::uint64_t seed, std::size_t reps, std::size_t threads, const ToyCriteria& criteria) {
    if (reps == 0) throw ConfigError("toy example: reps must be >= 1");
    auto report = run_scenario(toy_config(seed, reps, threads));
    ToyExampleResult result = std::move(*report.toy);
    result.verdicts = toy_verdicts(result.seeds, criteria);
    return result;
}

// ---------------------------------------------------------------------------
// Jacobi oracle

JacobiResult oracle_eigen(const Eigen::MatrixXd& input) {
    const Eigen::Index k = input.rows();
    if (k == 0 || input.cols() != k) throw ConfigError("oracle: matrix must be square and nonempty");
    if (k > 50) throw ConfigError("oracle: k must be <= 50");
    if (!input.allFinite()) throw DataError("oracle: non-finite entry");
    const double scale = std::max(1.0, input.cwiseAbs().maxCoeff());
    if ((input - input.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ConfigError("oracle: matrix is not symmetric within 1e-10");

    Eigen::MatrixXd a = 0.5 * (input + input.transpose());
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(k, k);
    const double target = 1e-12 * std::max(1.0, a.norm());

    auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index p = 0; p < k; ++p)
            for (Eigen::Index q = 0; q < k; ++q)
                if (p != q) s += a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    JacobiResult res;
    constexpr std::size_t kMaxSweeps = 100;
    while (off_norm() > target) {
        if (res.sweeps++ >= kMaxSweeps) throw DataError("oracle: Jacobi iteration did not converge");
        for (Eigen::Index p = 0; p < k - 1; ++p) {
            for (Eigen::Index q = p + 1; q < k; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index r = 0; r < k; ++r) {
                    const double arp = a(r, p), arq = a(r, q);
                    a(r, p) = c * arp - s * arq;
                    a(r, q) = s * arp + c * arq;
                }
                for (Eigen::Index r = 0; r < k; ++r) {
                    const double apr = a(p, r), aqr = a(q, r);
                    a(p, r) = c * apr - s * aqr;
                    a(q, r) = s * apr + c * aqr;
                }
                for (Eigen::Index r = 0; r < k; ++r) {
                    const double vrp = v(r, p), vrq = v(r, q);
                    v(r, p) = c * vrp - s * vrq;
                    v(r, q) = s * vrp + c * vrq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
    res.values.resize(k);
    res.vectors.resize(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        res.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        res.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    detail::fix_signs(res.vectors);
    return res;
}

// ---------------------------------------------------------------------------
// Scenario families

std::string to_string(CheckKind k) {
    switch (k) {
    case CheckKind::geometry:
        return "geometry";
    case CheckKind::eigenvalues:
        return "eigenvalues";
    case CheckKind::eigenvectors:
        return "eigenvectors";
    case CheckKind::toy_table:
        return "toy_table";
    }
    return "?";
}

namespace {

// Leading directions that differ from the bulk (c_lambda, c_lambda, 0).
std::size_t leading_spikes(const MixtureModelSpec& spec, double c_lambda) {
    std::size_t K = 0;
    while (K < spec.directions.size()) {
        const auto& dir = spec.directions[K];
        if (!dir.is_outlier() && dir.tau1 == c_lambda) break;
        ++K;
    }
    return K;
}

// One tier per run of equal asymptotic eigenvalues.
std::vector<std::size_t> group_equal(const MixtureModelSpec& spec, std::size_t K) {
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < K; ++i) {
        if (i > 0 && asymptotic_eigenvalue(spec.directions[i]) == asymptotic_eigenvalue(spec.directions[i - 1]))
            ++sizes.back();
        else
            sizes.push_back(1);
    }
    return sizes;
}

} // namespace

MixtureModelSpec ModelFamily::model_at(std::size_t n, std::size_t d) const {
    switch (kind) {
    case Kind::fixed:
        return fixed_model;
    case Kind::toy:
        return toy_spec();
    case Kind::geometry:
        return geometry.model_at(d);
    case Kind::spiked: {
        MixtureModelSpec spec;
        spec.d = d;
        spec.noise = noise;
        spec.directions.assign(d, DirectionSpec{c_lambda, c_lambda, 0.0, std::nullopt});
        if (spikes.size() > d) throw ConfigError("spiked family: more spikes than dimensions");
        for (std::size_t i = 0; i < spikes.size(); ++i) {
            const double delta = spikes[i].delta.at(static_cast<double>(n));
            const double w = spikes[i].w;
            spec.directions[i] = w > 0.0 ? DirectionSpec{c_lambda, delta / w, w, std::nullopt}
                                         : DirectionSpec{delta, delta, 0.0, std::nullopt};
        }
        return spec;
    }
    }
    throw ConfigError("unknown model family");
}

std::size_t ModelFamily::spike_count() const {
    switch (kind) {
    case Kind::spiked:
        return spikes.size();
    case Kind::fixed:
        return tier_sizes.empty() ? leading_spikes(fixed_model, c_lambda)
                                  : std::accumulate(tier_sizes.begin(), tier_sizes.end(), std::size_t{0});
    case Kind::toy:
        return tier_sizes.empty() ? leading_spikes(toy_spec(), c_lambda)
                                  : std::accumulate(tier_sizes.begin(), tier_sizes.end(), std::size_t{0});
    case Kind::geometry:
        return 0;
    }
    return 0;
}

TierStructure ModelFamily::tiers_at(std::size_t n, std::size_t d, double c) const {
    if (kind == Kind::geometry) throw ConfigError("geometry family has no tier structure");
    const MixtureModelSpec spec = model_at(n, d);
    const std::size_t K = spike_count();
    std::vector<std::size_t> sizes = tier_sizes;
    if (sizes.empty()) sizes = kind == Kind::spiked ? std::vector<std::size_t>(K, 1) : group_equal(spec, K);

    std::vector<ScaleSchedule> deltas;
    std::size_t first = 0;
    for (std::size_t q : sizes) {
        if (first >= K) break;
        if (kind == Kind::spiked)
            deltas.push_back(spikes[first].delta);
        else
            deltas.push_back({asymptotic_eigenvalue(spec.directions[first]), 0.0});
        first += q;
    }
    if (deltas.size() != sizes.size() || std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != K)
        throw ConfigError("tier sizes must sum to the number of spikes");
    return TierStructure::from_model(spec, sizes, deltas, c, c_lambda);
}

void ScenarioConfig::validate() const {
    if (replications < 1) throw ConfigError("replications must be >= 1");
    if (sweep.empty()) throw ConfigError("sweep must be nonempty");
    for (const auto& p : sweep)
        if (p.n < 1 || p.d < 1) throw ConfigError("sweep points need n >= 1 and d >= 1");
    if (!(tolerances.pass_fraction > 0.0 && tolerances.pass_fraction <= 1.0))
        throw ConfigError("pass_fraction must lie in (0, 1]");
    if (!(tolerances.ratio > 0.0) || !(tolerances.k_slack > 0.0) || !(tolerances.bulk_slack >= 0.0) ||
        !(tolerances.geometry_relative > 0.0))
        throw ConfigError("tolerances must be positive");
    if (!(tolerances.strong > 0.0) || !(tolerances.weak > tolerances.strong))
        throw ConfigError("thresholds need 0 < strong < weak");
    if (!std::isnan(c) && !(c >= 0.0)) throw ConfigError("c must be >= 0 or infinite");
    if (!(model.c_lambda > 0.0)) throw ConfigError("c_lambda must be positive");

    const auto wants = [&](CheckKind k) { return std::find(checks.begin(), checks.end(), k) != checks.end(); };
    using Kind = ModelFamily::Kind;
    switch (model.kind) {
    case Kind::fixed:
        model.fixed_model.validate();
        for (const auto& p : sweep)
            if (p.d != model.fixed_model.d) throw ConfigError("fixed model: every sweep point needs d = model d");
        break;
    case Kind::toy:
        for (const auto& p : sweep)
            if (p.d != kToyD) throw ConfigError("toy model: every sweep point needs d = 3000");
        break;
    case Kind::geometry:
        model.geometry.validate();
        if (wants(CheckKind::eigenvalues) || wants(CheckKind::eigenvectors))
            throw ConfigError("geometry family supports only geometry checks");
        break;
    case Kind::spiked:
        for (const auto& s : model.spikes) {
            if (!(s.delta.coefficient > 0.0) || !std::isfinite(s.delta.exponent))
                throw ConfigError("spike scales need a positive coefficient");
            if (!(s.w >= 0.0 && s.w < 1.0)) throw ConfigError("spike weight must lie in [0, 1)");
        }
        for (const auto& p : sweep)
            if (p.d < model.spikes.size()) throw ConfigError("spiked family: d smaller than the spike count");
        break;
    }
    if (wants(CheckKind::geometry) && model.kind != Kind::geometry)
        throw ConfigError("geometry checks need the geometry family");
    if (wants(CheckKind::toy_table)) {
        if (model.kind != Kind::toy) throw ConfigError("toy_table checks need the toy family");
        for (const auto& p : sweep)
            if (p.n < 11) throw ConfigError("toy_table checks need n >= 11");
    }
    if (wants(CheckKind::eigenvalues) || wants(CheckKind::eigenvectors)) {
        const auto& last = sweep.back();
        model.tiers_at(last.n, last.d, c_limit());  // throws on an inconsistent tier layout
    }
}

double ScenarioConfig::c_limit() const {
    if (!std::isnan(c)) return c;
    const auto& last = sweep.back();
    return static_cast<double>(last.d) / static_cast<double>(last.n);
}

std::uint64_t replication_seed(const ScenarioConfig& config, std::size_t point, std::size_t rep) {
    return rng::derive_seed(rng::derive_seed(rng::derive_seed(config.seed, config.name), "point", point), "rep", rep);
}

std::string to_string(TrendVerdict v) {
    switch (v) {
    case TrendVerdict::decreasing:
        return "decreasing";
    case TrendVerdict::flat:
        return "flat";
    case TrendVerdict::increasing:
        return "increasing";
    case TrendVerdict::undefined:
        return "undefined";
    }
    return "?";
}

TrendResult evaluate_trend(std::string statistic, std::vector<double> medians, TrendTarget target, double bound) {
    TrendResult t;
    t.statistic = std::move(statistic);
    t.medians = std::move(medians);
    t.target = target;
    t.bound = bound;
    if (t.medians.size() < 2 || !std::isfinite(t.medians.front()) || !std::isfinite(t.medians.back())) {
        t.verdict = TrendVerdict::undefined;
        t.passed = false;
        return t;
    }
    const double a = t.medians.front();
    const double b = t.medians.back();
    const double scale = std::max(std::abs(a), std::abs(b));
    if (std::abs(b - a) <= 1e-9 * scale || scale == 0.0)
        t.verdict = TrendVerdict::flat;
    else
        t.verdict = b < a ? TrendVerdict::decreasing : TrendVerdict::increasing;
    if (target == TrendTarget::decreasing) {
        t.passed = t.verdict == TrendVerdict::decreasing;
    } else {
        t.passed = std::all_of(t.medians.begin(), t.medians.end(), [&](double m) { return !std::isfinite(m) || m <= bound; });
    }
    return t;
}

bool RunReport::passed() const {
    const bool checks_ok =
        std::none_of(checks.begin(), checks.end(), [](const auto& c) { return c.verdict == Verdict::fail; });
    const bool trends_ok = std::all_of(trends.begin(), trends.end(), [](const auto& t) { return t.passed; });
    return checks_ok && trends_ok && (!toy || toy->passed());
}

bool TrendReport::passed() const {
    return std::all_of(trends.begin(), trends.end(), [](const auto& t) { return t.passed; });
}

std::string TrackedStatistic::label() const {
    switch (kind) {
    case Kind::eigenvalue_ratio_error:
        return "eigenvalue_ratio_error_" + std::to_string(index + 1);
    case Kind::subspace_angle:
        return "subspace_angle_" + std::to_string(index + 1);
    case Kind::outlier_norm_gap:
        return "outlier_norm_gap";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Running

namespace {

struct RepOutput {
    std::vector<CheckResult> checks;
    std::vector<std::pair<std::string, double>> stats;
    std::optional<ToyRep> toy;
};

bool wants(const ScenarioConfig& cfg, CheckKind k) {
    return std::find(cfg.checks.begin(), cfg.checks.end(), k) != cfg.checks.end();
}

// Statistic name of a check, e.g. eigenvalue_ratio_1.
std::string stat_name(const CheckResult& c) {
    return c.index == 0 ? c.name : c.name + "_" + std::to_string(c.index);
}

RepOutput run_rep(const ScenarioConfig& cfg, std::size_t p, std::size_t r) {
    const auto [n, d] = cfg.sweep[p];
    const std::uint64_t seed = replication_seed(cfg, p, r);
    const auto& tol = cfg.tolerances;
    const Thresholds thr{tol.strong, tol.weak};
    RepOutput out;

    const auto spec = cfg.model.model_at(n, d);
    const auto dataset = generate(spec, n, seed, Retention::never);

    if (wants(cfg, CheckKind::eigenvalues) || wants(cfg, CheckKind::eigenvectors)) {
        const auto tiers = cfg.model.tiers_at(n, d, cfg.c_limit());
        if (tiers.K > 0) {
            CheckResult order;
            order.name = "tier_ordering";
            order.verdict = tiers.ordered_at(static_cast<double>(n)) ? Verdict::pass : Verdict::fail;
            order.note = "delta_1 > ... > delta_M > c_lambda at n";
            out.checks.push_back(order);
        }
        if (wants(cfg, CheckKind::eigenvalues)) {
            SpectrumOptions so;
            so.compute_vectors = false;
            const auto decomp = sample_covariance_spectrum(dataset.X, so);
            EigenvalueCheckOptions eo{thr, tol.ratio, tol.bulk_slack};
            for (auto& c : eigenvalue_checks(dataset, tiers, decomp, eo)) out.checks.push_back(std::move(c));
        }
        if (wants(cfg, CheckKind::eigenvectors)) {
            SpectrumOptions so;
            so.top_k = std::min({tiers.K + 1, n, d});
            const auto decomp = sample_covariance_spectrum(dataset.X, so);
            EigenvectorCheckOptions vo{thr, tol.k_slack};
            for (auto& c : eigenvector_checks(dataset, tiers, decomp, vo)) out.checks.push_back(std::move(c));
        }
    }

    if (wants(cfg, CheckKind::geometry)) {
        const auto& scenario = cfg.model.geometry;
        const auto report = empirical_geometry(dataset);
        for (const auto& cls : summarize(report, &scenario)) {
            if (!cls.predicted) continue;
            CheckResult c;
            c.name = "geometry_" + cls.name;
            c.predicted = *cls.predicted;
            c.tolerance = tol.geometry_relative * std::abs(*cls.predicted);
            if (cls.count == 0) {
                c.verdict = Verdict::skipped;
                c.note = "empty class";
            } else {
                c.observed = cls.empirical_mean;
                c.verdict = std::abs(cls.empirical_mean - *cls.predicted) <= c.tolerance ? Verdict::pass : Verdict::fail;
                c.note = "class mean within relative tolerance of the limit mean";
            }
            out.checks.push_back(c);
        }
    }

    if (wants(cfg, CheckKind::toy_table)) {
        const auto decomp = sample_covariance_spectrum(dataset.X);
        out.toy = ToyRep{toy_seed_stats(dataset, decomp), toy_table(decomp)};
        const auto& s = out.toy->stats;
        out.stats.insert(out.stats.end(), {{"toy_lambda1", s.lambda1},
                                           {"toy_lambda2", s.lambda2},
                                           {"toy_lambda11", s.lambda11},
                                           {"toy_angle_e1_deg", s.angle1_deg},
                                           {"toy_angle_e2_deg", s.angle2_deg},
                                           {"toy_energy_e10", s.energy10},
                                           {"toy_max_single_e10", s.max_single10},
                                           {"toy_min_angle_e10_deg", s.min_angle_e10},
                                           {"toy_outliers", static_cast<double>(s.outliers)}});
    }

    std::vector<std::pair<std::string, double>> check_stats;
    for (const auto& c : out.checks)
        if (std::isfinite(c.observed)) check_stats.emplace_back(stat_name(c), c.observed);
    out.stats.insert(out.stats.begin(), check_stats.begin(), check_stats.end());
    return out;
}

} // namespace

RunReport run_scenario(const ScenarioConfig& config) {
    config.validate();
    const std::size_t P = config.sweep.size();
    const std::size_t R = config.replications;
    std::vector<RepOutput> slots(P * R);
    parallel_for(P * R, config.threads, [&](std::size_t t) { slots[t] = run_rep(config, t / R, t % R); });

    RunReport report;
    report.scenario = config.name;
    report.seed = config.seed;
    report.replications = R;
    report.sweep = config.sweep;

    for (std::size_t p = 0; p < P; ++p) {
        // aggregate by (name, index) in first-seen order
        std::vector<std::pair<std::string, std::size_t>> keys;
        std::map<std::pair<std::string, std::size_t>, std::vector<const CheckResult*>> groups;
        for (std::size_t r = 0; r < R; ++r) {
            const auto& rep = slots[p * R + r];
            for (const auto& c : rep.checks) {
                auto key = std::make_pair(c.name, c.index);
                auto [it, inserted] = groups.try_emplace(key);
                if (inserted) keys.push_back(key);
                it->second.push_back(&c);
            }
            for (const auto& [name, value] : rep.stats)
                report.rows.push_back({config.sweep[p].n, config.sweep[p].d, r, name, value});
        }
        for (const auto& key : keys) {
            const auto& members = groups[key];
            AggregatedCheck a;
            a.point = p;
            a.n = config.sweep[p].n;
            a.d = config.sweep[p].d;
            a.name = key.first;
            a.index = key.second;
            a.required_fraction = config.tolerances.pass_fraction;
            std::vector<double> obs, pred, tol;
            for (const auto* c : members) {
                if (c->verdict == Verdict::pass) ++a.passes;
                else if (c->verdict == Verdict::fail) ++a.fails;
                else ++a.skips;
                obs.push_back(c->observed);
                pred.push_back(c->predicted);
                tol.push_back(c->tolerance);
                if (a.note.empty()) a.note = c->note;
            }
            a.median_observed = stats::median(obs);
            a.predicted = stats::median(pred);
            a.tolerance = stats::median(tol);
            const std::size_t decided = a.passes + a.fails;
            if (decided == 0) {
                a.verdict = Verdict::skipped;
            } else {
                a.pass_fraction = static_cast<double>(a.passes) / static_cast<double>(decided);
                a.verdict = a.passes >= required_count(a.required_fraction, decided) ? Verdict::pass : Verdict::fail;
            }
            report.checks.push_back(std::move(a));
        }
    }

    // Trends of the leading spike when it is consistent at every sweep point.
    if (P >= 3 && config.model.kind != ModelFamily::Kind::geometry && config.model.spike_count() > 0 &&
        (wants(config, CheckKind::eigenvalues) || wants(config, CheckKind::eigenvectors))) {
        bool leading_strong = true;
        for (const auto& pt : config.sweep) {
            const auto tiers = config.model.tiers_at(pt.n, pt.d, config.c_limit());
            const auto regime = classify_regime(tiers, pt.n, pt.d, {config.tolerances.strong, config.tolerances.weak});
            leading_strong = leading_strong && regime.strong_prefix > 0;
        }
        if (leading_strong) {
            std::vector<std::string> tracked;
            if (wants(config, CheckKind::eigenvalues)) tracked.push_back("eigenvalue_ratio_1");
            if (wants(config, CheckKind::eigenvectors)) {
                const auto tiers = config.model.tiers_at(config.sweep[0].n, config.sweep[0].d, config.c_limit());
                tracked.push_back(tiers.tiers[0].size == 1 ? "individual_angle_1" : "subspace_angle_1");
            }
            for (const auto& name : tracked) {
                std::vector<double> medians;
                for (std::size_t p = 0; p < P; ++p) {
                    std::vector<double> v;
                    for (const auto& row : report.rows)
                        if (row.n == config.sweep[p].n && row.d == config.sweep[p].d && row.statistic == name)
                            v.push_back(name == "eigenvalue_ratio_1" ? std::abs(row.value - 1.0) : row.value);
                    medians.push_back(stats::median(v));
                }
                const std::string label = name == "eigenvalue_ratio_1" ? "eigenvalue_ratio_error_1" : name;
                report.trends.push_back(evaluate_trend(label, std::move(medians), TrendTarget::decreasing));
            }
        }
    }

    if (wants(config, CheckKind::toy_table)) {
        ToyExampleResult toy;
        for (auto& s : slots) {
            if (!s.toy) continue;
            toy.seeds.push_back(s.toy->stats);
            toy.tables.push_back(s.toy->table);
        }
        toy.median = median_table(toy.tables);
        toy.verdicts = toy_verdicts(toy.seeds, ToyCriteria{});
        report.toy = std::move(toy);
    }
    return report;
}

TrendReport convergence_sweep(const ScenarioConfig& config, const std::vector<TrackedStatistic>& tracked) {
    config.validate();
    if (config.sweep.size() < 3) throw ConfigError("convergence sweep: needs at least 3 sweep points");
    // geometry limits are taken in d, spectral limits in n
    const bool by_d = config.model.kind == ModelFamily::Kind::geometry;
    for (std::size_t p = 1; p < config.sweep.size(); ++p) {
        const auto& a = config.sweep[p - 1];
        const auto& b = config.sweep[p];
        if (by_d ? (b.d <= a.d || b.n < a.n) : b.n <= a.n)
            throw ConfigError(by_d ? "convergence sweep: d must increase" : "convergence sweep: n must increase");
    }
    if (tracked.empty()) throw ConfigError("convergence sweep: no tracked statistics");

    const std::size_t P = config.sweep.size();
    const std::size_t R = config.replications;
    const std::size_t S = tracked.size();
    bool need_spectrum = false, need_vectors = false;
    std::size_t top = 0;
    for (const auto& t : tracked) {
        if (t.kind == TrackedStatistic::Kind::outlier_norm_gap) {
            if (config.model.kind != ModelFamily::Kind::geometry)
                throw ConfigError("outlier_norm_gap needs the geometry family");
            continue;
        }
        if (config.model.kind == ModelFamily::Kind::geometry) throw ConfigError("spectral statistics need a spiked family");
        if (t.index >= config.model.spike_count()) throw ConfigError("tracked spike index out of range");
        need_spectrum = true;
        need_vectors = need_vectors || t.kind == TrackedStatistic::Kind::subspace_angle;
        top = std::max(top, t.index + 1);
    }

    std::vector<double> values(P * R * S, kNaN);
    parallel_for(P * R, config.threads, [&](std::size_t task) {
        const std::size_t p = task / R, r = task % R;
        const auto [n, d] = config.sweep[p];
        const auto spec = config.model.model_at(n, d);
        const auto dataset = generate(spec, n, replication_seed(config, p, r), Retention::never);
        std::optional<SpectralDecomposition> decomp;
        std::optional<TierStructure> tiers;
        if (need_spectrum) {
            SpectrumOptions so;
            so.compute_vectors = need_vectors;
            so.top_k = std::min({top, n, d});
            decomp = sample_covariance_spectrum(dataset.X, so);
            tiers = config.model.tiers_at(n, d, config.c_limit());
        }
        Eigen::MatrixXd basis_storage;
        const Eigen::MatrixXd* basis = nullptr;
        if (need_vectors && spec.basis.kind != BasisKind::standard) {
            basis_storage = basis_matrix(spec);
            basis = &basis_storage;
        }
        for (std::size_t s = 0; s < S; ++s) {
            const auto& t = tracked[s];
            double v = kNaN;
            switch (t.kind) {
            case TrackedStatistic::Kind::eigenvalue_ratio_error:
                if (static_cast<Eigen::Index>(t.index) < decomp->eigenvalues.size())
                    v = std::abs(decomp->eigenvalues(static_cast<Eigen::Index>(t.index)) /
                                     asymptotic_eigenvalue(spec.directions[t.index]) - 1.0);
                break;
            case TrackedStatistic::Kind::subspace_angle:
                if (t.index < decomp->retained()) {
                    const auto& tier = tiers->tiers[tiers->tier_of(t.index)];
                    const auto set = iota_indices(tier.size, tier.first);
                    v = angle_to_subspace(decomp->eigenvectors.col(static_cast<Eigen::Index>(t.index)), set, basis) *
                        std::numbers::pi / 180.0;
                }
                break;
            case TrackedStatistic::Kind::outlier_norm_gap: {
                const auto report = empirical_geometry(dataset);
                std::vector<double> out_norms;
                for (std::size_t j = 0; j < n; ++j)
                    if (report.is_outlier[j]) out_norms.push_back(report.scaled_norms(static_cast<Eigen::Index>(j)));
                if (!out_norms.empty())
                    v = std::abs(stats::mean(out_norms) - limit_mean(limit_norm(config.model.geometry, true)));
                break;
            }
            }
            values[(p * R + r) * S + s] = v;
        }
    });

    TrendReport report;
    report.sweep = config.sweep;
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t s = 0; s < S; ++s)
                report.rows.push_back({config.sweep[p].n, config.sweep[p].d, r, tracked[s].label(),
                                       values[(p * R + r) * S + s]});
    for (std::size_t s = 0; s < S; ++s) {
        std::vector<double> medians;
        for (std::size_t p = 0; p < P; ++p) {
            std::vector<double> v;
            for (std::size_t r = 0; r < R; ++r) v.push_back(values[(p * R + r) * S + s]);
            medians.push_back(stats::median(v));
        }
        report.trends.push_back(evaluate_trend(tracked[s].label(), std::move(medians), tracked[s].target, tracked[s].bound));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Persistence

std::filesystem::path make_run_directory(const std::filesystem::path& base, const std::string& scenario) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);

    std::error_code ec;
    const auto parent = base / scenario;
    std::filesystem::create_directories(parent, ec);
    if (ec) throw RunError("cannot create output directory " + parent.string() + ": " + ec.message());
    for (int attempt = 0; attempt < 1000; ++attempt) {
        auto dir = parent / (attempt == 0 ? std::string(stamp) : std::string(stamp) + "-" + std::to_string(attempt));
        if (std::filesystem::create_directory(dir, ec)) return dir;
        if (ec) throw RunError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
    throw RunError("cannot find a free run directory under " + parent.string());
}

void write_run_report(const RunReport& report, const std::filesystem::path& dir) {
    io::write_text(dir / "report.json", io::to_json(report).dump(2) + "\n");
    std::ostringstream stats_csv;
    io::write_statistics_csv(stats_csv, report);
    io::write_text(dir / "statistics.csv", stats_csv.str());
    if (report.toy) {
        std::ostringstream toy_csv;
        io::write_toy_table_csv(toy_csv, report.toy->median);
        io::write_text(dir / "toy_table.csv", toy_csv.str());
    }
}

} // namespace hdout
