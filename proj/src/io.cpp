#include "hdout/io.hpp"

#include "hdout/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <string_view>

namespace hdout::io {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) bad(where, "expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) bad(where, "unknown key '" + key + "'");
    }
}

double get_double(const json& j, const char* key, const std::string& where, std::optional<double> fallback = {}) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        bad(where, std::string("missing '") + key + "'");
    }
    const auto& v = j.at(key);
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
        bad(where, std::string("'") + key + "' must be a number");
    }
    if (!v.is_number()) bad(where, std::string("'") + key + "' must be a number");
    return v.get<double>();
}

std::size_t get_size(const json& j, const char* key, const std::string& where, std::optional<std::size_t> fallback = {}) {
    if (!j.contains(key)) {
        if (fallback) return *fallback;
        bad(where, std::string("missing '") + key + "'");
    }
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) bad(where, std::string("'") + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

std::uint64_t get_seed(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    bad(where, "seed must be a non-negative integer");
}

std::string noise_name(NoiseDist n) {
    switch (n) {
    case NoiseDist::gaussian:
        return "gaussian";
    case NoiseDist::rademacher:
        return "rademacher";
    case NoiseDist::uniform:
        return "uniform";
    }
    return "?";
}

NoiseDist noise_from(const json& v, const std::string& where) {
    if (!v.is_string()) bad(where, "noise_dist must be a string");
    const auto s = v.get<std::string>();
    if (s == "gaussian") return NoiseDist::gaussian;
    if (s == "rademacher") return NoiseDist::rademacher;
    if (s == "uniform") return NoiseDist::uniform;
    bad(where, "unknown noise_dist '" + s + "'");
}

json direction_json(const DirectionSpec& d) {
    json j = {{"tau1", d.tau1}, {"tau2", d.tau2}, {"w", d.w}};
    if (d.group) j["group"] = *d.group;
    return j;
}

DirectionSpec direction_from(const json& j, const std::string& where) {
    check_keys(j, {"tau1", "tau2", "w", "group"}, where);
    DirectionSpec d;
    d.tau1 = get_double(j, "tau1", where, 1.0);
    d.tau2 = get_double(j, "tau2", where, d.tau1);
    d.w = get_double(j, "w", where, 0.0);
    if (j.contains("group")) {
        if (!j["group"].is_number_integer()) bad(where, "group must be an integer");
        d.group = j["group"].get<int>();
    }
    return d;
}

ScaleSchedule schedule_from(const json& v, const std::string& where) {
    if (v.is_number()) return {v.get<double>(), 0.0};
    check_keys(v, {"coefficient", "exponent"}, where);
    return {get_double(v, "coefficient", where, 1.0), get_double(v, "exponent", where, 0.0)};
}

json schedule_json(const ScaleSchedule& s) { return {{"coefficient", s.coefficient}, {"exponent", s.exponent}}; }

std::string check_name(CheckKind k) { return to_string(k); }

CheckKind check_from(const json& v) {
    if (!v.is_string()) bad("checks", "entries must be strings");
    const auto s = v.get<std::string>();
    for (auto k : {CheckKind::geometry, CheckKind::eigenvalues, CheckKind::eigenvectors, CheckKind::toy_table})
        if (s == to_string(k)) return k;
    bad("checks", "unknown check '" + s + "'");
}

json verdict_json(Verdict v) { return to_string(v); }

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------------------
// Model spec

json to_json(const MixtureModelSpec& spec) {
    json j;
    j["d"] = spec.d;
    j["directions"] = json::array();
    for (const auto& d : spec.directions) j["directions"].push_back(direction_json(d));
    json basis;
    switch (spec.basis.kind) {
    case BasisKind::standard:
        basis["kind"] = "standard";
        break;
    case BasisKind::seeded_random:
        basis["kind"] = "seeded_random";
        basis["seed"] = spec.basis.seed;
        break;
    case BasisKind::explicit_matrix:
        basis["kind"] = "explicit";
        basis["matrix"] = json::array();
        for (Eigen::Index r = 0; r < spec.basis.matrix.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < spec.basis.matrix.cols(); ++c) row.push_back(spec.basis.matrix(r, c));
            basis["matrix"].push_back(row);
        }
        break;
    }
    j["basis"] = basis;
    j["noise_dist"] = noise_name(spec.noise);
    j["membership_mode"] = spec.membership == MembershipMode::coupled ? "coupled" : "independent";
    return j;
}

MixtureModelSpec spec_from_json(const json& j) {
    const std::string where = "model spec";
    check_keys(j, {"d", "directions", "default_direction", "basis", "noise_dist", "membership_mode"}, where);
    MixtureModelSpec spec;
    spec.d = get_size(j, "d", where);
    DirectionSpec fill{1.0, 1.0, 0.0, std::nullopt};
    if (j.contains("default_direction")) fill = direction_from(j["default_direction"], where + ".default_direction");
    if (j.contains("directions")) {
        if (!j["directions"].is_array()) bad(where, "directions must be an array");
        for (const auto& dj : j["directions"]) spec.directions.push_back(direction_from(dj, where + ".directions"));
    }
    if (spec.directions.size() > spec.d) bad(where, "more directions than d");
    spec.directions.resize(spec.d, fill);

    if (j.contains("basis")) {
        const auto& b = j["basis"];
        check_keys(b, {"kind", "seed", "matrix"}, where + ".basis");
        const auto kind = b.value("kind", std::string("standard"));
        if (kind == "standard") {
            spec.basis.kind = BasisKind::standard;
        } else if (kind == "seeded_random") {
            spec.basis.kind = BasisKind::seeded_random;
            if (!b.contains("seed")) bad(where, "seeded_random basis needs a seed");
            spec.basis.seed = get_seed(b["seed"], where + ".basis");
        } else if (kind == "explicit") {
            spec.basis.kind = BasisKind::explicit_matrix;
            if (!b.contains("matrix") || !b["matrix"].is_array()) bad(where, "explicit basis needs a matrix");
            const auto& m = b["matrix"];
            const auto rows = static_cast<Eigen::Index>(m.size());
            spec.basis.matrix.resize(rows, rows);
            for (Eigen::Index r = 0; r < rows; ++r) {
                const auto& row = m[static_cast<std::size_t>(r)];
                if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows) bad(where, "basis matrix must be square");
                for (Eigen::Index c = 0; c < rows; ++c) {
                    const auto& x = row[static_cast<std::size_t>(c)];
                    if (!x.is_number()) bad(where, "basis matrix entries must be numbers");
                    spec.basis.matrix(r, c) = x.get<double>();
                }
            }
        } else {
            bad(where, "unknown basis kind '" + kind + "'");
        }
    }
    if (j.contains("noise_dist")) spec.noise = noise_from(j["noise_dist"], where);
    if (j.contains("membership_mode")) {
        const auto m = j["membership_mode"].get<std::string>();
        if (m == "independent") spec.membership = MembershipMode::independent;
        else if (m == "coupled") spec.membership = MembershipMode::coupled;
        else bad(where, "unknown membership_mode '" + m + "'");
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Geometry scenario

json to_json(const GeometryScenario& s) {
    json j;
    j["sigma_sq"] = s.sigma_sq;
    j["outlier_weight"] = s.outlier_weight;
    json tau;
    switch (s.tau.kind) {
    case TauSchedule::Kind::constant:
        tau = {{"kind", "constant"}, {"value", s.tau.value}};
        break;
    case TauSchedule::Kind::linear:
        tau = {{"kind", "linear"}};
        break;
    case TauSchedule::Kind::power:
        tau = {{"kind", "power"}, {"value", s.tau.value}, {"alpha", s.tau.alpha}};
        break;
    }
    j["tau"] = tau;
    std::visit(
        [&](const auto& r) {
            using R = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<R, PositiveFraction>)
                j["regime"] = {{"kind", "positive_fraction"}, {"p_out", r.p_out}};
            else if constexpr (std::is_same_v<R, GrowingK>)
                j["regime"] = {{"kind", "growing_k"}, {"r", r.r}, {"k_exponent", r.k_exponent}};
            else
                j["regime"] = {{"kind", "fixed_k"}, {"K", r.K}, {"r", r.r}};
        },
        s.regime);
    return j;
}

GeometryScenario geometry_scenario_from_json(const json& j) {
    const std::string where = "geometry scenario";
    check_keys(j, {"sigma_sq", "tau", "regime", "outlier_weight"}, where);
    GeometryScenario s;
    s.sigma_sq = get_double(j, "sigma_sq", where, 1.0);
    s.outlier_weight = get_double(j, "outlier_weight", where, s.outlier_weight);
    if (j.contains("tau")) {
        const auto& t = j["tau"];
        check_keys(t, {"kind", "value", "alpha"}, where + ".tau");
        const auto kind = t.value("kind", std::string("constant"));
        if (kind == "constant") s.tau.kind = TauSchedule::Kind::constant;
        else if (kind == "linear") s.tau.kind = TauSchedule::Kind::linear;
        else if (kind == "power") s.tau.kind = TauSchedule::Kind::power;
        else bad(where, "unknown tau kind '" + kind + "'");
        s.tau.value = get_double(t, "value", where, 1.0);
        s.tau.alpha = get_double(t, "alpha", where, 0.0);
    }
    if (!j.contains("regime")) bad(where, "missing 'regime'");
    const auto& r = j["regime"];
    check_keys(r, {"kind", "p_out", "r", "k_exponent", "K"}, where + ".regime");
    const auto kind = r.value("kind", std::string());
    if (kind == "positive_fraction") {
        s.regime = PositiveFraction{get_double(r, "p_out", where)};
    } else if (kind == "growing_k") {
        s.regime = GrowingK{get_double(r, "r", where), get_double(r, "k_exponent", where, 0.5)};
    } else if (kind == "fixed_k") {
        s.regime = FixedK{get_size(r, "K", where), get_double(r, "r", where)};
    } else {
        bad(where, "unknown regime kind '" + kind + "'");
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Scenario config

json to_json(const ScenarioConfig& c) {
    json j;
    j["name"] = c.name;
    j["seed"] = c.seed;
    j["replications"] = c.replications;
    j["threads"] = c.threads;
    if (!std::isnan(c.c)) j["c"] = std::isinf(c.c) ? json("inf") : json(c.c);
    j["sweep"] = json::array();
    for (const auto& p : c.sweep) j["sweep"].push_back({{"n", p.n}, {"d", p.d}});
    j["checks"] = json::array();
    for (auto k : c.checks) j["checks"].push_back(check_name(k));
    const auto& t = c.tolerances;
    j["tolerances"] = {{"ratio", t.ratio},       {"bulk_slack", t.bulk_slack},       {"k_slack", t.k_slack},
                       {"strong", t.strong},     {"weak", t.weak},                   {"pass_fraction", t.pass_fraction},
                       {"geometry_relative", t.geometry_relative}};
    json m;
    const auto& f = c.model;
    switch (f.kind) {
    case ModelFamily::Kind::spiked:
        m["family"] = "spiked";
        m["spikes"] = json::array();
        for (const auto& s : f.spikes) m["spikes"].push_back({{"delta", schedule_json(s.delta)}, {"w", s.w}});
        m["noise_dist"] = noise_name(f.noise);
        break;
    case ModelFamily::Kind::fixed:
        m["family"] = "fixed";
        m["spec"] = to_json(f.fixed_model);
        break;
    case ModelFamily::Kind::toy:
        m["family"] = "toy";
        break;
    case ModelFamily::Kind::geometry:
        m["family"] = "geometry";
        m["scenario"] = to_json(f.geometry);
        break;
    }
    if (f.kind != ModelFamily::Kind::geometry) {
        m["c_lambda"] = f.c_lambda;
        if (!f.tier_sizes.empty()) m["tier_sizes"] = f.tier_sizes;
    }
    j["model"] = m;
    return j;
}

ScenarioConfig config_from_json(const json& j) {
    const std::string where = "scenario config";
    try {
        check_keys(j, {"name", "seed", "replications", "threads", "c", "sweep", "checks", "tolerances", "model"}, where);
        ScenarioConfig c;
        if (j.contains("name")) {
            if (!j["name"].is_string()) bad(where, "name must be a string");
            c.name = j["name"].get<std::string>();
            if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos || c.name == "." || c.name == "..")
                bad(where, "name must be a plain directory name");
        }
        if (j.contains("seed")) c.seed = get_seed(j["seed"], where);
        c.replications = get_size(j, "replications", where, 1);
        c.threads = get_size(j, "threads", where, 1);
        if (j.contains("c")) c.c = get_double(j, "c", where);

        if (!j.contains("sweep") || !j["sweep"].is_array()) bad(where, "missing 'sweep' array");
        for (const auto& p : j["sweep"]) {
            check_keys(p, {"n", "d"}, where + ".sweep");
            c.sweep.push_back({get_size(p, "n", where + ".sweep"), get_size(p, "d", where + ".sweep")});
        }
        if (j.contains("checks")) {
            if (!j["checks"].is_array()) bad(where, "checks must be an array");
            for (const auto& k : j["checks"]) c.checks.push_back(check_from(k));
        }
        if (j.contains("tolerances")) {
            const auto& t = j["tolerances"];
            check_keys(t, {"ratio", "bulk_slack", "k_slack", "strong", "weak", "pass_fraction", "geometry_relative"},
                       where + ".tolerances");
            auto& o = c.tolerances;
            o.ratio = get_double(t, "ratio", where, o.ratio);
            o.bulk_slack = get_double(t, "bulk_slack", where, o.bulk_slack);
            o.k_slack = get_double(t, "k_slack", where, o.k_slack);
            o.strong = get_double(t, "strong", where, o.strong);
            o.weak = get_double(t, "weak", where, o.weak);
            o.pass_fraction = get_double(t, "pass_fraction", where, o.pass_fraction);
            o.geometry_relative = get_double(t, "geometry_relative", where, o.geometry_relative);
        }

        if (!j.contains("model")) bad(where, "missing 'model'");
        const auto& m = j["model"];
        const std::string mw = where + ".model";
        check_keys(m, {"family", "spikes", "tier_sizes", "c_lambda", "noise_dist", "spec", "scenario"}, mw);
        auto& f = c.model;
        const auto family = m.value("family", std::string());
        f.c_lambda = get_double(m, "c_lambda", mw, 1.0);
        if (m.contains("noise_dist")) f.noise = noise_from(m["noise_dist"], mw);
        if (m.contains("tier_sizes")) {
            if (!m["tier_sizes"].is_array()) bad(mw, "tier_sizes must be an array");
            for (const auto& q : m["tier_sizes"]) {
                if (!q.is_number_integer() || q.get<long long>() < 1) bad(mw, "tier sizes must be positive integers");
                f.tier_sizes.push_back(q.get<std::size_t>());
            }
        }
        if (family == "spiked" || family == "pure_noise") {
            f.kind = ModelFamily::Kind::spiked;
            if (family == "spiked") {
                if (!m.contains("spikes") || !m["spikes"].is_array()) bad(mw, "spiked family needs a 'spikes' array");
                for (const auto& s : m["spikes"]) {
                    check_keys(s, {"delta", "w"}, mw + ".spikes");
                    if (!s.contains("delta")) bad(mw, "spike needs 'delta'");
                    f.spikes.push_back({schedule_from(s["delta"], mw + ".spikes"), get_double(s, "w", mw, 0.0)});
                }
            } else if (m.contains("spikes")) {
                bad(mw, "pure_noise family takes no spikes");
            }
        } else if (family == "fixed") {
            f.kind = ModelFamily::Kind::fixed;
            if (!m.contains("spec")) bad(mw, "fixed family needs 'spec'");
            f.fixed_model = spec_from_json(m["spec"]);
        } else if (family == "toy") {
            f.kind = ModelFamily::Kind::toy;
        } else if (family == "geometry") {
            f.kind = ModelFamily::Kind::geometry;
            if (!m.contains("scenario")) bad(mw, "geometry family needs 'scenario'");
            f.geometry = geometry_scenario_from_json(m["scenario"]);
        } else {
            bad(mw, "unknown family '" + family + "'");
        }
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Tables

void write_dataset_csv(std::ostream& os, const GeneratedDataset& dataset) {
    const auto& X = dataset.X;
    for (Eigen::Index j = 0; j < X.cols(); ++j) os << (j ? "," : "") << "sample_" << j + 1;
    os << '\n';
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) os << (j ? "," : "") << format_double(X(i, j));
        os << '\n';
    }
}

json memberships_json(const GeneratedDataset& dataset) {
    json j = json::object();
    for (std::size_t i = 0; i < dataset.memberships.size(); ++i) {
        if (!dataset.spec.directions[i].is_outlier()) continue;
        json list = json::array();
        for (std::size_t s : dataset.memberships[i]) list.push_back(s + 1);
        j[std::to_string(i + 1)] = list;
    }
    return j;
}

void write_spectrum_csv(std::ostream& os, const SpectralDecomposition& decomp) {
    os << "index,eigenvalue\n";
    for (Eigen::Index i = 0; i < decomp.eigenvalues.size(); ++i)
        os << i + 1 << ',' << format_double(decomp.eigenvalues(i)) << '\n';
}

void write_eigenvectors_csv(std::ostream& os, const SpectralDecomposition& decomp) {
    const auto& V = decomp.eigenvectors;
    for (Eigen::Index c = 0; c < V.cols(); ++c) os << (c ? "," : "") << "pc_" << c + 1;
    os << '\n';
    for (Eigen::Index r = 0; r < V.rows(); ++r) {
        for (Eigen::Index c = 0; c < V.cols(); ++c) os << (c ? "," : "") << format_double(V(r, c));
        os << '\n';
    }
}

void write_pair_table_csv(std::ostream& os, const GeometryReport& report) {
    os << "j,l,class,scaled_dist\n";
    const auto n = static_cast<std::size_t>(report.scaled_norms.size());
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = j + 1; l < n; ++l)
            os << j + 1 << ',' << l + 1 << ',' << to_string(report.pair_class(j, l)) << ','
               << format_double(report.scaled_distances(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)))
               << '\n';
}

json geometry_summary_json(const std::vector<ClassSummary>& summary) {
    json j = json::object();
    for (const auto& c : summary) {
        j[c.name] = {{"count", c.count},
                     {"empirical_mean", number_or_null(c.empirical_mean)},
                     {"predicted", c.predicted ? number_or_null(*c.predicted) : json(nullptr)},
                     {"gap", c.gap ? number_or_null(*c.gap) : json(nullptr)}};
    }
    return j;
}

json to_json(const CheckResult& c) {
    return {{"name", c.name},
            {"index", c.index},
            {"verdict", verdict_json(c.verdict)},
            {"observed", number_or_null(c.observed)},
            {"predicted", number_or_null(c.predicted)},
            {"tolerance", number_or_null(c.tolerance)},
            {"note", c.note}};
}

json regime_json(const RegimeReport& regime, const std::vector<CheckResult>& checks) {
    json j;
    j["regime"] = to_string(regime.kind);
    if (regime.kind == RegimeKind::partial) j["h"] = regime.h;
    j["strong_prefix"] = regime.strong_prefix;
    j["per_tier"] = json::array();
    for (std::size_t m = 0; m < regime.ratios.size(); ++m) {
        json t = {{"m", m + 1}, {"ratio", number_or_null(regime.ratios[m])}};
        t["angle_behavior"] = m < regime.angle_behavior.size() ? regime.angle_behavior[m] : "";
        j["per_tier"].push_back(t);
    }
    j["checks"] = json::array();
    for (const auto& c : checks) j["checks"].push_back(to_json(c));
    return j;
}

void write_checks_csv(std::ostream& os, const std::vector<CheckResult>& checks) {
    os << "name,index,verdict,observed,predicted,tolerance,note\n";
    for (const auto& c : checks)
        os << c.name << ',' << c.index << ',' << to_string(c.verdict) << ',' << format_double(c.observed) << ','
           << format_double(c.predicted) << ',' << format_double(c.tolerance) << ',' << csv_escape(c.note) << '\n';
}

json to_json(const ToyTable& t) {
    json j;
    j["squares"] = json::array();
    for (int k = 0; k < 12; ++k) {
        json row = json::array();
        for (int i = 0; i < 11; ++i) row.push_back(number_or_null(t.squares(k, i)));
        j["squares"].push_back(row);
    }
    j["eigenvalues"] = json::array();
    j["angles_e10"] = json::array();
    for (std::size_t i = 0; i < 11; ++i) {
        j["eigenvalues"].push_back(number_or_null(t.eigenvalues[i]));
        j["angles_e10"].push_back(number_or_null(t.angles_e10[i]));
    }
    return j;
}

void write_toy_table_csv(std::ostream& os, const ToyTable& t) {
    os << "row";
    for (int i = 0; i < 11; ++i) os << ",pc_" << i + 1;
    os << '\n';
    for (int k = 0; k < 12; ++k) {
        os << "entry_" << k + 1;
        for (int i = 0; i < 11; ++i) os << ',' << format_double(t.squares(k, i));
        os << '\n';
    }
    os << "eigenvalue";
    for (double v : t.eigenvalues) os << ',' << format_double(v);
    os << "\nangle_e10_deg";
    for (double v : t.angles_e10) os << ',' << format_double(v);
    os << '\n';
}

json to_json(const RunReport& r) {
    json j;
    j["scenario"] = r.scenario;
    j["seed"] = r.seed;
    j["replications"] = r.replications;
    j["passed"] = r.passed();
    j["sweep"] = json::array();
    for (const auto& p : r.sweep) j["sweep"].push_back({{"n", p.n}, {"d", p.d}});
    j["checks"] = json::array();
    for (const auto& c : r.checks) {
        j["checks"].push_back({{"point", {{"n", c.n}, {"d", c.d}}},
                               {"name", c.name},
                               {"index", c.index},
                               {"verdict", verdict_json(c.verdict)},
                               {"passes", c.passes},
                               {"fails", c.fails},
                               {"skips", c.skips},
                               {"pass_fraction", number_or_null(c.pass_fraction)},
                               {"required_fraction", c.required_fraction},
                               {"median_observed", number_or_null(c.median_observed)},
                               {"predicted", number_or_null(c.predicted)},
                               {"tolerance", number_or_null(c.tolerance)},
                               {"note", c.note}});
    }
    j["trends"] = json::array();
    for (const auto& t : r.trends) {
        json med = json::array();
        for (double m : t.medians) med.push_back(number_or_null(m));
        j["trends"].push_back({{"statistic", t.statistic},
                               {"medians", med},
                               {"trend", to_string(t.verdict)},
                               {"target", t.target == TrendTarget::decreasing ? "decreasing" : "bounded"},
                               {"bound", number_or_null(t.bound)},
                               {"verdict", t.passed ? "pass" : "fail"}});
    }
    if (r.toy) {
        json toy;
        toy["median_table"] = to_json(r.toy->median);
        toy["verdicts"] = json::array();
        for (const auto& c : r.toy->verdicts) toy["verdicts"].push_back(to_json(c));
        toy["seeds"] = json::array();
        for (const auto& s : r.toy->seeds) {
            toy["seeds"].push_back({{"seed", s.seed},
                                    {"outliers", s.outliers},
                                    {"lambda1", number_or_null(s.lambda1)},
                                    {"lambda2", number_or_null(s.lambda2)},
                                    {"lambda11", number_or_null(s.lambda11)},
                                    {"angle1_deg", number_or_null(s.angle1_deg)},
                                    {"angle2_deg", number_or_null(s.angle2_deg)},
                                    {"energy10", number_or_null(s.energy10)},
                                    {"max_single10", number_or_null(s.max_single10)},
                                    {"min_angle_e10_deg", number_or_null(s.min_angle_e10)},
                                    {"outlier_score_out", number_or_null(s.outlier_score_out)},
                                    {"outlier_score_non", number_or_null(s.outlier_score_non)}});
        }
        j["toy"] = toy;
    }
    return j;
}

void write_statistics_csv(std::ostream& os, const RunReport& r) {
    os << "scenario,n,d,rep,statistic,value\n";
    for (const auto& row : r.rows)
        os << csv_escape(r.scenario) << ',' << row.n << ',' << row.d << ',' << row.rep + 1 << ',' << row.statistic << ','
           << format_double(row.value) << '\n';
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RunError("cannot open " + path.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw RunError("write failed for " + path.string());
}

} // namespace hdout::io
