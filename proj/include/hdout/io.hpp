#pragma once

#include "hdout/consistency.hpp"
#include "hdout/geometry.hpp"
#include "hdout/harness.hpp"
#include "hdout/model.hpp"
#include "hdout/spectra.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace hdout::io {

using nlohmann::json;

/// "%.17g"; non-finite values as nan / inf / -inf.
std::string format_double(double v);

/// Finite doubles as numbers, everything else as null.
json number_or_null(double v);

json to_json(const MixtureModelSpec& spec);
MixtureModelSpec spec_from_json(const json& j);

json to_json(const GeometryScenario& scenario);
GeometryScenario geometry_scenario_from_json(const json& j);

json to_json(const ScenarioConfig& config);
ScenarioConfig config_from_json(const json& j);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Matrix CSV, one column per sample, header sample_1..sample_n.
void write_dataset_csv(std::ostream& os, const GeneratedDataset& dataset);
/// {"<direction, 1-based>": [sample indices, 1-based]} for every outlier direction.
json memberships_json(const GeneratedDataset& dataset);

/// Columns index,eigenvalue (1-based index).
void write_spectrum_csv(std::ostream& os, const SpectralDecomposition& decomp);
/// d x retained matrix, header pc_1..pc_r.
void write_eigenvectors_csv(std::ostream& os, const SpectralDecomposition& decomp);

/// Columns j,l,class,scaled_dist over pairs j < l (1-based).
void write_pair_table_csv(std::ostream& os, const GeometryReport& report);
/// {class: {empirical_mean, predicted, gap, count}}
json geometry_summary_json(const std::vector<ClassSummary>& summary);

json to_json(const CheckResult& check);
/// {regime, per_tier: [{m, ratio, verdict, observed, predicted, tolerance}], checks: [...]}
json regime_json(const RegimeReport& regime, const std::vector<CheckResult>& checks);
/// Flat CSV of checks: name,index,verdict,observed,predicted,tolerance,note
void write_checks_csv(std::ostream& os, const std::vector<CheckResult>& checks);

json to_json(const ToyTable& table);
void write_toy_table_csv(std::ostream& os, const ToyTable& table);

json to_json(const RunReport& report);
void write_statistics_csv(std::ostream& os, const RunReport& report);

/// Writes `content` to `path`, throwing RunError on failure.
void write_text(const std::filesystem::path& path, const std::string& content);

} // namespace hdout::io
