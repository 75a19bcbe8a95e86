#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headprobe/experiments.hpp"

namespace headprobe {

using Json = nlohmann::ordered_json;

const char* software_version();

Json to_json(const std::vector<HeadIndex>& heads);
Json to_json(const SurprisalRecord& r);
Json to_json(const ConditionStats& s);
Json to_json(const std::array<ConditionStats, 4>& summary);
Json to_json(const RegressionFit& fit);
Json to_json(const SensitivityPair& s);
Json to_json(const AlignmentResult& alignment);
Json to_json(const BaselineReport& r);
Json to_json(const ScreenResult& r);
Json to_json(const AblationReport& r);
Json to_json(const PruneCurve& curve);
Json to_json(const PerplexityReport& r);

/// Reads a head list: a JSON array of "l.h" strings, or an object with a
/// "selected_heads" array (a screen summary). Throws ParseError.
std::vector<HeadIndex> heads_from_json(const Json& j, const std::string& source);

// CSV tables. Every table ends with a newline and has a header row.
std::string surprisal_csv(const std::vector<SurprisalRecord>& records);
std::string screen_csv(const ScreenResult& r);
std::string ablation_csv(const AblationReport& r);
std::string prune_csv(const PruneCurve& curve);
std::string perplexity_csv(const PerplexityReport& r);

/// Fixed-width regression table; p to 4 decimals with * (< .05) and
/// ** (< .001) markers.
std::string regression_table(const RegressionFit& fit);

/// Per-condition model means and SEs, with human reading times alongside
/// when supplied.
std::string condition_table(const std::array<ConditionStats, 4>& summary,
                            const std::vector<HumanConditionSummary>& human = {});

/// Shortest decimal text that round-trips the double; "nan"/"inf" spelled out.
std::string format_double(double v);

/// Lowercase hex SHA-256 of a file's bytes. Throws ConfigError if unreadable.
std::string sha256_file(const std::filesystem::path& file);

struct Manifest {
  std::string experiment;
  std::string run_id;
  std::optional<std::uint64_t> seed;
  std::optional<double> cutoff;
  std::map<std::string, std::filesystem::path> assets;  // role -> file
  Json parameters = Json::object();
};

Json to_json(const Manifest& m, const std::string& timestamp);

/// UTC time as 2026-01-31T12:00:00Z.
std::string utc_timestamp();

/// Writes <root>/<experiment>/<run_id>/{summary.json, table.csv,
/// manifest.json}; returns the manifest path.
std::filesystem::path write_run(const std::filesystem::path& root, const Manifest& manifest, const Json& summary,
                                const std::string& table_csv);

}  // namespace headprobe
