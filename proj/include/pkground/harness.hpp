#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkground/corpus.hpp"
#include "pkground/decoder.hpp"
#include "pkground/grounding.hpp"
#include "pkground/scorer.hpp"

namespace pkground {

enum class SweepAxis {
  threshold,
  beam_size,
  max_length,
  min_length,
  alpha,
  grounding_mode,
  persona_mode,
};

std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& text);
bool is_grounding_axis(SweepAxis axis);

struct SweepConfig {
  SweepAxis axis = SweepAxis::threshold;
  std::vector<nlohmann::json> values;
  GroundingConfig grounding;
  DecodeConfig decode = DecodeConfig::ours();
  std::string corpus_path;
  std::string scorer = "mock";
  std::string lm;
  std::string out;
  int jobs = 1;

  /// Throws UsageError when values are empty or do not fit the axis.
  void validate() const;
};

/// Relative paths in the spec resolve against `base_dir`.
SweepConfig sweep_config_from_json(const nlohmann::json& j, const std::string& base_dir = "");
SweepConfig load_sweep_config(const std::string& path);
nlohmann::ordered_json to_json(const SweepConfig& config);

struct ReportRow {
  std::string label;
  nlohmann::json value;
  std::vector<double> cells;
};

struct ReportTable {
  std::string axis;
  std::vector<std::string> columns;
  std::vector<ReportRow> rows;

  /// Row index holding each column's maximum (first row on ties).
  std::vector<std::size_t> argmax_rows() const;
  /// Aligned plain text, two decimals per cell, column maxima marked with '*'.
  std::string render_text() const;
  nlohmann::ordered_json to_json() const;
};

/// Applies one axis value on top of the base configs. Throws UsageError when the value
/// does not fit the axis.
void apply_axis_value(SweepAxis axis, const nlohmann::json& value, GroundingConfig& grounding,
                      DecodeConfig& decode);

/// Runs the sweep against already constructed backends. `lm` may be null for grounding axes.
ReportTable run_sweep(const SweepConfig& config, const Corpus& corpus,
                      const ScorerBackend& scorer, const LanguageModel* lm);

/// Loads the corpus and backends named in the config.
ReportTable run_sweep(const SweepConfig& config);

/// Writes `<out>` (text) and `<out>.json`.
void write_report(const ReportTable& table, const std::string& out);

}  // namespace pkground
