#include "pkground/harness.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pkground/error.hpp"
#include "pkground/generation.hpp"

namespace pkground {

namespace {

std::string value_label(const nlohmann::json& value) {
  return value.is_string() ? value.get<std::string>() : value.dump();
}

std::size_t length_value(const nlohmann::json& value, const char* axis) {
  if (!value.is_number_integer() || value.get<std::int64_t>() < 1) {
    throw UsageError(std::string(axis) + " values must be integers >= 1, got " + value.dump());
  }
  return value.get<std::size_t>();
}

double real_value(const nlohmann::json& value, const char* axis) {
  if (!value.is_number()) throw UsageError(std::string(axis) + " values must be numbers, got " + value.dump());
  return value.get<double>();
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

std::string resolve_backend(const std::string& spec, const std::string& base_dir) {
  if (spec.starts_with("tabular:")) return "tabular:" + resolve(spec.substr(8), base_dir);
  return spec;
}

std::string cell_name(SweepAxis axis, const nlohmann::json& value) {
  return "sweep cell " + to_string(axis) + "=" + value_label(value) + ": ";
}

}  // namespace

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::threshold: return "threshold";
    case SweepAxis::beam_size: return "beam_size";
    case SweepAxis::max_length: return "max_length";
    case SweepAxis::min_length: return "min_length";
    case SweepAxis::alpha: return "alpha";
    case SweepAxis::grounding_mode: return "grounding_mode";
    case SweepAxis::persona_mode: return "persona_mode";
  }
  return "?";
}

SweepAxis parse_sweep_axis(const std::string& text) {
  for (auto axis : {SweepAxis::threshold, SweepAxis::beam_size, SweepAxis::max_length,
                    SweepAxis::min_length, SweepAxis::alpha, SweepAxis::grounding_mode,
                    SweepAxis::persona_mode}) {
    if (to_string(axis) == text) return axis;
  }
  throw UsageError("unknown sweep axis '" + text + "'");
}

bool is_grounding_axis(SweepAxis axis) {
  return axis == SweepAxis::threshold || axis == SweepAxis::grounding_mode ||
         axis == SweepAxis::persona_mode;
}

void apply_axis_value(SweepAxis axis, const nlohmann::json& value, GroundingConfig& grounding,
                      DecodeConfig& decode) {
  switch (axis) {
    case SweepAxis::threshold:
      grounding.threshold = real_value(value, "threshold");
      grounding.validate();
      break;
    case SweepAxis::grounding_mode:
      if (!value.is_string()) throw UsageError("grounding_mode values must be strings");
      grounding.mode = parse_grounding_mode(value.get<std::string>());
      break;
    case SweepAxis::persona_mode:
      if (!value.is_string()) throw UsageError("persona_mode values must be strings");
      grounding.persona_mode = parse_persona_mode(value.get<std::string>());
      break;
    case SweepAxis::beam_size:
      if (value.is_string() && value.get<std::string>() == "nucleus") {
        decode.strategy = DecodeStrategy::nucleus;
      } else {
        decode.strategy = DecodeStrategy::beam;
        decode.beam_size = length_value(value, "beam_size");
      }
      break;
    case SweepAxis::max_length:
      decode.max_length = length_value(value, "max_length");
      break;
    case SweepAxis::min_length:
      decode.min_length = length_value(value, "min_length");
      break;
    case SweepAxis::alpha:
      decode.alpha = real_value(value, "alpha");
      break;
  }
}

void SweepConfig::validate() const {
  if (values.empty()) throw UsageError("sweep needs at least one axis value");
  for (const auto& value : values) {
    GroundingConfig g = grounding;
    DecodeConfig d = decode;
    try {
      apply_axis_value(axis, value, g, d);
    } catch (const UsageError& e) {
      throw UsageError(cell_name(axis, value) + e.what());
    }
  }
  if (corpus_path.empty()) throw UsageError("sweep needs a corpus");
  if (!is_grounding_axis(axis) && lm.empty()) throw UsageError("decoding sweeps need an lm");
}

SweepConfig sweep_config_from_json(const nlohmann::json& j, const std::string& base_dir) {
  if (!j.is_object()) throw UsageError("sweep spec must be a JSON object");
  SweepConfig config;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "axis") {
        config.axis = parse_sweep_axis(value.get<std::string>());
      } else if (key == "values") {
        if (!value.is_array()) throw UsageError("'values' must be an array");
        config.values.assign(value.begin(), value.end());
      } else if (key == "base") {
        for (const auto& [section, body] : value.items()) {
          if (section == "grounding") {
            config.grounding = grounding_config_from_json(body, config.grounding);
          } else if (section == "decode") {
            config.decode = decode_config_from_json(body, config.decode);
          } else {
            throw UsageError("unknown base section '" + section + "'");
          }
        }
      } else if (key == "corpus") {
        config.corpus_path = resolve(value.get<std::string>(), base_dir);
      } else if (key == "scorer") {
        config.scorer = value.get<std::string>();
      } else if (key == "lm") {
        config.lm = resolve_backend(value.get<std::string>(), base_dir);
      } else if (key == "out") {
        config.out = resolve(value.get<std::string>(), base_dir);
      } else if (key == "jobs") {
        config.jobs = value.get<int>();
      } else {
        throw UsageError("unknown sweep spec key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("sweep spec: ") + e.what());
  }
  if (!j.contains("axis")) throw UsageError("sweep spec lacks 'axis'");
  config.validate();
  return config;
}

SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sweep spec '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path + ": malformed JSON: " + e.what());
  }
  return sweep_config_from_json(j, std::filesystem::path(path).parent_path().string());
}

nlohmann::ordered_json to_json(const SweepConfig& config) {
  nlohmann::ordered_json j;
  j["axis"] = to_string(config.axis);
  j["values"] = nlohmann::ordered_json::array();
  for (const auto& value : config.values) j["values"].push_back(nlohmann::ordered_json::parse(value.dump()));
  j["base"] = {{"grounding", to_json(config.grounding)}, {"decode", to_json(config.decode)}};
  j["corpus"] = config.corpus_path;
  j["scorer"] = config.scorer;
  j["lm"] = config.lm;
  j["out"] = config.out;
  return j;
}

std::vector<std::size_t> ReportTable::argmax_rows() const {
  std::vector<std::size_t> best(columns.size(), 0);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].cells[c] > rows[best[c]].cells[c]) best[c] = r;
    }
  }
  return best;
}

std::string ReportTable::render_text() const {
  const auto best = argmax_rows();
  std::vector<std::vector<std::string>> grid;
  grid.push_back({axis});
  for (const auto& column : columns) grid.back().push_back(column);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::vector<std::string> line{rows[r].label};
    for (std::size_t c = 0; c < columns.size(); ++c) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(2) << rows[r].cells[c] << (best[c] == r ? "*" : "");
      line.push_back(cell.str());
    }
    grid.push_back(std::move(line));
  }

  std::vector<std::size_t> widths(columns.size() + 1, 0);
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(widths[c])) << line[c];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(widths[c])) << line[c];
      }
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json ReportTable::to_json() const {
  nlohmann::ordered_json j;
  j["axis"] = axis;
  j["columns"] = columns;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json r;
    r["label"] = row.label;
    r["value"] = nlohmann::ordered_json::parse(row.value.dump());
    r["cells"] = row.cells;
    j["rows"].push_back(std::move(r));
  }
  j["argmax_rows"] = argmax_rows();
  return j;
}

ReportTable run_sweep(const SweepConfig& config, const Corpus& corpus, const ScorerBackend& scorer,
                      const LanguageModel* lm) {
  config.validate();
  const bool grounding = is_grounding_axis(config.axis);
  if (!grounding && lm == nullptr) throw UsageError("decoding sweeps need a language model");

  ReportTable table;
  table.axis = to_string(config.axis);
  table.columns = grounding ? std::vector<std::string>{"knowledge", "persona", "average"}
                            : std::vector<std::string>{"bleu", "rouge_l"};

  std::vector<IdText> prompts;
  std::vector<IdText> references;
  if (!grounding) {
    prompts = corpus_prompts(corpus);
    references = corpus_references(corpus);
  }

  for (const auto& value : config.values) {
    GroundingConfig grounding_config = config.grounding;
    DecodeConfig decode_config = config.decode;
    ReportRow row{value_label(value), value, {}};
    try {
      apply_axis_value(config.axis, value, grounding_config, decode_config);
      if (grounding) {
        const auto predictions = ground_corpus(corpus, scorer, scorer, grounding_config, config.jobs);
        const auto accuracy = evaluate_grounding(predictions, corpus);
        row.cells = {accuracy.knowledge_accuracy, accuracy.persona_accuracy, accuracy.grounding_average};
      } else {
        decode_config.validate();
        const auto hypotheses = decode_all(*lm, prompts, decode_config, config.jobs);
        const auto scores = evaluate_generation(hypotheses, references);
        row.cells = {scores.bleu, 100.0 * scores.rouge.f1};
      }
    } catch (const UsageError& e) {
      throw UsageError(cell_name(config.axis, value) + e.what());
    } catch (const TransportError& e) {
      throw TransportError(cell_name(config.axis, value) + e.what(), e.attempts());
    } catch (const ProtocolError& e) {
      throw ProtocolError(cell_name(config.axis, value) + e.what());
    } catch (const Error& e) {
      throw DataError(cell_name(config.axis, value) + e.what());
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

ReportTable run_sweep(const SweepConfig& config) {
  config.validate();
  const auto corpus = load_corpus(config.corpus_path);
  const auto scorer = make_scorer(config.scorer);
  std::unique_ptr<LanguageModel> lm;
  if (!is_grounding_axis(config.axis)) lm = make_language_model(config.lm);
  return run_sweep(config, corpus, *scorer, lm.get());
}

void write_report(const ReportTable& table, const std::string& out) {
  if (const auto parent = std::filesystem::path(out).parent_path(); !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  {
    std::ofstream text(out, std::ios::binary);
    if (!text) throw DataError("cannot write '" + out + "'");
    text << table.render_text();
  }
  std::ofstream json(out + ".json", std::ios::binary);
  if (!json) throw DataError("cannot write '" + out + ".json'");
  json << table.to_json().dump(2) << '\n';
}

}  // namespace pkground
