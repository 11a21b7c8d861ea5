#include "pkground/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pkground/corpus.hpp"
#include "pkground/decoder.hpp"
#include "pkground/error.hpp"
#include "pkground/finetune.hpp"
#include "pkground/generation.hpp"
#include "pkground/grounding.hpp"
#include "pkground/harness.hpp"
#include "pkground/manifest.hpp"
#include "pkground/scorer.hpp"
#include "pkground/tabular_lm.hpp"

namespace pkground {

namespace {

std::string fixed2(double value) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << value;
  return out.str();
}

std::string join_command(const std::vector<std::string>& args) {
  std::string command = "pkground";
  for (const auto& arg : args) command += " " + arg;
  return command;
}

void write_json(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

void ensure_parent(const std::string& path) {
  if (path.empty()) return;
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

std::string tabular_path(const std::string& spec) {
  return spec.starts_with("tabular:") ? spec.substr(8) : std::string();
}

struct GroundingFlags {
  std::string mode = "pd_k";
  std::string persona_mode = "pd_ktrue";
  double threshold = 0.5;
  std::string scope = "last_turn";

  void attach(CLI::App& app) {
    app.add_option("--mode", mode, "Knowledge search mode")
        ->check(CLI::IsMember({"pd_k", "p_k", "d_k"}))
        ->capture_default_str();
    app.add_option("--persona-mode", persona_mode, "Question side for persona scoring")
        ->check(CLI::IsMember({"p_ktrue", "pd_ktrue"}))
        ->capture_default_str();
    app.add_option("--threshold", threshold, "Persona threshold in [0,1]")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--scope", scope, "Dialogue text used in questions")
        ->check(CLI::IsMember({"last_turn", "full_history"}))
        ->capture_default_str();
  }

  GroundingConfig config() const {
    GroundingConfig c;
    c.mode = parse_grounding_mode(mode);
    c.persona_mode = parse_persona_mode(persona_mode);
    c.threshold = threshold;
    c.dialogue_scope = parse_dialogue_scope(scope);
    c.validate();
    return c;
  }
};

struct DecodeFlags {
  std::string strategy = "beam";
  std::size_t beam = 10;
  std::size_t min_len = 5;
  std::size_t max_len = 80;
  double alpha = 1.0;
  double top_p = 0.9;
  std::uint64_t seed = 0;
  bool normalize_during_pruning = false;

  void attach(CLI::App& app) {
    app.add_option("--strategy", strategy, "Decoding strategy")
        ->check(CLI::IsMember({"beam", "nucleus"}))
        ->capture_default_str();
    app.add_option("--beam", beam, "Beam size")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--min-len", min_len, "Minimum response length in tokens, EOS included")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--max-len", max_len, "Maximum response length in tokens, EOS included")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--alpha", alpha, "Length normalization coefficient")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--top-p", top_p, "Nucleus mass in (0,1]")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--seed", seed, "Sampling seed")->capture_default_str();
    app.add_flag("--normalize-during-pruning", normalize_during_pruning,
                 "Rank beam expansions by normalized score");
  }

  DecodeConfig config() const {
    DecodeConfig c;
    c.strategy = parse_decode_strategy(strategy);
    c.beam_size = beam;
    c.min_length = min_len;
    c.max_length = max_len;
    c.alpha = alpha;
    c.top_p = top_p;
    c.seed = seed;
    c.normalize_during_pruning = normalize_during_pruning;
    c.validate();
    return c;
  }
};

class Runner {
 public:
  Runner(std::vector<std::string> args, std::ostream& out, std::ostream& err)
      : args_(std::move(args)), out_(out), err_(err) {}

  int run() {
    CLI::App app{"Persona-knowledge grounding and response decoding toolkit", "pkground"};
    app.set_version_flag("--version", std::string(PKGROUND_VERSION));
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    LoadOptions load;
    load.warn = [this](const std::string& message) { err_ << "warning: " << message << '\n'; };

    // validate
    auto* validate = app.add_subcommand("validate", "Check a corpus file against the schema and invariants");
    std::string validate_corpus_path;
    std::string validate_out;
    validate->add_option("corpus,--corpus", validate_corpus_path, "Corpus JSONL")->required();
    validate->add_flag("--lenient", load.lenient, "Treat unknown keys as warnings");
    validate->add_option("--out", validate_out, "Write the report as JSON");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    SyntheticOptions synth_options;
    std::string synth_out = "corpus.jsonl";
    std::string synth_refs;
    std::string synth_lm;
    std::size_t synth_lm_depth = 3;
    synth->add_option("--count", synth_options.count, "Number of dialogues")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--personas", synth_options.personas, "Persona candidates per dialogue")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--knowledge", synth_options.knowledge, "Knowledge candidates per dialogue")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--no-persona-fraction", synth_options.no_persona_fraction,
                      "Fraction of dialogues without a gold persona")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    synth->add_option("--seed", synth_options.seed, "Generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Corpus output path")->capture_default_str();
    synth->add_option("--refs-out", synth_refs, "Also write gold responses as {id,text} JSONL");
    synth->add_option("--lm-out", synth_lm, "Also fit a tabular LM on the gold responses");
    synth->add_option("--lm-depth", synth_lm_depth, "Prefix depth of the fitted LM")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    // ground
    auto* ground = app.add_subcommand("ground", "Select knowledge and persona for every dialogue");
    GroundingFlags ground_flags;
    std::string ground_corpus_path;
    std::string ground_out = "predictions.jsonl";
    std::string ground_scorer = "mock";
    std::string ground_persona_scorer;
    int ground_jobs = 0;
    ground->add_option("--corpus", ground_corpus_path, "Corpus JSONL")->required();
    ground->add_option("--out", ground_out, "Predictions output path")->capture_default_str();
    ground->add_option("--scorer", ground_scorer, "Knowledge scorer: mock or http:<url>")
        ->capture_default_str();
    ground->add_option("--persona-scorer", ground_persona_scorer,
                       "Persona scorer (defaults to --scorer), e.g. a fine-tuned model");
    ground->add_option("--jobs", ground_jobs, "Worker threads (0 = all cores)")->capture_default_str();
    ground->add_flag("--lenient", load.lenient, "Treat unknown corpus keys as warnings");
    ground_flags.attach(*ground);

    // eval-grounding
    auto* eval_grounding = app.add_subcommand("eval-grounding", "Score predictions against gold labels");
    std::string eg_corpus;
    std::string eg_predictions = "predictions.jsonl";
    std::string eg_out;
    eval_grounding->add_option("--corpus", eg_corpus, "Corpus JSONL")->required();
    eval_grounding->add_option("--predictions", eg_predictions, "Predictions JSONL")->capture_default_str();
    eval_grounding->add_option("--out", eg_out, "Write the accuracies as JSON");

    // export-finetune
    auto* export_ft = app.add_subcommand("export-finetune", "Write persona fine-tuning pairs");
    std::string ft_corpus;
    std::string ft_predictions;
    std::string ft_out = "finetune.jsonl";
    std::string ft_scope = "last_turn";
    export_ft->add_option("--corpus", ft_corpus, "Corpus JSONL")->required();
    export_ft->add_option("--predictions", ft_predictions,
                          "Use predicted knowledge instead of the gold label");
    export_ft->add_option("--out", ft_out, "Output JSONL")->capture_default_str();
    export_ft->add_option("--scope", ft_scope, "Dialogue text used in questions")
        ->check(CLI::IsMember({"last_turn", "full_history"}))
        ->capture_default_str();

    // decode
    auto* decode_cmd = app.add_subcommand("decode", "Generate responses");
    DecodeFlags decode_flags;
    std::string decode_lm;
    std::string decode_corpus;
    std::string decode_predictions;
    std::string decode_prompts;
    std::string decode_out = "hypotheses.jsonl";
    int decode_jobs = 0;
    HttpLanguageModelOptions http_lm;
    decode_cmd->add_option("--lm", decode_lm, "Language model: tabular:<path> or http:<url>")->required();
    auto* corpus_opt = decode_cmd->add_option("--corpus", decode_corpus, "Build prompts from this corpus");
    decode_cmd->add_option("--predictions", decode_predictions,
                           "Ground prompts on these predictions instead of gold labels")
        ->needs(corpus_opt);
    decode_cmd->add_option("--prompts", decode_prompts, "Prompts as {id,text} JSONL")->excludes(corpus_opt);
    decode_cmd->add_option("--out", decode_out, "Output {id,text} JSONL")->capture_default_str();
    decode_cmd->add_option("--jobs", decode_jobs, "Worker threads (0 = all cores)")->capture_default_str();
    decode_cmd->add_option("--top-k", http_lm.top_k, "Distribution head requested from http LMs")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    decode_cmd->add_option("--lm-eos", http_lm.eos_token, "EOS id for http LMs (default: ask /healthz)");
    decode_cmd->add_option("--lm-vocab", http_lm.vocab_size, "Vocabulary size for http LMs");
    decode_flags.attach(*decode_cmd);

    // eval-gen
    auto* eval_gen = app.add_subcommand("eval-gen", "BLEU and ROUGE-L of hypotheses against references");
    std::string gen_hyp;
    std::string gen_ref;
    std::string gen_out;
    eval_gen->add_option("--hyp", gen_hyp, "Hypotheses {id,text} JSONL")->required();
    eval_gen->add_option("--ref", gen_ref, "References {id,text} JSONL")->required();
    eval_gen->add_option("--out", gen_out, "Write the scores as JSON");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Run a one-axis ablation sweep");
    std::string sweep_spec;
    std::string sweep_out;
    int sweep_jobs = -1;
    sweep->add_option("spec,--spec", sweep_spec, "Sweep spec JSON")->required();
    sweep->add_option("--out", sweep_out, "Override the report path from the spec");
    sweep->add_option("--jobs", sweep_jobs, "Worker threads (0 = all cores)");

    try {
      std::vector<std::string> reversed(args_.rbegin(), args_.rend());
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out_, err_);
      return code == 0 ? kExitOk : kExitUsage;
    }

    manifest_.command = join_command(args_);
    manifest_.started_at = timestamp_now();

    try {
      for (const auto* path : {&validate_out, &synth_out, &synth_refs, &synth_lm, &ground_out, &eg_out,
                               &ft_out, &decode_out, &gen_out, &sweep_out}) {
        ensure_parent(*path);
      }
      if (*validate) return cmd_validate(validate_corpus_path, validate_out, load);
      if (*synth) return cmd_synth(synth_options, synth_out, synth_refs, synth_lm, synth_lm_depth);
      if (*ground) {
        return cmd_ground(ground_corpus_path, ground_out, ground_scorer,
                          ground_persona_scorer.empty() ? ground_scorer : ground_persona_scorer,
                          ground_flags.config(), ground_jobs, load);
      }
      if (*eval_grounding) return cmd_eval_grounding(eg_corpus, eg_predictions, eg_out);
      if (*export_ft) return cmd_export(ft_corpus, ft_predictions, ft_out, ft_scope);
      if (*decode_cmd) {
        if (decode_corpus.empty() == decode_prompts.empty()) {
          throw UsageError("decode needs exactly one of --corpus or --prompts");
        }
        return cmd_decode(decode_lm, http_lm, decode_corpus, decode_predictions, decode_prompts,
                          decode_out, decode_flags.config(), decode_jobs);
      }
      if (*eval_gen) return cmd_eval_gen(gen_hyp, gen_ref, gen_out);
      if (*sweep) return cmd_sweep(sweep_spec, sweep_out, sweep_jobs);
    } catch (const UsageError& e) {
      err_ << "usage error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << '\n';
      return kExitData;
    }
    return kExitUsage;
  }

 private:
  void finish(const std::string& output) {
    manifest_.finished_at = timestamp_now();
    write_manifest(manifest_, output);
  }

  int cmd_validate(const std::string& path, const std::string& out, const LoadOptions& load) {
    manifest_.config = {{"corpus", path}, {"lenient", load.lenient}};
    manifest_.add_input(path);
    // Parse structurally first; invariant problems are reported rather than thrown.
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus '" + path + "'");
    Corpus corpus;
    corpus.source_path = path;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
      ++line_number;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path + ":" + std::to_string(line_number) + ": malformed JSON: " + e.what());
      }
      try {
        corpus.instances.push_back(instance_from_json(j, load));
      } catch (const DataError& e) {
        throw DataError(path + ":" + std::to_string(line_number) + ": " + e.what());
      }
    }
    if (corpus.instances.empty()) throw DataError(path + ": empty corpus");

    const auto report = validate_corpus(corpus);
    nlohmann::ordered_json j;
    j["instances"] = corpus.size();
    j["violations"] = nlohmann::ordered_json::array();
    j["warnings"] = nlohmann::ordered_json::array();
    for (const auto& v : report.violations) {
      out_ << "violation: #" << v.position << " '" << v.instance_id << "': " << v.message << '\n';
      j["violations"].push_back({{"id", v.instance_id}, {"position", v.position}, {"message", v.message}});
    }
    for (const auto& w : report.warnings) {
      j["warnings"].push_back({{"id", w.instance_id}, {"position", w.position}, {"message", w.message}});
    }
    if (!report.warnings.empty()) {
      out_ << "warning: " << report.warnings.size() << " instance(s) differ from the 5 persona / "
           << "10 knowledge shape (first: #" << report.warnings.front().position << ")\n";
    }
    out_ << (report.empty() ? "ok: " : "invalid: ") << corpus.size() << " instances, "
         << report.violations.size() << " violation(s)\n";
    if (!out.empty()) {
      write_json(j, out);
      finish(out);
    }
    return report.empty() ? kExitOk : kExitData;
  }

  int cmd_synth(const SyntheticOptions& options, const std::string& out, const std::string& refs,
                const std::string& lm_out, std::size_t lm_depth) {
    manifest_.config = {{"count", options.count},
                        {"personas", options.personas},
                        {"knowledge", options.knowledge},
                        {"no_persona_fraction", options.no_persona_fraction},
                        {"seed", options.seed}};
    const auto corpus = generate_synthetic(options);
    write_corpus(corpus, out);
    finish(out);
    if (!refs.empty()) {
      write_id_text(corpus_references(corpus), refs);
      finish(refs);
    }
    if (!lm_out.empty()) {
      std::vector<std::vector<std::string>> sequences;
      for (const auto& reference : corpus_references(corpus)) {
        std::vector<std::string> words;
        std::istringstream in(reference.text);
        std::string word;
        while (in >> word) {
          std::transform(word.begin(), word.end(), word.begin(),
                         [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
          std::erase_if(word, [](char c) { return c == '.'; });
          if (!word.empty()) words.push_back(word);
        }
        sequences.push_back(std::move(words));
      }
      auto vocab = synthetic_response_vocabulary();
      vocab.insert(vocab.begin(), "<eos>");
      write_tabular_lm(fit_tabular_lm(sequences, vocab, "<eos>", lm_depth), lm_out);
      manifest_.config["lm_depth"] = lm_depth;
      finish(lm_out);
    }
    out_ << "wrote " << corpus.size() << " instances to " << out << '\n';
    return kExitOk;
  }

  int cmd_ground(const std::string& corpus_path, const std::string& out, const std::string& scorer_spec,
                 const std::string& persona_spec, const GroundingConfig& config, int jobs,
                 const LoadOptions& load) {
    const auto corpus = load_corpus(corpus_path, load);
    manifest_.add_input(corpus_path);
    const auto knowledge_scorer = make_scorer(scorer_spec);
    const auto persona_scorer = persona_spec == scorer_spec ? nullptr : make_scorer(persona_spec);
    const ScorerBackend& persona = persona_scorer ? *persona_scorer : *knowledge_scorer;
    manifest_.config = to_json(config);
    manifest_.config["corpus"] = corpus_path;
    manifest_.backends = {"knowledge:" + knowledge_scorer->identity(), "persona:" + persona.identity()};

    const auto predictions = ground_corpus(corpus, *knowledge_scorer, persona, config, jobs);
    write_predictions(predictions, out);
    finish(out);
    out_ << "grounded " << predictions.size() << " instances into " << out << '\n';
    return kExitOk;
  }

  int cmd_eval_grounding(const std::string& corpus_path, const std::string& predictions_path,
                         const std::string& out) {
    const auto corpus = load_corpus(corpus_path);
    const auto predictions = load_predictions(predictions_path);
    manifest_.add_input(corpus_path);
    manifest_.add_input(predictions_path);
    const auto accuracy = evaluate_grounding(predictions, corpus);
    out_ << "knowledge_accuracy " << fixed2(accuracy.knowledge_accuracy) << '\n'
         << "persona_accuracy " << fixed2(accuracy.persona_accuracy) << '\n'
         << "grounding_average " << fixed2(accuracy.grounding_average) << '\n';
    if (!out.empty()) {
      write_json({{"count", accuracy.count},
                  {"knowledge_accuracy", accuracy.knowledge_accuracy},
                  {"persona_accuracy", accuracy.persona_accuracy},
                  {"grounding_average", accuracy.grounding_average}},
                 out);
      finish(out);
    }
    return kExitOk;
  }

  int cmd_export(const std::string& corpus_path, const std::string& predictions_path,
                 const std::string& out, const std::string& scope) {
    const auto corpus = load_corpus(corpus_path);
    manifest_.add_input(corpus_path);
    std::vector<GroundingPrediction> predictions;
    if (!predictions_path.empty()) {
      predictions = load_predictions(predictions_path);
      manifest_.add_input(predictions_path);
    }
    GroundingConfig config;
    config.dialogue_scope = parse_dialogue_scope(scope);
    manifest_.config = {{"knowledge_source", predictions_path.empty() ? "gold" : "predictions"},
                        {"dialogue_scope", scope}};
    const auto count = export_finetune_pairs(corpus, predictions, config, out);
    finish(out);
    out_ << "wrote " << count << " pairs to " << out << '\n';
    return kExitOk;
  }

  int cmd_decode(const std::string& lm_spec, const HttpLanguageModelOptions& http,
                 const std::string& corpus_path, const std::string& predictions_path,
                 const std::string& prompts_path, const std::string& out, const DecodeConfig& config,
                 int jobs) {
    const auto lm = make_language_model(lm_spec, http);
    manifest_.backends = {lm->identity()};
    if (const auto path = tabular_path(lm_spec); !path.empty()) manifest_.add_input(path);

    std::vector<IdText> prompts;
    if (!prompts_path.empty()) {
      prompts = load_id_text(prompts_path);
      manifest_.add_input(prompts_path);
    } else {
      const auto corpus = load_corpus(corpus_path);
      manifest_.add_input(corpus_path);
      std::vector<GroundingPrediction> predictions;
      if (!predictions_path.empty()) {
        predictions = load_predictions(predictions_path);
        manifest_.add_input(predictions_path);
      }
      prompts = corpus_prompts(corpus, predictions);
    }
    manifest_.config = to_json(config);
    const auto hypotheses = decode_all(*lm, prompts, config, jobs);
    write_id_text(hypotheses, out);
    finish(out);
    out_ << "decoded " << hypotheses.size() << " prompts into " << out << '\n';
    return kExitOk;
  }

  int cmd_eval_gen(const std::string& hyp, const std::string& ref, const std::string& out) {
    const auto hypotheses = load_id_text(hyp);
    const auto references = load_id_text(ref);
    manifest_.add_input(hyp);
    manifest_.add_input(ref);
    const auto scores = evaluate_generation(hypotheses, references);
    out_ << "bleu " << fixed2(scores.bleu) << '\n'
         << "rouge_l " << fixed2(100.0 * scores.rouge.f1) << '\n';
    if (!out.empty()) {
      write_json({{"count", scores.count},
                  {"bleu", scores.bleu},
                  {"rouge_l",
                   {{"precision", scores.rouge.precision},
                    {"recall", scores.rouge.recall},
                    {"f1", scores.rouge.f1}}}},
                 out);
      finish(out);
    }
    return kExitOk;
  }

  int cmd_sweep(const std::string& spec_path, const std::string& out_override, int jobs) {
    auto config = load_sweep_config(spec_path);
    if (!out_override.empty()) config.out = out_override;
    if (jobs >= 0) config.jobs = jobs;
    if (config.out.empty()) throw UsageError("sweep needs an output path ('out' or --out)");
    manifest_.add_input(spec_path);
    manifest_.add_input(config.corpus_path);
    if (const auto path = tabular_path(config.lm); !path.empty() && !is_grounding_axis(config.axis)) {
      manifest_.add_input(path);
    }
    manifest_.config = to_json(config);
    manifest_.backends = {config.scorer};
    if (!is_grounding_axis(config.axis)) manifest_.backends.push_back(config.lm);

    const auto table = run_sweep(config);
    write_report(table, config.out);
    finish(config.out);
    out_ << table.render_text();
    return kExitOk;
  }

  std::vector<std::string> args_;
  std::ostream& out_;
  std::ostream& err_;
  RunManifest manifest_;
};

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return Runner(args, out, err).run();
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace pkground
