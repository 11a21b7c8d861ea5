// One line per acceptance criterion; exit status is non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "pkground/corpus.hpp"
#include "pkground/finetune.hpp"
#include "pkground/grounding.hpp"
#include "pkground/harness.hpp"
#include "pkground/metrics.hpp"
#include "pkground/scorer.hpp"
#include "pkground/tabular_lm.hpp"

namespace fs = std::filesystem;
using namespace pkground;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

int failures = 0;

void criterion(const std::string& name, double budget_seconds, const std::function<void(Outcome&)>& body) {
  Outcome outcome;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(outcome);
  } catch (const std::exception& e) {
    outcome.fail(std::string("exception: ") + e.what());
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget_seconds > 0 && elapsed >= budget_seconds) {
    std::ostringstream why;
    why << "took " << elapsed << " s, budget " << budget_seconds << " s";
    outcome.fail(why.str());
  }
  std::ostringstream line;
  line << (outcome.pass ? "[PASS] " : "[FAIL] ") << name << " (" << std::fixed;
  line.precision(3);
  line << elapsed << " s)";
  if (!outcome.pass) line << ": " << outcome.detail;
  std::cout << line.str() << std::endl;
  if (!outcome.pass) ++failures;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

DecodeConfig beam_config(std::size_t beam, std::size_t min_length, std::size_t max_length, double alpha) {
  DecodeConfig config;
  config.beam_size = beam;
  config.min_length = min_length;
  config.max_length = max_length;
  config.alpha = alpha;
  return config;
}

void beam_exhaustive(Outcome& o) {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto lm = random_tabular_lm(1000 + seed, {2 + seed % 3, 4, 0.15});
    for (double alpha : {0.0, 0.6, 1.0}) {
      for (std::size_t min_length : {1u, 2u}) {
        const auto expected = oracle::exhaustive_best(lm, min_length, 4, alpha);
        const auto result = beam_search(lm, {}, beam_config(256, min_length, 4, alpha));
        const double recomputed = result.raw_logprob / oracle::reference_norm(result.tokens.size(), alpha);
        if (std::abs(result.normalized_score - expected.normalized) > 1e-9 ||
            std::abs(recomputed - expected.normalized) > 1e-9) {
          std::ostringstream why;
          why << "seed " << seed << " alpha " << alpha << " L_min " << min_length << ": beam "
              << result.normalized_score << " vs exhaustive " << expected.normalized;
          o.fail(why.str());
        }
        ++checked;
      }
    }
  }
  if (checked != 300) o.fail("wrong case count");
}

void greedy(Outcome& o) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto lm = random_tabular_lm(2000 + seed, {4, 6, 0.15});
    const std::size_t min_length = 1 + seed % 3;
    const auto result = beam_search(lm, {}, beam_config(1, min_length, 8, 0.0));
    if (result.tokens != oracle::greedy(lm, min_length, 8)) o.fail("seed " + std::to_string(seed));
  }
}

void length_constraints(Outcome& o) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    RandomLmOptions options;
    options.vocab_size = 2 + rng() % 4;
    options.depth = 1 + rng() % 4;
    options.zero_probability = 0.3;
    const auto lm = random_tabular_lm(rng(), options);
    DecodeConfig config;
    config.min_length = 1 + rng() % 6;
    config.max_length = config.min_length + rng() % 6;
    config.alpha = static_cast<double>(rng() % 3) / 2.0;
    config.beam_size = 1 + rng() % 5;
    config.seed = rng();
    if (trial % 2 == 1) config.strategy = DecodeStrategy::nucleus;
    config.top_p = 0.5 + static_cast<double>(rng() % 50) / 100.0;
    const auto result = decode(lm, {}, config);
    const auto& tokens = result.tokens;
    if (tokens.size() < config.min_length || tokens.size() > config.max_length) {
      o.fail("trial " + std::to_string(trial) + ": length " + std::to_string(tokens.size()));
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == lm.eos_token() && (i + 1 < config.min_length || i + 1 != tokens.size())) {
        o.fail("trial " + std::to_string(trial) + ": EOS at position " + std::to_string(i + 1));
      }
    }
  }
}

void grounding_oracle(Outcome& o) {
  SyntheticOptions options;
  options.seed = 20240601;
  const auto corpus = generate_synthetic(options);
  MockLexicalScorer mock;
  GroundingConfig config;
  const auto accuracy = evaluate_grounding(ground_corpus(corpus, mock, mock, config), corpus);
  if (accuracy.count != 200) o.fail("count " + std::to_string(accuracy.count));
  if (accuracy.knowledge_accuracy != 100.0) o.fail("knowledge " + std::to_string(accuracy.knowledge_accuracy));
  if (accuracy.persona_accuracy != 100.0) o.fail("persona " + std::to_string(accuracy.persona_accuracy));
  std::size_t none = 0;
  for (const auto& instance : corpus.instances) none += instance.gold_persona->empty() ? 1 : 0;
  if (none != 20) o.fail("no-persona instances " + std::to_string(none));
}

void mode_accounting(Outcome& o) {
  const auto corpus = generate_synthetic({20, 5, 10, 3, 0.1});
  MockLexicalScorer mock;
  CountingScorer counting(mock);
  GroundingConfig config;
  for (const auto& instance : corpus.instances) {
    counting.reset();
    config.mode = GroundingMode::pd_k;
    compute_score_matrix(instance, counting, config);
    if (counting.pairs_seen() != 50) o.fail("pd_k pairs " + std::to_string(counting.pairs_seen()));
    counting.reset();
    config.mode = GroundingMode::d_k;
    compute_score_matrix(instance, counting, config);
    if (counting.pairs_seen() != 10) o.fail("d_k pairs " + std::to_string(counting.pairs_seen()));
  }
}

void threshold_sweep(Outcome& o) {
  const auto corpus = generate_synthetic({200, 5, 10, 5, 0.1});
  MockLexicalScorer mock;
  SweepConfig config;
  config.axis = SweepAxis::threshold;
  config.values = {0.0, 0.5, 0.6, 0.7};
  config.corpus_path = "in-memory";
  const auto table = run_sweep(config, corpus, mock, nullptr);
  if (table.rows.size() != 4) o.fail("rows " + std::to_string(table.rows.size()));
  GroundingConfig zero;
  zero.threshold = 0.0;
  for (const auto& prediction : ground_corpus(corpus, mock, mock, zero)) {
    if (!prediction.persona_index) o.fail("threshold 0 predicted none for " + prediction.instance_id);
  }
  const fs::path dir = fs::current_path() / "acceptance_sweep";
  fs::create_directories(dir);
  write_report(table, (dir / "a.txt").string());
  write_report(run_sweep(config, corpus, mock, nullptr), (dir / "b.txt").string());
  if (slurp(dir / "a.txt") != slurp(dir / "b.txt") || slurp(dir / "a.txt.json") != slurp(dir / "b.txt.json")) {
    o.fail("rerun differs");
  }
  fs::remove_all(dir);
}

void metrics(Outcome& o) {
  const std::vector<EvalPair> identical = {{"the cat sat on the mat .", "the cat sat on the mat ."},
                                           {"a quick brown fox jumps", "a quick brown fox jumps"}};
  if (std::abs(bleu_corpus(identical) - 100.0) > 1e-9) o.fail("identical BLEU");
  if (rouge_l_corpus(identical).f1 != 1.0) o.fail("identical ROUGE-L");
  const std::vector<EvalPair> brevity = {{"a b c d", "a b c d e"}};
  if (std::abs(bleu_corpus(brevity) - 77.88) > 0.01) o.fail("brevity BLEU " + std::to_string(bleu_corpus(brevity)));
  if (rouge_l("a b c d", "a c d e").f1 != 0.75) o.fail("ROUGE-L hand case");
}

void length_norm_values(Outcome& o) {
  for (double alpha : {0.0, 0.5, 1.0}) {
    if (length_norm(1, alpha) != 1.0) o.fail("length_norm(1, " + std::to_string(alpha) + ")");
  }
  if (std::abs(length_norm(7, 0.6) - 1.51572) > 1e-5) o.fail("length_norm(7, 0.6)");
}

void nucleus_check(Outcome& o) {
  Eigen::VectorXd p(3);
  p << 0.6, 0.3, 0.1;
  const auto entries = nucleus(p, 0.8);
  if (entries.size() != 2 || entries[0].token != 0 || entries[1].token != 1) {
    o.fail("nucleus membership");
    return;
  }
  auto frequencies = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::map<TokenId, int> counts;
    for (int i = 0; i < 100000; ++i) ++counts[draw_from_nucleus(entries, rng)];
    return counts;
  };
  const auto counts = frequencies(42);
  if (counts.size() != 2) o.fail("token outside nucleus drawn");
  if (std::abs(counts.at(0) / 1e5 - 2.0 / 3.0) > 0.01) o.fail("frequency of token 0");
  if (std::abs(counts.at(1) / 1e5 - 1.0 / 3.0) > 0.01) o.fail("frequency of token 1");
  if (frequencies(42) != counts) o.fail("draws differ across runs");

  const auto lm = random_tabular_lm(8, {4, 4, 0.1});
  auto config = DecodeConfig::baseline();
  config.seed = 99;
  if (nucleus_sample(lm, {}, config).tokens != nucleus_sample(lm, {}, config).tokens) o.fail("sampling differs");
}

void finetune(Outcome& o) {
  const auto corpus = generate_synthetic({200, 5, 10, 12, 0.1});
  const fs::path dir = fs::current_path() / "acceptance_finetune";
  fs::create_directories(dir);
  const auto first = (dir / "a.jsonl").string();
  const auto second = (dir / "b.jsonl").string();
  if (export_finetune_pairs(corpus, {}, {}, first) != 1000) o.fail("pair count");
  export_finetune_pairs(corpus, {}, {}, second);
  for (const auto& pair : build_finetune_pairs(corpus, {}, {})) {
    const auto& instance = corpus.at(pair.instance_id);
    if (pair.answer != instance.knowledge[*instance.gold_knowledge]) o.fail("answer mismatch " + pair.instance_id);
  }
  if (slurp(first) != slurp(second)) o.fail("re-export differs");
  fs::remove_all(dir);
}

int shell(const fs::path& dir, const std::string& args) {
  const std::string command = "cd '" + dir.string() + "' && SOURCE_DATE_EPOCH=1700000000 '" PKGROUND_CLI "' " +
                              args + " > /dev/null";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void end_to_end(Outcome& o) {
  const std::vector<std::string> chain = {
      "synth --count 40 --seed 7 --out corpus.jsonl --refs-out refs.jsonl --lm-out lm.json",
      "ground --corpus corpus.jsonl --out predictions.jsonl --jobs 2",
      "eval-grounding --corpus corpus.jsonl --predictions predictions.jsonl --out grounding.json",
      "export-finetune --corpus corpus.jsonl --predictions predictions.jsonl --out finetune.jsonl",
      "decode --lm tabular:lm.json --corpus corpus.jsonl --predictions predictions.jsonl --out hyp.jsonl --jobs 2",
      "decode --lm tabular:lm.json --corpus corpus.jsonl --strategy nucleus --seed 5 --out hyp_nucleus.jsonl",
      "eval-gen --hyp hyp.jsonl --ref refs.jsonl --out generation.json",
      "sweep spec_threshold.json",
      "sweep spec_beam.json",
  };
  const fs::path root = fs::current_path() / "acceptance_e2e";
  fs::remove_all(root);
  std::vector<fs::path> runs = {root / "run1", root / "run2"};
  for (const auto& dir : runs) {
    fs::create_directories(dir);
    std::ofstream(dir / "spec_threshold.json")
        << R"({"axis":"threshold","values":[0.0,0.5,0.6,0.7],"corpus":"corpus.jsonl","out":"sweep_threshold.txt"})";
    std::ofstream(dir / "spec_beam.json")
        << R"({"axis":"beam_size","values":["nucleus",1,5],"base":{"decode":{"min_length":2,"max_length":20}},)"
        << R"("corpus":"corpus.jsonl","lm":"tabular:lm.json","out":"sweep_beam.txt"})";
    for (const auto& step : chain) {
      if (const int code = shell(dir, step); code != 0) {
        o.fail("'" + step + "' exited " + std::to_string(code));
        return;
      }
    }
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(runs[0])) {
    const auto twin = runs[1] / entry.path().filename();
    if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) o.fail("differs: " + entry.path().filename().string());
    ++compared;
  }
  std::size_t manifests = 0;
  for (const auto& entry : fs::directory_iterator(runs[0])) {
    manifests += entry.path().string().ends_with(".manifest.json") ? 1 : 0;
  }
  if (manifests < 11) o.fail("only " + std::to_string(manifests) + " manifests");
  if (compared < 20) o.fail("only " + std::to_string(compared) + " files");
  if (o.pass) fs::remove_all(root);
}

}  // namespace

int main() {
  criterion("beam search equals exhaustive search (50 LMs, beta 256)", 5.0, beam_exhaustive);
  criterion("beam 1 with alpha 0 equals greedy decoding (100 LMs)", 1.0, greedy);
  criterion("output lengths respect [L_min, L_max] over 1000 trials", 10.0, length_constraints);
  criterion("grounding oracle on 200 synthetic dialogues is 100% / 100%", 5.0, grounding_oracle);
  criterion("pd_k scores n*m pairs and d_k scores m pairs", 0, mode_accounting);
  criterion("threshold sweep has 4 rows, threshold 0 never abstains, reruns identical", 0, threshold_sweep);
  criterion("BLEU and ROUGE-L exact cases", 0, metrics);
  criterion("length norm values", 0, length_norm_values);
  criterion("nucleus membership, frequencies and determinism", 0, nucleus_check);
  criterion("finetune export of 200 dialogues gives 1000 pairs, byte-identical", 0, finetune);
  criterion("end-to-end CLI chain is byte-identical across two runs", 0, end_to_end);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
