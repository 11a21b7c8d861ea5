#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "pkground/error.hpp"
#include "pkground/grounding.hpp"

namespace pkground {
namespace {

/// Scores come from a lookup keyed by (question, answer); unknown pairs score 0.
class TableScorer final : public ScorerBackend {
 public:
  std::map<std::pair<std::string, std::string>, double> table;
  std::string identity() const override { return "table"; }
  std::vector<double> score(std::span<const TextPair> pairs) const override {
    std::vector<double> out;
    for (const auto& p : pairs) {
      auto it = table.find({p.question, p.answer});
      out.push_back(it == table.end() ? 0.0 : it->second);
    }
    return out;
  }
};

DialogueInstance small_instance(std::size_t n, std::size_t m) {
  DialogueInstance instance;
  instance.id = "x";
  instance.dialogue_turns = {"earlier turn", "latest turn"};
  for (std::size_t i = 0; i < n; ++i) instance.personas.push_back("persona" + std::to_string(i));
  for (std::size_t j = 0; j < m; ++j) instance.knowledge.push_back("knowledge" + std::to_string(j));
  instance.gold_persona = std::vector<std::size_t>{0};
  instance.gold_knowledge = 0;
  return instance;
}

TEST(BuildQuestion, PersonaThenDialogue) {
  DialogueInstance instance = small_instance(1, 1);
  instance.personas = {"I want to visit Seven Wonders of the Ancient World."};
  instance.dialogue_turns = {"Wow, what is this?"};
  EXPECT_EQ(build_question(instance, 0, {}),
            "I want to visit Seven Wonders of the Ancient World. Wow, what is this?");
}

TEST(BuildQuestion, DialogueOnlyAndFullHistory) {
  DialogueInstance instance = small_instance(1, 1);
  instance.dialogue_turns = {"hello"};
  EXPECT_EQ(build_question(instance, std::nullopt, {}), "hello");

  instance.dialogue_turns = {"a", "b"};
  instance.personas = {"p"};
  GroundingConfig config;
  config.dialogue_scope = DialogueScope::full_history;
  EXPECT_EQ(build_question(instance, 0, config), "p a b");
  EXPECT_THROW(build_question(instance, 1, config), DataError);
}

TEST(ScoreMatrix, ShapesAndPairCounts) {
  const auto instance = small_instance(5, 10);
  MockLexicalScorer mock;
  CountingScorer counting(mock);
  GroundingConfig config;
  for (auto mode : {GroundingMode::pd_k, GroundingMode::p_k}) {
    config.mode = mode;
    counting.reset();
    const auto matrix = compute_score_matrix(instance, counting, config);
    EXPECT_EQ(matrix.rows(), 5);
    EXPECT_EQ(matrix.cols(), 10);
    EXPECT_EQ(counting.pairs_seen(), 50u);
  }
  config.mode = GroundingMode::d_k;
  counting.reset();
  const auto matrix = compute_score_matrix(small_instance(5, 3), counting, config);
  EXPECT_EQ(matrix.rows(), 1);
  EXPECT_EQ(matrix.cols(), 3);
  EXPECT_EQ(counting.pairs_seen(), 3u);
}

TEST(ScoreMatrix, RowMajorEntriesMatchPairs) {
  const auto instance = small_instance(2, 3);
  TableScorer scorer;
  GroundingConfig config;
  scorer.table[{build_question(instance, 1, config), "knowledge2"}] = 0.8;
  scorer.table[{build_question(instance, 0, config), "knowledge1"}] = 0.3;
  const auto matrix = compute_score_matrix(instance, scorer, config);
  EXPECT_DOUBLE_EQ(matrix(1, 2), 0.8);
  EXPECT_DOUBLE_EQ(matrix(0, 1), 0.3);
  EXPECT_DOUBLE_EQ(matrix(0, 2), 0.0);

  config.mode = GroundingMode::p_k;
  scorer.table[{"persona1", "knowledge0"}] = 0.6;
  EXPECT_DOUBLE_EQ(compute_score_matrix(instance, scorer, config)(1, 0), 0.6);
}

TEST(SelectKnowledge, InspectionAndTies) {
  ScoreMatrix a(2, 2);
  a << 0.1, 0.9, 0.2, 0.3;
  const auto choice = select_knowledge(a);
  EXPECT_EQ(choice.knowledge_index, 1u);
  EXPECT_DOUBLE_EQ(choice.best_score, 0.9);

  const ScoreMatrix flat = ScoreMatrix::Constant(3, 4, 0.4);
  EXPECT_EQ(select_knowledge(flat).knowledge_index, 0u);
  EXPECT_DOUBLE_EQ(select_knowledge(flat).best_score, 0.4);

  ScoreMatrix tie(2, 3);
  tie << 0.1, 0.5, 0.2, 0.5, 0.1, 0.5;
  EXPECT_EQ(select_knowledge(tie).knowledge_index, 0u);
}

TEST(SelectKnowledge, MatchesExhaustiveScanAndIsMonotoneInvariant) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    ScoreMatrix m(5, 10);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<double>(rng() % 20) / 20.0;  // coarse values force ties
    }
    // exhaustive scan over all 50 entries in (knowledge, persona) order
    std::size_t expected = 0;
    double best = -1.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (m(i, j) > best) {
          best = m(i, j);
          expected = static_cast<std::size_t>(j);
        }
      }
    }
    const auto choice = select_knowledge(m);
    ASSERT_EQ(choice.knowledge_index, expected);

    const double scale = 0.5 + static_cast<double>(rng() % 100) / 10.0;
    EXPECT_EQ(select_knowledge((m.array() * scale).exp()).knowledge_index, expected);
    EXPECT_EQ(select_knowledge(m.array().cube() + 3.0).knowledge_index, expected);
    EXPECT_EQ(select_knowledge((m.array() + 1.0).log()).knowledge_index, expected);
  }
}

TEST(SelectKnowledge, FollowsKnowledgePermutation) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    ScoreMatrix m = ScoreMatrix::NullaryExpr(4, 6, [&] { return static_cast<double>(rng() % 1000) / 1000.0; });
    std::vector<Eigen::Index> pi(6);
    std::iota(pi.begin(), pi.end(), 0);
    std::shuffle(pi.begin(), pi.end(), rng);
    ScoreMatrix permuted(4, 6);
    for (Eigen::Index j = 0; j < 6; ++j) permuted.col(pi[j]) = m.col(j);
    const auto original = select_knowledge(m);
    const auto moved = select_knowledge(permuted);
    // unique maxima only; ties may legitimately resolve differently
    if ((m.array() == original.best_score).count() == 1) {
      EXPECT_EQ(moved.knowledge_index, static_cast<std::size_t>(pi[original.knowledge_index]));
    }
  }
}

TEST(ThresholdedArgmax, Cases) {
  Eigen::VectorXd s(3);
  s << 0.3, 0.7, 0.6;
  EXPECT_EQ(thresholded_argmax(s, 0.5), 1u);
  Eigen::VectorXd low(2);
  low << 0.3, 0.4;
  EXPECT_EQ(thresholded_argmax(low, 0.5), std::nullopt);
  EXPECT_EQ(thresholded_argmax(low, 0.0), 1u);
  Eigen::VectorXd at(2);
  at << 0.5, 0.5;
  EXPECT_EQ(thresholded_argmax(at, 0.5), 0u);  // inclusive comparison, lowest index on ties
}

TEST(ThresholdedArgmax, ThresholdProperties) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::VectorXd s = Eigen::VectorXd::NullaryExpr(5, [&] { return static_cast<double>(rng() % 101) / 100.0; });
    const auto top1 = thresholded_argmax(s, 0.0);
    ASSERT_TRUE(top1.has_value());
    EXPECT_EQ(thresholded_argmax(s, std::nextafter(s.maxCoeff(), 2.0)), std::nullopt);
    for (double t = 0.0; t <= 1.0; t += 0.05) {
      const auto at_t = thresholded_argmax(s, t);
      if (at_t) {
        EXPECT_EQ(*at_t, *top1);
      }
      if (!at_t) {
        EXPECT_EQ(thresholded_argmax(s, t + 0.05), std::nullopt);
      }
    }
  }
}

TEST(SelectPersona, UsesFixedKnowledgeAndMode) {
  const auto instance = small_instance(3, 4);
  TableScorer scorer;
  GroundingConfig config;
  config.persona_mode = PersonaMode::p_ktrue;
  scorer.table[{"persona0", "knowledge2"}] = 0.3;
  scorer.table[{"persona1", "knowledge2"}] = 0.7;
  scorer.table[{"persona2", "knowledge2"}] = 0.6;
  auto choice = select_persona(instance, 2, scorer, config);
  EXPECT_EQ(choice.persona_index, 1u);
  EXPECT_EQ(choice.persona_scores, (std::vector<double>{0.3, 0.7, 0.6}));

  config.persona_mode = PersonaMode::pd_ktrue;
  choice = select_persona(instance, 2, scorer, config);
  EXPECT_EQ(choice.persona_index, std::nullopt);  // pd questions are not in the table

  EXPECT_THROW(select_persona(instance, 4, scorer, config), DataError);
}

TEST(GroundInstance, SyntheticMatchesGold) {
  const auto corpus = generate_synthetic({60, 5, 10, 9, 0.25});
  MockLexicalScorer mock;
  GroundingConfig config;
  for (const auto& instance : corpus.instances) {
    const auto prediction = ground_instance(instance, mock, mock, config);
    EXPECT_EQ(prediction.knowledge_index, *instance.gold_knowledge);
    if (instance.gold_persona->empty()) {
      EXPECT_EQ(prediction.persona_index, std::nullopt);
    } else {
      EXPECT_EQ(prediction.persona_index, instance.gold_persona->front());
    }
    const double top = *std::max_element(prediction.persona_scores.begin(), prediction.persona_scores.end());
    EXPECT_EQ(prediction.persona_index.has_value(), top >= config.threshold);

    // the gold cell is the strict maximum of the full lattice
    if (!instance.gold_persona->empty()) {
      const auto matrix = compute_score_matrix(instance, mock, config);
      const auto gi = static_cast<Eigen::Index>(instance.gold_persona->front());
      const auto gj = static_cast<Eigen::Index>(*instance.gold_knowledge);
      EXPECT_EQ((matrix.array() >= matrix(gi, gj)).count(), 1);
    }
  }
}

TEST(GroundInstance, DialogueOnlyIgnoresPersonas) {
  auto instance = small_instance(3, 3);
  TableScorer scorer;
  scorer.table[{"latest turn", "knowledge2"}] = 0.9;
  scorer.table[{"persona0 latest turn", "knowledge0"}] = 1.0;
  GroundingConfig config;
  config.mode = GroundingMode::d_k;
  CountingScorer counting(scorer);
  const auto prediction = ground_instance(instance, counting, scorer, config);
  EXPECT_EQ(prediction.knowledge_index, 2u);
  EXPECT_EQ(counting.pairs_seen(), 3u);
}

TEST(GroundInstance, SeparateBackendsPerStage) {
  auto instance = small_instance(2, 2);
  TableScorer knowledge_scorer;
  knowledge_scorer.table[{"persona1 latest turn", "knowledge1"}] = 0.9;
  TableScorer persona_scorer;
  persona_scorer.table[{"persona0 latest turn", "knowledge1"}] = 0.8;
  const auto prediction = ground_instance(instance, knowledge_scorer, persona_scorer, {});
  EXPECT_EQ(prediction.knowledge_index, 1u);
  EXPECT_EQ(prediction.persona_index, 0u);
}

TEST(GroundInstance, RejectsBadThreshold) {
  MockLexicalScorer mock;
  GroundingConfig config;
  config.threshold = 1.5;
  EXPECT_THROW(ground_instance(small_instance(1, 1), mock, mock, config), UsageError);
}

TEST(GroundCorpus, ParallelMatchesSerial) {
  const auto corpus = generate_synthetic({40, 5, 10, 2, 0.1});
  MockLexicalScorer mock;
  EXPECT_EQ(ground_corpus(corpus, mock, mock, {}, 1), ground_corpus(corpus, mock, mock, {}, 4));
}

Corpus labeled_corpus(std::size_t count) {
  Corpus corpus;
  for (std::size_t i = 0; i < count; ++i) {
    auto instance = small_instance(3, 3);
    instance.id = "i" + std::to_string(i);
    instance.gold_knowledge = 1;
    instance.gold_persona = std::vector<std::size_t>{2};
    corpus.instances.push_back(instance);
  }
  return corpus;
}

GroundingPrediction predict(const std::string& id, std::size_t k, std::optional<std::size_t> p) {
  GroundingPrediction prediction;
  prediction.instance_id = id;
  prediction.knowledge_index = k;
  prediction.persona_index = p;
  return prediction;
}

TEST(EvaluateGrounding, AllCorrect) {
  const auto corpus = labeled_corpus(3);
  std::vector<GroundingPrediction> predictions;
  for (const auto& instance : corpus.instances) predictions.push_back(predict(instance.id, 1, 2));
  const auto acc = evaluate_grounding(predictions, corpus);
  EXPECT_DOUBLE_EQ(acc.knowledge_accuracy, 100.0);
  EXPECT_DOUBLE_EQ(acc.persona_accuracy, 100.0);
  EXPECT_DOUBLE_EQ(acc.grounding_average, 100.0);
}

TEST(EvaluateGrounding, Arithmetic) {
  const auto corpus = labeled_corpus(5);
  std::vector<GroundingPrediction> predictions;
  for (const auto& instance : corpus.instances) predictions.push_back(predict(instance.id, 1, 2));
  predictions[3].knowledge_index = 0;
  const auto acc = evaluate_grounding(predictions, corpus);
  EXPECT_DOUBLE_EQ(acc.knowledge_accuracy, 80.0);
  EXPECT_DOUBLE_EQ(acc.persona_accuracy, 100.0);
  EXPECT_DOUBLE_EQ(acc.grounding_average, 90.0);
}

TEST(EvaluateGrounding, NoPersonaCases) {
  auto corpus = labeled_corpus(2);
  corpus.instances[0].gold_persona = std::vector<std::size_t>{};
  std::vector<GroundingPrediction> predictions = {predict("i0", 1, std::nullopt), predict("i1", 1, std::nullopt)};
  const auto acc = evaluate_grounding(predictions, corpus);
  EXPECT_DOUBLE_EQ(acc.persona_accuracy, 50.0);
}

TEST(EvaluateGrounding, Errors) {
  auto corpus = labeled_corpus(1);
  EXPECT_THROW(evaluate_grounding({predict("nope", 0, 0)}, corpus), DataError);
  EXPECT_THROW(evaluate_grounding({predict("i0", 0, 0), predict("i0", 0, 0)}, corpus), DataError);
  corpus.instances[0].gold_knowledge.reset();
  EXPECT_THROW(evaluate_grounding({predict("i0", 0, 0)}, corpus), DataError);
  EXPECT_THROW(evaluate_grounding({}, corpus), DataError);
}

TEST(Predictions, JsonRoundTrip) {
  GroundingPrediction prediction = predict("a", 3, std::nullopt);
  prediction.persona_scores = {0.25, 0.125};
  prediction.knowledge_best_score = 0.75;
  EXPECT_EQ(prediction_from_json(nlohmann::json::parse(to_json(prediction).dump())), prediction);
  EXPECT_EQ(to_json(prediction).dump(),
            R"({"id":"a","knowledge_index":3,"persona_index":null,"persona_scores":[0.25,0.125],"knowledge_best_score":0.75})");
  EXPECT_THROW(prediction_from_json(nlohmann::json::parse(R"({"id":"a","knowledge_index":1,"x":1})")), DataError);
}

}  // namespace
}  // namespace pkground
