#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pkground/error.hpp"
#include "pkground/finetune.hpp"

namespace pkground {
namespace {

DialogueInstance five_by_ten() {
  DialogueInstance instance;
  instance.id = "f";
  instance.dialogue_turns = {"what is this"};
  for (int i = 0; i < 5; ++i) instance.personas.push_back("persona " + std::to_string(i));
  for (int j = 0; j < 10; ++j) instance.knowledge.push_back("passage " + std::to_string(j));
  instance.gold_persona = std::vector<std::size_t>{1};
  instance.gold_knowledge = 3;
  return instance;
}

TEST(Finetune, GoldKnowledgeFixedAndLabelsFromPersona) {
  Corpus corpus;
  corpus.instances = {five_by_ten()};
  const auto pairs = build_finetune_pairs(corpus, {}, {});
  ASSERT_EQ(pairs.size(), 5u);
  std::vector<int> labels;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(pairs[i].answer, "passage 3");
    EXPECT_EQ(pairs[i].question, "persona " + std::to_string(i) + " what is this");
    EXPECT_EQ(pairs[i].persona_index, i);
    labels.push_back(pairs[i].label);
  }
  EXPECT_EQ(labels, (std::vector<int>{0, 1, 0, 0, 0}));
}

TEST(Finetune, EmptyGoldPersonaGivesAllNegative) {
  Corpus corpus;
  corpus.instances = {five_by_ten()};
  corpus.instances[0].gold_persona = std::vector<std::size_t>{};
  for (const auto& pair : build_finetune_pairs(corpus, {}, {})) EXPECT_EQ(pair.label, 0);
}

TEST(Finetune, PredictedKnowledgeMode) {
  Corpus corpus;
  corpus.instances = {five_by_ten()};
  GroundingPrediction prediction;
  prediction.instance_id = "f";
  prediction.knowledge_index = 7;
  for (const auto& pair : build_finetune_pairs(corpus, {prediction}, {})) EXPECT_EQ(pair.answer, "passage 7");
  prediction.instance_id = "other";
  EXPECT_THROW(build_finetune_pairs(corpus, {prediction}, {}), DataError);
}

TEST(Finetune, MissingLabelsNameInstance) {
  Corpus corpus;
  corpus.instances = {five_by_ten()};
  corpus.instances[0].gold_knowledge.reset();
  try {
    build_finetune_pairs(corpus, {}, {});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'f'"), std::string::npos);
  }
}

TEST(Finetune, SyntheticCountAndByteIdenticalExport) {
  const auto corpus = generate_synthetic({200, 5, 10, 4, 0.1});
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = (dir / "pkground_ft_a.jsonl").string();
  const auto b = (dir / "pkground_ft_b.jsonl").string();
  EXPECT_EQ(export_finetune_pairs(corpus, {}, {}, a), 1000u);
  EXPECT_EQ(export_finetune_pairs(corpus, {}, {}, b), 1000u);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  EXPECT_EQ(slurp(a), slurp(b));

  std::istringstream lines(slurp(a));
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto& instance = corpus.at(j.at("instance_id").get<std::string>());
    EXPECT_EQ(j.at("answer").get<std::string>(), instance.knowledge[*instance.gold_knowledge]);
    ++count;
  }
  EXPECT_EQ(count, 1000u);
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Finetune, OutputFieldOrder) {
  Corpus corpus;
  corpus.instances = {five_by_ten()};
  std::ostringstream out;
  write_finetune_pairs(build_finetune_pairs(corpus, {}, {}), out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
            R"({"question":"persona 0 what is this","answer":"passage 3","label":0,"instance_id":"f","persona_index":0})");
}

}  // namespace
}  // namespace pkground
