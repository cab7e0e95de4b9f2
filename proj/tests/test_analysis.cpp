#include <gtest/gtest.h>

#include <cmath>
#include <regex>
#include <sstream>

#include "sorex/analysis.hpp"
#include "support/synthetic.hpp"

using namespace sorex;

namespace {

// u0=0 u1=1 u2=2 v0=3 v1=4
WalkPool toy_pool() {
  WalkPool pool{0, 2, {}, 0};
  for (std::vector<NodeId> s : std::vector<std::vector<NodeId>>{{3, kEmpty}, {3, 1}, {1, kEmpty}, {1, 3}, {1, 4}, {1, 2}})
    pool.paths.push_back({0, s});
  return pool;
}

}  // namespace

TEST(Templates, Classify) {
  const auto g = sorex::testing::toy_a();
  EXPECT_EQ(classify_path(g, {0, {1, 2}}), PathTemplate::Fof);
  EXPECT_EQ(classify_path(g, {0, {3, 1}}), PathTemplate::Cop);
  EXPECT_EQ(classify_path(g, {0, {1, 4}}), PathTemplate::Fi);
  EXPECT_EQ(classify_path(g, {0, {3, kEmpty}}), PathTemplate::Short);
}

TEST(Motifs, ToyTriangle) {
  const auto g = sorex::testing::toy_a();
  const auto motifs = find_motifs(toy_pool(), g);
  ASSERT_EQ(motifs.size(), 1u);
  EXPECT_EQ(motifs[0].kind, MotifKind::Triangle);
  EXPECT_EQ(motifs[0].type, "cop");
  EXPECT_EQ(motifs[0].nodes, (std::vector<NodeId>{0, 1, 3}));
  EXPECT_EQ(motifs[0].paths, (std::vector<int>{1, 3}));
}

TEST(Motifs, ExtraFriendClosesFofTriangle) {
  const std::vector<InteractionEdge> inter{{0, 0}, {1, 0}, {1, 1}, {2, 1}};
  const std::vector<SocialEdge> social{{0, 1}, {1, 2}, {0, 2}};
  const JointGraph g(3, 2, inter, social);
  const auto motifs = find_motifs(toy_pool(), g);
  bool fof = false;
  for (const auto& m : motifs)
    if (m.type == "fof" && m.nodes == std::vector<NodeId>{0, 1, 2}) fof = true;
  EXPECT_TRUE(fof);
}

TEST(Motifs, DetectionRates) {
  MotifStats stats;
  for (int i = 0; i < 4; ++i) stats.add(Tower::Interaction, "pos", "triangle:cop", i == 0, 0.5);
  EXPECT_DOUBLE_EQ(stats.find(Tower::Interaction, "pos", "triangle:cop")->rate(), 0.25);
  EXPECT_EQ(stats.find(Tower::Social, "pos", "triangle:cop"), nullptr);
  EXPECT_TRUE(std::isnan(StatCell{}.rate()));

  const auto g = sorex::testing::toy_a();
  const auto pool = toy_pool();
  const auto motifs = find_motifs(pool, g);
  TowerExplanation all{std::vector<double>(6, 1.0), {0, 1, 2, 3, 4, 5}};
  TowerExplanation none{std::vector<double>(6, 0.0), {}};
  MotifStats s1, s2;
  s1.add_explanation(Tower::Interaction, "pos", pool, g, motifs, all, {});
  s2.add_explanation(Tower::Interaction, "pos", pool, g, motifs, none, {});
  EXPECT_DOUBLE_EQ(s1.find(Tower::Interaction, "pos", "triangle:cop")->rate(), 1.0);
  EXPECT_DOUBLE_EQ(s2.find(Tower::Interaction, "pos", "triangle:cop")->rate(), 0.0);
  EXPECT_DOUBLE_EQ(s1.find(Tower::Interaction, "pos", "all_paths")->rate(), 1.0);
  EXPECT_EQ(s1.find(Tower::Interaction, "pos", "all_paths")->formed, 6u);
  EXPECT_EQ(s1.find(Tower::Interaction, "pos", "path:fof")->formed, 1u);

  // any vs all triangle rule
  const std::vector<int> kept{1};
  const auto mask = kept_mask(kept, 6);
  EXPECT_TRUE(is_detected(motifs[0], mask, {.triangle_any = true}));
  EXPECT_FALSE(is_detected(motifs[0], mask, {.triangle_any = false}));
}

TEST(Motifs, Similarity) {
  MotifInstance m;
  m.paths = {0, 1, 1};
  const std::vector<double> p{0.2, 0.4};
  EXPECT_NEAR(motif_similarity(m, p), 0.3, 1e-12);
  m.paths = {1};
  EXPECT_DOUBLE_EQ(motif_similarity(m, p), 0.4);
}

TEST(Motifs, TsvOutput) {
  MotifStats stats;
  stats.add(Tower::Social, "neg", "all_paths", true, 0.25);
  std::ostringstream out;
  stats.write_tsv(out, "toy");
  EXPECT_EQ(out.str(), "dataset\ttower\tgroup\tmotif_type\tformed\tdetected\trate\tmean_p\n"
                       "toy\tsocial\tneg\tall_paths\t1\t1\t1\t0.25\n");
}

namespace {

struct Exported {
  JointGraph g = sorex::testing::toy_a();
  Model<double> model;
  std::unique_ptr<ModelContext<double>> ctx;
  std::unique_ptr<Scorer<double>> scorer;

  Exported() {
    model.config.tower.d = 4;
    model.config.egopath.n_w = 6;
    model.tables = init_embeddings<double>(3, 2, 4, 1, 0.5);
    ctx = std::make_unique<ModelContext<double>>(g, model.config.tower);
    scorer = std::make_unique<Scorer<double>>(*ctx, model);
  }
};

}  // namespace

TEST(Export, EmptyExplanation) {
  Exported e;
  TowerExplanation none{std::vector<double>(6, 0.3), {}};
  const auto j = export_explanation(*e.scorer, toy_pool(), 0, 1, Tower::Interaction, none);
  EXPECT_TRUE(j.at("paths").is_array());
  EXPECT_TRUE(j.at("paths").empty());
  for (const char* key : {"user", "candidate", "tower", "k", "n_w", "pool_mean_p", "motifs"}) EXPECT_TRUE(j.contains(key));
}

TEST(Export, OneKeptPathAndDot) {
  Exported e;
  std::vector<double> probs(6, 0.1);
  probs[1] = 0.75;
  TowerExplanation one{probs, {1}};
  const auto j = export_explanation(*e.scorer, toy_pool(), 0, 1, Tower::Social, one);
  ASSERT_EQ(j.at("paths").size(), 1u);
  EXPECT_DOUBLE_EQ(j["paths"][0].at("p").get<double>(), 0.75);
  EXPECT_EQ(j["paths"][0].at("slots").size(), 2u);
  EXPECT_EQ(j["paths"][0]["slots"][0].at("kind"), "item");

  std::ostringstream dot;
  write_dot(dot, j);
  const auto text = dot.str();
  // Minimal structural check of the DOT grammar: header, balanced braces,
  // every statement terminated.
  EXPECT_EQ(text.rfind("digraph explanation {", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '{'), std::count(text.begin(), text.end(), '}'));
  std::istringstream lines(text);
  std::string line;
  const std::regex stmt(R"(^\s+(\"?[A-Za-z0-9_]+\"?(\s*->\s*\"?[A-Za-z0-9_]+\"?)?\s*(\[.*\])?|label=\".*\");$)");
  std::getline(lines, line);
  int edges = 0;
  while (std::getline(lines, line)) {
    if (line == "}") break;
    EXPECT_TRUE(std::regex_match(line, stmt)) << line;
    if (line.find("->") != std::string::npos && line.find("label=") != 2) ++edges;
  }
  EXPECT_EQ(edges, 2);
}
