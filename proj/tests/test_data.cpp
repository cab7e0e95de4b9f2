#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "sorex/dataset.hpp"
#include "sorex/graph.hpp"
#include "support/synthetic.hpp"

namespace fs = std::filesystem;
using namespace sorex;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sorex_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& body) const {
    std::ofstream(path / name) << body;
    return path / name;
  }
};

std::vector<NodeId> ids(std::span<const NodeId> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(JointGraph, ToyNeighbors) {
  const auto g = sorex::testing::toy_a();
  // u0=0 u1=1 u2=2 v0=3 v1=4
  EXPECT_EQ(ids(g.neighbors(1, Relation::Joint)), (std::vector<NodeId>{0, 2, 3, 4}));
  EXPECT_TRUE(g.neighbors(g.item_id(0), Relation::Social).empty());
  EXPECT_EQ(ids(g.neighbors(0, Relation::Interaction)), (std::vector<NodeId>{3}));
  EXPECT_EQ(g.neighbors(NodeRef::user(0), Relation::Interaction), (std::vector<NodeRef>{NodeRef::item(0)}));
  EXPECT_TRUE(g.adjacent(0, 1));
  EXPECT_FALSE(g.adjacent(0, 2));
  EXPECT_EQ(g.num_interactions(), 4u);
  EXPECT_EQ(g.num_social_edges(), 2u);
}

TEST(JointGraph, DeduplicatesAndSymmetrizes) {
  const std::vector<InteractionEdge> inter{{0, 0}, {0, 0}, {1, 0}};
  const std::vector<SocialEdge> social{{1, 0}, {0, 1}, {1, 1}};
  const JointGraph g(2, 1, inter, social);
  EXPECT_EQ(g.num_interactions(), 2u);
  EXPECT_EQ(g.social_edges(), (std::vector<SocialEdge>{{0, 1}}));
  EXPECT_EQ(ids(g.neighbors(0, Relation::Social)), (std::vector<NodeId>{1}));
}

TEST(JointGraph, RejectsOutOfRange) {
  const std::vector<InteractionEdge> inter{{0, 5}};
  EXPECT_THROW(JointGraph(1, 1, inter, {}), std::invalid_argument);
}

TEST(JointGraph, BinaryRoundTrip) {
  TempDir dir;
  const auto g = sorex::testing::random_graph(12, 9, 0.3, 0.2, 4);
  save_graph(g, dir.path / "g.srxg");
  EXPECT_EQ(load_graph(dir.path / "g.srxg"), g);
  std::ofstream(dir.path / "bad.srxg") << "XXXX";
  EXPECT_ANY_THROW(load_graph(dir.path / "bad.srxg"));
}

TEST(Dataset, RatingThreshold) {
  TempDir dir;
  const auto inter = dir.write("i.tsv", "42\t7\t5\n42\t8\t3\n# comment\n\n43\t7\n");
  const auto soc = dir.write("s.tsv", "42\t43\n");
  const auto raw = load_dataset(inter, soc, {.rating_threshold = 4.0, .skip_header = false});
  ASSERT_EQ(raw.interactions.size(), 2u);
  EXPECT_EQ(raw.dropped_by_rating, 1u);
  EXPECT_EQ(raw.item_ids[static_cast<std::size_t>(raw.interactions[0].second)], "7");
  EXPECT_EQ(raw.social.size(), 1u);
}

TEST(Dataset, SkipHeaderAndParseErrors) {
  TempDir dir;
  const auto inter = dir.write("i.tsv", "user\titem\tweight\n1\t2\t3\n");
  const auto soc = dir.write("s.tsv", "a\tb\n1\t1\n");
  EXPECT_EQ(load_dataset(inter, soc, {.rating_threshold = {}, .skip_header = true}).interactions.size(), 1u);
  const auto bad = dir.write("bad.tsv", "1\t2\n3\n");
  try {
    load_dataset(bad, soc);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Dataset, KCoreFilterRemovesSparseUser) {
  RawEdges raw;
  raw.user_ids = {"a", "b", "c"};
  raw.item_ids = {"x", "y"};
  raw.interactions = {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}};
  raw.social = {{0, 2}, {0, 1}};
  const auto out = preprocess(raw, 2);
  EXPECT_EQ(out.user_ids, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(out.graph.num_interactions(), 4u);
  EXPECT_EQ(out.graph.num_social_edges(), 1u);
}

TEST(Dataset, MinZeroOnlyDeduplicates) {
  RawEdges raw;
  raw.user_ids = {"a", "b"};
  raw.item_ids = {"x"};
  raw.interactions = {{0, 0}, {0, 0}, {1, 0}};
  raw.social = {{0, 1}, {1, 0}};
  const auto out = preprocess(raw, 0);
  EXPECT_EQ(out.graph.num_users(), 2);
  EXPECT_EQ(out.graph.num_interactions(), 2u);
  EXPECT_EQ(out.graph.num_social_edges(), 1u);
}

// Independent fixed point: repeat single-pass filtering until nothing changes.
TEST(Dataset, FixedPointMatchesRepeatedPasses) {
  const auto g = sorex::testing::random_graph(30, 25, 0.08, 0.1, 11);
  RawEdges raw;
  for (int u = 0; u < g.num_users(); ++u) raw.user_ids.push_back("u" + std::to_string(u));
  for (int j = 0; j < g.num_items(); ++j) raw.item_ids.push_back("v" + std::to_string(j));
  raw.interactions = g.interaction_edges();

  std::set<InteractionEdge> edges(raw.interactions.begin(), raw.interactions.end());
  for (;;) {
    std::map<int, int> ud, id;
    for (auto [u, j] : edges) ++ud[u], ++id[j];
    std::set<InteractionEdge> next;
    for (auto e : edges)
      if (ud[e.first] >= 3 && id[e.second] >= 3) next.insert(e);
    if (next == edges) break;
    edges = next;
  }
  if (edges.empty()) {
    EXPECT_THROW(preprocess(raw, 3), std::runtime_error);
    return;
  }
  const auto out = preprocess(raw, 3);
  EXPECT_EQ(out.graph.num_interactions(), edges.size());
  std::set<std::pair<std::string, std::string>> expect, got;
  for (auto [u, j] : edges) expect.emplace(raw.user_ids[static_cast<std::size_t>(u)], raw.item_ids[static_cast<std::size_t>(j)]);
  for (auto [u, j] : out.graph.interaction_edges())
    got.emplace(out.user_ids[static_cast<std::size_t>(u)], out.item_ids[static_cast<std::size_t>(j)]);
  EXPECT_EQ(got, expect);
}

TEST(Dataset, ChainCascade) {
  // Dropping item z (one interactor) leaves user c with one interaction.
  RawEdges raw;
  raw.user_ids = {"a", "b", "c"};
  raw.item_ids = {"x", "y", "z"};
  raw.interactions = {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {2, 2}};
  const auto out = preprocess(raw, 2);
  EXPECT_EQ(out.graph.num_users(), 2);
  EXPECT_EQ(out.graph.num_items(), 2);
}

TEST(Split, ExactProportionsAndDeterminism) {
  std::vector<InteractionEdge> inter;
  for (int j = 0; j < 10; ++j) inter.emplace_back(j % 2, j);
  const JointGraph g(2, 10, inter, {});
  const auto a = split(g, {}, 5);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.valid.size(), 1u);
  EXPECT_EQ(a.test.size(), 1u);
  EXPECT_EQ(split(g, {}, 5), a);
  EXPECT_NE(split(g, {}, 6), a);
  const auto all = split(g, {1, 0, 0}, 5);
  EXPECT_EQ(all.train.size(), 10u);
  EXPECT_TRUE(all.valid.empty() && all.test.empty());
  EXPECT_THROW(split(g, {0.5, 0.1, 0.1}, 5), std::invalid_argument);
}

TEST(Split, RoundTripAndTrainingGraph) {
  TempDir dir;
  const auto g = sorex::testing::random_graph(15, 12, 0.3, 0.2, 8);
  const auto s = split(g, {}, 3);
  save_split(s, dir.path / "split.tsv");
  const auto back = load_split(dir.path / "split.tsv");
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.valid, s.valid);
  EXPECT_EQ(back.test, s.test);
  const auto tg = training_graph(g, s);
  EXPECT_EQ(tg.num_interactions(), s.train.size());
  EXPECT_EQ(tg.social_edges(), g.social_edges());
}

TEST(Negatives, AvoidTrainSetAndAnchor) {
  const auto g = sorex::testing::random_graph(20, 60, 0.2, 0.1, 2);
  const auto edges = g.interaction_edges();
  const UserItemSets sets(g.num_users(), edges);
  auto rng = make_rng(1, {});
  for (const auto& e : edges) {
    const auto b = sample_negatives(sets, g.num_items(), e, 10, rng);
    ASSERT_EQ(b.negatives.size(), 10u);
    std::set<int> distinct(b.negatives.begin(), b.negatives.end());
    EXPECT_EQ(distinct.size(), 10u);
    for (int j : b.negatives) EXPECT_FALSE(sets.contains(e.first, j));
  }
}

TEST(Negatives, ValidationCount) {
  std::vector<InteractionEdge> inter{{0, 0}};
  const JointGraph g(1, 1500, inter, {});
  const UserItemSets sets(1, inter);
  auto rng = make_rng(1, {});
  EXPECT_EQ(sample_negatives(sets, 1500, {0, 0}, 1000, rng).negatives.size(), 1000u);
}

TEST(Negatives, ForcedOutcome) {
  std::vector<InteractionEdge> inter{{0, 0}, {0, 2}};
  const UserItemSets sets(1, inter);
  auto rng = make_rng(9, {});
  EXPECT_EQ(sample_negatives(sets, 3, {0, 0}, 1, rng).negatives, (std::vector<std::int32_t>{1}));
  std::vector<InteractionEdge> full{{0, 0}, {0, 1}, {0, 2}};
  const UserItemSets none(1, full);
  EXPECT_THROW(sample_negatives(none, 3, {0, 0}, 1, rng), std::runtime_error);
}
