#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sorex/graph.hpp"
#include "sorex/rng.hpp"

namespace sorex {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LoadOptions {
  /// Interactions with a rating below the threshold are dropped. Lines
  /// without a rating column are always kept.
  std::optional<double> rating_threshold;
  /// Treat the first non-comment line of each file as a header.
  bool skip_header = false;
};

/// Edge lists as read from disk, with dense indices assigned in order of
/// first appearance.
struct RawEdges {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<InteractionEdge> interactions;
  std::vector<SocialEdge> social;
  /// Per user: true when the id only ever appeared in the social file.
  std::vector<bool> social_only;
  std::size_t dropped_by_rating = 0;
};

/// Reads `user<TAB>item[<TAB>rating]` and `user<TAB>user` files. Blank lines
/// and lines starting with '#' are ignored.
RawEdges load_dataset(const std::filesystem::path& interaction_path,
                      const std::filesystem::path& social_path, const LoadOptions& options = {});

struct PreprocessedData {
  JointGraph graph;
  std::vector<std::string> user_ids;  // index -> original id
  std::vector<std::string> item_ids;
};

/// Iteratively removes users and items with fewer than `min_interactions`
/// interactions until a fixed point, drops users without any interaction,
/// then reindexes densely. Throws std::runtime_error when nothing survives.
PreprocessedData preprocess(const RawEdges& raw, int min_interactions);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<InteractionEdge> train;
  std::vector<InteractionEdge> valid;
  std::vector<InteractionEdge> test;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Uniform random partition of the graph's interaction edges. Social edges are
/// not split.
DatasetSplit split(const JointGraph& graph, const SplitRatios& ratios, std::uint64_t seed);

/// The training graph: same node sets, only training interactions, all social edges.
JointGraph training_graph(const JointGraph& full, const DatasetSplit& split);

void save_split(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_split(const std::filesystem::path& path);

/// Per-user sorted item sets for fast membership checks.
class UserItemSets {
 public:
  UserItemSets() = default;
  UserItemSets(std::int32_t num_users, std::span<const InteractionEdge> edges);

  bool contains(std::int32_t user, std::int32_t item) const;
  std::span<const std::int32_t> items(std::int32_t user) const { return sets_[static_cast<std::size_t>(user)]; }
  std::int32_t num_users() const { return static_cast<std::int32_t>(sets_.size()); }

 private:
  std::vector<std::vector<std::int32_t>> sets_;
};

struct NegativeBatch {
  InteractionEdge anchor;
  std::vector<std::int32_t> negatives;
};

/// Draws `count` items the user has not interacted with in `excluded`, also
/// excluding the anchor's own item. Distinct when the eligible pool has at
/// least `count` items, with replacement otherwise. Throws when the pool is empty.
NegativeBatch sample_negatives(const UserItemSets& excluded, std::int32_t num_items,
                               InteractionEdge anchor, int count, Rng& rng);

/// Convenience overload excluding the split's training interactions.
NegativeBatch sample_negatives(const DatasetSplit& split, const JointGraph& graph,
                               InteractionEdge anchor, int count, Rng& rng);

}  // namespace sorex
