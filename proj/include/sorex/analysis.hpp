#pragma once

// Ego-path templates, triangle/quadrilateral motifs in a walk pool, their
// detection by sampled explanations, and explanation export.

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "sorex/evaluation.hpp"
#include "sorex/model.hpp"

namespace sorex {

enum class PathTemplate : std::uint8_t { Fof, Cop, Fi, Short, Other };

const char* to_string(PathTemplate t);

/// fof = (user, user), cop = (item, user), fi = (user, item) for full k = 2
/// paths; padded paths are short; longer budgets are other.
PathTemplate classify_path(const JointGraph& graph, const EgoPath& path);

enum class MotifKind : std::uint8_t { Triangle, Quadrilateral };

const char* to_string(MotifKind k);

struct MotifInstance {
  MotifKind kind = MotifKind::Triangle;
  std::string type;            // fof | cop for triangles, "a+b" template pair for quadrilaterals
  std::vector<NodeId> nodes;   // sorted, source included
  std::vector<int> paths;      // every realizing pool path instance
  /// Quadrilaterals: the realizing instance pairs ((a, x), (b, x)).
  std::vector<std::pair<int, int>> pairs;
};

/// Triangles from paths whose second node neighbors the source; quadrilaterals
/// from path pairs sharing the second node with distinct first nodes. Both
/// deduplicated by node set (quadrilaterals by endpoint and middle pair).
std::vector<MotifInstance> find_motifs(const WalkPool& pool, const JointGraph& graph);

struct DetectionRule {
  /// Triangles count as detected when any realizing path is kept (else all).
  bool triangle_any = true;
};

bool is_detected(const MotifInstance& motif, std::span<const char> kept_mask, const DetectionRule& rule);

/// Mean rescaled similarity of the motif's distinct realizing paths.
double motif_similarity(const MotifInstance& motif, std::span<const double> probs);

std::vector<char> kept_mask(std::span<const int> kept, std::size_t n_w);

struct StatCell {
  std::size_t formed = 0;
  std::size_t detected = 0;
  double sum_p = 0;

  /// NaN when nothing formed.
  double rate() const;
  double mean_p() const;
};

/// Aggregates keyed by (tower, group, row type). Row types are
/// `triangle:<t>`, `quad:<a+b>`, `path:<template>` and `all_paths`.
class MotifStats {
 public:
  using Key = std::tuple<std::string, std::string, std::string>;

  void add(Tower tower, const std::string& group, const std::string& type, bool detected, double p);

  /// One candidate's explanation in one tower: every motif, every full path,
  /// and the pool-wide baseline.
  void add_explanation(Tower tower, const std::string& group, const WalkPool& pool, const JointGraph& graph,
                       std::span<const MotifInstance> motifs, const TowerExplanation& explanation,
                       const DetectionRule& rule);

  const std::map<Key, StatCell>& cells() const { return cells_; }
  const StatCell* find(Tower tower, const std::string& group, const std::string& type) const;
  void merge(const MotifStats& other);

  void write_tsv(std::ostream& out, const std::string& dataset) const;

 private:
  std::map<Key, StatCell> cells_;
};

struct AnalysisConfig {
  bool top5_only = true;
  DetectionRule rule;
  int pass = 0;
};

/// Runs the motif analysis over test pairs: the truth candidate forms the
/// positive group, one random never-interacted item the negative group.
template <typename Scalar>
MotifStats analyze(const Scorer<Scalar>& scorer, const EvalData& data, const AnalysisConfig& config,
                   const PassKeys& keys, int threads = 1);

struct ExportOptions {
  bool include_dropped = false;  // also list pool paths that were not kept
};

/// JSON document of one (user, candidate, tower) explanation.
template <typename Scalar>
nlohmann::json export_explanation(const Scorer<Scalar>& scorer, const WalkPool& pool, std::int32_t user,
                                  std::int32_t candidate, Tower tower, const TowerExplanation& explanation,
                                  const DetectionRule& rule = {}, const ExportOptions& options = {});

/// DOT digraph of an exported explanation: node attribute `kind`, edge
/// attribute `weight` = similarity of the edge's head to the candidate.
void write_dot(std::ostream& out, const nlohmann::json& explanation);

}  // namespace sorex
