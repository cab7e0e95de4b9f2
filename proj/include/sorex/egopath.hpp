#pragma once

// Ego-path pools: uniform random walks from a target user, compacted into
// fixed-width paths, scored against a candidate item and subsampled.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sorex/graph.hpp"
#include "sorex/rng.hpp"
#include "sorex/types.hpp"

namespace sorex {

struct EgoPathConfig {
  int k = 2;
  int n_w = 100;
  double tau_start = 1.0;
  double tau_end = 0.3;
  bool hard_eval = true;
  /// Keep the K most similar paths instead of Bernoulli sampling.
  std::optional<int> topk;
  /// Divide path similarity by k - 1 instead of k.
  bool short_divisor = false;

  int similarity_divisor() const { return short_divisor ? k - 1 : k; }
  void validate() const;
};

/// Source-trimmed, repeat-trimmed path padded with kEmpty to exactly k slots.
struct EgoPath {
  NodeId source = 0;
  std::vector<NodeId> slots;

  int length() const;  // number of non-empty slots
  bool full() const { return length() == static_cast<int>(slots.size()); }

  friend bool operator==(const EgoPath&, const EgoPath&) = default;
  friend auto operator<=>(const EgoPath&, const EgoPath&) = default;
};

/// n_w ego-paths drawn for one user; repetitions are kept.
struct WalkPool {
  NodeId source = 0;
  int k = 0;
  std::vector<EgoPath> paths;
  std::uint64_t seed = 0;
};

/// Drops the source and any node already retained, then pads to k slots.
EgoPath to_ego_path(std::span<const NodeId> walk, int k);

/// n_w walks of up to k uniform steps on the joint graph from `source`.
/// Throws std::invalid_argument when the source has no joint-graph neighbor.
WalkPool sample_walks(const JointGraph& graph, std::int32_t source, int k, int n_w, Rng& rng);

/// Seeded convenience overload; `seed` is recorded in the pool.
WalkPool sample_walks(const JointGraph& graph, std::int32_t source, int k, int n_w, std::uint64_t seed);

/// Like sample_walks, but an isolated user gets n_w all-padding paths
/// instead of an error (scoring then falls back to the user's own state).
WalkPool user_pool(const JointGraph& graph, std::int32_t source, int k, int n_w, std::uint64_t seed);

/// Exact ego-path distribution of a k-step uniform walk from `source`,
/// sorted by path. Throws std::length_error beyond `max_walks` walks.
std::vector<std::pair<EgoPath, double>> enumerate_ego_paths(const JointGraph& graph, std::int32_t source,
                                                            int k, std::size_t max_walks = 1'000'000);

/// Mean cosine between each slot's state and the candidate's state over a
/// fixed divisor; empty slots contribute zero.
template <typename Scalar>
double path_similarity(const Matrix<Scalar>& states, const EgoPath& path, NodeId candidate, int divisor) {
  double sum = 0.0;
  const auto c = states.row(candidate);
  for (NodeId q : path.slots) {
    if (q == kEmpty) continue;
    sum += cosine(states.row(q), c);
  }
  return sum / static_cast<double>(divisor);
}

/// Affine map of a similarity in [-1, 1] to a probability in [0, 1].
double rescale(double similarity);

enum class SampleMode : std::uint8_t { Hard, Relaxed, TopK };

struct SampledExplanation {
  Tower tower = Tower::Interaction;
  std::int32_t candidate = 0;
  std::vector<double> probs;
  std::vector<double> draws;
  std::vector<int> kept;
};

/// Independent Bernoulli(p_t) per path.
SampledExplanation sample_hard(std::span<const double> probs, Rng& rng);

/// Binary concrete relaxation: sigmoid((logit p + L) / tau) with logistic L.
SampledExplanation sample_relaxed(std::span<const double> probs, double tau, Rng& rng);

/// The K most probable paths; ties by path index.
SampledExplanation sample_topk(std::span<const double> probs, int k);

inline constexpr double kProbabilityClamp = 1e-6;

/// log of the relaxed draw for probability p, logistic noise and temperature.
inline double log_relaxed_draw(double p, double noise, double tau) {
  const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const double x = (std::log(pc) - std::log1p(-pc) + noise) / tau;
  // log sigmoid(x) = -softplus(-x)
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

/// "u3" for users, "v7" for items, "_" for padding.
std::string node_label(const JointGraph& graph, NodeId node);

/// One line per path: `source<TAB>slot0,slot1,...`.
void write_pool(std::ostream& out, const WalkPool& pool, const JointGraph& graph);

}  // namespace sorex
