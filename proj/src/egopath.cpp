#include "sorex/egopath.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace sorex {

void EgoPathConfig::validate() const {
  if (k < 2) throw std::invalid_argument("egopath.k must be >= 2");
  if (n_w < 1) throw std::invalid_argument("egopath.n_w must be >= 1");
  if (tau_start <= 0 || tau_end <= 0) throw std::invalid_argument("temperatures must be positive");
  if (topk && *topk < 1) throw std::invalid_argument("egopath.topk must be >= 1");
}

int EgoPath::length() const {
  return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](NodeId q) { return q != kEmpty; }));
}

EgoPath to_ego_path(std::span<const NodeId> walk, int k) {
  if (walk.empty()) throw std::invalid_argument("walk must contain the source");
  EgoPath path;
  path.source = walk.front();
  path.slots.reserve(static_cast<std::size_t>(k));
  for (std::size_t t = 1; t < walk.size() && static_cast<int>(path.slots.size()) < k; ++t) {
    const NodeId q = walk[t];
    if (q == path.source) continue;
    if (std::find(path.slots.begin(), path.slots.end(), q) != path.slots.end()) continue;
    path.slots.push_back(q);
  }
  path.slots.resize(static_cast<std::size_t>(k), kEmpty);
  return path;
}

WalkPool sample_walks(const JointGraph& graph, std::int32_t source, int k, int n_w, Rng& rng) {
  const NodeId s = graph.user_id(source);
  if (graph.neighbors(s, Relation::Joint).empty()) {
    throw std::invalid_argument("user " + std::to_string(source) + " is isolated; cannot sample walks");
  }
  WalkPool pool;
  pool.source = s;
  pool.k = k;
  pool.paths.reserve(static_cast<std::size_t>(n_w));
  std::vector<NodeId> walk;
  walk.reserve(static_cast<std::size_t>(k) + 1);
  for (int w = 0; w < n_w; ++w) {
    walk.assign(1, s);
    NodeId current = s;
    for (int step = 0; step < k; ++step) {
      const auto nbrs = graph.neighbors(current, Relation::Joint);
      if (nbrs.empty()) break;
      current = nbrs[uniform_below(rng, nbrs.size())];
      walk.push_back(current);
    }
    pool.paths.push_back(to_ego_path(walk, k));
  }
  return pool;
}

WalkPool sample_walks(const JointGraph& graph, std::int32_t source, int k, int n_w, std::uint64_t seed) {
  Rng rng(seed);
  auto pool = sample_walks(graph, source, k, n_w, rng);
  pool.seed = seed;
  return pool;
}

WalkPool user_pool(const JointGraph& graph, std::int32_t source, int k, int n_w, std::uint64_t seed) {
  const NodeId s = graph.user_id(source);
  if (!graph.neighbors(s, Relation::Joint).empty()) return sample_walks(graph, source, k, n_w, seed);
  WalkPool pool;
  pool.source = s;
  pool.k = k;
  pool.seed = seed;
  pool.paths.assign(static_cast<std::size_t>(n_w), EgoPath{s, std::vector<NodeId>(static_cast<std::size_t>(k), kEmpty)});
  return pool;
}

std::vector<std::pair<EgoPath, double>> enumerate_ego_paths(const JointGraph& graph, std::int32_t source,
                                                            int k, std::size_t max_walks) {
  const NodeId s = graph.user_id(source);
  std::map<EgoPath, double> mass;
  std::vector<NodeId> walk{s};
  std::size_t walks = 0;

  auto recurse = [&](auto&& self, NodeId current, double prob) -> void {
    const auto nbrs = graph.neighbors(current, Relation::Joint);
    if (static_cast<int>(walk.size()) == k + 1 || nbrs.empty()) {
      if (++walks > max_walks) throw std::length_error("walk enumeration exceeds the configured cap");
      mass[to_ego_path(walk, k)] += prob;
      return;
    }
    const double step = prob / static_cast<double>(nbrs.size());
    for (NodeId next : nbrs) {
      walk.push_back(next);
      self(self, next, step);
      walk.pop_back();
    }
  };
  recurse(recurse, s, 1.0);
  return {mass.begin(), mass.end()};
}

double rescale(double similarity) {
  constexpr double kSlack = 1e-9;
  if (!(similarity >= -1.0 - kSlack && similarity <= 1.0 + kSlack)) {
    throw std::logic_error("path similarity " + std::to_string(similarity) + " outside [-1, 1]");
  }
  return std::clamp((similarity + 1.0) / 2.0, 0.0, 1.0);
}

SampledExplanation sample_hard(std::span<const double> probs, Rng& rng) {
  SampledExplanation out;
  out.probs.assign(probs.begin(), probs.end());
  out.draws.resize(probs.size());
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const bool keep = uniform01(rng) < probs[t];
    out.draws[t] = keep ? 1.0 : 0.0;
    if (keep) out.kept.push_back(static_cast<int>(t));
  }
  return out;
}

SampledExplanation sample_relaxed(std::span<const double> probs, double tau, Rng& rng) {
  if (tau <= 0) throw std::invalid_argument("temperature must be positive");
  SampledExplanation out;
  out.probs.assign(probs.begin(), probs.end());
  out.draws.resize(probs.size());
  for (std::size_t t = 0; t < probs.size(); ++t) {
    out.draws[t] = std::exp(log_relaxed_draw(probs[t], logistic_noise(rng), tau));
    if (out.draws[t] > 0.5) out.kept.push_back(static_cast<int>(t));
  }
  return out;
}

SampledExplanation sample_topk(std::span<const double> probs, int k) {
  SampledExplanation out;
  out.probs.assign(probs.begin(), probs.end());
  out.draws.assign(probs.size(), 0.0);
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(k, 0))));
  std::sort(order.begin(), order.end());
  for (int t : order) out.draws[static_cast<std::size_t>(t)] = 1.0;
  out.kept = std::move(order);
  return out;
}

std::string node_label(const JointGraph& graph, NodeId node) {
  if (node == kEmpty) return "_";
  const auto ref = graph.ref(node);
  return (ref.kind == NodeKind::User ? "u" : "v") + std::to_string(ref.index);
}

void write_pool(std::ostream& out, const WalkPool& pool, const JointGraph& graph) {
  for (const auto& path : pool.paths) {
    out << node_label(graph, pool.source) << '\t';
    for (std::size_t t = 0; t < path.slots.size(); ++t) {
      if (t) out << ',';
      out << node_label(graph, path.slots[t]);
    }
    out << '\n';
  }
}

}  // namespace sorex
