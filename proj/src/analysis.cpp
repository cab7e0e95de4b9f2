#include "sorex/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace sorex {

const char* to_string(PathTemplate t) {
  switch (t) {
    case PathTemplate::Fof: return "fof";
    case PathTemplate::Cop: return "cop";
    case PathTemplate::Fi: return "fi";
    case PathTemplate::Short: return "short";
    case PathTemplate::Other: return "other";
  }
  return "other";
}

const char* to_string(MotifKind k) { return k == MotifKind::Triangle ? "triangle" : "quadrilateral"; }

PathTemplate classify_path(const JointGraph& graph, const EgoPath& path) {
  if (!path.full()) return PathTemplate::Short;
  if (path.slots.size() != 2) return PathTemplate::Other;
  const bool a_user = graph.is_user(path.slots[0]);
  const bool b_user = graph.is_user(path.slots[1]);
  if (a_user && b_user) return PathTemplate::Fof;
  if (!a_user && b_user) return PathTemplate::Cop;
  if (a_user && !b_user) return PathTemplate::Fi;
  return PathTemplate::Other;  // item-item cannot occur on a bipartite interaction graph
}

std::vector<MotifInstance> find_motifs(const WalkPool& pool, const JointGraph& graph) {
  const NodeId s = pool.source;
  std::map<std::vector<NodeId>, MotifInstance> triangles;
  // (middle x, smaller first node, larger first node)
  std::map<std::tuple<NodeId, NodeId, NodeId>, MotifInstance> quads;
  std::map<NodeId, std::vector<int>> by_second;

  for (int t = 0; t < static_cast<int>(pool.paths.size()); ++t) {
    const auto& slots = pool.paths[static_cast<std::size_t>(t)].slots;
    if (slots.size() < 2 || slots[0] == kEmpty || slots[1] == kEmpty) continue;
    const NodeId a = slots[0];
    const NodeId b = slots[1];
    by_second[b].push_back(t);
    if (!graph.adjacent(s, b)) continue;
    std::vector<NodeId> nodes{s, a, b};
    std::sort(nodes.begin(), nodes.end());
    auto& tri = triangles[nodes];
    if (tri.paths.empty()) {
      tri.kind = MotifKind::Triangle;
      tri.type = graph.is_user(a) && graph.is_user(b) ? "fof" : "cop";
      tri.nodes = nodes;
    }
    tri.paths.push_back(t);
  }

  for (const auto& [x, list] : by_second) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      for (std::size_t j = i + 1; j < list.size(); ++j) {
        int ti = list[i];
        int tj = list[j];
        NodeId a = pool.paths[static_cast<std::size_t>(ti)].slots[0];
        NodeId b = pool.paths[static_cast<std::size_t>(tj)].slots[0];
        if (a == b) continue;
        if (a > b) {
          std::swap(a, b);
          std::swap(ti, tj);
        }
        auto& quad = quads[{x, a, b}];
        if (quad.pairs.empty()) {
          quad.kind = MotifKind::Quadrilateral;
          std::string ta = to_string(classify_path(graph, pool.paths[static_cast<std::size_t>(ti)]));
          std::string tb = to_string(classify_path(graph, pool.paths[static_cast<std::size_t>(tj)]));
          if (tb < ta) std::swap(ta, tb);
          quad.type = ta + "+" + tb;
          quad.nodes = {s, a, b, x};
          std::sort(quad.nodes.begin(), quad.nodes.end());
        }
        quad.pairs.emplace_back(ti, tj);
      }
    }
  }

  std::vector<MotifInstance> out;
  out.reserve(triangles.size() + quads.size());
  for (auto& [key, tri] : triangles) out.push_back(std::move(tri));
  for (auto& [key, quad] : quads) {
    std::set<int> paths;
    for (const auto& [p, q] : quad.pairs) {
      paths.insert(p);
      paths.insert(q);
    }
    quad.paths.assign(paths.begin(), paths.end());
    out.push_back(std::move(quad));
  }
  return out;
}

std::vector<char> kept_mask(std::span<const int> kept, std::size_t n_w) {
  std::vector<char> mask(n_w, 0);
  for (int t : kept) mask.at(static_cast<std::size_t>(t)) = 1;
  return mask;
}

bool is_detected(const MotifInstance& motif, std::span<const char> mask, const DetectionRule& rule) {
  auto kept = [&](int t) { return mask[static_cast<std::size_t>(t)] != 0; };
  if (motif.kind == MotifKind::Triangle) {
    return rule.triangle_any ? std::any_of(motif.paths.begin(), motif.paths.end(), kept)
                             : std::all_of(motif.paths.begin(), motif.paths.end(), kept);
  }
  return std::any_of(motif.pairs.begin(), motif.pairs.end(),
                     [&](const auto& pr) { return kept(pr.first) && kept(pr.second); });
}

double motif_similarity(const MotifInstance& motif, std::span<const double> probs) {
  const std::set<int> distinct(motif.paths.begin(), motif.paths.end());
  if (distinct.empty()) return 0.0;
  double sum = 0;
  for (int t : distinct) sum += probs[static_cast<std::size_t>(t)];
  return sum / static_cast<double>(distinct.size());
}

double StatCell::rate() const {
  return formed == 0 ? std::numeric_limits<double>::quiet_NaN()
                     : static_cast<double>(detected) / static_cast<double>(formed);
}

double StatCell::mean_p() const {
  return formed == 0 ? std::numeric_limits<double>::quiet_NaN() : sum_p / static_cast<double>(formed);
}

void MotifStats::add(Tower tower, const std::string& group, const std::string& type, bool detected, double p) {
  auto& cell = cells_[{to_string(tower), group, type}];
  ++cell.formed;
  cell.detected += detected ? 1 : 0;
  cell.sum_p += p;
}

void MotifStats::add_explanation(Tower tower, const std::string& group, const WalkPool& pool,
                                 const JointGraph& graph, std::span<const MotifInstance> motifs,
                                 const TowerExplanation& explanation, const DetectionRule& rule) {
  const auto mask = kept_mask(explanation.kept, pool.paths.size());
  for (const auto& motif : motifs) {
    const std::string prefix = motif.kind == MotifKind::Triangle ? "triangle:" : "quad:";
    add(tower, group, prefix + motif.type, is_detected(motif, mask, rule), motif_similarity(motif, explanation.probs));
  }
  for (std::size_t t = 0; t < pool.paths.size(); ++t) {
    const auto tmpl = classify_path(graph, pool.paths[t]);
    if (tmpl != PathTemplate::Short) add(tower, group, std::string("path:") + to_string(tmpl), mask[t] != 0, explanation.probs[t]);
    add(tower, group, "all_paths", mask[t] != 0, explanation.probs[t]);
  }
}

const StatCell* MotifStats::find(Tower tower, const std::string& group, const std::string& type) const {
  const auto it = cells_.find({to_string(tower), group, type});
  return it == cells_.end() ? nullptr : &it->second;
}

void MotifStats::merge(const MotifStats& other) {
  for (const auto& [key, cell] : other.cells_) {
    auto& mine = cells_[key];
    mine.formed += cell.formed;
    mine.detected += cell.detected;
    mine.sum_p += cell.sum_p;
  }
}

void MotifStats::write_tsv(std::ostream& out, const std::string& dataset) const {
  out << "dataset\ttower\tgroup\tmotif_type\tformed\tdetected\trate\tmean_p\n";
  for (const auto& [key, cell] : cells_) {
    const auto& [tower, group, type] = key;
    out << dataset << '\t' << tower << '\t' << group << '\t' << type << '\t' << cell.formed << '\t' << cell.detected
        << '\t';
    if (cell.formed == 0) {
      out << "NA\tNA\n";
    } else {
      out << cell.rate() << '\t' << cell.mean_p() << '\n';
    }
  }
}

template <typename Scalar>
MotifStats analyze(const Scorer<Scalar>& scorer, const EvalData& data, const AnalysisConfig& config,
                   const PassKeys& keys, int threads) {
  const auto& model_cfg = scorer.config();
  if (!model_cfg.reaggregation) throw std::invalid_argument("motif analysis needs re-aggregation enabled");
  const auto& graph = *scorer.context().graph;
  const auto& ep = model_cfg.egopath;
  std::vector<std::vector<std::size_t>> by_user(static_cast<std::size_t>(data.num_users));
  for (std::size_t i = 0; i < data.test.size(); ++i) by_user[static_cast<std::size_t>(data.test[i].first)].push_back(i);

  std::vector<MotifStats> per_user(static_cast<std::size_t>(data.num_users));
  parallel_users(data.num_users, threads, [&](std::int32_t u) {
    const auto& mine = by_user[static_cast<std::size_t>(u)];
    if (mine.empty()) return;
    const auto pool = user_pool(graph, u, ep.k, ep.n_w, keys.pool_seed(config.pass, u));
    const auto draws = keys.draws(config.pass, u);
    const auto cands = test_candidates(data, u);
    std::vector<CandidateExplanation> record;
    const auto scores = scorer.score(u, pool, cands, draws, scorer.eval_options(), &record);
    std::vector<double> g(scores.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = scores[i].g;
    const auto motifs = find_motifs(pool, graph);
    auto& stats = per_user[static_cast<std::size_t>(u)];

    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (!data.interacted.contains(u, cands[i])) negatives.push_back(i);
    }
    for (std::size_t pi : mine) {
      const auto truth = data.test[pi].second;
      if (config.top5_only && test_rank(truth, cands, g, data, u) > 5) continue;
      const auto pos = static_cast<std::size_t>(std::lower_bound(cands.begin(), cands.end(), truth) - cands.begin());
      std::vector<std::pair<std::string, std::size_t>> groups{{"positive", pos}};
      if (!negatives.empty()) {
        auto rng = make_rng(keys.seed, {stream::kAnalysis, static_cast<std::uint64_t>(config.pass),
                                        static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(truth)});
        groups.emplace_back("negative", negatives[uniform_below(rng, negatives.size())]);
      }
      for (const auto& [group, idx] : groups) {
        for (int t = 0; t < (model_cfg.tower.use_social_tower ? 2 : 1); ++t) {
          stats.add_explanation(static_cast<Tower>(t), group, pool, graph, motifs,
                                record[idx].towers[static_cast<std::size_t>(t)], config.rule);
        }
      }
    }
  });
  MotifStats total;
  for (const auto& s : per_user) total.merge(s);
  return total;
}

namespace {

std::string kind_name(const JointGraph& graph, NodeId q) { return graph.is_user(q) ? "user" : "item"; }

}  // namespace

template <typename Scalar>
nlohmann::json export_explanation(const Scorer<Scalar>& scorer, const WalkPool& pool, std::int32_t user,
                                  std::int32_t candidate, Tower tower, const TowerExplanation& explanation,
                                  const DetectionRule& rule, const ExportOptions& options) {
  const auto& graph = *scorer.context().graph;
  const auto view = scorer.view(tower);
  const Matrix<Scalar>& states = *view.states;
  const NodeId cand = graph.item_id(candidate);

  auto att = hop_attention(pool, explanation.kept, states, cand);
  hopwise_normalize(att);
  std::map<std::pair<int, int>, double> alpha;  // (path, hop) -> attention
  for (std::size_t l = 0; l < att.hops.size(); ++l) {
    for (const auto& e : att.hops[l]) alpha[{e.path, static_cast<int>(l)}] = e.alpha;
  }
  const auto mask = kept_mask(explanation.kept, pool.paths.size());

  nlohmann::json doc;
  doc["user"] = user;
  doc["candidate"] = candidate;
  doc["tower"] = to_string(tower);
  doc["k"] = pool.k;
  doc["n_w"] = pool.paths.size();
  double mean_p = 0;
  for (double p : explanation.probs) mean_p += p;
  doc["pool_mean_p"] = explanation.probs.empty() ? 0.0 : mean_p / static_cast<double>(explanation.probs.size());

  auto paths = nlohmann::json::array();
  for (std::size_t t = 0; t < pool.paths.size(); ++t) {
    if (!mask[t] && !options.include_dropped) continue;
    nlohmann::json path;
    auto slots = nlohmann::json::array();
    const auto& ps = pool.paths[t].slots;
    for (std::size_t l = 0; l < ps.size(); ++l) {
      if (ps[l] == kEmpty) continue;
      nlohmann::json slot;
      slot["node"] = node_label(graph, ps[l]);
      slot["kind"] = kind_name(graph, ps[l]);
      slot["sim"] = cosine(states.row(ps[l]), states.row(cand));
      const auto it = alpha.find({static_cast<int>(t), static_cast<int>(l)});
      slot["attn"] = it == alpha.end() ? nlohmann::json(nullptr) : nlohmann::json(it->second);
      slots.push_back(std::move(slot));
    }
    path["slots"] = std::move(slots);
    path["p"] = explanation.probs.at(t);
    path["kept"] = mask[t] != 0;
    paths.push_back(std::move(path));
  }
  doc["paths"] = std::move(paths);

  auto motifs = nlohmann::json::array();
  for (const auto& motif : find_motifs(pool, graph)) {
    nlohmann::json j;
    j["kind"] = to_string(motif.kind);
    j["type"] = motif.type;
    auto nodes = nlohmann::json::array();
    for (NodeId q : motif.nodes) nodes.push_back(node_label(graph, q));
    j["nodes"] = std::move(nodes);
    j["detected"] = is_detected(motif, mask, rule);
    motifs.push_back(std::move(j));
  }
  doc["motifs"] = std::move(motifs);
  return doc;
}

void write_dot(std::ostream& out, const nlohmann::json& explanation) {
  const std::string source = "u" + std::to_string(explanation.at("user").get<std::int32_t>());
  const std::string target = "v" + std::to_string(explanation.at("candidate").get<std::int32_t>());
  out << "digraph explanation {\n";
  out << "  label=\"" << source << " -> " << target << " (" << explanation.at("tower").get<std::string>() << ")\";\n";
  std::map<std::string, std::string> nodes{{source, "user"}};
  std::map<std::pair<std::string, std::string>, double> edges;
  for (const auto& path : explanation.at("paths")) {
    if (!path.at("kept").get<bool>()) continue;
    std::string prev = source;
    for (const auto& slot : path.at("slots")) {
      const auto node = slot.at("node").get<std::string>();
      nodes[node] = slot.at("kind").get<std::string>();
      edges.emplace(std::make_pair(prev, node), slot.at("sim").get<double>());
      prev = node;
    }
  }
  for (const auto& [node, kind] : nodes) out << "  \"" << node << "\" [kind=\"" << kind << "\"];\n";
  for (const auto& [edge, weight] : edges) {
    out << "  \"" << edge.first << "\" -> \"" << edge.second << "\" [weight=" << weight << "];\n";
  }
  out << "}\n";
}

template MotifStats analyze<float>(const Scorer<float>&, const EvalData&, const AnalysisConfig&, const PassKeys&, int);
template MotifStats analyze<double>(const Scorer<double>&, const EvalData&, const AnalysisConfig&, const PassKeys&,
                                    int);
template nlohmann::json export_explanation<float>(const Scorer<float>&, const WalkPool&, std::int32_t, std::int32_t,
                                                  Tower, const TowerExplanation&, const DetectionRule&,
                                                  const ExportOptions&);
template nlohmann::json export_explanation<double>(const Scorer<double>&, const WalkPool&, std::int32_t, std::int32_t,
                                                   Tower, const TowerExplanation&, const DetectionRule&,
                                                   const ExportOptions&);

}  // namespace sorex
