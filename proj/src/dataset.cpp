#include "sorex/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

namespace sorex {
namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

class IdMap {
 public:
  std::int32_t intern(std::string_view id, bool& inserted) {
    auto it = index_.find(std::string(id));
    if (it != index_.end()) {
      inserted = false;
      return it->second;
    }
    const auto next = static_cast<std::int32_t>(names_.size());
    names_.emplace_back(id);
    index_.emplace(names_.back(), next);
    inserted = true;
    return next;
  }
  std::vector<std::string> take() { return std::move(names_); }

 private:
  std::unordered_map<std::string, std::int32_t> index_;
  std::vector<std::string> names_;
};

template <typename Fn>
void for_each_line(const std::filesystem::path& path, bool skip_header, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  bool header_pending = skip_header;
  while (std::getline(in, line)) {
    ++number;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    fn(view, number);
  }
}

}  // namespace

RawEdges load_dataset(const std::filesystem::path& interaction_path,
                      const std::filesystem::path& social_path, const LoadOptions& options) {
  RawEdges raw;
  IdMap users;
  IdMap items;
  const std::string inter_name = interaction_path.string();
  const std::string social_name = social_path.string();

  for_each_line(interaction_path, options.skip_header, [&](std::string_view line, std::size_t no) {
    const auto fields = split_tabs(line);
    if (fields.size() < 2 || fields.size() > 3) {
      throw ParseError(inter_name, no, "expected user<TAB>item[<TAB>rating]");
    }
    const auto user = trim(fields[0]);
    const auto item = trim(fields[1]);
    if (user.empty() || item.empty()) throw ParseError(inter_name, no, "empty id");
    if (fields.size() == 3) {
      double rating = 0.0;
      if (!parse_double(trim(fields[2]), rating)) throw ParseError(inter_name, no, "rating is not a number");
      if (options.rating_threshold && rating < *options.rating_threshold) {
        ++raw.dropped_by_rating;
        return;
      }
    }
    bool inserted = false;
    const auto u = users.intern(user, inserted);
    if (inserted) raw.social_only.push_back(false);
    const auto j = items.intern(item, inserted);
    raw.interactions.emplace_back(u, j);
  });

  for_each_line(social_path, options.skip_header, [&](std::string_view line, std::size_t no) {
    const auto fields = split_tabs(line);
    if (fields.size() != 2) throw ParseError(social_name, no, "expected user<TAB>user");
    const auto a = trim(fields[0]);
    const auto b = trim(fields[1]);
    if (a.empty() || b.empty()) throw ParseError(social_name, no, "empty id");
    bool inserted = false;
    const auto ia = users.intern(a, inserted);
    if (inserted) raw.social_only.push_back(true);
    const auto ib = users.intern(b, inserted);
    if (inserted) raw.social_only.push_back(true);
    raw.social.emplace_back(ia, ib);
  });

  raw.user_ids = users.take();
  raw.item_ids = items.take();
  return raw;
}

PreprocessedData preprocess(const RawEdges& raw, int min_interactions) {
  if (min_interactions < 0) throw std::invalid_argument("min_interactions must be >= 0");
  const auto m = static_cast<std::int32_t>(raw.user_ids.size());
  const auto n = static_cast<std::int32_t>(raw.item_ids.size());

  std::vector<InteractionEdge> edges = raw.interactions;
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<char> user_alive(static_cast<std::size_t>(m), 1);
  std::vector<char> item_alive(static_cast<std::size_t>(n), 1);
  const int threshold = std::max(min_interactions, 1);

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> udeg(static_cast<std::size_t>(m), 0);
    std::vector<int> ideg(static_cast<std::size_t>(n), 0);
    for (const auto& [u, j] : edges) {
      if (user_alive[u] && item_alive[j]) {
        ++udeg[u];
        ++ideg[j];
      }
    }
    for (std::int32_t u = 0; u < m; ++u) {
      if (user_alive[u] && udeg[u] < threshold) {
        user_alive[u] = 0;
        changed = true;
      }
    }
    for (std::int32_t j = 0; j < n; ++j) {
      if (item_alive[j] && ideg[j] < threshold) {
        item_alive[j] = 0;
        changed = true;
      }
    }
  }

  std::vector<std::int32_t> user_map(static_cast<std::size_t>(m), -1);
  std::vector<std::int32_t> item_map(static_cast<std::size_t>(n), -1);
  PreprocessedData out;
  for (std::int32_t u = 0; u < m; ++u) {
    if (user_alive[u]) {
      user_map[u] = static_cast<std::int32_t>(out.user_ids.size());
      out.user_ids.push_back(raw.user_ids[u]);
    }
  }
  for (std::int32_t j = 0; j < n; ++j) {
    if (item_alive[j]) {
      item_map[j] = static_cast<std::int32_t>(out.item_ids.size());
      out.item_ids.push_back(raw.item_ids[j]);
    }
  }
  if (out.user_ids.empty() || out.item_ids.empty()) {
    throw std::runtime_error("graph is empty after filtering (min_interactions = " +
                             std::to_string(min_interactions) + ")");
  }

  std::vector<InteractionEdge> kept;
  for (const auto& [u, j] : edges) {
    if (user_map[u] >= 0 && item_map[j] >= 0) kept.emplace_back(user_map[u], item_map[j]);
  }
  std::vector<SocialEdge> social;
  for (const auto& [a, b] : raw.social) {
    if (user_map[a] >= 0 && user_map[b] >= 0) social.emplace_back(user_map[a], user_map[b]);
  }
  out.graph = JointGraph(static_cast<std::int32_t>(out.user_ids.size()),
                         static_cast<std::int32_t>(out.item_ids.size()), kept, social);
  return out;
}

DatasetSplit split(const JointGraph& graph, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 || ratios.train == 0) {
    throw std::invalid_argument("split ratios must be non-negative with a positive train share");
  }
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }
  auto edges = graph.interaction_edges();
  auto rng = make_rng(seed, {stream::kSplit});
  shuffle(edges, rng);

  const auto total = edges.size();
  const auto n_train = std::min<std::size_t>(total, static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(total))));
  const auto n_valid = std::min<std::size_t>(total - n_train, static_cast<std::size_t>(std::llround(ratios.valid * static_cast<double>(total))));

  DatasetSplit out;
  out.seed = seed;
  out.train.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.valid.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train),
                   edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  out.test.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), edges.end());
  return out;
}

JointGraph training_graph(const JointGraph& full, const DatasetSplit& split) {
  const auto social = full.social_edges();
  return JointGraph(full.num_users(), full.num_items(), split.train, social);
}

void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "# seed\t" << split.seed << '\n';
  auto dump = [&](const std::vector<InteractionEdge>& edges, const char* part) {
    for (const auto& [u, j] : edges) out << u << '\t' << j << '\t' << part << '\n';
  };
  dump(split.train, "train");
  dump(split.valid, "valid");
  dump(split.test, "test");
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DatasetSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  DatasetSplit out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_tabs(view);
    if (view.front() == '#') {
      if (fields.size() == 2 && trim(fields[0]) == "# seed") {
        std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), out.seed);
      }
      continue;
    }
    std::int32_t u = 0;
    std::int32_t j = 0;
    if (fields.size() != 3 ||
        std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), u).ec != std::errc{} ||
        std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), j).ec != std::errc{}) {
      throw ParseError(path.string(), no, "expected user<TAB>item<TAB>part");
    }
    if (fields[2] == "train") {
      out.train.emplace_back(u, j);
    } else if (fields[2] == "valid") {
      out.valid.emplace_back(u, j);
    } else if (fields[2] == "test") {
      out.test.emplace_back(u, j);
    } else {
      throw ParseError(path.string(), no, "unknown part '" + std::string(fields[2]) + "'");
    }
  }
  return out;
}

UserItemSets::UserItemSets(std::int32_t num_users, std::span<const InteractionEdge> edges)
    : sets_(static_cast<std::size_t>(num_users)) {
  for (const auto& [u, j] : edges) sets_[static_cast<std::size_t>(u)].push_back(j);
  for (auto& s : sets_) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
}

bool UserItemSets::contains(std::int32_t user, std::int32_t item) const {
  const auto& s = sets_[static_cast<std::size_t>(user)];
  return std::binary_search(s.begin(), s.end(), item);
}

NegativeBatch sample_negatives(const UserItemSets& excluded, std::int32_t num_items,
                               InteractionEdge anchor, int count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("negative count must be >= 1");
  const auto [user, positive] = anchor;
  const bool positive_excluded = excluded.contains(user, positive);
  const auto pool = static_cast<std::int64_t>(num_items) -
                    static_cast<std::int64_t>(excluded.items(user).size()) - (positive_excluded ? 0 : 1);
  if (pool <= 0) {
    throw std::runtime_error("user " + std::to_string(user) + " has no non-interacted item to sample");
  }
  auto eligible = [&](std::int32_t j) { return j != positive && !excluded.contains(user, j); };

  NegativeBatch out{anchor, {}};
  out.negatives.reserve(static_cast<std::size_t>(count));
  if (pool < count || 2 * static_cast<std::int64_t>(count) > pool) {
    std::vector<std::int32_t> candidates;
    candidates.reserve(static_cast<std::size_t>(pool));
    for (std::int32_t j = 0; j < num_items; ++j) {
      if (eligible(j)) candidates.push_back(j);
    }
    if (static_cast<std::int64_t>(candidates.size()) < count) {
      for (int i = 0; i < count; ++i) {
        out.negatives.push_back(candidates[uniform_below(rng, candidates.size())]);
      }
    } else {
      // partial Fisher-Yates
      for (int i = 0; i < count; ++i) {
        const auto r = static_cast<std::size_t>(i) + uniform_below(rng, candidates.size() - static_cast<std::size_t>(i));
        std::swap(candidates[static_cast<std::size_t>(i)], candidates[r]);
        out.negatives.push_back(candidates[static_cast<std::size_t>(i)]);
      }
    }
    return out;
  }
  std::unordered_set<std::int32_t> seen;
  while (static_cast<int>(out.negatives.size()) < count) {
    const auto j = static_cast<std::int32_t>(uniform_below(rng, static_cast<std::uint64_t>(num_items)));
    if (!eligible(j) || !seen.insert(j).second) continue;
    out.negatives.push_back(j);
  }
  return out;
}

NegativeBatch sample_negatives(const DatasetSplit& split, const JointGraph& graph,
                               InteractionEdge anchor, int count, Rng& rng) {
  const UserItemSets train(graph.num_users(), split.train);
  return sample_negatives(train, graph.num_items(), anchor, count, rng);
}

}  // namespace sorex
