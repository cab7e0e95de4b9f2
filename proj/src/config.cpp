#include "sorex/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace sorex {

namespace {

bool parse_bool(const std::string& key, std::string v) {
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError(key + ": cannot parse '" + v + "'");
  return out;
}

// shortest text that parses back to the same double
std::string fmt(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Entry {
  const char* key;
  bool digest;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SOREX_BOOL(NAME, FIELD, DIGEST)                                                                   \
  Entry {                                                                                                 \
    NAME, DIGEST, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_bool(k, v); }, \
        [](const RunConfig& c) { return fmt(static_cast<bool>(c.FIELD)); }                                \
  }
#define SOREX_INT(NAME, FIELD, DIGEST)                                                                              \
  Entry {                                                                                                           \
    NAME, DIGEST, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_number<int>(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                                                  \
  }
#define SOREX_DOUBLE(NAME, FIELD, DIGEST)                                                                               \
  Entry {                                                                                                               \
    NAME, DIGEST, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_number<double>(k, v); }, \
        [](const RunConfig& c) { return fmt(c.FIELD); }                                                                 \
  }

const std::vector<Entry>& table() {
  static const std::vector<Entry> entries = {
      Entry{"data.name", false, [](RunConfig& c, const std::string&, const std::string& v) { c.data.name = v; },
            [](const RunConfig& c) { return c.data.name; }},
      Entry{"data.interactions", false,
            [](RunConfig& c, const std::string&, const std::string& v) { c.data.interactions = v; },
            [](const RunConfig& c) { return c.data.interactions.string(); }},
      Entry{"data.social", false, [](RunConfig& c, const std::string&, const std::string& v) { c.data.social = v; },
            [](const RunConfig& c) { return c.data.social.string(); }},
      Entry{"data.rating_threshold", true,
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "none" || v.empty()) {
                c.data.rating_threshold.reset();
              } else {
                c.data.rating_threshold = parse_number<double>(k, v);
              }
            },
            [](const RunConfig& c) {
              return c.data.rating_threshold ? fmt(*c.data.rating_threshold) : std::string("none");
            }},
      SOREX_BOOL("data.skip_header", data.skip_header, true),
      SOREX_INT("data.min_interactions", data.min_interactions, true),

      SOREX_DOUBLE("split.train", split.train, true),
      SOREX_DOUBLE("split.valid", split.valid, true),
      SOREX_DOUBLE("split.test", split.test, true),

      SOREX_INT("model.d", model.tower.d, true),
      SOREX_INT("model.k1", model.tower.k1, true),
      SOREX_INT("model.k2", model.tower.k2, true),
      SOREX_BOOL("model.social_influence", model.tower.use_social_influence, true),
      SOREX_BOOL("model.social_tower", model.tower.use_social_tower, true),
      SOREX_BOOL("model.trans_item_emb", model.tower.trans_item_emb, true),
      SOREX_DOUBLE("model.init_scale", model.tower.init_scale, true),
      SOREX_BOOL("model.reaggregation", model.reaggregation, true),
      SOREX_BOOL("model.renorm_empty", model.renorm_empty, true),

      SOREX_INT("egopath.k", model.egopath.k, true),
      SOREX_INT("egopath.n_w", model.egopath.n_w, true),
      SOREX_DOUBLE("egopath.tau_start", model.egopath.tau_start, true),
      SOREX_DOUBLE("egopath.tau_end", model.egopath.tau_end, true),
      SOREX_BOOL("egopath.hard_eval", model.egopath.hard_eval, true),
      Entry{"egopath.topk", true,
            [](RunConfig& c, const std::string& k, const std::string& v) {
              const int n = parse_number<int>(k, v);
              if (n > 0) {
                c.model.egopath.topk = n;
              } else {
                c.model.egopath.topk.reset();
              }
            },
            [](const RunConfig& c) { return std::to_string(c.model.egopath.topk.value_or(0)); }},
      SOREX_BOOL("egopath.short_divisor", model.egopath.short_divisor, true),

      SOREX_DOUBLE("train.gamma", train.gamma, true),
      SOREX_DOUBLE("train.lambda", train.lambda, true),
      SOREX_DOUBLE("train.lr", train.lr, true),
      SOREX_INT("train.batch_size", train.batch_size, true),
      SOREX_INT("train.train_negatives", train.train_negatives, true),
      SOREX_INT("train.epochs", train.epochs, true),
      SOREX_INT("train.patience", train.patience, true),
      SOREX_INT("train.tau_anneal_epochs", train.tau_anneal_epochs, true),
      SOREX_BOOL("train.no_aux_loss", train.no_aux_loss, true),
      SOREX_INT("train.val_negatives", train.validation.val_negatives, true),
      SOREX_INT("train.val_passes", train.validation.passes, true),

      SOREX_INT("eval.k", eval.k, false),
      SOREX_INT("eval.passes", eval.passes, false),
      SOREX_INT("eval.val_negatives", eval.val_negatives, false),
      SOREX_BOOL("eval.fidelity_top5", eval.fidelity_top5, false),

      SOREX_BOOL("analysis.top5_only", analysis.top5_only, false),
      Entry{"analysis.triangle_rule", false,
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v != "any" && v != "all") throw ConfigError(k + ": expected 'any' or 'all'");
              c.analysis.rule.triangle_any = v == "any";
            },
            [](const RunConfig& c) { return std::string(c.analysis.rule.triangle_any ? "any" : "all"); }},

      Entry{"run.seed", true,
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.seed = parse_number<std::uint64_t>(k, v);
            },
            [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }},
      SOREX_INT("run.threads", threads, false),
      Entry{"run.out", false, [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; },
            [](const RunConfig& c) { return c.out.string(); }},
  };
  return entries;
}

#undef SOREX_BOOL
#undef SOREX_INT
#undef SOREX_DOUBLE

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& e : table()) {
    if (key == e.key) {
      e.set(*this, key, value);
      if (key == "run.seed") train.seed = *seed;
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(path.string() + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set(section + "." + key, value.get_value<std::string>());
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : table()) out.emplace_back(e.key, e.get(*this));
  return out;
}

std::vector<std::string> RunConfig::canonical() const {
  std::vector<std::string> out;
  for (const auto& e : table()) {
    if (e.digest) out.push_back(std::string(e.key) + "=" + e.get(*this));
  }
  return out;
}

std::uint64_t RunConfig::digest() const { return config_digest(canonical()); }

void RunConfig::write(std::ostream& out) const {
  std::string section;
  for (const auto& [key, value] : entries()) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    if (key == "run.seed" && value.empty()) continue;
    out << key.substr(dot + 1) << " = " << value << '\n';
  }
}

void RunConfig::validate() const {
  if (!seed) throw ConfigError("run.seed is mandatory (use --seed or run.seed)");
  if (data.min_interactions < 0) throw ConfigError("data.min_interactions must be >= 0");
  if (model.tower.k1 < 1 || model.tower.k2 < 1) throw ConfigError("model.k1 and model.k2 must be >= 1");
  if (model.tower.d < 1) throw ConfigError("model.d must be >= 1");
  if (eval.k < 1 || eval.passes < 1) throw ConfigError("eval.k and eval.passes must be >= 1");
  if (threads < 1) throw ConfigError("run.threads must be >= 1");
  try {
    model.egopath.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

int effective_threads(const RunConfig& config) {
  if (const char* env = std::getenv("SOREX_THREADS"); env && *env) {
    const int n = parse_number<int>("SOREX_THREADS", env);
    if (n < 1) throw ConfigError("SOREX_THREADS must be >= 1");
    return n;
  }
  return config.threads;
}

}  // namespace sorex
