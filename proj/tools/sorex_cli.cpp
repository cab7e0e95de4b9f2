// sorex: prepare, train, evaluate, explain, analyze and fidelity pipelines.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sorex/analysis.hpp"
#include "sorex/config.hpp"
#include "sorex/dataset.hpp"
#include "sorex/evaluation.hpp"
#include "sorex/graph.hpp"
#include "sorex/training.hpp"

namespace fs = std::filesystem;
using namespace sorex;

namespace {

// Stream tags separating the CLI's evaluation runs from training-time validation.
constexpr std::uint64_t kTestTag = 1;
constexpr std::uint64_t kValidationTag = 2;

struct Paths {
  fs::path graph, split, users, items, checkpoint, log, config;

  explicit Paths(const fs::path& out)
      : graph(out / "graph.srxg"),
        split(out / "split.tsv"),
        users(out / "users.tsv"),
        items(out / "items.tsv"),
        checkpoint(out / "checkpoint.srxc"),
        log(out / "train_log.tsv"),
        config(out / "config.ini") {}
};

void require(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw std::runtime_error(std::string(what) + " not found: " + p.string());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

struct Loaded {
  JointGraph full;
  DatasetSplit split;
  JointGraph train_graph;
};

Loaded load_prepared(const Paths& paths) {
  require(paths.graph, "graph cache (run `prepare` first)");
  require(paths.split, "split file (run `prepare` first)");
  auto full = load_graph(paths.graph);
  auto sp = load_split(paths.split);
  auto tg = training_graph(full, sp);
  return {std::move(full), std::move(sp), std::move(tg)};
}

Model<float> load_model(const RunConfig& config, const Paths& paths, const JointGraph& graph) {
  require(paths.checkpoint, "checkpoint (run `train` first)");
  auto ckpt = load_checkpoint(paths.checkpoint, config.digest());
  if (ckpt.header.m != static_cast<std::uint32_t>(graph.num_users()) ||
      ckpt.header.n != static_cast<std::uint32_t>(graph.num_items())) {
    throw std::runtime_error("checkpoint shape does not match the prepared graph");
  }
  return {config.model, std::move(ckpt.tables)};
}

int cmd_prepare(const RunConfig& config, const Paths& paths) {
  require(config.data.interactions, "interaction file");
  require(config.data.social, "social file");
  LoadOptions opts;
  opts.rating_threshold = config.data.rating_threshold;
  opts.skip_header = config.data.skip_header;
  const auto raw = load_dataset(config.data.interactions, config.data.social, opts);
  const auto data = preprocess(raw, config.data.min_interactions);
  const auto sp = split(data.graph, config.split, *config.seed);
  save_graph(data.graph, paths.graph);
  save_split(sp, paths.split);
  {
    auto u = open_out(paths.users);
    for (std::size_t i = 0; i < data.user_ids.size(); ++i) u << i << '\t' << data.user_ids[i] << '\n';
    auto v = open_out(paths.items);
    for (std::size_t i = 0; i < data.item_ids.size(); ++i) v << i << '\t' << data.item_ids[i] << '\n';
  }
  std::cout << "users " << data.graph.num_users() << "  items " << data.graph.num_items() << "  interactions "
            << data.graph.num_interactions() << "  social edges " << data.graph.num_social_edges() << '\n'
            << "train " << sp.train.size() << "  valid " << sp.valid.size() << "  test " << sp.test.size() << '\n';
  return 0;
}

int cmd_train(RunConfig config, const Paths& paths) {
  const auto loaded = load_prepared(paths);
  config.train.validation.threads = effective_threads(config);
  {
    auto out = open_out(paths.config);
    out << "# digest " << config.digest() << '\n';
    config.write(out);
  }
  auto log = open_out(paths.log);
  write_log_header(log);
  TrainCallbacks<float> callbacks;
  callbacks.on_epoch = [&](const EpochLog& row) {
    write_log_row(log, row);
    log.flush();
    write_log_row(std::cout, row);
  };
  const auto digest = config.digest();
  const auto m = loaded.full.num_users();
  const auto n = loaded.full.num_items();
  callbacks.on_improve = [&](const Model<float>& model, const OptimizerState<float>& opt) {
    save_checkpoint(paths.checkpoint, digest, m, n, model.tables, opt);
  };
  const auto result = train<float>(loaded.full, loaded.split, config.model, config.train, callbacks);
  std::cout << "best epoch " << result.best_epoch << "  val ndcg@" << config.train.validation.k << ' '
            << result.best_val_ndcg << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& config, const Paths& paths, const std::string& mode_name) {
  const auto loaded = load_prepared(paths);
  const auto model = load_model(config, paths, loaded.train_graph);
  const ModelContext<float> ctx(loaded.train_graph, config.model.tower);
  const Scorer<float> scorer(ctx, model);
  const EvalData data(loaded.full, loaded.split);
  auto ec = config.eval;
  ec.threads = effective_threads(config);
  MetricReport report;
  EvalMode mode;
  if (mode_name == "validation") {
    mode = EvalMode::Validation;
    const auto cands = validation_candidates(data, ec.val_negatives,
                                             derive_seed(*config.seed, {stream::kValNegatives, kValidationTag}));
    report = evaluate(scorer, data, mode, ec, PassKeys{*config.seed, kValidationTag}, &cands);
  } else {
    mode = EvalMode::Test;
    report = evaluate(scorer, data, mode, ec, PassKeys{*config.seed, kTestTag});
  }
  const auto j = metrics_json(config.data.name, mode, report);
  write_json(config.out / (std::string("metrics_") + to_string(mode) + ".json"), j);
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_fidelity(const RunConfig& config, const Paths& paths) {
  const auto loaded = load_prepared(paths);
  const auto model = load_model(config, paths, loaded.train_graph);
  const ModelContext<float> ctx(loaded.train_graph, config.model.tower);
  const Scorer<float> scorer(ctx, model);
  const EvalData data(loaded.full, loaded.split);
  auto ec = config.eval;
  ec.threads = effective_threads(config);
  const PassKeys keys{*config.seed, kTestTag};
  const auto report = evaluate(scorer, data, EvalMode::Test, ec, keys);
  const auto fid = fidelity(scorer, data, ec, keys);
  auto j = metrics_json(config.data.name, EvalMode::Test, report, &fid);
  j["fidelity_pairs"] = fid.pairs;
  write_json(config.out / "fidelity.json", j);
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_explain(const RunConfig& config, const Paths& paths, std::vector<std::int32_t> users, int top) {
  const auto loaded = load_prepared(paths);
  const auto model = load_model(config, paths, loaded.train_graph);
  if (!config.model.reaggregation) throw std::runtime_error("explanations need model.reaggregation = true");
  const ModelContext<float> ctx(loaded.train_graph, config.model.tower);
  const Scorer<float> scorer(ctx, model);
  const EvalData data(loaded.full, loaded.split);
  const PassKeys keys{*config.seed, kTestTag};
  const auto& ep = config.model.egopath;
  if (users.empty()) {
    for (const auto& [u, j] : data.test) {
      if (std::find(users.begin(), users.end(), u) == users.end()) users.push_back(u);
      if (users.size() >= 5) break;
    }
  }
  const fs::path dir = config.out / "explain";
  fs::create_directories(dir);
  std::size_t files = 0;
  for (auto u : users) {
    if (u < 0 || u >= data.num_users) throw std::runtime_error("user index out of range: " + std::to_string(u));
    const auto pool = user_pool(loaded.train_graph, u, ep.k, ep.n_w, keys.pool_seed(0, u));
    const auto cands = test_candidates(data, u);
    std::vector<CandidateExplanation> record;
    const auto scores = scorer.score(u, pool, cands, keys.draws(0, u), scorer.eval_options(), &record);
    std::vector<double> g;
    for (const auto& s : scores) g.push_back(s.g);
    const auto ranked = rank_items(u, cands.front(), cands, g);
    // Explain the top-ranked items and the user's held-out test items.
    std::vector<std::int32_t> chosen(ranked.candidates.begin(),
                                     ranked.candidates.begin() + std::min<std::ptrdiff_t>(top, ranked.candidates.size()));
    for (const auto& [tu, j] : data.test)
      if (tu == u && std::find(chosen.begin(), chosen.end(), j) == chosen.end()) chosen.push_back(j);
    for (auto j : chosen) {
      const auto idx = static_cast<std::size_t>(std::lower_bound(cands.begin(), cands.end(), j) - cands.begin());
      for (int t = 0; t < (config.model.tower.use_social_tower ? 2 : 1); ++t) {
        const auto tower = static_cast<Tower>(t);
        const auto doc = export_explanation(scorer, pool, u, j, tower,
                                            record[idx].towers[static_cast<std::size_t>(t)], config.analysis.rule);
        const auto stem = "u" + std::to_string(u) + "_v" + std::to_string(j) + "_" + to_string(tower);
        write_json(dir / (stem + ".json"), doc);
        auto dot = open_out(dir / (stem + ".dot"));
        write_dot(dot, doc);
        files += 2;
      }
    }
  }
  std::cout << "wrote " << files << " files to " << dir.string() << '\n';
  return 0;
}

int cmd_analyze(const RunConfig& config, const Paths& paths) {
  const auto loaded = load_prepared(paths);
  const auto model = load_model(config, paths, loaded.train_graph);
  const ModelContext<float> ctx(loaded.train_graph, config.model.tower);
  const Scorer<float> scorer(ctx, model);
  const EvalData data(loaded.full, loaded.split);
  const auto stats = analyze(scorer, data, config.analysis, PassKeys{*config.seed, kTestTag}, effective_threads(config));
  auto out = open_out(config.out / "motif_stats.tsv");
  stats.write_tsv(out, config.data.name);
  stats.write_tsv(std::cout, config.data.name);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-explainable social recommender: training, evaluation and explanation analysis"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::optional<double> gamma;
  std::optional<int> passes;
  std::string mode = "test";
  std::vector<std::int32_t> users;
  int top = 3;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Random seed (mandatory unless set in the config)");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--set", overrides, "Override: section.key=value")->take_all();
    sub->add_option("--gamma", gamma, "Shortcut for train.gamma");
    sub->add_option("--passes", passes, "Shortcut for eval.passes");
  };
  auto* prepare = app.add_subcommand("prepare", "Load, filter and split a dataset");
  auto* train_cmd = app.add_subcommand("train", "Train and checkpoint the best epoch");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Rank held-out pairs and write metrics JSON");
  auto* explain = app.add_subcommand("explain", "Export per-candidate explanations (JSON + DOT)");
  auto* analyze_cmd = app.add_subcommand("analyze", "Motif detection statistics table");
  auto* fidelity_cmd = app.add_subcommand("fidelity", "Removal-based fidelity report");
  for (auto* sub : {prepare, train_cmd, evaluate_cmd, explain, analyze_cmd, fidelity_cmd}) common(sub);
  evaluate_cmd->add_option("--mode", mode, "test or validation")->check(CLI::IsMember({"test", "validation"}));
  explain->add_option("--user", users, "User index to explain (repeatable)");
  explain->add_option("--top", top, "Also explain this many top-ranked items");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config;
    if (!config_path.empty()) config.load(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
      config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) config.set("run.seed", std::to_string(*seed));
    if (gamma) config.set("train.gamma", std::to_string(*gamma));
    if (passes) config.set("eval.passes", std::to_string(*passes));
    if (!out_dir.empty()) config.out = out_dir;
    config.validate();
    fs::create_directories(config.out);
    const Paths paths(config.out);

    if (*prepare) return cmd_prepare(config, paths);
    if (*train_cmd) return cmd_train(config, paths);
    if (*evaluate_cmd) return cmd_evaluate(config, paths, mode);
    if (*explain) return cmd_explain(config, paths, users, top);
    if (*analyze_cmd) return cmd_analyze(config, paths);
    if (*fidelity_cmd) return cmd_fidelity(config, paths);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
