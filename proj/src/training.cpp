#include "sorex/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "sorex/binary_io.hpp"

namespace sorex {

void TrainConfig::validate() const {
  if (gamma < 0) throw std::invalid_argument("gamma must be >= 0");
  if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
  if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (train_negatives < 1) throw std::invalid_argument("train_negatives must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  main_r += o.main_r;
  main_s += o.main_s;
  main_fused += o.main_fused;
  aux += o.aux;
  reg += o.reg;
  total += o.total;
  return *this;
}

double bpr(double pos, double neg) {
  const double x = pos - neg;
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

double temperature(const EgoPathConfig& egopath, const TrainConfig& train, int epoch) {
  const int span = train.tau_anneal_epochs > 0 ? train.tau_anneal_epochs : train.epochs;
  const double t = span <= 1 ? 1.0 : std::min(1.0, static_cast<double>(epoch) / static_cast<double>(span - 1));
  return egopath.tau_start + (egopath.tau_end - egopath.tau_start) * t;
}

std::vector<std::array<std::int32_t, 3>> friend_triples(const JointGraph& graph, std::uint64_t seed, int epoch) {
  auto rng = make_rng(seed, {stream::kFriends, static_cast<std::uint64_t>(epoch)});
  const auto m = graph.num_users();
  std::vector<std::array<std::int32_t, 3>> out;
  for (NodeId u = 0; u < m; ++u) {
    const auto friends = graph.neighbors(u, Relation::Social);
    if (friends.empty()) continue;
    // Everyone else is a friend: no negative exists.
    if (static_cast<std::int64_t>(friends.size()) + 1 >= m) continue;
    for (NodeId f : friends) {
      NodeId neg;
      do {
        neg = static_cast<NodeId>(uniform_below(rng, static_cast<std::uint64_t>(m)));
      } while (neg == u || std::binary_search(friends.begin(), friends.end(), neg));
      out.push_back({u, f, neg});
    }
  }
  shuffle(out, rng);
  return out;
}

BatchPlan make_plan(const JointGraph& graph, const UserItemSets& train_sets, std::span<const InteractionEdge> anchors,
                    std::vector<std::array<std::int32_t, 3>> friends, const ModelConfig& model,
                    const TrainConfig& train, int epoch, int step) {
  const auto& ep = model.egopath;
  const auto e = static_cast<std::uint64_t>(epoch);
  const auto s = static_cast<std::uint64_t>(step);
  BatchPlan plan;
  plan.mode = ep.topk ? SampleMode::TopK : SampleMode::Relaxed;
  plan.tau = temperature(ep, train, epoch);
  plan.friend_triples = std::move(friends);

  std::map<std::int32_t, int> pool_of;
  std::map<std::pair<std::int32_t, std::int32_t>, int> pair_of;
  auto pool_index = [&](std::int32_t u) {
    auto [it, inserted] = pool_of.try_emplace(u, static_cast<int>(plan.pools.size()));
    if (inserted) {
      const auto seed = derive_seed(train.seed, {stream::kWalks, e, s, static_cast<std::uint64_t>(u)});
      plan.pools.push_back(sample_walks(graph, u, ep.k, ep.n_w, seed));
    }
    return it->second;
  };
  auto pair_index = [&](std::int32_t u, std::int32_t j) {
    auto [it, inserted] = pair_of.try_emplace({u, j}, static_cast<int>(plan.pairs.size()));
    if (inserted) plan.pairs.push_back({u, j, pool_index(u)});
    return it->second;
  };

  auto rng = make_rng(train.seed, {stream::kNegatives, e, s});
  for (const auto& anchor : anchors) {
    // a user who interacted with every item has no negative to rank against
    if (static_cast<std::int32_t>(train_sets.items(anchor.first).size()) >= graph.num_items()) continue;
    const auto batch = sample_negatives(train_sets, graph.num_items(), anchor, train.train_negatives, rng);
    const int pos = pair_index(anchor.first, anchor.second);
    for (auto j : batch.negatives) plan.triples.emplace_back(pos, pair_index(anchor.first, j));
  }

  if (model.reaggregation) {
    for (int t = 0; t < 2; ++t) {
      const auto tower = static_cast<Tower>(t);
      auto& noise = plan.noise[static_cast<std::size_t>(t)];
      auto& uniforms = plan.uniforms[static_cast<std::size_t>(t)];
      for (const auto& pr : plan.pairs) {
        const DrawSource draws{derive_seed(train.seed, {stream::kDraws, e, s, static_cast<std::uint64_t>(pr.user)})};
        for (int p = 0; p < ep.n_w; ++p) {
          noise.push_back(draws.logistic(tower, pr.item, p));
          uniforms.push_back(draws.uniform(tower, pr.item, p));
        }
      }
    }
  }
  return plan;
}

template <typename Scalar>
LossBreakdown loss_and_grad(const ModelContext<Scalar>& ctx, const Model<Scalar>& model, const BatchPlan& plan,
                            const LossWeights& weights, Matrix<Scalar>* grad_r, Matrix<Scalar>* grad_s) {
  Tape<Scalar> tape;
  ForwardArena<Scalar> arena;
  const bool want_grad = grad_r || grad_s;
  auto er = want_grad ? tape.parameter(model.tables.interaction) : tape.constant(model.tables.interaction);
  auto es = want_grad ? tape.parameter(model.tables.social) : tape.constant(model.tables.social);
  const auto vars = forward_loss(tape, arena, er, es, ctx, model.config, plan, weights);
  LossBreakdown out;
  out.main_r = static_cast<double>(vars.main_r.scalar());
  out.main_s = static_cast<double>(vars.main_s.scalar());
  out.main_fused = static_cast<double>(vars.main_fused.scalar());
  out.aux = static_cast<double>(vars.aux.scalar());
  out.reg = static_cast<double>(vars.reg.scalar());
  out.total = static_cast<double>(vars.total.scalar());
  if (!std::isfinite(out.total)) throw std::runtime_error("non-finite loss");
  if (want_grad) {
    tape.backward(vars.total);
    if (grad_r) *grad_r = tape.grad(er);
    if (grad_s) *grad_s = tape.grad(es);
  }
  return out;
}

void write_log_header(std::ostream& out) {
  out << "epoch\tloss_total\tloss_main\tloss_aux\tval_hr10\tval_ndcg10\tseconds\n";
}

void write_log_row(std::ostream& out, const EpochLog& row) {
  out << row.epoch << '\t' << row.loss.total << '\t' << row.loss.main() << '\t' << row.loss.aux << '\t' << row.val_hr
      << '\t' << row.val_ndcg << '\t' << row.seconds << '\n';
}

template <typename Scalar>
TrainResult<Scalar> train(const JointGraph& full, const DatasetSplit& split, const ModelConfig& model_config,
                          const TrainConfig& config, const TrainCallbacks<Scalar>& callbacks) {
  config.validate();
  model_config.egopath.validate();
  const JointGraph graph = training_graph(full, split);
  const ModelContext<Scalar> ctx(graph, model_config.tower);
  const EvalData data(full, split);
  const UserItemSets train_sets(graph.num_users(), split.train);
  const LossWeights weights{config.effective_gamma(model_config), config.lambda};

  Model<Scalar> model{model_config,
                      init_embeddings<Scalar>(graph.num_users(), graph.num_items(), model_config.tower.d, config.seed,
                                              model_config.tower.init_scale)};
  auto optimizer = OptimizerState<Scalar>::zeros_like(model.tables);
  TrainResult<Scalar> result{model, optimizer, -1, -1.0, {}};

  std::vector<InteractionEdge> edges = split.train;
  const auto steps = static_cast<int>((edges.size() + static_cast<std::size_t>(config.batch_size) - 1) /
                                      static_cast<std::size_t>(config.batch_size));
  int since_best = 0;
  Matrix<Scalar> grad_r;
  Matrix<Scalar> grad_s;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto e = static_cast<std::uint64_t>(epoch);
    {
      auto rng = make_rng(config.seed, {stream::kShuffle, e});
      shuffle(edges, rng);
    }
    std::vector<std::array<std::int32_t, 3>> friends;
    if (weights.gamma > 0) friends = friend_triples(graph, config.seed, epoch);

    EpochLog row;
    row.epoch = epoch;
    for (int step = 0; step < steps; ++step) {
      const auto b = static_cast<std::size_t>(step) * static_cast<std::size_t>(config.batch_size);
      const auto len = std::min(edges.size() - b, static_cast<std::size_t>(config.batch_size));
      // Friend triples are spread evenly over the epoch's steps.
      const auto f0 = friends.size() * static_cast<std::size_t>(step) / static_cast<std::size_t>(steps);
      const auto f1 = friends.size() * static_cast<std::size_t>(step + 1) / static_cast<std::size_t>(steps);
      auto plan = make_plan(graph, train_sets, std::span(edges).subspan(b, len),
                            {friends.begin() + static_cast<std::ptrdiff_t>(f0),
                             friends.begin() + static_cast<std::ptrdiff_t>(f1)},
                            model_config, config, epoch, step);
      row.loss += loss_and_grad(ctx, model, plan, weights, &grad_r, &grad_s);
      adam_step(optimizer, model.tables, grad_r, grad_s, config.lr);
    }

    bool improved = true;
    if (!data.valid.empty()) {
      const Scorer<Scalar> scorer(ctx, model);
      const auto cands = validation_candidates(data, config.validation.val_negatives,
                                               derive_seed(config.seed, {stream::kValNegatives, e}));
      const auto report = evaluate(scorer, data, EvalMode::Validation, config.validation,
                                   PassKeys{config.seed, 1000 + e}, &cands);
      row.val_hr = report.hr;
      row.val_ndcg = report.ndcg;
      improved = report.ndcg > result.best_val_ndcg;
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.log.push_back(row);
    if (callbacks.on_epoch) callbacks.on_epoch(row);

    if (improved) {
      result.best = model;
      result.optimizer = optimizer;
      result.best_epoch = epoch;
      result.best_val_ndcg = row.val_ndcg;
      since_best = 0;
      if (callbacks.on_improve) callbacks.on_improve(model, optimizer);
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

std::uint64_t config_digest(const std::vector<std::string>& canonical_lines) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& line : canonical_lines) {
    for (char c : line) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  return h;
}

namespace {

template <typename Scalar>
void write_floats(std::ostream& out, const Matrix<Scalar>& mat) {
  const Matrix<float> f = mat.template cast<float>();
  io::write_array(out, f.data(), static_cast<std::size_t>(f.size()));
}

Matrix<float> read_floats(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Matrix<float> f(rows, cols);
  io::read_array(in, f.data(), static_cast<std::size_t>(f.size()));
  return f;
}

}  // namespace

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, std::uint64_t digest, std::int32_t m, std::int32_t n,
                     const EmbeddingTables<Scalar>& tables, const OptimizerState<Scalar>& optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  io::write_magic(out, "SRXC");
  io::write_pod(out, kCheckpointVersion);
  io::write_pod(out, digest);
  io::write_pod(out, static_cast<std::uint32_t>(m));
  io::write_pod(out, static_cast<std::uint32_t>(n));
  io::write_pod(out, static_cast<std::uint32_t>(tables.interaction.cols()));
  write_floats(out, tables.interaction);
  write_floats(out, tables.social);
  io::write_pod(out, optimizer.step);
  write_floats(out, optimizer.m_interaction);
  write_floats(out, optimizer.v_interaction);
  write_floats(out, optimizer.m_social);
  write_floats(out, optimizer.v_social);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  io::expect_magic(in, "SRXC");
  const auto version = io::read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw io::FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.header.digest = io::read_pod<std::uint64_t>(in);
  c.header.m = io::read_pod<std::uint32_t>(in);
  c.header.n = io::read_pod<std::uint32_t>(in);
  c.header.d = io::read_pod<std::uint32_t>(in);
  if (expected_digest && *expected_digest != c.header.digest) {
    throw io::FormatError("checkpoint config digest mismatch");
  }
  const auto rows = static_cast<Eigen::Index>(c.header.m) + static_cast<Eigen::Index>(c.header.n);
  const auto d = static_cast<Eigen::Index>(c.header.d);
  c.tables.interaction = read_floats(in, rows, d);
  c.tables.social = read_floats(in, rows, d);
  c.optimizer.step = io::read_pod<std::uint64_t>(in);
  c.optimizer.m_interaction = read_floats(in, rows, d);
  c.optimizer.v_interaction = read_floats(in, rows, d);
  c.optimizer.m_social = read_floats(in, rows, d);
  c.optimizer.v_social = read_floats(in, rows, d);
  if (in.peek() != std::char_traits<char>::eof()) throw io::FormatError("trailing bytes in checkpoint");
  return c;
}

template LossBreakdown loss_and_grad<float>(const ModelContext<float>&, const Model<float>&, const BatchPlan&,
                                            const LossWeights&, Matrix<float>*, Matrix<float>*);
template LossBreakdown loss_and_grad<double>(const ModelContext<double>&, const Model<double>&, const BatchPlan&,
                                             const LossWeights&, Matrix<double>*, Matrix<double>*);
template TrainResult<float> train<float>(const JointGraph&, const DatasetSplit&, const ModelConfig&,
                                         const TrainConfig&, const TrainCallbacks<float>&);
template TrainResult<double> train<double>(const JointGraph&, const DatasetSplit&, const ModelConfig&,
                                           const TrainConfig&, const TrainCallbacks<double>&);
template void save_checkpoint<float>(const std::filesystem::path&, std::uint64_t, std::int32_t, std::int32_t,
                                     const EmbeddingTables<float>&, const OptimizerState<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, std::uint64_t, std::int32_t, std::int32_t,
                                      const EmbeddingTables<double>&, const OptimizerState<double>&);

}  // namespace sorex
