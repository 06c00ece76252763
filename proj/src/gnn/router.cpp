#include "prouter/gnn/router.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "prouter/numerics/optim.hpp"
#include "prouter/numerics/rng.hpp"

namespace prouter {

void validate(const TrainConfig& c) {
  if (c.layers == 0 || c.hidden == 0 || c.batch_size == 0 || c.embed_dim == 0) {
    throw std::invalid_argument("layers, hidden, batch_size and embed_dim must be positive");
  }
  if (c.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (!(c.initial_lr > 0.0) || !std::isfinite(c.initial_lr)) {
    throw std::invalid_argument("initial_lr must be positive");
  }
  if (c.patience < 0) throw std::invalid_argument("patience must be non-negative");
}

std::string format_epoch(const EpochLog& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%d lr=%.6g train_loss=%.6f val_metric=%.6f", e.epoch, e.lr,
                e.train_loss, e.val_metric);
  return buf;
}

namespace {

std::vector<std::size_t> nodes_for(const HeteroGraph& graph, const std::vector<GroupKey>& keys) {
  std::vector<std::size_t> nodes;
  nodes.reserve(keys.size());
  for (const auto& k : keys) {
    auto q = graph.find_query(k);
    if (!q) throw std::invalid_argument("group " + k.str() + " is not in the graph");
    nodes.push_back(*q);
  }
  return nodes;
}

std::vector<std::vector<double>> split_logits(const Tensor& logits, const ad::GroupLayout& layout) {
  std::vector<std::vector<double>> out(layout.count());
  for (std::size_t g = 0; g < layout.count(); ++g) {
    for (std::size_t i = layout.offsets[g]; i < layout.offsets[g + 1]; ++i) {
      out[g].push_back(logits(i, 0));
    }
  }
  return out;
}

std::vector<std::vector<double>> score_with_model(const RouterModel& model, const HeteroGraph& graph,
                                                  const FeatureSet& features,
                                                  std::span<const std::size_t> nodes) {
  if (nodes.empty()) return {};
  const ScoringPlan plan = make_scoring_plan(graph, nodes);
  ad::Tape tape;
  const BoundModel m = bind(tape, model, false);
  const auto layers = encode(tape, m, graph, features, features.query_llm);
  const ad::Var logits = score_plan(tape, m, layers.back(), plan);
  return split_logits(tape.value(logits), plan.layout);
}

}  // namespace

double selection_metric(const HeteroGraph& graph, std::span<const std::size_t> query_nodes,
                        const std::vector<std::vector<double>>& logits, Strategy strategy) {
  if (query_nodes.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < query_nodes.size(); ++i) {
    const auto& cand = graph.candidates[query_nodes[i]];
    const auto& edge = graph.query_llm[cand[select_llm(logits[i])]];
    if (strategy == Strategy::CostEff) {
      if (!edge.reward) throw std::invalid_argument("cost-efficiency metric needs rewards");
      total += *edge.reward;
    } else {
      total += edge.label == 1 ? 1.0 : 0.0;
    }
  }
  return total / static_cast<double>(query_nodes.size());
}

TrainResult train(const HeteroGraph& graph, const FeatureSet& features,
                  const std::vector<GroupKey>& train_keys, const std::vector<GroupKey>& val_keys,
                  const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch) {
  validate(config);
  if (train_keys.empty()) throw std::invalid_argument("empty training split");
  if (features.task.cols() != config.embed_dim) {
    throw std::invalid_argument("feature width " + std::to_string(features.task.cols()) +
                                " differs from embed_dim " + std::to_string(config.embed_dim));
  }
  if (features.strategy != config.strategy) {
    throw std::invalid_argument("feature strategy differs from the training config");
  }
  ModelDims dims;
  dims.num_users = features.user.cols();
  dims.embed_dim = config.embed_dim;
  dims.hidden = config.hidden;
  dims.layers = config.layers;
  dims.strategy = config.strategy;

  TrainResult result;
  result.model = RouterModel::initialize(dims, config.seed);
  result.best_epoch = 0;
  result.best_metric = -std::numeric_limits<double>::infinity();
  if (config.epochs == 0) return result;

  const auto train_nodes = nodes_for(graph, train_keys);
  const auto val_nodes = nodes_for(graph, val_keys);
  RouterModel current = result.model;
  std::vector<Tensor> param_values;
  for (const auto& p : current.parameters()) param_values.push_back(p.value);
  AdamState adam = AdamState::like(param_values);
  param_values.clear();

  const ScheduleConfig schedule{config.initial_lr, config.epochs};
  Rng rng(mix_seed(config.seed, 0x62617463ULL));
  std::vector<std::size_t> order = train_nodes;

  for (int e = 0; e < config.epochs; ++e) {
    const double lr = lr_at(e, schedule);
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const ScoringPlan plan = make_scoring_plan(graph, batch);
      Tensor masked = features.query_llm;
      for (std::size_t edge : plan.edges) {
        for (double& x : masked.row(edge)) x = 0.0;
      }
      ad::Tape tape;
      const BoundModel m = bind(tape, current, true);
      const auto layers = encode(tape, m, graph, features, masked);
      const ad::Var logits = score_plan(tape, m, layers.back(), plan);
      const ad::Var loss = ad::grouped_softmax_ce(tape, logits, plan.layout);
      const double value = tape.value(loss).item();
      if (!std::isfinite(value)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(e + 1));
      }
      tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(m.vars.size());
      for (ad::Var v : m.vars) grads.push_back(tape.grad(v));
      auto& params = current.parameters();
      std::vector<Tensor> values;
      values.reserve(params.size());
      for (auto& p : params) values.push_back(std::move(p.value));
      adam_step(values, grads, adam, lr);
      for (std::size_t i = 0; i < params.size(); ++i) params[i].value = std::move(values[i]);
      loss_sum += value * static_cast<double>(batch.size());
    }
    EpochLog log;
    log.epoch = e + 1;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(order.size());
    // Without a validation split the lowest training loss selects the model.
    log.val_metric = val_nodes.empty()
                         ? -log.train_loss
                         : selection_metric(graph, val_nodes,
                                            score_with_model(current, graph, features, val_nodes),
                                            config.strategy);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (log.val_metric > result.best_metric) {
      result.best_metric = log.val_metric;
      result.best_epoch = log.epoch;
      result.model = current;
    }
    if (config.patience > 0 && log.epoch - result.best_epoch >= config.patience) break;
  }
  return result;
}

double model_loss(const RouterModel& model, const HeteroGraph& graph, const FeatureSet& features,
                  std::span<const std::size_t> query_nodes, std::vector<double>* grad) {
  const ScoringPlan plan = make_scoring_plan(graph, query_nodes);
  ad::Tape tape;
  const BoundModel m = bind(tape, model, grad != nullptr);
  const auto layers = encode(tape, m, graph, features, features.query_llm);
  const ad::Var logits = score_plan(tape, m, layers.back(), plan);
  const ad::Var loss = ad::grouped_softmax_ce(tape, logits, plan.layout);
  const double value = tape.value(loss).item();
  if (grad) {
    tape.backward(loss);
    grad->clear();
    for (ad::Var v : m.vars) {
      const auto g = tape.grad(v).values();
      grad->insert(grad->end(), g.begin(), g.end());
    }
  }
  return value;
}

GradCheckResult check_model_gradients(const RouterModel& model, const HeteroGraph& graph,
                                      const FeatureSet& features,
                                      std::span<const std::size_t> query_nodes, double eps) {
  auto unflatten = [&](std::span<const double> x) {
    RouterModel copy = model;
    std::size_t k = 0;
    for (auto& p : copy.parameters()) {
      for (double& v : p.value.data()) v = x[k++];
    }
    return copy;
  };
  std::vector<double> point;
  for (const auto& p : model.parameters()) {
    const auto v = p.value.values();
    point.insert(point.end(), v.begin(), v.end());
  }
  auto f = [&](std::span<const double> x) {
    return model_loss(unflatten(x), graph, features, query_nodes, nullptr);
  };
  auto g = [&](std::span<const double> x) {
    std::vector<double> grad;
    (void)model_loss(unflatten(x), graph, features, query_nodes, &grad);
    return grad;
  };
  return grad_check(f, g, point, eps);
}

GraphBundle build_bundle(const Dataset& data, const Registry& registry,
                         const EmbeddingProvider& provider, Strategy strategy,
                         const std::set<GroupKey>& visible) {
  GraphBundle b;
  b.graph = build_graph(data, registry);
  b.features = init_features(b.graph, registry, provider, strategy, visible);
  return b;
}

InferenceContext::InferenceContext(std::shared_ptr<const RouterModel> model, GraphBundle bundle)
    : model_(std::move(model)), bundle_(std::move(bundle)) {
  if (!model_) throw std::invalid_argument("inference context needs a model");
  ad::Tape tape;
  const BoundModel m = bind(tape, *model_, false);
  const auto layers = encode(tape, m, bundle_.graph, bundle_.features, bundle_.features.query_llm);
  for (const auto& vars : layers) {
    std::array<Tensor, kNodeKinds> row;
    for (std::size_t k = 0; k < kNodeKinds; ++k) row[k] = tape.value(vars[k]);
    layers_.push_back(std::move(row));
  }
}

std::vector<std::vector<double>> InferenceContext::score_nodes(
    std::span<const std::size_t> queries) const {
  if (queries.empty()) return {};
  const ScoringPlan plan = make_scoring_plan(bundle_.graph, queries);
  ad::Tape tape;
  const BoundModel m = bind(tape, *model_, false);
  NodeVars last;
  for (std::size_t k = 0; k < kNodeKinds; ++k) last[k] = tape.constant(layers_.back()[k]);
  const ad::Var logits = score_plan(tape, m, last, plan);
  return split_logits(tape.value(logits), plan.layout);
}

std::vector<std::vector<double>> InferenceContext::score_groups(
    const std::vector<GroupKey>& keys) const {
  const auto nodes = nodes_for(bundle_.graph, keys);
  return score_nodes(nodes);
}

Tensor InferenceContext::uqt(const std::vector<GroupKey>& keys) const {
  const auto nodes = nodes_for(bundle_.graph, keys);
  const ScoringPlan plan = make_scoring_plan(bundle_.graph, nodes);
  ad::Tape tape;
  const BoundModel m = bind(tape, *model_, false);
  auto pick = [&](NodeKind k, const RowIndex& idx) {
    return ad::gather_rows(tape, tape.constant(layers_.back()[static_cast<std::size_t>(k)]), idx);
  };
  const ad::Var out = combine_uqt(tape, m, pick(NodeKind::User, plan.user),
                                  pick(NodeKind::Task, plan.task), pick(NodeKind::Query, plan.query));
  return tape.value(out);
}

std::vector<double> InferenceContext::score_transient(std::size_t user, std::size_t task,
                                                      std::span<const double> query_feature) const {
  const HeteroGraph& g = bundle_.graph;
  const ModelDims& d = model_->dims();
  if (user >= g.node_count(NodeKind::User)) throw std::out_of_range("user index out of range");
  if (task >= g.node_count(NodeKind::Task)) throw std::out_of_range("task index out of range");
  if (query_feature.size() != d.embed_dim) {
    throw std::invalid_argument("query feature width differs from the model's embed_dim");
  }
  const std::size_t num_llms = g.node_count(NodeKind::Llm);
  ad::Tape tape;
  const BoundModel m = bind(tape, *model_, false);
  const RowIndex user_row = RowIndex::build({user}, g.node_count(NodeKind::User));
  const RowIndex task_row = RowIndex::build({task}, g.node_count(NodeKind::Task));
  // One target collecting the 2 + num_llms incoming messages.
  const std::vector<double> inv{1.0 / static_cast<double>(2 + num_llms)};
  const Segments single_user = Segments::from_keys(std::vector<std::size_t>{0}, 1);
  const Segments llm_into_one = Segments::from_keys(std::vector<std::size_t>(num_llms, 0), 1);

  ad::Var hq = ad::add_bias(
      tape,
      ad::linear(tape, tape.constant(Tensor(1, d.embed_dim, {query_feature.begin(), query_feature.end()})),
                 m["input.query.weight"]),
      m["input.query.bias"]);
  auto message = [&](const std::string& prefix, ad::Var src, ad::Var edge) {
    ad::Var pre = ad::add(tape, ad::linear(tape, src, m[prefix + ".w_node"]),
                          ad::linear(tape, edge, m[prefix + ".w_edge"]));
    return ad::relu(tape, ad::scale(tape, pre, m[prefix + ".gate"]));
  };
  const ad::Var unit = tape.constant(Tensor(1, 1, 1.0));
  const ad::Var zero_ql =
      tape.constant(Tensor(num_llms, query_llm_feature_width(d.strategy), 0.0));
  for (std::size_t l = 0; l < d.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const auto& in = layers_[l];
    ad::Var hu = ad::gather_rows(tape, tape.constant(in[0]), user_row);
    ad::Var ht = ad::gather_rows(tape, tape.constant(in[1]), task_row);
    ad::Var hm = tape.constant(in[3]);
    ad::Var agg = ad::segment_sum(tape, message(p + "task_query", ht, unit), single_user, inv);
    agg = ad::add(tape, agg,
                  ad::segment_sum(tape, message(p + "user_query", hu, unit), single_user, inv));
    if (num_llms > 0) {
      agg = ad::add(tape, agg,
                    ad::segment_sum(tape, message(p + "llm_query", hm, zero_ql), llm_into_one, inv));
    }
    const std::array<ad::Var, 2> parts = {agg, hq};
    hq = ad::linear(tape, ad::concat_cols(tape, parts), m[p + "update.query"]);
  }
  const auto& last = layers_.back();
  ad::Var hu = ad::gather_rows(tape, tape.constant(last[0]), user_row);
  ad::Var ht = ad::gather_rows(tape, tape.constant(last[1]), task_row);
  const Tensor uqt = tape.value(combine_uqt(tape, m, hu, ht, hq));
  return score_candidates(uqt.values(), last[3]);
}

InferenceContext adapt_few_shot(std::shared_ptr<const RouterModel> model, const Dataset& base,
                                const std::set<GroupKey>& visible,
                                const std::vector<InteractionRecord>& auxiliary,
                                const std::vector<GroupKey>& test_keys, const Registry& registry,
                                const EmbeddingProvider& provider) {
  if (!model) throw std::invalid_argument("adapt_few_shot needs a model");
  const std::set<GroupKey> test(test_keys.begin(), test_keys.end());
  std::set<GroupKey> shown = visible;
  for (const auto& r : auxiliary) {
    const GroupKey key{r.user_id, r.query_id};
    if (test.count(key)) {
      throw std::invalid_argument("auxiliary record " + r.record_id +
                                  " collides with test group " + key.str());
    }
    if (!registry.empty() && (!registry.find_user(r.user_id) || !registry.find_llm(r.llm_id))) {
      throw std::invalid_argument("auxiliary record " + r.record_id +
                                  " references an unregistered user or llm");
    }
    shown.insert(key);
  }
  std::vector<InteractionRecord> records = base.records();
  records.insert(records.end(), auxiliary.begin(), auxiliary.end());
  const Dataset merged = Dataset::from_records(std::move(records));
  const Strategy strategy = model->dims().strategy;
  return InferenceContext(std::move(model),
                          build_bundle(merged, registry, provider, strategy, shown));
}

void export_embeddings(const InferenceContext& context, const std::vector<GroupKey>& combos,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const HeteroGraph& g = context.graph();
  const Tensor& hm = context.layers().back()[static_cast<std::size_t>(NodeKind::Llm)];
  for (std::size_t i = 0; i < g.llms.size(); ++i) {
    const auto row = hm.row(i);
    nlohmann::json j = {{"id", "llm:" + g.llms.id(i)},
                        {"kind", "llm"},
                        {"vector", std::vector<double>(row.begin(), row.end())}};
    out << j.dump() << '\n';
  }
  if (!combos.empty()) {
    const Tensor uqt = context.uqt(combos);
    for (std::size_t i = 0; i < combos.size(); ++i) {
      const auto& qn = g.queries[*g.find_query(combos[i])];
      const auto row = uqt.row(i);
      nlohmann::json j = {{"id", "uqt:" + combos[i].user_id + "|" + combos[i].query_id + "|" + qn.task_id},
                          {"kind", "uqt"},
                          {"vector", std::vector<double>(row.begin(), row.end())}};
      out << j.dump() << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace prouter
