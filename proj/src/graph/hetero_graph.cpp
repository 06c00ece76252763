#include "prouter/graph/hetero_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prouter/sim/simulation.hpp"

namespace prouter {

const char* to_string(NodeKind k) noexcept {
  switch (k) {
    case NodeKind::User: return "user";
    case NodeKind::Task: return "task";
    case NodeKind::Query: return "query";
    case NodeKind::Llm: return "llm";
  }
  return "?";
}

std::string to_string(Strategy s) { return s == Strategy::CostEff ? "cost_eff" : "judge"; }

Strategy strategy_from_string(const std::string& s) {
  if (s == "cost_eff" || s == "cost-eff") return Strategy::CostEff;
  if (s == "judge") return Strategy::Judge;
  throw std::invalid_argument("unknown strategy '" + s + "' (expected cost_eff or judge)");
}

std::size_t query_llm_feature_width(Strategy s) noexcept { return s == Strategy::CostEff ? 3 : 1; }

const char* to_string(Relation r) noexcept {
  switch (r) {
    case Relation::TaskToUser: return "task_user";
    case Relation::QueryToUser: return "query_user";
    case Relation::UserToTask: return "user_task";
    case Relation::QueryToTask: return "query_task";
    case Relation::TaskToQuery: return "task_query";
    case Relation::UserToQuery: return "user_query";
    case Relation::LlmToQuery: return "llm_query";
    case Relation::QueryToLlm: return "query_llm";
  }
  return "?";
}

NodeKind source_kind(Relation r) noexcept {
  switch (r) {
    case Relation::TaskToUser: return NodeKind::Task;
    case Relation::QueryToUser: return NodeKind::Query;
    case Relation::UserToTask: return NodeKind::User;
    case Relation::QueryToTask: return NodeKind::Query;
    case Relation::TaskToQuery: return NodeKind::Task;
    case Relation::UserToQuery: return NodeKind::User;
    case Relation::LlmToQuery: return NodeKind::Llm;
    case Relation::QueryToLlm: return NodeKind::Query;
  }
  return NodeKind::User;
}

NodeKind target_kind(Relation r) noexcept {
  switch (r) {
    case Relation::TaskToUser:
    case Relation::QueryToUser: return NodeKind::User;
    case Relation::UserToTask:
    case Relation::QueryToTask: return NodeKind::Task;
    case Relation::TaskToQuery:
    case Relation::UserToQuery:
    case Relation::LlmToQuery: return NodeKind::Query;
    case Relation::QueryToLlm: return NodeKind::Llm;
  }
  return NodeKind::User;
}

std::size_t NodeTable::add(const std::string& id) {
  auto [it, inserted] = index_.emplace(id, ids_.size());
  if (inserted) ids_.push_back(id);
  return it->second;
}

std::optional<std::size_t> NodeTable::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t HeteroGraph::node_count(NodeKind k) const noexcept {
  switch (k) {
    case NodeKind::User: return users.size();
    case NodeKind::Task: return tasks.size();
    case NodeKind::Query: return queries.size();
    case NodeKind::Llm: return llms.size();
  }
  return 0;
}

std::size_t HeteroGraph::total_nodes() const noexcept {
  return users.size() + tasks.size() + queries.size() + llms.size();
}

std::size_t HeteroGraph::total_edges() const noexcept {
  return user_task.size() + task_query.size() + user_query.size() + query_llm.size();
}

std::optional<std::size_t> HeteroGraph::find_query(const GroupKey& key) const {
  auto it = query_index.find(key);
  if (it == query_index.end()) return std::nullopt;
  return it->second;
}

void HeteroGraph::finalize() {
  auto make = [&](Relation r, const std::vector<std::size_t>& src, const std::vector<std::size_t>& dst) {
    Adjacency& adj = adjacency_[static_cast<std::size_t>(r)];
    adj.relation = r;
    adj.source = RowIndex::build(src, node_count(source_kind(r)));
    adj.by_target = Segments::from_keys(dst, node_count(target_kind(r)));
  };
  auto split = [](const std::vector<EdgePair>& edges) {
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
    for (const auto& e : edges) {
      out.first.push_back(e.a);
      out.second.push_back(e.b);
    }
    return out;
  };
  const auto [ut_u, ut_t] = split(user_task);
  const auto [tq_t, tq_q] = split(task_query);
  const auto [uq_u, uq_q] = split(user_query);
  std::vector<std::size_t> ql_q, ql_l;
  for (const auto& e : query_llm) {
    ql_q.push_back(e.query);
    ql_l.push_back(e.llm);
  }
  make(Relation::TaskToUser, ut_t, ut_u);
  make(Relation::UserToTask, ut_u, ut_t);
  make(Relation::QueryToTask, tq_q, tq_t);
  make(Relation::TaskToQuery, tq_t, tq_q);
  make(Relation::QueryToUser, uq_q, uq_u);
  make(Relation::UserToQuery, uq_u, uq_q);
  make(Relation::LlmToQuery, ql_l, ql_q);
  make(Relation::QueryToLlm, ql_q, ql_l);

  for (std::size_t k = 0; k < kNodeKinds; ++k) {
    std::vector<std::size_t> deg(node_count(static_cast<NodeKind>(k)), 0);
    for (Relation r : kAllRelations) {
      if (static_cast<std::size_t>(target_kind(r)) != k) continue;
      const Segments& seg = adjacency(r).by_target;
      for (std::size_t n = 0; n < seg.count(); ++n) deg[n] += seg.degree(n);
    }
    auto& inv = inverse_degree_[k];
    inv.assign(deg.size(), 0.0);
    for (std::size_t n = 0; n < deg.size(); ++n) {
      if (deg[n] > 0) inv[n] = 1.0 / static_cast<double>(deg[n]);
    }
  }
}

HeteroGraph build_graph(const Dataset& dataset, const Registry& registry) {
  HeteroGraph g;
  std::set<std::string> user_ids, task_ids, llm_ids;
  for (const auto& u : registry.users()) user_ids.insert(u.user_id);
  for (const auto& t : registry.tasks()) task_ids.insert(t.task_id);
  for (const auto& l : registry.llms()) llm_ids.insert(l.llm_id);
  for (const auto& r : dataset.records()) {
    user_ids.insert(r.user_id);
    task_ids.insert(r.task_id);
    llm_ids.insert(r.llm_id);
  }
  for (const auto& id : user_ids) g.users.add(id);
  for (const auto& id : task_ids) g.tasks.add(id);
  for (const auto& id : llm_ids) g.llms.add(id);

  std::set<std::pair<std::size_t, std::size_t>> ut;
  for (const auto& group : dataset.groups()) {
    const std::size_t q = g.queries.size();
    QueryNode node;
    node.key = group.key;
    node.task_id = group.task_id;
    node.text = dataset.record(group, 0).query_text;
    node.user = *g.users.find(group.key.user_id);
    node.task = *g.tasks.find(group.task_id);
    g.query_index.emplace(group.key, q);
    ut.emplace(node.user, node.task);
    g.task_query.push_back({node.task, q});
    g.user_query.push_back({node.user, q});
    std::vector<std::size_t> cand;
    for (std::size_t m : group.members) {
      const auto& r = dataset.records()[m];
      cand.push_back(g.query_llm.size());
      g.query_llm.push_back(
          {q, *g.llms.find(r.llm_id), r.record_id, r.performance, r.raw_cost, r.reward, r.label});
    }
    g.candidates.push_back(std::move(cand));
    g.queries.push_back(std::move(node));
  }
  for (const auto& [u, t] : ut) g.user_task.push_back({u, t});
  g.finalize();
  return g;
}

std::vector<double> one_hot_user(std::size_t user_index, std::size_t width) {
  if (user_index >= width) {
    throw std::out_of_range("one_hot_user: index " + std::to_string(user_index) +
                            " outside width " + std::to_string(width));
  }
  std::vector<double> v(width, 0.0);
  v[user_index] = 1.0;
  return v;
}

const Tensor& FeatureSet::node(NodeKind k) const {
  switch (k) {
    case NodeKind::User: return user;
    case NodeKind::Task: return task;
    case NodeKind::Query: return query;
    case NodeKind::Llm: return llm;
  }
  return user;
}

const Tensor& FeatureSet::edges_for(Relation r) const {
  switch (r) {
    case Relation::TaskToUser:
    case Relation::UserToTask: return user_task;
    case Relation::QueryToTask:
    case Relation::TaskToQuery: return task_query;
    case Relation::QueryToUser:
    case Relation::UserToQuery: return user_query;
    case Relation::LlmToQuery:
    case Relation::QueryToLlm: return query_llm;
  }
  return user_task;
}

namespace {

Tensor embed_rows(const std::vector<std::pair<std::string, std::string>>& items,
                  const EmbeddingProvider& provider) {
  Tensor t(items.size(), provider.dim());
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto v = provider.embed(items[i].first, items[i].second);
    if (v.size() != provider.dim()) {
      throw std::runtime_error("embedding provider returned width " + std::to_string(v.size()) +
                               " for '" + items[i].first + "'");
    }
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!std::isfinite(v[j])) {
        throw std::runtime_error("non-finite embedding for '" + items[i].first + "'");
      }
      t(i, j) = v[j];
    }
  }
  return t;
}

}  // namespace

FeatureSet init_features(const HeteroGraph& graph, const Registry& registry,
                         const EmbeddingProvider& provider, Strategy strategy,
                         const std::set<GroupKey>& visible) {
  FeatureSet f;
  f.strategy = strategy;
  const std::size_t nu = graph.users.size();
  f.user = Tensor(nu, nu);
  for (std::size_t i = 0; i < nu; ++i) f.user(i, i) = 1.0;

  std::vector<std::pair<std::string, std::string>> items;
  for (const auto& id : graph.tasks.ids()) {
    const TaskProfile* t = registry.find_task(id);
    if (!t || t->description.empty()) {
      throw std::runtime_error("missing description for task '" + id + "'");
    }
    items.emplace_back(id, t->description);
  }
  f.task = embed_rows(items, provider);
  items.clear();
  for (const auto& id : graph.llms.ids()) {
    const LlmProfile* l = registry.find_llm(id);
    if (!l || l->description.empty()) {
      throw std::runtime_error("missing description for llm '" + id + "'");
    }
    items.emplace_back(id, l->description);
  }
  f.llm = embed_rows(items, provider);
  items.clear();
  for (const auto& q : graph.queries) items.emplace_back(q.key.query_id, q.text);
  f.query = embed_rows(items, provider);

  f.user_task = Tensor(graph.user_task.size(), 1, 1.0);
  f.task_query = Tensor(graph.task_query.size(), 1, 1.0);
  f.user_query = Tensor(graph.user_query.size(), 1, 1.0);

  const std::size_t width = query_llm_feature_width(strategy);
  f.query_llm = Tensor(graph.query_llm.size(), width);
  for (std::size_t q = 0; q < graph.queries.size(); ++q) {
    if (!visible.count(graph.queries[q].key)) continue;
    const auto& cand = graph.candidates[q];
    if (strategy == Strategy::Judge) {
      for (std::size_t e : cand) f.query_llm(e, 0) = graph.query_llm[e].label == 1 ? 1.0 : 0.0;
      continue;
    }
    std::vector<double> perf, cost;
    for (std::size_t e : cand) {
      perf.push_back(graph.query_llm[e].performance);
      cost.push_back(graph.query_llm[e].raw_cost);
    }
    const auto pn = normalize(perf);
    const auto cn = normalize(cost);
    for (std::size_t i = 0; i < cand.size(); ++i) {
      const auto& edge = graph.query_llm[cand[i]];
      if (!edge.reward) {
        throw std::runtime_error("record '" + edge.record_id +
                                 "' has no reward; cost_eff features need rewards");
      }
      f.query_llm(cand[i], 0) = pn[i];
      f.query_llm(cand[i], 1) = cn[i];
      f.query_llm(cand[i], 2) = *edge.reward;
    }
  }
  return f;
}

}  // namespace prouter
