#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "prouter/core/dataset.hpp"
#include "prouter/graph/embedding.hpp"
#include "prouter/numerics/kernels.hpp"
#include "prouter/numerics/tensor.hpp"

namespace prouter {

enum class NodeKind { User = 0, Task = 1, Query = 2, Llm = 3 };
inline constexpr std::size_t kNodeKinds = 4;

[[nodiscard]] const char* to_string(NodeKind k) noexcept;

// How the query–llm edge features are derived.
enum class Strategy { CostEff, Judge };

[[nodiscard]] std::string to_string(Strategy s);
[[nodiscard]] Strategy strategy_from_string(const std::string& s);
// Width of a query–llm edge feature row under the strategy.
[[nodiscard]] std::size_t query_llm_feature_width(Strategy s) noexcept;

class NodeTable {
 public:
  std::size_t add(const std::string& id);
  [[nodiscard]] std::optional<std::size_t> find(const std::string& id) const;
  [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
  [[nodiscard]] const std::string& id(std::size_t i) const { return ids_.at(i); }
  [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::map<std::string, std::size_t> index_;
};

// Query nodes are per candidate group: the same query text asked by two users
// gives two nodes, so each query–llm edge is one interaction record.
struct QueryNode {
  GroupKey key;
  std::string task_id;
  std::string text;
  std::size_t user = 0;
  std::size_t task = 0;
};

struct QueryLlmEdge {
  std::size_t query = 0;
  std::size_t llm = 0;
  std::string record_id;
  double performance = 0.0;
  double raw_cost = 0.0;
  std::optional<double> reward;
  int label = 0;
};

struct EdgePair {
  std::size_t a = 0;
  std::size_t b = 0;
  friend bool operator==(const EdgePair&, const EdgePair&) = default;
};

// Directed message relations. Every undirected edge kind carries messages
// both ways with its own parameters.
enum class Relation {
  TaskToUser = 0,
  QueryToUser,
  UserToTask,
  QueryToTask,
  TaskToQuery,
  UserToQuery,
  LlmToQuery,
  QueryToLlm,
};
inline constexpr std::size_t kRelations = 8;
inline constexpr std::array<Relation, kRelations> kAllRelations = {
    Relation::TaskToUser,  Relation::QueryToUser, Relation::UserToTask, Relation::QueryToTask,
    Relation::TaskToQuery, Relation::UserToQuery, Relation::LlmToQuery, Relation::QueryToLlm};

[[nodiscard]] const char* to_string(Relation r) noexcept;
[[nodiscard]] NodeKind source_kind(Relation r) noexcept;
[[nodiscard]] NodeKind target_kind(Relation r) noexcept;

// Message rows of one relation, one per underlying edge in edge-list order.
struct Adjacency {
  Relation relation{};
  RowIndex source;     // edge -> source node
  Segments by_target;  // target node -> its incoming edges, ascending
};

class HeteroGraph {
 public:
  NodeTable users;
  NodeTable tasks;
  NodeTable llms;
  std::vector<QueryNode> queries;
  std::map<GroupKey, std::size_t> query_index;

  std::vector<EdgePair> user_task;   // (user, task)
  std::vector<EdgePair> task_query;  // (task, query)
  std::vector<EdgePair> user_query;  // (user, query)
  std::vector<QueryLlmEdge> query_llm;
  // Query node -> its query_llm edge ids in candidate order.
  std::vector<std::vector<std::size_t>> candidates;

  [[nodiscard]] std::size_t node_count(NodeKind k) const noexcept;
  [[nodiscard]] std::size_t total_nodes() const noexcept;
  [[nodiscard]] std::size_t total_edges() const noexcept;

  [[nodiscard]] const Adjacency& adjacency(Relation r) const {
    return adjacency_[static_cast<std::size_t>(r)];
  }
  // 1 / (number of incoming messages over all relations); 0 for isolated nodes.
  [[nodiscard]] const std::vector<double>& inverse_degree(NodeKind k) const {
    return inverse_degree_[static_cast<std::size_t>(k)];
  }
  [[nodiscard]] std::optional<std::size_t> find_query(const GroupKey& key) const;

  // Rebuilds adjacency and degrees from the edge lists.
  void finalize();

 private:
  std::array<Adjacency, kRelations> adjacency_{};
  std::array<std::vector<double>, kNodeKinds> inverse_degree_{};
};

// One node per registry user, task and LLM (sorted by id) plus one query node
// per candidate group. Edges: user–task per (user, task) with a record,
// task–query and user–query per group, query–llm per record. With an empty
// registry the node sets come from the dataset alone.
[[nodiscard]] HeteroGraph build_graph(const Dataset& dataset, const Registry& registry);

struct FeatureSet {
  Strategy strategy = Strategy::Judge;
  Tensor user;   // one-hot, num_users x num_users
  Tensor task;   // num_tasks x embed_dim
  Tensor query;  // num_queries x embed_dim
  Tensor llm;    // num_llms x embed_dim
  // Edge features per edge kind, rows in edge-list order.
  Tensor user_task;
  Tensor task_query;
  Tensor user_query;
  Tensor query_llm;

  [[nodiscard]] const Tensor& node(NodeKind k) const;
  [[nodiscard]] const Tensor& edges_for(Relation r) const;
};

// Node features from the provider (descriptions for tasks and LLMs, query text
// for queries) and one-hot users. user–task, task–query and user–query edges
// carry 1.0. query–llm edges carry label-derived values only for groups in
// `visible`; all other query–llm rows are zero so labels cannot leak.
//   cost_eff: [performance_norm, cost_norm, reward] with per-group min-max
//   judge:    [best-answer indicator]
[[nodiscard]] FeatureSet init_features(const HeteroGraph& graph, const Registry& registry,
                                       const EmbeddingProvider& provider, Strategy strategy,
                                       const std::set<GroupKey>& visible);

[[nodiscard]] std::vector<double> one_hot_user(std::size_t user_index, std::size_t width);

}  // namespace prouter
