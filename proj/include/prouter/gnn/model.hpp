#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prouter/core/checkpoint.hpp"
#include "prouter/graph/hetero_graph.hpp"
#include "prouter/numerics/autodiff.hpp"
#include "prouter/numerics/tensor.hpp"

namespace prouter {

// Shape-determining settings of a router model.
struct ModelDims {
  std::size_t num_users = 0;  // one-hot width
  std::size_t embed_dim = 64;
  std::size_t hidden = 32;
  std::size_t layers = 2;
  Strategy strategy = Strategy::Judge;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Parameters, in a fixed order:
//   input.{user,task,query,llm}.{weight,bias}
//   layer{l}.{relation}.{w_node,w_edge,gate}   for every relation
//   layer{l}.update.{user,task,query,llm}
//   combine.fc1.{weight,bias}, combine.fc2.{weight,bias}
class RouterModel {
 public:
  RouterModel() = default;

  // Glorot-uniform weights, zero biases, unit gates.
  static RouterModel initialize(const ModelDims& dims, std::uint64_t seed);

  [[nodiscard]] const ModelDims& dims() const noexcept { return dims_; }
  [[nodiscard]] const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
  [[nodiscard]] std::vector<NamedTensor>& parameters() noexcept { return params_; }
  [[nodiscard]] std::size_t index_of(const std::string& name) const;
  [[nodiscard]] const Tensor& param(const std::string& name) const {
    return params_[index_of(name)].value;
  }
  [[nodiscard]] Tensor& param(const std::string& name) { return params_[index_of(name)].value; }
  [[nodiscard]] std::size_t scalar_count() const noexcept;

  [[nodiscard]] Checkpoint to_checkpoint(std::uint64_t seed) const;
  // Throws CheckpointError on missing, extra or misshapen tensors.
  static RouterModel from_checkpoint(const Checkpoint& ckpt);

  friend bool operator==(const RouterModel& a, const RouterModel& b);

 private:
  void reindex();

  ModelDims dims_;
  std::vector<NamedTensor> params_;
  std::map<std::string, std::size_t> index_;
};

// Expected (name, rows, cols) list for the dims, in parameter order.
struct ParamShape {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
};
[[nodiscard]] std::vector<ParamShape> parameter_shapes(const ModelDims& dims);

using NodeVars = std::array<ad::Var, kNodeKinds>;

// Model parameters placed on a tape, either as trainable leaves or constants.
struct BoundModel {
  const RouterModel* model = nullptr;
  std::vector<ad::Var> vars;

  [[nodiscard]] ad::Var operator[](const std::string& name) const {
    return vars[model->index_of(name)];
  }
};
[[nodiscard]] BoundModel bind(ad::Tape& tape, const RouterModel& model, bool trainable);

// One round of message passing. For every node kind:
//   out = H_kind * (mean over incoming edges of relu(gate_r * W_r [h_src ; e]) ; h_self)
// where the mean runs over the union of incoming relations and is zero for
// nodes without neighbors.
[[nodiscard]] NodeVars layer_forward(ad::Tape& tape, const BoundModel& m, std::size_t layer,
                                     const HeteroGraph& graph,
                                     const std::array<ad::Var, kRelations>& edge_features,
                                     const NodeVars& in);

// Input projection followed by every layer. Entry 0 is the projected input;
// entry l is the output of layer l. `query_llm` replaces the feature set's
// query–llm rows (used for batch masking).
[[nodiscard]] std::vector<NodeVars> encode(ad::Tape& tape, const BoundModel& m,
                                           const HeteroGraph& graph, const FeatureSet& features,
                                           const Tensor& query_llm);

// Index structures for scoring a list of query nodes.
struct ScoringPlan {
  RowIndex user;        // per scored query -> user node
  RowIndex task;        // per scored query -> task node
  RowIndex query;       // per scored query -> query node
  RowIndex edge_query;  // per candidate edge -> position in the scored list
  RowIndex edge_llm;    // per candidate edge -> llm node
  ad::GroupLayout layout;
  std::vector<std::size_t> edges;  // query_llm edge ids, grouped
};
[[nodiscard]] ScoringPlan make_scoring_plan(const HeteroGraph& graph,
                                            std::span<const std::size_t> query_nodes);

// MLP(concat(h_u, h_t, h_q)) with one ReLU hidden layer.
[[nodiscard]] ad::Var combine_uqt(ad::Tape& tape, const BoundModel& m, ad::Var h_u, ad::Var h_t,
                                  ad::Var h_q);

// Logits of every candidate edge in the plan, n_edges x 1.
[[nodiscard]] ad::Var score_plan(ad::Tape& tape, const BoundModel& m, const NodeVars& last,
                                 const ScoringPlan& plan);

// Plain helpers on finished values.
[[nodiscard]] std::vector<double> score_candidates(std::span<const double> h_uqt,
                                                   const Tensor& candidate_llm_embeddings);
// Argmax, lowest index on ties. Throws on empty input or NaN.
[[nodiscard]] std::size_t select_llm(std::span<const double> logits);
// -log softmax(logits)[label].
[[nodiscard]] double group_loss(std::span<const double> logits, std::size_t label);

}  // namespace prouter
