#include "prouter/gnn/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "prouter/numerics/rng.hpp"

namespace prouter {

namespace {

constexpr std::array<NodeKind, kNodeKinds> kKinds = {NodeKind::User, NodeKind::Task,
                                                     NodeKind::Query, NodeKind::Llm};

std::size_t edge_width(Relation r, Strategy s) {
  return (r == Relation::LlmToQuery || r == Relation::QueryToLlm) ? query_llm_feature_width(s) : 1;
}

std::size_t input_width(NodeKind k, const ModelDims& d) {
  return k == NodeKind::User ? d.num_users : d.embed_dim;
}

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

}  // namespace

std::vector<ParamShape> parameter_shapes(const ModelDims& d) {
  std::vector<ParamShape> s;
  const std::size_t h = d.hidden;
  for (NodeKind k : kKinds) {
    const std::string p = std::string("input.") + to_string(k);
    s.push_back({p + ".weight", h, input_width(k, d)});
    s.push_back({p + ".bias", 1, h});
  }
  for (std::size_t l = 0; l < d.layers; ++l) {
    const std::string p = layer_prefix(l);
    for (Relation r : kAllRelations) {
      const std::string q = p + "." + to_string(r);
      s.push_back({q + ".w_node", h, h});
      s.push_back({q + ".w_edge", h, edge_width(r, d.strategy)});
      s.push_back({q + ".gate", 1, 1});
    }
    for (NodeKind k : kKinds) s.push_back({p + ".update." + to_string(k), h, 2 * h});
  }
  s.push_back({"combine.fc1.weight", h, 3 * h});
  s.push_back({"combine.fc1.bias", 1, h});
  s.push_back({"combine.fc2.weight", h, h});
  s.push_back({"combine.fc2.bias", 1, h});
  return s;
}

RouterModel RouterModel::initialize(const ModelDims& dims, std::uint64_t seed) {
  if (dims.num_users == 0 || dims.embed_dim == 0 || dims.hidden == 0 || dims.layers == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  RouterModel m;
  m.dims_ = dims;
  Rng rng(mix_seed(seed, 0x696e6974ULL));
  for (const auto& shape : parameter_shapes(dims)) {
    Tensor t(shape.rows, shape.cols, 0.0);
    const bool is_gate = shape.name.ends_with(".gate");
    const bool is_bias = shape.name.ends_with(".bias");
    if (is_gate) {
      t.fill(1.0);
    } else if (!is_bias) {
      const double a = std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
      for (double& x : t.data()) x = rng.uniform(-a, a);
    }
    m.params_.push_back({shape.name, std::move(t)});
  }
  m.reindex();
  return m;
}

void RouterModel::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
}

std::size_t RouterModel::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

std::size_t RouterModel::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

bool operator==(const RouterModel& a, const RouterModel& b) {
  if (!(a.dims_ == b.dims_) || a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) {
      return false;
    }
  }
  return true;
}

Checkpoint RouterModel::to_checkpoint(std::uint64_t seed) const {
  Checkpoint c;
  c.seed = seed;
  c.dims = {{"num_users", static_cast<long long>(dims_.num_users)},
            {"embed_dim", static_cast<long long>(dims_.embed_dim)},
            {"hidden", static_cast<long long>(dims_.hidden)},
            {"layers", static_cast<long long>(dims_.layers)}};
  c.meta = {{"strategy", to_string(dims_.strategy)}};
  c.tensors = params_;
  return c;
}

RouterModel RouterModel::from_checkpoint(const Checkpoint& ckpt) {
  ModelDims d;
  auto positive = [&](const char* key) {
    const long long v = ckpt.dim(key);
    if (v <= 0) throw CheckpointError(std::string("checkpoint dim '") + key + "' must be positive");
    return static_cast<std::size_t>(v);
  };
  d.num_users = positive("num_users");
  d.embed_dim = positive("embed_dim");
  d.hidden = positive("hidden");
  d.layers = positive("layers");
  try {
    d.strategy = strategy_from_string(ckpt.meta_value("strategy", "judge"));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(e.what());
  }
  const auto shapes = parameter_shapes(d);
  if (shapes.size() != ckpt.tensors.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                          " tensors, architecture expects " + std::to_string(shapes.size()));
  }
  RouterModel m;
  m.dims_ = d;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& t = ckpt.tensors[i];
    if (t.name != shapes[i].name) {
      throw CheckpointError("tensor " + std::to_string(i) + " is '" + t.name + "', expected '" +
                            shapes[i].name + "'");
    }
    if (t.value.rows() != shapes[i].rows || t.value.cols() != shapes[i].cols) {
      throw CheckpointError("tensor '" + t.name + "' has shape " + t.value.shape_string() +
                            ", expected " + std::to_string(shapes[i].rows) + "x" +
                            std::to_string(shapes[i].cols));
    }
    if (!all_finite(t.value)) throw CheckpointError("tensor '" + t.name + "' is not finite");
    m.params_.push_back(t);
  }
  m.reindex();
  return m;
}

BoundModel bind(ad::Tape& tape, const RouterModel& model, bool trainable) {
  BoundModel b{&model, {}};
  b.vars.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) {
    b.vars.push_back(trainable ? tape.parameter(p.value) : tape.constant(p.value));
  }
  return b;
}

NodeVars layer_forward(ad::Tape& tape, const BoundModel& m, std::size_t layer,
                       const HeteroGraph& graph,
                       const std::array<ad::Var, kRelations>& edge_features, const NodeVars& in) {
  const std::size_t h = m.model->dims().hidden;
  for (NodeKind k : kKinds) {
    const auto& v = tape.value(in[static_cast<std::size_t>(k)]);
    if (v.rows() != graph.node_count(k) || v.cols() != h) {
      throw std::invalid_argument(std::string("layer input for ") + to_string(k) + " has shape " +
                                  v.shape_string() + ", expected " +
                                  std::to_string(graph.node_count(k)) + "x" + std::to_string(h));
    }
  }
  const std::string p = layer_prefix(layer) + ".";
  std::array<std::optional<ad::Var>, kNodeKinds> agg;
  for (Relation r : kAllRelations) {
    const auto src = static_cast<std::size_t>(source_kind(r));
    const auto dst = static_cast<std::size_t>(target_kind(r));
    const Adjacency& adj = graph.adjacency(r);
    const std::string q = p + to_string(r);
    ad::Var node_part = ad::linear(tape, in[src], m[q + ".w_node"]);
    ad::Var pooled = ad::gated_message_mean(tape, node_part, edge_features[static_cast<std::size_t>(r)],
                                            m[q + ".w_edge"], m[q + ".gate"], adj.source,
                                            adj.by_target, graph.inverse_degree(target_kind(r)));
    agg[dst] = agg[dst] ? ad::add(tape, *agg[dst], pooled) : pooled;
  }
  NodeVars out;
  for (NodeKind k : kKinds) {
    const auto i = static_cast<std::size_t>(k);
    ad::Var neigh = agg[i] ? *agg[i] : tape.constant(Tensor(graph.node_count(k), h, 0.0));
    const std::array<ad::Var, 2> parts = {neigh, in[i]};
    out[i] = ad::linear(tape, ad::concat_cols(tape, parts), m[p + "update." + to_string(k)]);
  }
  return out;
}

std::vector<NodeVars> encode(ad::Tape& tape, const BoundModel& m, const HeteroGraph& graph,
                             const FeatureSet& features, const Tensor& query_llm) {
  const ModelDims& d = m.model->dims();
  if (features.user.cols() != d.num_users) {
    throw std::invalid_argument("user feature width " + std::to_string(features.user.cols()) +
                                " does not match the model's " + std::to_string(d.num_users));
  }
  if (query_llm.rows() != graph.query_llm.size() ||
      query_llm.cols() != query_llm_feature_width(d.strategy)) {
    throw std::invalid_argument("query-llm features have shape " + query_llm.shape_string());
  }
  NodeVars x;
  for (NodeKind k : kKinds) {
    const std::string p = std::string("input.") + to_string(k);
    ad::Var raw = tape.constant(features.node(k));
    x[static_cast<std::size_t>(k)] =
        ad::add_bias(tape, ad::linear(tape, raw, m[p + ".weight"]), m[p + ".bias"]);
  }
  std::array<ad::Var, kRelations> edges;
  for (Relation r : kAllRelations) {
    const bool ql = r == Relation::LlmToQuery || r == Relation::QueryToLlm;
    edges[static_cast<std::size_t>(r)] = tape.constant(ql ? query_llm : features.edges_for(r));
  }
  std::vector<NodeVars> layers{x};
  for (std::size_t l = 0; l < d.layers; ++l) {
    layers.push_back(layer_forward(tape, m, l, graph, edges, layers.back()));
  }
  return layers;
}

ScoringPlan make_scoring_plan(const HeteroGraph& graph, std::span<const std::size_t> query_nodes) {
  ScoringPlan plan;
  std::vector<std::size_t> users, tasks, queries, edge_query, edge_llm;
  for (std::size_t pos = 0; pos < query_nodes.size(); ++pos) {
    const std::size_t q = query_nodes[pos];
    if (q >= graph.queries.size()) throw std::out_of_range("query node out of range");
    const auto& cand = graph.candidates[q];
    if (cand.empty()) throw std::invalid_argument("query node without candidates");
    users.push_back(graph.queries[q].user);
    tasks.push_back(graph.queries[q].task);
    queries.push_back(q);
    std::size_t label = cand.size();
    for (std::size_t i = 0; i < cand.size(); ++i) {
      const auto& e = graph.query_llm[cand[i]];
      if (e.label == 1 && label == cand.size()) label = i;
      plan.edges.push_back(cand[i]);
      edge_query.push_back(pos);
      edge_llm.push_back(e.llm);
    }
    plan.layout.label.push_back(label == cand.size() ? 0 : label);
    plan.layout.offsets.push_back(plan.edges.size());
  }
  plan.user = RowIndex::build(std::move(users), graph.node_count(NodeKind::User));
  plan.task = RowIndex::build(std::move(tasks), graph.node_count(NodeKind::Task));
  plan.query = RowIndex::build(std::move(queries), graph.node_count(NodeKind::Query));
  plan.edge_query = RowIndex::build(std::move(edge_query), query_nodes.size());
  plan.edge_llm = RowIndex::build(std::move(edge_llm), graph.node_count(NodeKind::Llm));
  return plan;
}

ad::Var combine_uqt(ad::Tape& tape, const BoundModel& m, ad::Var h_u, ad::Var h_t, ad::Var h_q) {
  const std::size_t h = m.model->dims().hidden;
  for (ad::Var v : {h_u, h_t, h_q}) {
    if (tape.value(v).cols() != h) {
      throw std::invalid_argument("combine input width " + std::to_string(tape.value(v).cols()) +
                                  " != hidden " + std::to_string(h));
    }
  }
  const std::array<ad::Var, 3> parts = {h_u, h_t, h_q};
  ad::Var z = ad::concat_cols(tape, parts);
  z = ad::relu(tape, ad::add_bias(tape, ad::linear(tape, z, m["combine.fc1.weight"]),
                                  m["combine.fc1.bias"]));
  return ad::add_bias(tape, ad::linear(tape, z, m["combine.fc2.weight"]), m["combine.fc2.bias"]);
}

ad::Var score_plan(ad::Tape& tape, const BoundModel& m, const NodeVars& last,
                   const ScoringPlan& plan) {
  ad::Var hu = ad::gather_rows(tape, last[static_cast<std::size_t>(NodeKind::User)], plan.user);
  ad::Var ht = ad::gather_rows(tape, last[static_cast<std::size_t>(NodeKind::Task)], plan.task);
  ad::Var hq = ad::gather_rows(tape, last[static_cast<std::size_t>(NodeKind::Query)], plan.query);
  ad::Var uqt = combine_uqt(tape, m, hu, ht, hq);
  ad::Var left = ad::gather_rows(tape, uqt, plan.edge_query);
  ad::Var right = ad::gather_rows(tape, last[static_cast<std::size_t>(NodeKind::Llm)], plan.edge_llm);
  return ad::rowwise_dot(tape, left, right);
}

std::vector<double> score_candidates(std::span<const double> h_uqt,
                                     const Tensor& candidate_llm_embeddings) {
  if (candidate_llm_embeddings.rows() == 0) throw std::invalid_argument("empty candidate set");
  if (candidate_llm_embeddings.cols() != h_uqt.size()) {
    throw std::invalid_argument("candidate width differs from h_uqt width");
  }
  std::vector<double> out(candidate_llm_embeddings.rows(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = candidate_llm_embeddings.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < h_uqt.size(); ++j) acc += h_uqt[j] * row[j];
    out[i] = acc;
  }
  return out;
}

std::size_t select_llm(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("select_llm: empty scores");
  std::size_t best = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (std::isnan(logits[i])) throw std::domain_error("select_llm: NaN logit");
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

double group_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw std::out_of_range("group_loss: label index out of range");
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z);
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  return -(logits[label] - mx - std::log(s));
}

}  // namespace prouter
