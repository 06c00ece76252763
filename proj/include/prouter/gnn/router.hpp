#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "prouter/gnn/model.hpp"
#include "prouter/numerics/grad_check.hpp"

namespace prouter {

struct TrainConfig {
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t batch_size = 32;
  int epochs = 400;
  double initial_lr = 1e-3;
  std::uint64_t seed = 7;
  std::size_t embed_dim = 64;
  Strategy strategy = Strategy::Judge;
  // Stop after this many epochs without a validation improvement; 0 disables.
  int patience = 0;
};

// Throws std::invalid_argument on non-positive sizes or rates.
void validate(const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_metric = 0.0;
};
[[nodiscard]] std::string format_epoch(const EpochLog& e);

struct TrainResult {
  RouterModel model;  // parameters of the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_metric = 0.0;
};

// Validation metric: accuracy for judge data, mean reward of the selected
// candidate for cost-efficiency data.
[[nodiscard]] double selection_metric(const HeteroGraph& graph,
                                      std::span<const std::size_t> query_nodes,
                                      const std::vector<std::vector<double>>& logits,
                                      Strategy strategy);

// Seeded shuffle of the training groups each epoch, batches of
// config.batch_size, one full-graph forward per batch with the batch's own
// query–llm features zeroed, grouped softmax cross-entropy, Adam with a
// linearly decaying rate. Throws on an empty training split or a non-finite
// loss.
[[nodiscard]] TrainResult train(const HeteroGraph& graph, const FeatureSet& features,
                                const std::vector<GroupKey>& train_keys,
                                const std::vector<GroupKey>& val_keys, const TrainConfig& config,
                                const std::function<void(const EpochLog&)>& on_epoch = {});

// Mean grouped loss of the given query nodes, plus its gradient flattened in
// parameter order when `grad` is non-null.
[[nodiscard]] double model_loss(const RouterModel& model, const HeteroGraph& graph,
                                const FeatureSet& features, std::span<const std::size_t> query_nodes,
                                std::vector<double>* grad = nullptr);

// Central-difference check of every model parameter.
[[nodiscard]] GradCheckResult check_model_gradients(const RouterModel& model,
                                                    const HeteroGraph& graph,
                                                    const FeatureSet& features,
                                                    std::span<const std::size_t> query_nodes,
                                                    double eps = 1e-5);

struct GraphBundle {
  HeteroGraph graph;
  FeatureSet features;
};

// Graph over `data` with query–llm features filled in for `visible` groups.
[[nodiscard]] GraphBundle build_bundle(const Dataset& data, const Registry& registry,
                                       const EmbeddingProvider& provider, Strategy strategy,
                                       const std::set<GroupKey>& visible);

// Frozen model plus graph with every layer's node embeddings precomputed.
// Immutable after construction.
class InferenceContext {
 public:
  InferenceContext(std::shared_ptr<const RouterModel> model, GraphBundle bundle);

  [[nodiscard]] const RouterModel& model() const noexcept { return *model_; }
  [[nodiscard]] const HeteroGraph& graph() const noexcept { return bundle_.graph; }
  [[nodiscard]] const FeatureSet& features() const noexcept { return bundle_.features; }
  // layers()[l][kind]: embeddings after l rounds of message passing.
  [[nodiscard]] const std::vector<std::array<Tensor, kNodeKinds>>& layers() const noexcept {
    return layers_;
  }

  // Candidate logits per group, in the group's candidate order.
  [[nodiscard]] std::vector<std::vector<double>> score_groups(const std::vector<GroupKey>& keys) const;
  [[nodiscard]] std::vector<std::vector<double>> score_nodes(std::span<const std::size_t> queries) const;
  // h_uqt rows for the groups.
  [[nodiscard]] Tensor uqt(const std::vector<GroupKey>& keys) const;

  // Scores every LLM node for an unseen query. The query gets a transient
  // node that receives messages from its task, its user and every LLM (with
  // zero query–llm features) and sends none.
  [[nodiscard]] std::vector<double> score_transient(std::size_t user, std::size_t task,
                                                    std::span<const double> query_feature) const;

 private:
  std::shared_ptr<const RouterModel> model_;
  GraphBundle bundle_;
  std::vector<std::array<Tensor, kNodeKinds>> layers_;
};

// Inserts the auxiliary records as visible edges on top of `base` and
// returns a fresh context. Parameters are not touched. Throws when an
// auxiliary group is also a test group.
[[nodiscard]] InferenceContext adapt_few_shot(std::shared_ptr<const RouterModel> model,
                                              const Dataset& base, const std::set<GroupKey>& visible,
                                              const std::vector<InteractionRecord>& auxiliary,
                                              const std::vector<GroupKey>& test_keys,
                                              const Registry& registry,
                                              const EmbeddingProvider& provider);

// Writes final-layer LLM embeddings and h_uqt rows for the requested groups
// as line-delimited {"id", "kind", "vector"} objects.
void export_embeddings(const InferenceContext& context, const std::vector<GroupKey>& combos,
                       const std::filesystem::path& path);

}  // namespace prouter
