#include "prouter/gnn/toy.hpp"

#include <set>

#include "prouter/graph/embedding.hpp"
#include "prouter/numerics/rng.hpp"

namespace prouter {

ToyProblem make_toy_problem(Strategy strategy, std::uint64_t seed) {
  constexpr std::size_t kWidth = 4;
  const bool cost = strategy == Strategy::CostEff;
  std::vector<LlmProfile> llms = {
      {"small", "Small", "1B", 0.1, "small fast model"},
      {"medium", "Medium", "8B", 0.3, "balanced general model"},
      {"large", "Large", "70B", 0.9, "large careful model"},
  };
  std::vector<TaskProfile> tasks = {
      {"math", MetricName::Accuracy, "grade school math word problems"},
      {"news", MetricName::F1, "multi document news summarization"},
  };
  std::vector<UserProfile> users;
  if (cost) {
    users = {{"u1", UserKind::WeightPair, 0.2, 0.8, ""}, {"u2", UserKind::WeightPair, 1.0, 0.0, ""}};
  } else {
    users = {{"u1", UserKind::Judged, std::nullopt, std::nullopt, "prefers short answers"},
             {"u2", UserKind::Judged, std::nullopt, std::nullopt, "prefers detail"}};
  }

  struct G {
    const char* user;
    const char* task;
    const char* query;
    const char* text;
  };
  const G groups[] = {{"u1", "math", "math-q1", "add two numbers"},
                      {"u1", "news", "news-q1", "summarize the election"},
                      {"u2", "math", "math-q1", "add two numbers"},
                      {"u2", "news", "news-q2", "summarize the storm"}};

  Rng rng(mix_seed(seed, 0x746f79ULL));
  std::vector<InteractionRecord> records;
  for (const auto& g : groups) {
    const UserProfile& u = g.user[1] == '1' ? users[0] : users[1];
    std::vector<InteractionRecord> rows;
    for (const auto& m : llms) {
      InteractionRecord r;
      r.record_id = std::string(g.user) + ":" + g.query + ":" + m.llm_id;
      r.user_id = g.user;
      r.task_id = g.task;
      r.query_id = g.query;
      r.query_text = g.text;
      r.llm_id = m.llm_id;
      r.performance = rng.uniform();
      r.raw_cost = m.price_per_million_tokens * rng.uniform(0.5, 1.5) * 1e-3;
      if (cost) r.reward = *u.alpha * r.performance - *u.beta * r.raw_cost * 1e3;
      rows.push_back(r);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double a = cost ? *rows[i].reward : rows[i].performance;
      const double b = cost ? *rows[best].reward : rows[best].performance;
      if (a > b) best = i;
    }
    rows[best].label = 1;
    records.insert(records.end(), rows.begin(), rows.end());
  }

  ToyProblem p;
  p.registry = Registry(std::move(llms), std::move(tasks), std::move(users));
  p.dataset = Dataset::from_records(std::move(records));
  const HashingEmbedder provider(kWidth, seed);
  const std::set<GroupKey> visible = {{"u1", "math-q1"}, {"u2", "news-q2"}};
  p.bundle = build_bundle(p.dataset, p.registry, provider, strategy, visible);
  ModelDims dims;
  dims.num_users = p.registry.users().size();
  dims.embed_dim = kWidth;
  dims.hidden = kWidth;
  dims.layers = 2;
  dims.strategy = strategy;
  p.model = RouterModel::initialize(dims, seed);
  for (std::size_t q = 0; q < p.bundle.graph.queries.size(); ++q) p.query_nodes.push_back(q);
  return p;
}

}  // namespace prouter
