#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "prouter/graph/hetero_graph.hpp"
#include "prouter/numerics/rng.hpp"
#include "support.hpp"

using namespace prouter;
using testing::rec;

namespace {

// Random dataset over the small registry: each (user, query) group gets a
// random nonempty subset of LLMs with one label-1 record.
Dataset random_dataset(std::uint64_t seed) {
  Rng rng(seed);
  const char* llms[] = {"m1", "m2", "m3"};
  std::vector<InteractionRecord> rs;
  for (const char* u : {"u1", "u2"}) {
    const std::size_t nq = 1 + rng.index(6);
    for (std::size_t q = 0; q < nq; ++q) {
      const std::string qid = "q" + std::to_string(rng.index(8));
      bool dup = false;
      for (const auto& r : rs) dup |= r.user_id == u && r.query_id == qid;
      if (dup) continue;
      const std::string task = rng.index(2) ? "t1" : "t2";
      std::vector<std::string> picked;
      for (const char* m : llms) {
        if (rng.uniform() < 0.7) picked.push_back(m);
      }
      if (picked.empty()) picked.push_back("m2");
      const std::size_t best = rng.index(picked.size());
      for (std::size_t i = 0; i < picked.size(); ++i) {
        auto r = rec(u, qid, picked[i], i == best ? 1 : 0, task, rng.uniform(), rng.uniform(0, 0.1));
        r.reward = rng.normal();
        rs.push_back(r);
      }
    }
  }
  return Dataset::from_records(rs);
}

}  // namespace

TEST_CASE("node and edge counts match a direct count") {
  const Registry reg = testing::small_registry();
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const Dataset d = random_dataset(seed);
    const HeteroGraph g = build_graph(d, reg);

    std::set<std::pair<std::string, std::string>> ut;
    for (const auto& r : d.records()) ut.emplace(r.user_id, r.task_id);
    CHECK(g.node_count(NodeKind::User) == 2);
    CHECK(g.node_count(NodeKind::Task) == 2);
    CHECK(g.node_count(NodeKind::Llm) == 3);
    CHECK(g.node_count(NodeKind::Query) == d.groups().size());
    CHECK(g.user_task.size() == ut.size());
    CHECK(g.task_query.size() == d.groups().size());
    CHECK(g.user_query.size() == d.groups().size());
    CHECK(g.query_llm.size() == d.records().size());
    CHECK(g.total_edges() ==
          ut.size() + 2 * d.groups().size() + d.records().size());

    // each directed relation carries one message per underlying edge
    for (Relation r : kAllRelations) {
      const Adjacency& adj = g.adjacency(r);
      CHECK(adj.source.index.size() == adj.by_target.items.size());
    }
    // inverse degree is 1 / total incoming
    std::vector<std::size_t> qdeg(g.queries.size(), 0);
    for (const auto& e : g.task_query) ++qdeg[e.b];
    for (const auto& e : g.user_query) ++qdeg[e.b];
    for (const auto& e : g.query_llm) ++qdeg[e.query];
    for (std::size_t q = 0; q < qdeg.size(); ++q) {
      CHECK(g.inverse_degree(NodeKind::Query)[q] == doctest::Approx(1.0 / qdeg[q]));
    }
  }
}

TEST_CASE("two users asking the same query text get separate query nodes") {
  const Dataset d = Dataset::from_records(
      {rec("u1", "q1", "m1", 1), rec("u1", "q1", "m2", 0), rec("u2", "q1", "m1", 0),
       rec("u2", "q1", "m2", 1)});
  const HeteroGraph g = build_graph(d, testing::small_registry());
  REQUIRE(g.queries.size() == 2);
  CHECK(g.queries[0].user != g.queries[1].user);
  CHECK(g.find_query({"u2", "q1"}).has_value());
  CHECK_FALSE(g.find_query({"u2", "q9"}).has_value());
}

TEST_CASE("isolated nodes have zero inverse degree") {
  const Dataset d = Dataset::from_records({rec("u1", "q1", "m1", 1)});
  const HeteroGraph g = build_graph(d, testing::small_registry());
  const auto u2 = *g.users.find("u2");
  const auto m3 = *g.llms.find("m3");
  CHECK(g.inverse_degree(NodeKind::User)[u2] == 0.0);
  CHECK(g.inverse_degree(NodeKind::Llm)[m3] == 0.0);
}

TEST_CASE("one-hot user vectors") {
  CHECK(one_hot_user(0, 3) == std::vector<double>{1, 0, 0});
  CHECK(one_hot_user(2, 3) == std::vector<double>{0, 0, 1});
  CHECK(one_hot_user(0, 1) == std::vector<double>{1});
  CHECK_THROWS_AS(one_hot_user(3, 3), std::out_of_range);
}

TEST_CASE("query-llm features are zero outside the visible set") {
  const Registry reg = testing::small_registry();
  const HashingEmbedder emb(8, 3);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dataset d = random_dataset(seed);
    const HeteroGraph g = build_graph(d, reg);
    std::set<GroupKey> visible;
    for (std::size_t i = 0; i < d.groups().size(); i += 2) visible.insert(d.groups()[i].key);
    for (Strategy s : {Strategy::CostEff, Strategy::Judge}) {
      const FeatureSet f = init_features(g, reg, emb, s, visible);
      CHECK(f.query_llm.cols() == query_llm_feature_width(s));
      for (std::size_t e = 0; e < g.query_llm.size(); ++e) {
        const bool vis = visible.count(g.queries[g.query_llm[e].query].key) > 0;
        bool any = false;
        for (double v : f.query_llm.row(e)) any |= v != 0.0;
        if (!vis) CHECK_FALSE(any);
        if (vis && s == Strategy::Judge) {
          CHECK(f.query_llm(e, 0) == static_cast<double>(g.query_llm[e].label));
        }
        if (vis && s == Strategy::CostEff) {
          CHECK(f.query_llm(e, 0) >= 0.0);
          CHECK(f.query_llm(e, 0) <= 1.0);
          CHECK(f.query_llm(e, 1) >= 0.0);
          CHECK(f.query_llm(e, 1) <= 1.0);
          CHECK(f.query_llm(e, 2) == *g.query_llm[e].reward);
        }
      }
    }
  }
}

TEST_CASE("features are deterministic and users are one-hot") {
  const Registry reg = testing::small_registry();
  const Dataset d = random_dataset(7);
  const HeteroGraph g = build_graph(d, reg);
  const HashingEmbedder emb(16, 5);
  std::set<GroupKey> all;
  for (const auto& grp : d.groups()) all.insert(grp.key);
  const FeatureSet a = init_features(g, reg, emb, Strategy::CostEff, all);
  const FeatureSet b = init_features(g, reg, emb, Strategy::CostEff, all);
  CHECK(a.query == b.query);
  CHECK(a.task == b.task);
  CHECK(a.llm == b.llm);
  CHECK(a.query_llm == b.query_llm);
  for (std::size_t i = 0; i < a.user.rows(); ++i) {
    for (std::size_t j = 0; j < a.user.cols(); ++j) CHECK(a.user(i, j) == (i == j ? 1.0 : 0.0));
  }
  CHECK(a.user_task.values() == std::vector<double>(g.user_task.size(), 1.0));
}

TEST_CASE("hashing embedder is unit length, deterministic and seed dependent") {
  const HashingEmbedder a(32, 1), b(32, 1), c(32, 2);
  const auto va = a.embed("q", "What is the capital of France?");
  CHECK(va == b.embed("q", "What is the capital of France?"));
  CHECK(va != c.embed("q", "What is the capital of France?"));
  double n = 0;
  for (double x : va) n += x * x;
  CHECK(std::sqrt(n) == doctest::Approx(1.0));
  const auto empty = a.embed("q", "");
  CHECK(empty == std::vector<double>(32, 0.0));
  CHECK(tokenize_words("Hello, World!  x2") == std::vector<std::string>{"hello", "world", "x2"});
}

TEST_CASE("missing descriptions are reported") {
  const Registry bare({{"m1", "M1", "", 0.1, ""}}, {{"t1", MetricName::F1, "x"}},
                      {{"u1", UserKind::WeightPair, 0.5, 0.5, ""}});
  const Dataset d = Dataset::from_records({rec("u1", "q1", "m1", 1)});
  const HeteroGraph g = build_graph(d, bare);
  CHECK_THROWS_WITH_AS(init_features(g, bare, HashingEmbedder(4, 1), Strategy::Judge, {}),
                       "missing description for llm 'm1'", std::runtime_error);
}

TEST_CASE("single group with three candidates") {
  const Registry reg({{"m1", "M1", "", 0.1, "a"}, {"m2", "M2", "", 0.2, "b"}, {"m3", "M3", "", 0.3, "c"}},
                     {{"t1", MetricName::F1, "x"}}, {{"u1", UserKind::WeightPair, 0.5, 0.5, ""}});
  const Dataset d = Dataset::from_records(
      {rec("u1", "q1", "m1", 0), rec("u1", "q1", "m2", 1), rec("u1", "q1", "m3", 0)});
  const HeteroGraph g = build_graph(d, reg);
  CHECK(g.total_nodes() == 6);
  CHECK(g.user_task.size() == 1);
  CHECK(g.task_query.size() == 1);
  CHECK(g.user_query.size() == 1);
  CHECK(g.query_llm.size() == 3);
}

TEST_CASE("empty dataset and registry give an empty graph") {
  const HeteroGraph g = build_graph(Dataset::from_records({}), Registry({}, {}, {}));
  CHECK(g.total_nodes() == 0);
  CHECK(g.total_edges() == 0);
}
