#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "prouter/eval/metrics.hpp"
#include "prouter/numerics/rng.hpp"
#include "prouter/sim/simulation.hpp"
#include "prouter/sim/split.hpp"
#include "support.hpp"

using namespace prouter;
using testing::rec;

namespace {

InteractionRecord rrec(const std::string& user, const std::string& query, const std::string& llm,
                       int label, double reward, const std::string& task = "t1") {
  auto r = rec(user, query, llm, label, task);
  r.reward = reward;
  return r;
}

std::vector<GroupKey> keys_of(const Dataset& d) {
  std::vector<GroupKey> k;
  for (const auto& g : d.groups()) k.push_back(g.key);
  return k;
}

// Ten candidates per group with a uniformly random label-1 position.
Dataset random_label_dataset(std::size_t groups, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<InteractionRecord> rs;
  for (std::size_t q = 0; q < groups; ++q) {
    const std::size_t best = rng.index(10);
    for (std::size_t l = 0; l < 10; ++l) {
      rs.push_back(rec("u" + std::to_string(q % 3), "q" + std::to_string(q), "m" + std::to_string(l),
                       l == best ? 1 : 0));
    }
  }
  return Dataset::from_records(rs);
}

}  // namespace

TEST_CASE("router that always picks the labeled best scores accuracy 1") {
  const Dataset d = random_label_dataset(50, 1);
  const Metrics m =
      evaluate([&](const CandidateGroup& g) { return d.best(g).llm_id; }, keys_of(d), d);
  CHECK(m.accuracy == 1.0);
  CHECK(m.n_groups == 50);
  CHECK_FALSE(m.has_reward);
}

TEST_CASE("mean reward averages the chosen records") {
  const Dataset d = Dataset::from_records({rrec("u1", "q1", "a", 1, 0.3), rrec("u1", "q1", "b", 0, 0.1),
                                           rrec("u2", "q2", "a", 0, 0.2), rrec("u2", "q2", "b", 1, 0.5)});
  const Metrics m = evaluate([](const CandidateGroup&) { return std::string("a"); }, keys_of(d), d);
  CHECK(m.has_reward);
  CHECK(m.mean_reward == doctest::Approx(0.25));
  CHECK(m.accuracy == doctest::Approx(0.5));
  CHECK(m.per_user.at("u1").mean_reward == doctest::Approx(0.3));
  CHECK(m.per_user.at("u2").accuracy == 0.0);
  CHECK(m.user_mean_reward() == doctest::Approx(0.25));
}

TEST_CASE("oracle picks the best reward and is perfect on label data") {
  const Dataset d = Dataset::from_records(
      {rrec("u1", "q1", "a", 0, 0.1), rrec("u1", "q1", "b", 1, 0.9), rrec("u1", "q1", "c", 0, -0.2)});
  CHECK(oracle_choice(d.groups()[0], d) == "b");
  CHECK(oracle(keys_of(d), d).mean_reward == doctest::Approx(0.9));

  const Dataset labels = random_label_dataset(100, 2);
  CHECK(oracle(keys_of(labels), labels).accuracy == 1.0);
}

TEST_CASE("improvement arithmetic") {
  CHECK(std::abs(improvement(0.255, 0.221) - 15.38) <= 0.01);
  CHECK(std::abs(improvement(0.447, 0.407) - 9.83) <= 0.01);
  CHECK(std::abs(improvement(-0.142, 0.101) - (-240.59)) <= 0.05);
  CHECK(improvement(0.3, 0.3) == 0.0);
  CHECK(improvement(-0.1, -0.2) == doctest::Approx(50.0));
  CHECK_THROWS_AS(improvement(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("evaluate does not depend on key order") {
  const Dataset d = random_label_dataset(200, 3);
  auto router = make_baseline(BaselineKind::Random, {}, d, 11);
  std::vector<GroupKey> keys = keys_of(d);
  const Metrics a = evaluate(router, keys, d);
  Rng rng(4);
  rng.shuffle(keys);
  CHECK(evaluate(router, keys, d) == a);
}

TEST_CASE("evaluate errors") {
  const Dataset d = random_label_dataset(5, 3);
  auto first = [](const CandidateGroup&) { return std::string("m0"); };
  CHECK_THROWS_AS(evaluate(first, {}, d), EvalError);
  CHECK_THROWS_AS(evaluate(first, {{"u0", "nope"}}, d), EvalError);
  CHECK_THROWS_AS(evaluate([](const CandidateGroup&) { return std::string("zzz"); }, keys_of(d), d),
                  EvalError);
}

TEST_CASE("random baseline matches its binomial expectation") {
  const Dataset d = random_label_dataset(1000, 5);
  const Metrics m = run_baseline(BaselineKind::Random, {}, keys_of(d), d, 17);
  CHECK(m.accuracy >= 0.07);
  CHECK(m.accuracy <= 0.13);
  CHECK(run_baseline(BaselineKind::Random, {}, keys_of(d), d, 17) == m);
}

TEST_CASE("per-task best follows the dominant llm of each task") {
  std::vector<InteractionRecord> rs;
  for (int q = 0; q < 20; ++q) {
    const std::string qa = "a" + std::to_string(q), qb = "b" + std::to_string(q);
    rs.push_back(rrec("u1", qa, "x", 1, 0.9, "t1"));
    rs.push_back(rrec("u1", qa, "y", 0, 0.1, "t1"));
    rs.push_back(rrec("u1", qb, "x", 0, 0.2, "t2"));
    rs.push_back(rrec("u1", qb, "y", 1, 0.8, "t2"));
  }
  const Dataset d = Dataset::from_records(rs);
  std::vector<GroupKey> train, test;
  for (const auto& k : keys_of(d)) (k.query_id.back() < '5' ? train : test).push_back(k);
  const GroupRouter r = make_baseline(BaselineKind::PerTaskBest, train, d, 0);
  for (const auto& k : test) {
    const auto* g = d.find_group(k);
    CHECK(r(*g) == (g->task_id == "t1" ? "x" : "y"));
  }
  CHECK(run_baseline(BaselineKind::PerTaskBest, train, test, d, 0).accuracy == 1.0);
  // most_popular sees a tie between x and y and breaks it by id
  const GroupRouter pop = make_baseline(BaselineKind::MostPopular, train, d, 0);
  CHECK(pop(*d.find_group(test.front())) == "x");
  CHECK_THROWS_AS(make_baseline(BaselineKind::PerTaskBest, {}, d, 0), EvalError);
}

TEST_CASE("baselines fall back when the preferred llm is not a candidate") {
  const Dataset d = Dataset::from_records({rec("u1", "q1", "x", 1), rec("u1", "q1", "y", 0),
                                           rec("u1", "q2", "x", 1), rec("u1", "q2", "z", 0),
                                           rec("u1", "q3", "y", 1), rec("u1", "q3", "z", 0),
                                           rec("u1", "q4", "z", 1), rec("u1", "q4", "w", 0)});
  const GroupRouter pop = make_baseline(BaselineKind::MostPopular, {{"u1", "q1"}, {"u1", "q2"}, {"u1", "q3"}}, d, 0);
  CHECK(pop(*d.find_group({"u1", "q3"})) == "y");
  // neither x nor y is offered; z was never a winner so the first member is used
  CHECK(pop(*d.find_group({"u1", "q4"})) == "z");
}

TEST_CASE("oracle dominates random routers") {
  const Registry reg = Registry::load_dir(testing::asset_dir() / "registry" / "cost_eff");
  const Dataset d = simulate_cost_eff(synthesize_responses(reg, {10, 3}), reg);
  const auto keys = keys_of(d);
  const Metrics o = oracle(keys, d);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Metrics m = run_baseline(BaselineKind::Random, {}, keys, d, seed);
    CHECK(o.mean_reward >= m.mean_reward);
    CHECK(o.accuracy >= m.accuracy);
    for (const auto& [u, um] : m.per_user) CHECK(o.per_user.at(u).mean_reward >= um.mean_reward);
  }
}

TEST_CASE("report lists every row, the oracle and improvements") {
  const Dataset d = Dataset::from_records({rrec("u1", "q1", "a", 1, 0.3), rrec("u1", "q1", "b", 0, 0.1),
                                           rrec("u2", "q2", "a", 0, 0.2), rrec("u2", "q2", "b", 1, 0.5)});
  const auto keys = keys_of(d);
  const Metrics r = evaluate([](const CandidateGroup&) { return std::string("b"); }, keys, d);
  const Metrics b = evaluate([](const CandidateGroup&) { return std::string("a"); }, keys, d);
  const std::string text = format_report({{"router", r}}, {{"random", b}}, oracle(keys, d));
  CHECK(text.find("Oracle") != std::string::npos);
  CHECK(text.find("router") != std::string::npos);
  CHECK(text.find("random") != std::string::npos);
  CHECK(text.find("improvement") != std::string::npos);
  CHECK(text.find("u2") != std::string::npos);
  // router reward 0.3 vs baseline 0.25 is +20%
  CHECK(text.find("20.00") != std::string::npos);
}

TEST_CASE("baseline names round-trip") {
  for (BaselineKind k : kAllBaselines) CHECK(baseline_from_string(to_string(k)) == k);
  CHECK_THROWS(baseline_from_string("clairvoyant"));
}
