#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "prouter/numerics/rng.hpp"
#include "prouter/sim/simulation.hpp"
#include "prouter/sim/split.hpp"
#include "support.hpp"

using namespace prouter;
using testing::rec;

namespace {

Registry two_llms(double price_a, double price_b, double alpha, double beta) {
  return Registry({{"a", "A", "", price_a, "first"}, {"b", "B", "", price_b, "second"}},
                  {{"t1", MetricName::F1, "task"}}, {{"u1", UserKind::WeightPair, alpha, beta, ""}});
}

ResponseLog two_responses(double perf_a, std::uint64_t tok_a, double perf_b, std::uint64_t tok_b) {
  ResponseLog log;
  log.rows.push_back({"t1", "q1", "a", "what?", perf_a, tok_a, std::nullopt});
  log.rows.push_back({"t1", "q1", "b", "what?", perf_b, tok_b, std::nullopt});
  return log;
}

std::string label_of(const Dataset& d) {
  for (const auto& r : d.records()) {
    if (r.label == 1) return r.llm_id;
  }
  return "";
}

// n groups, one user, two candidates each.
Dataset n_groups(std::size_t n, std::size_t users = 1) {
  std::vector<InteractionRecord> rs;
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t q = 0; q < n; ++q) {
      const std::string user = "u" + std::to_string(u + 1), qid = "q" + std::to_string(q);
      rs.push_back(rec(user, qid, "m1", 1));
      rs.push_back(rec(user, qid, "m2", 0));
    }
  }
  return Dataset::from_records(rs);
}

}  // namespace

TEST_CASE("compute_cost") {
  CHECK(compute_cost(1'000'000, 0.2) == doctest::Approx(0.2));
  CHECK(compute_cost(0, 123.0) == 0.0);
  CHECK(compute_cost(500'000, 0.9) == doctest::Approx(0.45));
}

TEST_CASE("normalize") {
  CHECK(normalize(std::vector<double>{2, 4, 6}) == std::vector<double>{0, 0.5, 1});
  CHECK(normalize(std::vector<double>{5, 5, 5}) == std::vector<double>{0, 0, 0});
  CHECK(normalize(std::vector<double>{0.1, 0.3}) == std::vector<double>{0, 1});
  CHECK(normalize(std::vector<double>{}).empty());
}

TEST_CASE("compute_reward") {
  CHECK(compute_reward(0.7, 0.4, 1.0, 0.0) == doctest::Approx(0.7));
  CHECK(compute_reward(1.0, 1.0, 0.2, 0.8) == doctest::Approx(-0.6));
  CHECK(compute_reward(0.5, 0.5, 0.5, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("cost-efficiency labels follow the reward") {
  SUBCASE("better performance wins at equal cost") {
    const Dataset d = simulate_cost_eff(two_responses(0.5, 100, 1.0, 100), two_llms(1, 1, 0.4, 0.6));
    CHECK(label_of(d) == "b");
  }
  SUBCASE("cheaper wins at equal performance") {
    const Dataset d = simulate_cost_eff(two_responses(0.6, 100, 0.6, 100), two_llms(5, 1, 0.4, 0.6));
    CHECK(label_of(d) == "b");
  }
  SUBCASE("quality-only user ignores cost") {
    const Dataset d = simulate_cost_eff(two_responses(0.9, 100, 0.6, 100), two_llms(50, 1, 1.0, 0.0));
    CHECK(label_of(d) == "a");
    CHECK(*d.records()[0].reward == doctest::Approx(1.0));
  }
}

TEST_CASE("full-scale cost-efficiency counts") {
  const Registry reg = Registry::load_dir(testing::asset_dir() / "registry" / "cost_eff");
  const ResponseLog log = synthesize_responses(reg, {600, 7});
  const Dataset d = simulate_cost_eff(log, reg);
  std::set<std::string> queries;
  for (const auto& r : log.rows) queries.insert(r.query_id);
  CHECK(queries.size() == 2400);
  CHECK(d.records().size() == 216'000);
  CHECK(d.groups().size() == 21'600);

  // every (user, task) pair appears
  std::set<std::pair<std::string, std::string>> ut;
  for (const auto& g : d.groups()) ut.emplace(g.key.user_id, g.task_id);
  CHECK(ut.size() == 36);
}

TEST_CASE("synthetic logs are reproducible and seed dependent") {
  const Registry reg = Registry::load_dir(testing::asset_dir() / "registry" / "cost_eff");
  const ResponseLog a = synthesize_responses(reg, {10, 3});
  const ResponseLog b = synthesize_responses(reg, {10, 3});
  const ResponseLog c = synthesize_responses(reg, {10, 4});
  REQUIRE(a.rows.size() == 400);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    same &= a.rows[i].performance == b.rows[i].performance &&
            a.rows[i].token_count == b.rows[i].token_count;
    differs |= a.rows[i].performance != c.rows[i].performance;
    CHECK(a.rows[i].performance >= 0.0);
    CHECK(a.rows[i].performance <= 1.0);
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("judge labels") {
  const Registry reg({{"l1", "L1", "", 0.1, "x"}, {"l2", "L2", "", 0.2, "y"}, {"l3", "L3", "", 0.3, "z"}},
                     {{"t1", MetricName::F1, "task"}},
                     {{"u1", UserKind::Judged, std::nullopt, std::nullopt, "terse"}});
  ResponseLog log;
  for (const char* q : {"q7", "q8"}) {
    for (const char* l : {"l1", "l2", "l3"}) log.rows.push_back({"t1", q, l, "text", 0.5, 10, std::nullopt});
  }
  SUBCASE("the named llm gets the only label") {
    const Dataset d = build_judge_dataset(log, {{"u1", "q7", "l3"}, {"u1", "q8", "l1"}}, reg);
    for (const auto& g : d.groups()) {
      int ones = 0;
      for (std::size_t p = 0; p < g.members.size(); ++p) ones += d.record(g, p).label;
      CHECK(ones == 1);
    }
    const auto* g = d.find_group({"u1", "q7"});
    REQUIRE(g);
    CHECK(d.best(*g).llm_id == "l3");
  }
  SUBCASE("dangling label") {
    CHECK_THROWS_AS(build_judge_dataset(log, {{"u1", "q7", "l9"}, {"u1", "q8", "l1"}}, reg),
                    DatasetError);
  }
  SUBCASE("missing label") {
    CHECK_THROWS_AS(build_judge_dataset(log, {{"u1", "q7", "l1"}}, reg), DatasetError);
  }
  SUBCASE("duplicate label") {
    CHECK_THROWS_AS(
        build_judge_dataset(log, {{"u1", "q7", "l1"}, {"u1", "q7", "l2"}, {"u1", "q8", "l1"}}, reg),
        DatasetError);
  }
}

TEST_CASE("synthetic judge labels are a function of user and task") {
  const Registry reg = Registry::load_dir(testing::asset_dir() / "registry" / "judge");
  const ResponseLog log = synthesize_responses(reg, {100, 7});
  const auto labels = synthesize_judge_labels(log, reg, 7);
  const Dataset d = build_judge_dataset(log, labels, reg);
  CHECK(d.groups().size() == 9 * 400);
  std::map<std::pair<std::string, std::string>, std::string> table;
  std::set<std::string> distinct;
  for (const auto& g : d.groups()) {
    const std::string best = d.best(g).llm_id;
    auto [it, fresh] = table.emplace(std::make_pair(g.key.user_id, g.task_id), best);
    CHECK(it->second == best);
    distinct.insert(best);
    int ones = 0;
    for (std::size_t p = 0; p < g.members.size(); ++p) ones += d.record(g, p).label;
    CHECK(ones == 1);
  }
  CHECK(table.size() == 36);
  CHECK(distinct.size() > 1);
}

TEST_CASE("split sizes") {
  const SplitManifest ten = split_dataset(n_groups(10), SplitMode::Standard, 1);
  CHECK(ten.train.size() == 7);
  CHECK(ten.validation.size() == 1);
  CHECK(ten.test.size() == 2);

  const SplitManifest big = split_dataset(n_groups(2400), SplitMode::Standard, 1);
  CHECK(big.train.size() == 1680);
  CHECK(big.validation.size() == 240);
  CHECK(big.test.size() == 480);
  CHECK(check_manifest(big, n_groups(2400)).empty());
}

TEST_CASE("new-user split drops held-out users from training and keeps test") {
  const Dataset d = n_groups(40, 5);
  const SplitManifest std_split = split_dataset(d, SplitMode::Standard, 9);
  const SplitManifest nu = split_dataset(d, SplitMode::NewUser, 9, {"u1", "u2", "u3"}, 0.5);
  CHECK(nu.test == std_split.test);
  std::size_t dropped = 0;
  for (const auto& k : std_split.train) dropped += k.user_id <= "u3";
  for (const auto& k : nu.train) CHECK(k.user_id > "u3");
  for (const auto& k : nu.validation) CHECK(k.user_id > "u3");
  CHECK(nu.auxiliary.size() == dropped / 2);
  for (const auto& k : nu.auxiliary) CHECK(k.user_id <= "u3");
  CHECK(check_manifest(nu, d).empty());
  const auto aux = auxiliary_records(d, nu);
  CHECK(aux.size() == 2 * nu.auxiliary.size());
}

TEST_CASE("new-llm split") {
  const Dataset d = n_groups(30, 2);
  const SplitManifest m = split_dataset(d, SplitMode::NewLlm, 2, {"m1"}, 1.0);
  // every group's label is m1, so nothing is left to train on except auxiliary
  CHECK(m.train.empty());
  CHECK_FALSE(m.auxiliary.empty());
  const Dataset view = training_view(d, m);
  for (const auto& r : view.records()) {
    const GroupKey k{r.user_id, r.query_id};
    if (std::binary_search(m.test.begin(), m.test.end(), k)) continue;
    CHECK(r.llm_id != "m1");
  }
}

TEST_CASE("split argument errors") {
  const Dataset d = n_groups(10);
  CHECK_THROWS_AS(split_dataset(d, SplitMode::Standard, 1, {"u1"}), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(d, SplitMode::NewUser, 1, {}), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(d, SplitMode::NewUser, 1, {"nobody"}), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(d, SplitMode::NewUser, 1, {"u1"}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(split_mode_from_string("sideways"), std::invalid_argument);
}

TEST_CASE("manifest invariants hold across seeds and modes") {
  const Dataset d = n_groups(37, 4);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = split_dataset(d, SplitMode::Standard, seed);
    CHECK(check_manifest(a, d).empty());
    CHECK(a == split_dataset(d, SplitMode::Standard, seed));
    const auto b = split_dataset(d, SplitMode::NewUser, seed, {"u2"}, 0.3);
    CHECK(check_manifest(b, d).empty());
    CHECK(std::is_sorted(b.train.begin(), b.train.end()));
    CHECK(std::is_sorted(b.auxiliary.begin(), b.auxiliary.end()));
  }
}

TEST_CASE("check_manifest catches broken manifests") {
  const Dataset d = n_groups(20);
  SplitManifest m = split_dataset(d, SplitMode::Standard, 3);
  SplitManifest overlap = m;
  overlap.validation.push_back(overlap.train.front());
  std::sort(overlap.validation.begin(), overlap.validation.end());
  CHECK_FALSE(check_manifest(overlap, d).empty());
  SplitManifest missing = m;
  missing.test.pop_back();
  CHECK_FALSE(check_manifest(missing, d).empty());
  SplitManifest leaky = split_dataset(n_groups(20, 2), SplitMode::NewUser, 3, {"u1"});
  REQUIRE_FALSE(leaky.auxiliary.empty());
  leaky.auxiliary.push_back(leaky.test.front());
  std::sort(leaky.auxiliary.begin(), leaky.auxiliary.end());
  CHECK_FALSE(check_manifest(leaky, n_groups(20, 2)).empty());
}

TEST_CASE("manifest, response log and judge labels round-trip") {
  testing::TempDir dir("sim");
  const SplitManifest m = split_dataset(n_groups(40, 3), SplitMode::NewUser, 5, {"u2"}, 0.5);
  save_manifest(dir / "m.json", m);
  CHECK(load_manifest(dir / "m.json") == m);
  CHECK(manifest_from_json(manifest_to_json(m)) == m);

  const Registry reg = Registry::load_dir(testing::asset_dir() / "registry" / "judge");
  ResponseLog log = synthesize_responses(reg, {3, 1});
  log.rows[0].response_text = "line\nbreak";
  save_response_log(dir / "r.jsonl", log);
  const ResponseLog back = load_response_log(dir / "r.jsonl");
  REQUIRE(back.rows.size() == log.rows.size());
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    CHECK(back.rows[i].performance == log.rows[i].performance);
    CHECK(back.rows[i].token_count == log.rows[i].token_count);
    CHECK(back.rows[i].response_text == log.rows[i].response_text);
  }
  const auto labels = synthesize_judge_labels(log, reg, 2);
  save_judge_labels(dir / "l.jsonl", labels);
  const auto lb = load_judge_labels(dir / "l.jsonl");
  REQUIRE(lb.size() == labels.size());
  for (std::size_t i = 0; i < lb.size(); ++i) CHECK(lb[i].best_llm_id == labels[i].best_llm_id);
}

TEST_CASE("missing rewards are recomputed for weight-pair users") {
  const Registry reg = two_llms(1, 5, 0.5, 0.5);
  const Dataset d = simulate_cost_eff(two_responses(0.8, 100, 0.4, 100), reg);
  std::vector<InteractionRecord> rs = d.records();
  for (auto& r : rs) r.reward.reset();
  fill_missing_rewards(rs, reg);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    CHECK(*rs[i].reward == doctest::Approx(*d.records()[i].reward));
  }
}
