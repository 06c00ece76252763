#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "prouter/core/checkpoint.hpp"
#include "prouter/gnn/model.hpp"
#include "support.hpp"

using namespace prouter;
using testing::rec;

TEST_CASE("validate_record flags range and id problems") {
  const Registry reg = testing::small_registry();

  auto r = rec("u1", "q1", "m1", 1);
  CHECK(validate_record(r, reg).ok());

  r.performance = 1.2;
  auto res = validate_record(r, reg);
  REQUIRE(res.violations.size() == 1);
  CHECK(res.violations[0] == "performance out of [0,1]");

  r = rec("u1", "q1", "gpt-9", 1);
  res = validate_record(r, reg);
  REQUIRE(res.violations.size() == 1);
  CHECK(res.violations[0] == "unknown llm_id 'gpt-9'");

  r = rec("u1", "q1", "m1", 1);
  r.raw_cost = -1.0;
  CHECK(validate_record(r, reg).violations == std::vector<std::string>{"negative cost"});
}

TEST_CASE("validate_record is pure and ordered") {
  const Registry reg = testing::small_registry();
  auto r = rec("ghost", "q1", "nope", 3, "t9", -0.5, -2.0);
  const auto a = validate_record(r, reg);
  const auto b = validate_record(r, reg);
  CHECK(a.violations == b.violations);
  REQUIRE(a.violations.size() == 6);
  CHECK(a.violations[0] == "unknown user_id 'ghost'");
  CHECK(a.violations[1] == "unknown task_id 't9'");
  CHECK(a.violations[2] == "unknown llm_id 'nope'");
  CHECK(a.violations[3] == "performance out of [0,1]");
  CHECK(a.violations[4] == "negative cost");
  CHECK(a.violations[5] == "label not in {0,1}");
}

TEST_CASE("weight-pair users need both weights") {
  CHECK_THROWS_AS(Registry({}, {}, {{"u", UserKind::WeightPair, 0.5, std::nullopt, ""}}),
                  DatasetError);
  CHECK_THROWS_AS(Registry({{"a", "A", "", 0.1, ""}, {"a", "A", "", 0.1, ""}}, {}, {}),
                  DatasetError);
  CHECK_THROWS_AS(Registry({{"a", "A", "", -0.1, ""}}, {}, {}), DatasetError);
}

TEST_CASE("dataset groups by user and query") {
  testing::TempDir dir("core");
  std::ostringstream out;
  write_records(out, {rec("u1", "q1", "m1", 1), rec("u1", "q1", "m2", 0)});
  testing::write_file(dir / "d.jsonl", out.str());
  const Dataset d = load_dataset(dir / "d.jsonl");
  REQUIRE(d.groups().size() == 1);
  CHECK(d.groups()[0].members.size() == 2);
  CHECK(d.best(d.groups()[0]).llm_id == "m1");
}

TEST_CASE("group with two label-1 records is rejected naming the group") {
  try {
    (void)Dataset::from_records({rec("u1", "q7", "m1", 1), rec("u1", "q7", "m2", 1)});
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("(u1, q7)") != std::string::npos);
  }
  CHECK_THROWS_AS(Dataset::from_records({rec("u1", "q7", "m1", 0)}), DatasetError);
  CHECK_THROWS_AS(Dataset::from_records({rec("u1", "q7", "m1", 1), rec("u1", "q7", "m1", 0)}),
                  DatasetError);
}

TEST_CASE("empty file gives an empty dataset") {
  testing::TempDir dir("core");
  testing::write_file(dir / "e.jsonl", "");
  const Dataset d = load_dataset(dir / "e.jsonl");
  CHECK(d.records().empty());
  CHECK(d.groups().empty());
}

TEST_CASE("parse errors carry the line number") {
  std::istringstream in(
      "{\"record_id\":\"a\",\"user_id\":\"u\",\"task_id\":\"t\",\"query_id\":\"q\","
      "\"query_text\":\"x\",\"llm_id\":\"m\",\"performance\":0.5,\"raw_cost\":0,\"label\":1}\n"
      "\n{broken\n");
  try {
    (void)parse_records(in);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("records round-trip through the line format with optional fields") {
  auto a = rec("u1", "q1", "m1", 1);
  a.reward = -0.25;
  a.response_text = "hello \"world\"\nline two";
  auto b = rec("u1", "q1", "m2", 0);
  std::ostringstream out;
  write_records(out, {a, b});
  std::istringstream in(out.str());
  const auto back = parse_records(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].reward == a.reward);
  CHECK(back[0].response_text == a.response_text);
  CHECK_FALSE(back[1].reward.has_value());
  CHECK(back[1].performance == b.performance);
}

TEST_CASE("every group of a valid dataset has exactly one label-1 record") {
  std::vector<InteractionRecord> rs;
  for (int u = 0; u < 3; ++u) {
    for (int q = 0; q < 5; ++q) {
      for (int m = 0; m < 4; ++m) {
        rs.push_back(rec("u" + std::to_string(u), "q" + std::to_string(q), "m" + std::to_string(m),
                         m == (u + q) % 4 ? 1 : 0));
      }
    }
  }
  const Dataset d = Dataset::from_records(rs);
  CHECK(d.groups().size() == 15);
  for (const auto& g : d.groups()) {
    int ones = 0;
    for (std::size_t p = 0; p < g.members.size(); ++p) ones += d.record(g, p).label;
    CHECK(ones == 1);
  }
}

namespace {

RouterModel small_model() {
  ModelDims dims;
  dims.num_users = 3;
  dims.embed_dim = 5;
  dims.hidden = 4;
  dims.layers = 2;
  return RouterModel::initialize(dims, 11);
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly and re-saves byte-identically") {
  testing::TempDir dir("ckpt");
  const RouterModel m = small_model();
  save_checkpoint(m.to_checkpoint(11), dir / "a.ckpt");
  const Checkpoint loaded = load_checkpoint(dir / "a.ckpt");
  const RouterModel back = RouterModel::from_checkpoint(loaded);
  REQUIRE(back.parameters().size() == m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& x = m.parameters()[i].value.values();
    const auto& y = back.parameters()[i].value.values();
    REQUIRE(x.size() == y.size());
    CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
  }
  CHECK(loaded.seed == 11);
  save_checkpoint(loaded, dir / "b.ckpt");
  CHECK(testing::read_file(dir / "a.ckpt") == testing::read_file(dir / "b.ckpt"));
  CHECK(file_digest(dir / "a.ckpt") == file_digest(dir / "b.ckpt"));
}

TEST_CASE("checkpoint version mismatch is rejected") {
  testing::TempDir dir("ckpt");
  Checkpoint c = small_model().to_checkpoint(1);
  c.format_version = 99;
  save_checkpoint(c, dir / "v.ckpt");
  CHECK_THROWS_AS(load_checkpoint(dir / "v.ckpt"), CheckpointError);
}

TEST_CASE("checkpoint whose hidden width differs from its tensors is rejected") {
  Checkpoint c = small_model().to_checkpoint(1);
  for (auto& [k, v] : c.dims) {
    if (k == "hidden") v = 8;
  }
  CHECK_THROWS_AS(RouterModel::from_checkpoint(c), CheckpointError);

  Checkpoint missing = small_model().to_checkpoint(1);
  missing.tensors.pop_back();
  CHECK_THROWS_AS(RouterModel::from_checkpoint(missing), CheckpointError);
}

TEST_CASE("truncated checkpoint payload is an error") {
  testing::TempDir dir("ckpt");
  save_checkpoint(small_model().to_checkpoint(1), dir / "t.ckpt");
  std::string bytes = testing::read_file(dir / "t.ckpt");
  bytes.resize(bytes.size() - 9);
  testing::write_file(dir / "t.ckpt", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST_CASE("shipped registries load") {
  for (const char* s : {"cost_eff", "judge"}) {
    const Registry r = Registry::load_dir(testing::asset_dir() / "registry" / s);
    CHECK(r.llms().size() == 10);
    CHECK(r.tasks().size() == 4);
    CHECK(r.users().size() == 9);
    for (const auto& m : r.llms()) {
      CHECK(m.price_per_million_tokens >= 0.0);
      CHECK_FALSE(m.description.empty());
    }
  }
  const Registry ce = Registry::load_dir(testing::asset_dir() / "registry" / "cost_eff");
  CHECK(*ce.find_user("user_1")->alpha == doctest::Approx(0.2));
  CHECK(*ce.find_user("user_1")->beta == doctest::Approx(0.8));
  CHECK(*ce.find_user("user_9")->alpha == doctest::Approx(1.0));
  CHECK(*ce.find_user("user_9")->beta == doctest::Approx(0.0));
}

TEST_CASE("registry round-trips through its directory form") {
  testing::TempDir dir("reg");
  const Registry r = testing::small_registry();
  r.save_dir(dir.path());
  const Registry back = Registry::load_dir(dir.path());
  REQUIRE(back.users().size() == 2);
  CHECK(back.find_user("u1")->alpha == r.find_user("u1")->alpha);
  CHECK(back.find_llm("m2")->price_per_million_tokens == 0.9);
  CHECK(back.find_task("t2")->metric_name == MetricName::Accuracy);
}
