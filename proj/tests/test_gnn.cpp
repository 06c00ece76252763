#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "prouter/gnn/router.hpp"
#include "prouter/gnn/toy.hpp"
#include "prouter/sim/simulation.hpp"
#include "prouter/sim/split.hpp"
#include "support.hpp"

using namespace prouter;
using testing::rec;

namespace {

// One node per kind, hidden width 1, every relation: w_node 2, w_edge 0.5,
// gate 1, update [1 1].
struct Chain {
  Registry reg;
  HeteroGraph graph;
  RouterModel model;
};

Chain make_chain(std::size_t extra_users = 0) {
  std::vector<UserProfile> users = {{"u1", UserKind::WeightPair, 0.5, 0.5, ""}};
  for (std::size_t i = 0; i < extra_users; ++i) {
    users.push_back({"u" + std::to_string(i + 2), UserKind::WeightPair, 0.5, 0.5, ""});
  }
  Chain c{Registry({{"m1", "M1", "", 0.1, "a"}}, {{"t1", MetricName::F1, "x"}}, users), {}, {}};
  c.graph = build_graph(Dataset::from_records({rec("u1", "q1", "m1", 1)}), c.reg);
  ModelDims d;
  d.num_users = users.size();
  d.embed_dim = 2;
  d.hidden = 1;
  d.layers = 1;
  c.model = RouterModel::initialize(d, 1);
  for (auto& p : c.model.parameters()) {
    if (p.name.ends_with(".w_node")) p.value.fill(2.0);
    if (p.name.ends_with(".w_edge")) p.value.fill(0.5);
    if (p.name.ends_with(".gate")) p.value.fill(1.0);
    if (p.name.find(".update.") != std::string::npos) p.value.fill(1.0);
  }
  return c;
}

NodeVars run_layer(const Chain& c, ad::Tape& tape, const std::vector<double>& user_values) {
  const BoundModel m = bind(tape, c.model, false);
  NodeVars in;
  in[0] = tape.constant(Tensor::column_vector(user_values));
  in[1] = tape.constant(Tensor::scalar(-1.0));
  in[2] = tape.constant(Tensor::scalar(0.5));
  in[3] = tape.constant(Tensor::scalar(3.0));
  std::array<ad::Var, kRelations> edges;
  for (Relation r : kAllRelations) {
    edges[static_cast<std::size_t>(r)] = tape.constant(Tensor(1, 1, 1.0));
  }
  return layer_forward(tape, m, 0, c.graph, edges, in);
}

TrainConfig toy_config(Strategy s) {
  TrainConfig c;
  c.layers = 2;
  c.hidden = 4;
  c.embed_dim = 4;
  c.batch_size = 1;
  c.epochs = 4;
  c.strategy = s;
  c.seed = 3;
  return c;
}

const std::vector<GroupKey> kToyTrain = {{"u1", "math-q1"}, {"u2", "news-q2"}};
const std::vector<GroupKey> kToyVal = {{"u1", "news-q1"}, {"u2", "math-q1"}};

}  // namespace

TEST_CASE("one layer on a single chain matches a hand computation") {
  const Chain c = make_chain();
  ad::Tape tape;
  const NodeVars out = run_layer(c, tape, {1.0});
  // user <- task relu(-2+.5)=0, query relu(1+.5)=1.5; mean .75, plus self 1
  CHECK(tape.value(out[0]).item() == doctest::Approx(1.75));
  // task <- user 2.5, query 1.5; mean 2, plus self -1
  CHECK(tape.value(out[1]).item() == doctest::Approx(1.0));
  // query <- task 0, user 2.5, llm 6.5; mean 3, plus self .5
  CHECK(tape.value(out[2]).item() == doctest::Approx(3.5));
  // llm <- query 1.5, plus self 3
  CHECK(tape.value(out[3]).item() == doctest::Approx(4.5));

  Chain g = make_chain();
  g.model.param("layer0.llm_query.gate").fill(-1.0);
  ad::Tape t2;
  const NodeVars o2 = run_layer(g, t2, {1.0});
  CHECK(t2.value(o2[2]).item() == doctest::Approx(2.5 / 3.0 + 0.5));
}

TEST_CASE("a user without neighbors keeps only its self term") {
  const Chain c = make_chain(1);
  ad::Tape tape;
  const NodeVars out = run_layer(c, tape, {1.0, -0.7});
  CHECK(tape.value(out[0])(1, 0) == doctest::Approx(-0.7));
  CHECK(tape.value(out[0])(0, 0) == doctest::Approx(1.75));
}

TEST_CASE("model outputs do not depend on node numbering") {
  // The same groups inserted in a different order number the query nodes
  // differently; per-group scores must agree.
  const ToyProblem p = make_toy_problem(Strategy::CostEff, 5);
  std::vector<InteractionRecord> rs = p.dataset.records();
  std::reverse(rs.begin(), rs.end());
  const Dataset rev = Dataset::from_records(rs);
  const HashingEmbedder emb(4, 5);
  const std::set<GroupKey> visible(kToyTrain.begin(), kToyTrain.end());
  auto model = std::make_shared<const RouterModel>(p.model);
  const InferenceContext a(model, build_bundle(p.dataset, p.registry, emb, Strategy::CostEff, visible));
  const InferenceContext b(model, build_bundle(rev, p.registry, emb, Strategy::CostEff, visible));
  std::vector<GroupKey> keys = kToyTrain;
  keys.insert(keys.end(), kToyVal.begin(), kToyVal.end());
  const auto sa = a.score_groups(keys), sb = b.score_groups(keys);
  for (std::size_t g = 0; g < keys.size(); ++g) {
    // candidate order inside a group is file order, which the reversal flips
    std::vector<double> x = sa[g], y = sb[g];
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == doctest::Approx(y[i]).epsilon(1e-12));
  }
}

TEST_CASE("combine of zero inputs with zero biases is zero") {
  ModelDims d;
  d.num_users = 2;
  d.embed_dim = 3;
  d.hidden = 4;
  d.layers = 1;
  const RouterModel m = RouterModel::initialize(d, 2);
  ad::Tape t;
  const BoundModel b = bind(t, m, false);
  const ad::Var z = t.constant(Tensor(2, 4, 0.0));
  const ad::Var out = combine_uqt(t, b, z, z, z);
  CHECK(t.value(out) == Tensor(2, 4, 0.0));
}

TEST_CASE("permuting the last combine rows permutes the output") {
  ModelDims d;
  d.num_users = 2;
  d.embed_dim = 3;
  d.hidden = 3;
  d.layers = 1;
  RouterModel m = RouterModel::initialize(d, 4);
  m.param("combine.fc1.bias") = Tensor(1, 3, std::vector<double>{0.1, -0.2, 0.3});
  m.param("combine.fc2.bias") = Tensor(1, 3, std::vector<double>{0.5, 0.0, -0.5});
  RouterModel p = m;
  const std::size_t perm[] = {2, 0, 1};
  for (const char* name : {"combine.fc2.weight", "combine.fc2.bias"}) {
    const Tensor& src = m.param(name);
    Tensor& dst = p.param(name);
    if (src.rows() == 1) {
      for (std::size_t i = 0; i < 3; ++i) dst(0, i) = src(0, perm[i]);
    } else {
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < src.cols(); ++j) dst(i, j) = src(perm[i], j);
      }
    }
  }
  const Tensor x(1, 3, std::vector<double>{0.3, -1.0, 0.8});
  auto run = [&](const RouterModel& model) {
    ad::Tape t;
    const BoundModel b = bind(t, model, false);
    const ad::Var v = t.constant(x);
    return t.value(combine_uqt(t, b, v, v, v));
  };
  const Tensor a = run(m), b = run(p);
  for (std::size_t i = 0; i < 3; ++i) CHECK(b(0, i) == a(0, perm[i]));
}

TEST_CASE("score_candidates") {
  const Tensor llms(3, 2, std::vector<double>{1, 0, 0, 1, 0.6, 0.8});
  const std::vector<double> orth = {0.0, 0.0};
  CHECK(score_candidates(orth, llms) == std::vector<double>{0, 0, 0});
  const std::vector<double> e1 = {1.0, 0.0};
  CHECK(score_candidates(e1, llms)[0] == 1.0);
  const Tensor ten(10, 2, 0.5);
  CHECK(score_candidates(e1, ten).size() == 10);
}

TEST_CASE("select_llm picks the lowest index among ties") {
  CHECK(select_llm(std::vector<double>{0.1, 0.9, 0.3}) == 1);
  CHECK(select_llm(std::vector<double>{0.5, 0.5}) == 0);
  CHECK_THROWS(select_llm(std::vector<double>{}));
  CHECK_THROWS(select_llm(std::vector<double>{0.1, std::nan("")}));
}

TEST_CASE("group_loss examples") {
  CHECK(group_loss(std::vector<double>(10, 0.3), 4) == doctest::Approx(std::log(10.0)));
  const double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
  CHECK(group_loss(std::vector<double>{2, 0}, 0) == doctest::Approx(expected));
  CHECK(group_loss(std::vector<double>{2, 0}, 0) == doctest::Approx(0.126928).epsilon(1e-6));
  CHECK(group_loss(std::vector<double>{800, 0, -5}, 0) < 1e-12);
  CHECK(std::isfinite(group_loss(std::vector<double>{800, 0, -5}, 2)));
}

TEST_CASE("full model gradients on the toy graph match finite differences") {
  for (Strategy s : {Strategy::CostEff, Strategy::Judge}) {
    const ToyProblem p = make_toy_problem(s, 7);
    const auto res = check_model_gradients(p.model, p.bundle.graph, p.bundle.features, p.query_nodes);
    CHECK(res.max_relative_error < 1e-4);
  }
}

TEST_CASE("zero epochs returns the initial parameters with an empty log") {
  const ToyProblem p = make_toy_problem(Strategy::Judge, 7);
  TrainConfig c = toy_config(Strategy::Judge);
  c.epochs = 0;
  const TrainResult r = train(p.bundle.graph, p.bundle.features, kToyTrain, kToyVal, c);
  CHECK(r.log.empty());
  CHECK(r.model == RouterModel::initialize(r.model.dims(), c.seed));
}

TEST_CASE("training is deterministic") {
  const ToyProblem p = make_toy_problem(Strategy::CostEff, 7);
  const TrainConfig c = toy_config(Strategy::CostEff);
  const TrainResult a = train(p.bundle.graph, p.bundle.features, kToyTrain, kToyVal, c);
  const TrainResult b = train(p.bundle.graph, p.bundle.features, kToyTrain, kToyVal, c);
  CHECK(a.model == b.model);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].train_loss == b.log[i].train_loss);

  kernels::set_backend(kernels::Backend::Serial);
  const TrainResult s = train(p.bundle.graph, p.bundle.features, kToyTrain, kToyVal, c);
  kernels::set_backend(kernels::Backend::Parallel);
  CHECK(s.model == a.model);
}

TEST_CASE("hidden labels cannot influence training") {
  // Flip which LLM is best in a validation group. Its query-llm features are
  // hidden, so every training loss must be bitwise unchanged.
  const ToyProblem p = make_toy_problem(Strategy::Judge, 7);
  std::vector<InteractionRecord> rs = p.dataset.records();
  for (auto& r : rs) {
    if (r.user_id == "u2" && r.query_id == "math-q1") r.label = r.llm_id == "small" ? 1 : 0;
  }
  const Dataset flipped = Dataset::from_records(rs);
  const HashingEmbedder emb(4, 7);
  const std::set<GroupKey> visible(kToyTrain.begin(), kToyTrain.end());
  const GraphBundle b = build_bundle(flipped, p.registry, emb, Strategy::Judge, visible);
  const TrainConfig c = toy_config(Strategy::Judge);
  const TrainResult x = train(p.bundle.graph, p.bundle.features, kToyTrain, {}, c);
  const TrainResult y = train(b.graph, b.features, kToyTrain, {}, c);
  REQUIRE(x.log.size() == y.log.size());
  for (std::size_t i = 0; i < x.log.size(); ++i) CHECK(x.log[i].train_loss == y.log[i].train_loss);
  CHECK(x.model == y.model);
}

TEST_CASE("training rejects bad inputs") {
  const ToyProblem p = make_toy_problem(Strategy::Judge, 7);
  TrainConfig c = toy_config(Strategy::Judge);
  CHECK_THROWS_AS(train(p.bundle.graph, p.bundle.features, {}, kToyVal, c), std::invalid_argument);
  c.embed_dim = 8;
  CHECK_THROWS_AS(train(p.bundle.graph, p.bundle.features, kToyTrain, kToyVal, c),
                  std::invalid_argument);
  c = toy_config(Strategy::CostEff);
  CHECK_THROWS_AS(train(p.bundle.graph, p.bundle.features, kToyTrain, kToyVal, c),
                  std::invalid_argument);
  c = toy_config(Strategy::Judge);
  c.initial_lr = 0;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = toy_config(Strategy::Judge);
  CHECK_THROWS_AS(train(p.bundle.graph, p.bundle.features, {{"u9", "x"}}, kToyVal, c),
                  std::invalid_argument);
}

TEST_CASE("few-shot adaptation") {
  const ToyProblem p = make_toy_problem(Strategy::Judge, 7);
  const HashingEmbedder emb(4, 7);
  const RouterModel before = p.model;
  auto model = std::make_shared<const RouterModel>(p.model);
  const std::set<GroupKey> visible(kToyTrain.begin(), kToyTrain.end());

  SUBCASE("without auxiliary records it is a no-op") {
    const InferenceContext base(model, build_bundle(p.dataset, p.registry, emb, Strategy::Judge, visible));
    const InferenceContext adapted = adapt_few_shot(model, p.dataset, visible, {}, kToyVal, p.registry, emb);
    CHECK(base.score_groups(kToyVal) == adapted.score_groups(kToyVal));
    CHECK(*model == before);
  }
  SUBCASE("auxiliary edges change scores but never parameters") {
    std::vector<InteractionRecord> aux;
    std::vector<InteractionRecord> rest;
    for (const auto& r : p.dataset.records()) {
      (r.user_id == "u1" && r.query_id == "news-q1" ? aux : rest).push_back(r);
    }
    const Dataset base_ds = Dataset::from_records(rest);
    const std::vector<GroupKey> test = {{"u2", "math-q1"}};
    const InferenceContext zero(model, build_bundle(base_ds, p.registry, emb, Strategy::Judge, visible));
    const InferenceContext few = adapt_few_shot(model, base_ds, visible, aux, test, p.registry, emb);
    CHECK(*model == before);
    CHECK(few.graph().query_llm.size() == zero.graph().query_llm.size() + aux.size());
    CHECK(few.score_groups(test) != zero.score_groups(test));
  }
  SUBCASE("auxiliary records may not touch test groups") {
    std::vector<InteractionRecord> aux;
    for (const auto& r : p.dataset.records()) {
      if (r.user_id == "u2" && r.query_id == "math-q1") aux.push_back(r);
    }
    CHECK_THROWS_AS(adapt_few_shot(model, p.dataset, visible, aux, kToyVal, p.registry, emb),
                    std::invalid_argument);
  }
}

// A clone of a known user, given that user's whole training history as
// auxiliary edges, should route like the original.
TEST_CASE("a cloned user with the original's history routes like the original" *
          doctest::may_fail()) {
  const Registry base = Registry::load_dir(testing::asset_dir() / "registry" / "judge");
  const ResponseLog log = synthesize_responses(base, {25, 7});
  const Dataset ds = build_judge_dataset(log, synthesize_judge_labels(log, base, 7), base);
  auto users = base.users();
  UserProfile clone = *base.find_user("user_5");
  clone.user_id = "clone";
  users.push_back(clone);
  const Registry reg(base.llms(), base.tasks(), users);
  const SplitManifest m = split_dataset(ds, SplitMode::Standard, 7);
  const std::set<GroupKey> train_set(m.train.begin(), m.train.end());
  const std::set<GroupKey> test_set(m.test.begin(), m.test.end());

  std::vector<InteractionRecord> all = ds.records(), aux;
  std::vector<GroupKey> orig, cloned;
  for (auto r : ds.records()) {
    if (r.user_id != "user_5") continue;
    const GroupKey k{r.user_id, r.query_id};
    r.user_id = "clone";
    r.record_id += "-clone";
    if (train_set.count(k)) aux.push_back(r);
    if (test_set.count(k)) {
      all.push_back(r);
      if (r.label == 1) {
        orig.push_back(k);
        cloned.push_back({"clone", r.query_id});
      }
    }
  }
  const Dataset full = Dataset::from_records(all);
  const HashingEmbedder emb(64, 7);
  const GraphBundle b = build_bundle(full, reg, emb, Strategy::Judge, train_set);
  TrainConfig c;
  c.epochs = 20;
  c.patience = 2;
  const TrainResult r = train(b.graph, b.features, m.train, m.validation, c);
  auto model = std::make_shared<const RouterModel>(r.model);
  const InferenceContext ctx(model, b);
  const InferenceContext adapted = adapt_few_shot(model, full, train_set, aux, cloned, reg, emb);
  const auto so = ctx.score_groups(orig);
  const auto sc = adapted.score_groups(cloned);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < orig.size(); ++i) agree += select_llm(so[i]) == select_llm(sc[i]);
  MESSAGE("clone agreement " << agree << "/" << orig.size());
  CHECK(agree == orig.size());
}

TEST_CASE("exported embeddings have one row per llm and requested group") {
  const ToyProblem p = make_toy_problem(Strategy::CostEff, 7);
  auto model = std::make_shared<const RouterModel>(p.model);
  const InferenceContext ctx(model, p.bundle);
  testing::TempDir dir("export");
  export_embeddings(ctx, kToyVal, dir / "a.jsonl");
  export_embeddings(ctx, kToyVal, dir / "b.jsonl");
  const std::string text = testing::read_file(dir / "a.jsonl");
  CHECK(text == testing::read_file(dir / "b.jsonl"));
  std::istringstream in(text);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["vector"].size() == 4);
    ++rows;
  }
  CHECK(rows == 3 + kToyVal.size());
}

TEST_CASE("transient scoring covers every llm and is deterministic") {
  const ToyProblem p = make_toy_problem(Strategy::Judge, 7);
  auto model = std::make_shared<const RouterModel>(p.model);
  const InferenceContext ctx(model, p.bundle);
  const HashingEmbedder emb(4, 7);
  const auto f = emb.embed("new", "add three numbers");
  const auto a = ctx.score_transient(0, 0, f);
  CHECK(a.size() == 3);
  CHECK(a == ctx.score_transient(0, 0, f));
  CHECK_THROWS_AS(ctx.score_transient(5, 0, f), std::out_of_range);
}

TEST_CASE("cost-sensitive and quality-only users prefer different llms") {
  // u1 weighs cost heavily, u2 ignores it; on the shared query the
  // reward-optimal llm differs.
  const ToyProblem p = make_toy_problem(Strategy::CostEff, 7);
  std::map<std::string, std::string> best;
  for (const auto& g : p.dataset.groups()) {
    if (g.key.query_id == "math-q1") best[g.key.user_id] = p.dataset.best(g).llm_id;
  }
  CHECK(best.at("u1") != best.at("u2"));
}
