#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "prouter/eval/metrics.hpp"
#include "prouter/gnn/toy.hpp"
#include "prouter/service/config.hpp"
#include "prouter/service/service.hpp"
#include "prouter/sim/simulation.hpp"
#include "prouter/sim/split.hpp"

namespace fs = std::filesystem;
using namespace prouter;

namespace {

Strategy parse_strategy(const std::string& s) { return strategy_from_string(s); }

fs::path registry_or_default(const std::string& given, Strategy strategy) {
  return given.empty() ? default_registry_dir(strategy) : fs::path(given);
}

// Path of `target` as seen from the directory holding `from_file`.
std::string relative_to(const fs::path& target, const fs::path& from_file) {
  const fs::path dir = fs::absolute(from_file).parent_path();
  return fs::proximate(fs::absolute(target), dir).generic_string();
}

struct SimulateArgs {
  std::string strategy = "judge";
  std::uint64_t seed = 7;
  std::size_t queries_per_task = 100;
  std::string registry, responses, labels, save_responses, out;
};

int run_simulate(const SimulateArgs& a) {
  const Strategy strategy = parse_strategy(a.strategy);
  const Registry registry = Registry::load_dir(registry_or_default(a.registry, strategy));
  const ResponseLog log = a.responses.empty()
                              ? synthesize_responses(registry, {a.queries_per_task, a.seed})
                              : load_response_log(a.responses);
  if (!a.save_responses.empty()) save_response_log(a.save_responses, log);
  Dataset data;
  if (strategy == Strategy::CostEff) {
    data = simulate_cost_eff(log, registry);
  } else {
    const auto labels = a.labels.empty() ? synthesize_judge_labels(log, registry, a.seed)
                                         : load_judge_labels(a.labels);
    data = build_judge_dataset(log, labels, registry);
  }
  save_dataset(a.out, data);
  std::printf("wrote %zu records in %zu groups to %s\n", data.records().size(),
              data.groups().size(), a.out.c_str());
  return 0;
}

struct SplitArgs {
  std::string data, mode = "standard", out;
  std::uint64_t seed = 7;
  std::vector<std::string> held_out;
  double auxiliary_fraction = kDefaultAuxiliaryFraction;
};

int run_split(const SplitArgs& a) {
  const Dataset data = load_dataset(a.data);
  const SplitManifest m = split_dataset(data, split_mode_from_string(a.mode), a.seed, a.held_out,
                                        a.auxiliary_fraction);
  save_manifest(a.out, m);
  std::printf("train %zu validation %zu test %zu auxiliary %zu\n", m.train.size(),
              m.validation.size(), m.test.size(), m.auxiliary.size());
  return 0;
}

struct TrainArgs {
  std::string data, split, config, registry, out;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  const auto config_path =
      resolve_config_path(a.config.empty() ? std::nullopt : std::optional<fs::path>(a.config));
  const TrainConfig config = config_path ? load_train_config(*config_path) : TrainConfig{};
  const fs::path registry_dir = registry_or_default(a.registry, config.strategy);
  const Registry registry = Registry::load_dir(registry_dir);
  const Dataset data = load_dataset(a.data);
  const SplitManifest manifest = load_manifest(a.split);
  if (const auto problems = check_manifest(manifest, data); !problems.empty()) {
    throw DatasetError("split does not match the dataset: " + problems.front());
  }
  const HashingEmbedder provider(config.embed_dim, config.seed);
  const std::set<GroupKey> visible(manifest.train.begin(), manifest.train.end());
  const GraphBundle bundle =
      build_bundle(training_view(data, manifest), registry, provider, config.strategy, visible);
  const TrainResult result =
      train(bundle.graph, bundle.features, manifest.train, manifest.validation, config,
            [&](const EpochLog& e) {
              if (!a.quiet) std::printf("%s\n", format_epoch(e).c_str());
              std::fflush(stdout);
            });

  Checkpoint ckpt = result.model.to_checkpoint(config.seed);
  ckpt.meta.emplace_back(kMetaData, relative_to(a.data, a.out));
  ckpt.meta.emplace_back(kMetaSplit, relative_to(a.split, a.out));
  ckpt.meta.emplace_back(kMetaRegistry, registry_dir.generic_string());
  ckpt.meta.emplace_back(kMetaEmbedSeed, std::to_string(config.seed));
  ckpt.meta.emplace_back("best_epoch", std::to_string(result.best_epoch));
  save_checkpoint(ckpt, a.out);
  std::printf("best_epoch=%d best_metric=%.6f model_version=%s\n", result.best_epoch,
              result.best_metric, file_digest(a.out).c_str());
  return 0;
}

struct ModelArgs {
  std::string model, data, split, registry;

  [[nodiscard]] LoadedModel load() const {
    LoadOverrides o;
    if (!data.empty()) o.data = data;
    if (!split.empty()) o.split = split;
    if (!registry.empty()) o.registry = registry;
    return load_model(model, o);
  }
};

GroupRouter router_from(const InferenceContext& ctx, const std::vector<GroupKey>& keys) {
  const auto logits = ctx.score_groups(keys);
  auto chosen = std::make_shared<std::map<GroupKey, std::string>>();
  const HeteroGraph& g = ctx.graph();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::size_t q = *g.find_query(keys[i]);
    const std::size_t edge = g.candidates[q][select_llm(logits[i])];
    (*chosen)[keys[i]] = g.llms.id(g.query_llm[edge].llm);
  }
  return [chosen](const CandidateGroup& group) { return chosen->at(group.key); };
}

int run_evaluate(const ModelArgs& a, std::uint64_t seed) {
  const LoadedModel loaded = a.load();
  const auto& test = loaded.manifest.test;
  if (test.empty()) throw EvalError("split has no test groups");
  const InferenceContext ctx = make_context(loaded);

  std::vector<ReportRow> routers;
  routers.push_back({"router", evaluate(router_from(ctx, test), test, loaded.dataset)});
  if (!loaded.manifest.auxiliary.empty()) {
    const std::set<GroupKey> visible(loaded.manifest.train.begin(), loaded.manifest.train.end());
    const InferenceContext few = adapt_few_shot(
        loaded.model, training_view(loaded.dataset, loaded.manifest), visible,
        auxiliary_records(loaded.dataset, loaded.manifest), test, loaded.registry,
        *loaded.provider);
    routers.push_back({"router+aux", evaluate(router_from(few, test), test, loaded.dataset)});
  }
  std::vector<ReportRow> baselines;
  for (BaselineKind k : kAllBaselines) {
    baselines.push_back(
        {to_string(k), run_baseline(k, loaded.manifest.train, test, loaded.dataset, seed)});
  }
  std::cout << "model_version " << loaded.version << "\n"
            << format_report(routers, baselines, oracle(test, loaded.dataset));
  return 0;
}

int run_route(const ModelArgs& a, const RouteRequest& request) {
  const auto snapshot = make_snapshot(a.load());
  std::cout << to_json(route_request(*snapshot, request)) << "\n";
  return 0;
}

std::atomic<bool> g_reload{false};
void on_sighup(int) { g_reload = true; }

int run_serve(const ModelArgs& a, const std::string& host, int port, long max_requests) {
  RouterService service(make_snapshot(a.load()));
  httplib::Server server;
  install_routes(server, service);

  std::mutex mu;
  std::condition_variable cv;
  long handled = 0;
  bool done = false;
  server.set_logger([&](const httplib::Request&, const httplib::Response&) {
    std::lock_guard lock(mu);
    ++handled;
    if (max_requests > 0 && handled >= max_requests) cv.notify_all();
  });

  std::signal(SIGHUP, on_sighup);
  std::thread watcher([&] {
    std::unique_lock lock(mu);
    while (!done) {
      cv.wait_for(lock, std::chrono::milliseconds(200));
      if (max_requests > 0 && handled >= max_requests) {
        server.stop();
        return;
      }
      if (g_reload.exchange(false)) {
        lock.unlock();
        try {
          service.swap(make_snapshot(a.load()));
          std::fprintf(stderr, "reloaded %s\n", service.version().c_str());
        } catch (const std::exception& e) {
          std::fprintf(stderr, "reload failed, keeping %s: %s\n", service.version().c_str(),
                       e.what());
        }
        lock.lock();
      }
    }
  });

  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    {
      std::lock_guard lock(mu);
      done = true;
    }
    cv.notify_all();
    watcher.join();
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  std::printf("listening on http://%s:%d model_version=%s\n", host.c_str(), bound,
              service.version().c_str());
  std::fflush(stdout);
  const bool ok = server.listen_after_bind();
  {
    std::lock_guard lock(mu);
    done = true;
  }
  cv.notify_all();
  watcher.join();
  std::printf("served %ld requests\n", handled);
  return ok || (max_requests > 0 && handled >= max_requests) ? 0 : 1;
}

int run_export(const ModelArgs& a, const std::vector<std::string>& groups, const std::string& out) {
  const LoadedModel loaded = a.load();
  std::vector<GroupKey> keys;
  for (const auto& s : groups) {
    const auto slash = s.find('/');
    if (slash == std::string::npos) throw std::invalid_argument("group must be user/query: " + s);
    keys.push_back({s.substr(0, slash), s.substr(slash + 1)});
  }
  if (groups.empty()) keys = loaded.manifest.test;
  const InferenceContext ctx = make_context(loaded);
  for (const auto& k : keys) {
    if (!ctx.graph().find_query(k)) throw std::invalid_argument("unknown group " + k.str());
  }
  export_embeddings(ctx, keys, out);
  std::printf("wrote %zu rows to %s\n", ctx.graph().llms.size() + keys.size(), out.c_str());
  return 0;
}

int run_grad_check(const std::string& strategy, std::uint64_t seed, double eps) {
  const ToyProblem p = make_toy_problem(parse_strategy(strategy), seed);
  const GradCheckResult r = check_model_gradients(p.model, p.bundle.graph, p.bundle.features,
                                                  p.query_nodes, eps);
  std::printf("parameters=%zu max_relative_error=%.3e worst_index=%zu analytic=%.9g numeric=%.9g\n",
              p.model.scalar_count(), r.max_relative_error, r.worst_index, r.analytic, r.numeric);
  return r.max_relative_error < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized LLM router"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Build an interaction dataset");
  simulate->add_option("--strategy", sim.strategy, "cost-eff or judge")->capture_default_str();
  simulate->add_option("--seed", sim.seed)->capture_default_str();
  simulate->add_option("--queries-per-task", sim.queries_per_task)->capture_default_str();
  simulate->add_option("--registry", sim.registry, "Registry directory");
  simulate->add_option("--responses", sim.responses, "Response log to use instead of synthesizing")
      ->check(CLI::ExistingFile);
  simulate->add_option("--labels", sim.labels, "Judge labels (judge strategy)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--save-responses", sim.save_responses, "Also write the response log");
  simulate->add_option("--out", sim.out)->required();

  SplitArgs sp;
  auto* split = app.add_subcommand("split", "Write a train/validation/test manifest");
  split->add_option("--data", sp.data)->required()->check(CLI::ExistingFile);
  split->add_option("--mode", sp.mode, "standard, new_user or new_llm")->capture_default_str();
  split->add_option("--seed", sp.seed)->capture_default_str();
  split->add_option("--held-out", sp.held_out, "Held-out user or LLM ids");
  split->add_option("--aux-fraction", sp.auxiliary_fraction)->capture_default_str();
  split->add_option("--out", sp.out)->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a router");
  train_cmd->add_option("--data", tr.data)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--split", tr.split)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", tr.config, "JSON config (ROUTER_CONFIG overrides)");
  train_cmd->add_option("--registry", tr.registry, "Registry directory");
  train_cmd->add_option("--out", tr.out)->required();
  train_cmd->add_flag("--quiet", tr.quiet, "Do not print the epoch log");

  ModelArgs ma;
  auto add_model = [&](CLI::App* c) {
    c->add_option("--model", ma.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--data", ma.data, "Dataset (defaults to the one used for training)");
    c->add_option("--split", ma.split, "Split manifest (defaults to the training split)");
    c->add_option("--registry", ma.registry, "Registry directory");
  };

  std::uint64_t eval_seed = 7;
  auto* eval_cmd = app.add_subcommand("evaluate", "Report test metrics against baselines");
  add_model(eval_cmd);
  eval_cmd->add_option("--seed", eval_seed, "Random baseline seed")->capture_default_str();

  RouteRequest request;
  std::string query_id;
  auto* route = app.add_subcommand("route", "Route one query");
  add_model(route);
  route->add_option("--user", request.user_id)->required();
  route->add_option("--task", request.task_id)->required();
  route->add_option("--query", request.query_text)->required();
  route->add_option("--query-id", query_id);

  std::string host = "127.0.0.1";
  int port = 8080;
  long max_requests = 0;
  auto* serve = app.add_subcommand("serve", "Serve POST /route and GET /health");
  add_model(serve);
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port, "0 picks a free port")->capture_default_str();
  serve->add_option("--max-requests", max_requests, "Exit after this many requests (0: never)")
      ->capture_default_str();

  std::vector<std::string> groups;
  std::string export_out;
  auto* exp = app.add_subcommand("export-embeddings", "Write final-layer embeddings");
  add_model(exp);
  exp->add_option("--group", groups, "user/query pairs (default: test partition)");
  exp->add_option("--out", export_out)->required();

  std::string gc_strategy = "judge";
  std::uint64_t gc_seed = 7;
  double gc_eps = 1e-5;
  auto* gc = app.add_subcommand("grad-check", "Compare analytic and numeric gradients on a toy graph");
  gc->add_option("--strategy", gc_strategy)->capture_default_str();
  gc->add_option("--seed", gc_seed)->capture_default_str();
  gc->add_option("--eps", gc_eps)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (split->parsed()) return run_split(sp);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_evaluate(ma, eval_seed);
    if (route->parsed()) {
      if (!query_id.empty()) request.query_id = query_id;
      return run_route(ma, request);
    }
    if (serve->parsed()) return run_serve(ma, host, port, max_requests);
    if (exp->parsed()) return run_export(ma, groups, export_out);
    if (gc->parsed()) return run_grad_check(gc_strategy, gc_seed, gc_eps);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
