#include "prouter/service/service.hpp"

#include <cstdio>
#include <set>

#include <httplib.h>
#include <json.hpp>

#include "prouter/core/checkpoint.hpp"
#include "prouter/numerics/rng.hpp"

#ifndef PROUTER_ASSET_DIR
#define PROUTER_ASSET_DIR "assets"
#endif

namespace prouter {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path default_registry_dir(Strategy strategy) {
  return fs::path(PROUTER_ASSET_DIR) / "registry" /
         (strategy == Strategy::CostEff ? "cost_eff" : "judge");
}

LoadedModel load_model(const fs::path& checkpoint, const LoadOverrides& overrides) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  LoadedModel out;
  out.checkpoint_path = checkpoint;
  out.version = file_digest(checkpoint);
  out.model = std::make_shared<const RouterModel>(RouterModel::from_checkpoint(ckpt));

  const fs::path base = checkpoint.parent_path();
  auto stored = [&](const char* key) -> fs::path {
    const std::string v = ckpt.meta_value(key);
    if (v.empty()) throw CheckpointError(std::string("checkpoint has no '") + key + "' entry");
    const fs::path p(v);
    return p.is_absolute() ? p : base / p;
  };
  const fs::path data = overrides.data ? *overrides.data : stored(kMetaData);
  const fs::path split = overrides.split ? *overrides.split : stored(kMetaSplit);
  const std::string reg = ckpt.meta_value(kMetaRegistry);
  const fs::path registry = overrides.registry ? *overrides.registry
                            : reg.empty()      ? default_registry_dir(out.model->dims().strategy)
                                               : fs::path(reg);
  std::uint64_t embed_seed = ckpt.seed;
  if (const std::string s = ckpt.meta_value(kMetaEmbedSeed); !s.empty()) {
    embed_seed = std::stoull(s);
  }

  out.registry = Registry::load_dir(registry);
  if (out.registry.users().size() != out.model->dims().num_users) {
    throw CheckpointError("registry has " + std::to_string(out.registry.users().size()) +
                          " users but the model was trained for " +
                          std::to_string(out.model->dims().num_users));
  }
  if (out.registry.llms().empty()) throw CheckpointError("registry lists no LLMs");
  out.provider = std::make_shared<const HashingEmbedder>(out.model->dims().embed_dim, embed_seed);
  out.dataset = load_dataset(data);
  out.manifest = load_manifest(split);
  if (const auto problems = check_manifest(out.manifest, out.dataset); !problems.empty()) {
    throw DatasetError("split does not match the dataset: " + problems.front());
  }
  return out;
}

InferenceContext make_context(const LoadedModel& loaded) {
  const std::set<GroupKey> visible(loaded.manifest.train.begin(), loaded.manifest.train.end());
  return InferenceContext(loaded.model,
                          build_bundle(training_view(loaded.dataset, loaded.manifest),
                                       loaded.registry, *loaded.provider,
                                       loaded.model->dims().strategy, visible));
}

RouteRequest route_request_from_json(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw RouteError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw RouteError("request must be a JSON object");
  auto field = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw RouteError(std::string("missing string field '") + key + "'");
    }
    return j[key].get<std::string>();
  };
  RouteRequest r;
  r.user_id = field("user_id");
  r.task_id = field("task_id");
  r.query_text = field("query_text");
  if (j.contains("query_id") && !j["query_id"].is_null()) r.query_id = field("query_id");
  return r;
}

std::string to_json(const RouteResponse& response) {
  json scores = json::object();
  for (const auto& [id, v] : response.scores) scores[id] = v;
  return json{{"llm_id", response.llm_id}, {"scores", scores},
              {"model_version", response.model_version}}
      .dump();
}

RouteResponse route_request(const Snapshot& s, const RouteRequest& request) {
  const HeteroGraph& g = s.context.graph();
  const auto user = g.users.find(request.user_id);
  if (!user) throw RouteError("unknown user_id '" + request.user_id + "'");
  const auto task = g.tasks.find(request.task_id);
  if (!task) throw RouteError("unknown task_id '" + request.task_id + "'");
  char id[32];
  std::snprintf(id, sizeof id, "adhoc-%016llx",
                static_cast<unsigned long long>(fnv1a64(request.user_id + '\n' + request.task_id +
                                                        '\n' + request.query_text)));
  const std::string query_id = request.query_id.value_or(id);
  const auto feature = s.provider->embed(query_id, request.query_text);
  const auto logits = s.context.score_transient(*user, *task, feature);

  RouteResponse out;
  out.model_version = s.version;
  for (std::size_t i = 0; i < logits.size(); ++i) out.scores.emplace_back(g.llms.id(i), logits[i]);
  out.llm_id = g.llms.id(select_llm(logits));
  return out;
}

std::shared_ptr<const Snapshot> make_snapshot(const LoadedModel& loaded) {
  return std::make_shared<const Snapshot>(
      Snapshot{loaded.version, loaded.provider, make_context(loaded)});
}

RouterService::RouterService(std::shared_ptr<const Snapshot> snapshot)
    : current_(std::move(snapshot)) {
  if (!current_) throw std::invalid_argument("router service needs a snapshot");
}

std::shared_ptr<const Snapshot> RouterService::snapshot() const {
  std::lock_guard lock(mu_);
  return current_;
}

void RouterService::swap(std::shared_ptr<const Snapshot> next) {
  if (!next) throw std::invalid_argument("cannot swap in an empty snapshot");
  std::lock_guard lock(mu_);
  current_ = std::move(next);
}

RouteResponse RouterService::route(const RouteRequest& request) const {
  const auto s = snapshot();
  return route_request(*s, request);
}

void install_routes(httplib::Server& server, const RouterService& service) {
  server.Post("/route", [&service](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(to_json(service.route(route_request_from_json(req.body))),
                      "application/json");
    } catch (const RouteError& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  server.Get("/health", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"status", "ok"}, {"model_version", service.version()}}.dump(),
                    "application/json");
  });
}

}  // namespace prouter
