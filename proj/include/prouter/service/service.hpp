#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prouter/gnn/router.hpp"
#include "prouter/sim/split.hpp"

namespace httplib {
class Server;
}

namespace prouter {

// Checkpoint metadata keys written by `train`. Paths to the dataset and the
// split are stored relative to the checkpoint's directory.
inline constexpr const char* kMetaData = "data";
inline constexpr const char* kMetaSplit = "split";
inline constexpr const char* kMetaRegistry = "registry";
inline constexpr const char* kMetaEmbedSeed = "embed_seed";

// Default registry shipped for each strategy.
[[nodiscard]] std::filesystem::path default_registry_dir(Strategy strategy);

// Everything needed to rebuild the graph a checkpoint was trained on.
struct LoadedModel {
  std::filesystem::path checkpoint_path;
  std::string version;  // digest of the checkpoint file
  std::shared_ptr<const RouterModel> model;
  Registry registry;
  std::shared_ptr<const EmbeddingProvider> provider;
  Dataset dataset;
  SplitManifest manifest;
};

struct LoadOverrides {
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> split;
  std::optional<std::filesystem::path> registry;
};

// Throws CheckpointError, DatasetError or std::runtime_error on unreadable or
// inconsistent inputs, including a registry whose user count differs from the
// model's one-hot width.
[[nodiscard]] LoadedModel load_model(const std::filesystem::path& checkpoint,
                                     const LoadOverrides& overrides = {});

// Graph over the manifest's training view with query–llm features visible
// for the training partition only.
[[nodiscard]] InferenceContext make_context(const LoadedModel& loaded);

struct RouteRequest {
  std::string user_id;
  std::string task_id;
  std::string query_text;
  std::optional<std::string> query_id;
};

struct RouteResponse {
  std::string llm_id;
  std::vector<std::pair<std::string, double>> scores;  // registry LLM order
  std::string model_version;

  friend bool operator==(const RouteResponse&, const RouteResponse&) = default;
};

// Bad request content (unknown ids, malformed JSON, missing fields).
class RouteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[nodiscard]] RouteRequest route_request_from_json(const std::string& body);
[[nodiscard]] std::string to_json(const RouteResponse& response);

// Immutable serving state.
struct Snapshot {
  std::string version;
  std::shared_ptr<const EmbeddingProvider> provider;
  InferenceContext context;
};

[[nodiscard]] RouteResponse route_request(const Snapshot& snapshot, const RouteRequest& request);

// Serves requests against the current snapshot. A reload builds a new
// snapshot off to the side and swaps it in; requests in flight keep the one
// they started with.
class RouterService {
 public:
  explicit RouterService(std::shared_ptr<const Snapshot> snapshot);

  [[nodiscard]] std::shared_ptr<const Snapshot> snapshot() const;
  void swap(std::shared_ptr<const Snapshot> next);

  [[nodiscard]] RouteResponse route(const RouteRequest& request) const;
  [[nodiscard]] std::string version() const { return snapshot()->version; }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Snapshot> current_;
};

[[nodiscard]] std::shared_ptr<const Snapshot> make_snapshot(const LoadedModel& loaded);

// POST /route and GET /health. Client errors answer 400 with {"error": ...}.
void install_routes(httplib::Server& server, const RouterService& service);

}  // namespace prouter
