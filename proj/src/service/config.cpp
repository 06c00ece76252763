#include "prouter/service/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace prouter {

using nlohmann::json;

namespace {

template <typename T>
T positive_int(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw std::invalid_argument("config key '" + key + "' must be a non-negative integer");
  }
  return static_cast<T>(v.get<long long>());
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "layers") c.layers = positive_int<std::size_t>(v, key);
    else if (key == "hidden") c.hidden = positive_int<std::size_t>(v, key);
    else if (key == "batch_size") c.batch_size = positive_int<std::size_t>(v, key);
    else if (key == "epochs") c.epochs = positive_int<int>(v, key);
    else if (key == "embed_dim") c.embed_dim = positive_int<std::size_t>(v, key);
    else if (key == "patience") c.patience = positive_int<int>(v, key);
    else if (key == "seed") c.seed = positive_int<std::uint64_t>(v, key);
    else if (key == "initial_lr") {
      if (!v.is_number()) throw std::invalid_argument("config key 'initial_lr' must be a number");
      c.initial_lr = v.get<double>();
    } else if (key == "strategy") {
      if (!v.is_string()) throw std::invalid_argument("config key 'strategy' must be a string");
      c.strategy = strategy_from_string(v.get<std::string>());
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  validate(c);
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["layers"] = c.layers;
  j["hidden"] = c.hidden;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["initial_lr"] = c.initial_lr;
  j["seed"] = c.seed;
  j["embed_dim"] = c.embed_dim;
  j["strategy"] = to_string(c.strategy);
  j["patience"] = c.patience;
  return j.dump(2) + "\n";
}

std::optional<std::filesystem::path> resolve_config_path(
    const std::optional<std::filesystem::path>& given) {
  const char* env = std::getenv("ROUTER_CONFIG");
  if (env && *env) return std::filesystem::path(env);
  return given;
}

}  // namespace prouter
