#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "prouter/gnn/router.hpp"

namespace prouter {

// Parses a JSON object with any of the keys layers, hidden, batch_size,
// epochs, initial_lr, seed, embed_dim, strategy, patience. Missing keys keep
// their defaults; unknown keys and invalid values throw std::invalid_argument.
[[nodiscard]] TrainConfig parse_train_config(const std::string& json_text);
[[nodiscard]] TrainConfig load_train_config(const std::filesystem::path& path);
[[nodiscard]] std::string train_config_to_json(const TrainConfig& config);

// ROUTER_CONFIG when set and non-empty, else the given path.
[[nodiscard]] std::optional<std::filesystem::path> resolve_config_path(
    const std::optional<std::filesystem::path>& given);

}  // namespace prouter
