#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prouter/core/dataset.hpp"

namespace prouter {

enum class SplitMode { Standard, NewUser, NewLlm };

[[nodiscard]] std::string to_string(SplitMode m);
[[nodiscard]] SplitMode split_mode_from_string(const std::string& s);

inline constexpr double kDefaultAuxiliaryFraction = 0.5;

struct SplitManifest {
  SplitMode mode = SplitMode::Standard;
  std::uint64_t seed = 0;
  double auxiliary_fraction = kDefaultAuxiliaryFraction;
  std::vector<std::string> held_out_ids;
  std::vector<GroupKey> train;
  std::vector<GroupKey> validation;
  std::vector<GroupKey> test;
  std::vector<GroupKey> auxiliary;

  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

// Shuffles the groups with `seed` and cuts 70/10/20 by count: floor for train
// and validation, the remainder to test. In the held-out modes the held-out
// entities' train and validation groups are dropped (test stays as in the
// standard split) and `auxiliary` is a seeded sample of
// floor(auxiliary_fraction * n) of the dropped training groups.
// A group belongs to a held-out LLM when its label-1 record is that LLM.
// Every key list is sorted.
[[nodiscard]] SplitManifest split_dataset(const Dataset& dataset, SplitMode mode,
                                          std::uint64_t seed,
                                          const std::vector<std::string>& held_out_ids = {},
                                          double auxiliary_fraction = kDefaultAuxiliaryFraction);

// Disjointness, coverage and auxiliary exclusion. Empty when all hold.
[[nodiscard]] std::vector<std::string> check_manifest(const SplitManifest& manifest,
                                                      const Dataset& dataset);

[[nodiscard]] std::string manifest_to_json(const SplitManifest& manifest);
[[nodiscard]] SplitManifest manifest_from_json(const std::string& text);
void save_manifest(const std::filesystem::path& path, const SplitManifest& manifest);
[[nodiscard]] SplitManifest load_manifest(const std::filesystem::path& path);

// Records the model may see during training: all train, validation and test
// groups (test labels are masked downstream). Under new_llm, held-out LLM
// candidates are stripped from train and validation groups.
[[nodiscard]] Dataset training_view(const Dataset& dataset, const SplitManifest& manifest);

// Records of the auxiliary groups, for few-shot injection.
[[nodiscard]] std::vector<InteractionRecord> auxiliary_records(const Dataset& dataset,
                                                               const SplitManifest& manifest);

}  // namespace prouter
