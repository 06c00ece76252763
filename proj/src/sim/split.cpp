#include "prouter/sim/split.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "prouter/numerics/rng.hpp"

namespace prouter {

using nlohmann::json;

std::string to_string(SplitMode m) {
  switch (m) {
    case SplitMode::Standard: return "standard";
    case SplitMode::NewUser: return "new_user";
    case SplitMode::NewLlm: return "new_llm";
  }
  return "standard";
}

SplitMode split_mode_from_string(const std::string& s) {
  if (s == "standard") return SplitMode::Standard;
  if (s == "new_user" || s == "new-user") return SplitMode::NewUser;
  if (s == "new_llm" || s == "new-llm") return SplitMode::NewLlm;
  throw std::invalid_argument("unknown split mode '" + s + "'");
}

namespace {

bool group_held_out(const Dataset& dataset, const CandidateGroup& g, SplitMode mode,
                    const std::set<std::string>& held) {
  if (mode == SplitMode::NewUser) return held.count(g.key.user_id) > 0;
  if (mode == SplitMode::NewLlm) return held.count(dataset.best(g).llm_id) > 0;
  return false;
}

}  // namespace

SplitManifest split_dataset(const Dataset& dataset, SplitMode mode, std::uint64_t seed,
                            const std::vector<std::string>& held_out_ids,
                            double auxiliary_fraction) {
  if (!(auxiliary_fraction > 0.0 && auxiliary_fraction <= 1.0)) {
    throw std::invalid_argument("auxiliary_fraction must lie in (0, 1]");
  }
  if ((mode == SplitMode::Standard) != held_out_ids.empty()) {
    throw std::invalid_argument(mode == SplitMode::Standard
                                    ? "standard split takes no held-out ids"
                                    : "held-out split needs at least one held-out id");
  }
  std::set<std::string> held(held_out_ids.begin(), held_out_ids.end());
  if (mode != SplitMode::Standard) {
    std::set<std::string> known;
    for (const auto& r : dataset.records()) {
      known.insert(mode == SplitMode::NewUser ? r.user_id : r.llm_id);
    }
    for (const auto& id : held) {
      if (!known.count(id)) throw std::invalid_argument("held-out id unknown: '" + id + "'");
    }
  }

  SplitManifest m;
  m.mode = mode;
  m.seed = seed;
  m.auxiliary_fraction = auxiliary_fraction;
  m.held_out_ids.assign(held.begin(), held.end());

  auto keys = dataset.group_keys();
  Rng rng(seed);
  rng.shuffle(keys);
  const std::size_t n = keys.size();
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n / 10;
  m.train.assign(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.validation.assign(keys.begin() + static_cast<std::ptrdiff_t>(n_train),
                      keys.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  m.test.assign(keys.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), keys.end());

  if (mode != SplitMode::Standard) {
    auto held_out = [&](const GroupKey& k) {
      return group_held_out(dataset, *dataset.find_group(k), mode, held);
    };
    std::vector<GroupKey> removed_train;
    std::vector<GroupKey> kept;
    for (const auto& k : m.train) (held_out(k) ? removed_train : kept).push_back(k);
    m.train = std::move(kept);
    std::erase_if(m.validation, held_out);

    std::sort(removed_train.begin(), removed_train.end());
    Rng aux_rng(mix_seed(seed, 0x61757869ULL));
    aux_rng.shuffle(removed_train);
    const auto take = static_cast<std::size_t>(
        auxiliary_fraction * static_cast<double>(removed_train.size()));
    m.auxiliary.assign(removed_train.begin(),
                       removed_train.begin() + static_cast<std::ptrdiff_t>(take));
  }

  std::sort(m.train.begin(), m.train.end());
  std::sort(m.validation.begin(), m.validation.end());
  std::sort(m.test.begin(), m.test.end());
  std::sort(m.auxiliary.begin(), m.auxiliary.end());
  return m;
}

std::vector<std::string> check_manifest(const SplitManifest& m, const Dataset& dataset) {
  std::vector<std::string> problems;
  std::set<GroupKey> train(m.train.begin(), m.train.end());
  std::set<GroupKey> val(m.validation.begin(), m.validation.end());
  std::set<GroupKey> test(m.test.begin(), m.test.end());
  if (train.size() != m.train.size() || val.size() != m.validation.size() ||
      test.size() != m.test.size()) {
    problems.push_back("duplicate key inside a partition");
  }
  for (const auto& k : val) {
    if (train.count(k)) problems.push_back("train/validation overlap at " + k.str());
  }
  for (const auto& k : test) {
    if (train.count(k) || val.count(k)) problems.push_back("test overlap at " + k.str());
  }
  std::set<GroupKey> all = train;
  all.insert(val.begin(), val.end());
  all.insert(test.begin(), test.end());
  std::set<std::string> held(m.held_out_ids.begin(), m.held_out_ids.end());
  for (const auto& g : dataset.groups()) {
    if (!all.count(g.key) && !group_held_out(dataset, g, m.mode, held)) {
      problems.push_back("group not covered: " + g.key.str());
    }
  }
  for (const auto& k : all) {
    if (!dataset.find_group(k)) problems.push_back("unknown group " + k.str());
  }
  for (const auto& k : m.auxiliary) {
    const CandidateGroup* g = dataset.find_group(k);
    if (!g) {
      problems.push_back("unknown auxiliary group " + k.str());
      continue;
    }
    if (all.count(k)) problems.push_back("auxiliary key inside a partition: " + k.str());
    if (!group_held_out(dataset, *g, m.mode, held)) {
      problems.push_back("auxiliary group not held out: " + k.str());
    }
  }
  if (m.mode == SplitMode::Standard && !m.auxiliary.empty()) {
    problems.push_back("standard split with auxiliary keys");
  }
  return problems;
}

namespace {

json keys_to_json(const std::vector<GroupKey>& keys) {
  json arr = json::array();
  for (const auto& k : keys) arr.push_back(json::array({k.user_id, k.query_id}));
  return arr;
}

std::vector<GroupKey> keys_from_json(const json& arr) {
  std::vector<GroupKey> keys;
  for (const auto& k : arr) keys.push_back({k.at(0).get<std::string>(), k.at(1).get<std::string>()});
  return keys;
}

}  // namespace

std::string manifest_to_json(const SplitManifest& m) {
  json j;
  j["mode"] = to_string(m.mode);
  j["seed"] = m.seed;
  j["auxiliary_fraction"] = m.auxiliary_fraction;
  j["held_out_ids"] = m.held_out_ids;
  j["train"] = keys_to_json(m.train);
  j["validation"] = keys_to_json(m.validation);
  j["test"] = keys_to_json(m.test);
  j["auxiliary"] = keys_to_json(m.auxiliary);
  return j.dump(1) + "\n";
}

SplitManifest manifest_from_json(const std::string& text) {
  const json j = json::parse(text);
  SplitManifest m;
  m.mode = split_mode_from_string(j.at("mode").get<std::string>());
  m.seed = j.at("seed").get<std::uint64_t>();
  m.auxiliary_fraction = j.value("auxiliary_fraction", kDefaultAuxiliaryFraction);
  m.held_out_ids = j.at("held_out_ids").get<std::vector<std::string>>();
  m.train = keys_from_json(j.at("train"));
  m.validation = keys_from_json(j.at("validation"));
  m.test = keys_from_json(j.at("test"));
  m.auxiliary = keys_from_json(j.at("auxiliary"));
  return m;
}

void save_manifest(const std::filesystem::path& path, const SplitManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << manifest_to_json(manifest);
}

SplitManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

Dataset training_view(const Dataset& dataset, const SplitManifest& m) {
  std::set<std::string> held(m.held_out_ids.begin(), m.held_out_ids.end());
  std::set<GroupKey> fit(m.train.begin(), m.train.end());
  fit.insert(m.validation.begin(), m.validation.end());
  std::vector<GroupKey> keys = m.train;
  keys.insert(keys.end(), m.validation.begin(), m.validation.end());
  keys.insert(keys.end(), m.test.begin(), m.test.end());
  std::sort(keys.begin(), keys.end());
  std::vector<InteractionRecord> records;
  for (const auto& k : keys) {
    const CandidateGroup* g = dataset.find_group(k);
    if (!g) throw DatasetError("manifest references unknown group " + k.str());
    for (std::size_t pos = 0; pos < g->members.size(); ++pos) {
      const auto& r = dataset.record(*g, pos);
      if (m.mode == SplitMode::NewLlm && fit.count(k) && held.count(r.llm_id)) continue;
      records.push_back(r);
    }
  }
  return Dataset::from_records(std::move(records));
}

std::vector<InteractionRecord> auxiliary_records(const Dataset& dataset, const SplitManifest& m) {
  std::vector<InteractionRecord> records;
  for (const auto& k : m.auxiliary) {
    const CandidateGroup* g = dataset.find_group(k);
    if (!g) throw DatasetError("manifest references unknown group " + k.str());
    for (std::size_t pos = 0; pos < g->members.size(); ++pos) records.push_back(dataset.record(*g, pos));
  }
  return records;
}

}  // namespace prouter
