#include "prouter/core/dataset.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace prouter {

using nlohmann::json;

std::string to_string(MetricName m) { return m == MetricName::F1 ? "f1" : "accuracy"; }

MetricName metric_from_string(const std::string& s) {
  if (s == "f1") return MetricName::F1;
  if (s == "accuracy") return MetricName::Accuracy;
  throw DatasetError("unknown metric_name '" + s + "'");
}

std::string to_string(UserKind k) {
  switch (k) {
    case UserKind::WeightPair: return "weight_pair";
    case UserKind::Judged: return "judged";
    case UserKind::Real: return "real";
  }
  return "weight_pair";
}

UserKind user_kind_from_string(const std::string& s) {
  if (s == "weight_pair") return UserKind::WeightPair;
  if (s == "judged") return UserKind::Judged;
  if (s == "real") return UserKind::Real;
  throw DatasetError("unknown user kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Registry

Registry::Registry(std::vector<LlmProfile> llms, std::vector<TaskProfile> tasks,
                   std::vector<UserProfile> users)
    : llms_(std::move(llms)), tasks_(std::move(tasks)), users_(std::move(users)) {
  reindex();
}

void Registry::reindex() {
  llm_index_.clear();
  task_index_.clear();
  user_index_.clear();
  for (std::size_t i = 0; i < llms_.size(); ++i) {
    if (llms_[i].price_per_million_tokens < 0.0) {
      throw DatasetError("llm '" + llms_[i].llm_id + "' has negative price");
    }
    if (!llm_index_.emplace(llms_[i].llm_id, i).second) {
      throw DatasetError("duplicate llm_id '" + llms_[i].llm_id + "'");
    }
  }
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (!task_index_.emplace(tasks_[i].task_id, i).second) {
      throw DatasetError("duplicate task_id '" + tasks_[i].task_id + "'");
    }
  }
  for (std::size_t i = 0; i < users_.size(); ++i) {
    const auto& u = users_[i];
    if (u.kind == UserKind::WeightPair && (!u.alpha || !u.beta)) {
      throw DatasetError("weight_pair user '" + u.user_id + "' needs alpha and beta");
    }
    if (!user_index_.emplace(u.user_id, i).second) {
      throw DatasetError("duplicate user_id '" + u.user_id + "'");
    }
  }
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

Registry Registry::load_dir(const std::filesystem::path& dir) {
  std::vector<LlmProfile> llms;
  std::vector<TaskProfile> tasks;
  std::vector<UserProfile> users;
  try {
    for (const auto& j : read_json_file(dir / "llms.json")) {
      llms.push_back({j.at("llm_id").get<std::string>(), j.value("display_name", ""),
                      j.value("size_label", ""), j.at("price_per_million_tokens").get<double>(),
                      j.value("description", "")});
    }
    for (const auto& j : read_json_file(dir / "tasks.json")) {
      tasks.push_back({j.at("task_id").get<std::string>(),
                       metric_from_string(j.at("metric_name").get<std::string>()),
                       j.value("description", "")});
    }
    for (const auto& j : read_json_file(dir / "users.json")) {
      UserProfile u;
      u.user_id = j.at("user_id").get<std::string>();
      u.kind = user_kind_from_string(j.at("kind").get<std::string>());
      if (j.contains("alpha")) u.alpha = j.at("alpha").get<double>();
      if (j.contains("beta")) u.beta = j.at("beta").get<double>();
      u.profile_text = j.value("profile_text", "");
      users.push_back(std::move(u));
    }
  } catch (const json::exception& e) {
    throw DatasetError("registry " + dir.string() + ": " + e.what());
  }
  return Registry(std::move(llms), std::move(tasks), std::move(users));
}

void Registry::save_dir(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json llms = json::array(), tasks = json::array(), users = json::array();
  for (const auto& l : llms_) {
    llms.push_back({{"llm_id", l.llm_id},
                    {"display_name", l.display_name},
                    {"size_label", l.size_label},
                    {"price_per_million_tokens", l.price_per_million_tokens},
                    {"description", l.description}});
  }
  for (const auto& t : tasks_) {
    tasks.push_back({{"task_id", t.task_id},
                     {"metric_name", to_string(t.metric_name)},
                     {"description", t.description}});
  }
  for (const auto& u : users_) {
    json j = {{"user_id", u.user_id}, {"kind", to_string(u.kind)}};
    if (u.alpha) j["alpha"] = *u.alpha;
    if (u.beta) j["beta"] = *u.beta;
    if (!u.profile_text.empty()) j["profile_text"] = u.profile_text;
    users.push_back(std::move(j));
  }
  write_json_file(dir / "llms.json", llms);
  write_json_file(dir / "tasks.json", tasks);
  write_json_file(dir / "users.json", users);
}

const LlmProfile* Registry::find_llm(const std::string& id) const {
  auto it = llm_index_.find(id);
  return it == llm_index_.end() ? nullptr : &llms_[it->second];
}
const TaskProfile* Registry::find_task(const std::string& id) const {
  auto it = task_index_.find(id);
  return it == task_index_.end() ? nullptr : &tasks_[it->second];
}
const UserProfile* Registry::find_user(const std::string& id) const {
  auto it = user_index_.find(id);
  return it == user_index_.end() ? nullptr : &users_[it->second];
}

// ---------------------------------------------------------------------------
// Validation

ValidationResult validate_record(const InteractionRecord& r, const Registry& registry) {
  ValidationResult res;
  const UserProfile* user = registry.find_user(r.user_id);
  if (!user) res.violations.push_back("unknown user_id '" + r.user_id + "'");
  if (!registry.find_task(r.task_id)) res.violations.push_back("unknown task_id '" + r.task_id + "'");
  if (!registry.find_llm(r.llm_id)) res.violations.push_back("unknown llm_id '" + r.llm_id + "'");
  if (!(r.performance >= 0.0 && r.performance <= 1.0)) {
    res.violations.push_back("performance out of [0,1]");
  }
  if (!(r.raw_cost >= 0.0) || !std::isfinite(r.raw_cost)) res.violations.push_back("negative cost");
  if (r.label != 0 && r.label != 1) res.violations.push_back("label not in {0,1}");
  if (r.reward && !std::isfinite(*r.reward)) res.violations.push_back("non-finite reward");
  if (user && user->kind == UserKind::WeightPair && (!user->alpha || !user->beta)) {
    res.violations.push_back("missing weight fields for user '" + r.user_id + "'");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::from_records(std::vector<InteractionRecord> records) {
  Dataset d;
  d.records_ = std::move(records);
  std::map<GroupKey, std::vector<std::size_t>> members;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (std::size_t i = 0; i < d.records_.size(); ++i) {
    const auto& r = d.records_[i];
    if (!seen.emplace(r.user_id, r.query_id, r.llm_id).second) {
      throw DatasetError("duplicate record for (" + r.user_id + ", " + r.query_id + ", " +
                         r.llm_id + ")");
    }
    members[GroupKey{r.user_id, r.query_id}].push_back(i);
  }
  for (auto& [key, idx] : members) {
    CandidateGroup g;
    g.key = key;
    g.task_id = d.records_[idx.front()].task_id;
    std::size_t positives = 0;
    for (std::size_t p = 0; p < idx.size(); ++p) {
      const auto& r = d.records_[idx[p]];
      if (r.task_id != g.task_id) {
        throw DatasetError("group (" + key.user_id + ", " + key.query_id +
                           ") mixes task ids");
      }
      if (r.label == 1) {
        ++positives;
        g.label_position = p;
      }
    }
    if (positives != 1) {
      throw DatasetError("group (" + key.user_id + ", " + key.query_id + ") has " +
                         std::to_string(positives) + " label-1 records, expected exactly one");
    }
    g.members = std::move(idx);
    d.group_index_.emplace(key, d.groups_.size());
    d.groups_.push_back(std::move(g));
  }
  return d;
}

const CandidateGroup* Dataset::find_group(const GroupKey& key) const {
  auto it = group_index_.find(key);
  return it == group_index_.end() ? nullptr : &groups_[it->second];
}

std::vector<GroupKey> Dataset::group_keys() const {
  std::vector<GroupKey> keys;
  keys.reserve(groups_.size());
  for (const auto& g : groups_) keys.push_back(g.key);
  return keys;
}

Dataset Dataset::select(const std::vector<GroupKey>& keys) const {
  std::set<GroupKey> wanted(keys.begin(), keys.end());
  std::vector<InteractionRecord> out;
  for (const auto& g : groups_) {
    if (!wanted.count(g.key)) continue;
    for (std::size_t m : g.members) out.push_back(records_[m]);
  }
  return from_records(std::move(out));
}

namespace {

InteractionRecord record_from_json(const json& j) {
  InteractionRecord r;
  r.record_id = j.at("record_id").get<std::string>();
  r.user_id = j.at("user_id").get<std::string>();
  r.task_id = j.at("task_id").get<std::string>();
  r.query_id = j.at("query_id").get<std::string>();
  r.query_text = j.at("query_text").get<std::string>();
  r.llm_id = j.at("llm_id").get<std::string>();
  r.performance = j.at("performance").get<double>();
  r.raw_cost = j.at("raw_cost").get<double>();
  r.label = j.at("label").get<int>();
  if (j.contains("reward") && !j.at("reward").is_null()) r.reward = j.at("reward").get<double>();
  if (j.contains("response_text") && !j.at("response_text").is_null()) {
    r.response_text = j.at("response_text").get<std::string>();
  }
  return r;
}

json record_to_json(const InteractionRecord& r) {
  json j = {{"record_id", r.record_id}, {"user_id", r.user_id},       {"task_id", r.task_id},
            {"query_id", r.query_id},   {"query_text", r.query_text}, {"llm_id", r.llm_id},
            {"performance", r.performance}, {"raw_cost", r.raw_cost}, {"label", r.label}};
  if (r.reward) j["reward"] = *r.reward;
  if (r.response_text) j["response_text"] = *r.response_text;
  return j;
}

}  // namespace

std::vector<InteractionRecord> parse_records(std::istream& in) {
  std::vector<InteractionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DatasetError("parse error on line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  return Dataset::from_records(parse_records(in));
}

void write_records(std::ostream& out, const std::vector<InteractionRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset " + path.string());
  write_records(out, dataset.records());
}

}  // namespace prouter
