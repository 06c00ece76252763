#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prouter/core/types.hpp"

namespace prouter {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Registry {
 public:
  Registry() = default;
  Registry(std::vector<LlmProfile> llms, std::vector<TaskProfile> tasks,
           std::vector<UserProfile> users);

  // Reads llms.json, tasks.json and users.json from dir.
  static Registry load_dir(const std::filesystem::path& dir);
  void save_dir(const std::filesystem::path& dir) const;

  [[nodiscard]] const std::vector<LlmProfile>& llms() const noexcept { return llms_; }
  [[nodiscard]] const std::vector<TaskProfile>& tasks() const noexcept { return tasks_; }
  [[nodiscard]] const std::vector<UserProfile>& users() const noexcept { return users_; }

  [[nodiscard]] const LlmProfile* find_llm(const std::string& id) const;
  [[nodiscard]] const TaskProfile* find_task(const std::string& id) const;
  [[nodiscard]] const UserProfile* find_user(const std::string& id) const;

  [[nodiscard]] bool empty() const noexcept {
    return llms_.empty() && tasks_.empty() && users_.empty();
  }

 private:
  void reindex();

  std::vector<LlmProfile> llms_;
  std::vector<TaskProfile> tasks_;
  std::vector<UserProfile> users_;
  std::map<std::string, std::size_t> llm_index_, task_index_, user_index_;
};

struct ValidationResult {
  std::vector<std::string> violations;
  [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
};

// Pure check of one record against the registry. Violations come back in a
// fixed order: unknown ids, value ranges, user weight fields.
[[nodiscard]] ValidationResult validate_record(const InteractionRecord& record,
                                               const Registry& registry);

class Dataset {
 public:
  Dataset() = default;

  // Groups records by (user_id, query_id). Throws DatasetError on a group
  // without exactly one label-1 record or on a repeated (user, query, llm).
  static Dataset from_records(std::vector<InteractionRecord> records);

  [[nodiscard]] const std::vector<InteractionRecord>& records() const noexcept { return records_; }
  [[nodiscard]] const std::vector<CandidateGroup>& groups() const noexcept { return groups_; }
  [[nodiscard]] const CandidateGroup* find_group(const GroupKey& key) const;
  [[nodiscard]] std::vector<GroupKey> group_keys() const;

  [[nodiscard]] const InteractionRecord& record(const CandidateGroup& g, std::size_t pos) const {
    return records_[g.members[pos]];
  }
  [[nodiscard]] const InteractionRecord& best(const CandidateGroup& g) const {
    return records_[g.members[g.label_position]];
  }

  // Subset restricted to the given groups, in key order.
  [[nodiscard]] Dataset select(const std::vector<GroupKey>& keys) const;

 private:
  std::vector<InteractionRecord> records_;
  std::vector<CandidateGroup> groups_;
  std::map<GroupKey, std::size_t> group_index_;
};

// Line-delimited JSON, one record per line. Blank lines are skipped.
[[nodiscard]] Dataset load_dataset(const std::filesystem::path& path);
[[nodiscard]] std::vector<InteractionRecord> parse_records(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
void write_records(std::ostream& out, const std::vector<InteractionRecord>& records);

}  // namespace prouter
