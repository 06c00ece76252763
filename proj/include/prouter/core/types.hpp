#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace prouter {

struct LlmProfile {
  std::string llm_id;
  std::string display_name;
  std::string size_label;  // e.g. "8B"; may be empty
  double price_per_million_tokens = 0.0;
  std::string description;
};

enum class MetricName { F1, Accuracy };

struct TaskProfile {
  std::string task_id;
  MetricName metric_name = MetricName::F1;
  std::string description;
};

enum class UserKind { WeightPair, Judged, Real };

struct UserProfile {
  std::string user_id;
  UserKind kind = UserKind::WeightPair;
  std::optional<double> alpha;  // weight_pair users only
  std::optional<double> beta;
  std::string profile_text;  // judged / real users
};

struct InteractionRecord {
  std::string record_id;
  std::string user_id;
  std::string task_id;
  std::string query_id;
  std::string query_text;
  std::string llm_id;
  double performance = 0.0;
  double raw_cost = 0.0;
  std::optional<double> reward;
  int label = 0;
  std::optional<std::string> response_text;
};

// Identifies one routing decision: a user asking one query.
struct GroupKey {
  std::string user_id;
  std::string query_id;

  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
  friend bool operator==(const GroupKey&, const GroupKey&) = default;

  [[nodiscard]] std::string str() const { return user_id + "/" + query_id; }
};

// All candidate records of one (user, query). Members index into the
// dataset's record list and keep file order.
struct CandidateGroup {
  GroupKey key;
  std::string task_id;
  std::vector<std::size_t> members;
  std::size_t label_position = 0;  // position within members of the label-1 record
};

[[nodiscard]] std::string to_string(MetricName m);
[[nodiscard]] MetricName metric_from_string(const std::string& s);
[[nodiscard]] std::string to_string(UserKind k);
[[nodiscard]] UserKind user_kind_from_string(const std::string& s);

}  // namespace prouter
