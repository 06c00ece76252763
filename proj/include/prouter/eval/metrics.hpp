#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prouter/core/dataset.hpp"

namespace prouter {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UserMetrics {
  double mean_reward = 0.0;
  double accuracy = 0.0;
  std::size_t n_groups = 0;

  friend bool operator==(const UserMetrics&, const UserMetrics&) = default;
};

struct Metrics {
  double mean_reward = 0.0;  // meaningful only when has_reward
  double accuracy = 0.0;
  std::size_t n_groups = 0;
  bool has_reward = false;   // every chosen record carried a reward
  std::map<std::string, UserMetrics> per_user;

  // Reward averaged over users instead of groups.
  [[nodiscard]] double user_mean_reward() const;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

// Maps a candidate group to the llm_id it routes to.
using GroupRouter = std::function<std::string(const CandidateGroup&)>;

// Sums run in key order, so the result does not depend on the order of
// `test_keys`. Throws EvalError on unknown groups, an empty key list or a
// chosen id that is not among the group's candidates.
[[nodiscard]] Metrics evaluate(const GroupRouter& router, const std::vector<GroupKey>& test_keys,
                               const Dataset& dataset);

// Reward argmax when the group carries rewards, the label-1 record otherwise.
[[nodiscard]] std::string oracle_choice(const CandidateGroup& group, const Dataset& dataset);
[[nodiscard]] Metrics oracle(const std::vector<GroupKey>& test_keys, const Dataset& dataset);

// 100 * (value - baseline) / |baseline|. Throws std::invalid_argument when
// baseline is zero.
[[nodiscard]] double improvement(double value, double baseline);

enum class BaselineKind { Random, PerTaskBest, MostPopular };
[[nodiscard]] std::string to_string(BaselineKind k);
[[nodiscard]] BaselineKind baseline_from_string(const std::string& s);
inline constexpr BaselineKind kAllBaselines[] = {BaselineKind::Random, BaselineKind::PerTaskBest,
                                                 BaselineKind::MostPopular};

// random: uniform candidate, seeded per group key.
// per_task_best: per task, the LLM with the highest mean training reward, or
//   the most frequent label-1 LLM when training records carry no reward.
// most_popular: the most frequent label-1 LLM over all training groups.
// When the preferred LLM is not a candidate the next one in the ranking is
// used. Throws EvalError on empty training data for the data-driven kinds.
[[nodiscard]] GroupRouter make_baseline(BaselineKind kind, const std::vector<GroupKey>& train_keys,
                                        const Dataset& dataset, std::uint64_t seed);
[[nodiscard]] Metrics run_baseline(BaselineKind kind, const std::vector<GroupKey>& train_keys,
                                   const std::vector<GroupKey>& test_keys, const Dataset& dataset,
                                   std::uint64_t seed);

struct ReportRow {
  std::string name;
  Metrics metrics;
};

// Aggregate table (routers, baselines, Oracle), per-user table, and the
// improvement of every router over every baseline. Uses reward when all rows
// carry one, accuracy otherwise.
[[nodiscard]] std::string format_report(const std::vector<ReportRow>& routers,
                                        const std::vector<ReportRow>& baselines,
                                        const Metrics& oracle_metrics);

}  // namespace prouter
