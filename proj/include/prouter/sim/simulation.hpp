#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prouter/core/dataset.hpp"

namespace prouter {

// One candidate response: what an LLM produced for a query and how it scored.
struct ResponseRow {
  std::string task_id;
  std::string query_id;
  std::string llm_id;
  std::string query_text;
  double performance = 0.0;
  std::uint64_t token_count = 0;
  std::optional<std::string> response_text;
};

struct ResponseLog {
  std::vector<ResponseRow> rows;
};

struct JudgeLabel {
  std::string user_id;
  std::string query_id;
  std::string best_llm_id;
};

[[nodiscard]] ResponseLog load_response_log(const std::filesystem::path& path);
void save_response_log(const std::filesystem::path& path, const ResponseLog& log);
[[nodiscard]] std::vector<JudgeLabel> load_judge_labels(const std::filesystem::path& path);
void save_judge_labels(const std::filesystem::path& path, const std::vector<JudgeLabel>& labels);

class TokenCounter {
 public:
  virtual ~TokenCounter() = default;
  [[nodiscard]] virtual std::uint64_t count(std::string_view text) const = 0;
};

// Counts whitespace-delimited tokens.
class WhitespaceTokenCounter final : public TokenCounter {
 public:
  [[nodiscard]] std::uint64_t count(std::string_view text) const override;
};

// token_count * price / 1e6.
[[nodiscard]] double compute_cost(std::uint64_t token_count, double price_per_million_tokens);

// Min-max scaling to [0, 1]; a constant list maps to all zeros.
[[nodiscard]] std::vector<double> normalize(std::span<const double> values);

// alpha * perf_norm - beta * cost_norm.
[[nodiscard]] double compute_reward(double perf_norm, double cost_norm, double alpha, double beta);

// Index of the largest value, lowest index on ties.
[[nodiscard]] std::size_t argmax_lowest(std::span<const double> values);

// Cost-efficiency interaction data: every weight-pair user in the registry
// against every logged query. Rewards use per-query normalization across the
// query's candidates; the reward-argmax candidate gets label 1.
[[nodiscard]] Dataset simulate_cost_eff(const ResponseLog& log, const Registry& registry);

// Judge interaction data: label 1 on the judged best answer of each
// (user, query). Performance and cost are carried along from the log.
[[nodiscard]] Dataset build_judge_dataset(const ResponseLog& log,
                                          const std::vector<JudgeLabel>& labels,
                                          const Registry& registry);

// Recomputes absent rewards for weight-pair users; stored rewards are kept.
void fill_missing_rewards(std::vector<InteractionRecord>& records, const Registry& registry);
[[nodiscard]] Dataset with_rewards(const Dataset& dataset, const Registry& registry);

// Seeded desk-scale response log. Performance and token counts are drawn from
// per-(task, llm) distributions; larger models score higher on average.
struct SyntheticLogConfig {
  std::size_t queries_per_task = 100;
  std::uint64_t seed = 7;
};
[[nodiscard]] ResponseLog synthesize_responses(const Registry& registry,
                                               const SyntheticLogConfig& config);

// Judge labels where the best LLM is a fixed seeded function of (user, task):
// argmax over LLMs of the mean logged performance on the task plus a per-user
// affinity drawn from N(0, kJudgeStyleSpread^2).
inline constexpr double kJudgeStyleSpread = 0.1;
[[nodiscard]] std::vector<JudgeLabel> synthesize_judge_labels(const ResponseLog& log,
                                                              const Registry& registry,
                                                              std::uint64_t seed);

}  // namespace prouter
