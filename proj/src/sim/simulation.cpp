#include "prouter/sim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "prouter/numerics/rng.hpp"

namespace prouter {

using nlohmann::json;

namespace {

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw DatasetError(path.string() + ": parse error on line " + std::to_string(line_no) +
                         ": " + e.what());
    }
  }
}

// Candidate pool of one logged query, rows ordered by registry LLM order.
struct LoggedQuery {
  std::string task_id;
  std::string query_id;
  std::string query_text;
  std::vector<const ResponseRow*> rows;
};

std::vector<LoggedQuery> pools_by_query(const ResponseLog& log, const Registry& registry) {
  std::vector<LoggedQuery> pools;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::size_t> llm_pos;
  for (std::size_t i = 0; i < registry.llms().size(); ++i) llm_pos[registry.llms()[i].llm_id] = i;
  for (const auto& row : log.rows) {
    auto it = llm_pos.find(row.llm_id);
    if (it == llm_pos.end()) {
      throw DatasetError("response log references unknown llm '" + row.llm_id + "'");
    }
    auto [pit, inserted] = index.emplace(row.query_id, pools.size());
    if (inserted) {
      pools.push_back({row.task_id, row.query_id, row.query_text,
                       std::vector<const ResponseRow*>(registry.llms().size(), nullptr)});
    }
    LoggedQuery& pool = pools[pit->second];
    if (pool.task_id != row.task_id) {
      throw DatasetError("query '" + row.query_id + "' logged under two tasks");
    }
    if (pool.rows[it->second]) {
      throw DatasetError("duplicate response for (" + row.query_id + ", " + row.llm_id + ")");
    }
    pool.rows[it->second] = &row;
  }
  for (const auto& pool : pools) {
    for (std::size_t l = 0; l < pool.rows.size(); ++l) {
      if (!pool.rows[l]) {
        throw DatasetError("incomplete candidate pool for query '" + pool.query_id +
                           "': missing llm '" + registry.llms()[l].llm_id + "'");
      }
    }
  }
  return pools;
}

std::string record_id_for(const std::string& user, const std::string& query, const std::string& llm) {
  return user + ":" + query + ":" + llm;
}

}  // namespace

ResponseLog load_response_log(const std::filesystem::path& path) {
  ResponseLog log;
  for_each_json_line(path, [&](const json& j) {
    ResponseRow r;
    r.task_id = j.at("task_id").get<std::string>();
    r.query_id = j.at("query_id").get<std::string>();
    r.llm_id = j.at("llm_id").get<std::string>();
    r.query_text = j.value("query_text", "");
    r.performance = j.at("performance").get<double>();
    r.token_count = j.at("token_count").get<std::uint64_t>();
    if (j.contains("response_text") && !j.at("response_text").is_null()) {
      r.response_text = j.at("response_text").get<std::string>();
    }
    if (!(r.performance >= 0.0 && r.performance <= 1.0)) {
      throw DatasetError("response performance out of [0,1] for (" + r.query_id + ", " +
                         r.llm_id + ")");
    }
    log.rows.push_back(std::move(r));
  });
  return log;
}

void save_response_log(const std::filesystem::path& path, const ResponseLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  for (const auto& r : log.rows) {
    json j = {{"task_id", r.task_id},          {"query_id", r.query_id},
              {"llm_id", r.llm_id},            {"query_text", r.query_text},
              {"performance", r.performance}, {"token_count", r.token_count}};
    if (r.response_text) j["response_text"] = *r.response_text;
    out << j.dump() << '\n';
  }
}

std::vector<JudgeLabel> load_judge_labels(const std::filesystem::path& path) {
  std::vector<JudgeLabel> labels;
  for_each_json_line(path, [&](const json& j) {
    labels.push_back({j.at("user_id").get<std::string>(), j.at("query_id").get<std::string>(),
                      j.at("best_llm_id").get<std::string>()});
  });
  return labels;
}

void save_judge_labels(const std::filesystem::path& path, const std::vector<JudgeLabel>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  for (const auto& l : labels) {
    out << json{{"user_id", l.user_id}, {"query_id", l.query_id}, {"best_llm_id", l.best_llm_id}}
               .dump()
        << '\n';
  }
}

std::uint64_t WhitespaceTokenCounter::count(std::string_view text) const {
  std::istringstream in{std::string(text)};
  std::uint64_t n = 0;
  std::string tok;
  while (in >> tok) ++n;
  return n;
}

double compute_cost(std::uint64_t token_count, double price_per_million_tokens) {
  return static_cast<double>(token_count) * price_per_million_tokens / 1e6;
}

std::vector<double> normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

double compute_reward(double perf_norm, double cost_norm, double alpha, double beta) {
  return alpha * perf_norm - beta * cost_norm;
}

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Dataset simulate_cost_eff(const ResponseLog& log, const Registry& registry) {
  const auto pools = pools_by_query(log, registry);
  std::vector<InteractionRecord> records;
  for (const auto& user : registry.users()) {
    if (user.kind != UserKind::WeightPair) continue;
    for (const auto& pool : pools) {
      std::vector<double> perf, cost;
      for (std::size_t l = 0; l < pool.rows.size(); ++l) {
        perf.push_back(pool.rows[l]->performance);
        cost.push_back(compute_cost(pool.rows[l]->token_count,
                                    registry.llms()[l].price_per_million_tokens));
      }
      const auto pn = normalize(perf);
      const auto cn = normalize(cost);
      std::vector<double> reward(pool.rows.size());
      for (std::size_t l = 0; l < reward.size(); ++l) {
        reward[l] = compute_reward(pn[l], cn[l], *user.alpha, *user.beta);
      }
      const std::size_t best = argmax_lowest(reward);
      for (std::size_t l = 0; l < pool.rows.size(); ++l) {
        const ResponseRow& row = *pool.rows[l];
        InteractionRecord r;
        r.record_id = record_id_for(user.user_id, pool.query_id, row.llm_id);
        r.user_id = user.user_id;
        r.task_id = pool.task_id;
        r.query_id = pool.query_id;
        r.query_text = pool.query_text;
        r.llm_id = row.llm_id;
        r.performance = row.performance;
        r.raw_cost = cost[l];
        r.reward = reward[l];
        r.label = l == best ? 1 : 0;
        r.response_text = row.response_text;
        records.push_back(std::move(r));
      }
    }
  }
  return Dataset::from_records(std::move(records));
}

Dataset build_judge_dataset(const ResponseLog& log, const std::vector<JudgeLabel>& labels,
                            const Registry& registry) {
  const auto pools = pools_by_query(log, registry);
  std::map<GroupKey, std::string> best;
  for (const auto& l : labels) {
    if (!best.emplace(GroupKey{l.user_id, l.query_id}, l.best_llm_id).second) {
      throw DatasetError("two judge labels for (" + l.user_id + ", " + l.query_id + ")");
    }
  }
  std::set<std::string> users_with_labels;
  for (const auto& l : labels) users_with_labels.insert(l.user_id);

  std::vector<InteractionRecord> records;
  std::size_t used = 0;
  for (const auto& user : registry.users()) {
    if (!users_with_labels.count(user.user_id)) continue;
    for (const auto& pool : pools) {
      auto it = best.find(GroupKey{user.user_id, pool.query_id});
      if (it == best.end()) {
        throw DatasetError("missing judge label for (" + user.user_id + ", " + pool.query_id + ")");
      }
      bool found = false;
      for (const auto* row : pool.rows) found = found || row->llm_id == it->second;
      if (!found) {
        throw DatasetError("dangling judge label: '" + it->second + "' is not a candidate of (" +
                           user.user_id + ", " + pool.query_id + ")");
      }
      ++used;
      for (std::size_t l = 0; l < pool.rows.size(); ++l) {
        const ResponseRow& row = *pool.rows[l];
        InteractionRecord r;
        r.record_id = record_id_for(user.user_id, pool.query_id, row.llm_id);
        r.user_id = user.user_id;
        r.task_id = pool.task_id;
        r.query_id = pool.query_id;
        r.query_text = pool.query_text;
        r.llm_id = row.llm_id;
        r.performance = row.performance;
        r.raw_cost = compute_cost(row.token_count, registry.llms()[l].price_per_million_tokens);
        r.label = row.llm_id == it->second ? 1 : 0;
        r.response_text = row.response_text;
        records.push_back(std::move(r));
      }
    }
  }
  if (used != best.size()) {
    throw DatasetError("judge labels reference users or queries outside the response log");
  }
  return Dataset::from_records(std::move(records));
}

void fill_missing_rewards(std::vector<InteractionRecord>& records, const Registry& registry) {
  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[GroupKey{records[i].user_id, records[i].query_id}].push_back(i);
  }
  for (const auto& [key, idx] : groups) {
    const UserProfile* user = registry.find_user(key.user_id);
    if (!user || user->kind != UserKind::WeightPair) continue;
    bool missing = false;
    for (std::size_t i : idx) missing = missing || !records[i].reward;
    if (!missing) continue;
    std::vector<double> perf, cost;
    for (std::size_t i : idx) {
      perf.push_back(records[i].performance);
      cost.push_back(records[i].raw_cost);
    }
    const auto pn = normalize(perf);
    const auto cn = normalize(cost);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto& r = records[idx[k]];
      if (!r.reward) r.reward = compute_reward(pn[k], cn[k], *user->alpha, *user->beta);
    }
  }
}

Dataset with_rewards(const Dataset& dataset, const Registry& registry) {
  auto records = dataset.records();
  fill_missing_rewards(records, registry);
  return Dataset::from_records(std::move(records));
}

namespace {

double parse_size_billions(const std::string& label) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(label, &pos);
    return v > 0.0 ? v : 8.0;
  } catch (...) {
    return 8.0;
  }
}

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "river",  "market", "garden",  "engine", "budget", "planet", "recipe",  "signal",
      "harbor", "ticket", "lesson",  "forest", "report", "castle", "battery", "circuit",
      "museum", "canvas", "orbit",   "valley", "league", "column", "letter",  "bridge",
      "window", "summit", "pattern", "copper", "finance", "climate", "theory", "station"};
  return words;
}

}  // namespace

ResponseLog synthesize_responses(const Registry& registry, const SyntheticLogConfig& config) {
  Rng rng(config.seed);
  const auto& llms = registry.llms();
  const auto& tasks = registry.tasks();
  // Mean performance per (task, llm): log-size quality plus a task-specific twist.
  std::vector<std::vector<double>> mean_perf(tasks.size(), std::vector<double>(llms.size()));
  std::vector<std::vector<double>> mean_tokens(tasks.size(), std::vector<double>(llms.size()));
  std::vector<double> verbosity(llms.size());
  for (std::size_t l = 0; l < llms.size(); ++l) verbosity[l] = rng.uniform(0.7, 1.4);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const double task_tokens = rng.uniform(150.0, 600.0);
    for (std::size_t l = 0; l < llms.size(); ++l) {
      const double quality = 0.35 + 0.12 * std::log10(parse_size_billions(llms[l].size_label));
      mean_perf[t][l] = std::clamp(quality + 0.06 * rng.normal(), 0.05, 0.95);
      mean_tokens[t][l] = task_tokens * verbosity[l];
    }
  }
  const auto& vocab = vocabulary();
  ResponseLog log;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (std::size_t q = 0; q < config.queries_per_task; ++q) {
      std::ostringstream qid;
      qid << tasks[t].task_id << "-q" << q;
      std::ostringstream text;
      text << tasks[t].task_id << " request";
      for (int w = 0; w < 6; ++w) text << ' ' << vocab[rng.index(vocab.size())];
      for (std::size_t l = 0; l < llms.size(); ++l) {
        ResponseRow r;
        r.task_id = tasks[t].task_id;
        r.query_id = qid.str();
        r.llm_id = llms[l].llm_id;
        r.query_text = text.str();
        if (tasks[t].metric_name == MetricName::Accuracy) {
          r.performance = rng.uniform() < mean_perf[t][l] ? 1.0 : 0.0;
        } else {
          r.performance = std::clamp(mean_perf[t][l] + 0.12 * rng.normal(), 0.0, 1.0);
        }
        const double tokens = mean_tokens[t][l] * std::exp(0.25 * rng.normal());
        r.token_count = static_cast<std::uint64_t>(std::llround(std::max(1.0, tokens)));
        log.rows.push_back(std::move(r));
      }
    }
  }
  return log;
}

std::vector<JudgeLabel> synthesize_judge_labels(const ResponseLog& log, const Registry& registry,
                                                std::uint64_t seed) {
  const auto pools = pools_by_query(log, registry);
  const auto& llms = registry.llms();
  // Judged quality of an LLM on a task is its mean logged performance there.
  std::map<std::string, std::vector<double>> quality;
  std::map<std::string, std::size_t> count;
  for (const auto& pool : pools) {
    auto& q = quality[pool.task_id];
    q.resize(llms.size(), 0.0);
    for (std::size_t l = 0; l < pool.rows.size(); ++l) q[l] += pool.rows[l]->performance;
    ++count[pool.task_id];
  }
  for (auto& [task, q] : quality) {
    for (double& v : q) v /= static_cast<double>(count[task]);
  }
  // Each user carries a style affinity per LLM that holds across tasks; the
  // judged best answer maximizes quality plus affinity.
  Rng rng(mix_seed(seed, 0x6a75646765ULL));
  std::map<std::pair<std::string, std::string>, std::string> table;
  for (const auto& user : registry.users()) {
    std::vector<double> affinity(llms.size());
    for (double& a : affinity) a = kJudgeStyleSpread * rng.normal();
    for (const auto& [task, q] : quality) {
      std::vector<double> score(llms.size());
      for (std::size_t l = 0; l < llms.size(); ++l) score[l] = q[l] + affinity[l];
      table[{user.user_id, task}] = llms[argmax_lowest(score)].llm_id;
    }
  }
  std::vector<JudgeLabel> labels;
  for (const auto& user : registry.users()) {
    for (const auto& pool : pools) {
      labels.push_back({user.user_id, pool.query_id, table.at({user.user_id, pool.task_id})});
    }
  }
  return labels;
}

}  // namespace prouter
