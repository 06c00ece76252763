#include "prouter/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <set>

#include "prouter/numerics/rng.hpp"

namespace prouter {

double Metrics::user_mean_reward() const {
  if (per_user.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [_, u] : per_user) s += u.mean_reward;
  return s / static_cast<double>(per_user.size());
}

namespace {

const CandidateGroup& group_or_throw(const Dataset& dataset, const GroupKey& k) {
  const CandidateGroup* g = dataset.find_group(k);
  if (!g) throw EvalError("unknown group " + k.str());
  return *g;
}

struct Acc {
  double reward = 0.0;
  std::size_t hits = 0;
  std::size_t n = 0;
};

}  // namespace

Metrics evaluate(const GroupRouter& router, const std::vector<GroupKey>& test_keys,
                 const Dataset& dataset) {
  if (test_keys.empty()) throw EvalError("no groups to evaluate");
  std::vector<GroupKey> keys = test_keys;
  std::sort(keys.begin(), keys.end());

  Acc total;
  std::map<std::string, Acc> users;
  bool has_reward = true;
  for (const auto& k : keys) {
    const CandidateGroup& g = group_or_throw(dataset, k);
    const std::string chosen = router(g);
    const InteractionRecord* rec = nullptr;
    for (std::size_t pos = 0; pos < g.members.size(); ++pos) {
      if (dataset.record(g, pos).llm_id == chosen) rec = &dataset.record(g, pos);
    }
    if (!rec) throw EvalError("router chose '" + chosen + "', not a candidate of " + k.str());
    const bool hit = rec->label == 1;
    has_reward = has_reward && rec->reward.has_value();
    const double r = rec->reward.value_or(0.0);
    for (Acc* a : {&total, &users[k.user_id]}) {
      a->reward += r;
      a->hits += hit ? 1 : 0;
      a->n += 1;
    }
  }

  auto finish = [&](const Acc& a) {
    UserMetrics u;
    u.n_groups = a.n;
    u.accuracy = static_cast<double>(a.hits) / static_cast<double>(a.n);
    u.mean_reward = has_reward ? a.reward / static_cast<double>(a.n) : 0.0;
    return u;
  };
  Metrics m;
  const UserMetrics t = finish(total);
  m.mean_reward = t.mean_reward;
  m.accuracy = t.accuracy;
  m.n_groups = t.n_groups;
  m.has_reward = has_reward;
  for (const auto& [id, a] : users) m.per_user[id] = finish(a);
  return m;
}

std::string oracle_choice(const CandidateGroup& g, const Dataset& dataset) {
  bool rewards = true;
  for (std::size_t pos = 0; pos < g.members.size(); ++pos) {
    rewards = rewards && dataset.record(g, pos).reward.has_value();
  }
  if (!rewards) return dataset.best(g).llm_id;
  std::size_t best = 0;
  for (std::size_t pos = 1; pos < g.members.size(); ++pos) {
    if (*dataset.record(g, pos).reward > *dataset.record(g, best).reward) best = pos;
  }
  return dataset.record(g, best).llm_id;
}

Metrics oracle(const std::vector<GroupKey>& test_keys, const Dataset& dataset) {
  return evaluate([&](const CandidateGroup& g) { return oracle_choice(g, dataset); }, test_keys,
                  dataset);
}

double improvement(double value, double baseline) {
  if (baseline == 0.0) throw std::invalid_argument("improvement over a zero baseline");
  return 100.0 * (value - baseline) / std::abs(baseline);
}

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::Random: return "random";
    case BaselineKind::PerTaskBest: return "per_task_best";
    case BaselineKind::MostPopular: return "most_popular";
  }
  return "random";
}

BaselineKind baseline_from_string(const std::string& s) {
  if (s == "random") return BaselineKind::Random;
  if (s == "per_task_best" || s == "per-task-best") return BaselineKind::PerTaskBest;
  if (s == "most_popular" || s == "most-popular") return BaselineKind::MostPopular;
  throw std::invalid_argument("unknown baseline '" + s + "'");
}

namespace {

struct Tally {
  double sum = 0.0;
  std::size_t n = 0;
};

// Highest score first, llm_id ascending on ties.
std::vector<std::string> rank(const std::map<std::string, Tally>& tallies, bool mean) {
  std::vector<std::pair<double, std::string>> scored;
  for (const auto& [id, t] : tallies) {
    scored.emplace_back(mean ? t.sum / static_cast<double>(t.n) : t.sum, id);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::string> out;
  for (auto& [_, id] : scored) out.push_back(std::move(id));
  return out;
}

std::string first_candidate(const std::vector<std::string>& ranking, const CandidateGroup& g,
                            const Dataset& dataset) {
  std::set<std::string> candidates;
  for (std::size_t pos = 0; pos < g.members.size(); ++pos) {
    candidates.insert(dataset.record(g, pos).llm_id);
  }
  for (const auto& id : ranking) {
    if (candidates.count(id)) return id;
  }
  return dataset.record(g, 0).llm_id;
}

}  // namespace

GroupRouter make_baseline(BaselineKind kind, const std::vector<GroupKey>& train_keys,
                          const Dataset& dataset, std::uint64_t seed) {
  if (kind == BaselineKind::Random) {
    return [&dataset, seed](const CandidateGroup& g) {
      Rng rng(mix_seed(seed, fnv1a64(g.key.user_id + '\n' + g.key.query_id)));
      return dataset.record(g, static_cast<std::size_t>(rng.index(g.members.size()))).llm_id;
    };
  }
  if (train_keys.empty()) throw EvalError(to_string(kind) + " baseline needs training groups");

  std::vector<const CandidateGroup*> train;
  bool rewards = true;
  for (const auto& k : train_keys) {
    const CandidateGroup& g = group_or_throw(dataset, k);
    train.push_back(&g);
    for (std::size_t pos = 0; pos < g.members.size(); ++pos) {
      rewards = rewards && dataset.record(g, pos).reward.has_value();
    }
  }

  std::map<std::string, Tally> global_labels;
  for (const auto* g : train) global_labels[dataset.best(*g).llm_id].sum += 1.0;
  auto global = std::make_shared<const std::vector<std::string>>(rank(global_labels, false));

  if (kind == BaselineKind::MostPopular) {
    return [&dataset, global](const CandidateGroup& g) {
      return first_candidate(*global, g, dataset);
    };
  }

  std::map<std::string, std::map<std::string, Tally>> per_task;
  for (const auto* g : train) {
    auto& tallies = per_task[g->task_id];
    if (rewards) {
      for (std::size_t pos = 0; pos < g->members.size(); ++pos) {
        const auto& r = dataset.record(*g, pos);
        tallies[r.llm_id].sum += *r.reward;
        tallies[r.llm_id].n += 1;
      }
    } else {
      tallies[dataset.best(*g).llm_id].sum += 1.0;
    }
  }
  auto rankings = std::make_shared<std::map<std::string, std::vector<std::string>>>();
  for (const auto& [task, tallies] : per_task) (*rankings)[task] = rank(tallies, rewards);
  return [&dataset, global, rankings](const CandidateGroup& g) {
    auto it = rankings->find(g.task_id);
    return first_candidate(it != rankings->end() ? it->second : *global, g, dataset);
  };
}

Metrics run_baseline(BaselineKind kind, const std::vector<GroupKey>& train_keys,
                     const std::vector<GroupKey>& test_keys, const Dataset& dataset,
                     std::uint64_t seed) {
  return evaluate(make_baseline(kind, train_keys, dataset, seed), test_keys, dataset);
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void append_row(std::string& out, const std::string& name, const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %10s %9.4f %7zu\n", name.c_str(),
                m.has_reward ? fmt("%.4f", m.mean_reward).c_str() : "-", m.accuracy, m.n_groups);
  out += buf;
}

}  // namespace

std::string format_report(const std::vector<ReportRow>& routers,
                          const std::vector<ReportRow>& baselines, const Metrics& oracle_metrics) {
  bool rewards = oracle_metrics.has_reward;
  for (const auto* rows : {&routers, &baselines}) {
    for (const auto& r : *rows) rewards = rewards && r.metrics.has_reward;
  }
  auto value = [&](const Metrics& m) { return rewards ? m.mean_reward : m.accuracy; };

  std::string out = "== metrics ==\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %10s %9s %7s\n", "router", "reward", "accuracy", "groups");
  out += buf;
  for (const auto& r : routers) append_row(out, r.name, r.metrics);
  for (const auto& r : baselines) append_row(out, r.name, r.metrics);
  append_row(out, "Oracle", oracle_metrics);

  out += "\n== per user ==\n";
  std::snprintf(buf, sizeof buf, "%-16s %-16s %10s %9s %7s\n", "router", "user", "reward",
                "accuracy", "groups");
  out += buf;
  auto per_user = [&](const std::string& name, const Metrics& m) {
    for (const auto& [id, u] : m.per_user) {
      std::snprintf(buf, sizeof buf, "%-16s %-16s %10s %9.4f %7zu\n", name.c_str(), id.c_str(),
                    m.has_reward ? fmt("%.4f", u.mean_reward).c_str() : "-", u.accuracy,
                    u.n_groups);
      out += buf;
    }
    if (m.has_reward) {
      std::snprintf(buf, sizeof buf, "%-16s %-16s %10.4f\n", name.c_str(), "(user mean)",
                    m.user_mean_reward());
      out += buf;
    }
  };
  for (const auto& r : routers) per_user(r.name, r.metrics);
  for (const auto& r : baselines) per_user(r.name, r.metrics);
  per_user("Oracle", oracle_metrics);

  out += std::string("\n== improvement % (") + (rewards ? "reward" : "accuracy") + ") ==\n";
  std::snprintf(buf, sizeof buf, "%-16s", "router");
  out += buf;
  for (const auto& b : baselines) {
    std::snprintf(buf, sizeof buf, " %14s", b.name.c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, " %14s\n", "best_baseline");
  out += buf;

  const ReportRow* best = nullptr;
  for (const auto& b : baselines) {
    if (!best || value(b.metrics) > value(best->metrics)) best = &b;
  }
  auto cell = [&](double v, double base) {
    if (base == 0.0) return std::string("n/a");
    return fmt("%+.2f", improvement(v, base));
  };
  std::vector<ReportRow> rows = routers;
  rows.push_back({"Oracle", oracle_metrics});
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s", r.name.c_str());
    out += buf;
    for (const auto& b : baselines) {
      std::snprintf(buf, sizeof buf, " %14s", cell(value(r.metrics), value(b.metrics)).c_str());
      out += buf;
    }
    std::snprintf(buf, sizeof buf, " %14s\n",
                  best ? cell(value(r.metrics), value(best->metrics)).c_str() : "n/a");
    out += buf;
  }
  return out;
}

}  // namespace prouter
