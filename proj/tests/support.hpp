#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "prouter/core/dataset.hpp"

namespace testing {

inline std::filesystem::path asset_dir() { return PROUTER_ASSET_DIR; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("prouter-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline prouter::InteractionRecord rec(const std::string& user, const std::string& query,
                                      const std::string& llm, int label,
                                      const std::string& task = "t1", double perf = 0.5,
                                      double cost = 0.01) {
  prouter::InteractionRecord r;
  r.record_id = user + ":" + query + ":" + llm;
  r.user_id = user;
  r.task_id = task;
  r.query_id = query;
  r.query_text = "text of " + query;
  r.llm_id = llm;
  r.performance = perf;
  r.raw_cost = cost;
  r.label = label;
  return r;
}

// Two weight-pair users, two tasks, three LLMs.
inline prouter::Registry small_registry() {
  using namespace prouter;
  return Registry({{"m1", "M1", "7B", 0.2, "small model"},
                   {"m2", "M2", "70B", 0.9, "large model"},
                   {"m3", "M3", "", 0.6, "mid model"}},
                  {{"t1", MetricName::F1, "summarize"}, {"t2", MetricName::Accuracy, "math"}},
                  {{"u1", UserKind::WeightPair, 0.2, 0.8, ""},
                   {"u2", UserKind::WeightPair, 1.0, 0.0, ""}});
}

}  // namespace testing
