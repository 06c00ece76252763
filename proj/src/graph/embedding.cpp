#include "prouter/graph/embedding.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "prouter/numerics/rng.hpp"

namespace prouter {

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

HashingEmbedder::HashingEmbedder(std::size_t dim, std::uint64_t seed)
    : dim_(dim), basis_(mix_seed(0xcbf29ce484222325ULL, seed)) {
  if (dim == 0) throw std::invalid_argument("HashingEmbedder: dim must be positive");
}

std::vector<double> HashingEmbedder::embed(std::string_view, std::string_view text) const {
  std::vector<double> v(dim_, 0.0);
  const auto words = tokenize_words(text);
  auto add = [&](std::string_view feature) {
    const std::uint64_t h = fnv1a64(feature, basis_);
    const std::size_t bucket = static_cast<std::size_t>(h % dim_);
    v[bucket] += (h >> 63) ? 1.0 : -1.0;
  };
  for (std::size_t i = 0; i < words.size(); ++i) {
    add(words[i]);
    if (i + 1 < words.size()) add(words[i] + ' ' + words[i + 1]);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    const double inv = 1.0 / std::sqrt(norm);
    for (double& x : v) x *= inv;
  }
  return v;
}

PrecomputedEmbeddings PrecomputedEmbeddings::load(const std::filesystem::path& path,
                                                  std::size_t dim,
                                                  std::shared_ptr<const EmbeddingProvider> fallback) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  if (fallback && fallback->dim() != dim) {
    throw std::invalid_argument("fallback provider width differs from precomputed width");
  }
  PrecomputedEmbeddings p;
  p.dim_ = dim;
  p.fallback_ = std::move(fallback);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line);
    auto vec = j.at("vector").get<std::vector<double>>();
    if (vec.size() != dim) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": vector width " +
                               std::to_string(vec.size()) + " != " + std::to_string(dim));
    }
    for (double x : vec) {
      if (!std::isfinite(x)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": non-finite entry");
      }
    }
    p.rows_[j.at("id").get<std::string>()] = std::move(vec);
  }
  return p;
}

std::vector<double> PrecomputedEmbeddings::embed(std::string_view key,
                                                 std::string_view text) const {
  if (auto it = rows_.find(key); it != rows_.end()) return it->second;
  if (fallback_) return fallback_->embed(key, text);
  throw std::out_of_range("no precomputed embedding for '" + std::string(key) + "'");
}

}  // namespace prouter
