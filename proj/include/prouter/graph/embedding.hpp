#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace prouter {

// Text encoder used for task, query and LLM node features. Implementations
// must be deterministic: the same (key, text) always yields the same vector.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  [[nodiscard]] virtual std::size_t dim() const = 0;
  // key is the node id (task_id, llm_id, query_id); text is its description
  // or query text.
  [[nodiscard]] virtual std::vector<double> embed(std::string_view key,
                                                  std::string_view text) const = 0;
};

// Signed feature hashing of lowercase word unigrams and bigrams into dim
// buckets, then l2-normalized. Empty text maps to the zero vector.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  HashingEmbedder(std::size_t dim, std::uint64_t seed);
  [[nodiscard]] std::size_t dim() const override { return dim_; }
  [[nodiscard]] std::vector<double> embed(std::string_view key,
                                          std::string_view text) const override;

 private:
  std::size_t dim_;
  std::uint64_t basis_;
};

// id -> vector rows read from a line-delimited file of {"id": ..., "vector": [...]}.
// Unknown ids fall through to the fallback provider when one is given.
class PrecomputedEmbeddings final : public EmbeddingProvider {
 public:
  static PrecomputedEmbeddings load(const std::filesystem::path& path, std::size_t dim,
                                    std::shared_ptr<const EmbeddingProvider> fallback = nullptr);
  [[nodiscard]] std::size_t dim() const override { return dim_; }
  [[nodiscard]] std::vector<double> embed(std::string_view key,
                                          std::string_view text) const override;

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>, std::less<>> rows_;
  std::shared_ptr<const EmbeddingProvider> fallback_;
};

[[nodiscard]] std::vector<std::string> tokenize_words(std::string_view text);

}  // namespace prouter
