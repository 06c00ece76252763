#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "prouter/numerics/tensor.hpp"

namespace prouter {

// CSR-style grouping of input rows into output segments. Segment s covers
// items[offsets[s] .. offsets[s + 1]). Items inside a segment are ascending.
struct Segments {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> items;

  [[nodiscard]] std::size_t count() const noexcept { return offsets.size() - 1; }
  [[nodiscard]] std::size_t degree(std::size_t s) const { return offsets[s + 1] - offsets[s]; }
  [[nodiscard]] std::span<const std::size_t> members(std::size_t s) const {
    return {items.data() + offsets[s], degree(s)};
  }

  // Groups item i under key[i]; num_keys fixes the segment count.
  static Segments from_keys(std::span<const std::size_t> key, std::size_t num_keys);
};

// Forward gather index with its inverse, so the scatter in the backward pass
// can be computed per source row without write conflicts.
struct RowIndex {
  std::vector<std::size_t> index;
  Segments inverse;
  std::size_t source_rows = 0;

  static RowIndex build(std::vector<std::size_t> index, std::size_t source_rows);
};

namespace kernels {

enum class Backend { Serial, Parallel };

void set_backend(Backend b) noexcept;
[[nodiscard]] Backend backend() noexcept;

// Each kernel comes in a serial reference form and an OpenMP form. Both sum in
// ascending index order, so results are bitwise identical.
#define PROUTER_KERNEL_SET                                                                \
  /* C = A * B^T, A: n x k, B: m x k */                                                    \
  void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c);                               \
  /* C (+)= A * B, A: n x m, B: m x k */                                                   \
  void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);              \
  /* C (+)= A^T * B, A: n x m, B: n x k */                                                 \
  void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);              \
  /* out[s] = scale[s] * sum of x rows in segment s */                                     \
  void segment_sum(const Tensor& x, const Segments& seg, std::span<const double> scale,    \
                   Tensor& out);                                                           \
  /* out[i] (+)= scale[s(i)] * g[s(i)] for every item i of segment s */                    \
  void segment_broadcast(const Tensor& g, const Segments& seg,                             \
                         std::span<const double> scale, Tensor& out, bool accumulate);     \
  void gather_rows(const Tensor& x, std::span<const std::size_t> index, Tensor& out);      \
  /* out[i] = a[i] . b[i] */                                                               \
  void rowwise_dot(const Tensor& a, const Tensor& b, Tensor& out);                         \
  /* pre[e] = p[src[e]] + feat[e] * w^T;  out[s] = scale[s] * sum relu(gate * pre[e]) */  \
  void gated_message_mean(const Tensor& p, const Tensor& feat, const Tensor& w,            \
                          double gate, std::span<const std::size_t> src,                   \
                          const Segments& seg, std::span<const double> scale, Tensor& pre, \
                          Tensor& out);                                                    \
  /* ge[e] = scale[s] * g[s] where gate * pre[e] > 0, else 0 */                            \
  void gated_message_grad(const Tensor& g, const Tensor& pre, double gate,                 \
                          const Segments& seg, std::span<const double> scale, Tensor& ge);

namespace serial {
PROUTER_KERNEL_SET
}
namespace parallel {
PROUTER_KERNEL_SET
}

#undef PROUTER_KERNEL_SET

// Dispatch through the current backend.
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c);
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);
void segment_sum(const Tensor& x, const Segments& seg, std::span<const double> scale,
                 Tensor& out);
void segment_broadcast(const Tensor& g, const Segments& seg, std::span<const double> scale,
                       Tensor& out, bool accumulate);
void gather_rows(const Tensor& x, std::span<const std::size_t> index, Tensor& out);
void rowwise_dot(const Tensor& a, const Tensor& b, Tensor& out);
void gated_message_mean(const Tensor& p, const Tensor& feat, const Tensor& w, double gate,
                        std::span<const std::size_t> src, const Segments& seg,
                        std::span<const double> scale, Tensor& pre, Tensor& out);
void gated_message_grad(const Tensor& g, const Tensor& pre, double gate, const Segments& seg,
                        std::span<const double> scale, Tensor& ge);

}  // namespace kernels
}  // namespace prouter
