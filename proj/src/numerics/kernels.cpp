#include "prouter/numerics/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace prouter {

bool all_finite(const Tensor& t) noexcept {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Segments Segments::from_keys(std::span<const std::size_t> key, std::size_t num_keys) {
  Segments seg;
  seg.offsets.assign(num_keys + 1, 0);
  for (std::size_t k : key) {
    if (k >= num_keys) throw std::out_of_range("Segments::from_keys: key out of range");
    ++seg.offsets[k + 1];
  }
  for (std::size_t s = 0; s < num_keys; ++s) seg.offsets[s + 1] += seg.offsets[s];
  seg.items.resize(key.size());
  std::vector<std::size_t> cursor(seg.offsets.begin(), seg.offsets.end() - 1);
  for (std::size_t i = 0; i < key.size(); ++i) seg.items[cursor[key[i]]++] = i;
  return seg;
}

RowIndex RowIndex::build(std::vector<std::size_t> index, std::size_t source_rows) {
  RowIndex r;
  r.inverse = Segments::from_keys(index, source_rows);
  r.index = std::move(index);
  r.source_rows = source_rows;
  return r;
}

namespace kernels {
namespace {

std::atomic<Backend> g_backend{Backend::Parallel};

void check(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

void prepare(Tensor& out, std::size_t rows, std::size_t cols, bool accumulate, const char* op) {
  if (accumulate) {
    if (out.rows() != rows || out.cols() != cols) {
      throw std::invalid_argument(std::string(op) + ": accumulator has shape " +
                                  out.shape_string());
    }
  } else if (out.rows() != rows || out.cols() != cols) {
    out = Tensor(rows, cols);
  } else {
    out.fill(0.0);
  }
}

void check_message(const Tensor& p, const Tensor& feat, const Tensor& w,
                   std::span<const std::size_t> src, const Segments& seg,
                   std::span<const double> scale) {
  if (w.rows() != p.cols() || w.cols() != feat.cols() || src.size() != feat.rows() ||
      seg.items.size() != feat.rows() || scale.size() != seg.count()) {
    throw std::invalid_argument("gated_message_mean: inconsistent shapes (p " + p.shape_string() +
                                ", feat " + feat.shape_string() + ", w " + w.shape_string() + ")");
  }
}

// One edge: pre = p[src] + feat * w^T, returns nothing; adds relu(gate * pre) to o.
inline void message_row(const double* pr, const double* fr, const double* wd, std::size_t h,
                        std::size_t f, double gate, double* pre, double* o) {
  for (std::size_t j = 0; j < h; ++j) {
    double q = 0.0;
    for (std::size_t c = 0; c < f; ++c) q += fr[c] * wd[j * f + c];
    pre[j] = pr[j] + q;
    const double a = gate * pre[j];
    o[j] += a > 0.0 ? a : 0.0;
  }
}

}  // namespace

void set_backend(Backend b) noexcept { g_backend.store(b); }
Backend backend() noexcept { return g_backend.load(); }

// ---------------------------------------------------------------------------
// Serial reference implementations.

namespace serial {

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  check(a.cols() == b.cols(), "gemm_nt", a, b);
  prepare(c, a.rows(), b.rows(), false, "gemm_nt");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  }
}

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check(a.cols() == b.rows(), "gemm_nn", a, b);
  prepare(c, a.rows(), b.cols(), accumulate, "gemm_nn");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t m = 0; m < a.cols(); ++m) {
      const double av = a(i, m);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += av * b(m, j);
    }
  }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check(a.rows() == b.rows(), "gemm_tn", a, b);
  prepare(c, a.cols(), b.cols(), accumulate, "gemm_tn");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = a(r, i);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += av * b(r, j);
    }
  }
}

void segment_sum(const Tensor& x, const Segments& seg, std::span<const double> scale,
                 Tensor& out) {
  if (scale.size() != seg.count()) throw std::invalid_argument("segment_sum: scale length");
  prepare(out, seg.count(), x.cols(), false, "segment_sum");
  for (std::size_t s = 0; s < seg.count(); ++s) {
    auto o = out.row(s);
    for (std::size_t item : seg.members(s)) {
      auto xr = x.row(item);
      for (std::size_t j = 0; j < x.cols(); ++j) o[j] += xr[j];
    }
    for (std::size_t j = 0; j < x.cols(); ++j) o[j] *= scale[s];
  }
}

void segment_broadcast(const Tensor& g, const Segments& seg, std::span<const double> scale,
                       Tensor& out, bool accumulate) {
  if (!accumulate) out.fill(0.0);
  for (std::size_t s = 0; s < seg.count(); ++s) {
    auto gr = g.row(s);
    for (std::size_t item : seg.members(s)) {
      auto o = out.row(item);
      for (std::size_t j = 0; j < g.cols(); ++j) o[j] += scale[s] * gr[j];
    }
  }
}

void gather_rows(const Tensor& x, std::span<const std::size_t> index, Tensor& out) {
  prepare(out, index.size(), x.cols(), false, "gather_rows");
  for (std::size_t i = 0; i < index.size(); ++i) {
    auto src = x.row(index[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
}

void rowwise_dot(const Tensor& a, const Tensor& b, Tensor& out) {
  require_same_shape(a, b, "rowwise_dot");
  prepare(out, a.rows(), 1, false, "rowwise_dot");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(i, k);
    out(i, 0) = s;
  }
}

void gated_message_mean(const Tensor& p, const Tensor& feat, const Tensor& w, double gate,
                        std::span<const std::size_t> src, const Segments& seg,
                        std::span<const double> scale, Tensor& pre, Tensor& out) {
  check_message(p, feat, w, src, seg, scale);
  const std::size_t h = p.cols(), f = feat.cols();
  prepare(pre, feat.rows(), h, false, "gated_message_mean");
  prepare(out, seg.count(), h, false, "gated_message_mean");
  for (std::size_t s = 0; s < seg.count(); ++s) {
    for (std::size_t e : seg.members(s)) {
      message_row(p.row(src[e]).data(), feat.row(e).data(), w.data().data(), h, f, gate,
                  pre.row(e).data(), out.row(s).data());
    }
    for (std::size_t j = 0; j < h; ++j) out(s, j) *= scale[s];
  }
}

void gated_message_grad(const Tensor& g, const Tensor& pre, double gate, const Segments& seg,
                        std::span<const double> scale, Tensor& ge) {
  prepare(ge, pre.rows(), pre.cols(), false, "gated_message_grad");
  for (std::size_t s = 0; s < seg.count(); ++s) {
    for (std::size_t e : seg.members(s)) {
      for (std::size_t j = 0; j < pre.cols(); ++j) {
        ge(e, j) = gate * pre(e, j) > 0.0 ? scale[s] * g(s, j) : 0.0;
      }
    }
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP implementations. Parallelism is over output rows only; every output
// element accumulates in the same order as the serial form.

namespace parallel {

namespace {
using Index = long long;
constexpr std::size_t kMinParallelWork = 1 << 14;
}  // namespace

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  check(a.cols() == b.cols(), "gemm_nt", a, b);
  prepare(c, a.rows(), b.rows(), false, "gemm_nt");
  const Index n = static_cast<Index>(a.rows());
  const std::size_t m = b.rows(), k = a.cols();
  // B^T lets the inner loop run over output columns; each c(i, j) still sums
  // q = 0..k-1 in order starting from zero.
  std::vector<double> bt(k * m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t q = 0; q < k; ++q) bt[q * m + j] = b(j, q);
  }
  const double* __restrict ad = a.data().data();
  const double* __restrict btd = bt.data();
  double* __restrict cd = c.data().data();
#pragma omp parallel for schedule(static) if (a.rows() * m * k > kMinParallelWork)
  for (Index i = 0; i < n; ++i) {
    const double* ar = ad + static_cast<std::size_t>(i) * k;
    double* cr = cd + static_cast<std::size_t>(i) * m;
    for (std::size_t q = 0; q < k; ++q) {
      const double av = ar[q];
      const double* br = btd + q * m;
      for (std::size_t j = 0; j < m; ++j) cr[j] += av * br[j];
    }
  }
}

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check(a.cols() == b.rows(), "gemm_nn", a, b);
  prepare(c, a.rows(), b.cols(), accumulate, "gemm_nn");
  const Index n = static_cast<Index>(a.rows());
  const std::size_t m = a.cols(), k = b.cols();
  const double* __restrict ad = a.data().data();
  const double* __restrict bd = b.data().data();
  double* __restrict cd = c.data().data();
#pragma omp parallel for schedule(static) if (a.rows() * m * k > kMinParallelWork)
  for (Index i = 0; i < n; ++i) {
    const double* ar = ad + static_cast<std::size_t>(i) * m;
    double* cr = cd + static_cast<std::size_t>(i) * k;
    for (std::size_t q = 0; q < m; ++q) {
      const double av = ar[q];
      const double* br = bd + q * k;
      for (std::size_t j = 0; j < k; ++j) cr[j] += av * br[j];
    }
  }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check(a.rows() == b.rows(), "gemm_tn", a, b);
  prepare(c, a.cols(), b.cols(), accumulate, "gemm_tn");
  const std::size_t rows = a.rows(), m = a.cols(), k = b.cols();
  const double* __restrict ad = a.data().data();
  const double* __restrict bd = b.data().data();
  double* __restrict cd = c.data().data();
  if (k < 8 && m >= 8) {
    // Narrow output: accumulate C^T so the inner loop runs over m. Same
    // per-element order.
    std::vector<double> ct(k * m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < k; ++j) ct[j * m + i] = cd[i * k + j];
    }
    double* __restrict ctd = ct.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* ar = ad + r * m;
      for (std::size_t j = 0; j < k; ++j) {
        const double bv = bd[r * k + j];
        double* cr = ctd + j * m;
        for (std::size_t i = 0; i < m; ++i) cr[i] += ar[i] * bv;
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < k; ++j) cd[i * k + j] = ct[j * m + i];
    }
    return;
  }
  // Row blocks keep a slab of B in cache while every output row consumes it.
  // The static schedule gives each thread the same output rows in every
  // block, so rows still accumulate r = 0..rows-1 in order.
  constexpr std::size_t kBlock = 256;
#pragma omp parallel if (rows * m * k > kMinParallelWork)
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    const std::size_t r1 = std::min(rows, r0 + kBlock);
#pragma omp for schedule(static) nowait
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      double* cr = cd + static_cast<std::size_t>(i) * k;
      for (std::size_t r = r0; r < r1; ++r) {
        const double av = ad[r * m + static_cast<std::size_t>(i)];
        const double* br = bd + r * k;
        for (std::size_t j = 0; j < k; ++j) cr[j] += av * br[j];
      }
    }
  }
}

void segment_sum(const Tensor& x, const Segments& seg, std::span<const double> scale,
                 Tensor& out) {
  if (scale.size() != seg.count()) throw std::invalid_argument("segment_sum: scale length");
  prepare(out, seg.count(), x.cols(), false, "segment_sum");
  const std::size_t d = x.cols();
#pragma omp parallel for schedule(static) if (seg.items.size() * d > kMinParallelWork)
  for (Index s = 0; s < static_cast<Index>(seg.count()); ++s) {
    auto o = out.row(static_cast<std::size_t>(s));
    for (std::size_t item : seg.members(static_cast<std::size_t>(s))) {
      auto xr = x.row(item);
      for (std::size_t j = 0; j < d; ++j) o[j] += xr[j];
    }
    for (std::size_t j = 0; j < d; ++j) o[j] *= scale[static_cast<std::size_t>(s)];
  }
}

void segment_broadcast(const Tensor& g, const Segments& seg, std::span<const double> scale,
                       Tensor& out, bool accumulate) {
  if (!accumulate) out.fill(0.0);
  const std::size_t d = g.cols();
#pragma omp parallel for schedule(static) if (seg.items.size() * d > kMinParallelWork)
  for (Index s = 0; s < static_cast<Index>(seg.count()); ++s) {
    auto gr = g.row(static_cast<std::size_t>(s));
    const double sc = scale[static_cast<std::size_t>(s)];
    for (std::size_t item : seg.members(static_cast<std::size_t>(s))) {
      auto o = out.row(item);
      for (std::size_t j = 0; j < d; ++j) o[j] += sc * gr[j];
    }
  }
}

void gather_rows(const Tensor& x, std::span<const std::size_t> index, Tensor& out) {
  prepare(out, index.size(), x.cols(), false, "gather_rows");
  const std::size_t d = x.cols();
#pragma omp parallel for schedule(static) if (index.size() * d > kMinParallelWork)
  for (Index i = 0; i < static_cast<Index>(index.size()); ++i) {
    auto src = x.row(index[static_cast<std::size_t>(i)]);
    std::copy(src.begin(), src.end(), out.row(static_cast<std::size_t>(i)).begin());
  }
}

void rowwise_dot(const Tensor& a, const Tensor& b, Tensor& out) {
  require_same_shape(a, b, "rowwise_dot");
  prepare(out, a.rows(), 1, false, "rowwise_dot");
  const std::size_t d = a.cols();
#pragma omp parallel for schedule(static) if (a.size() > kMinParallelWork)
  for (Index i = 0; i < static_cast<Index>(a.rows()); ++i) {
    auto ar = a.row(static_cast<std::size_t>(i));
    auto br = b.row(static_cast<std::size_t>(i));
    double s = 0.0;
    for (std::size_t q = 0; q < d; ++q) s += ar[q] * br[q];
    out(static_cast<std::size_t>(i), 0) = s;
  }
}

void gated_message_mean(const Tensor& p, const Tensor& feat, const Tensor& w, double gate,
                        std::span<const std::size_t> src, const Segments& seg,
                        std::span<const double> scale, Tensor& pre, Tensor& out) {
  check_message(p, feat, w, src, seg, scale);
  const std::size_t h = p.cols(), f = feat.cols();
  prepare(pre, feat.rows(), h, false, "gated_message_mean");
  prepare(out, seg.count(), h, false, "gated_message_mean");
  const double* wd = w.data().data();
#pragma omp parallel for schedule(static) if (seg.items.size() * h > kMinParallelWork)
  for (Index s = 0; s < static_cast<Index>(seg.count()); ++s) {
    const auto su = static_cast<std::size_t>(s);
    double* o = out.row(su).data();
    for (std::size_t e : seg.members(su)) {
      message_row(p.row(src[e]).data(), feat.row(e).data(), wd, h, f, gate, pre.row(e).data(), o);
    }
    for (std::size_t j = 0; j < h; ++j) o[j] *= scale[su];
  }
}

void gated_message_grad(const Tensor& g, const Tensor& pre, double gate, const Segments& seg,
                        std::span<const double> scale, Tensor& ge) {
  prepare(ge, pre.rows(), pre.cols(), false, "gated_message_grad");
  const std::size_t h = pre.cols();
#pragma omp parallel for schedule(static) if (seg.items.size() * h > kMinParallelWork)
  for (Index s = 0; s < static_cast<Index>(seg.count()); ++s) {
    const auto su = static_cast<std::size_t>(s);
    const double* gr = g.row(su).data();
    const double sc = scale[su];
    for (std::size_t e : seg.members(su)) {
      const double* pr = pre.row(e).data();
      double* out = ge.row(e).data();
      for (std::size_t j = 0; j < h; ++j) out[j] = gate * pr[j] > 0.0 ? sc * gr[j] : 0.0;
    }
  }
}

}  // namespace parallel

// ---------------------------------------------------------------------------

#define PROUTER_DISPATCH(fn, ...)                                   \
  (backend() == Backend::Serial ? serial::fn(__VA_ARGS__)           \
                                : parallel::fn(__VA_ARGS__))

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) { PROUTER_DISPATCH(gemm_nt, a, b, c); }
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  PROUTER_DISPATCH(gemm_nn, a, b, c, accumulate);
}
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  PROUTER_DISPATCH(gemm_tn, a, b, c, accumulate);
}
void segment_sum(const Tensor& x, const Segments& seg, std::span<const double> scale,
                 Tensor& out) {
  PROUTER_DISPATCH(segment_sum, x, seg, scale, out);
}
void segment_broadcast(const Tensor& g, const Segments& seg, std::span<const double> scale,
                       Tensor& out, bool accumulate) {
  PROUTER_DISPATCH(segment_broadcast, g, seg, scale, out, accumulate);
}
void gather_rows(const Tensor& x, std::span<const std::size_t> index, Tensor& out) {
  PROUTER_DISPATCH(gather_rows, x, index, out);
}
void rowwise_dot(const Tensor& a, const Tensor& b, Tensor& out) {
  PROUTER_DISPATCH(rowwise_dot, a, b, out);
}
void gated_message_mean(const Tensor& p, const Tensor& feat, const Tensor& w, double gate,
                        std::span<const std::size_t> src, const Segments& seg,
                        std::span<const double> scale, Tensor& pre, Tensor& out) {
  PROUTER_DISPATCH(gated_message_mean, p, feat, w, gate, src, seg, scale, pre, out);
}
void gated_message_grad(const Tensor& g, const Tensor& pre, double gate, const Segments& seg,
                        std::span<const double> scale, Tensor& ge) {
  PROUTER_DISPATCH(gated_message_grad, g, pre, gate, seg, scale, ge);
}

#undef PROUTER_DISPATCH

}  // namespace kernels
}  // namespace prouter
