#include "prouter/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace prouter::ad {

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::parameter(const Tensor& value) { return record(value, true, nullptr); }

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, false, std::move(backward)});
  return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (!n.has_grad) {
    n.grad = Tensor(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(Var v) { return grad_buffer(v); }

void Tape::backward(Var root) {
  Node& r = nodes_.at(root.id);
  if (r.value.size() != 1) {
    throw std::invalid_argument("Tape::backward: root must be scalar, got " +
                                r.value.shape_string());
  }
  grad_buffer(root).fill(1.0);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

namespace {

bool any_grad(const Tape& t, std::initializer_list<Var> vs) {
  for (Var v : vs) {
    if (t.requires_grad(v)) return true;
  }
  return false;
}

void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Var linear(Tape& t, Var x, Var w) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  if (xv.cols() != wv.cols()) {
    throw std::invalid_argument("linear: input " + xv.shape_string() + " vs weight " +
                                wv.shape_string());
  }
  Tensor y;
  kernels::gemm_nt(xv, wv, y);
  return t.record(std::move(y), any_grad(t, {x, w}), [x, w](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(x)) kernels::gemm_nn(g, tp.value(w), tp.grad_buffer(x), true);
    if (tp.requires_grad(w)) kernels::gemm_tn(g, tp.value(x), tp.grad_buffer(w), true);
  });
}

Var add_bias(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw std::invalid_argument("add_bias: input " + xv.shape_string() + " vs bias " +
                                bv.shape_string());
  }
  Tensor y = xv;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < y.cols(); ++j) r[j] += bv(0, j);
  }
  return t.record(std::move(y), any_grad(t, {x, bias}), [x, bias](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(x)) add_into(tp.grad_buffer(x), g);
    if (tp.requires_grad(bias)) {
      Tensor& gb = tp.grad_buffer(bias);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      }
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  Tensor y = t.value(a);
  add_into(y, t.value(b));
  return t.record(std::move(y), any_grad(t, {a, b}), [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) add_into(tp.grad_buffer(a), g);
    if (tp.requires_grad(b)) add_into(tp.grad_buffer(b), g);
  });
}

Var scale(Tape& t, Var x, Var s) {
  const double sv = t.value(s).item();
  Tensor y = t.value(x);
  for (double& v : y.data()) v *= sv;
  return t.record(std::move(y), any_grad(t, {x, s}), [x, s](Tape& tp, const Tensor& g) {
    const double sv = tp.value(s).item();
    if (tp.requires_grad(x)) {
      auto gx = tp.grad_buffer(x).data();
      auto gd = g.data();
      for (std::size_t i = 0; i < gd.size(); ++i) gx[i] += sv * gd[i];
    }
    if (tp.requires_grad(s)) {
      auto xd = tp.value(x).data();
      auto gd = g.data();
      double acc = 0.0;
      for (std::size_t i = 0; i < gd.size(); ++i) acc += gd[i] * xd[i];
      tp.grad_buffer(s)(0, 0) += acc;
    }
  });
}

Var relu(Tape& t, Var x) {
  Tensor y = t.value(x);
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(y), t.requires_grad(x), [x](Tape& tp, const Tensor& g) {
    auto xd = tp.value(x).data();
    auto gx = tp.grad_buffer(x).data();
    auto gd = g.data();
    for (std::size_t i = 0; i < gd.size(); ++i) {
      if (xd[i] > 0.0) gx[i] += gd[i];
    }
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  bool needs = false;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) {
      throw std::invalid_argument("concat_cols: row mismatch " + t.value(parts[0]).shape_string() +
                                  " vs " + t.value(p).shape_string());
    }
    cols += t.value(p).cols();
    needs = needs || t.requires_grad(p);
  }
  Tensor y(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = t.value(p);
    for (std::size_t i = 0; i < rows; ++i) {
      auto src = pv.row(i);
      std::copy(src.begin(), src.end(), y.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    }
    off += pv.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.record(std::move(y), needs, [saved](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (Var p : saved) {
      const std::size_t c = tp.value(p).cols();
      if (tp.requires_grad(p)) {
        Tensor& gp = tp.grad_buffer(p);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < c; ++j) gp(i, j) += g(i, off + j);
        }
      }
      off += c;
    }
  });
}

Var gather_rows(Tape& t, Var x, const RowIndex& index) {
  const Tensor& xv = t.value(x);
  if (index.source_rows != xv.rows()) {
    throw std::invalid_argument("gather_rows: index built for " +
                                std::to_string(index.source_rows) + " rows, input " +
                                xv.shape_string());
  }
  Tensor y;
  kernels::gather_rows(xv, index.index, y);
  return t.record(std::move(y), t.requires_grad(x), [x, &index](Tape& tp, const Tensor& g) {
    Tensor scattered;
    std::vector<double> ones(index.inverse.count(), 1.0);
    kernels::segment_sum(g, index.inverse, ones, scattered);
    add_into(tp.grad_buffer(x), scattered);
  });
}

Var segment_sum(Tape& t, Var x, const Segments& seg, std::span<const double> weight) {
  if (seg.items.size() != t.value(x).rows()) {
    throw std::invalid_argument("segment_sum: segments cover " + std::to_string(seg.items.size()) +
                                " rows, input " + t.value(x).shape_string());
  }
  Tensor y;
  kernels::segment_sum(t.value(x), seg, weight, y);
  return t.record(std::move(y), t.requires_grad(x), [x, &seg, weight](Tape& tp, const Tensor& g) {
    kernels::segment_broadcast(g, seg, weight, tp.grad_buffer(x), true);
  });
}

Var gated_message_mean(Tape& t, Var p, Var feat, Var w, Var gate, const RowIndex& source,
                       const Segments& by_target, std::span<const double> weight) {
  if (source.source_rows != t.value(p).rows() || source.index.size() != t.value(feat).rows()) {
    throw std::invalid_argument("gated_message_mean: index does not match inputs " +
                                t.value(p).shape_string() + ", " + t.value(feat).shape_string());
  }
  auto pre = std::make_shared<Tensor>();
  Tensor y;
  kernels::gated_message_mean(t.value(p), t.value(feat), t.value(w), t.value(gate).item(),
                              source.index, by_target, weight, *pre, y);
  return t.record(
      std::move(y), any_grad(t, {p, feat, w, gate}),
      [p, feat, w, gate, &source, &by_target, weight, pre](Tape& tp, const Tensor& g) {
        const double gv = tp.value(gate).item();
        Tensor ge;
        kernels::gated_message_grad(g, *pre, gv, by_target, weight, ge);
        if (tp.requires_grad(gate)) {
          auto gd = ge.data();
          auto pd = pre->data();
          double acc = 0.0;
          for (std::size_t i = 0; i < gd.size(); ++i) acc += gd[i] * pd[i];
          tp.grad_buffer(gate)(0, 0) += acc;
        }
        for (double& v : ge.data()) v *= gv;
        if (tp.requires_grad(w)) kernels::gemm_tn(ge, tp.value(feat), tp.grad_buffer(w), true);
        if (tp.requires_grad(feat)) kernels::gemm_nn(ge, tp.value(w), tp.grad_buffer(feat), true);
        if (tp.requires_grad(p)) {
          Tensor scattered;
          std::vector<double> ones(source.inverse.count(), 1.0);
          kernels::segment_sum(ge, source.inverse, ones, scattered);
          add_into(tp.grad_buffer(p), scattered);
        }
      });
}

Var mean_rows(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor y(1, xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    for (std::size_t j = 0; j < xv.cols(); ++j) y(0, j) += xv(i, j);
  }
  const double inv = xv.rows() > 0 ? 1.0 / static_cast<double>(xv.rows()) : 0.0;
  for (double& v : y.data()) v *= inv;
  return t.record(std::move(y), t.requires_grad(x), [x, inv](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < gx.rows(); ++i) {
      for (std::size_t j = 0; j < gx.cols(); ++j) gx(i, j) += inv * g(0, j);
    }
  });
}

Var rowwise_dot(Tape& t, Var a, Var b) {
  Tensor y;
  kernels::rowwise_dot(t.value(a), t.value(b), y);
  return t.record(std::move(y), any_grad(t, {a, b}), [a, b](Tape& tp, const Tensor& g) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    if (tp.requires_grad(a)) {
      Tensor& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < av.rows(); ++i) {
        for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) += g(i, 0) * bv(i, j);
      }
    }
    if (tp.requires_grad(b)) {
      Tensor& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < av.rows(); ++i) {
        for (std::size_t j = 0; j < av.cols(); ++j) gb(i, j) += g(i, 0) * av(i, j);
      }
    }
  });
}

Var grouped_softmax_ce(Tape& t, Var logits, const GroupLayout& groups) {
  const Tensor& z = t.value(logits);
  if (z.cols() != 1 || groups.offsets.size() != groups.count() + 1 ||
      groups.offsets.back() != z.rows()) {
    throw std::invalid_argument("grouped_softmax_ce: layout does not match logits " +
                                z.shape_string());
  }
  if (groups.count() == 0) throw std::invalid_argument("grouped_softmax_ce: no groups");
  // Softmax probabilities are kept for the backward pass.
  std::vector<double> prob(z.rows());
  double total = 0.0;
  for (std::size_t gi = 0; gi < groups.count(); ++gi) {
    const std::size_t lo = groups.offsets[gi], hi = groups.offsets[gi + 1];
    if (groups.label[gi] >= hi - lo) {
      throw std::out_of_range("grouped_softmax_ce: label index out of range in group " +
                              std::to_string(gi));
    }
    double mx = z(lo, 0);
    for (std::size_t i = lo + 1; i < hi; ++i) mx = std::max(mx, z(i, 0));
    double denom = 0.0;
    for (std::size_t i = lo; i < hi; ++i) denom += std::exp(z(i, 0) - mx);
    for (std::size_t i = lo; i < hi; ++i) prob[i] = std::exp(z(i, 0) - mx) / denom;
    total += -(z(lo + groups.label[gi], 0) - mx - std::log(denom));
  }
  const double inv_groups = 1.0 / static_cast<double>(groups.count());
  return t.record(Tensor::scalar(total * inv_groups), t.requires_grad(logits),
                  [logits, &groups, prob = std::move(prob), inv_groups](Tape& tp,
                                                                        const Tensor& g) {
                    Tensor& gz = tp.grad_buffer(logits);
                    const double up = g.item() * inv_groups;
                    for (std::size_t gi = 0; gi < groups.count(); ++gi) {
                      const std::size_t lo = groups.offsets[gi], hi = groups.offsets[gi + 1];
                      for (std::size_t i = lo; i < hi; ++i) {
                        const double target = (i - lo == groups.label[gi]) ? 1.0 : 0.0;
                        gz(i, 0) += up * (prob[i] - target);
                      }
                    }
                  });
}

Var sum(Tape& t, Var x) {
  double s = 0.0;
  for (double v : t.value(x).data()) s += v;
  return t.record(Tensor::scalar(s), t.requires_grad(x), [x](Tape& tp, const Tensor& g) {
    for (double& v : tp.grad_buffer(x).data()) v += g.item();
  });
}

}  // namespace prouter::ad
