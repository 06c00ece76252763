#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "prouter/numerics/kernels.hpp"
#include "prouter/numerics/tensor.hpp"

namespace prouter::ad {

// Handle into a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Candidate groups for grouped softmax cross-entropy. Group g owns logits
// rows [offsets[g], offsets[g + 1]) and its positive sits at offset label[g].
struct GroupLayout {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> label;

  [[nodiscard]] std::size_t count() const noexcept { return label.size(); }
};

// Reverse-mode tape. Nodes are recorded in evaluation order; backward() walks
// them in reverse. Referenced index structures must outlive the tape.
class Tape {
 public:
  Var constant(Tensor value);
  // Leaf whose gradient is collected; value is copied in.
  Var parameter(const Tensor& value);

  [[nodiscard]] const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  // Zero-filled gradient of the right shape if none was accumulated.
  [[nodiscard]] const Tensor& grad(Var v);
  [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1; root must be 1 x 1.
  void backward(Var root);

  // Low-level op construction used by the primitive functions below.
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;
  Var record(Tensor value, bool requires_grad, Backward backward);
  // Adds into the gradient buffer of v (allocated on first use).
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// x: n x in, w: out x in -> n x out (x * w^T).
Var linear(Tape& t, Var x, Var w);
// Adds a 1 x cols row to every row of x.
Var add_bias(Tape& t, Var x, Var bias);
Var add(Tape& t, Var a, Var b);
// Multiplies every entry of x by the 1 x 1 value s.
Var scale(Tape& t, Var x, Var s);
Var relu(Tape& t, Var x);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var gather_rows(Tape& t, Var x, const RowIndex& index);
// out[s] = weight[s] * sum of rows of x in segment s. With weight = 1/deg this
// is the mean over the set; empty segments produce zero rows.
Var segment_sum(Tape& t, Var x, const Segments& seg, std::span<const double> weight);
// Fused edge messages pooled per target:
//   out[s] = weight[s] * sum over edges e of s of relu(gate * (p[source(e)] + feat[e] * w^T))
// p: nodes x h, feat: edges x f, w: h x f, gate: 1 x 1.
Var gated_message_mean(Tape& t, Var p, Var feat, Var w, Var gate, const RowIndex& source,
                       const Segments& by_target, std::span<const double> weight);
// Mean over all rows: 1 x cols.
Var mean_rows(Tape& t, Var x);
// a, b: n x d -> n x 1 of row-wise dot products.
Var rowwise_dot(Tape& t, Var a, Var b);
// Mean over groups of -log softmax(logits in group)[label].
Var grouped_softmax_ce(Tape& t, Var logits, const GroupLayout& groups);
// Sum of all entries, 1 x 1.
Var sum(Tape& t, Var x);

}  // namespace prouter::ad
