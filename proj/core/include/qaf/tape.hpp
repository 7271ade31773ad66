#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "qaf/tensor.hpp"

namespace qaf {

/// Identifier of a trainable tensor registered on a tape.
enum class LeafId : std::size_t {};

constexpr std::size_t to_index(LeafId id) noexcept { return static_cast<std::size_t>(id); }

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t index() const noexcept { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Records primitive operations in creation order (which is a topological
/// order) together with their vector-Jacobian rules. A tape is single-owner:
/// never share one between threads.
///
/// With recording disabled every node is treated as a constant and no closures
/// are stored, which makes inference passes cheap.
class Tape {
 public:
  /// Receives the tape and the index of the node whose gradient is being
  /// propagated to its parents.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(LeafId id, Tensor value);
  Var constant(Tensor value);

  /// Runs the reverse sweep from a scalar node. The result holds an entry for
  /// every registered leaf; leaves that do not influence `loss` get zeros.
  std::map<LeafId, Tensor> backward(Var loss);

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  const Tensor& value_at(std::size_t i) const { return nodes_[i].value; }
  bool needs_grad(const Var& v) const { return nodes_[v.index()].needs_grad; }
  Var push(Tensor value, bool needs_grad, BackwardFn fn);
  void accumulate(std::size_t i, const Tensor& g);
  const Tensor& grad_at(std::size_t i) const { return nodes_[i].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<LeafId, std::size_t>> leaves_;
  bool record_;
};

/// Differentiable operations. All operands must live on the same tape.
namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a[r x c] + bias[1 x c] broadcast over rows.
Var add_row_bias(Var a, Var bias);
Var tanh(Var a);
Var softmax_rows(Var a);
/// Column means: [r x c] -> [1 x c].
Var mean_rows(Var a);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var concat_rows(std::span<const Var> parts);
/// Row i of the result is row indices[i] of `a`; gradients scatter-add back.
Var gather_rows(Var a, std::span<const std::size_t> indices);
/// Per-row inner product: [r x c], [r x c] -> [r x 1].
Var row_dot(Var a, Var b);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var sum(Var a);
Var mean(Var a);
/// Elementwise pinball loss of predictions against fixed targets.
Var pinball(Var prediction, const Tensor& target, double tau);

}  // namespace ad

}  // namespace qaf
