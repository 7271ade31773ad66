#include "qaf/tape.hpp"

#include <cmath>
#include <string>

#include "qaf/errors.hpp"

namespace qaf {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->value_at(index_);
}

Var Tape::push(Tensor value, bool needs_grad, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = record_ && needs_grad;
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(LeafId id, Tensor value) {
  for (const auto& [existing, idx] : leaves_) {
    if (existing == id) {
      throw ContractError("leaf id " + std::to_string(to_index(id)) + " registered twice");
    }
  }
  Var v = push(std::move(value), true, {});
  leaves_.emplace_back(id, v.index());
  return v;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

void Tape::accumulate(std::size_t i, const Tensor& g) {
  Node& node = nodes_[i];
  if (!node.needs_grad) return;
  if (!node.has_grad) {
    node.grad = g;
    node.has_grad = true;
    return;
  }
  auto dst = node.grad.span();
  auto src = g.span();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

std::map<LeafId, Tensor> Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("loss is not recorded on this tape");
  const Tensor& lv = nodes_[loss.index()].value;
  if (lv.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + lv.shape_string());
  }
  if (!record_) throw ContractError("backward on a tape created without recording");

  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  accumulate(loss.index(), Tensor::scalar(1.0));
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }

  std::map<LeafId, Tensor> out;
  for (const auto& [id, idx] : leaves_) {
    const Node& n = nodes_[idx];
    out.emplace(id, n.has_grad ? n.grad : Tensor(n.value.rows(), n.value.cols()));
  }
  return out;
}

namespace ad {
namespace {

Tape& common_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("operands recorded on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  Tensor out = qaf::matmul(a.value(), b.value());
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad_at(self);
                  tp.accumulate(ia, qaf::matmul(g, qaf::transpose(tp.value_at(ib))));
                  tp.accumulate(ib, qaf::matmul(qaf::transpose(tp.value_at(ia)), g));
                });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.index();
  return t.push(qaf::transpose(a.value()), t.needs_grad(a), [ia](Tape& tp, std::size_t self) {
    tp.accumulate(ia, qaf::transpose(tp.grad_at(self)));
  });
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b.value()[k];
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape& tp, std::size_t self) {
                  tp.accumulate(ia, tp.grad_at(self));
                  tp.accumulate(ib, tp.grad_at(self));
                });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b.value()[k];
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape& tp, std::size_t self) {
                  tp.accumulate(ia, tp.grad_at(self));
                  Tensor neg = tp.grad_at(self);
                  for (auto& v : neg.span()) v = -v;
                  tp.accumulate(ib, neg);
                });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad_at(self);
                  Tensor ga = g, gb = g;
                  for (std::size_t k = 0; k < g.size(); ++k) {
                    ga[k] *= tp.value_at(ib)[k];
                    gb[k] *= tp.value_at(ia)[k];
                  }
                  tp.accumulate(ia, ga);
                  tp.accumulate(ib, gb);
                });
}

Var scale(Var a, double factor) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (auto& v : out.span()) v *= factor;
  const std::size_t ia = a.index();
  return t.push(std::move(out), t.needs_grad(a), [ia, factor](Tape& tp, std::size_t self) {
    Tensor g = tp.grad_at(self);
    for (auto& v : g.span()) v *= factor;
    tp.accumulate(ia, g);
  });
}

Var add_row_bias(Var a, Var bias) {
  Tape& t = common_tape(a, bias);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_row_bias: bias " + bv.shape_string() + " for " + av.shape_string());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  const std::size_t ia = a.index(), ib = bias.index();
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(bias),
                [ia, ib](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad_at(self);
                  tp.accumulate(ia, g);
                  Tensor gb(1, g.cols());
                  for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
                  tp.accumulate(ib, gb);
                });
}

Var tanh(Var a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (auto& v : out.span()) v = std::tanh(v);
  const std::size_t ia = a.index();
  return t.push(std::move(out), t.needs_grad(a), [ia](Tape& tp, std::size_t self) {
    Tensor g = tp.grad_at(self);
    const Tensor& y = tp.value_at(self);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= 1.0 - y[k] * y[k];
    tp.accumulate(ia, g);
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.index();
  return t.push(qaf::softmax_rows(a.value()), t.needs_grad(a), [ia](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& y = tp.value_at(self);
    Tensor gx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = y(i, j) * (g(i, j) - dot);
    }
    tp.accumulate(ia, gx);
  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  if (av.rows() == 0) throw DimensionError("mean_rows of an empty tensor");
  Tensor out(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out[j] += av(i, j);
  const double inv = 1.0 / static_cast<double>(av.rows());
  for (auto& v : out.span()) v *= inv;
  const std::size_t ia = a.index(), r = av.rows();
  return t.push(std::move(out), t.needs_grad(a), [ia, r, inv](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    Tensor gx(r, g.cols());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) = g[j] * inv;
    tp.accumulate(ia, gx);
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  if (begin + count > av.rows()) {
    throw DimensionError("slice_rows out of range for " + av.shape_string());
  }
  const std::size_t c = av.cols();
  std::vector<double> data(av.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           av.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  const std::size_t ia = a.index(), r = av.rows();
  return t.push(Tensor(count, c, std::move(data)), t.needs_grad(a),
                [ia, r, c, begin](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad_at(self);
                  Tensor gx(r, c);
                  std::copy(g.data().begin(), g.data().end(),
                            gx.data().begin() + static_cast<std::ptrdiff_t>(begin * c));
                  tp.accumulate(ia, gx);
                });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows of zero tensors");
  Tape& t = *parts.front().tape();
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  bool grad = false;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ContractError("operands recorded on different tapes");
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    total += p.rows();
    grad = grad || t.needs_grad(p);
  }
  std::vector<double> data;
  data.reserve(total * c);
  std::vector<std::size_t> idx, rows;
  for (const Var& p : parts) {
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    idx.push_back(p.index());
    rows.push_back(p.rows());
  }
  return t.push(Tensor(total, c, std::move(data)), grad,
                [idx = std::move(idx), rows = std::move(rows), c](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad_at(self);
                  std::size_t offset = 0;
                  for (std::size_t k = 0; k < idx.size(); ++k) {
                    std::vector<double> part(
                        g.data().begin() + static_cast<std::ptrdiff_t>(offset * c),
                        g.data().begin() + static_cast<std::ptrdiff_t>((offset + rows[k]) * c));
                    tp.accumulate(idx[k], Tensor(rows[k], c, std::move(part)));
                    offset += rows[k];
                  }
                });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const std::size_t c = av.cols(), r = av.rows();
  Tensor out(indices.size(), c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= r) throw DimensionError("gather_rows index out of range");
    for (std::size_t j = 0; j < c; ++j) out(i, j) = av(indices[i], j);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const std::size_t ia = a.index();
  return t.push(std::move(out), t.needs_grad(a),
                [ia, r, c, idx = std::move(idx)](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad_at(self);
                  Tensor gx(r, c);
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    for (std::size_t j = 0; j < c; ++j) gx(idx[i], j) += g(i, j);
                  tp.accumulate(ia, gx);
                });
}

Var row_dot(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "row_dot");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) acc += av(i, j) * bv(i, j);
    out[i] = acc;
  }
  const std::size_t ia = a.index(), ib = b.index();
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [ia, ib](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad_at(self);
                  const Tensor& av = tp.value_at(ia);
                  const Tensor& bv = tp.value_at(ib);
                  Tensor ga(av.rows(), av.cols()), gb(av.rows(), av.cols());
                  for (std::size_t i = 0; i < av.rows(); ++i) {
                    for (std::size_t j = 0; j < av.cols(); ++j) {
                      ga(i, j) = g[i] * bv(i, j);
                      gb(i, j) = g[i] * av(i, j);
                    }
                  }
                  tp.accumulate(ia, ga);
                  tp.accumulate(ib, gb);
                });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  if (rows * cols != av.size()) {
    throw DimensionError("reshape " + av.shape_string() + " to " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  const std::size_t ia = a.index(), r = av.rows(), c = av.cols();
  return t.push(Tensor(rows, cols, av.data()), t.needs_grad(a),
                [ia, r, c](Tape& tp, std::size_t self) {
                  tp.accumulate(ia, Tensor(r, c, tp.grad_at(self).data()));
                });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double acc = 0.0;
  for (double v : a.value().span()) acc += v;
  const std::size_t ia = a.index(), r = a.rows(), c = a.cols();
  return t.push(Tensor::scalar(acc), t.needs_grad(a), [ia, r, c](Tape& tp, std::size_t self) {
    tp.accumulate(ia, Tensor(r, c, tp.grad_at(self)[0]));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var pinball(Var prediction, const Tensor& target, double tau) {
  Tape& t = *prediction.tape();
  const Tensor& pv = prediction.value();
  require_same_shape(pv, target, "pinball");
  Tensor out(pv.rows(), pv.cols());
  Tensor slope(pv.rows(), pv.cols());
  for (std::size_t k = 0; k < pv.size(); ++k) {
    const double diff = target[k] - pv[k];
    if (diff > 0.0) {
      out[k] = tau * diff;
      slope[k] = -tau;
    } else {
      out[k] = (1.0 - tau) * (-diff);
      // Zero is a valid subgradient at the kink and keeps exact fits stationary.
      slope[k] = diff < 0.0 ? (1.0 - tau) : 0.0;
    }
  }
  const std::size_t ip = prediction.index();
  return t.push(std::move(out), t.needs_grad(prediction),
                [ip, slope = std::move(slope)](Tape& tp, std::size_t self) {
                  Tensor g = tp.grad_at(self);
                  for (std::size_t k = 0; k < g.size(); ++k) g[k] *= slope[k];
                  tp.accumulate(ip, g);
                });
}

}  // namespace ad
}  // namespace qaf
