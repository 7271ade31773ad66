#include "qaf/adam.hpp"

#include <cmath>
#include <string>

#include "qaf/errors.hpp"

namespace qaf {

AdamState::AdamState(AdamOptions options, std::span<const Tensor> params) : options_(options) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

void AdamState::reset() {
  step_ = 0;
  for (auto& t : m_) std::fill(t.data().begin(), t.data().end(), 0.0);
  for (auto& t : v_) std::fill(t.data().begin(), t.data().end(), 0.0);
}

void AdamState::update(std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("adam: expected " + std::to_string(m_.size()) + " parameters, got " +
                         std::to_string(params.size()) + " params / " +
                         std::to_string(grads.size()) + " grads");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!params[i].same_shape(m_[i]) || !grads[i].same_shape(m_[i])) {
      throw DimensionError("adam: parameter " + std::to_string(i) + " shape mismatch");
    }
    if (!grads[i].all_finite()) {
      throw TrainingError("non-finite gradient for parameter " + std::to_string(i), i);
    }
  }

  ++step_;
  const auto& o = options_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].span();
    auto g = grads[i].span();
    auto m = m_[i].span();
    auto v = v_[i].span();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

}  // namespace qaf
