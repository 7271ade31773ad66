#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qaf/tensor.hpp"

namespace qaf {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamOptions&, const AdamOptions&) = default;
};

/// First/second moment accumulators for a fixed, ordered parameter list.
class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamOptions options, std::span<const Tensor> params);

  const AdamOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr) noexcept { options_.lr = lr; }
  std::size_t step() const noexcept { return step_; }
  const std::vector<Tensor>& first_moment() const noexcept { return m_; }
  const std::vector<Tensor>& second_moment() const noexcept { return v_; }

  /// Zeroes both moments and the step counter.
  void reset();

  /// Bias-corrected Adam update applied in place. Gradients are validated
  /// before any parameter is touched; a non-finite entry raises TrainingError
  /// carrying the parameter index.
  void update(std::span<Tensor> params, std::span<const Tensor> grads);

 private:
  AdamOptions options_;
  std::size_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

inline void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads) {
  state.update(params, grads);
}

}  // namespace qaf
