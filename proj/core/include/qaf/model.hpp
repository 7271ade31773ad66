#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qaf/rng.hpp"
#include "qaf/tape.hpp"
#include "qaf/tensor.hpp"

namespace qaf {

/// Architecture and interval hyperparameters of a quantile operator network.
struct ModelConfig {
  std::size_t m = 256;          ///< sensors in the padded input function
  std::size_t token_size = 8;   ///< consecutive sensors folded into one attention token
  std::size_t d = 16;           ///< attention embedding width
  std::size_t p = 32;           ///< shared branch/trunk basis size
  std::size_t s = 16;           ///< quantile-head basis size
  std::size_t fourier_m = 16;   ///< rows of the random Fourier matrix
  double fourier_sigma = 4.0;   ///< std-dev of the Fourier matrix entries
  std::vector<std::size_t> branch_hidden{64};
  std::vector<std::size_t> trunk_hidden{64, 64};
  std::vector<std::size_t> head_hidden{32};
  double alpha = 0.05;          ///< miscoverage; heads target alpha/2 and 1-alpha/2
  double t_max_input = 2.333;   ///< end of the padded input window [s]
  double horizon = 8.5;         ///< end of the prediction window [s]
  bool attention_mask = false;  ///< exclude padded tokens from attention and pooling

  std::size_t tokens() const noexcept { return token_size == 0 ? 0 : m / token_size; }
  double lower_tau() const noexcept { return alpha / 2.0; }
  double upper_tau() const noexcept { return 1.0 - alpha / 2.0; }

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Input function sampled on the uniform sensor grid over [0, t_max_input].
/// Entries at index >= valid_len are zero.
struct PaddedInput {
  std::vector<double> values;
  std::size_t valid_len = 0;

  friend bool operator==(const PaddedInput&, const PaddedInput&) = default;
};

/// Checks length, valid_len bounds and the zero tail.
void validate_input(const PaddedInput& u, std::size_t m);

/// Returns `u` with every entry past valid_len set to zero.
PaddedInput zero_pad(PaddedInput u);

/// One training/calibration record: index into a pool of padded inputs,
/// query time and target voltage.
struct Triplet {
  std::size_t input = 0;
  double t = 0.0;
  double target = 0.0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletBatch {
  std::span<const PaddedInput> inputs;
  std::span<const Triplet> triplets;
};

struct QuantilePair {
  double lo = 0.0;
  double hi = 0.0;
};

/// Quantile Attention-Fourier operator network. Trainable tensors are kept in
/// one flat ordered list so they can be averaged, checkpointed and stepped by
/// the optimiser uniformly; the Fourier matrix is stored separately and is
/// never trained.
class QafModel {
 public:
  QafModel() = default;
  QafModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }

  const Tensor& fourier_matrix() const noexcept { return fourier_; }
  void set_fourier_matrix(Tensor b);

  std::vector<Tensor>& params() noexcept { return params_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }
  const std::vector<std::string>& param_names() const noexcept { return names_; }
  std::size_t find_param(std::string_view name) const;
  Tensor& param(std::string_view name) { return params_[find_param(name)]; }
  const Tensor& param(std::string_view name) const { return params_[find_param(name)]; }

  std::size_t scalar_count() const noexcept;
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> flat);

  /// Same config, same per-tensor shapes, same names.
  bool same_architecture(const QafModel& other) const;

  friend bool operator==(const QafModel&, const QafModel&) = default;

 private:
  friend class ModelGraph;

  void add_param(std::string name, Tensor value);
  void add_mlp(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden,
               std::size_t out, Rng& rng);

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  Tensor fourier_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

/// Tape-level view of a model: binds every parameter as a leaf and builds the
/// forward graph for a batch. Used by training (recording tape) and by the
/// inference helpers below (non-recording tape).
class ModelGraph {
 public:
  ModelGraph(const QafModel& model, Tape& tape);

  Tape& tape() noexcept { return tape_; }
  const std::vector<Var>& params() const noexcept { return vars_; }

  /// Token embeddings [tokens x d] for one input.
  Var embed(const PaddedInput& u);
  /// softmax(Q K^T) V for one input, [tokens x d].
  Var attention(const PaddedInput& u);
  /// Branch basis, one row per input: [inputs x p].
  Var branch(std::span<const PaddedInput* const> inputs);
  /// Trunk basis, one row per query time: [times x p].
  Var trunk(std::span<const double> times);

  struct Outputs {
    Var lo;    ///< [n x 1]
    Var hi;    ///< [n x 1]
    Var mean;  ///< [n x 1] base inner product, diagnostics only
  };
  /// `input_of[i]` selects the row of `inputs` paired with `times[i]`.
  Outputs quantiles(std::span<const PaddedInput* const> inputs,
                    std::span<const std::size_t> input_of, std::span<const double> times);

  /// Joint pinball objective over a batch (scalar node).
  Var loss(const TripletBatch& batch);

 private:
  Var mlp(const std::string& prefix, Var x, std::size_t layers);
  Var var(std::string_view name) const;

  const QafModel& model_;
  Tape& tape_;
  std::vector<Var> vars_;
};

/// Random Fourier features [sin(B t), cos(B t)] of length 2 * fourier_m.
std::vector<double> fourier_features(const QafModel& model, double t);

/// Throws DomainError unless t lies in the prediction window (0, horizon].
void check_query_time(const ModelConfig& config, double t);

std::vector<double> branch_forward(const QafModel& model, const PaddedInput& u);
std::vector<double> trunk_forward(const QafModel& model, double t);
/// Attention output for one input (pre-pooling), [tokens x d].
Tensor attention_output(const QafModel& model, const PaddedInput& u);

/// Raw quantile heads; lo <= hi is not enforced here.
QuantilePair predict_quantiles(const QafModel& model, const PaddedInput& u, double t);
/// Base operator value sum_i phi_i psi_i.
double predict_mean(const QafModel& model, const PaddedInput& u, double t);

/// Batched raw quantiles for triplets (targets ignored).
std::vector<QuantilePair> predict_batch(const QafModel& model, const TripletBatch& batch);

/// rho_tau(y, yhat): tau*(y-yhat) when y > yhat, (1-tau)*(yhat-y) otherwise.
double pinball_loss(double tau, double y, double yhat);

/// Mean of rho_{alpha/2}(G, lo) + rho_{1-alpha/2}(G, hi) over the batch.
double batch_loss(const QafModel& model, const TripletBatch& batch);

struct LossGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;  ///< aligned with QafModel::params()
};
LossGradient batch_loss_gradient(const QafModel& model, const TripletBatch& batch);

}  // namespace qaf
