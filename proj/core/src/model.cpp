#include "qaf/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "qaf/errors.hpp"

namespace qaf {
namespace {

constexpr double kMaskedScore = -1e300;

struct UniqueInputs {
  std::vector<const PaddedInput*> inputs;
  std::vector<std::size_t> input_of;
  std::vector<double> times;
};

UniqueInputs collect(const TripletBatch& batch) {
  UniqueInputs out;
  std::unordered_map<std::size_t, std::size_t> local;
  out.input_of.reserve(batch.triplets.size());
  out.times.reserve(batch.triplets.size());
  for (const Triplet& tr : batch.triplets) {
    if (tr.input >= batch.inputs.size()) {
      throw ContractError("triplet refers to input " + std::to_string(tr.input) + " of " +
                          std::to_string(batch.inputs.size()));
    }
    auto [it, inserted] = local.emplace(tr.input, out.inputs.size());
    if (inserted) out.inputs.push_back(&batch.inputs[tr.input]);
    out.input_of.push_back(it->second);
    out.times.push_back(tr.t);
  }
  return out;
}

std::size_t valid_tokens(const PaddedInput& u, std::size_t token_size) {
  return (u.valid_len + token_size - 1) / token_size;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (m == 0) fail("m must be >= 1");
  if (token_size == 0 || m % token_size != 0) fail("token_size must divide m");
  if (d == 0) fail("d must be >= 1");
  if (p == 0) fail("p must be >= 1");
  if (s == 0) fail("s must be >= 1");
  if (fourier_m == 0) fail("fourier_m must be >= 1");
  if (!(fourier_sigma > 0.0)) fail("fourier_sigma must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (!(t_max_input > 0.0)) fail("t_max_input must be > 0");
  if (!(t_max_input < horizon)) fail("t_max_input must be < horizon");
  for (const auto* widths : {&branch_hidden, &trunk_hidden, &head_hidden}) {
    if (std::find(widths->begin(), widths->end(), std::size_t{0}) != widths->end()) {
      fail("hidden widths must be >= 1");
    }
  }
}

void validate_input(const PaddedInput& u, std::size_t m) {
  if (u.values.size() != m) {
    throw DimensionError("padded input has " + std::to_string(u.values.size()) +
                         " sensors, model expects " + std::to_string(m));
  }
  if (u.valid_len == 0 || u.valid_len > m) {
    throw ContractError("padded input valid_len " + std::to_string(u.valid_len) +
                        " outside [1, " + std::to_string(m) + "]");
  }
  for (std::size_t i = u.valid_len; i < m; ++i) {
    if (u.values[i] != 0.0) throw ContractError("padded input has a non-zero tail");
  }
}

PaddedInput zero_pad(PaddedInput u) {
  for (std::size_t i = u.valid_len; i < u.values.size(); ++i) u.values[i] = 0.0;
  return u;
}

// ---------------------------------------------------------------------------

QafModel::QafModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  const auto& c = config_;

  Rng fourier_rng = make_rng(seed, {0xF0});
  std::normal_distribution<double> normal(0.0, c.fourier_sigma);
  fourier_ = Tensor(c.fourier_m, 1);
  for (auto& v : fourier_.span()) v = normal(fourier_rng);

  Rng rng = make_rng(seed, {0x11});
  add_param("embed.weight", glorot_uniform(c.token_size, c.d, rng));
  add_param("embed.bias", Tensor(1, c.d));
  add_param("attn.query", glorot_uniform(c.d, c.d, rng));
  add_param("attn.key", glorot_uniform(c.d, c.d, rng));
  add_param("attn.value", glorot_uniform(c.d, c.d, rng));
  add_mlp("branch", c.d, c.branch_hidden, c.p, rng);
  add_mlp("trunk", 2 * c.fourier_m, c.trunk_hidden, c.p, rng);
  add_mlp("head_lower_branch", c.p, c.head_hidden, c.s, rng);
  add_mlp("head_lower_trunk", c.p, c.head_hidden, c.s, rng);
  add_mlp("head_upper_branch", c.p, c.head_hidden, c.s, rng);
  add_mlp("head_upper_trunk", c.p, c.head_hidden, c.s, rng);
}

void QafModel::add_param(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  params_.push_back(std::move(value));
}

void QafModel::add_mlp(const std::string& prefix, std::size_t in,
                       const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng) {
  std::size_t width = in;
  for (std::size_t k = 0; k <= hidden.size(); ++k) {
    const std::size_t next = k < hidden.size() ? hidden[k] : out;
    add_param(prefix + "." + std::to_string(k) + ".weight", glorot_uniform(width, next, rng));
    add_param(prefix + "." + std::to_string(k) + ".bias", Tensor(1, next));
    width = next;
  }
}

void QafModel::set_fourier_matrix(Tensor b) {
  if (b.rows() != config_.fourier_m || b.cols() != 1) {
    throw DimensionError("fourier matrix must be " + std::to_string(config_.fourier_m) + "x1");
  }
  fourier_ = std::move(b);
}

std::size_t QafModel::find_param(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

std::size_t QafModel::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

std::vector<double> QafModel::flat_params() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& p : params_) flat.insert(flat.end(), p.data().begin(), p.data().end());
  return flat;
}

void QafModel::set_flat_params(std::span<const double> flat) {
  if (flat.size() != scalar_count()) {
    throw DimensionError("flat parameter vector has " + std::to_string(flat.size()) +
                         " entries, model has " + std::to_string(scalar_count()));
  }
  std::size_t offset = 0;
  for (auto& p : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), p.size(), p.data().begin());
    offset += p.size();
  }
}

bool QafModel::same_architecture(const QafModel& other) const {
  if (!(config_ == other.config_) || names_ != other.names_) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].same_shape(other.params_[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

ModelGraph::ModelGraph(const QafModel& model, Tape& tape) : model_(model), tape_(tape) {
  vars_.reserve(model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    vars_.push_back(tape.leaf(LeafId{i}, model.params()[i]));
  }
}

Var ModelGraph::var(std::string_view name) const { return vars_[model_.find_param(name)]; }

Var ModelGraph::mlp(const std::string& prefix, Var x, std::size_t layers) {
  for (std::size_t k = 0; k < layers; ++k) {
    const std::string base = prefix + "." + std::to_string(k);
    x = ad::add_row_bias(ad::matmul(x, var(base + ".weight")), var(base + ".bias"));
    if (k + 1 < layers) x = ad::tanh(x);
  }
  return x;
}

Var ModelGraph::embed(const PaddedInput& u) {
  const auto& c = model_.config();
  validate_input(u, c.m);
  Tensor tokens(c.tokens(), c.token_size, u.values);
  if (c.attention_mask) {
    for (std::size_t i = u.valid_len; i < c.m; ++i) tokens[i] = 0.0;
  }
  Var x = tape_.constant(std::move(tokens));
  return ad::add_row_bias(ad::matmul(x, var("embed.weight")), var("embed.bias"));
}

Var ModelGraph::attention(const PaddedInput& u) {
  const auto& c = model_.config();
  Var e = embed(u);
  Var q = ad::matmul(e, var("attn.query"));
  Var k = ad::matmul(e, var("attn.key"));
  Var v = ad::matmul(e, var("attn.value"));
  Var scores = ad::matmul(q, ad::transpose(k));
  if (c.attention_mask) {
    const std::size_t n = c.tokens();
    const std::size_t valid = valid_tokens(u, c.token_size);
    Tensor mask(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = valid; j < n; ++j) mask(i, j) = kMaskedScore;
    scores = ad::add(scores, tape_.constant(std::move(mask)));
  }
  return ad::matmul(ad::softmax_rows(scores), v);
}

Var ModelGraph::branch(std::span<const PaddedInput* const> inputs) {
  if (inputs.empty()) throw ContractError("branch over zero inputs");
  const auto& c = model_.config();
  std::vector<Var> pooled;
  pooled.reserve(inputs.size());
  for (const PaddedInput* u : inputs) {
    Var o = attention(*u);
    if (c.attention_mask) {
      const std::size_t valid = valid_tokens(*u, c.token_size);
      Tensor w(1, c.tokens());
      for (std::size_t j = 0; j < valid; ++j) w[j] = 1.0 / static_cast<double>(valid);
      pooled.push_back(ad::matmul(tape_.constant(std::move(w)), o));
    } else {
      pooled.push_back(ad::mean_rows(o));
    }
  }
  Var h = pooled.size() == 1 ? pooled.front() : ad::concat_rows(pooled);
  return mlp("branch", h, c.branch_hidden.size() + 1);
}

Var ModelGraph::trunk(std::span<const double> times) {
  const auto& c = model_.config();
  Tensor gamma(times.size(), 2 * c.fourier_m);
  for (std::size_t i = 0; i < times.size(); ++i) {
    check_query_time(c, times[i]);
    const auto row = fourier_features(model_, times[i]);
    std::copy(row.begin(), row.end(),
              gamma.data().begin() + static_cast<std::ptrdiff_t>(i * 2 * c.fourier_m));
  }
  return mlp("trunk", tape_.constant(std::move(gamma)), c.trunk_hidden.size() + 1);
}

ModelGraph::Outputs ModelGraph::quantiles(std::span<const PaddedInput* const> inputs,
                                          std::span<const std::size_t> input_of,
                                          std::span<const double> times) {
  if (input_of.size() != times.size()) throw DimensionError("input_of/times length mismatch");
  if (times.empty()) throw ContractError("quantiles over zero query points");
  const auto& c = model_.config();
  const std::size_t head_layers = c.head_hidden.size() + 1;

  Var phi = branch(inputs);
  Var psi = trunk(times);
  Var phi_lower = mlp("head_lower_branch", phi, head_layers);
  Var psi_lower = mlp("head_lower_trunk", psi, head_layers);
  Var phi_upper = mlp("head_upper_branch", phi, head_layers);
  Var psi_upper = mlp("head_upper_trunk", psi, head_layers);

  Outputs out;
  out.lo = ad::row_dot(ad::gather_rows(phi_lower, input_of), psi_lower);
  out.hi = ad::row_dot(ad::gather_rows(phi_upper, input_of), psi_upper);
  out.mean = ad::row_dot(ad::gather_rows(phi, input_of), psi);
  return out;
}

Var ModelGraph::loss(const TripletBatch& batch) {
  if (batch.triplets.empty()) throw ContractError("batch_loss over an empty batch");
  const auto& c = model_.config();
  UniqueInputs u = collect(batch);
  Outputs out = quantiles(u.inputs, u.input_of, u.times);
  Tensor target(batch.triplets.size(), 1);
  for (std::size_t i = 0; i < batch.triplets.size(); ++i) target[i] = batch.triplets[i].target;
  Var lower = ad::mean(ad::pinball(out.lo, target, c.lower_tau()));
  Var upper = ad::mean(ad::pinball(out.hi, target, c.upper_tau()));
  return ad::add(lower, upper);
}

// ---------------------------------------------------------------------------

void check_query_time(const ModelConfig& config, double t) {
  if (!(t > 0.0 && t <= config.horizon)) {
    throw DomainError("query time " + std::to_string(t) + " s outside (0, " +
                      std::to_string(config.horizon) + "]");
  }
}

std::vector<double> fourier_features(const QafModel& model, double t) {
  const Tensor& b = model.fourier_matrix();
  const std::size_t n = b.rows();
  std::vector<double> gamma(2 * n);
  for (std::size_t r = 0; r < n; ++r) {
    const double arg = b[r] * t;
    gamma[r] = std::sin(arg);
    gamma[n + r] = std::cos(arg);
  }
  return gamma;
}

std::vector<double> branch_forward(const QafModel& model, const PaddedInput& u) {
  Tape tape(false);
  ModelGraph g(model, tape);
  const PaddedInput* one[] = {&u};
  return g.branch(one).value().data();
}

std::vector<double> trunk_forward(const QafModel& model, double t) {
  Tape tape(false);
  ModelGraph g(model, tape);
  const double one[] = {t};
  return g.trunk(one).value().data();
}

Tensor attention_output(const QafModel& model, const PaddedInput& u) {
  Tape tape(false);
  ModelGraph g(model, tape);
  return g.attention(u).value();
}

QuantilePair predict_quantiles(const QafModel& model, const PaddedInput& u, double t) {
  Tape tape(false);
  ModelGraph g(model, tape);
  const PaddedInput* one[] = {&u};
  const std::size_t idx[] = {0};
  const double times[] = {t};
  auto out = g.quantiles(one, idx, times);
  return {out.lo.value()[0], out.hi.value()[0]};
}

double predict_mean(const QafModel& model, const PaddedInput& u, double t) {
  Tape tape(false);
  ModelGraph g(model, tape);
  const PaddedInput* one[] = {&u};
  const std::size_t idx[] = {0};
  const double times[] = {t};
  return g.quantiles(one, idx, times).mean.value()[0];
}

std::vector<QuantilePair> predict_batch(const QafModel& model, const TripletBatch& batch) {
  if (batch.triplets.empty()) return {};
  Tape tape(false);
  ModelGraph g(model, tape);
  UniqueInputs u = collect(batch);
  auto out = g.quantiles(u.inputs, u.input_of, u.times);
  std::vector<QuantilePair> pairs(batch.triplets.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i] = {out.lo.value()[i], out.hi.value()[i]};
  }
  return pairs;
}

double pinball_loss(double tau, double y, double yhat) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("pinball quantile level " + std::to_string(tau) + " outside (0, 1)");
  }
  const double diff = y - yhat;
  return diff > 0.0 ? tau * diff : (1.0 - tau) * (yhat - y);
}

double batch_loss(const QafModel& model, const TripletBatch& batch) {
  Tape tape(false);
  ModelGraph g(model, tape);
  return g.loss(batch).value().item();
}

LossGradient batch_loss_gradient(const QafModel& model, const TripletBatch& batch) {
  Tape tape(true);
  ModelGraph g(model, tape);
  Var loss = g.loss(batch);
  auto grads = tape.backward(loss);
  LossGradient out;
  out.loss = loss.value().item();
  out.grads.reserve(grads.size());
  for (auto& [id, grad] : grads) out.grads.push_back(std::move(grad));
  return out;
}

}  // namespace qaf
