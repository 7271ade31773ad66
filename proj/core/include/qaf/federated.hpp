#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qaf/adam.hpp"
#include "qaf/dataset.hpp"
#include "qaf/model.hpp"
#include "qaf/rng.hpp"

namespace qaf {

/// What happens to each client's Adam moments at a synchronisation.
enum class MomentPolicy {
  keep,   ///< moments stay local and carry over
  reset,  ///< moments and step counter are zeroed
};

const char* to_string(MomentPolicy policy);
MomentPolicy parse_moment_policy(std::string_view text);

struct FedConfig {
  std::size_t n_clients = 0;  ///< 0 means "one per dataset"
  std::size_t k_local = 5;
  std::size_t total_rounds = 2000;
  std::size_t batch_size = 64;  ///< 0 means full batch
  AdamOptions adam;
  std::uint64_t seed = 0;
  MomentPolicy moment_policy = MomentPolicy::keep;
  std::size_t threads = 1;

  void validate() const;

  friend bool operator==(const FedConfig&, const FedConfig&) = default;
};

/// One simulated bus. The dataset never leaves the client; only the model's
/// flat parameter vector is exchanged.
struct ClientState {
  std::uint64_t bus_id = 0;
  QafModel model;
  AdamState optimizer;
  const TripletDataset* data = nullptr;
  Rng batch_rng;
  std::vector<Triplet> scratch;

  ClientState(std::uint64_t bus, QafModel init, const AdamOptions& adam, const TripletDataset& d,
              std::uint64_t seed);
};

/// Stream used for minibatch draws of the client with the given bus id.
Rng batch_stream(std::uint64_t seed, std::uint64_t bus_id);

/// Draws `batch_size` triplets without replacement (all of them when
/// batch_size is 0 or covers the set). Full batches keep dataset order.
void draw_batch(const TripletDataset& data, std::size_t batch_size, Rng& rng,
                std::vector<Triplet>& out);

/// One minibatch Adam step on the client's own data. Returns the batch loss
/// measured before the step. Non-finite loss or gradients raise
/// TrainingError tagged with `round`.
double local_round(ClientState& client, std::size_t batch_size, std::size_t round);

/// Uniform mean of equally shaped parameter vectors. Computed as
/// x0 + sum_c (x_c - x0) / N so identical inputs average to themselves
/// bit-exactly.
std::vector<double> average_flat(std::span<const std::vector<double>> vectors);

/// Averages all client parameters and writes the mean back into every client.
/// Throws FederationError when architectures differ.
std::vector<double> average_params(std::span<ClientState> clients);

/// Record of every cross-client transfer in a simulated run.
struct Message {
  enum class Kind { param_upload, param_broadcast };
  std::size_t round = 0;
  std::uint64_t client = 0;  ///< bus id of the sender (upload) or receiver (broadcast)
  Kind kind = Kind::param_upload;
  std::size_t payload_scalars = 0;
  std::size_t data_records = 0;  ///< triplets carried in the payload
};

class MessageLog {
 public:
  void record(Message m) { messages_.push_back(m); }
  const std::vector<Message>& messages() const noexcept { return messages_; }
  std::size_t data_record_transfers() const noexcept;
  std::size_t count(Message::Kind kind) const noexcept;

 private:
  std::vector<Message> messages_;
};

struct RoundLoss {
  std::size_t round = 0;
  std::uint64_t bus_id = 0;
  double loss = 0.0;
};

struct PretrainHooks {
  /// Called after each averaging event with the zero-based event number, the
  /// round it closed and the synchronised model.
  std::function<void(std::size_t event, std::size_t round, const QafModel&)> on_sync;
};

struct PretrainResult {
  QafModel model;
  std::vector<RoundLoss> telemetry;
  MessageLog log;
  std::vector<std::size_t> sync_rounds;  ///< rounds after which averaging ran
};

/// FedAvg over one client per dataset. Every client starts from
/// QafModel(config, fed.seed); averaging runs whenever (k + 1) % K == 0 and
/// once more at the end if the last round did not close a period.
PretrainResult pretrain(const ModelConfig& config, const FedConfig& fed,
                        std::span<const TripletDataset> datasets, const PretrainHooks& hooks = {});

/// Single-model training with the same initialisation, batch stream and step
/// sequence as one federated client.
QafModel train_centralized(const ModelConfig& config, const FedConfig& fed,
                           const TripletDataset& data, std::uint64_t bus_id,
                           std::vector<RoundLoss>* telemetry = nullptr);

std::string telemetry_csv(std::span<const RoundLoss> rows);

}  // namespace qaf
