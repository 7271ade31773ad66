#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qaf/conformal.hpp"
#include "qaf/dataset.hpp"
#include "qaf/federated.hpp"
#include "qaf/finetune.hpp"
#include "qaf/model.hpp"
#include "qaf/scenario.hpp"

namespace qaf {

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnvVar = "QAFDON_CONFIG";

/// Held-out target regime used by default: bus 18's own bias with a lower
/// pre-fault voltage, slower settling and lighter damping than its neighbours.
BusBias default_target_bias();

/// Architecture defaults for pipeline runs; 32-sensor tokens keep a 256-point
/// input at 8 attention tokens.
ModelConfig default_run_model();

/// Federation defaults for pipeline runs.
FedConfig default_run_fed();

/// Everything a pipeline run depends on. Stored as an INI file with sections
/// [run], [paths], [data], [target_bias], [model], [fed], [finetune], [conformal].
struct RunConfig {
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  double alpha = 0.05;
  double dt_obs = 0.5;

  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path report_dir = "reports";

  GeneratorParams generator;
  std::vector<std::uint64_t> buses{1, 2, 3, 4, 5, 6};
  std::uint64_t target_bus = 18;
  std::size_t n_per_bus = 300;
  std::size_t n_target = 40;  ///< fine-tuning trajectories on the target bus
  std::size_t n_cal = 200;
  std::size_t n_test = 200;
  std::size_t n_loc = 32;
  double t_max_input = 0.0;  ///< 0 derives the window from the generator and dt_obs

  /// When set, the target bus uses `target_bias` instead of its default bias.
  bool target_bias_override = true;
  BusBias target_bias = default_target_bias();

  ModelConfig model = default_run_model();  ///< m, alpha, t_max_input and horizon come from the fields above
  FedConfig fed = default_run_fed();
  FineTuneConfig finetune;
  CalibrationMode calibration_mode = CalibrationMode::triplet;

  double resolved_t_max_input() const;
  BusBias bias_for(std::uint64_t bus_id) const;
  /// The model config with run-level fields applied.
  ModelConfig resolved_model() const;
  AssembleOptions assemble_options(Split split) const;
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Deterministic INI text; every field is written, doubles round-trip exactly.
std::string serialize_run_config(const RunConfig& config);

/// `overrides` are "section.key=value" strings applied on top of the text.
/// Unknown sections or keys are ConfigErrors.
RunConfig parse_run_config(std::string_view text, std::span<const std::string> overrides = {},
                           const std::string& source = "<config>");

RunConfig load_run_config(const std::filesystem::path& path,
                          std::span<const std::string> overrides = {});
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace qaf
