#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "qaf/model.hpp"

namespace qaf {

/// Text checkpoint: header, config, Fourier matrix, then one line per
/// parameter tensor. Doubles are written in shortest round-trip form, so
/// save/load is bit-exact.
///
///   qaf-checkpoint 1
///   seed <u64>
///   config.<key> <value>        (one line per ModelConfig field)
///   fourier <rows> <v0> ... <v_{rows-1}>
///   params <count>
///   param <name> <rows> <cols> <values...>
///   end
std::string serialize_checkpoint(const QafModel& model);
QafModel parse_checkpoint(std::string_view text, const std::string& source = "<checkpoint>");

void save_checkpoint(const QafModel& model, const std::filesystem::path& path);
QafModel load_checkpoint(const std::filesystem::path& path);

/// SHA-256 of the serialized checkpoint; links calibration artifacts to the
/// exact parameters they were computed with.
std::string checkpoint_hash(const QafModel& model);

/// Config lines shared with other artifact formats.
std::string serialize_model_config(const ModelConfig& config, std::string_view prefix);

}  // namespace qaf
