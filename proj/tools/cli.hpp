#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace qaf::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kData = 3,
  kTraining = 4,
  kCalibration = 5,
  kArtifact = 6,
};

/// Runs the qafdon command line. `args` excludes the program name.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace qaf::cli
