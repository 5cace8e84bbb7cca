#pragma once

#include <ostream>
#include <span>
#include <string>

namespace mplstm::cli {

/// Process exit statuses. Each failure class has its own value.
enum ExitStatus : int {
  kOk = 0,
  kGradcheckFailed = 1,
  kUsage = 2,
  kIo = 3,
  kConfig = 4,
  kFormat = 5,
  kData = 6,
  kInternal = 7,
};

/// Dispatches synth | train | eval | gradcheck | bench. args excludes the
/// program name. Errors print one line to err.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace mplstm::cli
