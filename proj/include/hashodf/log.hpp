#pragma once

#include <spdlog/spdlog.h>

namespace hashodf {

/// Library-wide logger (stderr). Level is controlled by the CLI's --verbose/--quiet.
spdlog::logger& logger();

}  // namespace hashodf
