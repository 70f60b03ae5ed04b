#pragma once

namespace hashodf {

/// Exit codes: 0 success, 1 usage/config, 2 data/format, 3 numeric failure.
int run_cli(int argc, char** argv);

}  // namespace hashodf
