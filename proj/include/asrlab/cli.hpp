#pragma once

namespace asrlab {

// Full command-line entry point. Returns the process exit code:
// 0 ok, 2 config/usage error, 3 I/O error, 4 numeric failure.
int run_cli(int argc, char** argv);

}  // namespace asrlab
