#pragma once

namespace grouppool {

// Entry point shared by the binary and the CLI tests. Returns a process
// exit code: 0 success, 1 usage or I/O failure, 2 numerical failure,
// 3 gradient check failure.
int cli_main(int argc, char** argv);

}  // namespace grouppool
