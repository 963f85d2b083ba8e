#pragma once

namespace gatecap {

// Parses argv and dispatches to one of the subcommands
// (train | generate | evaluate | gradcheck | synth).
// Exit codes: 0 success, 1 data error, 2 usage/config error, 3 check failure.
int run_cli(int argc, const char* const* argv);

}  // namespace gatecap
