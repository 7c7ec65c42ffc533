#pragma once

namespace fewgraph {

/// Command-line entry point: generate-data | train | eval | grad-check.
/// Returns the process exit status; prints a one-line diagnostic to stderr
/// on failure.
int run_cli(int argc, const char* const* argv);

}  // namespace fewgraph
