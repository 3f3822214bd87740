#pragma once

#include <string>
#include <vector>

namespace hsml::cli {

// Batch front end over the toolkit modules. One subcommand per invocation:
//   ingest, sample, fem-solve, rom-offline, rom-online,
//   pinn-direct, pinn-inverse, full-pipeline, export, report
// Returns the process exit status: 0 on success, 1 when a module rejects the
// request (domain error), 2 on usage errors. Artifacts land in --out; a
// non-empty output directory is refused without --force. The environment
// variable HSML_THREADS caps linear-algebra worker threads.
int run(int argc, const char* const* argv);

// test-friendly overload; args exclude the program name
int run(const std::vector<std::string>& args);

}  // namespace hsml::cli
