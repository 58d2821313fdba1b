// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Subcommands: pretrain, evaluate, reconstruct,
// codebook-dump, data-synth, data-prep, ablate.

#pragma once

#include <ostream>

namespace paco::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Parses argv and runs one subcommand. The run summary (JSON) goes to `out`;
/// failures print one JSON line {"error": ..., "command": ...} to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace paco::cli
