#pragma once

namespace facefit {

/**
 * Command-line entry point with subcommands masks / synth / fit / track /
 * render / retarget / eval. Returns 0 on success, 2 on usage errors and 1 on
 * runtime errors; logs to stderr and writes artifacts under --out.
 */
int run_cli(int argc, const char* const* argv);

} // namespace facefit
