#pragma once

#include <string>

#include "facefit/fitter.hpp"
#include "facefit/shading.hpp"

namespace facefit {

/// Everything the CLI can configure from one file.
struct RunConfig {
    Camera camera;
    FitConfig fit;
};

/**
 * Parses structured key = value text with [camera] / [weights] / [fit]
 * sections into overrides on top of `base`. Unknown keys and malformed
 * lines throw with file:line context; '#' and ';' start comments.
 *
 *   [camera]
 *   focal = 470.4
 *   [weights]
 *   lambda_ph = 200
 *   [fit]
 *   stage1_steps = 2000
 */
RunConfig parse_config(const std::string& text, const RunConfig& base, const std::string& origin);

/// parse_config on a file's contents.
RunConfig load_config(const std::string& path, const RunConfig& base);

/// Writes a config file that load_config restores exactly (full precision).
void save_config(const std::string& path, const RunConfig& config);

} // namespace facefit
