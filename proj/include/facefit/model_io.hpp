#pragma once

#include <string>
#include <vector>

#include "facefit/face_model.hpp"
#include "facefit/fitter.hpp"

namespace facefit {

/**
 * Writes a template rig as a directory container: manifest.json (units,
 * resolution, blur_sigma, threshold, blendshape count), s0.obj, bs/SS_NN.obj,
 * r0.png (16-bit RGB), parse_T.png (indexed class labels), validity.png and
 * landmarks.json. Existing files are overwritten.
 */
void save_template(const std::string& dir, const TemplateFaceModel& tmpl);

/// Loads a template container written by save_template. Throws with the
/// offending path on missing files or schema violations.
TemplateFaceModel load_template(const std::string& dir);

/// Single float grid, binary: magic "FGRD", u32 width/height/channels
/// (little-endian), then float32 samples in grid layout.
void save_grid(const std::string& path, const Grid& grid);

Grid load_grid(const std::string& path);

/// Correction maps as one grid file per map under `dir`.
void save_corrections(const std::string& dir, const ModelCorrections& corrections);

ModelCorrections load_corrections(const std::string& dir, const TemplateFaceModel& tmpl);

/// Per-frame tracking parameters as JSON-lines (one frame per line with
/// logits / euler / translation / gamma, gamma as 3 rows of 9).
void save_params(const std::string& path, const std::vector<TrackingParams>& params);

std::vector<TrackingParams> load_params(const std::string& path);

/// Loss-trace CSV: header line, then one row per optimization step.
void save_trace(const std::string& path, const std::vector<LossBreakdown>& trace);

std::vector<LossBreakdown> load_trace(const std::string& path);

} // namespace facefit
