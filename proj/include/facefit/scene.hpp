#pragma once

#include <string>
#include <vector>

#include "facefit/fitter.hpp"

namespace facefit {

/// A dataset directory in memory: frames + camera + optional ground truth.
struct SceneBundle {
    std::vector<FrameObservation> frames;
    Camera camera;
    int parse_classes = 0;
    std::vector<TrackingParams> gt_params; ///< empty when the scene has no ground truth
};

/// Built-in synthetic head used by tests and `synth` when no template is
/// given: a smooth dome with structured albedo, regional parse labels,
/// eye-hole validity, 68 landmarks and Gaussian-bump blendshapes.
struct ToyTemplateOptions {
    int grid = 16;            ///< vertices per side (>= 10)
    int blendshapes = 4;
    int map_resolution = 128; ///< r0 / parse / validity resolution (multiple of grid)
};

TemplateFaceModel make_toy_template(const ToyTemplateOptions& options = {});

/// Ground-truth sampling ranges for generate_scene.
struct SceneOptions {
    int n_frames = 4;
    std::uint64_t seed = 0;
    int active_blendshapes = 3;     ///< blendshapes with nonzero activation
    real max_euler_deg = 15;        ///< per-axis rotation bound
    Vec3 base_translation = Vec3(0, 0, 600);
    real translation_jitter_xy = 15;
    real translation_jitter_z = 40;
    real gamma_base_min = 2.0;      ///< monochromatic-dominant SH light
    real gamma_base_max = 3.0;
    real gamma_band_jitter = 0.25;  ///< relative strength of bands 1..8
    int uv_resolution = 64;         ///< resolution of the (zero) corrections used
};

/// Samples per-frame ground-truth tracking parameters; deterministic in the
/// seed. The same `active_blendshapes` indices stay active across frames.
std::vector<TrackingParams> sample_tracking_params(const TemplateFaceModel& tmpl,
                                                   const SceneOptions& options);

/**
 * Renders a synthetic scene with known ground truth: samples parameters,
 * renders every frame through the forward pipeline (with `corrections`, or
 * zero corrections when null) and derives landmark / parse observations from
 * the renders. The parse observation is hardened to one-hot.
 */
SceneBundle generate_scene(const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                           const Camera& camera, const ModelCorrections* corrections,
                           const SceneOptions& options);

/**
 * Writes a bundle as a directory: frames/NNNN.png, landmarks/NNNN.json
 * (rows [u, v, valid]), parse/NNNN.png (indexed), camera.ini, meta.json and,
 * when ground truth is present, gt_params.jsonl.
 */
void write_scene(const std::string& dir, const SceneBundle& bundle);

/// Loads a directory written by write_scene (or arranged externally in the
/// same layout). Throws with the offending path on schema violations.
SceneBundle load_scene(const std::string& dir);

} // namespace facefit
