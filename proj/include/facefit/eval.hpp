#pragma once

#include <string>
#include <vector>

#include "facefit/scene.hpp"

namespace facefit {

/**
 * Reconstruction quality report. `totals` is the full multi-frame objective
 * (identical to evaluate_losses on the same inputs); per_frame entries are
 * standalone single-frame evaluations (the shared model terms repeat in
 * each). coefficient_mae is NaN when the scene carries no ground truth.
 */
struct EvalReport {
    LossBreakdown totals;
    std::vector<LossBreakdown> per_frame;
    real photometric_error = 0; ///< mean masked per-pixel RGB distance
    real nme = 0;               ///< mean landmark NME across frames
    real coefficient_mae = std::numeric_limits<real>::quiet_NaN();
};

/**
 * Normalized mean landmark error: mean Euclidean pixel distance over valid
 * points, divided by sqrt(bbox_w * bbox_h). `valid` may be empty (all
 * valid); throws when no point is valid or a bbox dimension is <= 0.
 */
real compute_nme(const Points2& pred, const Points2& gt, const std::vector<uint8_t>& valid,
                 real bbox_w, real bbox_h);

/// Mean absolute error over frames and coefficients; throws on shape mismatch.
real coefficient_mae(const std::vector<VecX>& pred, const std::vector<VecX>& gt);

/// Evaluates a parameter set (and corrections) against a scene bundle.
EvalReport evaluate_scene(const SceneBundle& bundle, const TemplateFaceModel& tmpl,
                          const AttentionMaskSet& masks, const ModelCorrections& corrections,
                          const std::vector<TrackingParams>& params, const LossWeights& weights);

/// Serializes a report as JSON.
void write_eval_report(const std::string& path, const EvalReport& report);

} // namespace facefit
