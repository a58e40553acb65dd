#pragma once

#include "facefit/losses.hpp"
#include "facefit/rasterizer.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace facefit {

/// One observed frame: image, 2D landmarks (pixels, with validity flags) and
/// a one-hot parse map. All values in [0,1] except landmarks.
struct FrameObservation {
    Grid image; ///< H x W x 3
    Points2 landmarks;
    std::vector<uint8_t> landmark_valid; ///< empty = all valid
    Grid parse; ///< H x W x classes
};

/// Per-frame tracking parameters: expression logits, head pose and SH light.
struct TrackingParams {
    VecX logits;
    Vec3 euler = Vec3::Zero();
    Vec3 translation = Vec3::Zero();
    SHCoeffs gamma = SHCoeffs::Zero();
};

/**
 * Optimization schedule. lr1/lr2 follow the reference schedule; because this
 * implementation optimizes raw parameters of mixed units (millimetres,
 * radians, logits) rather than network weights, each block additionally
 * carries a step-size multiplier applied on top of the base rate.
 */
struct FitConfig {
    int stage1_steps = 2000;
    int stage2_steps = 500;
    real lr1 = 1e-4;
    real lr2 = 1e-5;
    int restart_every = 500; ///< reset Adam moments every this many steps (0 = never)
    real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    LossWeights weights;
    std::uint64_t seed = 0;
    int frames_per_identity = 4; ///< N; informational, the frame list is authoritative

    // Per-block step multipliers (see struct comment). The correction-map
    // lane is kept slow relative to tracking: shape corrections can imitate
    // pose and expression changes, and letting them race the tracking
    // parameters makes the joint problem ill-conditioned.
    real scale_translation = 100;
    real scale_euler = 10;
    real scale_logits = 60;
    real scale_gamma = 10;
    real scale_corr_shape = 2;
    real scale_corr_albedo = 0.2;

    int uv_resolution = 128;  ///< correction-map resolution
    int warmup_steps = 200;   ///< landmark-only pose warmup
    real warmup_lr_euler = 0.01;
    real warmup_lr_translation = 0.5;
};

struct FitResult {
    ModelCorrections corrections;
    std::vector<TrackingParams> params;
    std::vector<LossBreakdown> trace; ///< one entry per optimization step
};

struct AdamState {
    VecX m, v;
    long t = 0;
};

/// One Adam update with bias correction; throws on NaN gradients.
void adam_step(VecX& params, const VecX& grads, AdamState& state, real lr, real beta1,
               real beta2, real eps);

/// Per-coordinate learning-rate variant (used for block scaling).
void adam_step(VecX& params, const VecX& grads, AdamState& state, const VecX& lr, real beta1,
               real beta2, real eps);

/**
 * Stage 1: joint recovery of shared ModelCorrections and per-frame
 * TrackingParams by Adam on the full objective. When no initial params are
 * given, tracking starts from the default initialization (logits -4,
 * monochromatic band-0 light matching the frame's mean intensity) plus a
 * landmark-only pose warmup; corrections start at zero. Deterministic.
 * Correction fitting is ill-posed from one view: requires >= 2 frames.
 */
FitResult fit_joint(const std::vector<FrameObservation>& frames, const TemplateFaceModel& tmpl,
                    const AttentionMaskSet& masks, const Camera& camera, const FitConfig& config,
                    const std::vector<TrackingParams>* init_params = nullptr,
                    const ModelCorrections* init_corrections = nullptr);

/// Stage 2: tracking params frozen (returned bit-identical), corrections
/// fine-tuned at lr2 with the tracking-parameter regularizer dropped.
FitResult finetune_model(const std::vector<FrameObservation>& frames,
                         const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                         const Camera& camera, const FitResult& fit, const FitConfig& config);

/**
 * Tracking-only mode: corrections fixed, per-frame params optimized under
 * the objective minus the model-dependent terms (smoothness and blendshape
 * gradient are constant in the tracked variables). Frames are independent:
 * tracking frames together or separately gives identical results.
 */
std::vector<TrackingParams> track(const std::vector<FrameObservation>& frames,
                                  const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                                  const ModelCorrections& corrections, const Camera& camera,
                                  const FitConfig& config,
                                  const std::vector<TrackingParams>* init_params = nullptr);

/// Band-0-only white light that makes radiance equal albedo.
SHCoeffs neutral_gamma();

struct RetargetOptions {
    bool transfer_pose = false;
    bool transfer_light = false;
    Vec3 default_euler = Vec3::Zero();
    Vec3 default_translation = Vec3(0, 0, 600);
    SHCoeffs default_gamma = neutral_gamma();
};

struct RetargetFrame {
    Points3 shape; ///< posed target vertices
    TrackingParams params;
    RenderOutput render;
};

/**
 * Applies a tracked coefficient sequence to another personalized model:
 * assembles the target's corrected shape/albedo with the source w per frame
 * and renders it. Pose and illumination follow the source only when the
 * corresponding transfer flags are set; otherwise the defaults are used.
 * Throws on blendshape-count mismatch.
 */
std::vector<RetargetFrame> retarget(const std::vector<TrackingParams>& source_params,
                                    const TemplateFaceModel& target_tmpl,
                                    const ModelCorrections& target_corrections,
                                    const AttentionMaskSet& target_masks, const Camera& camera,
                                    const RetargetOptions& options = {});

/// Assemble + pose + render one frame from a parameter set (shared by the
/// render/eval tools and the fitter's diagnostics).
struct FrameRender {
    Points3 posed;
    RenderOutput render;
    Grid parse;
    Points2 landmarks;
};

FrameRender render_frame(const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                         const ModelCorrections& corrections, const TrackingParams& params,
                         const Camera& camera);

/// Forward-only evaluation of every loss term for a parameter set.
LossBreakdown evaluate_losses(const std::vector<FrameObservation>& frames,
                              const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                              const ModelCorrections& corrections,
                              const std::vector<TrackingParams>& params, const Camera& camera,
                              const LossWeights& weights, bool stage2 = false);

} // namespace facefit
