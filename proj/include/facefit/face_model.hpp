#pragma once

#include "facefit/mesh.hpp"

#include <string>
#include <vector>

namespace facefit {

/**
 * Immutable template rig: neutral mesh, absolute expression blendshapes,
 * mean albedo and the fixed UV parse / validity maps. The blendshape count is
 * not hard-coded (the production rig has 56, tests use small rigs).
 */
struct TemplateFaceModel {
    TriMesh s0;
    std::vector<TriMesh> blendshapes; ///< absolute shapes, same topology as s0
    UVMap r0;                         ///< 3-channel mean albedo, values in [0,1]
    UVMap parse_map;                  ///< one-hot region labels, channel 0 = background
    UVMap validity_map;               ///< 1-channel, 1 = face skin
    real distance_threshold = 1e-3;   ///< attention-mask cutoff, model units
    real blur_sigma = 1.0;            ///< attention-mask blur, px at mask resolution
    std::string units = "mm";

    int blendshape_count() const { return static_cast<int>(blendshapes.size()); }
};

/// One 1-channel UV mask per blendshape, values in [0,1].
struct AttentionMaskSet {
    std::vector<UVMap> masks;
};

/**
 * Learnable UV correction maps; all maps share one resolution. Stored
 * unclamped — the albedo is clamped to [0,1] only when shading, so the
 * optimizer never sees a dead clamp gradient.
 */
struct ModelCorrections {
    UVMap d_shape_0;               ///< static shape delta, mm
    std::vector<UVMap> d_shape_i;  ///< per-blendshape shape deltas, mm
    UVMap d_albedo_0;              ///< static albedo delta
    std::vector<UVMap> d_albedo_i; ///< per-blendshape albedo deltas
    UVMap r0_trainable;            ///< trainable mean albedo, initialised from the template

    /// Zero corrections at `resolution`, with r0_trainable = template albedo
    /// resampled to that resolution.
    static ModelCorrections zeros(const TemplateFaceModel& tmpl, int resolution);

    int resolution() const { return d_shape_0.width; }
};

/// Expression coefficients: w = sigmoid(logits), w0 = 1 - sum(w) (may go
/// negative; the shape equation permits it and sparsity regularization
/// discourages it).
struct ExpressionCoeffs {
    VecX logits;
    VecX w;
    real w0 = 1;
};

ExpressionCoeffs coeffs_from_logits(const VecX& logits);

/// Chain rule through coeffs_from_logits: combines dL/dw and dL/dw0 into
/// dL/dlogits (accounting for w0 = 1 - sum(w)).
VecX logits_backward(const ExpressionCoeffs& coeffs, const VecX& d_w, real d_w0);

/**
 * Per-blendshape attention masks: per-vertex displacement |Si(v) - S0(v)| is
 * zeroed below the template's distance threshold, normalised by the maximum
 * displacement, rasterised into UV space with barycentric interpolation,
 * Gaussian-blurred with blur_sigma (pixels) and clamped to [0,1].
 */
AttentionMaskSet compute_attention_masks(const TemplateFaceModel& tmpl, int resolution,
                                         real blur_sigma);

/**
 * Corrected shape: S = w0*S0 + F(d0) + sum_i w_i * (Si + F(Ai . di)) where F
 * samples a UV map at the mesh's per-vertex UVs and . is the elementwise
 * mask product.
 */
Points3 assemble_shape(const TemplateFaceModel& tmpl, const ModelCorrections& corrections,
                       const AttentionMaskSet& masks, const ExpressionCoeffs& coeffs);

/// Corrected dynamic albedo: R = r0_trainable + d0 + sum_i w_i * (Ai . di),
/// stored unclamped.
UVMap assemble_albedo(const TemplateFaceModel& tmpl, const ModelCorrections& corrections,
                      const AttentionMaskSet& masks, const ExpressionCoeffs& coeffs);

struct ShapeBackward {
    UVMap d_shape_0;
    std::vector<UVMap> d_shape_i;
    VecX d_logits;
};

/// Pullback of assemble_shape: upstream is dL/dS (one row per vertex).
ShapeBackward assemble_shape_backward(const TemplateFaceModel& tmpl,
                                      const ModelCorrections& corrections,
                                      const AttentionMaskSet& masks,
                                      const ExpressionCoeffs& coeffs, const Points3& upstream);

struct AlbedoBackward {
    UVMap d_albedo_0;
    std::vector<UVMap> d_albedo_i;
    UVMap d_r0_trainable;
    VecX d_logits;
};

/// Pullback of assemble_albedo: upstream is dL/dR (full-resolution 3ch map).
AlbedoBackward assemble_albedo_backward(const TemplateFaceModel& tmpl,
                                        const ModelCorrections& corrections,
                                        const AttentionMaskSet& masks,
                                        const ExpressionCoeffs& coeffs, const UVMap& upstream);

/// Rotation from Euler angles (rx, ry, rz): R = Rz(rz) * Ry(ry) * Rx(rx).
Mat3 euler_rotation(const Vec3& euler);

/// Rigid pose: returns R * v + t per vertex.
Points3 apply_pose(const Points3& vertices, const Vec3& euler, const Vec3& translation);

struct PoseBackward {
    Points3 d_vertices;
    Vec3 d_euler;
    Vec3 d_translation;
};

PoseBackward apply_pose_backward(const Points3& vertices, const Vec3& euler,
                                 const Vec3& translation, const Points3& upstream);

/// Separable Gaussian blur with edge replication; sigma in pixels, applied
/// per channel. sigma <= 0 returns the input unchanged.
Grid gaussian_blur(const Grid& grid, real sigma);

} // namespace facefit
