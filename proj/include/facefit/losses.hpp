#pragma once

#include "facefit/face_model.hpp"
#include "facefit/shading.hpp"

#include <vector>

namespace facefit {

struct LossWeights {
    real lambda_ph = 200;
    real lambda_lm = 0.1;
    real lambda_pa = 50;
    real lambda_sd = 2.5;
    real lambda_bg = 1.5;
    real lambda_reg = 1e-3;
    real lambda_gamma = 0.02;
};

/**
 * Per-term scalars plus the weighted total. The photometric weight covers
 * both the colour term and the image-gradient term (the gradient loss is the
 * photometric expression applied to image gradients, so the two share one
 * weight); the regularizer splits into its coefficient and lighting parts,
 * which share the regularization weight.
 */
struct LossBreakdown {
    real photometric = 0;
    real image_gradient = 0;
    real landmark = 0;
    real parsing = 0;
    real smoothness = 0;
    real blendshape_gradient = 0;
    real reg_coeff = 0;
    real reg_light = 0;
    real total = 0;
};

/// Weighted sum of the term fields (total is recomputed, input total
/// ignored). Stage-2 mode drops the tracking-parameter regularizer. Throws on
/// NaN, naming the term.
LossBreakdown total_loss(const LossBreakdown& terms, const LossWeights& weights,
                         bool stage2 = false);

/**
 * Multi-frame photometric consistency, the l2,1 norm of the masked residual:
 * per frame sum_q M(q) * |I(q) - R(q)|_2 / sum_q M(q), summed over frames.
 * Masks are soft; the normalizer sums mask values. Throws when a frame's mask
 * sums to zero.
 */
real photometric_l21(const std::vector<Grid>& images, const std::vector<Grid>& rendered,
                     const std::vector<Grid>& masks);

/// d photometric_l21 / d rendered (masks and input images are constants).
std::vector<Grid> photometric_l21_backward(const std::vector<Grid>& images,
                                           const std::vector<Grid>& rendered,
                                           const std::vector<Grid>& masks, real upstream = 1);

// Single-frame variants (the multi-frame forms sum these); the fitter uses
// them to avoid copying frame buffers into temporary lists.
real photometric_l21_frame(const Grid& image, const Grid& rendered, const Grid& mask);
Grid photometric_l21_frame_backward(const Grid& image, const Grid& rendered, const Grid& mask,
                                    real upstream = 1);
real image_gradient_frame(const Grid& image, const Grid& rendered, const Grid& mask);
Grid image_gradient_frame_backward(const Grid& image, const Grid& rendered, const Grid& mask,
                                   real upstream = 1);
real parsing_frame(const Grid& gt_parse, const Grid& pred_parse);
Grid parsing_frame_backward(const Grid& gt_parse, const Grid& pred_parse, real upstream = 1);

/**
 * Photometric expression applied to forward-difference gradient images (x
 * and y differences stacked as twice the channels); the mask is eroded by
 * one pixel so every difference stays inside the original mask.
 */
real image_gradient_loss(const std::vector<Grid>& images, const std::vector<Grid>& rendered,
                         const std::vector<Grid>& masks);

std::vector<Grid> image_gradient_loss_backward(const std::vector<Grid>& images,
                                               const std::vector<Grid>& rendered,
                                               const std::vector<Grid>& masks, real upstream = 1);

/// Mean squared pixel distance over valid landmarks. `valid` may be empty
/// (all valid); throws when no landmark is valid.
real landmark_loss(const Points2& pred, const Points2& gt, const std::vector<uint8_t>& valid);

Points2 landmark_loss_backward(const Points2& pred, const Points2& gt,
                               const std::vector<uint8_t>& valid, real upstream = 1);

/// Per-frame flat l2 (Frobenius) norm of the parse-map difference, summed
/// over frames.
real parsing_loss(const std::vector<Grid>& gt_parse, const std::vector<Grid>& pred_parse);

std::vector<Grid> parsing_loss_backward(const std::vector<Grid>& gt_parse,
                                        const std::vector<Grid>& pred_parse, real upstream = 1);

/// Laplacian smoothness sum_v sum_{u in N(v)} |D(v) - D(u)|^2 (each
/// undirected edge counted twice) on the vertex-space static shape correction.
real shape_smoothness(const Points3& delta, const std::vector<std::vector<int>>& adjacency);

Points3 shape_smoothness_backward(const Points3& delta,
                                  const std::vector<std::vector<int>>& adjacency,
                                  real upstream = 1);

/**
 * Deformation-gradient consistency: for each blendshape i, the per-triangle
 * deformation gradients of the corrected blendshape Si + F(Ai . di) relative
 * to S0 must stay close (squared Frobenius) to those of the template
 * blendshape Si. The correction enters masked, exactly as in shape assembly.
 */
real blendshape_gradient_loss(const TemplateFaceModel& tmpl, const ModelCorrections& corrections,
                              const AttentionMaskSet& masks);

/// d blendshape_gradient_loss / d d_shape_i (one map per blendshape).
std::vector<UVMap> blendshape_gradient_loss_backward(const TemplateFaceModel& tmpl,
                                                     const ModelCorrections& corrections,
                                                     const AttentionMaskSet& masks,
                                                     real upstream = 1);

/// Tracking-parameter regularizer, split for reporting: coeff_l1 = sum |w_i|,
/// light = |gamma - gamma_mean|_2 + lambda_gamma * |gamma|_2 with gamma_mean
/// the per-band mean across the three channels.
struct TrackingReg {
    real coeff_l1 = 0;
    real light = 0;
    real total() const { return coeff_l1 + light; }
};

TrackingReg tracking_reg(const ExpressionCoeffs& coeffs, const SHCoeffs& gamma,
                         real lambda_gamma);

struct TrackingRegBackward {
    VecX d_w;
    SHCoeffs d_gamma = SHCoeffs::Zero();
};

TrackingRegBackward tracking_reg_backward(const ExpressionCoeffs& coeffs, const SHCoeffs& gamma,
                                          real lambda_gamma, real upstream = 1);

} // namespace facefit
