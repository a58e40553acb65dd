#pragma once

#include "facefit/face_model.hpp"
#include "facefit/shading.hpp"

#include <vector>

namespace facefit {

/**
 * Output of one rasterization / render pass. All buffers are height x width;
 * `tri_id` is -1 on background pixels, on which bary/depth/color are 0 and
 * the mask is 0.
 */
struct RenderOutput {
    Grid color;                  ///< H x W x 3 linear radiance (render_face only)
    Grid mask;                   ///< H x W x 1, coverage x sampled validity
    Grid depth;                  ///< H x W x 1 camera-space z, 0 on background
    std::vector<int> tri_id;     ///< H * W row-major triangle ids, -1 = background
    Grid bary;                   ///< H x W x 3 screen-space barycentrics

    int width = 0, height = 0;
    int tri_at(int x, int y) const { return tri_id[static_cast<size_t>(y) * width + x]; }
};

/**
 * Deterministic z-buffer rasterizer. Pixel (ix, iy) is sampled at its centre
 * (ix + 0.5, iy + 0.5); coverage follows the top-left fill rule so meshes
 * with shared edges cover every pixel exactly once; the nearest depth
 * (screen-space barycentric interpolation of per-vertex z) wins, ties keep
 * the earlier triangle. Degenerate (zero-area) triangles are skipped. The
 * returned color buffer is zero — callers shade on top of tri_id/bary.
 */
RenderOutput rasterize(const Points2& vertices_px, const VecX& vertex_depth,
                       const Triangles& triangles, int width, int height);

/**
 * Full face render: projects posed camera-frame vertices, rasterizes,
 * interpolates UVs and normals per pixel (normals renormalised), samples the
 * albedo map (clamped to [0,1] at this point), shades with the SH lighting
 * and writes mask = coverage x bilinear validity sample. Background stays 0.
 */
RenderOutput render_face(const Points3& posed_vertices, const Points3& vertex_normals,
                         const UVMap& albedo, const SHCoeffs& gamma, const Camera& camera,
                         const TemplateFaceModel& tmpl);

/**
 * Renders the one-hot region map: rasterizes and bilinearly samples the
 * template parse map per covered pixel; background pixels get channel 0 = 1
 * (the background class).
 */
Grid render_parse(const Points3& posed_vertices, const Camera& camera,
                  const TemplateFaceModel& tmpl);

/// render_parse on a precomputed raster skeleton (the face render's raster is
/// identical, so one rasterization serves both passes).
Grid render_parse(const RenderOutput& raster, const TemplateFaceModel& tmpl);

/// Gradients returned by the render pullbacks. d_vertices is with respect to
/// the posed camera-frame vertices and already includes the projection chain;
/// d_normals is with respect to the per-vertex (pre-interpolation) normals
/// and must still be pulled through vertex_normals_backward by the caller.
struct RenderBackward {
    Points3 d_vertices;
    Points3 d_normals;
    UVMap d_albedo;
    SHCoeffs d_gamma = SHCoeffs::Zero();
};

/**
 * Pullback of render_face for an upstream dL/dColor image. Follows the
 * interior-pixel convention of differentiable rasterization: barycentric
 * derivatives flow to the three screen vertices of the covering triangle,
 * coverage changes and the z-test are not differentiated, and the mask is
 * treated as a constant.
 */
RenderBackward render_face_backward(const RenderOutput& render, const Points3& posed_vertices,
                                    const Points3& vertex_normals, const UVMap& albedo,
                                    const SHCoeffs& gamma, const Camera& camera,
                                    const TemplateFaceModel& tmpl, const Grid& d_color);

/// Pullback of render_parse (geometry path only; the parse map is fixed).
Points3 render_parse_backward(const RenderOutput& render, const Points3& posed_vertices,
                              const Camera& camera, const TemplateFaceModel& tmpl,
                              const Grid& d_parse);

/// dL/d(screen vertices) for one pixel's barycentric gradient (bary is the
/// pixel's coordinate triple); shared by the render pullbacks and exposed for
/// testing.
void barycentric_backward(const Vec2& v0, const Vec2& v1, const Vec2& v2, const Vec3& bary,
                          const Vec3& d_bary, Vec2& d_v0, Vec2& d_v1, Vec2& d_v2);

} // namespace facefit
