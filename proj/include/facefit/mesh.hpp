#pragma once

#include "facefit/types.hpp"

#include <vector>

namespace facefit {

/**
 * Triangle mesh with optional per-vertex UV coordinates and landmark indices.
 * Vertex positions are in model units (millimetres for the bundled assets);
 * UVs live in [0, 1]^2 with v = 0 at the top row of the corresponding map.
 */
struct TriMesh {
    Points3 vertices;
    Triangles triangles;
    Points2 uv; ///< rows() == vertices.rows() when present, 0 when absent
    std::vector<int> landmark_indices;

    bool has_uv() const { return uv.rows() > 0 && uv.rows() == vertices.rows(); }
};

using UVMap = Grid;

/**
 * Area-weighted vertex normals: each incident triangle contributes its
 * (un-normalised) cross product, the sum is normalised per vertex. Vertices
 * with a zero accumulated vector keep a zero normal.
 */
Points3 vertex_normals(const Points3& vertices, const Triangles& triangles);

/// Pullback of vertex_normals: given dL/d(normals), accumulate dL/d(vertices).
Points3 vertex_normals_backward(const Points3& vertices, const Triangles& triangles,
                                const Points3& d_normals);

/**
 * Bilinear sample of `map` at continuous UV positions. Texel centres sit at
 * ((x + 0.5) / W, (y + 0.5) / H); u maps to x, v to y (v = 0 is the top row);
 * out-of-range positions clamp to the edge. Returns one row of `map.channels`
 * values per UV row.
 */
MatX uv_sample(const UVMap& map, const Points2& uv);

/**
 * Adjoint of uv_sample with respect to the map: splats each row of `values`
 * onto the four texels around the corresponding UV position with the same
 * bilinear weights, accumulating into `accum` (which fixes the resolution).
 */
void uv_splat(const Points2& uv, const MatX& values, UVMap& accum);

/// Derivative of uv_sample with respect to the UV position: rows n give
/// (d sample_c / du, d sample_c / dv) folded with the upstream gradient.
Points2 uv_sample_backward_uv(const UVMap& map, const Points2& uv, const MatX& upstream);

/// Sorted unique one-ring vertex neighbourhoods (undirected mesh edges).
std::vector<std::vector<int>> laplacian_adjacency(const Triangles& triangles, int vertex_count);

/**
 * Per-triangle frame [e1 e2 e3] with e1 = v1 - v0, e2 = v2 - v0 and
 * e3 = c / sqrt(|c|), c = e1 x e2 (the scaled-normal fourth direction, which
 * makes the frame similarity-equivariant).
 */
Mat3 triangle_frame(const Vec3& v0, const Vec3& v1, const Vec3& v2);

/**
 * Per-triangle deformation gradients G with G * frame(ref) = frame(def).
 * Identity maps give G = I, translations leave G unchanged and a uniform
 * scale s gives G = s * I. Throws std::runtime_error when a reference
 * triangle is degenerate (non-invertible frame).
 */
std::vector<Mat3> deformation_gradients(const Points3& reference, const Points3& deformed,
                                        const Triangles& triangles);

} // namespace facefit
