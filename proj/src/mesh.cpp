#include "facefit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace facefit {

Points3 vertex_normals(const Points3& vertices, const Triangles& triangles)
{
    Points3 accum = Points3::Zero(vertices.rows(), 3);
    for (Eigen::Index t = 0; t < triangles.rows(); ++t) {
        const int a = triangles(t, 0), b = triangles(t, 1), c = triangles(t, 2);
        const Vec3 e1 = vertices.row(b) - vertices.row(a);
        const Vec3 e2 = vertices.row(c) - vertices.row(a);
        const Vec3 n = e1.cross(e2); // length = 2 * area, hence area weighting
        accum.row(a) += n;
        accum.row(b) += n;
        accum.row(c) += n;
    }
    for (Eigen::Index v = 0; v < accum.rows(); ++v) {
        const real len = accum.row(v).norm();
        if (len > 0)
            accum.row(v) /= len;
    }
    return accum;
}

Points3 vertex_normals_backward(const Points3& vertices, const Triangles& triangles,
                                const Points3& d_normals)
{
    // Recompute the un-normalised accumulators, push the upstream gradient
    // through the per-vertex normalisation, then through the cross products.
    Points3 accum = Points3::Zero(vertices.rows(), 3);
    for (Eigen::Index t = 0; t < triangles.rows(); ++t) {
        const int a = triangles(t, 0), b = triangles(t, 1), c = triangles(t, 2);
        const Vec3 e1 = vertices.row(b) - vertices.row(a);
        const Vec3 e2 = vertices.row(c) - vertices.row(a);
        const Vec3 n = e1.cross(e2);
        accum.row(a) += n;
        accum.row(b) += n;
        accum.row(c) += n;
    }

    Points3 d_accum = Points3::Zero(vertices.rows(), 3);
    for (Eigen::Index v = 0; v < accum.rows(); ++v) {
        const Vec3 m = accum.row(v);
        const real len = m.norm();
        if (len == 0)
            continue; // forward emitted a constant zero normal
        const Vec3 n = m / len;
        const Vec3 g = d_normals.row(v);
        d_accum.row(v) = (g - n * n.dot(g)) / len; // (I - n n^T) / |m|
    }

    Points3 d_vertices = Points3::Zero(vertices.rows(), 3);
    for (Eigen::Index t = 0; t < triangles.rows(); ++t) {
        const int a = triangles(t, 0), b = triangles(t, 1), c = triangles(t, 2);
        const Vec3 e1 = vertices.row(b) - vertices.row(a);
        const Vec3 e2 = vertices.row(c) - vertices.row(a);
        const Vec3 g = d_accum.row(a) + d_accum.row(b) + d_accum.row(c);
        // d<g, e1 x e2> = <de1, e2 x g> + <de2, g x e1>
        const Vec3 d_e1 = e2.cross(g);
        const Vec3 d_e2 = g.cross(e1);
        d_vertices.row(b) += d_e1;
        d_vertices.row(c) += d_e2;
        d_vertices.row(a) -= d_e1 + d_e2;
    }
    return d_vertices;
}

namespace {

struct BilinearTaps {
    int x0, x1, y0, y1;
    real fx, fy; // fractions toward (x1, y1)
};

BilinearTaps bilinear_taps(const UVMap& map, real u, real v)
{
    // Texel centres at ((x + 0.5) / W, (y + 0.5) / H); clamp to edge.
    const real sx = u * map.width - 0.5;
    const real sy = v * map.height - 0.5;
    const real fx0 = std::floor(sx);
    const real fy0 = std::floor(sy);
    BilinearTaps t;
    t.fx = sx - fx0;
    t.fy = sy - fy0;
    t.x0 = std::clamp(static_cast<int>(fx0), 0, map.width - 1);
    t.x1 = std::clamp(static_cast<int>(fx0) + 1, 0, map.width - 1);
    t.y0 = std::clamp(static_cast<int>(fy0), 0, map.height - 1);
    t.y1 = std::clamp(static_cast<int>(fy0) + 1, 0, map.height - 1);
    return t;
}

} // namespace

MatX uv_sample(const UVMap& map, const Points2& uv)
{
    if (map.empty())
        throw std::invalid_argument("uv_sample: empty map");
    MatX out(uv.rows(), map.channels);
    for (Eigen::Index i = 0; i < uv.rows(); ++i) {
        const BilinearTaps t = bilinear_taps(map, uv(i, 0), uv(i, 1));
        for (int c = 0; c < map.channels; ++c) {
            const real v00 = map.at(t.x0, t.y0, c), v10 = map.at(t.x1, t.y0, c);
            const real v01 = map.at(t.x0, t.y1, c), v11 = map.at(t.x1, t.y1, c);
            const real top = v00 + (v10 - v00) * t.fx;
            const real bot = v01 + (v11 - v01) * t.fx;
            out(i, c) = top + (bot - top) * t.fy;
        }
    }
    return out;
}

void uv_splat(const Points2& uv, const MatX& values, UVMap& accum)
{
    if (accum.empty())
        throw std::invalid_argument("uv_splat: empty accumulator");
    if (values.rows() != uv.rows() || values.cols() != accum.channels)
        throw std::invalid_argument("uv_splat: value shape mismatch");
    for (Eigen::Index i = 0; i < uv.rows(); ++i) {
        const BilinearTaps t = bilinear_taps(accum, uv(i, 0), uv(i, 1));
        const real w00 = (1 - t.fx) * (1 - t.fy), w10 = t.fx * (1 - t.fy);
        const real w01 = (1 - t.fx) * t.fy, w11 = t.fx * t.fy;
        for (int c = 0; c < accum.channels; ++c) {
            const real g = values(i, c);
            accum.at(t.x0, t.y0, c) += w00 * g;
            accum.at(t.x1, t.y0, c) += w10 * g;
            accum.at(t.x0, t.y1, c) += w01 * g;
            accum.at(t.x1, t.y1, c) += w11 * g;
        }
    }
}

Points2 uv_sample_backward_uv(const UVMap& map, const Points2& uv, const MatX& upstream)
{
    Points2 d_uv = Points2::Zero(uv.rows(), 2);
    for (Eigen::Index i = 0; i < uv.rows(); ++i) {
        const BilinearTaps t = bilinear_taps(map, uv(i, 0), uv(i, 1));
        // At clamped sample positions the taps coincide, which correctly
        // zeroes the derivative in the clamped direction.
        for (int c = 0; c < map.channels; ++c) {
            const real v00 = map.at(t.x0, t.y0, c), v10 = map.at(t.x1, t.y0, c);
            const real v01 = map.at(t.x0, t.y1, c), v11 = map.at(t.x1, t.y1, c);
            const real d_fx = (v10 - v00) * (1 - t.fy) + (v11 - v01) * t.fy;
            const real d_fy = (v01 - v00) * (1 - t.fx) + (v11 - v10) * t.fx;
            d_uv(i, 0) += upstream(i, c) * d_fx * map.width;
            d_uv(i, 1) += upstream(i, c) * d_fy * map.height;
        }
    }
    return d_uv;
}

std::vector<std::vector<int>> laplacian_adjacency(const Triangles& triangles, int vertex_count)
{
    std::vector<std::vector<int>> adj(vertex_count);
    auto add = [&](int a, int b) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    };
    for (Eigen::Index t = 0; t < triangles.rows(); ++t) {
        add(triangles(t, 0), triangles(t, 1));
        add(triangles(t, 1), triangles(t, 2));
        add(triangles(t, 2), triangles(t, 0));
    }
    for (auto& ring : adj) {
        std::sort(ring.begin(), ring.end());
        ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
    }
    return adj;
}

Mat3 triangle_frame(const Vec3& v0, const Vec3& v1, const Vec3& v2)
{
    const Vec3 e1 = v1 - v0;
    const Vec3 e2 = v2 - v0;
    const Vec3 c = e1.cross(e2);
    const real len = c.norm();
    Mat3 frame;
    frame.col(0) = e1;
    frame.col(1) = e2;
    frame.col(2) = len > 0 ? Vec3(c / std::sqrt(len)) : Vec3::Zero();
    return frame;
}

std::vector<Mat3> deformation_gradients(const Points3& reference, const Points3& deformed,
                                        const Triangles& triangles)
{
    if (reference.rows() != deformed.rows())
        throw std::invalid_argument("deformation_gradients: vertex count mismatch");
    std::vector<Mat3> grads(triangles.rows());
    for (Eigen::Index t = 0; t < triangles.rows(); ++t) {
        const int a = triangles(t, 0), b = triangles(t, 1), c = triangles(t, 2);
        const Mat3 ref = triangle_frame(reference.row(a), reference.row(b), reference.row(c));
        const real det = ref.determinant();
        if (std::abs(det) < 1e-12)
            throw std::runtime_error("deformation_gradients: degenerate reference triangle " +
                                     std::to_string(t));
        const Mat3 def = triangle_frame(deformed.row(a), deformed.row(b), deformed.row(c));
        grads[t] = def * ref.inverse();
    }
    return grads;
}

} // namespace facefit
