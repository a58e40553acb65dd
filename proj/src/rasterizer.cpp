#include "facefit/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace facefit {

namespace {

constexpr real min_area = 1e-12; // px^2; smaller triangles are skipped

real edge_function(const Vec2& a, const Vec2& b, const Vec2& p)
{
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

// Top-left fill rule in y-down pixel coordinates for an edge whose effective
// direction (after orientation normalisation) is d: boundary pixels belong to
// the triangle on top edges (horizontal, running +x) and left edges (running
// -y, i.e. up-screen).
bool tie_included(const Vec2& d)
{
    return (d.y() == 0 && d.x() > 0) || d.y() < 0;
}

} // namespace

RenderOutput rasterize(const Points2& vertices_px, const VecX& vertex_depth,
                       const Triangles& triangles, int width, int height)
{
    if (vertices_px.rows() != vertex_depth.size())
        throw std::invalid_argument("rasterize: vertex/depth count mismatch");

    RenderOutput out;
    out.width = width;
    out.height = height;
    out.color = Grid(width, height, 3);
    out.mask = Grid(width, height, 1);
    out.depth = Grid(width, height, 1);
    out.bary = Grid(width, height, 3);
    out.tri_id.assign(static_cast<size_t>(width) * height, -1);
    std::vector<real> zbuf(static_cast<size_t>(width) * height,
                           std::numeric_limits<real>::infinity());

    for (Eigen::Index t = 0; t < triangles.rows(); ++t) {
        const int ia = triangles(t, 0), ib = triangles(t, 1), ic = triangles(t, 2);
        const Vec2 v0 = vertices_px.row(ia), v1 = vertices_px.row(ib), v2 = vertices_px.row(ic);
        const real area2 = edge_function(v0, v1, v2);
        if (std::abs(area2) < min_area)
            continue;
        const real s = area2 > 0 ? 1 : -1;
        const bool tie0 = tie_included(s * (v2 - v1));
        const bool tie1 = tie_included(s * (v0 - v2));
        const bool tie2 = tie_included(s * (v1 - v0));

        const real min_x = std::min({v0.x(), v1.x(), v2.x()});
        const real max_x = std::max({v0.x(), v1.x(), v2.x()});
        const real min_y = std::min({v0.y(), v1.y(), v2.y()});
        const real max_y = std::max({v0.y(), v1.y(), v2.y()});
        const int x0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(max_x - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(max_y - 0.5)));

        for (int iy = y0; iy <= y1; ++iy) {
            for (int ix = x0; ix <= x1; ++ix) {
                const Vec2 p(ix + 0.5, iy + 0.5);
                const real e0 = s * edge_function(v1, v2, p);
                const real e1 = s * edge_function(v2, v0, p);
                const real e2 = s * edge_function(v0, v1, p);
                const bool inside = (e0 > 0 || (e0 == 0 && tie0)) &&
                                    (e1 > 0 || (e1 == 0 && tie1)) &&
                                    (e2 > 0 || (e2 == 0 && tie2));
                if (!inside)
                    continue;
                const real inv = 1 / (s * area2);
                const real b0 = e0 * inv, b1 = e1 * inv, b2 = e2 * inv;
                const real z = b0 * vertex_depth[ia] + b1 * vertex_depth[ib] +
                               b2 * vertex_depth[ic];
                const size_t pix = static_cast<size_t>(iy) * width + ix;
                if (z < zbuf[pix]) {
                    zbuf[pix] = z;
                    out.tri_id[pix] = static_cast<int>(t);
                    out.depth.at(ix, iy) = z;
                    out.mask.at(ix, iy) = 1;
                    out.bary.at(ix, iy, 0) = b0;
                    out.bary.at(ix, iy, 1) = b1;
                    out.bary.at(ix, iy, 2) = b2;
                }
            }
        }
    }
    return out;
}

namespace {

/// Covered pixels with their interpolated UV, gathered once per pass.
struct CoveredPixels {
    std::vector<int> x, y, tri;
    Points2 uv;
};

CoveredPixels gather_covered(const RenderOutput& raster, const TriMesh& mesh)
{
    CoveredPixels cp;
    size_t count = 0;
    for (int id : raster.tri_id)
        count += id >= 0;
    cp.x.reserve(count);
    cp.y.reserve(count);
    cp.tri.reserve(count);
    cp.uv.resize(static_cast<Eigen::Index>(count), 2);
    Eigen::Index row = 0;
    for (int iy = 0; iy < raster.height; ++iy)
        for (int ix = 0; ix < raster.width; ++ix) {
            const int t = raster.tri_at(ix, iy);
            if (t < 0)
                continue;
            Vec2 uv = Vec2::Zero();
            for (int k = 0; k < 3; ++k)
                uv += raster.bary.at(ix, iy, k) * Vec2(mesh.uv.row(mesh.triangles(t, k)));
            cp.x.push_back(ix);
            cp.y.push_back(iy);
            cp.tri.push_back(t);
            cp.uv.row(row++) = uv;
        }
    return cp;
}

} // namespace

RenderOutput render_face(const Points3& posed_vertices, const Points3& vertex_normals,
                         const UVMap& albedo, const SHCoeffs& gamma, const Camera& camera,
                         const TemplateFaceModel& tmpl)
{
    if (!tmpl.s0.has_uv())
        throw std::invalid_argument("render_face: template mesh has no UVs");
    Points2 px;
    VecX depth;
    project(posed_vertices, camera, px, depth);
    RenderOutput out = rasterize(px, depth, tmpl.s0.triangles, camera.width, camera.height);

    const CoveredPixels cp = gather_covered(out, tmpl.s0);
    const MatX albedo_s = uv_sample(albedo, cp.uv);
    const MatX validity_s = uv_sample(tmpl.validity_map, cp.uv);

    for (size_t i = 0; i < cp.x.size(); ++i) {
        const int ix = cp.x[i], iy = cp.y[i], t = cp.tri[i];
        Vec3 n = Vec3::Zero();
        for (int k = 0; k < 3; ++k)
            n += out.bary.at(ix, iy, k) * Vec3(vertex_normals.row(tmpl.s0.triangles(t, k)));
        const real len = n.norm();
        if (len > 0)
            n /= len;
        Vec3 a;
        for (int c = 0; c < 3; ++c)
            a[c] = std::clamp(albedo_s(static_cast<Eigen::Index>(i), c), real(0), real(1));
        const Vec3 radiance = shade(a, n, gamma);
        for (int c = 0; c < 3; ++c)
            out.color.at(ix, iy, c) = radiance[c];
        out.mask.at(ix, iy) = validity_s(static_cast<Eigen::Index>(i), 0);
    }
    return out;
}

Grid render_parse(const RenderOutput& raster, const TemplateFaceModel& tmpl)
{
    Grid parse(raster.width, raster.height, tmpl.parse_map.channels);
    for (int iy = 0; iy < raster.height; ++iy)
        for (int ix = 0; ix < raster.width; ++ix)
            parse.at(ix, iy, 0) = 1; // background class
    const CoveredPixels cp = gather_covered(raster, tmpl.s0);
    const MatX parse_s = uv_sample(tmpl.parse_map, cp.uv);
    for (size_t i = 0; i < cp.x.size(); ++i)
        for (int c = 0; c < parse.channels; ++c)
            parse.at(cp.x[i], cp.y[i], c) = parse_s(static_cast<Eigen::Index>(i), c);
    return parse;
}

Grid render_parse(const Points3& posed_vertices, const Camera& camera,
                  const TemplateFaceModel& tmpl)
{
    Points2 px;
    VecX depth;
    project(posed_vertices, camera, px, depth);
    return render_parse(rasterize(px, depth, tmpl.s0.triangles, camera.width, camera.height),
                        tmpl);
}

void barycentric_backward(const Vec2& v0, const Vec2& v1, const Vec2& v2, const Vec3& bary,
                          const Vec3& d_bary, Vec2& d_v0, Vec2& d_v1, Vec2& d_v2)
{
    const real area2 = edge_function(v0, v1, v2);
    d_v0.setZero();
    d_v1.setZero();
    d_v2.setZero();
    if (std::abs(area2) < min_area)
        return;
    const real sx = d_bary[0] * (v2.y() - v1.y()) + d_bary[1] * (v0.y() - v2.y()) +
                    d_bary[2] * (v1.y() - v0.y());
    const real sy = d_bary[0] * (v1.x() - v2.x()) + d_bary[1] * (v2.x() - v0.x()) +
                    d_bary[2] * (v0.x() - v1.x());
    const Vec2 s(sx / area2, sy / area2);
    d_v0 = bary[0] * s;
    d_v1 = bary[1] * s;
    d_v2 = bary[2] * s;
}

RenderBackward render_face_backward(const RenderOutput& render, const Points3& posed_vertices,
                                    const Points3& vertex_normals, const UVMap& albedo,
                                    const SHCoeffs& gamma, const Camera& camera,
                                    const TemplateFaceModel& tmpl, const Grid& d_color)
{
    RenderBackward g;
    g.d_vertices = Points3::Zero(posed_vertices.rows(), 3);
    g.d_normals = Points3::Zero(vertex_normals.rows(), 3);
    g.d_albedo = Grid(albedo.width, albedo.height, albedo.channels);

    Points2 px;
    VecX depth;
    project(posed_vertices, camera, px, depth);
    Points2 d_px = Points2::Zero(posed_vertices.rows(), 2);

    const CoveredPixels cp = gather_covered(render, tmpl.s0);
    const MatX albedo_s = uv_sample(albedo, cp.uv);

    // Per-pixel upstreams for the batched map pullbacks (gated by the clamp).
    MatX d_sample(cp.uv.rows(), 3);

    for (Eigen::Index i = 0; i < cp.uv.rows(); ++i) {
        const int ix = cp.x[i], iy = cp.y[i], t = cp.tri[i];
        const int va = tmpl.s0.triangles(t, 0), vb = tmpl.s0.triangles(t, 1),
                  vc = tmpl.s0.triangles(t, 2);
        const Vec3 bary(render.bary.at(ix, iy, 0), render.bary.at(ix, iy, 1),
                        render.bary.at(ix, iy, 2));

        Vec3 up;
        for (int c = 0; c < 3; ++c)
            up[c] = d_color.at(ix, iy, c);

        Vec3 n_raw = Vec3::Zero();
        for (int k = 0; k < 3; ++k)
            n_raw += bary[k] * Vec3(vertex_normals.row(tmpl.s0.triangles(t, k)));
        const real len = n_raw.norm();
        const Vec3 n = len > 0 ? Vec3(n_raw / len) : Vec3::Zero();
        const Eigen::Matrix<real, 9, 1> basis = sh_basis(n);

        Vec3 a, gate;
        for (int c = 0; c < 3; ++c) {
            const real s = albedo_s(i, c);
            a[c] = std::clamp(s, real(0), real(1));
            gate[c] = (s > 0 && s < 1) ? 1 : 0;
        }

        // gamma and albedo paths.
        Eigen::Matrix<real, 9, 1> d_basis = Eigen::Matrix<real, 9, 1>::Zero();
        for (int c = 0; c < 3; ++c) {
            const real irr = gamma.row(c).dot(basis);
            g.d_gamma.row(c) += up[c] * a[c] * basis.transpose();
            d_sample(i, c) = up[c] * irr * gate[c];
            d_basis += up[c] * a[c] * gamma.row(c).transpose();
        }

        // Normal path: through the SH basis and the renormalisation.
        Vec3 d_bary = Vec3::Zero();
        if (len > 0) {
            const Vec3 d_n = sh_basis_jacobian(n).transpose() * d_basis;
            const Vec3 d_nraw = (d_n - n * n.dot(d_n)) / len;
            for (int k = 0; k < 3; ++k) {
                const Vec3 nv = vertex_normals.row(tmpl.s0.triangles(t, k));
                g.d_normals.row(tmpl.s0.triangles(t, k)) += bary[k] * d_nraw.transpose();
                d_bary[k] += nv.dot(d_nraw);
            }
        }

        // UV path (albedo sample position): folded below into d_bary as well.
        const MatX up_row = d_sample.row(i);
        const Points2 uv_row = cp.uv.row(i);
        const Points2 d_uv = uv_sample_backward_uv(albedo, uv_row, up_row);
        for (int k = 0; k < 3; ++k) {
            const Vec2 uv_k = tmpl.s0.uv.row(tmpl.s0.triangles(t, k));
            d_bary[k] += uv_k.dot(Vec2(d_uv.row(0)));
        }

        Vec2 d_v0, d_v1, d_v2;
        barycentric_backward(px.row(va), px.row(vb), px.row(vc), bary, d_bary, d_v0, d_v1, d_v2);
        d_px.row(va) += d_v0;
        d_px.row(vb) += d_v1;
        d_px.row(vc) += d_v2;
    }

    uv_splat(cp.uv, d_sample, g.d_albedo);
    g.d_vertices = project_backward(posed_vertices, camera, d_px);
    return g;
}

Points3 render_parse_backward(const RenderOutput& render, const Points3& posed_vertices,
                              const Camera& camera, const TemplateFaceModel& tmpl,
                              const Grid& d_parse)
{
    Points2 px;
    VecX depth;
    project(posed_vertices, camera, px, depth);
    Points2 d_px = Points2::Zero(posed_vertices.rows(), 2);

    const CoveredPixels cp = gather_covered(render, tmpl.s0);
    for (Eigen::Index i = 0; i < cp.uv.rows(); ++i) {
        const int ix = cp.x[i], iy = cp.y[i], t = cp.tri[i];
        MatX up(1, tmpl.parse_map.channels);
        bool any = false;
        for (int c = 0; c < tmpl.parse_map.channels; ++c) {
            up(0, c) = d_parse.at(ix, iy, c);
            any = any || up(0, c) != 0;
        }
        if (!any)
            continue;
        const Vec3 bary(render.bary.at(ix, iy, 0), render.bary.at(ix, iy, 1),
                        render.bary.at(ix, iy, 2));
        const Points2 uv_row = cp.uv.row(i);
        const Points2 d_uv = uv_sample_backward_uv(tmpl.parse_map, uv_row, up);
        Vec3 d_bary = Vec3::Zero();
        for (int k = 0; k < 3; ++k) {
            const Vec2 uv_k = tmpl.s0.uv.row(tmpl.s0.triangles(t, k));
            d_bary[k] += uv_k.dot(Vec2(d_uv.row(0)));
        }
        const int va = tmpl.s0.triangles(t, 0), vb = tmpl.s0.triangles(t, 1),
                  vc = tmpl.s0.triangles(t, 2);
        Vec2 d_v0, d_v1, d_v2;
        barycentric_backward(px.row(va), px.row(vb), px.row(vc), bary, d_bary, d_v0, d_v1, d_v2);
        d_px.row(va) += d_v0;
        d_px.row(vb) += d_v1;
        d_px.row(vc) += d_v2;
    }
    return project_backward(posed_vertices, camera, d_px);
}

} // namespace facefit
