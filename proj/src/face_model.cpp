#include "facefit/face_model.hpp"

#include "facefit/rasterizer.hpp"

#include <cmath>
#include <stdexcept>

namespace facefit {

namespace {

Grid resample_bilinear(const Grid& grid, int width, int height)
{
    if (grid.width == width && grid.height == height)
        return grid;
    Points2 uv(static_cast<Eigen::Index>(width) * height, 2);
    Eigen::Index row = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x, ++row) {
            uv(row, 0) = (x + 0.5) / width;
            uv(row, 1) = (y + 0.5) / height;
        }
    const MatX samples = uv_sample(grid, uv);
    Grid out(width, height, grid.channels);
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
        for (int c = 0; c < grid.channels; ++c)
            out.data[i * grid.channels + c] = samples(i, c);
    return out;
}

/// 3ch map scaled per texel by a 1ch mask.
Grid masked(const UVMap& mask, const UVMap& map)
{
    Grid out = map;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            for (int c = 0; c < map.channels; ++c)
                out.at(x, y, c) *= mask.at(x, y, 0);
    return out;
}

void require_same_resolution(const Grid& a, const Grid& b, const char* what)
{
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument(std::string("resolution mismatch: ") + what);
}

} // namespace

ModelCorrections ModelCorrections::zeros(const TemplateFaceModel& tmpl, int resolution)
{
    ModelCorrections c;
    c.d_shape_0 = Grid(resolution, resolution, 3);
    c.d_albedo_0 = Grid(resolution, resolution, 3);
    c.d_shape_i.assign(tmpl.blendshapes.size(), Grid(resolution, resolution, 3));
    c.d_albedo_i.assign(tmpl.blendshapes.size(), Grid(resolution, resolution, 3));
    c.r0_trainable = resample_bilinear(tmpl.r0, resolution, resolution);
    return c;
}

ExpressionCoeffs coeffs_from_logits(const VecX& logits)
{
    ExpressionCoeffs c;
    c.logits = logits;
    c.w = logits.unaryExpr([](real x) { return real(1) / (real(1) + std::exp(-x)); });
    c.w0 = 1 - c.w.sum();
    return c;
}

VecX logits_backward(const ExpressionCoeffs& coeffs, const VecX& d_w, real d_w0)
{
    // w0 = 1 - sum(w) couples every coefficient to the neutral term.
    VecX total = d_w.array() - d_w0;
    return total.array() * coeffs.w.array() * (1 - coeffs.w.array());
}

Grid gaussian_blur(const Grid& grid, real sigma)
{
    if (sigma <= 0)
        return grid;
    const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    VecX kernel(2 * radius + 1);
    for (int j = -radius; j <= radius; ++j)
        kernel[j + radius] = std::exp(-0.5 * j * j / (sigma * sigma));
    kernel /= kernel.sum();

    Grid tmp(grid.width, grid.height, grid.channels);
    for (int y = 0; y < grid.height; ++y)
        for (int x = 0; x < grid.width; ++x)
            for (int c = 0; c < grid.channels; ++c) {
                real acc = 0;
                for (int j = -radius; j <= radius; ++j)
                    acc += kernel[j + radius] *
                           grid.at(std::clamp(x + j, 0, grid.width - 1), y, c);
                tmp.at(x, y, c) = acc;
            }
    Grid out(grid.width, grid.height, grid.channels);
    for (int y = 0; y < grid.height; ++y)
        for (int x = 0; x < grid.width; ++x)
            for (int c = 0; c < grid.channels; ++c) {
                real acc = 0;
                for (int j = -radius; j <= radius; ++j)
                    acc += kernel[j + radius] *
                           tmp.at(x, std::clamp(y + j, 0, grid.height - 1), c);
                out.at(x, y, c) = acc;
            }
    return out;
}

AttentionMaskSet compute_attention_masks(const TemplateFaceModel& tmpl, int resolution,
                                         real blur_sigma)
{
    if (resolution < 8)
        throw std::invalid_argument("compute_attention_masks: resolution must be >= 8");
    if (!tmpl.s0.has_uv())
        throw std::invalid_argument("compute_attention_masks: template mesh has no UVs");

    // UV-space screen positions (texel centres at x + 0.5) and a dummy depth.
    const Eigen::Index nv = tmpl.s0.vertices.rows();
    Points2 verts_px(nv, 2);
    for (Eigen::Index v = 0; v < nv; ++v) {
        verts_px(v, 0) = tmpl.s0.uv(v, 0) * resolution;
        verts_px(v, 1) = tmpl.s0.uv(v, 1) * resolution;
    }
    const VecX depth = VecX::Ones(nv);
    const RenderOutput uv_raster =
        rasterize(verts_px, depth, tmpl.s0.triangles, resolution, resolution);

    AttentionMaskSet set;
    set.masks.reserve(tmpl.blendshapes.size());
    for (const TriMesh& bs : tmpl.blendshapes) {
        if (bs.vertices.rows() != nv)
            throw std::invalid_argument("compute_attention_masks: blendshape topology mismatch");
        VecX value(nv);
        real maxd = 0;
        for (Eigen::Index v = 0; v < nv; ++v) {
            const real d = (bs.vertices.row(v) - tmpl.s0.vertices.row(v)).norm();
            value[v] = d;
            maxd = std::max(maxd, d);
        }
        Grid mask(resolution, resolution, 1);
        if (maxd >= tmpl.distance_threshold) {
            for (Eigen::Index v = 0; v < nv; ++v)
                value[v] = value[v] < tmpl.distance_threshold ? 0 : value[v] / maxd;
            for (int y = 0; y < resolution; ++y)
                for (int x = 0; x < resolution; ++x) {
                    const int t = uv_raster.tri_at(x, y);
                    if (t < 0)
                        continue;
                    real acc = 0;
                    for (int k = 0; k < 3; ++k)
                        acc += uv_raster.bary.at(x, y, k) * value[tmpl.s0.triangles(t, k)];
                    mask.at(x, y, 0) = acc;
                }
        }
        mask = gaussian_blur(mask, blur_sigma);
        for (auto& m : mask.data)
            m = std::clamp(m, real(0), real(1));
        set.masks.push_back(std::move(mask));
    }
    return set;
}

Points3 assemble_shape(const TemplateFaceModel& tmpl, const ModelCorrections& corrections,
                       const AttentionMaskSet& masks, const ExpressionCoeffs& coeffs)
{
    const int nb = tmpl.blendshape_count();
    if (coeffs.w.size() != nb || static_cast<int>(masks.masks.size()) != nb ||
        static_cast<int>(corrections.d_shape_i.size()) != nb)
        throw std::invalid_argument("assemble_shape: blendshape count mismatch");
    if (!tmpl.s0.has_uv())
        throw std::invalid_argument("assemble_shape: template mesh has no UVs");

    Points3 shape = coeffs.w0 * tmpl.s0.vertices;
    shape += uv_sample(corrections.d_shape_0, tmpl.s0.uv);
    for (int i = 0; i < nb; ++i) {
        require_same_resolution(masks.masks[i], corrections.d_shape_i[i], "attention mask");
        const MatX corr = uv_sample(masked(masks.masks[i], corrections.d_shape_i[i]), tmpl.s0.uv);
        shape += coeffs.w[i] * (tmpl.blendshapes[i].vertices + corr);
    }
    return shape;
}

UVMap assemble_albedo(const TemplateFaceModel& tmpl, const ModelCorrections& corrections,
                      const AttentionMaskSet& masks, const ExpressionCoeffs& coeffs)
{
    const int nb = tmpl.blendshape_count();
    if (coeffs.w.size() != nb || static_cast<int>(masks.masks.size()) != nb ||
        static_cast<int>(corrections.d_albedo_i.size()) != nb)
        throw std::invalid_argument("assemble_albedo: blendshape count mismatch");

    Grid albedo = corrections.r0_trainable;
    require_same_resolution(albedo, corrections.d_albedo_0, "albedo corrections");
    albedo.data += corrections.d_albedo_0.data;
    for (int i = 0; i < nb; ++i) {
        require_same_resolution(albedo, corrections.d_albedo_i[i], "albedo corrections");
        require_same_resolution(masks.masks[i], corrections.d_albedo_i[i], "attention mask");
        albedo.data += coeffs.w[i] * masked(masks.masks[i], corrections.d_albedo_i[i]).data;
    }
    return albedo;
}

ShapeBackward assemble_shape_backward(const TemplateFaceModel& tmpl,
                                      const ModelCorrections& corrections,
                                      const AttentionMaskSet& masks,
                                      const ExpressionCoeffs& coeffs, const Points3& upstream)
{
    const int nb = tmpl.blendshape_count();
    const int res = corrections.resolution();
    ShapeBackward g;
    g.d_shape_0 = Grid(res, res, 3);
    g.d_shape_i.assign(nb, Grid(res, res, 3));
    VecX d_w = VecX::Zero(nb);

    uv_splat(tmpl.s0.uv, upstream, g.d_shape_0);
    const real d_w0 = (upstream.array() * tmpl.s0.vertices.array()).sum();
    for (int i = 0; i < nb; ++i) {
        const Grid masked_map = masked(masks.masks[i], corrections.d_shape_i[i]);
        const MatX corr = uv_sample(masked_map, tmpl.s0.uv);
        d_w[i] = (upstream.array() * (tmpl.blendshapes[i].vertices + corr).array()).sum();
        uv_splat(tmpl.s0.uv, MatX(coeffs.w[i] * upstream), g.d_shape_i[i]);
        // Chain through the mask product: the splat landed on Ai . di.
        g.d_shape_i[i] = masked(masks.masks[i], g.d_shape_i[i]);
    }
    g.d_logits = logits_backward(coeffs, d_w, d_w0);
    return g;
}

AlbedoBackward assemble_albedo_backward(const TemplateFaceModel& tmpl,
                                        const ModelCorrections& corrections,
                                        const AttentionMaskSet& masks,
                                        const ExpressionCoeffs& coeffs, const UVMap& upstream)
{
    const int nb = tmpl.blendshape_count();
    AlbedoBackward g;
    g.d_r0_trainable = upstream;
    g.d_albedo_0 = upstream;
    g.d_albedo_i.resize(nb);
    VecX d_w = VecX::Zero(nb);
    for (int i = 0; i < nb; ++i) {
        g.d_albedo_i[i] = masked(masks.masks[i], upstream);
        g.d_albedo_i[i].data *= coeffs.w[i];
        d_w[i] = (upstream.data.array() * masked(masks.masks[i], corrections.d_albedo_i[i]).data.array()).sum();
    }
    g.d_logits = logits_backward(coeffs, d_w, 0);
    return g;
}

Mat3 euler_rotation(const Vec3& euler)
{
    const real cx = std::cos(euler.x()), sx = std::sin(euler.x());
    const real cy = std::cos(euler.y()), sy = std::sin(euler.y());
    const real cz = std::cos(euler.z()), sz = std::sin(euler.z());
    Mat3 rx, ry, rz;
    rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
    ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
    rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
    return rz * ry * rx;
}

Points3 apply_pose(const Points3& vertices, const Vec3& euler, const Vec3& translation)
{
    const Mat3 r = euler_rotation(euler);
    Points3 out = vertices * r.transpose();
    out.rowwise() += translation.transpose();
    return out;
}

PoseBackward apply_pose_backward(const Points3& vertices, const Vec3& euler,
                                 const Vec3& translation, const Points3& upstream)
{
    (void)translation;
    const real cx = std::cos(euler.x()), sx = std::sin(euler.x());
    const real cy = std::cos(euler.y()), sy = std::sin(euler.y());
    const real cz = std::cos(euler.z()), sz = std::sin(euler.z());
    Mat3 rx, ry, rz, drx, dry, drz;
    rx << 1, 0, 0, 0, cx, -sx, 0, sx, cx;
    ry << cy, 0, sy, 0, 1, 0, -sy, 0, cy;
    rz << cz, -sz, 0, sz, cz, 0, 0, 0, 1;
    drx << 0, 0, 0, 0, -sx, -cx, 0, cx, -sx;
    dry << -sy, 0, cy, 0, 0, 0, -cy, 0, -sy;
    drz << -sz, -cz, 0, cz, -sz, 0, 0, 0, 0;

    const Mat3 r = rz * ry * rx;
    // M = sum_v upstream_v vertex_v^T collapses the per-vertex chain rule.
    const Mat3 m = upstream.transpose() * vertices;
    PoseBackward g;
    g.d_vertices = upstream * r;
    g.d_translation = upstream.colwise().sum().transpose();
    g.d_euler.x() = ((rz * ry * drx).array() * m.array()).sum();
    g.d_euler.y() = ((rz * dry * rx).array() * m.array()).sum();
    g.d_euler.z() = ((drz * ry * rx).array() * m.array()).sum();
    return g;
}

} // namespace facefit
