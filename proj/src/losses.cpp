#include "facefit/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace facefit {

LossBreakdown total_loss(const LossBreakdown& terms, const LossWeights& weights, bool stage2)
{
    auto check = [](real v, const char* name) {
        if (std::isnan(v))
            throw std::runtime_error(std::string("total_loss: NaN in term ") + name);
    };
    check(terms.photometric, "photometric");
    check(terms.image_gradient, "image_gradient");
    check(terms.landmark, "landmark");
    check(terms.parsing, "parsing");
    check(terms.smoothness, "smoothness");
    check(terms.blendshape_gradient, "blendshape_gradient");
    check(terms.reg_coeff, "reg_coeff");
    check(terms.reg_light, "reg_light");

    LossBreakdown out = terms;
    const real reg = stage2 ? 0 : weights.lambda_reg;
    out.total = weights.lambda_ph * (terms.photometric + terms.image_gradient) +
                weights.lambda_lm * terms.landmark + weights.lambda_pa * terms.parsing +
                weights.lambda_sd * terms.smoothness +
                weights.lambda_bg * terms.blendshape_gradient +
                reg * (terms.reg_coeff + terms.reg_light);
    return out;
}

namespace {

void check_photometric_inputs(const std::vector<Grid>& images, const std::vector<Grid>& rendered,
                              const std::vector<Grid>& masks)
{
    if (images.size() != rendered.size() || images.size() != masks.size())
        throw std::invalid_argument("photometric: frame count mismatch");
    for (size_t n = 0; n < images.size(); ++n) {
        if (!images[n].same_shape(rendered[n]))
            throw std::invalid_argument("photometric: image/render shape mismatch in frame " +
                                        std::to_string(n));
        if (masks[n].width != images[n].width || masks[n].height != images[n].height ||
            masks[n].channels != 1)
            throw std::invalid_argument("photometric: mask shape mismatch in frame " +
                                        std::to_string(n));
    }
}

real mask_sum_or_throw(const Grid& mask, size_t frame)
{
    const real s = mask.data.sum();
    if (s <= 0)
        throw std::runtime_error("photometric: empty mask in frame " + std::to_string(frame));
    return s;
}

/// Forward differences in x and y stacked as 2 * channels, and the 1-px
/// eroded mask (min over the pixel and its +x / +y neighbours; the last row
/// and column erode to zero).
Grid stack_gradients(const Grid& img)
{
    Grid out(img.width, img.height, 2 * img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                if (x + 1 < img.width)
                    out.at(x, y, c) = img.at(x + 1, y, c) - img.at(x, y, c);
                if (y + 1 < img.height)
                    out.at(x, y, img.channels + c) = img.at(x, y + 1, c) - img.at(x, y, c);
            }
    return out;
}

Grid erode_mask(const Grid& mask)
{
    Grid out(mask.width, mask.height, 1);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (x + 1 >= mask.width || y + 1 >= mask.height)
                continue; // erodes to 0
            out.at(x, y) = std::min({mask.at(x, y), mask.at(x + 1, y), mask.at(x, y + 1)});
        }
    return out;
}

real photometric_core(const Grid& image, const Grid& rendered, const Grid& mask, real mask_sum)
{
    real acc = 0;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const real m = mask.at(x, y);
            if (m == 0)
                continue;
            real d2 = 0;
            for (int c = 0; c < image.channels; ++c) {
                const real d = image.at(x, y, c) - rendered.at(x, y, c);
                d2 += d * d;
            }
            acc += m * std::sqrt(d2);
        }
    return acc / mask_sum;
}

Grid photometric_core_backward(const Grid& image, const Grid& rendered, const Grid& mask,
                               real mask_sum, real upstream)
{
    Grid g(image.width, image.height, image.channels);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const real m = mask.at(x, y);
            if (m == 0)
                continue;
            real d2 = 0;
            for (int c = 0; c < image.channels; ++c) {
                const real d = image.at(x, y, c) - rendered.at(x, y, c);
                d2 += d * d;
            }
            const real norm = std::sqrt(d2);
            if (norm == 0)
                continue; // l2 kink: subgradient 0
            for (int c = 0; c < image.channels; ++c) {
                const real d = image.at(x, y, c) - rendered.at(x, y, c);
                g.at(x, y, c) = upstream * m * (-d / norm) / mask_sum;
            }
        }
    return g;
}

} // namespace

real photometric_l21(const std::vector<Grid>& images, const std::vector<Grid>& rendered,
                     const std::vector<Grid>& masks)
{
    check_photometric_inputs(images, rendered, masks);
    real total = 0;
    for (size_t n = 0; n < images.size(); ++n)
        total += photometric_core(images[n], rendered[n], masks[n],
                                  mask_sum_or_throw(masks[n], n));
    return total;
}

std::vector<Grid> photometric_l21_backward(const std::vector<Grid>& images,
                                           const std::vector<Grid>& rendered,
                                           const std::vector<Grid>& masks, real upstream)
{
    check_photometric_inputs(images, rendered, masks);
    std::vector<Grid> grads;
    grads.reserve(images.size());
    for (size_t n = 0; n < images.size(); ++n)
        grads.push_back(photometric_core_backward(images[n], rendered[n], masks[n],
                                                  mask_sum_or_throw(masks[n], n), upstream));
    return grads;
}

namespace {

void check_frame_shapes(const Grid& image, const Grid& rendered, const Grid& mask)
{
    if (!image.same_shape(rendered))
        throw std::invalid_argument("photometric: image/render shape mismatch");
    if (mask.width != image.width || mask.height != image.height || mask.channels != 1)
        throw std::invalid_argument("photometric: mask shape mismatch");
}

} // namespace

real photometric_l21_frame(const Grid& image, const Grid& rendered, const Grid& mask)
{
    check_frame_shapes(image, rendered, mask);
    const real s = mask.data.sum();
    if (s <= 0)
        throw std::runtime_error("photometric: empty mask");
    return photometric_core(image, rendered, mask, s);
}

Grid photometric_l21_frame_backward(const Grid& image, const Grid& rendered, const Grid& mask,
                                    real upstream)
{
    check_frame_shapes(image, rendered, mask);
    const real s = mask.data.sum();
    if (s <= 0)
        throw std::runtime_error("photometric: empty mask");
    return photometric_core_backward(image, rendered, mask, s, upstream);
}

real image_gradient_frame(const Grid& image, const Grid& rendered, const Grid& mask)
{
    check_frame_shapes(image, rendered, mask);
    const Grid eroded = erode_mask(mask);
    const real s = eroded.data.sum();
    if (s <= 0)
        throw std::runtime_error("image_gradient_loss: empty eroded mask");
    return photometric_core(stack_gradients(image), stack_gradients(rendered), eroded, s);
}

Grid image_gradient_frame_backward(const Grid& image, const Grid& rendered, const Grid& mask,
                                   real upstream)
{
    check_frame_shapes(image, rendered, mask);
    const Grid eroded = erode_mask(mask);
    const real s = eroded.data.sum();
    if (s <= 0)
        throw std::runtime_error("image_gradient_loss: empty eroded mask");
    const Grid d_stack = photometric_core_backward(
        stack_gradients(image), stack_gradients(rendered), eroded, s, upstream);
    const int ch = image.channels;
    Grid g(image.width, image.height, ch);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            for (int c = 0; c < ch; ++c) {
                const real gx = x + 1 < g.width ? d_stack.at(x, y, c) : 0;
                const real gy = y + 1 < g.height ? d_stack.at(x, y, ch + c) : 0;
                g.at(x, y, c) += -gx - gy;
                if (x + 1 < g.width)
                    g.at(x + 1, y, c) += gx;
                if (y + 1 < g.height)
                    g.at(x, y + 1, c) += gy;
            }
    return g;
}

real parsing_frame(const Grid& gt_parse, const Grid& pred_parse)
{
    if (!gt_parse.same_shape(pred_parse))
        throw std::invalid_argument("parsing_loss: shape/class mismatch");
    return (gt_parse.data - pred_parse.data).norm();
}

Grid parsing_frame_backward(const Grid& gt_parse, const Grid& pred_parse, real upstream)
{
    if (!gt_parse.same_shape(pred_parse))
        throw std::invalid_argument("parsing_loss: shape/class mismatch");
    Grid g(pred_parse.width, pred_parse.height, pred_parse.channels);
    const VecX diff = pred_parse.data - gt_parse.data;
    const real norm = diff.norm();
    if (norm > 0)
        g.data = upstream * diff / norm;
    return g;
}

real image_gradient_loss(const std::vector<Grid>& images, const std::vector<Grid>& rendered,
                         const std::vector<Grid>& masks)
{
    check_photometric_inputs(images, rendered, masks);
    real total = 0;
    for (size_t n = 0; n < images.size(); ++n) {
        const Grid eroded = erode_mask(masks[n]);
        if (eroded.data.sum() <= 0)
            throw std::runtime_error("image_gradient_loss: empty eroded mask in frame " +
                                     std::to_string(n));
        total += photometric_core(stack_gradients(images[n]), stack_gradients(rendered[n]),
                                  eroded, eroded.data.sum());
    }
    return total;
}

std::vector<Grid> image_gradient_loss_backward(const std::vector<Grid>& images,
                                               const std::vector<Grid>& rendered,
                                               const std::vector<Grid>& masks, real upstream)
{
    check_photometric_inputs(images, rendered, masks);
    std::vector<Grid> grads;
    grads.reserve(images.size());
    for (size_t n = 0; n < images.size(); ++n) {
        const Grid eroded = erode_mask(masks[n]);
        if (eroded.data.sum() <= 0)
            throw std::runtime_error("image_gradient_loss: empty eroded mask in frame " +
                                     std::to_string(n));
        const Grid d_stack =
            photometric_core_backward(stack_gradients(images[n]), stack_gradients(rendered[n]),
                                      eroded, eroded.data.sum(), upstream);
        // Adjoint of forward differencing: each difference d(x) = r(x+1) - r(x)
        // pushes +g onto x+1 and -g onto x.
        const int ch = images[n].channels;
        Grid g(images[n].width, images[n].height, ch);
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x)
                for (int c = 0; c < ch; ++c) {
                    const real gx = x + 1 < g.width ? d_stack.at(x, y, c) : 0;
                    const real gy = y + 1 < g.height ? d_stack.at(x, y, ch + c) : 0;
                    g.at(x, y, c) += -gx - gy;
                    if (x + 1 < g.width)
                        g.at(x + 1, y, c) += gx;
                    if (y + 1 < g.height)
                        g.at(x, y + 1, c) += gy;
                }
        grads.push_back(std::move(g));
    }
    return grads;
}

namespace {

int count_valid(const Points2& pred, const Points2& gt, const std::vector<uint8_t>& valid)
{
    if (pred.rows() != gt.rows())
        throw std::invalid_argument("landmark_loss: point count mismatch");
    if (!valid.empty() && static_cast<Eigen::Index>(valid.size()) != pred.rows())
        throw std::invalid_argument("landmark_loss: validity size mismatch");
    int n = 0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i)
        n += valid.empty() || valid[static_cast<size_t>(i)];
    if (n == 0)
        throw std::runtime_error("landmark_loss: no valid landmarks");
    return n;
}

} // namespace

real landmark_loss(const Points2& pred, const Points2& gt, const std::vector<uint8_t>& valid)
{
    const int n = count_valid(pred, gt, valid);
    real acc = 0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        if (!valid.empty() && !valid[static_cast<size_t>(i)])
            continue;
        acc += (pred.row(i) - gt.row(i)).squaredNorm();
    }
    return acc / n;
}

Points2 landmark_loss_backward(const Points2& pred, const Points2& gt,
                               const std::vector<uint8_t>& valid, real upstream)
{
    const int n = count_valid(pred, gt, valid);
    Points2 g = Points2::Zero(pred.rows(), 2);
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        if (!valid.empty() && !valid[static_cast<size_t>(i)])
            continue;
        g.row(i) = upstream * 2 * (pred.row(i) - gt.row(i)) / n;
    }
    return g;
}

real parsing_loss(const std::vector<Grid>& gt_parse, const std::vector<Grid>& pred_parse)
{
    if (gt_parse.size() != pred_parse.size())
        throw std::invalid_argument("parsing_loss: frame count mismatch");
    real total = 0;
    for (size_t n = 0; n < gt_parse.size(); ++n) {
        if (!gt_parse[n].same_shape(pred_parse[n]))
            throw std::invalid_argument("parsing_loss: shape/class mismatch in frame " +
                                        std::to_string(n));
        total += (gt_parse[n].data - pred_parse[n].data).norm();
    }
    return total;
}

std::vector<Grid> parsing_loss_backward(const std::vector<Grid>& gt_parse,
                                        const std::vector<Grid>& pred_parse, real upstream)
{
    if (gt_parse.size() != pred_parse.size())
        throw std::invalid_argument("parsing_loss: frame count mismatch");
    std::vector<Grid> grads;
    grads.reserve(gt_parse.size());
    for (size_t n = 0; n < gt_parse.size(); ++n) {
        Grid g(pred_parse[n].width, pred_parse[n].height, pred_parse[n].channels);
        const VecX diff = pred_parse[n].data - gt_parse[n].data;
        const real norm = diff.norm();
        if (norm > 0)
            g.data = upstream * diff / norm;
        grads.push_back(std::move(g));
    }
    return grads;
}

real shape_smoothness(const Points3& delta, const std::vector<std::vector<int>>& adjacency)
{
    if (static_cast<Eigen::Index>(adjacency.size()) != delta.rows())
        throw std::invalid_argument("shape_smoothness: adjacency size mismatch");
    real acc = 0;
    for (size_t v = 0; v < adjacency.size(); ++v)
        for (int u : adjacency[v])
            acc += (delta.row(static_cast<Eigen::Index>(v)) - delta.row(u)).squaredNorm();
    return acc;
}

Points3 shape_smoothness_backward(const Points3& delta,
                                  const std::vector<std::vector<int>>& adjacency, real upstream)
{
    if (static_cast<Eigen::Index>(adjacency.size()) != delta.rows())
        throw std::invalid_argument("shape_smoothness: adjacency size mismatch");
    Points3 g = Points3::Zero(delta.rows(), 3);
    // Each undirected edge appears in both directed sums, hence the factor 4.
    for (size_t v = 0; v < adjacency.size(); ++v)
        for (int u : adjacency[v])
            g.row(static_cast<Eigen::Index>(v)) +=
                upstream * 4 * (delta.row(static_cast<Eigen::Index>(v)) - delta.row(u));
    return g;
}

namespace {

Grid masked_map(const UVMap& mask, const UVMap& map)
{
    Grid out = map;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            for (int c = 0; c < map.channels; ++c)
                out.at(x, y, c) *= mask.at(x, y, 0);
    return out;
}

} // namespace

real blendshape_gradient_loss(const TemplateFaceModel& tmpl, const ModelCorrections& corrections,
                              const AttentionMaskSet& masks)
{
    real total = 0;
    const Points3& s0 = tmpl.s0.vertices;
    const Triangles& tris = tmpl.s0.triangles;
    for (int i = 0; i < tmpl.blendshape_count(); ++i) {
        const Points3 corrected =
            tmpl.blendshapes[i].vertices +
            Points3(uv_sample(masked_map(masks.masks[i], corrections.d_shape_i[i]), tmpl.s0.uv));
        const std::vector<Mat3> g_corr = deformation_gradients(s0, corrected, tris);
        const std::vector<Mat3> g_ref =
            deformation_gradients(s0, tmpl.blendshapes[i].vertices, tris);
        for (size_t t = 0; t < g_corr.size(); ++t)
            total += (g_corr[t] - g_ref[t]).squaredNorm();
    }
    return total;
}

std::vector<UVMap> blendshape_gradient_loss_backward(const TemplateFaceModel& tmpl,
                                                     const ModelCorrections& corrections,
                                                     const AttentionMaskSet& masks, real upstream)
{
    const Points3& s0 = tmpl.s0.vertices;
    const Triangles& tris = tmpl.s0.triangles;
    const int res = corrections.resolution();
    std::vector<UVMap> grads(tmpl.blendshapes.size());

    for (int i = 0; i < tmpl.blendshape_count(); ++i) {
        const Points3 corrected =
            tmpl.blendshapes[i].vertices +
            Points3(uv_sample(masked_map(masks.masks[i], corrections.d_shape_i[i]), tmpl.s0.uv));
        Points3 d_verts = Points3::Zero(s0.rows(), 3);

        for (Eigen::Index t = 0; t < tris.rows(); ++t) {
            const int a = tris(t, 0), b = tris(t, 1), c = tris(t, 2);
            const Mat3 ref = triangle_frame(s0.row(a), s0.row(b), s0.row(c));
            const Mat3 w = ref.inverse();
            const Mat3 def = triangle_frame(corrected.row(a), corrected.row(b), corrected.row(c));
            const Mat3 def_t = triangle_frame(tmpl.blendshapes[i].vertices.row(a),
                                              tmpl.blendshapes[i].vertices.row(b),
                                              tmpl.blendshapes[i].vertices.row(c));
            const Mat3 d_g = upstream * 2 * ((def - def_t) * w);
            const Mat3 d_frame = d_g * w.transpose(); // dL/d[e1 e2 e3]

            const Vec3 e1 = Vec3(corrected.row(b)) - Vec3(corrected.row(a));
            const Vec3 e2 = Vec3(corrected.row(c)) - Vec3(corrected.row(a));
            Vec3 d_e1 = d_frame.col(0);
            Vec3 d_e2 = d_frame.col(1);
            const Vec3 cr = e1.cross(e2);
            const real len = cr.norm();
            if (len > 0) {
                // e3 = cr / sqrt(|cr|): pull d_frame.col(2) back to cr, then
                // through the cross product.
                const Vec3 p3 = d_frame.col(2);
                const real inv_sqrt = 1 / std::sqrt(len);
                const Vec3 d_cr =
                    inv_sqrt * p3 - real(0.5) * inv_sqrt / (len * len) * cr.dot(p3) * cr;
                d_e1 += e2.cross(d_cr);
                d_e2 += d_cr.cross(e1);
            }
            d_verts.row(b) += d_e1;
            d_verts.row(c) += d_e2;
            d_verts.row(a) -= d_e1 + d_e2;
        }

        Grid splat(res, res, 3);
        uv_splat(tmpl.s0.uv, d_verts, splat);
        grads[i] = masked_map(masks.masks[i], splat);
    }
    return grads;
}

TrackingReg tracking_reg(const ExpressionCoeffs& coeffs, const SHCoeffs& gamma, real lambda_gamma)
{
    TrackingReg r;
    r.coeff_l1 = coeffs.w.array().abs().sum();
    const Eigen::Matrix<real, 1, 9> band_mean = gamma.colwise().mean();
    SHCoeffs centered = gamma;
    centered.rowwise() -= band_mean;
    r.light = centered.norm() + lambda_gamma * gamma.norm();
    return r;
}

TrackingRegBackward tracking_reg_backward(const ExpressionCoeffs& coeffs, const SHCoeffs& gamma,
                                          real lambda_gamma, real upstream)
{
    TrackingRegBackward g;
    g.d_w = upstream * coeffs.w.array().sign().matrix();

    const Eigen::Matrix<real, 1, 9> band_mean = gamma.colwise().mean();
    SHCoeffs centered = gamma;
    centered.rowwise() -= band_mean;
    const real cnorm = centered.norm();
    if (cnorm > 0) {
        // d|Pγ|/dγ = P (Pγ / |Pγ|); the centering projector P is symmetric.
        SHCoeffs unit = centered / cnorm;
        SHCoeffs proj = unit;
        proj.rowwise() -= Eigen::Matrix<real, 1, 9>(unit.colwise().mean());
        g.d_gamma += upstream * proj;
    }
    const real gnorm = gamma.norm();
    if (gnorm > 0)
        g.d_gamma += upstream * lambda_gamma * gamma / gnorm;
    return g;
}

} // namespace facefit
