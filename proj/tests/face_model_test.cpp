#include "facefit/face_model.hpp"
#include "facefit/rng.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

using namespace facefit;

namespace {

Grid random_map(Rng& rng, int res, int channels, real scale)
{
    Grid g;
    g.width = g.height = res;
    g.channels = channels;
    g.data.resize(static_cast<Eigen::Index>(res) * res * channels);
    for (Eigen::Index i = 0; i < g.data.size(); ++i)
        g.data[i] = rng.uniform(-scale, scale);
    return g;
}

/// Small textured rig with random geometry; UVs on texel centres of `res`.
TemplateFaceModel random_rig(Rng& rng, int n_vertices, int nb, int res)
{
    TemplateFaceModel tmpl;
    tmpl.s0.vertices.resize(n_vertices, 3);
    tmpl.s0.uv.resize(n_vertices, 2);
    for (Eigen::Index v = 0; v < n_vertices; ++v) {
        tmpl.s0.vertices.row(v) << rng.uniform(-50, 50), rng.uniform(-50, 50),
            rng.uniform(-50, 50);
        tmpl.s0.uv.row(v) << rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9);
    }
    tmpl.s0.triangles.resize(2, 3);
    tmpl.s0.triangles << 0, 1, 2, 1, 2, 3;
    for (int i = 0; i < nb; ++i) {
        TriMesh bs = tmpl.s0;
        for (Eigen::Index v = 0; v < n_vertices; ++v)
            bs.vertices.row(v) += Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5))
                                      .transpose();
        tmpl.blendshapes.push_back(std::move(bs));
    }
    tmpl.r0 = random_map(rng, res, 3, 0.4);
    tmpl.r0.data.array() += 0.5;
    return tmpl;
}

AttentionMaskSet random_masks(Rng& rng, int nb, int res)
{
    AttentionMaskSet masks;
    for (int i = 0; i < nb; ++i) {
        Grid m = random_map(rng, res, 1, 0.5);
        m.data.array() += 0.5; // in [0, 1]
        masks.masks.push_back(std::move(m));
    }
    return masks;
}

ExpressionCoeffs random_coeffs(Rng& rng, int nb)
{
    VecX logits(nb);
    for (int i = 0; i < nb; ++i)
        logits[i] = rng.uniform(-2, 2);
    return coeffs_from_logits(logits);
}

} // namespace

TEST_CASE("coeffs_from_logits: sigmoid values and the residual weight")
{
    const ExpressionCoeffs mid = coeffs_from_logits(VecX::Zero(3));
    for (int i = 0; i < 3; ++i)
        CHECK(mid.w[i] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mid.w0 == doctest::Approx(-0.5).epsilon(1e-12));

    const ExpressionCoeffs low = coeffs_from_logits(VecX::Constant(4, -20));
    for (int i = 0; i < 4; ++i)
        CHECK(low.w[i] < 1e-8);
    CHECK(low.w0 == doctest::Approx(1).epsilon(1e-8));

    Rng rng(1);
    const ExpressionCoeffs r = random_coeffs(rng, 6);
    CHECK(r.w0 == 1 - r.w.sum());
    CHECK((r.w.array() > 0).all());
    CHECK((r.w.array() < 1).all());
}

TEST_CASE("logits_backward matches finite differences through w and w0")
{
    Rng rng(2);
    VecX logits(5);
    for (int i = 0; i < 5; ++i)
        logits[i] = rng.uniform(-2, 2);
    VecX d_w(5);
    for (int i = 0; i < 5; ++i)
        d_w[i] = rng.uniform(-1, 1);
    const real d_w0 = rng.uniform(-1, 1);

    const ExpressionCoeffs coeffs = coeffs_from_logits(logits);
    const VecX analytic = logits_backward(coeffs, d_w, d_w0);
    const real h = 1e-6;
    for (int k = 0; k < 5; ++k) {
        VecX plus = logits, minus = logits;
        plus[k] += h;
        minus[k] -= h;
        const ExpressionCoeffs cp = coeffs_from_logits(plus);
        const ExpressionCoeffs cm = coeffs_from_logits(minus);
        const real fd = ((cp.w - cm.w).dot(d_w) + (cp.w0 - cm.w0) * d_w0) / (2 * h);
        CHECK(analytic[k] == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("euler_rotation: identity, half-turn and an AngleAxis oracle")
{
    CHECK((euler_rotation(Vec3::Zero()) - Mat3::Identity()).norm() < 1e-15);

    const Mat3 yaw_pi = euler_rotation(Vec3(0, EIGEN_PI, 0));
    CHECK((yaw_pi * Vec3(1, 0, 0) - Vec3(-1, 0, 0)).norm() < 1e-9);

    Rng rng(4);
    const Vec3 e(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const Mat3 oracle = (Eigen::AngleAxisd(e.z(), Vec3::UnitZ()) *
                         Eigen::AngleAxisd(e.y(), Vec3::UnitY()) *
                         Eigen::AngleAxisd(e.x(), Vec3::UnitX()))
                            .toRotationMatrix();
    CHECK((euler_rotation(e) - oracle).norm() < 1e-12);
}

TEST_CASE("apply_pose_backward matches finite differences in all inputs")
{
    Rng rng(6);
    Points3 vertices(6, 3);
    for (Eigen::Index i = 0; i < vertices.size(); ++i)
        vertices.data()[i] = rng.uniform(-10, 10);
    const Vec3 euler(0.3, -0.2, 0.5), translation(4, -7, 600);
    Points3 upstream(6, 3);
    for (Eigen::Index i = 0; i < upstream.size(); ++i)
        upstream.data()[i] = rng.uniform(-1, 1);

    const PoseBackward pb = apply_pose_backward(vertices, euler, translation, upstream);
    const real h = 1e-6;
    const auto dot_posed = [&](const Points3& v, const Vec3& e, const Vec3& t) {
        return (apply_pose(v, e, t).array() * upstream.array()).sum();
    };
    for (int k = 0; k < 3; ++k) {
        Vec3 ep = euler, em = euler;
        ep[k] += h;
        em[k] -= h;
        CHECK(pb.d_euler[k] == doctest::Approx((dot_posed(vertices, ep, translation) -
                                                dot_posed(vertices, em, translation)) /
                                               (2 * h))
                                   .epsilon(1e-6));
        Vec3 tp = translation, tm = translation;
        tp[k] += h;
        tm[k] -= h;
        CHECK(pb.d_translation[k] == doctest::Approx((dot_posed(vertices, euler, tp) -
                                                      dot_posed(vertices, euler, tm)) /
                                                     (2 * h))
                                         .epsilon(1e-6));
    }
    for (Eigen::Index v = 0; v < 2; ++v)
        for (int k = 0; k < 3; ++k) {
            Points3 vp = vertices, vm = vertices;
            vp(v, k) += h;
            vm(v, k) -= h;
            CHECK(pb.d_vertices(v, k) == doctest::Approx((dot_posed(vp, euler, translation) -
                                                          dot_posed(vm, euler, translation)) /
                                                         (2 * h))
                                             .epsilon(1e-6));
        }
}

TEST_CASE("attention masks: exact zeros below threshold, exact one at the peak")
{
    // 8x8 grid rig with texel-centre UVs at resolution 32 (power of two, so
    // uv * res reproduces pixel centres bitwise).
    const int n = 8, res = 32, stride = res / n;
    TemplateFaceModel tmpl;
    tmpl.s0.vertices.resize(n * n, 3);
    tmpl.s0.uv.resize(n * n, 2);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            tmpl.s0.vertices.row(j * n + i) << real(i) * 10, real(j) * 10, 0;
            tmpl.s0.uv.row(j * n + i) << (i * stride + real(0.5)) / res,
                (j * stride + real(0.5)) / res;
        }
    tmpl.s0.triangles.resize((n - 1) * (n - 1) * 2, 3);
    int t = 0;
    for (int j = 0; j + 1 < n; ++j)
        for (int i = 0; i + 1 < n; ++i) {
            const int a = j * n + i, b = a + 1, c = a + n, d = c + 1;
            tmpl.s0.triangles.row(t++) << a, d, b;
            tmpl.s0.triangles.row(t++) << a, c, d;
        }

    TriMesh bs = tmpl.s0;
    const int peak = 3 * n + 3, mid = 4 * n + 4, tiny = 2 * n + 5;
    bs.vertices.row(peak) += Vec3(0, 0, 5).transpose();      // 5 mm (the max)
    bs.vertices.row(mid) += Vec3(0, 0, 2).transpose();       // 2 mm
    bs.vertices.row(tiny) += Vec3(0, 0, 0.0005).transpose(); // below the 1e-3 cutoff
    tmpl.blendshapes.push_back(bs);

    const AttentionMaskSet pre_blur = compute_attention_masks(tmpl, res, 0);
    REQUIRE(pre_blur.masks.size() == 1);
    const Grid& mask = pre_blur.masks[0];
    const auto at_vertex = [&](int v) {
        const int px = static_cast<int>(tmpl.s0.uv(v, 0) * res);
        const int py = static_cast<int>(tmpl.s0.uv(v, 1) * res);
        return mask.at(px, py, 0);
    };
    CHECK(at_vertex(peak) == 1);
    CHECK(at_vertex(tiny) == 0);
    CHECK(at_vertex(0) == 0);
    CHECK(at_vertex(mid) == doctest::Approx(0.4).epsilon(1e-12));

    const AttentionMaskSet blurred = compute_attention_masks(tmpl, res, tmpl.blur_sigma);
    CHECK(blurred.masks[0].data.minCoeff() >= 0);
    CHECK(blurred.masks[0].data.maxCoeff() <= 1);

    // Deterministic recomputation is bit-identical.
    const AttentionMaskSet again = compute_attention_masks(tmpl, res, tmpl.blur_sigma);
    CHECK(blurred.masks[0].data == again.masks[0].data);

    CHECK_THROWS_AS(compute_attention_masks(tmpl, 4, 0), std::invalid_argument);
}

TEST_CASE("assemble_shape with zero corrections is the template interpolation")
{
    Rng rng(8);
    const int nb = 3, res = 8;
    const TemplateFaceModel tmpl = random_rig(rng, 10, nb, res);
    const AttentionMaskSet masks = random_masks(rng, nb, res);
    const ModelCorrections corr = ModelCorrections::zeros(tmpl, res);
    const ExpressionCoeffs coeffs = random_coeffs(rng, nb);

    const Points3 shape = assemble_shape(tmpl, corr, masks, coeffs);
    Points3 expected = coeffs.w0 * tmpl.s0.vertices;
    for (int i = 0; i < nb; ++i)
        expected += coeffs.w[i] * tmpl.blendshapes[i].vertices;
    CHECK((shape - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("assemble_shape and assemble_albedo are affine in the corrections")
{
    Rng rng(10);
    const int nb = 2, res = 8;
    const TemplateFaceModel tmpl = random_rig(rng, 8, nb, res);
    const AttentionMaskSet masks = random_masks(rng, nb, res);
    const ExpressionCoeffs coeffs = random_coeffs(rng, nb);

    ModelCorrections corr = ModelCorrections::zeros(tmpl, res);
    ModelCorrections delta = corr;
    delta.d_shape_0 = random_map(rng, res, 3, 2);
    delta.d_albedo_0 = random_map(rng, res, 3, 0.2);
    for (int i = 0; i < nb; ++i) {
        delta.d_shape_i[i] = random_map(rng, res, 3, 2);
        delta.d_albedo_i[i] = random_map(rng, res, 3, 0.2);
    }

    const Points3 s_base = assemble_shape(tmpl, corr, masks, coeffs);
    ModelCorrections scaled = delta;
    const real a = 2.5;
    scaled.d_shape_0.data = corr.d_shape_0.data + a * delta.d_shape_0.data;
    scaled.d_albedo_0.data = corr.d_albedo_0.data + a * delta.d_albedo_0.data;
    for (int i = 0; i < nb; ++i) {
        scaled.d_shape_i[i].data = a * delta.d_shape_i[i].data;
        scaled.d_albedo_i[i].data = a * delta.d_albedo_i[i].data;
    }
    ModelCorrections unit = delta;
    unit.d_shape_0.data += corr.d_shape_0.data; // delta on top of the zero base

    const Points3 s_unit = assemble_shape(tmpl, unit, masks, coeffs);
    const Points3 s_scaled = assemble_shape(tmpl, scaled, masks, coeffs);
    CHECK((s_scaled - (s_base + a * (s_unit - s_base))).cwiseAbs().maxCoeff() < 1e-9);

    const UVMap r_base = assemble_albedo(tmpl, corr, masks, coeffs);
    const UVMap r_unit = assemble_albedo(tmpl, unit, masks, coeffs);
    const UVMap r_scaled = assemble_albedo(tmpl, scaled, masks, coeffs);
    CHECK((r_scaled.data - (r_base.data + a * (r_unit.data - r_base.data)))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("a zero attention footprint pins the vertex against blendshape corrections")
{
    Rng rng(12);
    const int nb = 1, res = 8;
    TemplateFaceModel tmpl = random_rig(rng, 6, nb, res);
    tmpl.s0.uv.row(0) << 0.5 / res, 0.5 / res; // vertex 0 reads only texel (0,0)

    AttentionMaskSet masks = random_masks(rng, nb, res);
    masks.masks[0].at(0, 0, 0) = 0;

    ModelCorrections corr = ModelCorrections::zeros(tmpl, res);
    ModelCorrections with_delta = corr;
    with_delta.d_shape_i[0] = random_map(rng, res, 3, 4);

    const ExpressionCoeffs coeffs = random_coeffs(rng, nb);
    const Points3 base = assemble_shape(tmpl, corr, masks, coeffs);
    const Points3 moved = assemble_shape(tmpl, with_delta, masks, coeffs);
    CHECK((moved.row(0) - base.row(0)).norm() == 0);
    CHECK((moved - base).cwiseAbs().maxCoeff() > 0); // others did move
}

TEST_CASE("assemble_shape_backward matches finite differences")
{
    Rng rng(14);
    const int nb = 2, res = 6;
    const TemplateFaceModel tmpl = random_rig(rng, 8, nb, res);
    const AttentionMaskSet masks = random_masks(rng, nb, res);
    ModelCorrections corr = ModelCorrections::zeros(tmpl, res);
    corr.d_shape_0 = random_map(rng, res, 3, 1);
    for (int i = 0; i < nb; ++i)
        corr.d_shape_i[i] = random_map(rng, res, 3, 1);

    VecX logits(nb);
    logits << 0.4, -0.9;
    const ExpressionCoeffs coeffs = coeffs_from_logits(logits);
    Points3 upstream(8, 3);
    for (Eigen::Index i = 0; i < upstream.size(); ++i)
        upstream.data()[i] = rng.uniform(-1, 1);

    const ShapeBackward sb = assemble_shape_backward(tmpl, corr, masks, coeffs, upstream);
    const auto loss = [&](const ModelCorrections& c, const VecX& lg) {
        return (assemble_shape(tmpl, c, masks, coeffs_from_logits(lg)).array() *
                upstream.array())
            .sum();
    };
    const real h = 1e-5;

    for (int k = 0; k < nb; ++k) {
        VecX lp = logits, lm = logits;
        lp[k] += h;
        lm[k] -= h;
        CHECK(sb.d_logits[k] ==
              doctest::Approx((loss(corr, lp) - loss(corr, lm)) / (2 * h)).epsilon(1e-6));
    }
    for (const Eigen::Index idx : {Eigen::Index(0), Eigen::Index(17), Eigen::Index(49)}) {
        ModelCorrections cp = corr, cm = corr;
        cp.d_shape_0.data[idx] += h;
        cm.d_shape_0.data[idx] -= h;
        CHECK(sb.d_shape_0.data[idx] ==
              doctest::Approx((loss(cp, logits) - loss(cm, logits)) / (2 * h)).epsilon(1e-6));

        cp = corr;
        cm = corr;
        cp.d_shape_i[1].data[idx] += h;
        cm.d_shape_i[1].data[idx] -= h;
        CHECK(sb.d_shape_i[1].data[idx] ==
              doctest::Approx((loss(cp, logits) - loss(cm, logits)) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("assemble_albedo_backward matches finite differences")
{
    Rng rng(16);
    const int nb = 2, res = 6;
    const TemplateFaceModel tmpl = random_rig(rng, 8, nb, res);
    const AttentionMaskSet masks = random_masks(rng, nb, res);
    ModelCorrections corr = ModelCorrections::zeros(tmpl, res);
    corr.d_albedo_0 = random_map(rng, res, 3, 0.2);
    for (int i = 0; i < nb; ++i)
        corr.d_albedo_i[i] = random_map(rng, res, 3, 0.2);

    VecX logits(nb);
    logits << -0.3, 1.1;
    const ExpressionCoeffs coeffs = coeffs_from_logits(logits);
    Grid upstream = random_map(rng, res, 3, 1);

    const AlbedoBackward ab = assemble_albedo_backward(tmpl, corr, masks, coeffs, upstream);
    const auto loss = [&](const ModelCorrections& c, const VecX& lg) {
        return assemble_albedo(tmpl, c, masks, coeffs_from_logits(lg)).data.dot(upstream.data);
    };
    const real h = 1e-5;

    for (int k = 0; k < nb; ++k) {
        VecX lp = logits, lm = logits;
        lp[k] += h;
        lm[k] -= h;
        CHECK(ab.d_logits[k] ==
              doctest::Approx((loss(corr, lp) - loss(corr, lm)) / (2 * h)).epsilon(1e-6));
    }
    for (const Eigen::Index idx : {Eigen::Index(3), Eigen::Index(40)}) {
        ModelCorrections cp = corr, cm = corr;
        cp.d_albedo_i[0].data[idx] += h;
        cm.d_albedo_i[0].data[idx] -= h;
        CHECK(ab.d_albedo_i[0].data[idx] ==
              doctest::Approx((loss(cp, logits) - loss(cm, logits)) / (2 * h)).epsilon(1e-6));

        cp = corr;
        cm = corr;
        cp.r0_trainable.data[idx] += h;
        cm.r0_trainable.data[idx] -= h;
        CHECK(ab.d_r0_trainable.data[idx] ==
              doctest::Approx((loss(cp, logits) - loss(cm, logits)) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("gaussian_blur: identity at sigma 0, mass-preserving interior impulse")
{
    Rng rng(18);
    Grid g = random_map(rng, 9, 1, 1);
    const Grid same = gaussian_blur(g, 0);
    CHECK(g.data == same.data);

    Grid impulse;
    impulse.width = impulse.height = 9;
    impulse.channels = 1;
    impulse.data = VecX::Zero(81);
    impulse.at(4, 4, 0) = 1;
    const Grid blurred = gaussian_blur(impulse, 1.0);
    CHECK(blurred.data.sum() == doctest::Approx(1).epsilon(1e-12));
    CHECK(blurred.at(3, 4, 0) == doctest::Approx(blurred.at(5, 4, 0)).epsilon(1e-12));
    CHECK(blurred.at(4, 3, 0) == doctest::Approx(blurred.at(4, 5, 0)).epsilon(1e-12));
    CHECK(blurred.at(4, 4, 0) > blurred.at(3, 4, 0));

    Grid constant;
    constant.width = constant.height = 7;
    constant.channels = 2;
    constant.data = VecX::Constant(98, 0.37);
    const Grid smoothed = gaussian_blur(constant, 2.0);
    CHECK((smoothed.data.array() - 0.37).abs().maxCoeff() < 1e-12);
}
