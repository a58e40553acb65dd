#include "facefit/fitter.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace facefit {

void adam_step(VecX& params, const VecX& grads, AdamState& state, const VecX& lr, real beta1,
               real beta2, real eps)
{
    if (params.size() != grads.size() || params.size() != lr.size())
        throw std::invalid_argument("adam_step: size mismatch");
    if (grads.hasNaN())
        throw std::runtime_error("adam_step: NaN gradient");
    if (state.m.size() == 0) {
        state.m = VecX::Zero(params.size());
        state.v = VecX::Zero(params.size());
        state.t = 0;
    }
    state.t += 1;
    state.m = beta1 * state.m + (1 - beta1) * grads;
    state.v = beta2 * state.v + (1 - beta2) * grads.cwiseProduct(grads);
    const real bc1 = 1 - std::pow(beta1, static_cast<real>(state.t));
    const real bc2 = 1 - std::pow(beta2, static_cast<real>(state.t));
    const VecX m_hat = state.m / bc1;
    const VecX v_hat = state.v / bc2;
    params.array() -= lr.array() * m_hat.array() / (v_hat.array().sqrt() + eps);
}

void adam_step(VecX& params, const VecX& grads, AdamState& state, real lr, real beta1, real beta2,
               real eps)
{
    adam_step(params, grads, state, VecX::Constant(params.size(), lr), beta1, beta2, eps);
}

SHCoeffs neutral_gamma()
{
    SHCoeffs g = SHCoeffs::Zero();
    const real y00 = sh_basis(Vec3(0, 0, 1))[0];
    g.col(0).setConstant(1 / y00);
    return g;
}

namespace {

// ---------------------------------------------------------------- packing

struct PackLayout {
    bool corrections = false;
    bool tracking = false;
    int nb = 0;        // blendshape count
    int res = 0;       // correction resolution
    int n_frames = 0;

    Eigen::Index map_size() const { return static_cast<Eigen::Index>(res) * res * 3; }
    Eigen::Index corr_size() const { return corrections ? map_size() * (2 * nb + 3) : 0; }
    Eigen::Index frame_size() const { return nb + 3 + 3 + 27; }
    Eigen::Index total() const
    {
        return corr_size() + (tracking ? frame_size() * n_frames : 0);
    }
};

void pack_corrections(const ModelCorrections& c, VecX& x, Eigen::Index& at)
{
    auto put = [&](const Grid& g) {
        x.segment(at, g.data.size()) = g.data;
        at += g.data.size();
    };
    put(c.d_shape_0);
    for (const auto& g : c.d_shape_i)
        put(g);
    put(c.d_albedo_0);
    for (const auto& g : c.d_albedo_i)
        put(g);
    put(c.r0_trainable);
}

void unpack_corrections(const VecX& x, ModelCorrections& c, Eigen::Index& at)
{
    auto get = [&](Grid& g) {
        g.data = x.segment(at, g.data.size());
        at += g.data.size();
    };
    get(c.d_shape_0);
    for (auto& g : c.d_shape_i)
        get(g);
    get(c.d_albedo_0);
    for (auto& g : c.d_albedo_i)
        get(g);
    get(c.r0_trainable);
}

void pack_frame(const TrackingParams& p, VecX& x, Eigen::Index& at)
{
    x.segment(at, p.logits.size()) = p.logits;
    at += p.logits.size();
    x.segment(at, 3) = p.euler;
    at += 3;
    x.segment(at, 3) = p.translation;
    at += 3;
    for (int c = 0; c < 3; ++c)
        for (int b = 0; b < 9; ++b)
            x[at++] = p.gamma(c, b);
}

void unpack_frame(const VecX& x, TrackingParams& p, Eigen::Index& at)
{
    p.logits = x.segment(at, p.logits.size());
    at += p.logits.size();
    p.euler = x.segment(at, 3);
    at += 3;
    p.translation = x.segment(at, 3);
    at += 3;
    for (int c = 0; c < 3; ++c)
        for (int b = 0; b < 9; ++b)
            p.gamma(c, b) = x[at++];
}

VecX pack(const PackLayout& layout, const ModelCorrections& corr,
          const std::vector<TrackingParams>& params)
{
    VecX x(layout.total());
    Eigen::Index at = 0;
    if (layout.corrections)
        pack_corrections(corr, x, at);
    if (layout.tracking)
        for (const auto& p : params)
            pack_frame(p, x, at);
    return x;
}

void unpack(const VecX& x, const PackLayout& layout, ModelCorrections& corr,
            std::vector<TrackingParams>& params)
{
    Eigen::Index at = 0;
    if (layout.corrections)
        unpack_corrections(x, corr, at);
    if (layout.tracking)
        for (auto& p : params)
            unpack_frame(x, p, at);
}

VecX lr_vector(const PackLayout& layout, const FitConfig& cfg, real base)
{
    VecX lr(layout.total());
    Eigen::Index at = 0;
    if (layout.corrections) {
        lr.segment(at, layout.map_size() * (1 + layout.nb))
            .setConstant(base * cfg.scale_corr_shape);
        at += layout.map_size() * (1 + layout.nb);
        lr.segment(at, layout.map_size() * (2 + layout.nb))
            .setConstant(base * cfg.scale_corr_albedo);
        at += layout.map_size() * (2 + layout.nb);
    }
    if (layout.tracking)
        for (int n = 0; n < layout.n_frames; ++n) {
            lr.segment(at, layout.nb).setConstant(base * cfg.scale_logits);
            at += layout.nb;
            lr.segment(at, 3).setConstant(base * cfg.scale_euler);
            at += 3;
            lr.segment(at, 3).setConstant(base * cfg.scale_translation);
            at += 3;
            lr.segment(at, 27).setConstant(base * cfg.scale_gamma);
            at += 27;
        }
    return lr;
}

// ---------------------------------------------------------------- objective

struct Objective {
    const std::vector<FrameObservation>* frames = nullptr;
    const TemplateFaceModel* tmpl = nullptr;
    const AttentionMaskSet* masks = nullptr;
    Camera camera;
    LossWeights weights;
    bool stage2 = false;      ///< drop the tracking regularizer
    bool model_terms = true;  ///< include smoothness / blendshape-gradient terms
    bool grad_corrections = false;
    bool grad_tracking = false;
    std::vector<std::vector<int>> adjacency;
};

/// Full forward pass (+ optional backward into g_corr / g_params, which must
/// be pre-sized zeros when requested).
LossBreakdown evaluate(const Objective& obj, const ModelCorrections& corr,
                       const std::vector<TrackingParams>& params, ModelCorrections* g_corr,
                       std::vector<TrackingParams>* g_params)
{
    const TemplateFaceModel& tmpl = *obj.tmpl;
    const bool backward = g_corr != nullptr || g_params != nullptr;
    const real w_reg = obj.stage2 ? 0 : obj.weights.lambda_reg;
    LossBreakdown terms;

    for (size_t n = 0; n < obj.frames->size(); ++n) {
        const FrameObservation& obs = (*obj.frames)[n];
        const TrackingParams& p = params[n];

        const ExpressionCoeffs coeffs = coeffs_from_logits(p.logits);
        const Points3 shape = assemble_shape(tmpl, corr, *obj.masks, coeffs);
        const UVMap albedo = assemble_albedo(tmpl, corr, *obj.masks, coeffs);
        const Points3 posed = apply_pose(shape, p.euler, p.translation);
        const Points3 normals = vertex_normals(posed, tmpl.s0.triangles);
        const RenderOutput render =
            render_face(posed, normals, albedo, p.gamma, obj.camera, tmpl);
        const Grid parse = render_parse(render, tmpl);
        const Points2 lms = project_landmarks(posed, tmpl.s0.landmark_indices, obj.camera);

        terms.photometric += photometric_l21_frame(obs.image, render.color, render.mask);
        terms.image_gradient += image_gradient_frame(obs.image, render.color, render.mask);
        terms.landmark += landmark_loss(lms, obs.landmarks, obs.landmark_valid);
        terms.parsing += parsing_frame(obs.parse, parse);
        const TrackingReg reg = tracking_reg(coeffs, p.gamma, obj.weights.lambda_gamma);
        terms.reg_coeff += reg.coeff_l1;
        terms.reg_light += reg.light;

        if (!backward)
            continue;

        // Color path: photometric + image-gradient, both under lambda_ph.
        Grid d_color = photometric_l21_frame_backward(obs.image, render.color, render.mask,
                                                      obj.weights.lambda_ph);
        d_color.data += image_gradient_frame_backward(obs.image, render.color, render.mask,
                                                      obj.weights.lambda_ph)
                            .data;
        const RenderBackward rb = render_face_backward(render, posed, normals, albedo, p.gamma,
                                                       obj.camera, tmpl, d_color);
        Points3 d_posed = rb.d_vertices;

        // Parse path.
        const Grid d_parse = parsing_frame_backward(obs.parse, parse, obj.weights.lambda_pa);
        d_posed += render_parse_backward(render, posed, obj.camera, tmpl, d_parse);

        // Landmark path.
        const Points2 d_lms =
            landmark_loss_backward(lms, obs.landmarks, obs.landmark_valid, obj.weights.lambda_lm);
        Points2 d_px = Points2::Zero(posed.rows(), 2);
        for (size_t i = 0; i < tmpl.s0.landmark_indices.size(); ++i)
            d_px.row(tmpl.s0.landmark_indices[i]) += d_lms.row(static_cast<Eigen::Index>(i));
        d_posed += project_backward(posed, obj.camera, d_px);

        // Normals fold into the posed vertices.
        d_posed += vertex_normals_backward(posed, tmpl.s0.triangles, rb.d_normals);

        const PoseBackward pb = apply_pose_backward(shape, p.euler, p.translation, d_posed);
        const ShapeBackward sb =
            assemble_shape_backward(tmpl, corr, *obj.masks, coeffs, pb.d_vertices);
        const AlbedoBackward ab =
            assemble_albedo_backward(tmpl, corr, *obj.masks, coeffs, rb.d_albedo);

        if (g_corr) {
            g_corr->d_shape_0.data += sb.d_shape_0.data;
            g_corr->d_albedo_0.data += ab.d_albedo_0.data;
            g_corr->r0_trainable.data += ab.d_r0_trainable.data;
            for (int i = 0; i < tmpl.blendshape_count(); ++i) {
                g_corr->d_shape_i[i].data += sb.d_shape_i[i].data;
                g_corr->d_albedo_i[i].data += ab.d_albedo_i[i].data;
            }
        }
        if (g_params) {
            TrackingParams& gp = (*g_params)[n];
            const TrackingRegBackward regb =
                tracking_reg_backward(coeffs, p.gamma, obj.weights.lambda_gamma, w_reg);
            gp.logits += sb.d_logits + ab.d_logits + logits_backward(coeffs, regb.d_w, 0);
            gp.euler += pb.d_euler;
            gp.translation += pb.d_translation;
            gp.gamma += rb.d_gamma + regb.d_gamma;
        }
    }

    if (obj.model_terms) {
        const Points3 delta = uv_sample(corr.d_shape_0, tmpl.s0.uv);
        terms.smoothness = shape_smoothness(delta, obj.adjacency);
        terms.blendshape_gradient = blendshape_gradient_loss(tmpl, corr, *obj.masks);
        if (g_corr) {
            const Points3 d_delta =
                shape_smoothness_backward(delta, obj.adjacency, obj.weights.lambda_sd);
            uv_splat(tmpl.s0.uv, d_delta, g_corr->d_shape_0);
            const std::vector<UVMap> bgb = blendshape_gradient_loss_backward(
                tmpl, corr, *obj.masks, obj.weights.lambda_bg);
            for (int i = 0; i < tmpl.blendshape_count(); ++i)
                g_corr->d_shape_i[i].data += bgb[i].data;
        }
    }

    return total_loss(terms, obj.weights, obj.stage2);
}

ModelCorrections zero_like(const ModelCorrections& c)
{
    ModelCorrections z = c;
    z.d_shape_0.data.setZero();
    z.d_albedo_0.data.setZero();
    z.r0_trainable.data.setZero();
    for (auto& g : z.d_shape_i)
        g.data.setZero();
    for (auto& g : z.d_albedo_i)
        g.data.setZero();
    return z;
}

std::vector<TrackingParams> zero_like(const std::vector<TrackingParams>& params)
{
    std::vector<TrackingParams> z = params;
    for (auto& p : z) {
        p.logits.setZero();
        p.euler.setZero();
        p.translation.setZero();
        p.gamma.setZero();
    }
    return z;
}

// ------------------------------------------------------------ initialization

/// Closed-form translation seed from landmark centroid/spread under a
/// zero-rotation assumption; the warmup refines it.
Vec3 seed_translation(const Points3& model_landmarks, const Points2& observed,
                      const std::vector<uint8_t>& valid, const Camera& cam)
{
    Vec2 centroid_px = Vec2::Zero();
    int nv = 0;
    for (Eigen::Index i = 0; i < observed.rows(); ++i) {
        if (!valid.empty() && !valid[static_cast<size_t>(i)])
            continue;
        centroid_px += observed.row(i).transpose();
        ++nv;
    }
    if (nv == 0)
        throw std::runtime_error("fit: no valid landmarks to seed the pose");
    centroid_px /= nv;
    real spread_px = 0;
    for (Eigen::Index i = 0; i < observed.rows(); ++i) {
        if (!valid.empty() && !valid[static_cast<size_t>(i)])
            continue;
        spread_px += (observed.row(i).transpose() - centroid_px).squaredNorm();
    }
    spread_px = std::sqrt(spread_px / nv);

    const Vec3 centroid_m = model_landmarks.colwise().mean();
    real spread_m = 0;
    for (Eigen::Index i = 0; i < model_landmarks.rows(); ++i)
        spread_m += (model_landmarks.row(i).head<2>() - centroid_m.head<2>().transpose())
                        .squaredNorm();
    spread_m = std::sqrt(spread_m / model_landmarks.rows());

    real z = spread_px > 1e-6 ? cam.focal * spread_m / spread_px : cam.far_z / 2;
    z = std::clamp(z, cam.near_z * 2, cam.far_z * real(0.9));
    return Vec3((centroid_px.x() - cam.cx) * z / cam.focal - centroid_m.x(),
                (centroid_px.y() - cam.cy) * z / cam.focal - centroid_m.y(),
                z - centroid_m.z());
}

Points3 select_landmarks(const Points3& vertices, const std::vector<int>& indices)
{
    Points3 out(static_cast<Eigen::Index>(indices.size()), 3);
    for (size_t i = 0; i < indices.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = vertices.row(indices[i]);
    return out;
}

/// Landmark-only Adam refinement of (euler, translation).
void warmup_pose(TrackingParams& p, const Points3& model_landmarks, const FrameObservation& obs,
                 const Camera& cam, const FitConfig& cfg)
{
    VecX x(6);
    x << p.euler, p.translation;
    VecX lr(6);
    lr << VecX::Constant(3, cfg.warmup_lr_euler), VecX::Constant(3, cfg.warmup_lr_translation);
    AdamState state;
    for (int step = 0; step < cfg.warmup_steps; ++step) {
        const Vec3 euler = x.head<3>();
        Vec3 t = x.tail<3>();
        Points3 posed = apply_pose(model_landmarks, euler, t);
        const real min_z = posed.col(2).minCoeff();
        if (min_z <= cam.near_z + 1) {
            // Keep the seed in front of the near plane; heuristic init only.
            t.z() += cam.near_z + 1 - min_z;
            x.tail<3>() = t;
            posed = apply_pose(model_landmarks, euler, t);
        }
        Points2 px;
        VecX depth;
        project(posed, cam, px, depth);
        const Points2 d_px = landmark_loss_backward(px, obs.landmarks, obs.landmark_valid);
        const Points3 d_posed = project_backward(posed, cam, d_px);
        const PoseBackward pb = apply_pose_backward(model_landmarks, euler, t, d_posed);
        VecX g(6);
        g << pb.d_euler, pb.d_translation;
        adam_step(x, g, state, lr, cfg.beta1, cfg.beta2, cfg.eps);
    }
    p.euler = x.head<3>();
    p.translation = x.tail<3>();
}

std::vector<TrackingParams> default_init(const std::vector<FrameObservation>& frames,
                                         const TemplateFaceModel& tmpl,
                                         const AttentionMaskSet& masks,
                                         const ModelCorrections& corr, const Camera& cam,
                                         const FitConfig& cfg)
{
    const real y00 = sh_basis(Vec3(0, 0, 1))[0];
    real mean_albedo = corr.r0_trainable.data.mean();
    mean_albedo = std::max(mean_albedo, real(0.05));

    std::vector<TrackingParams> params(frames.size());
    for (size_t n = 0; n < frames.size(); ++n) {
        TrackingParams& p = params[n];
        p.logits = VecX::Constant(tmpl.blendshape_count(), -4);
        const real mean_intensity = frames[n].image.data.mean();
        p.gamma = SHCoeffs::Zero();
        p.gamma.col(0).setConstant(mean_intensity / (y00 * mean_albedo));

        const ExpressionCoeffs coeffs = coeffs_from_logits(p.logits);
        const Points3 shape = assemble_shape(tmpl, corr, masks, coeffs);
        const Points3 model_lms = select_landmarks(shape, tmpl.s0.landmark_indices);
        p.translation =
            seed_translation(model_lms, frames[n].landmarks, frames[n].landmark_valid, cam);
        warmup_pose(p, model_lms, frames[n], cam, cfg);
    }
    return params;
}

void check_inputs(const std::vector<FrameObservation>& frames, const TemplateFaceModel& tmpl,
                  const AttentionMaskSet& masks, const char* what)
{
    if (frames.empty())
        throw std::invalid_argument(std::string(what) + ": empty frame list");
    if (masks.masks.size() != tmpl.blendshapes.size())
        throw std::invalid_argument(std::string(what) + ": attention mask count mismatch");
    for (size_t n = 0; n < frames.size(); ++n) {
        if (frames[n].landmarks.rows() !=
            static_cast<Eigen::Index>(tmpl.s0.landmark_indices.size()))
            throw std::invalid_argument(std::string(what) + ": frame " + std::to_string(n) +
                                        " landmark count does not match the template");
        if (frames[n].image.channels != 3)
            throw std::invalid_argument(std::string(what) + ": frame " + std::to_string(n) +
                                        " image must have 3 channels");
    }
}

void check_coverage(const std::vector<FrameObservation>& frames, const TemplateFaceModel& tmpl,
                    const AttentionMaskSet& masks, const ModelCorrections& corr,
                    const std::vector<TrackingParams>& params, const Camera& cam)
{
    for (size_t n = 0; n < frames.size(); ++n) {
        const FrameRender fr = render_frame(tmpl, masks, corr, params[n], cam);
        if (fr.render.mask.data.sum() > 0)
            continue;
        std::ostringstream msg;
        msg << "fit: mask starvation in frame " << n
            << " — the rendered face does not overlap the valid image region after "
               "initialization (euler = ["
            << params[n].euler.transpose() << "], translation = ["
            << params[n].translation.transpose()
            << "] mm). Check the camera configuration and landmark quality.";
        throw std::runtime_error(msg.str());
    }
}

// A constant offset in the global shape-correction map is indistinguishable
// from rigid translation (and costs no smoothness), so the optimizer can walk
// along that direction indefinitely. Pinning the map's per-channel mean to
// zero keeps rigid motion in the tracking parameters where it belongs.
void project_shape_gauge(VecX& x, const PackLayout& layout)
{
    const Eigen::Index texels = layout.map_size() / 3;
    for (int c = 0; c < 3; ++c) {
        Eigen::Map<VecX, 0, Eigen::InnerStride<3>> channel(x.data() + c, texels);
        channel.array() -= channel.mean();
    }
}

struct RunResult {
    ModelCorrections corrections;
    std::vector<TrackingParams> params;
    std::vector<LossBreakdown> trace;
};

RunResult run_adam(const Objective& obj, const PackLayout& layout, ModelCorrections corr,
                   std::vector<TrackingParams> params, int steps, real base_lr,
                   const FitConfig& cfg)
{
    VecX x = pack(layout, corr, params);
    const VecX lr = lr_vector(layout, cfg, base_lr);
    AdamState state;
    std::vector<LossBreakdown> trace;
    trace.reserve(static_cast<size_t>(std::max(steps, 0)));

    for (int step = 0; step < steps; ++step) {
        unpack(x, layout, corr, params);
        ModelCorrections g_corr = zero_like(corr);
        std::vector<TrackingParams> g_params = zero_like(params);
        const LossBreakdown bd =
            evaluate(obj, corr, params, obj.grad_corrections ? &g_corr : nullptr,
                     obj.grad_tracking ? &g_params : nullptr);
        trace.push_back(bd);
        const VecX g = pack(layout, g_corr, g_params);
        // Warm restarts: dropping the accumulated moments periodically damps
        // the slow momentum-carried walk along near-flat loss directions
        // (gauge-like parameter mixtures) without slowing early convergence.
        if (cfg.restart_every > 0 && step > 0 && step % cfg.restart_every == 0)
            state = AdamState{};
        adam_step(x, g, state, lr, cfg.beta1, cfg.beta2, cfg.eps);
        if (layout.corrections)
            project_shape_gauge(x, layout);
    }
    unpack(x, layout, corr, params);
    return {std::move(corr), std::move(params), std::move(trace)};
}

} // namespace

FitResult fit_joint(const std::vector<FrameObservation>& frames, const TemplateFaceModel& tmpl,
                    const AttentionMaskSet& masks, const Camera& camera, const FitConfig& config,
                    const std::vector<TrackingParams>* init_params,
                    const ModelCorrections* init_corrections)
{
    check_inputs(frames, tmpl, masks, "fit_joint");
    if (frames.size() < 2)
        throw std::invalid_argument(
            "fit_joint: correction fitting is ill-posed from a single view; provide at least 2 "
            "frames (use track for single-frame tracking)");

    ModelCorrections corr = init_corrections
                                ? *init_corrections
                                : ModelCorrections::zeros(tmpl, config.uv_resolution);
    std::vector<TrackingParams> params =
        init_params ? *init_params : default_init(frames, tmpl, masks, corr, camera, config);
    check_coverage(frames, tmpl, masks, corr, params, camera);

    Objective obj;
    obj.frames = &frames;
    obj.tmpl = &tmpl;
    obj.masks = &masks;
    obj.camera = camera;
    obj.weights = config.weights;
    obj.stage2 = false;
    obj.model_terms = true;
    obj.grad_corrections = true;
    obj.grad_tracking = true;
    obj.adjacency = laplacian_adjacency(tmpl.s0.triangles, static_cast<int>(tmpl.s0.vertices.rows()));

    PackLayout layout;
    layout.corrections = true;
    layout.tracking = true;
    layout.nb = tmpl.blendshape_count();
    layout.res = corr.resolution();
    layout.n_frames = static_cast<int>(frames.size());

    RunResult run = run_adam(obj, layout, std::move(corr), std::move(params),
                             config.stage1_steps, config.lr1, config);
    return {std::move(run.corrections), std::move(run.params), std::move(run.trace)};
}

FitResult finetune_model(const std::vector<FrameObservation>& frames,
                         const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                         const Camera& camera, const FitResult& fit, const FitConfig& config)
{
    check_inputs(frames, tmpl, masks, "finetune_model");
    if (fit.params.size() != frames.size())
        throw std::invalid_argument("finetune_model: frame/param count mismatch");

    Objective obj;
    obj.frames = &frames;
    obj.tmpl = &tmpl;
    obj.masks = &masks;
    obj.camera = camera;
    obj.weights = config.weights;
    obj.stage2 = true; // tracking regularizer dropped
    obj.model_terms = true;
    obj.grad_corrections = true;
    obj.grad_tracking = false;
    obj.adjacency = laplacian_adjacency(tmpl.s0.triangles, static_cast<int>(tmpl.s0.vertices.rows()));

    PackLayout layout;
    layout.corrections = true;
    layout.tracking = false; // frozen: never packed, never updated
    layout.nb = tmpl.blendshape_count();
    layout.res = fit.corrections.resolution();
    layout.n_frames = static_cast<int>(frames.size());

    RunResult run = run_adam(obj, layout, fit.corrections, fit.params, config.stage2_steps,
                             config.lr2, config);
    return {std::move(run.corrections), std::move(run.params), std::move(run.trace)};
}

std::vector<TrackingParams> track(const std::vector<FrameObservation>& frames,
                                  const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                                  const ModelCorrections& corrections, const Camera& camera,
                                  const FitConfig& config,
                                  const std::vector<TrackingParams>* init_params)
{
    check_inputs(frames, tmpl, masks, "track");
    std::vector<TrackingParams> params =
        init_params ? *init_params
                    : default_init(frames, tmpl, masks, corrections, camera, config);
    check_coverage(frames, tmpl, masks, corrections, params, camera);

    Objective obj;
    obj.frames = &frames;
    obj.tmpl = &tmpl;
    obj.masks = &masks;
    obj.camera = camera;
    obj.weights = config.weights;
    obj.stage2 = false;
    obj.model_terms = false; // constant in the tracked variables
    obj.grad_corrections = false;
    obj.grad_tracking = true;

    PackLayout layout;
    layout.corrections = false;
    layout.tracking = true;
    layout.nb = tmpl.blendshape_count();
    layout.res = corrections.resolution();
    layout.n_frames = static_cast<int>(frames.size());

    RunResult run = run_adam(obj, layout, corrections, std::move(params), config.stage1_steps,
                             config.lr1, config);
    return std::move(run.params);
}

FrameRender render_frame(const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                         const ModelCorrections& corrections, const TrackingParams& params,
                         const Camera& camera)
{
    const ExpressionCoeffs coeffs = coeffs_from_logits(params.logits);
    const Points3 shape = assemble_shape(tmpl, corrections, masks, coeffs);
    const UVMap albedo = assemble_albedo(tmpl, corrections, masks, coeffs);
    FrameRender fr;
    fr.posed = apply_pose(shape, params.euler, params.translation);
    const Points3 normals = vertex_normals(fr.posed, tmpl.s0.triangles);
    fr.render = render_face(fr.posed, normals, albedo, params.gamma, camera, tmpl);
    fr.parse = render_parse(fr.render, tmpl);
    fr.landmarks = project_landmarks(fr.posed, tmpl.s0.landmark_indices, camera);
    return fr;
}

std::vector<RetargetFrame> retarget(const std::vector<TrackingParams>& source_params,
                                    const TemplateFaceModel& target_tmpl,
                                    const ModelCorrections& target_corrections,
                                    const AttentionMaskSet& target_masks, const Camera& camera,
                                    const RetargetOptions& options)
{
    std::vector<RetargetFrame> out;
    out.reserve(source_params.size());
    for (const TrackingParams& src : source_params) {
        if (src.logits.size() != target_tmpl.blendshape_count())
            throw std::invalid_argument(
                "retarget: source coefficient count does not match the target's blendshapes (" +
                std::to_string(src.logits.size()) + " vs " +
                std::to_string(target_tmpl.blendshape_count()) + ")");
        RetargetFrame frame;
        frame.params.logits = src.logits;
        frame.params.euler = options.transfer_pose ? src.euler : options.default_euler;
        frame.params.translation =
            options.transfer_pose ? src.translation : options.default_translation;
        frame.params.gamma = options.transfer_light ? src.gamma : options.default_gamma;

        const FrameRender fr =
            render_frame(target_tmpl, target_masks, target_corrections, frame.params, camera);
        frame.shape = fr.posed;
        frame.render = fr.render;
        out.push_back(std::move(frame));
    }
    return out;
}

LossBreakdown evaluate_losses(const std::vector<FrameObservation>& frames,
                              const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                              const ModelCorrections& corrections,
                              const std::vector<TrackingParams>& params, const Camera& camera,
                              const LossWeights& weights, bool stage2)
{
    check_inputs(frames, tmpl, masks, "evaluate_losses");
    if (params.size() != frames.size())
        throw std::invalid_argument("evaluate_losses: frame/param count mismatch");
    Objective obj;
    obj.frames = &frames;
    obj.tmpl = &tmpl;
    obj.masks = &masks;
    obj.camera = camera;
    obj.weights = weights;
    obj.stage2 = stage2;
    obj.model_terms = true;
    obj.adjacency = laplacian_adjacency(tmpl.s0.triangles, static_cast<int>(tmpl.s0.vertices.rows()));
    return evaluate(obj, corrections, params, nullptr, nullptr);
}

} // namespace facefit
