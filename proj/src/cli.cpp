#include "facefit/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "facefit/config.hpp"
#include "facefit/eval.hpp"
#include "facefit/image_io.hpp"
#include "facefit/model_io.hpp"
#include "facefit/scene.hpp"

namespace fs = std::filesystem;

namespace facefit {

namespace {

/// Flags shared by most subcommands, applied on top of an optional config
/// file: config < --seed / --resolution / --uv-res.
struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string resolution; // "HxW"
    std::optional<int> uv_res;

    void attach(CLI::App& cmd)
    {
        cmd.add_option("--config", config_path, "config file (ini-style sections)");
        cmd.add_option("--seed", seed, "RNG seed (overrides the config)");
        cmd.add_option("--resolution", resolution, "render size HxW (e.g. 224x224)");
        cmd.add_option("--uv-res", uv_res, "correction/mask UV resolution");
    }

    RunConfig resolve() const
    {
        RunConfig cfg;
        if (!config_path.empty())
            cfg = load_config(config_path, cfg);
        if (seed)
            cfg.fit.seed = *seed;
        if (uv_res)
            cfg.fit.uv_resolution = *uv_res;
        if (!resolution.empty()) {
            const size_t x = resolution.find('x');
            int h = 0, w = 0;
            try {
                size_t used_h = 0, used_w = 0;
                h = std::stoi(resolution, &used_h);
                if (x == std::string::npos || used_h != x)
                    throw std::invalid_argument("");
                w = std::stoi(resolution.substr(x + 1), &used_w);
                if (used_w != resolution.size() - x - 1)
                    throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw std::runtime_error("--resolution expects HxW, got '" + resolution + "'");
            }
            if (h <= 0 || w <= 0)
                throw std::runtime_error("--resolution dimensions must be positive");
            cfg.camera.height = h;
            cfg.camera.width = w;
            cfg.camera.cx = real(w) / 2;
            cfg.camera.cy = real(h) / 2;
        }
        return cfg;
    }
};

std::string index_name(const char* stem, int i, const char* ext)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%02d.%s", stem, i + 1, ext);
    return buf;
}

std::string frame_png(const std::string& dir, int n)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d.png", n);
    return dir + "/" + buf;
}

/// Loads corrections when a directory is given, else zeros at the configured
/// resolution. The mask set must match the correction resolution, so it is
/// computed here too.
void load_or_init_corrections(const std::string& dir, const TemplateFaceModel& tmpl, int uv_res,
                              ModelCorrections& corr, AttentionMaskSet& masks)
{
    if (!dir.empty()) {
        corr = load_corrections(dir, tmpl);
        masks = compute_attention_masks(tmpl, corr.resolution(), tmpl.blur_sigma);
    } else {
        corr = ModelCorrections::zeros(tmpl, uv_res);
        masks = compute_attention_masks(tmpl, uv_res, tmpl.blur_sigma);
    }
}

int cmd_masks(const std::string& template_dir, const std::string& out, const CommonFlags& flags)
{
    const RunConfig cfg = flags.resolve();
    const TemplateFaceModel tmpl = load_template(template_dir);
    const AttentionMaskSet masks =
        compute_attention_masks(tmpl, cfg.fit.uv_resolution, tmpl.blur_sigma);
    fs::create_directories(out);
    for (size_t i = 0; i < masks.masks.size(); ++i) {
        save_png8(out + "/" + index_name("mask", static_cast<int>(i), "png"), masks.masks[i]);
        save_grid(out + "/" + index_name("mask", static_cast<int>(i), "fgrd"), masks.masks[i]);
    }
    std::cerr << "wrote " << masks.masks.size() << " attention masks to " << out << "\n";
    return 0;
}

int cmd_synth(const std::string& template_dir, const std::string& out, int n_frames, int active,
              const CommonFlags& flags)
{
    const RunConfig cfg = flags.resolve();
    fs::create_directories(out);

    const TemplateFaceModel built =
        template_dir.empty() ? make_toy_template() : load_template(template_dir);
    // Round-trip through the container so `render` on the written template
    // reproduces these frames bit-identically.
    save_template(out + "/template", built);
    const TemplateFaceModel tmpl = load_template(out + "/template");

    const AttentionMaskSet masks =
        compute_attention_masks(tmpl, cfg.fit.uv_resolution, tmpl.blur_sigma);

    SceneOptions so;
    so.n_frames = n_frames;
    so.seed = cfg.fit.seed;
    so.active_blendshapes = std::min(active, tmpl.blendshape_count());
    so.uv_resolution = cfg.fit.uv_resolution;
    const SceneBundle bundle = generate_scene(tmpl, masks, cfg.camera, nullptr, so);
    write_scene(out, bundle);
    std::cerr << "wrote " << bundle.frames.size() << "-frame synthetic scene to " << out << "\n";
    return 0;
}

int cmd_fit(const std::string& scene_dir, const std::string& template_dir, const std::string& out,
            bool stage2, const CommonFlags& flags)
{
    const RunConfig cfg = flags.resolve();
    const SceneBundle bundle = load_scene(scene_dir);
    const TemplateFaceModel tmpl = load_template(template_dir);
    const AttentionMaskSet masks =
        compute_attention_masks(tmpl, cfg.fit.uv_resolution, tmpl.blur_sigma);

    std::cerr << "fitting " << bundle.frames.size() << " frames, stage 1 ("
              << cfg.fit.stage1_steps << " steps)...\n";
    FitResult fit = fit_joint(bundle.frames, tmpl, masks, bundle.camera, cfg.fit);
    fs::create_directories(out);
    save_trace(out + "/trace_stage1.csv", fit.trace);

    if (stage2) {
        std::cerr << "stage 2 (" << cfg.fit.stage2_steps << " steps)...\n";
        FitResult tuned = finetune_model(bundle.frames, tmpl, masks, bundle.camera, fit, cfg.fit);
        save_trace(out + "/trace_stage2.csv", tuned.trace);
        fit = std::move(tuned);
    }

    save_corrections(out + "/corrections", fit.corrections);
    save_params(out + "/params.jsonl", fit.params);
    save_config(out + "/config.ini", cfg);
    if (!fit.trace.empty())
        std::cerr << "final total loss " << fit.trace.back().total << "\n";
    return 0;
}

int cmd_track(const std::string& scene_dir, const std::string& template_dir,
              const std::string& corrections_dir, const std::string& out,
              const CommonFlags& flags)
{
    const RunConfig cfg = flags.resolve();
    const SceneBundle bundle = load_scene(scene_dir);
    const TemplateFaceModel tmpl = load_template(template_dir);
    ModelCorrections corr;
    AttentionMaskSet masks;
    load_or_init_corrections(corrections_dir, tmpl, cfg.fit.uv_resolution, corr, masks);

    std::cerr << "tracking " << bundle.frames.size() << " frames (" << cfg.fit.stage1_steps
              << " steps)...\n";
    const std::vector<TrackingParams> params =
        track(bundle.frames, tmpl, masks, corr, bundle.camera, cfg.fit);
    fs::create_directories(out);
    save_params(out + "/params.jsonl", params);
    return 0;
}

int cmd_render(const std::string& template_dir, const std::string& params_path,
               const std::string& corrections_dir, const std::string& scene_dir,
               const std::string& out, const CommonFlags& flags)
{
    RunConfig cfg = flags.resolve();
    if (!scene_dir.empty()) {
        // Reuse the scene's camera so renders align with its frames.
        std::ifstream cam(scene_dir + "/camera.ini", std::ios::binary);
        if (!cam)
            throw std::runtime_error(scene_dir + "/camera.ini: cannot open");
        std::ostringstream text;
        text << cam.rdbuf();
        cfg.camera = parse_config(text.str(), cfg, scene_dir + "/camera.ini").camera;
    }
    const TemplateFaceModel tmpl = load_template(template_dir);
    const std::vector<TrackingParams> params = load_params(params_path);
    ModelCorrections corr;
    AttentionMaskSet masks;
    load_or_init_corrections(corrections_dir, tmpl, cfg.fit.uv_resolution, corr, masks);

    fs::create_directories(out + "/frames");
    fs::create_directories(out + "/masks");
    for (size_t n = 0; n < params.size(); ++n) {
        const FrameRender fr = render_frame(tmpl, masks, corr, params[n], cfg.camera);
        save_png8(frame_png(out + "/frames", static_cast<int>(n)), fr.render.color);
        save_png8(frame_png(out + "/masks", static_cast<int>(n)), fr.render.mask);
    }
    std::cerr << "rendered " << params.size() << " frames to " << out << "\n";
    return 0;
}

int cmd_retarget(const std::string& params_path, const std::string& template_dir,
                 const std::string& corrections_dir, const std::string& out, bool transfer_pose,
                 bool transfer_light, const CommonFlags& flags)
{
    const RunConfig cfg = flags.resolve();
    const TemplateFaceModel tmpl = load_template(template_dir);
    const std::vector<TrackingParams> source = load_params(params_path);
    ModelCorrections corr;
    AttentionMaskSet masks;
    load_or_init_corrections(corrections_dir, tmpl, cfg.fit.uv_resolution, corr, masks);

    RetargetOptions options;
    options.transfer_pose = transfer_pose;
    options.transfer_light = transfer_light;
    const std::vector<RetargetFrame> frames =
        retarget(source, tmpl, corr, masks, cfg.camera, options);

    fs::create_directories(out + "/frames");
    std::vector<TrackingParams> out_params;
    for (size_t n = 0; n < frames.size(); ++n) {
        save_png8(frame_png(out + "/frames", static_cast<int>(n)), frames[n].render.color);
        out_params.push_back(frames[n].params);
    }
    save_params(out + "/params.jsonl", out_params);
    std::cerr << "retargeted " << frames.size() << " frames to " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& scene_dir, const std::string& template_dir,
             const std::string& params_path, const std::string& corrections_dir,
             const std::string& out, bool need_gt, const CommonFlags& flags)
{
    const RunConfig cfg = flags.resolve();
    const SceneBundle bundle = load_scene(scene_dir);
    if (need_gt && bundle.gt_params.empty())
        throw std::runtime_error(scene_dir + ": --gt requested but the scene has no "
                                             "gt_params.jsonl");
    const TemplateFaceModel tmpl = load_template(template_dir);
    const std::vector<TrackingParams> params = load_params(params_path);
    ModelCorrections corr;
    AttentionMaskSet masks;
    load_or_init_corrections(corrections_dir, tmpl, cfg.fit.uv_resolution, corr, masks);

    SceneBundle scored = bundle;
    if (!need_gt)
        scored.gt_params.clear(); // score against observations only
    const EvalReport report =
        evaluate_scene(scored, tmpl, masks, corr, params, cfg.fit.weights);
    fs::create_directories(out);
    write_eval_report(out + "/eval.json", report);
    std::cerr << "total " << report.totals.total << ", photometric "
              << report.photometric_error << ", NME " << report.nme;
    if (std::isfinite(report.coefficient_mae))
        std::cerr << ", coefficient MAE " << report.coefficient_mae;
    std::cerr << "\n";
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv)
{
    CLI::App app{"Personalized face-rig fitting, tracking and retargeting"};
    app.require_subcommand(1);

    std::string template_dir, scene_dir, out, params_path, corrections_dir;
    int n_frames = 4, active = 3;
    bool stage2 = false, transfer_pose = false, transfer_light = false, need_gt = false;
    CommonFlags flags;

    CLI::App* masks_cmd = app.add_subcommand("masks", "compute and write attention masks");
    masks_cmd->add_option("--template", template_dir, "template container")->required();
    masks_cmd->add_option("--out", out, "output directory")->required();

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene");
    synth_cmd->add_option("--template", template_dir, "template container (default: built-in)");
    synth_cmd->add_option("--out", out, "output directory")->required();
    synth_cmd->add_option("--frames", n_frames, "frame count")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--active", active, "active blendshapes")->check(CLI::PositiveNumber);

    CLI::App* fit_cmd = app.add_subcommand("fit", "fit corrections and tracking parameters");
    fit_cmd->add_option("--scene", scene_dir, "scene directory")->required();
    fit_cmd->add_option("--template", template_dir, "template container")->required();
    fit_cmd->add_option("--out", out, "output directory")->required();
    fit_cmd->add_flag("--stage2", stage2, "run the model fine-tuning stage afterwards");

    CLI::App* track_cmd = app.add_subcommand("track", "track with a fixed model");
    track_cmd->add_option("--scene", scene_dir, "scene directory")->required();
    track_cmd->add_option("--template", template_dir, "template container")->required();
    track_cmd->add_option("--corrections", corrections_dir, "fitted corrections directory");
    track_cmd->add_option("--out", out, "output directory")->required();

    CLI::App* render_cmd = app.add_subcommand("render", "render frames from parameters");
    render_cmd->add_option("--template", template_dir, "template container")->required();
    render_cmd->add_option("--params", params_path, "params.jsonl")->required();
    render_cmd->add_option("--corrections", corrections_dir, "fitted corrections directory");
    render_cmd->add_option("--scene", scene_dir, "scene directory (reuse its camera)");
    render_cmd->add_option("--out", out, "output directory")->required();

    CLI::App* retarget_cmd =
        app.add_subcommand("retarget", "drive a target rig with tracked coefficients");
    retarget_cmd->add_option("--params", params_path, "source params.jsonl")->required();
    retarget_cmd->add_option("--template", template_dir, "target template container")->required();
    retarget_cmd->add_option("--corrections", corrections_dir, "target corrections directory");
    retarget_cmd->add_option("--out", out, "output directory")->required();
    retarget_cmd->add_flag("--transfer-pose", transfer_pose, "copy the source head pose");
    retarget_cmd->add_flag("--transfer-light", transfer_light, "copy the source illumination");

    CLI::App* eval_cmd = app.add_subcommand("eval", "score parameters against a scene");
    eval_cmd->add_option("--scene", scene_dir, "scene directory")->required();
    eval_cmd->add_option("--template", template_dir, "template container")->required();
    eval_cmd->add_option("--params", params_path, "params.jsonl")->required();
    eval_cmd->add_option("--corrections", corrections_dir, "fitted corrections directory");
    eval_cmd->add_option("--out", out, "output directory")->required();
    eval_cmd->add_flag("--gt", need_gt, "require ground truth and report coefficient MAE");

    for (CLI::App* cmd : {masks_cmd, synth_cmd, fit_cmd, track_cmd, render_cmd, retarget_cmd,
                          eval_cmd})
        flags.attach(*cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints help, exits 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (masks_cmd->parsed())
            return cmd_masks(template_dir, out, flags);
        if (synth_cmd->parsed())
            return cmd_synth(template_dir, out, n_frames, active, flags);
        if (fit_cmd->parsed())
            return cmd_fit(scene_dir, template_dir, out, stage2, flags);
        if (track_cmd->parsed())
            return cmd_track(scene_dir, template_dir, corrections_dir, out, flags);
        if (render_cmd->parsed())
            return cmd_render(template_dir, params_path, corrections_dir, scene_dir, out, flags);
        if (retarget_cmd->parsed())
            return cmd_retarget(params_path, template_dir, corrections_dir, out, transfer_pose,
                                transfer_light, flags);
        if (eval_cmd->parsed())
            return cmd_eval(scene_dir, template_dir, params_path, corrections_dir, out, need_gt,
                            flags);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2; // unreachable with require_subcommand(1)
}

} // namespace facefit
