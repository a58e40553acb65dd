#include "facefit/cli.hpp"
#include "facefit/config.hpp"
#include "facefit/eval.hpp"
#include "facefit/image_io.hpp"
#include "facefit/model_io.hpp"
#include "facefit/rng.hpp"
#include "facefit/scene.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace facefit;
namespace fs = std::filesystem;

namespace {

/// Per-case scratch directory under the system temp root.
std::string fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "facefit_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string read_bytes(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

/// Relative paths of all regular files under `dir`, sorted.
std::vector<std::string> list_files(const std::string& dir)
{
    std::vector<std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file())
            out.push_back(fs::relative(entry.path(), dir).generic_string());
    std::sort(out.begin(), out.end());
    return out;
}

void check_same_tree(const std::string& a, const std::string& b)
{
    const std::vector<std::string> fa = list_files(a), fb = list_files(b);
    REQUIRE(fa == fb);
    for (const std::string& rel : fa) {
        INFO("file ", rel);
        CHECK(read_bytes(a + "/" + rel) == read_bytes(b + "/" + rel));
    }
}

int run(std::vector<std::string> args)
{
    args.insert(args.begin(), "facefit");
    std::vector<const char*> argv;
    for (const std::string& a : args)
        argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

Grid random_grid(Rng& rng, int w, int h, int c, real lo, real hi)
{
    Grid g(w, h, c);
    for (Eigen::Index i = 0; i < g.data.size(); ++i)
        g.data[i] = rng.uniform(lo, hi);
    return g;
}

std::vector<TrackingParams> random_params(Rng& rng, int n_frames, int nb)
{
    std::vector<TrackingParams> out;
    for (int n = 0; n < n_frames; ++n) {
        TrackingParams p;
        p.logits.resize(nb);
        for (int i = 0; i < nb; ++i)
            p.logits[i] = rng.uniform(-6, 2);
        p.euler = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
        p.translation = Vec3(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(500, 700));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 9; ++c)
                p.gamma(r, c) = rng.uniform(-1, 3);
        out.push_back(std::move(p));
    }
    return out;
}

bool same_params(const std::vector<TrackingParams>& a, const std::vector<TrackingParams>& b)
{
    if (a.size() != b.size())
        return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].logits != b[i].logits || a[i].euler != b[i].euler ||
            a[i].translation != b[i].translation || a[i].gamma != b[i].gamma)
            return false;
    return true;
}

/// True when `fn` throws a runtime_error whose message contains `substr`.
template <typename Fn>
bool throws_containing(Fn&& fn, const std::string& substr)
{
    try {
        fn();
    } catch (const std::runtime_error& e) {
        return std::string(e.what()).find(substr) != std::string::npos;
    }
    return false;
}

TemplateFaceModel tiny_template()
{
    ToyTemplateOptions opt;
    opt.grid = 10;
    opt.blendshapes = 3;
    opt.map_resolution = 20;
    return make_toy_template(opt);
}

Camera tiny_camera()
{
    Camera cam;
    cam.width = cam.height = 64;
    cam.cx = cam.cy = 32;
    cam.focal = 150;
    return cam;
}

} // namespace

TEST_CASE("png: 8- and 16-bit round trips stay within half a quantization step")
{
    const std::string dir = fresh_dir("png");
    Rng rng(51);
    const Grid rgb = random_grid(rng, 9, 7, 3, 0, 1);
    const Grid gray = random_grid(rng, 5, 6, 1, 0, 1);

    save_png8(dir + "/rgb.png", rgb);
    const Grid rgb8 = load_png(dir + "/rgb.png");
    REQUIRE(rgb8.same_shape(rgb));
    CHECK((rgb8.data - rgb.data).lpNorm<Eigen::Infinity>() <= 0.5 / 255 + 1e-12);

    save_png8(dir + "/gray.png", gray);
    const Grid gray8 = load_png(dir + "/gray.png");
    REQUIRE(gray8.same_shape(gray));
    CHECK((gray8.data - gray.data).lpNorm<Eigen::Infinity>() <= 0.5 / 255 + 1e-12);

    save_png16(dir + "/rgb16.png", rgb);
    const Grid rgb16 = load_png(dir + "/rgb16.png");
    REQUIRE(rgb16.same_shape(rgb));
    CHECK((rgb16.data - rgb.data).lpNorm<Eigen::Infinity>() <= 0.5 / 65535 + 1e-12);

    // Saving an already-quantized image is byte-stable.
    save_png8(dir + "/rgb_again.png", rgb8);
    CHECK(read_bytes(dir + "/rgb_again.png") == read_bytes(dir + "/rgb.png"));
    save_png16(dir + "/rgb16_again.png", rgb16);
    CHECK(read_bytes(dir + "/rgb16_again.png") == read_bytes(dir + "/rgb16.png"));

    // Values outside [0,1] clamp instead of wrapping.
    Grid wild(2, 1, 3);
    wild.data << -0.5, 0.5, 1.5, 2.0, -3.0, 0.25;
    save_png8(dir + "/wild.png", wild);
    const Grid clamped = load_png(dir + "/wild.png");
    CHECK(clamped.at(0, 0, 0) == 0);
    CHECK(clamped.at(0, 0, 2) == 1);
    CHECK(clamped.at(1, 0, 0) == 1);
    CHECK(clamped.at(1, 0, 1) == 0);

    CHECK_THROWS_AS(load_png(dir + "/absent.png"), std::runtime_error);
}

TEST_CASE("png: indexed class labels round-trip exactly")
{
    const std::string dir = fresh_dir("png_indexed");
    Rng rng(52);
    const int w = 6, h = 5, classes = 4;
    std::vector<int> indices(static_cast<size_t>(w) * h);
    for (int& v : indices)
        v = rng.uniform_int(0, classes - 1);

    save_png_indexed(dir + "/labels.png", indices, w, h, classes);
    std::vector<int> loaded;
    int lw = 0, lh = 0, palette = 0;
    load_png_indices(dir + "/labels.png", loaded, lw, lh, palette);
    CHECK(lw == w);
    CHECK(lh == h);
    CHECK(palette == classes);
    CHECK(loaded == indices);

    // A truecolour PNG is not a label map.
    Grid rgb = random_grid(rng, 4, 4, 3, 0, 1);
    save_png8(dir + "/rgb.png", rgb);
    CHECK(throws_containing([&] { load_png_indices(dir + "/rgb.png", loaded, lw, lh, palette); },
                            "indexed"));

    // Out-of-palette indices are rejected at save time.
    indices[0] = classes;
    CHECK_THROWS_AS(save_png_indexed(dir + "/bad.png", indices, w, h, classes),
                    std::runtime_error);
}

TEST_CASE("grid files: float32 samples round-trip exactly")
{
    const std::string dir = fresh_dir("fgrd");
    Rng rng(53);
    const Grid g = random_grid(rng, 7, 3, 2, -5, 5);
    save_grid(dir + "/map.fgrd", g);
    const Grid back = load_grid(dir + "/map.fgrd");
    REQUIRE(back.same_shape(g));
    for (Eigen::Index i = 0; i < g.data.size(); ++i)
        CHECK(back.data[i] == static_cast<real>(static_cast<float>(g.data[i])));

    // The magic is checked.
    std::ofstream junk(dir + "/junk.fgrd", std::ios::binary);
    junk << "NOPE1234";
    junk.close();
    CHECK_THROWS_AS(load_grid(dir + "/junk.fgrd"), std::runtime_error);
}

TEST_CASE("template container: geometry exact, maps within their bit depth")
{
    const std::string dir = fresh_dir("template");
    const TemplateFaceModel tmpl = tiny_template();
    save_template(dir, tmpl);
    const TemplateFaceModel back = load_template(dir);

    CHECK(back.s0.vertices == tmpl.s0.vertices);
    CHECK(back.s0.uv == tmpl.s0.uv);
    CHECK(back.s0.triangles == tmpl.s0.triangles);
    CHECK(back.s0.landmark_indices == tmpl.s0.landmark_indices);
    REQUIRE(back.blendshape_count() == tmpl.blendshape_count());
    for (int i = 0; i < tmpl.blendshape_count(); ++i) {
        CHECK(back.blendshapes[i].vertices == tmpl.blendshapes[i].vertices);
        CHECK(back.blendshapes[i].triangles == tmpl.blendshapes[i].triangles);
        CHECK(back.blendshapes[i].uv == tmpl.blendshapes[i].uv);
    }
    CHECK((back.r0.data - tmpl.r0.data).lpNorm<Eigen::Infinity>() <= 0.5 / 65535 + 1e-12);
    CHECK(back.parse_map.data == tmpl.parse_map.data); // one-hot survives indexing
    CHECK(back.validity_map.data == tmpl.validity_map.data);
    CHECK(back.distance_threshold == tmpl.distance_threshold);
    CHECK(back.blur_sigma == tmpl.blur_sigma);
    CHECK(back.units == tmpl.units);

    // A second save of the loaded template is byte-identical: the container
    // is a fixed point of the round trip.
    const std::string dir2 = fresh_dir("template_again");
    save_template(dir2, back);
    check_same_tree(dir, dir2);

    CHECK_THROWS_AS(load_template(fresh_dir("template_empty")), std::runtime_error);
}

TEST_CASE("corrections directory: float-cast round trip")
{
    const std::string dir = fresh_dir("corrections");
    const TemplateFaceModel tmpl = tiny_template();
    Rng rng(54);
    ModelCorrections corr = ModelCorrections::zeros(tmpl, 16);
    corr.d_shape_0 = random_grid(rng, 16, 16, 3, -2, 2);
    corr.d_albedo_i[2] = random_grid(rng, 16, 16, 3, -0.2, 0.2);

    save_corrections(dir, corr);
    const ModelCorrections back = load_corrections(dir, tmpl);
    REQUIRE(back.d_shape_i.size() == corr.d_shape_i.size());
    REQUIRE(back.d_albedo_i.size() == corr.d_albedo_i.size());
    CHECK(back.resolution() == 16);
    auto check_map = [](const Grid& loaded, const Grid& orig) {
        REQUIRE(loaded.same_shape(orig));
        for (Eigen::Index i = 0; i < orig.data.size(); ++i)
            CHECK(loaded.data[i] == static_cast<real>(static_cast<float>(orig.data[i])));
    };
    check_map(back.d_shape_0, corr.d_shape_0);
    check_map(back.d_shape_i[1], corr.d_shape_i[1]);
    check_map(back.d_albedo_0, corr.d_albedo_0);
    check_map(back.d_albedo_i[2], corr.d_albedo_i[2]);
    check_map(back.r0_trainable, corr.r0_trainable);
}

TEST_CASE("params JSONL: bitwise round trip")
{
    const std::string dir = fresh_dir("params");
    Rng rng(55);
    std::vector<TrackingParams> params = random_params(rng, 3, 4);
    params[0].logits[1] = -1.0 / 3.0; // not exactly representable in decimal
    params[1].gamma(2, 8) = 1e-17;

    save_params(dir + "/params.jsonl", params);
    const std::vector<TrackingParams> back = load_params(dir + "/params.jsonl");
    CHECK(same_params(back, params));

    // Errors carry the file and line.
    std::ofstream bad(dir + "/bad.jsonl", std::ios::binary);
    bad << "{\"logits\":[0.0],\"euler\":[0,0,0],\"translation\":[0,0,600]}\n";
    bad.close();
    CHECK(throws_containing([&] { load_params(dir + "/bad.jsonl"); }, "bad.jsonl:1"));
}

TEST_CASE("trace CSV: bitwise round trip")
{
    const std::string dir = fresh_dir("trace");
    Rng rng(56);
    std::vector<LossBreakdown> trace(3);
    for (LossBreakdown& b : trace) {
        b.photometric = rng.uniform(0, 1);
        b.image_gradient = rng.uniform(0, 1);
        b.landmark = rng.uniform(0, 100);
        b.parsing = rng.uniform(0, 10);
        b.smoothness = rng.uniform(0, 1);
        b.blendshape_gradient = rng.uniform(0, 1);
        b.reg_coeff = rng.uniform(0, 1);
        b.reg_light = rng.uniform(0, 1);
        b.total = rng.uniform(0, 300);
    }
    save_trace(dir + "/trace.csv", trace);
    const std::vector<LossBreakdown> back = load_trace(dir + "/trace.csv");
    REQUIRE(back.size() == trace.size());
    for (size_t i = 0; i < trace.size(); ++i) {
        CHECK(back[i].photometric == trace[i].photometric);
        CHECK(back[i].image_gradient == trace[i].image_gradient);
        CHECK(back[i].landmark == trace[i].landmark);
        CHECK(back[i].parsing == trace[i].parsing);
        CHECK(back[i].smoothness == trace[i].smoothness);
        CHECK(back[i].blendshape_gradient == trace[i].blendshape_gradient);
        CHECK(back[i].reg_coeff == trace[i].reg_coeff);
        CHECK(back[i].reg_light == trace[i].reg_light);
        CHECK(back[i].total == trace[i].total);
    }

    const std::string header = read_bytes(dir + "/trace.csv").substr(0, 4);
    CHECK(header == "step");
}

TEST_CASE("config: sections override the base, errors carry file and line")
{
    const RunConfig base;
    const std::string text = "# render setup\n"
                             "[camera]\n"
                             "focal = 310.5\n"
                             "width = 128\n"
                             "\n"
                             "[fit]\n"
                             "stage1_steps = 50\n"
                             "seed = 9\n"
                             "[weights]\n"
                             "lambda_ph = 123.25 ; trailing comment\n";
    const RunConfig cfg = parse_config(text, base, "test.ini");
    CHECK(cfg.camera.focal == 310.5);
    CHECK(cfg.camera.width == 128);
    CHECK(cfg.camera.height == base.camera.height);
    CHECK(cfg.camera.cx == base.camera.cx);
    CHECK(cfg.fit.stage1_steps == 50);
    CHECK(cfg.fit.seed == 9);
    CHECK(cfg.fit.weights.lambda_ph == 123.25);
    CHECK(cfg.fit.weights.lambda_lm == base.fit.weights.lambda_lm);

    CHECK(throws_containing([&] { parse_config("[camera]\nbogus = 1\n", base, "t.ini"); },
                            "t.ini:2"));
    CHECK(throws_containing([&] { parse_config("[nope]\n", base, "t.ini"); },
                            "unknown section"));
    CHECK(throws_containing([&] { parse_config("[camera]\nfocal\n", base, "t.ini"); },
                            "key = value"));
    CHECK(throws_containing([&] { parse_config("[camera]\nfocal = soon\n", base, "t.ini"); },
                            "expected a number"));
    CHECK(throws_containing([&] { parse_config("focal = 1\n", base, "t.ini"); }, "t.ini:1"));

    // save/load is exact at full precision.
    const std::string dir = fresh_dir("config");
    RunConfig tuned = base;
    tuned.camera.focal = 470.4;
    tuned.camera.near_z = 49.75;
    tuned.fit.lr1 = 3e-4;
    tuned.fit.warmup_lr_translation = 0.1 + 0.2; // deliberately unround
    tuned.fit.weights.lambda_gamma = 1.0 / 30;
    tuned.fit.stage1_steps = 77;
    save_config(dir + "/run.ini", tuned);
    const RunConfig again = load_config(dir + "/run.ini", base);
    CHECK(again.camera.focal == tuned.camera.focal);
    CHECK(again.camera.near_z == tuned.camera.near_z);
    CHECK(again.fit.lr1 == tuned.fit.lr1);
    CHECK(again.fit.warmup_lr_translation == tuned.fit.warmup_lr_translation);
    CHECK(again.fit.weights.lambda_gamma == tuned.fit.weights.lambda_gamma);
    CHECK(again.fit.stage1_steps == 77);
}

TEST_CASE("scene directory: bundle round trip")
{
    const std::string dir = fresh_dir("scene");
    const TemplateFaceModel tmpl = tiny_template();
    const AttentionMaskSet masks = compute_attention_masks(tmpl, 16, tmpl.blur_sigma);
    const Camera cam = tiny_camera();
    SceneOptions opt;
    opt.n_frames = 2;
    opt.seed = 3;
    opt.uv_resolution = 16;
    const SceneBundle bundle = generate_scene(tmpl, masks, cam, nullptr, opt);
    REQUIRE(bundle.frames.size() == 2);
    CHECK(bundle.frames[0].image.width == 64);
    CHECK(!bundle.gt_params.empty());

    write_scene(dir, bundle);
    const SceneBundle back = load_scene(dir);

    CHECK(back.camera.focal == cam.focal);
    CHECK(back.camera.cx == cam.cx);
    CHECK(back.camera.width == cam.width);
    CHECK(back.parse_classes == bundle.parse_classes);
    REQUIRE(back.frames.size() == bundle.frames.size());
    for (size_t n = 0; n < bundle.frames.size(); ++n) {
        const FrameObservation& a = bundle.frames[n];
        const FrameObservation& b = back.frames[n];
        REQUIRE(b.image.same_shape(a.image));
        CHECK((b.image.data - a.image.data).lpNorm<Eigen::Infinity>() <= 0.5 / 255 + 1e-12);
        CHECK(b.landmarks == a.landmarks); // JSON doubles round-trip exactly
        CHECK(b.landmark_valid == a.landmark_valid);
        CHECK(b.parse.data == a.parse.data); // indexed PNG is lossless
    }
    CHECK(same_params(back.gt_params, bundle.gt_params));

    CHECK_THROWS_AS(load_scene(fresh_dir("scene_absent")), std::runtime_error);
}

TEST_CASE("compute_nme: bbox-normalized mean distance")
{
    Points2 pred(2, 2), gt(2, 2);
    pred << 10, 10, 20, 20;
    gt = pred;
    CHECK(compute_nme(pred, gt, {}, 100, 100) == 0);

    pred.row(0) << 13, 14; // distance 5
    pred.row(1) << 20, 25; // distance 5
    CHECK(compute_nme(pred, gt, {}, 100, 100) == doctest::Approx(0.05).epsilon(1e-12));
    // Doubling the bbox area scales the norm by 2.
    CHECK(compute_nme(pred, gt, {}, 200, 200) == doctest::Approx(0.025).epsilon(1e-12));
    // Only valid rows count.
    CHECK(compute_nme(pred, gt, {1, 0}, 100, 100) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK_THROWS_AS(compute_nme(pred, gt, {0, 0}, 100, 100), std::invalid_argument);
    CHECK_THROWS_AS(compute_nme(pred, gt, {}, 0, 100), std::invalid_argument);
}

TEST_CASE("coefficient_mae: flat mean absolute error")
{
    std::vector<VecX> pred(2), gt(2);
    pred[0] = VecX::Zero(3);
    pred[1] = VecX::Zero(3);
    gt = pred;
    CHECK(coefficient_mae(pred, gt) == 0);

    pred[0][1] += 0.6; // one of six entries off by 0.6
    CHECK(coefficient_mae(pred, gt) == doctest::Approx(0.1).epsilon(1e-12));

    Rng rng(57);
    real accum = 0;
    for (size_t n = 0; n < 2; ++n)
        for (int i = 0; i < 3; ++i) {
            pred[n][i] = rng.uniform(-1, 1);
            gt[n][i] = rng.uniform(-1, 1);
            accum += std::abs(pred[n][i] - gt[n][i]);
        }
    CHECK(coefficient_mae(pred, gt) == doctest::Approx(accum / 6).epsilon(1e-9));

    gt[1] = VecX::Zero(2);
    CHECK_THROWS_AS(coefficient_mae(pred, gt), std::invalid_argument);
    CHECK_THROWS_AS(coefficient_mae({}, {}), std::invalid_argument);
}

TEST_CASE("evaluate_scene: perfect parameters score zero everywhere")
{
    const TemplateFaceModel tmpl = tiny_template();
    const AttentionMaskSet masks = compute_attention_masks(tmpl, 16, tmpl.blur_sigma);
    const Camera cam = tiny_camera();
    SceneOptions opt;
    opt.n_frames = 2;
    opt.seed = 13;
    opt.uv_resolution = 16;
    const SceneBundle bundle = generate_scene(tmpl, masks, cam, nullptr, opt);
    const ModelCorrections corr = ModelCorrections::zeros(tmpl, 16);
    const LossWeights weights;

    const EvalReport report =
        evaluate_scene(bundle, tmpl, masks, corr, bundle.gt_params, weights);
    CHECK(report.photometric_error < 1e-12);
    CHECK(report.nme < 1e-12);
    CHECK(report.coefficient_mae < 1e-12);
    REQUIRE(report.per_frame.size() == 2);

    const LossBreakdown direct = evaluate_losses(bundle.frames, tmpl, masks, corr,
                                                 bundle.gt_params, cam, weights);
    CHECK(report.totals.total == doctest::Approx(direct.total).epsilon(1e-12));
    CHECK(report.totals.photometric == doctest::Approx(direct.photometric).epsilon(1e-12));

    const std::string dir = fresh_dir("eval_report");
    write_eval_report(dir + "/eval.json", report);
    const nlohmann::json j = nlohmann::json::parse(read_bytes(dir + "/eval.json"));
    CHECK(j.at("nme").get<double>() == doctest::Approx(report.nme));
    CHECK(j.at("totals").at("total").get<double>() ==
          doctest::Approx(report.totals.total).epsilon(1e-12));
    CHECK(j.at("per_frame").size() == 2);
    CHECK(j.contains("coefficient_mae"));
}

TEST_CASE("cli: masks writes one png and one grid per blendshape")
{
    const std::string tdir = fresh_dir("cli_masks_template");
    const std::string out = fresh_dir("cli_masks_out");
    save_template(tdir, tiny_template());

    CHECK(run({"masks", "--template", tdir, "--out", out, "--uv-res", "16"}) == 0);
    const std::vector<std::string> files = list_files(out);
    CHECK(files == std::vector<std::string>{"mask_01.fgrd", "mask_01.png", "mask_02.fgrd",
                                            "mask_02.png", "mask_03.fgrd", "mask_03.png"});
    const Grid mask = load_grid(out + "/mask_02.fgrd");
    CHECK(mask.width == 16);
    CHECK(mask.data.minCoeff() >= 0);
    CHECK(mask.data.maxCoeff() <= 1);
}

TEST_CASE("cli: synth is deterministic in the seed")
{
    const std::string a = fresh_dir("cli_synth_a");
    const std::string b = fresh_dir("cli_synth_b");
    const std::string c = fresh_dir("cli_synth_c");
    const std::vector<std::string> common{"synth",        "--frames", "2",  "--resolution",
                                          "64x64",        "--uv-res", "16", "--seed",
                                          "5",            "--out"};
    auto with_out = [&](const std::string& out) {
        std::vector<std::string> args = common;
        args.push_back(out);
        return args;
    };
    CHECK(run(with_out(a)) == 0);
    CHECK(run(with_out(b)) == 0);
    check_same_tree(a, b);

    std::vector<std::string> other = with_out(c);
    other[8] = "6"; // a different seed must change the frames
    CHECK(run(other) == 0);
    CHECK(read_bytes(a + "/frames/0000.png") != read_bytes(c + "/frames/0000.png"));
}

TEST_CASE("cli: render reproduces synthesized frames byte-for-byte")
{
    const std::string scene = fresh_dir("cli_render_scene");
    const std::string out = fresh_dir("cli_render_out");
    REQUIRE(run({"synth", "--frames", "2", "--resolution", "64x64", "--uv-res", "16", "--seed",
                 "5", "--out", scene}) == 0);
    REQUIRE(run({"render", "--template", scene + "/template", "--params",
                 scene + "/gt_params.jsonl", "--scene", scene, "--uv-res", "16", "--out",
                 out}) == 0);
    for (const std::string stem : {"0000", "0001"}) {
        INFO("frame ", stem);
        CHECK(read_bytes(out + "/frames/" + stem + ".png") ==
              read_bytes(scene + "/frames/" + stem + ".png"));
    }
    CHECK(fs::exists(out + "/masks/0000.png"));
}

TEST_CASE("cli: eval scores ground-truth parameters near zero")
{
    const std::string scene = fresh_dir("cli_eval_scene");
    const std::string out = fresh_dir("cli_eval_out");
    REQUIRE(run({"synth", "--frames", "2", "--resolution", "64x64", "--uv-res", "16", "--seed",
                 "8", "--out", scene}) == 0);
    CHECK(run({"eval", "--scene", scene, "--template", scene + "/template", "--params",
               scene + "/gt_params.jsonl", "--gt", "--uv-res", "16", "--out", out}) == 0);

    const nlohmann::json j = nlohmann::json::parse(read_bytes(out + "/eval.json"));
    // The stored frames went through 8-bit quantization; everything else is
    // exact.
    CHECK(j.at("photometric_error").get<double>() < 0.01);
    CHECK(j.at("nme").get<double>() < 1e-9);
    CHECK(j.at("coefficient_mae").get<double>() < 1e-12);

    // --gt on a scene without ground truth is an error.
    fs::copy_file(scene + "/gt_params.jsonl", out + "/params_copy.jsonl");
    fs::remove(scene + "/gt_params.jsonl");
    CHECK(run({"eval", "--scene", scene, "--template", scene + "/template", "--params",
               out + "/params_copy.jsonl", "--gt", "--uv-res", "16", "--out", out}) == 1);
}

TEST_CASE("cli: bad flags and missing inputs return distinct failures")
{
    CHECK(run({"--bogus"}) == 2);
    CHECK(run({"masks", "--template"}) == 2); // missing value
    const std::string out = fresh_dir("cli_errors");
    CHECK(run({"masks", "--template", out + "/absent", "--out", out}) == 1);
    CHECK(run({"--help"}) == 0);
    CHECK(run({"synth", "--help"}) == 0);
}
