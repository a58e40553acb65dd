#include "facefit/scene.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "facefit/config.hpp"
#include "facefit/image_io.hpp"
#include "facefit/model_io.hpp"
#include "facefit/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace facefit {

namespace {

std::string frame_name(int n)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", n);
    return buf;
}

/// Hardens a soft one-hot map to exact one-hot (argmax, first wins on ties).
Grid harden_parse(const Grid& soft)
{
    Grid hard = soft;
    hard.data.setZero();
    for (int y = 0; y < soft.height; ++y)
        for (int x = 0; x < soft.width; ++x) {
            int best = 0;
            real best_v = soft.at(x, y, 0);
            for (int c = 1; c < soft.channels; ++c)
                if (soft.at(x, y, c) > best_v) {
                    best_v = soft.at(x, y, c);
                    best = c;
                }
            hard.at(x, y, best) = 1;
        }
    return hard;
}

std::vector<int> parse_to_indices(const Grid& parse)
{
    std::vector<int> idx(static_cast<size_t>(parse.width) * parse.height);
    for (int y = 0; y < parse.height; ++y)
        for (int x = 0; x < parse.width; ++x) {
            int best = 0;
            real best_v = parse.at(x, y, 0);
            for (int c = 1; c < parse.channels; ++c)
                if (parse.at(x, y, c) > best_v) {
                    best_v = parse.at(x, y, c);
                    best = c;
                }
            idx[static_cast<size_t>(y) * parse.width + x] = best;
        }
    return idx;
}

} // namespace

TemplateFaceModel make_toy_template(const ToyTemplateOptions& options)
{
    const int n = options.grid;
    const int nb = options.blendshapes;
    const int res = options.map_resolution;
    if (n < 10)
        throw std::invalid_argument("make_toy_template: grid must be >= 10 (68 landmarks)");
    if (nb < 1)
        throw std::invalid_argument("make_toy_template: need at least one blendshape");
    if (res < n || res % n != 0)
        throw std::invalid_argument("make_toy_template: map_resolution must be a multiple of grid");

    TemplateFaceModel tmpl;
    TriMesh& s0 = tmpl.s0;

    // Dome head, ~180 x 220 mm, bulging toward -z (the camera side).
    s0.vertices.resize(n * n, 3);
    s0.uv.resize(n * n, 2);
    const int stride = res / n;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const real fx = real(i) / (n - 1);
            const real fy = real(j) / (n - 1);
            const real x = (fx - real(0.5)) * 180;
            const real y = (fy - real(0.5)) * 220;
            const real r2 = (x / 95) * (x / 95) + (y / 115) * (y / 115);
            const real z = -45 * std::exp(real(-1.8) * r2);
            s0.vertices.row(j * n + i) = Vec3(x, y, z);
            // Texel-centre UVs (exact at powers of two): (k + 0.5) / res.
            s0.uv.row(j * n + i) =
                Vec2((i * stride + real(0.5)) / res, (j * stride + real(0.5)) / res);
        }

    s0.triangles.resize((n - 1) * (n - 1) * 2, 3);
    int t = 0;
    for (int j = 0; j + 1 < n; ++j)
        for (int i = 0; i + 1 < n; ++i) {
            const int a = j * n + i, b = j * n + i + 1;
            const int c = (j + 1) * n + i, d = (j + 1) * n + i + 1;
            // Wound so normals face -z (toward the camera).
            s0.triangles.row(t++) << a, d, b;
            s0.triangles.row(t++) << a, c, d;
        }

    // 68 landmarks spread over the interior vertices.
    std::vector<int> interior;
    for (int j = 1; j + 1 < n; ++j)
        for (int i = 1; i + 1 < n; ++i)
            interior.push_back(j * n + i);
    for (int k = 0; k < 68; ++k)
        s0.landmark_indices.push_back(
            interior[static_cast<size_t>(k) * (interior.size() - 1) / 67]);

    // Blendshapes: localized Gaussian bumps, mostly toward -z, ~8 mm.
    for (int bsi = 0; bsi < nb; ++bsi) {
        const real theta = 2 * EIGEN_PI * bsi / nb + real(0.5);
        const real rho = real(0.30) + real(0.08) * (bsi % 2);
        const Vec2 centre((real(0.5) + rho * std::cos(theta) * real(0.9) - real(0.5)) * 180,
                          (real(0.5) + rho * std::sin(theta) - real(0.5)) * 220);
        // Mostly tangential motion: in-plane displacement shifts the surface
        // texture under the camera, which makes the coefficient photometrically
        // observable even under diffuse light (a pure depth bump is nearly
        // invisible head-on).
        Vec3 dir(real(0.85) * std::cos(real(1.7) * bsi),
                 real(0.85) * std::sin(real(2.3) * bsi + 1), real(-0.5));
        dir.normalize();
        const real sigma = 28, amplitude = 12;

        TriMesh bs = s0;
        bs.landmark_indices.clear();
        for (Eigen::Index v = 0; v < bs.vertices.rows(); ++v) {
            const real d2 = (bs.vertices.row(v).head<2>().transpose() - centre).squaredNorm();
            bs.vertices.row(v) +=
                amplitude * std::exp(-d2 / (2 * sigma * sigma)) * dir.transpose();
        }
        tmpl.blendshapes.push_back(std::move(bs));
    }

    // Structured albedo in [0.1, 0.9]: a smooth base plus strong
    // high-frequency detail (~11 mm wavelength on the head) so that
    // millimetre-scale shape and pose errors are photometrically visible.
    tmpl.r0.width = tmpl.r0.height = res;
    tmpl.r0.channels = 3;
    tmpl.r0.data.resize(static_cast<Eigen::Index>(res) * res * 3);
    const real tau = 2 * EIGEN_PI;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const real u = (x + real(0.5)) / res;
            const real v = (y + real(0.5)) / res;
            const real base = real(0.5) + real(0.15) * u - real(0.08) * v;
            const real fine = std::sin(tau * 16 * u + 1) * std::sin(tau * 13 * v + real(0.4)) +
                              real(0.6) * std::sin(tau * (9 * u + 11 * v) + real(2.1));
            auto clamp01 = [](real c) { return std::clamp(c, real(0.1), real(0.9)); };
            tmpl.r0.at(x, y, 0) =
                clamp01(base + real(0.16) * fine + real(0.1) * std::sin(7 * u + 1));
            tmpl.r0.at(x, y, 1) = clamp01(real(0.85) * base - real(0.13) * fine +
                                          real(0.12) * std::sin(tau * 11 * v + 2));
            tmpl.r0.at(x, y, 2) = clamp01(real(0.7) * base + real(0.11) * fine +
                                          real(0.12) * std::cos(tau * (14 * u - 6 * v) + 3));
        }

    // Parse regions: 0 = border, 1 = skin, 2 = centre, 3 = ring.
    tmpl.parse_map.width = tmpl.parse_map.height = res;
    tmpl.parse_map.channels = 4;
    tmpl.parse_map.data = VecX::Zero(static_cast<Eigen::Index>(res) * res * 4);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const real u = (x + real(0.5)) / res;
            const real v = (y + real(0.5)) / res;
            const real du = u - real(0.5), dv = v - real(0.5);
            const real rho = std::sqrt(du * du + dv * dv * real(1.2));
            // Class 0 (background) never appears on the mesh; two compact
            // interior regions keep the boundary band short.
            int cls;
            if (rho < real(0.10))
                cls = 2;
            else if (rho < real(0.18))
                cls = 3;
            else
                cls = 1;
            tmpl.parse_map.at(x, y, cls) = 1;
        }

    // Validity: all skin except two eye holes.
    tmpl.validity_map.width = tmpl.validity_map.height = res;
    tmpl.validity_map.channels = 1;
    tmpl.validity_map.data = VecX::Ones(static_cast<Eigen::Index>(res) * res);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const real u = (x + real(0.5)) / res;
            const real v = (y + real(0.5)) / res;
            const real l = (Vec2(u, v) - Vec2(real(0.35), real(0.35))).norm();
            const real r = (Vec2(u, v) - Vec2(real(0.65), real(0.35))).norm();
            if (l < real(0.06) || r < real(0.06))
                tmpl.validity_map.at(x, y, 0) = 0;
        }

    return tmpl;
}

std::vector<TrackingParams> sample_tracking_params(const TemplateFaceModel& tmpl,
                                                   const SceneOptions& options)
{
    const int nb = tmpl.blendshape_count();
    if (options.active_blendshapes > nb)
        throw std::invalid_argument("sample_tracking_params: more active blendshapes than the "
                                    "template has");
    Rng rng(options.seed);

    // Active set, sampled without replacement.
    std::vector<int> active;
    while (static_cast<int>(active.size()) < options.active_blendshapes) {
        const int k = rng.uniform_int(0, nb - 1);
        if (std::find(active.begin(), active.end(), k) == active.end())
            active.push_back(k);
    }

    const real max_rad = options.max_euler_deg * EIGEN_PI / 180;
    std::vector<TrackingParams> params(static_cast<size_t>(options.n_frames));
    for (TrackingParams& p : params) {
        p.logits = VecX::Constant(nb, -6);
        for (const int k : active)
            p.logits[k] = rng.uniform(real(-1.4), real(1.4));
        p.euler = Vec3(rng.uniform(-max_rad, max_rad), rng.uniform(-max_rad, max_rad),
                       rng.uniform(-max_rad, max_rad));
        p.translation =
            options.base_translation +
            Vec3(rng.uniform(-options.translation_jitter_xy, options.translation_jitter_xy),
                 rng.uniform(-options.translation_jitter_xy, options.translation_jitter_xy),
                 rng.uniform(-options.translation_jitter_z, options.translation_jitter_z));
        const real g0 = rng.uniform(options.gamma_base_min, options.gamma_base_max);
        p.gamma = SHCoeffs::Zero();
        for (int c = 0; c < 3; ++c)
            p.gamma(c, 0) = g0 * (1 + real(0.04) * rng.uniform(-1, 1));
        for (int b = 1; b < 9; ++b) {
            const real scale = b <= 3 ? options.gamma_band_jitter : options.gamma_band_jitter / 3;
            for (int c = 0; c < 3; ++c)
                p.gamma(c, b) = g0 * scale * rng.uniform(-1, 1);
        }
    }
    return params;
}

SceneBundle generate_scene(const TemplateFaceModel& tmpl, const AttentionMaskSet& masks,
                           const Camera& camera, const ModelCorrections* corrections,
                           const SceneOptions& options)
{
    const ModelCorrections zeros = corrections
                                       ? ModelCorrections()
                                       : ModelCorrections::zeros(tmpl, options.uv_resolution);
    const ModelCorrections& corr = corrections ? *corrections : zeros;

    SceneBundle bundle;
    bundle.camera = camera;
    bundle.parse_classes = tmpl.parse_map.channels;
    bundle.gt_params = sample_tracking_params(tmpl, options);

    for (const TrackingParams& p : bundle.gt_params) {
        const FrameRender fr = render_frame(tmpl, masks, corr, p, camera);
        FrameObservation obs;
        obs.image = fr.render.color;
        obs.landmarks = fr.landmarks;
        obs.landmark_valid.assign(static_cast<size_t>(fr.landmarks.rows()), 1);
        obs.parse = harden_parse(fr.parse);
        bundle.frames.push_back(std::move(obs));
    }
    return bundle;
}

void write_scene(const std::string& dir, const SceneBundle& bundle)
{
    fs::create_directories(dir + "/frames");
    fs::create_directories(dir + "/landmarks");
    fs::create_directories(dir + "/parse");

    for (size_t n = 0; n < bundle.frames.size(); ++n) {
        const FrameObservation& obs = bundle.frames[n];
        const std::string stem = frame_name(static_cast<int>(n));
        save_png8(dir + "/frames/" + stem + ".png", obs.image);

        json lms = json::array();
        for (Eigen::Index i = 0; i < obs.landmarks.rows(); ++i) {
            const int valid =
                obs.landmark_valid.empty() ? 1 : obs.landmark_valid[static_cast<size_t>(i)];
            lms.push_back({obs.landmarks(i, 0), obs.landmarks(i, 1), valid});
        }
        std::ofstream lm_out(dir + "/landmarks/" + stem + ".json", std::ios::binary);
        if (!lm_out)
            throw std::runtime_error(dir + "/landmarks/" + stem + ".json: cannot open");
        lm_out << lms.dump() << "\n";

        save_png_indexed(dir + "/parse/" + stem + ".png", parse_to_indices(obs.parse),
                         obs.parse.width, obs.parse.height, bundle.parse_classes);
    }

    std::ofstream cam(dir + "/camera.ini", std::ios::binary);
    if (!cam)
        throw std::runtime_error(dir + "/camera.ini: cannot open");
    char buf[64];
    auto num = [&](real v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    cam << "[camera]\n";
    cam << "focal = " << num(bundle.camera.focal) << "\n";
    cam << "cx = " << num(bundle.camera.cx) << "\n";
    cam << "cy = " << num(bundle.camera.cy) << "\n";
    cam << "width = " << bundle.camera.width << "\n";
    cam << "height = " << bundle.camera.height << "\n";
    cam << "near = " << num(bundle.camera.near_z) << "\n";
    cam << "far = " << num(bundle.camera.far_z) << "\n";

    json meta;
    meta["frames"] = bundle.frames.size();
    meta["parse_classes"] = bundle.parse_classes;
    std::ofstream meta_out(dir + "/meta.json", std::ios::binary);
    meta_out << meta.dump(2) << "\n";

    if (!bundle.gt_params.empty())
        save_params(dir + "/gt_params.jsonl", bundle.gt_params);
}

SceneBundle load_scene(const std::string& dir)
{
    std::ifstream meta_in(dir + "/meta.json");
    if (!meta_in)
        throw std::runtime_error(dir + "/meta.json: cannot open");
    json meta;
    meta_in >> meta;
    const int n_frames = meta.at("frames").get<int>();
    const int parse_classes = meta.at("parse_classes").get<int>();

    SceneBundle bundle;
    bundle.parse_classes = parse_classes;
    {
        std::ifstream cam(dir + "/camera.ini", std::ios::binary);
        if (!cam)
            throw std::runtime_error(dir + "/camera.ini: cannot open");
        std::ostringstream text;
        text << cam.rdbuf();
        RunConfig base;
        bundle.camera = parse_config(text.str(), base, dir + "/camera.ini").camera;
    }

    for (int n = 0; n < n_frames; ++n) {
        const std::string stem = frame_name(n);
        FrameObservation obs;
        obs.image = load_png(dir + "/frames/" + stem + ".png");
        if (obs.image.channels != 3)
            throw std::runtime_error(dir + "/frames/" + stem + ".png: expected RGB");

        const std::string lm_path = dir + "/landmarks/" + stem + ".json";
        std::ifstream lm_in(lm_path);
        if (!lm_in)
            throw std::runtime_error(lm_path + ": cannot open");
        json lms;
        try {
            lm_in >> lms;
        } catch (const json::exception& e) {
            throw std::runtime_error(lm_path + ": " + e.what());
        }
        if (!lms.is_array() || lms.empty())
            throw std::runtime_error(lm_path + ": expected a non-empty array of [u, v, valid]");
        obs.landmarks.resize(static_cast<Eigen::Index>(lms.size()), 2);
        obs.landmark_valid.resize(lms.size());
        for (size_t i = 0; i < lms.size(); ++i) {
            const json& row = lms[i];
            if (!row.is_array() || row.size() != 3)
                throw std::runtime_error(lm_path + ": row " + std::to_string(i) +
                                         " must be [u, v, valid]");
            obs.landmarks(static_cast<Eigen::Index>(i), 0) = row[0].get<real>();
            obs.landmarks(static_cast<Eigen::Index>(i), 1) = row[1].get<real>();
            obs.landmark_valid[i] = row[2].get<int>() != 0;
        }

        std::vector<int> idx;
        int pw = 0, ph = 0, palette = 0;
        load_png_indices(dir + "/parse/" + stem + ".png", idx, pw, ph, palette);
        if (pw != obs.image.width || ph != obs.image.height)
            throw std::runtime_error(dir + "/parse/" + stem +
                                     ".png: parse size differs from the frame");
        obs.parse.width = pw;
        obs.parse.height = ph;
        obs.parse.channels = parse_classes;
        obs.parse.data = VecX::Zero(static_cast<Eigen::Index>(pw) * ph * parse_classes);
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) {
                const int c = idx[static_cast<size_t>(y) * pw + x];
                if (c < 0 || c >= parse_classes)
                    throw std::runtime_error(dir + "/parse/" + stem + ".png: class " +
                                             std::to_string(c) + " outside [0, " +
                                             std::to_string(parse_classes) + ")");
                obs.parse.at(x, y, c) = 1;
            }

        bundle.frames.push_back(std::move(obs));
    }

    if (fs::exists(dir + "/gt_params.jsonl"))
        bundle.gt_params = load_params(dir + "/gt_params.jsonl");
    return bundle;
}

} // namespace facefit
