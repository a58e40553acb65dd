#include "facefit/eval.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace facefit {

real compute_nme(const Points2& pred, const Points2& gt, const std::vector<uint8_t>& valid,
                 real bbox_w, real bbox_h)
{
    if (pred.rows() != gt.rows())
        throw std::invalid_argument("compute_nme: landmark count mismatch");
    if (bbox_w <= 0 || bbox_h <= 0)
        throw std::invalid_argument("compute_nme: bounding box dimensions must be positive");
    real sum = 0;
    int count = 0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        if (!valid.empty() && !valid[static_cast<size_t>(i)])
            continue;
        sum += (pred.row(i) - gt.row(i)).norm();
        ++count;
    }
    if (count == 0)
        throw std::invalid_argument("compute_nme: no valid landmarks");
    return sum / count / std::sqrt(bbox_w * bbox_h);
}

real coefficient_mae(const std::vector<VecX>& pred, const std::vector<VecX>& gt)
{
    if (pred.size() != gt.size())
        throw std::invalid_argument("coefficient_mae: frame count mismatch");
    if (pred.empty())
        throw std::invalid_argument("coefficient_mae: empty input");
    real sum = 0;
    Eigen::Index count = 0;
    for (size_t n = 0; n < pred.size(); ++n) {
        if (pred[n].size() != gt[n].size())
            throw std::invalid_argument("coefficient_mae: coefficient count mismatch at frame " +
                                        std::to_string(n));
        sum += (pred[n] - gt[n]).cwiseAbs().sum();
        count += pred[n].size();
    }
    return sum / static_cast<real>(count);
}

EvalReport evaluate_scene(const SceneBundle& bundle, const TemplateFaceModel& tmpl,
                          const AttentionMaskSet& masks, const ModelCorrections& corrections,
                          const std::vector<TrackingParams>& params, const LossWeights& weights)
{
    if (params.size() != bundle.frames.size())
        throw std::invalid_argument("evaluate_scene: frame/param count mismatch");

    EvalReport report;
    report.totals =
        evaluate_losses(bundle.frames, tmpl, masks, corrections, params, bundle.camera, weights);

    real photo_num = 0, photo_den = 0, nme_sum = 0;
    for (size_t n = 0; n < bundle.frames.size(); ++n) {
        const FrameObservation& obs = bundle.frames[n];
        report.per_frame.push_back(evaluate_losses({obs}, tmpl, masks, corrections, {params[n]},
                                                   bundle.camera, weights));

        const FrameRender fr = render_frame(tmpl, masks, corrections, params[n], bundle.camera);
        for (int y = 0; y < obs.image.height; ++y)
            for (int x = 0; x < obs.image.width; ++x) {
                const real m = fr.render.mask.at(x, y, 0);
                if (m <= 0)
                    continue;
                real d2 = 0;
                for (int c = 0; c < 3; ++c) {
                    const real d = obs.image.at(x, y, c) - fr.render.color.at(x, y, c);
                    d2 += d * d;
                }
                photo_num += m * std::sqrt(d2);
                photo_den += m;
            }

        real min_u = 0, max_u = 0, min_v = 0, max_v = 0;
        bool first = true;
        for (Eigen::Index i = 0; i < obs.landmarks.rows(); ++i) {
            if (!obs.landmark_valid.empty() && !obs.landmark_valid[static_cast<size_t>(i)])
                continue;
            const real u = obs.landmarks(i, 0), v = obs.landmarks(i, 1);
            if (first) {
                min_u = max_u = u;
                min_v = max_v = v;
                first = false;
            } else {
                min_u = std::min(min_u, u);
                max_u = std::max(max_u, u);
                min_v = std::min(min_v, v);
                max_v = std::max(max_v, v);
            }
        }
        nme_sum += compute_nme(fr.landmarks, obs.landmarks, obs.landmark_valid, max_u - min_u,
                               max_v - min_v);
    }
    report.photometric_error = photo_den > 0 ? photo_num / photo_den : 0;
    report.nme = nme_sum / static_cast<real>(bundle.frames.size());

    if (!bundle.gt_params.empty()) {
        if (bundle.gt_params.size() != params.size())
            throw std::invalid_argument("evaluate_scene: ground-truth/param count mismatch");
        std::vector<VecX> pred_w, gt_w;
        for (size_t n = 0; n < params.size(); ++n) {
            pred_w.push_back(coeffs_from_logits(params[n].logits).w);
            gt_w.push_back(coeffs_from_logits(bundle.gt_params[n].logits).w);
        }
        report.coefficient_mae = coefficient_mae(pred_w, gt_w);
    }
    return report;
}

namespace {

json breakdown_json(const LossBreakdown& b)
{
    json j;
    j["photometric"] = b.photometric;
    j["image_gradient"] = b.image_gradient;
    j["landmark"] = b.landmark;
    j["parsing"] = b.parsing;
    j["smoothness"] = b.smoothness;
    j["blendshape_gradient"] = b.blendshape_gradient;
    j["reg_coeff"] = b.reg_coeff;
    j["reg_light"] = b.reg_light;
    j["total"] = b.total;
    return j;
}

} // namespace

void write_eval_report(const std::string& path, const EvalReport& report)
{
    json j;
    j["totals"] = breakdown_json(report.totals);
    json frames = json::array();
    for (const LossBreakdown& b : report.per_frame)
        frames.push_back(breakdown_json(b));
    j["per_frame"] = std::move(frames);
    j["photometric_error"] = report.photometric_error;
    j["nme"] = report.nme;
    if (std::isfinite(report.coefficient_mae))
        j["coefficient_mae"] = report.coefficient_mae;

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error(path + ": cannot open for writing");
    out << j.dump(2) << "\n";
    if (!out)
        throw std::runtime_error(path + ": write failed");
}

} // namespace facefit
