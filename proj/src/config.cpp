#include "facefit/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace facefit {

namespace {

std::string trim(const std::string& s)
{
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos)
        return {};
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what)
{
    throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + what);
}

real parse_real(const std::string& origin, int line, const std::string& value)
{
    try {
        size_t used = 0;
        const real v = std::stod(value, &used);
        if (used != value.size())
            fail(origin, line, "trailing characters after number '" + value + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(origin, line, "expected a number, got '" + value + "'");
    } catch (const std::out_of_range&) {
        fail(origin, line, "number out of range: '" + value + "'");
    }
}

} // namespace

RunConfig parse_config(const std::string& text, const RunConfig& base, const std::string& origin)
{
    RunConfig cfg = base;

    // Destinations keyed section.key; every value is a real (ints truncate).
    std::map<std::string, std::function<void(real)>> sink;
    auto bind = [&](const std::string& key, real& dst) {
        sink[key] = [&dst](real v) { dst = v; };
    };
    auto bind_int = [&](const std::string& key, int& dst) {
        sink[key] = [&dst](real v) { dst = static_cast<int>(v); };
    };

    bind("camera.focal", cfg.camera.focal);
    bind("camera.cx", cfg.camera.cx);
    bind("camera.cy", cfg.camera.cy);
    bind_int("camera.width", cfg.camera.width);
    bind_int("camera.height", cfg.camera.height);
    bind("camera.near", cfg.camera.near_z);
    bind("camera.far", cfg.camera.far_z);

    bind("weights.lambda_ph", cfg.fit.weights.lambda_ph);
    bind("weights.lambda_lm", cfg.fit.weights.lambda_lm);
    bind("weights.lambda_pa", cfg.fit.weights.lambda_pa);
    bind("weights.lambda_sd", cfg.fit.weights.lambda_sd);
    bind("weights.lambda_bg", cfg.fit.weights.lambda_bg);
    bind("weights.lambda_reg", cfg.fit.weights.lambda_reg);
    bind("weights.lambda_gamma", cfg.fit.weights.lambda_gamma);

    bind_int("fit.stage1_steps", cfg.fit.stage1_steps);
    bind_int("fit.stage2_steps", cfg.fit.stage2_steps);
    bind("fit.lr1", cfg.fit.lr1);
    bind("fit.lr2", cfg.fit.lr2);
    bind_int("fit.restart_every", cfg.fit.restart_every);
    bind("fit.beta1", cfg.fit.beta1);
    bind("fit.beta2", cfg.fit.beta2);
    bind("fit.eps", cfg.fit.eps);
    sink["fit.seed"] = [&cfg](real v) { cfg.fit.seed = static_cast<std::uint64_t>(v); };
    bind_int("fit.frames_per_identity", cfg.fit.frames_per_identity);
    bind("fit.scale_translation", cfg.fit.scale_translation);
    bind("fit.scale_euler", cfg.fit.scale_euler);
    bind("fit.scale_logits", cfg.fit.scale_logits);
    bind("fit.scale_gamma", cfg.fit.scale_gamma);
    bind("fit.scale_corr_shape", cfg.fit.scale_corr_shape);
    bind("fit.scale_corr_albedo", cfg.fit.scale_corr_albedo);
    bind_int("fit.uv_resolution", cfg.fit.uv_resolution);
    bind_int("fit.warmup_steps", cfg.fit.warmup_steps);
    bind("fit.warmup_lr_euler", cfg.fit.warmup_lr_euler);
    bind("fit.warmup_lr_translation", cfg.fit.warmup_lr_translation);

    std::istringstream in(text);
    std::string raw, section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const size_t comment = raw.find_first_of("#;");
        std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                fail(origin, line_no, "unterminated section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "camera" && section != "weights" && section != "fit")
                fail(origin, line_no, "unknown section [" + section + "]");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail(origin, line_no, "expected 'key = value', got '" + line + "'");
        if (section.empty())
            fail(origin, line_no, "key outside any [section]");
        const std::string key = section + "." + trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = sink.find(key);
        if (it == sink.end())
            fail(origin, line_no, "unknown key '" + key + "'");
        it->second(parse_real(origin, line_no, value));
    }
    return cfg;
}

RunConfig load_config(const std::string& path, const RunConfig& base)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(path + ": cannot open");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), base, path);
}

void save_config(const std::string& path, const RunConfig& config)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error(path + ": cannot open for writing");
    char buf[64];
    auto num = [&](real v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    out << "[camera]\n";
    out << "focal = " << num(config.camera.focal) << "\n";
    out << "cx = " << num(config.camera.cx) << "\n";
    out << "cy = " << num(config.camera.cy) << "\n";
    out << "width = " << config.camera.width << "\n";
    out << "height = " << config.camera.height << "\n";
    out << "near = " << num(config.camera.near_z) << "\n";
    out << "far = " << num(config.camera.far_z) << "\n";
    out << "\n[weights]\n";
    out << "lambda_ph = " << num(config.fit.weights.lambda_ph) << "\n";
    out << "lambda_lm = " << num(config.fit.weights.lambda_lm) << "\n";
    out << "lambda_pa = " << num(config.fit.weights.lambda_pa) << "\n";
    out << "lambda_sd = " << num(config.fit.weights.lambda_sd) << "\n";
    out << "lambda_bg = " << num(config.fit.weights.lambda_bg) << "\n";
    out << "lambda_reg = " << num(config.fit.weights.lambda_reg) << "\n";
    out << "lambda_gamma = " << num(config.fit.weights.lambda_gamma) << "\n";
    out << "\n[fit]\n";
    out << "stage1_steps = " << config.fit.stage1_steps << "\n";
    out << "stage2_steps = " << config.fit.stage2_steps << "\n";
    out << "lr1 = " << num(config.fit.lr1) << "\n";
    out << "lr2 = " << num(config.fit.lr2) << "\n";
    out << "restart_every = " << config.fit.restart_every << "\n";
    out << "beta1 = " << num(config.fit.beta1) << "\n";
    out << "beta2 = " << num(config.fit.beta2) << "\n";
    out << "eps = " << num(config.fit.eps) << "\n";
    out << "seed = " << config.fit.seed << "\n";
    out << "frames_per_identity = " << config.fit.frames_per_identity << "\n";
    out << "scale_translation = " << num(config.fit.scale_translation) << "\n";
    out << "scale_euler = " << num(config.fit.scale_euler) << "\n";
    out << "scale_logits = " << num(config.fit.scale_logits) << "\n";
    out << "scale_gamma = " << num(config.fit.scale_gamma) << "\n";
    out << "scale_corr_shape = " << num(config.fit.scale_corr_shape) << "\n";
    out << "scale_corr_albedo = " << num(config.fit.scale_corr_albedo) << "\n";
    out << "uv_resolution = " << config.fit.uv_resolution << "\n";
    out << "warmup_steps = " << config.fit.warmup_steps << "\n";
    out << "warmup_lr_euler = " << num(config.fit.warmup_lr_euler) << "\n";
    out << "warmup_lr_translation = " << num(config.fit.warmup_lr_translation) << "\n";
    if (!out)
        throw std::runtime_error(path + ": write failed");
}

} // namespace facefit
