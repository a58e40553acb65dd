#include "facefit/model_io.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "facefit/image_io.hpp"
#include "facefit/obj_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace facefit {

namespace {

std::string blendshape_path(const std::string& dir, int i)
{
    char name[32];
    std::snprintf(name, sizeof name, "SS_%02d.obj", i + 1);
    return dir + "/bs/" + name;
}

json load_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error(path + ": cannot open");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return j;
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error(path + ": cannot open for writing");
    out << text;
    if (!out)
        throw std::runtime_error(path + ": write failed");
}

/// One-hot parse map -> per-pixel class index (argmax; ties take the first).
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

Grid indices_to_parse(const std::vector<int>& idx, int width, int height, int n_classes)
{
    Grid parse;
    parse.width = width;
    parse.height = height;
    parse.channels = n_classes;
    parse.data = VecX::Zero(static_cast<Eigen::Index>(width) * height * n_classes);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const int c = idx[static_cast<size_t>(y) * width + x];
            if (c < 0 || c >= n_classes)
                throw std::runtime_error("parse map class index " + std::to_string(c) +
                                         " outside [0, " + std::to_string(n_classes) + ")");
            parse.at(x, y, c) = 1;
        }
    return parse;
}

} // namespace

void save_template(const std::string& dir, const TemplateFaceModel& tmpl)
{
    fs::create_directories(dir + "/bs");

    json manifest;
    manifest["units"] = tmpl.units;
    manifest["resolution"] = tmpl.r0.width;
    manifest["blur_sigma"] = tmpl.blur_sigma;
    manifest["threshold"] = tmpl.distance_threshold;
    manifest["blendshapes"] = tmpl.blendshape_count();
    manifest["parse_classes"] = tmpl.parse_map.channels;
    write_text(dir + "/manifest.json", manifest.dump(2) + "\n");

    save_obj(tmpl.s0, dir + "/s0.obj");
    for (int i = 0; i < tmpl.blendshape_count(); ++i) {
        TriMesh bs; // topology lives in s0.obj; blendshapes store geometry only
        bs.vertices = tmpl.blendshapes[static_cast<size_t>(i)].vertices;
        bs.triangles = tmpl.s0.triangles;
        save_obj(bs, blendshape_path(dir, i));
    }

    save_png16(dir + "/r0.png", tmpl.r0);
    save_png_indexed(dir + "/parse_T.png", parse_to_indices(tmpl.parse_map),
                     tmpl.parse_map.width, tmpl.parse_map.height, tmpl.parse_map.channels);
    save_png8(dir + "/validity.png", tmpl.validity_map);
    write_text(dir + "/landmarks.json", json(tmpl.s0.landmark_indices).dump() + "\n");
}

TemplateFaceModel load_template(const std::string& dir)
{
    const json manifest = load_json(dir + "/manifest.json");
    TemplateFaceModel tmpl;
    tmpl.units = manifest.value("units", std::string("mm"));
    tmpl.blur_sigma = manifest.value("blur_sigma", real(1));
    tmpl.distance_threshold = manifest.value("threshold", real(1e-3));
    const int nb = manifest.at("blendshapes").get<int>();
    const int n_classes = manifest.value("parse_classes", 0);

    tmpl.s0 = load_obj(dir + "/s0.obj");
    if (!tmpl.s0.has_uv())
        throw std::runtime_error(dir + "/s0.obj: template mesh requires per-vertex UVs");

    tmpl.blendshapes.reserve(static_cast<size_t>(nb));
    for (int i = 0; i < nb; ++i) {
        const std::string path = blendshape_path(dir, i);
        TriMesh bs = load_obj(path);
        if (bs.vertices.rows() != tmpl.s0.vertices.rows())
            throw std::runtime_error(path + ": vertex count differs from s0.obj");
        bs.triangles = tmpl.s0.triangles; // shared topology
        bs.uv = tmpl.s0.uv;
        tmpl.blendshapes.push_back(std::move(bs));
    }

    tmpl.r0 = load_png(dir + "/r0.png");
    if (tmpl.r0.channels != 3)
        throw std::runtime_error(dir + "/r0.png: expected RGB");

    std::vector<int> idx;
    int pw = 0, ph = 0, palette = 0;
    load_png_indices(dir + "/parse_T.png", idx, pw, ph, palette);
    tmpl.parse_map = indices_to_parse(idx, pw, ph, n_classes > 0 ? n_classes : palette);

    tmpl.validity_map = load_png(dir + "/validity.png");
    if (tmpl.validity_map.channels != 1)
        throw std::runtime_error(dir + "/validity.png: expected a single channel");

    const json lms = load_json(dir + "/landmarks.json");
    if (!lms.is_array())
        throw std::runtime_error(dir + "/landmarks.json: expected an array of vertex indices");
    tmpl.s0.landmark_indices.clear();
    for (const auto& v : lms) {
        const int li = v.get<int>();
        if (li < 0 || li >= tmpl.s0.vertices.rows())
            throw std::runtime_error(dir + "/landmarks.json: vertex index " + std::to_string(li) +
                                     " out of range");
        tmpl.s0.landmark_indices.push_back(li);
    }
    return tmpl;
}

void save_grid(const std::string& path, const Grid& grid)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error(path + ": cannot open for writing");
    out.write("FGRD", 4);
    const uint32_t dims[3] = {static_cast<uint32_t>(grid.width),
                              static_cast<uint32_t>(grid.height),
                              static_cast<uint32_t>(grid.channels)};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    std::vector<float> samples(static_cast<size_t>(grid.data.size()));
    for (Eigen::Index i = 0; i < grid.data.size(); ++i)
        samples[static_cast<size_t>(i)] = static_cast<float>(grid.data[i]);
    out.write(reinterpret_cast<const char*>(samples.data()),
              static_cast<std::streamsize>(samples.size() * sizeof(float)));
    if (!out)
        throw std::runtime_error(path + ": write failed");
}

Grid load_grid(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error(path + ": cannot open");
    char magic[4];
    uint32_t dims[3];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || std::string(magic, 4) != "FGRD")
        throw std::runtime_error(path + ": not a float grid file");
    Grid grid;
    grid.width = static_cast<int>(dims[0]);
    grid.height = static_cast<int>(dims[1]);
    grid.channels = static_cast<int>(dims[2]);
    const Eigen::Index count =
        static_cast<Eigen::Index>(grid.width) * grid.height * grid.channels;
    std::vector<float> samples(static_cast<size_t>(count));
    in.read(reinterpret_cast<char*>(samples.data()),
            static_cast<std::streamsize>(samples.size() * sizeof(float)));
    if (!in)
        throw std::runtime_error(path + ": truncated float grid");
    grid.data.resize(count);
    for (Eigen::Index i = 0; i < count; ++i)
        grid.data[i] = samples[static_cast<size_t>(i)];
    return grid;
}

void save_corrections(const std::string& dir, const ModelCorrections& corrections)
{
    fs::create_directories(dir);
    save_grid(dir + "/d_shape_0.fgrd", corrections.d_shape_0);
    save_grid(dir + "/d_albedo_0.fgrd", corrections.d_albedo_0);
    save_grid(dir + "/r0_trainable.fgrd", corrections.r0_trainable);
    char name[32];
    for (size_t i = 0; i < corrections.d_shape_i.size(); ++i) {
        std::snprintf(name, sizeof name, "/d_shape_%02zu.fgrd", i + 1);
        save_grid(dir + name, corrections.d_shape_i[i]);
    }
    for (size_t i = 0; i < corrections.d_albedo_i.size(); ++i) {
        std::snprintf(name, sizeof name, "/d_albedo_%02zu.fgrd", i + 1);
        save_grid(dir + name, corrections.d_albedo_i[i]);
    }
}

ModelCorrections load_corrections(const std::string& dir, const TemplateFaceModel& tmpl)
{
    ModelCorrections c;
    c.d_shape_0 = load_grid(dir + "/d_shape_0.fgrd");
    c.d_albedo_0 = load_grid(dir + "/d_albedo_0.fgrd");
    c.r0_trainable = load_grid(dir + "/r0_trainable.fgrd");
    char name[32];
    for (int i = 0; i < tmpl.blendshape_count(); ++i) {
        std::snprintf(name, sizeof name, "/d_shape_%02d.fgrd", i + 1);
        c.d_shape_i.push_back(load_grid(dir + name));
        std::snprintf(name, sizeof name, "/d_albedo_%02d.fgrd", i + 1);
        c.d_albedo_i.push_back(load_grid(dir + name));
    }
    return c;
}

void save_params(const std::string& path, const std::vector<TrackingParams>& params)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error(path + ": cannot open for writing");
    for (const TrackingParams& p : params) {
        json j;
        j["logits"] = std::vector<real>(p.logits.data(), p.logits.data() + p.logits.size());
        j["euler"] = {p.euler.x(), p.euler.y(), p.euler.z()};
        j["translation"] = {p.translation.x(), p.translation.y(), p.translation.z()};
        json gamma = json::array();
        for (int c = 0; c < 3; ++c) {
            json row = json::array();
            for (int b = 0; b < 9; ++b)
                row.push_back(p.gamma(c, b));
            gamma.push_back(std::move(row));
        }
        j["gamma"] = std::move(gamma);
        out << j.dump() << "\n";
    }
    if (!out)
        throw std::runtime_error(path + ": write failed");
}

std::vector<TrackingParams> load_params(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error(path + ": cannot open");
    std::vector<TrackingParams> params;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        TrackingParams p;
        try {
            const json j = json::parse(line);
            const auto logits = j.at("logits").get<std::vector<real>>();
            p.logits =
                Eigen::Map<const VecX>(logits.data(), static_cast<Eigen::Index>(logits.size()));
            const auto euler = j.at("euler").get<std::vector<real>>();
            const auto trans = j.at("translation").get<std::vector<real>>();
            if (euler.size() != 3 || trans.size() != 3)
                throw std::runtime_error("euler/translation must have 3 entries");
            p.euler = Vec3(euler[0], euler[1], euler[2]);
            p.translation = Vec3(trans[0], trans[1], trans[2]);
            const json& gamma = j.at("gamma");
            if (!gamma.is_array() || gamma.size() != 3)
                throw std::runtime_error("gamma must be 3 rows of 9");
            for (int c = 0; c < 3; ++c) {
                const json& row = gamma[static_cast<size_t>(c)];
                if (!row.is_array() || row.size() != 9)
                    throw std::runtime_error("gamma must be 3 rows of 9");
                for (int b = 0; b < 9; ++b)
                    p.gamma(c, b) = row[static_cast<size_t>(b)].get<real>();
            }
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        params.push_back(std::move(p));
    }
    return params;
}

void save_trace(const std::string& path, const std::vector<LossBreakdown>& trace)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error(path + ": cannot open for writing");
    out << "step,photometric,image_gradient,landmark,parsing,smoothness,"
           "blendshape_gradient,reg_coeff,reg_light,total\n";
    char buf[64];
    auto col = [&](real v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
    };
    for (size_t i = 0; i < trace.size(); ++i) {
        const LossBreakdown& b = trace[i];
        out << i;
        col(b.photometric);
        col(b.image_gradient);
        col(b.landmark);
        col(b.parsing);
        col(b.smoothness);
        col(b.blendshape_gradient);
        col(b.reg_coeff);
        col(b.reg_light);
        col(b.total);
        out << "\n";
    }
    if (!out)
        throw std::runtime_error(path + ": write failed");
}

std::vector<LossBreakdown> load_trace(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error(path + ": cannot open");
    std::vector<LossBreakdown> trace;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<real> vals;
        while (std::getline(ss, cell, ','))
            vals.push_back(std::stod(cell));
        if (vals.size() != 10)
            throw std::runtime_error(path + ": malformed trace row '" + line + "'");
        LossBreakdown b;
        b.photometric = vals[1];
        b.image_gradient = vals[2];
        b.landmark = vals[3];
        b.parsing = vals[4];
        b.smoothness = vals[5];
        b.blendshape_gradient = vals[6];
        b.reg_coeff = vals[7];
        b.reg_light = vals[8];
        b.total = vals[9];
        trace.push_back(b);
    }
    return trace;
}

} // namespace facefit
