#include "facefit/obj_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace facefit {

namespace {

[[noreturn]] void parse_error(const std::string& path, int line, const std::string& what)
{
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

} // namespace

TriMesh load_obj(const std::string& path)
{
    std::ifstream file(path);
    if (!file)
        throw std::runtime_error("load_obj: cannot open " + path);

    std::vector<Vec3> positions;
    std::vector<Vec2> texcoords;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> vertex_vt; // resolved vt index per vertex, -1 = unseen

    std::string line;
    int line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#')
            continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ss >> p.x() >> p.y() >> p.z()))
                parse_error(path, line_no, "malformed vertex record");
            positions.push_back(p);
        } else if (tag == "vt") {
            Vec2 t;
            if (!(ss >> t.x() >> t.y()))
                parse_error(path, line_no, "malformed texture coordinate record");
            texcoords.push_back(t);
        } else if (tag == "f") {
            std::vector<std::pair<int, int>> corners; // (vertex, vt or -1)
            std::string token;
            while (ss >> token) {
                int vi = 0, ti = -1;
                const char* begin = token.data();
                const char* end = begin + token.size();
                auto r = std::from_chars(begin, end, vi);
                if (r.ec != std::errc{})
                    parse_error(path, line_no, "malformed face corner '" + token + "'");
                if (r.ptr != end) {
                    if (*r.ptr != '/')
                        parse_error(path, line_no, "malformed face corner '" + token + "'");
                    auto r2 = std::from_chars(r.ptr + 1, end, ti);
                    if (r2.ec != std::errc{} || r2.ptr != end)
                        parse_error(path, line_no,
                                    "unsupported face corner '" + token +
                                        "' (expected v or v/vt)");
                }
                corners.emplace_back(vi, ti);
            }
            if (corners.size() != 3)
                parse_error(path, line_no, "only triangular faces are supported");
            std::array<int, 3> tri;
            for (int k = 0; k < 3; ++k) {
                auto [vi, ti] = corners[k];
                if (vi < 1 || vi > static_cast<int>(positions.size()))
                    parse_error(path, line_no, "vertex index out of range");
                tri[k] = vi - 1;
                if (ti != -1) {
                    if (ti < 1 || ti > static_cast<int>(texcoords.size()))
                        parse_error(path, line_no, "texture index out of range");
                    vertex_vt.resize(positions.size(), -1);
                    int& slot = vertex_vt[vi - 1];
                    if (slot == -1)
                        slot = ti - 1;
                    else if (slot != ti - 1)
                        parse_error(path, line_no,
                                    "vertex " + std::to_string(vi) +
                                        " uses conflicting texture coordinates (per-vertex UVs "
                                        "required, seams are not supported)");
                }
            }
            faces.push_back(tri);
        }
        // Other record types (vn, usemtl, ...) are ignored.
    }

    TriMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(positions.size()), 3);
    for (size_t i = 0; i < positions.size(); ++i)
        mesh.vertices.row(static_cast<Eigen::Index>(i)) = positions[i];
    mesh.triangles.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (size_t i = 0; i < faces.size(); ++i)
        for (int k = 0; k < 3; ++k)
            mesh.triangles(static_cast<Eigen::Index>(i), k) = faces[i][k];

    if (!vertex_vt.empty()) {
        vertex_vt.resize(positions.size(), -1);
        mesh.uv.resize(mesh.vertices.rows(), 2);
        for (size_t v = 0; v < positions.size(); ++v) {
            if (vertex_vt[v] == -1)
                throw std::runtime_error(path + ": vertex " + std::to_string(v + 1) +
                                         " has no texture coordinate but the mesh is textured");
            mesh.uv.row(static_cast<Eigen::Index>(v)) = texcoords[vertex_vt[v]];
        }
    }
    return mesh;
}

void save_obj(const TriMesh& mesh, const std::string& path)
{
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f)
        throw std::runtime_error("save_obj: cannot open " + path);
    const bool textured = mesh.has_uv();
    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v)
        std::fprintf(f, "v %.17g %.17g %.17g\n", mesh.vertices(v, 0), mesh.vertices(v, 1),
                     mesh.vertices(v, 2));
    if (textured)
        for (Eigen::Index v = 0; v < mesh.uv.rows(); ++v)
            std::fprintf(f, "vt %.17g %.17g\n", mesh.uv(v, 0), mesh.uv(v, 1));
    for (Eigen::Index t = 0; t < mesh.triangles.rows(); ++t) {
        const int a = mesh.triangles(t, 0) + 1, b = mesh.triangles(t, 1) + 1,
                  c = mesh.triangles(t, 2) + 1;
        if (textured)
            std::fprintf(f, "f %d/%d %d/%d %d/%d\n", a, a, b, b, c, c);
        else
            std::fprintf(f, "f %d %d %d\n", a, b, c);
    }
    std::fclose(f);
}

} // namespace facefit
