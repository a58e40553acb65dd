#include "facefit/mesh.hpp"
#include "facefit/obj_io.hpp"
#include "facefit/rng.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace facefit;

namespace {

TriMesh two_triangle_patch()
{
    TriMesh mesh;
    mesh.vertices.resize(4, 3);
    mesh.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1;
    mesh.triangles.resize(2, 3);
    mesh.triangles << 0, 1, 2, 1, 3, 2;
    return mesh;
}

Points3 random_points(Rng& rng, int n, real scale)
{
    Points3 p(n, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i)
        p.data()[i] = rng.uniform(-scale, scale);
    return p;
}

/// Independent bilinear sampler with the same texel-centre convention.
real sample_oracle(const Grid& map, real u, real v, int c)
{
    const real sx = u * map.width - real(0.5);
    const real sy = v * map.height - real(0.5);
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const real fx = sx - x0, fy = sy - y0;
    auto tap = [&](int x, int y) {
        x = std::clamp(x, 0, map.width - 1);
        y = std::clamp(y, 0, map.height - 1);
        return map.at(x, y, c);
    };
    return (1 - fx) * (1 - fy) * tap(x0, y0) + fx * (1 - fy) * tap(x0 + 1, y0) +
           (1 - fx) * fy * tap(x0, y0 + 1) + fx * fy * tap(x0 + 1, y0 + 1);
}

Grid random_map(Rng& rng, int w, int h, int c)
{
    Grid g;
    g.width = w;
    g.height = h;
    g.channels = c;
    g.data.resize(static_cast<Eigen::Index>(w) * h * c);
    for (Eigen::Index i = 0; i < g.data.size(); ++i)
        g.data[i] = rng.uniform(-1, 1);
    return g;
}

} // namespace

TEST_CASE("vertex normals on a flat patch point along -z for -z winding")
{
    TriMesh mesh;
    mesh.vertices.resize(4, 3);
    mesh.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0;
    mesh.triangles.resize(2, 3);
    mesh.triangles << 0, 3, 1, 0, 2, 3; // wound so cross products face -z
    const Points3 normals = vertex_normals(mesh.vertices, mesh.triangles);
    for (Eigen::Index v = 0; v < 4; ++v) {
        CHECK(normals(v, 2) == doctest::Approx(-1).epsilon(1e-12));
        CHECK(normals.row(v).norm() == doctest::Approx(1).epsilon(1e-12));
    }
}

TEST_CASE("vertex normals are area-weighted")
{
    // Vertex 0 shared by a big xy triangle (+z cross) and a small xz one
    // (-y cross); the accumulated direction follows the area weights.
    TriMesh mesh;
    mesh.vertices.resize(5, 3);
    mesh.vertices << 0, 0, 0, 2, 0, 0, 0, 2, 0, 0.5, 0, 0, 0, 0, 0.5;
    mesh.triangles.resize(2, 3);
    mesh.triangles << 0, 1, 2, 0, 3, 4;
    const Points3 normals = vertex_normals(mesh.vertices, mesh.triangles);
    const Vec3 expected = (Vec3(0, 0, 4) + Vec3(0, -0.25, 0)).normalized();
    CHECK((normals.row(0).transpose() - expected).norm() < 1e-12);
}

TEST_CASE("isolated and degenerate vertices keep zero normals")
{
    TriMesh mesh;
    mesh.vertices.resize(4, 3);
    mesh.vertices << 0, 0, 0, 1, 0, 0, 2, 0, 0, 5, 5, 5; // colinear triangle + isolated vertex
    mesh.triangles.resize(1, 3);
    mesh.triangles << 0, 1, 2;
    const Points3 normals = vertex_normals(mesh.vertices, mesh.triangles);
    CHECK(normals.row(0).norm() == 0);
    CHECK(normals.row(3).norm() == 0);
}

TEST_CASE("vertex_normals_backward matches central finite differences")
{
    Rng rng(7);
    TriMesh mesh = two_triangle_patch();
    mesh.vertices += random_points(rng, 4, 0.05);
    Points3 upstream = random_points(rng, 4, 1);

    const Points3 analytic = vertex_normals_backward(mesh.vertices, mesh.triangles, upstream);
    const real h = 1e-6;
    for (Eigen::Index v = 0; v < 4; ++v)
        for (int k = 0; k < 3; ++k) {
            Points3 plus = mesh.vertices, minus = mesh.vertices;
            plus(v, k) += h;
            minus(v, k) -= h;
            const real fd = ((vertex_normals(plus, mesh.triangles).array() * upstream.array()).sum() -
                             (vertex_normals(minus, mesh.triangles).array() * upstream.array()).sum()) /
                            (2 * h);
            CHECK(analytic(v, k) == doctest::Approx(fd).epsilon(1e-5));
        }
}

TEST_CASE("uv_sample matches an independent bilinear oracle")
{
    Rng rng(11);
    const Grid map = random_map(rng, 7, 5, 3);
    Points2 uv(40, 2);
    for (Eigen::Index i = 0; i < uv.rows(); ++i)
        uv.row(i) << rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2); // includes clamped range
    const MatX sampled = uv_sample(map, uv);
    REQUIRE(sampled.rows() == uv.rows());
    REQUIRE(sampled.cols() == 3);
    for (Eigen::Index i = 0; i < uv.rows(); ++i)
        for (int c = 0; c < 3; ++c)
            CHECK(sampled(i, c) == doctest::Approx(sample_oracle(map, uv(i, 0), uv(i, 1), c))
                                       .epsilon(1e-12));
}

TEST_CASE("uv_sample reproduces constants exactly")
{
    Grid map;
    map.width = map.height = 4;
    map.channels = 1;
    map.data = VecX::Constant(16, 0.625);
    Points2 uv(3, 2);
    uv << 0.1, 0.9, 0.5, 0.5, 0.99, 0.01;
    const MatX sampled = uv_sample(map, uv);
    for (Eigen::Index i = 0; i < 3; ++i)
        CHECK(sampled(i, 0) == 0.625);
}

TEST_CASE("uv_splat is the exact adjoint of uv_sample")
{
    Rng rng(13);
    const Grid map = random_map(rng, 6, 6, 2);
    Points2 uv(25, 2);
    for (Eigen::Index i = 0; i < uv.rows(); ++i)
        uv.row(i) << rng.uniform(0, 1), rng.uniform(0, 1);
    MatX values(25, 2);
    for (Eigen::Index i = 0; i < values.size(); ++i)
        values.data()[i] = rng.uniform(-1, 1);

    Grid accum = map;
    accum.data.setZero();
    uv_splat(uv, values, accum);

    const real lhs = (uv_sample(map, uv).array() * values.array()).sum();
    const real rhs = map.data.dot(accum.data);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("uv_sample_backward_uv matches finite differences between texel centres")
{
    Rng rng(17);
    const Grid map = random_map(rng, 8, 8, 3);
    // Positions away from texel-centre lines, where bilinear kinks live.
    Points2 uv(10, 2);
    for (Eigen::Index i = 0; i < uv.rows(); ++i) {
        const real u = (rng.uniform_int(0, 6) + 0.5 + rng.uniform(0.15, 0.85)) / 8;
        const real v = (rng.uniform_int(0, 6) + 0.5 + rng.uniform(0.15, 0.85)) / 8;
        uv.row(i) << u, v;
    }
    MatX upstream(10, 3);
    for (Eigen::Index i = 0; i < upstream.size(); ++i)
        upstream.data()[i] = rng.uniform(-1, 1);

    const Points2 analytic = uv_sample_backward_uv(map, uv, upstream);
    const real h = 1e-7;
    for (Eigen::Index i = 0; i < uv.rows(); ++i)
        for (int k = 0; k < 2; ++k) {
            Points2 plus = uv, minus = uv;
            plus(i, k) += h;
            minus(i, k) -= h;
            const real fd = ((uv_sample(map, plus).row(i) - uv_sample(map, minus).row(i)).array() *
                             upstream.row(i).array())
                                .sum() /
                            (2 * h);
            CHECK(analytic(i, k) == doctest::Approx(fd).epsilon(1e-5));
        }
}

TEST_CASE("laplacian_adjacency collects sorted unique one-rings")
{
    const TriMesh mesh = two_triangle_patch();
    const auto adj = laplacian_adjacency(mesh.triangles, 4);
    REQUIRE(adj.size() == 4);
    CHECK(adj[0] == std::vector<int>{1, 2});
    CHECK(adj[1] == std::vector<int>{0, 2, 3});
    CHECK(adj[2] == std::vector<int>{0, 1, 3});
    CHECK(adj[3] == std::vector<int>{1, 2});
}

TEST_CASE("deformation gradients: identity, translation and uniform scale")
{
    Rng rng(23);
    TriMesh mesh = two_triangle_patch();
    mesh.vertices += random_points(rng, 4, 0.1);

    const auto identity = deformation_gradients(mesh.vertices, mesh.vertices, mesh.triangles);
    for (const Mat3& g : identity)
        CHECK((g - Mat3::Identity()).norm() < 1e-12);

    Points3 shifted = mesh.vertices;
    shifted.rowwise() += Eigen::RowVector3d(3, -2, 7);
    const auto translated = deformation_gradients(mesh.vertices, shifted, mesh.triangles);
    for (const Mat3& g : translated)
        CHECK((g - Mat3::Identity()).norm() < 1e-10);

    const real s = 1.7;
    const auto scaled = deformation_gradients(mesh.vertices, (s * mesh.vertices).eval(),
                                              mesh.triangles);
    for (const Mat3& g : scaled)
        CHECK((g - s * Mat3::Identity()).norm() < 1e-10);
}

TEST_CASE("deformation gradients recover a rigid rotation")
{
    Rng rng(29);
    TriMesh mesh = two_triangle_patch();
    mesh.vertices += random_points(rng, 4, 0.1);

    const Mat3 rot = Eigen::AngleAxisd(0.8, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    const Points3 rotated = mesh.vertices * rot.transpose();
    const auto grads = deformation_gradients(mesh.vertices, rotated, mesh.triangles);
    for (const Mat3& g : grads)
        CHECK((g - rot).norm() < 1e-9);
}

TEST_CASE("deformation gradients reject degenerate reference triangles")
{
    TriMesh mesh;
    mesh.vertices.resize(3, 3);
    mesh.vertices << 0, 0, 0, 1, 0, 0, 2, 0, 0; // colinear
    mesh.triangles.resize(1, 3);
    mesh.triangles << 0, 1, 2;
    CHECK_THROWS_AS(deformation_gradients(mesh.vertices, mesh.vertices, mesh.triangles),
                    std::runtime_error);
}

TEST_CASE("triangle_frame third axis is the scaled normal")
{
    const Vec3 v0(0, 0, 0), v1(2, 0, 0), v2(0, 2, 0);
    const Mat3 frame = triangle_frame(v0, v1, v2);
    CHECK((frame.col(0) - Vec3(2, 0, 0)).norm() < 1e-15);
    CHECK((frame.col(1) - Vec3(0, 2, 0)).norm() < 1e-15);
    // c = (0,0,4), e3 = c / sqrt(|c|) = (0,0,2).
    CHECK((frame.col(2) - Vec3(0, 0, 2)).norm() < 1e-12);
}

TEST_CASE("obj round-trip preserves geometry, UVs and faces exactly")
{
    Rng rng(31);
    TriMesh mesh = two_triangle_patch();
    mesh.vertices += random_points(rng, 4, 0.123456789);
    mesh.uv.resize(4, 2);
    mesh.uv << 0.1, 0.2, 0.9, 0.25, 0.15, 0.85, 0.77, 0.66;

    const std::string path = (std::filesystem::temp_directory_path() / "facefit_roundtrip.obj").string();
    save_obj(mesh, path);
    const TriMesh loaded = load_obj(path);
    CHECK(loaded.vertices == mesh.vertices); // %.17g round-trips doubles
    CHECK(loaded.uv == mesh.uv);
    CHECK(loaded.triangles == mesh.triangles);
    std::filesystem::remove(path);
}

TEST_CASE("obj loader rejects schema violations with path and line context")
{
    const auto write_and_load = [](const char* body) {
        const std::string path =
            (std::filesystem::temp_directory_path() / "facefit_bad.obj").string();
        std::ofstream out(path);
        out << body;
        out.close();
        return path;
    };

    SUBCASE("conflicting per-vertex texture coordinates")
    {
        const std::string path = write_and_load("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\n"
                                                "vt 0 0\nvt 1 0\nvt 0 1\n"
                                                "f 1/1 2/2 3/3\nf 2/1 4/2 3/3\n");
        CHECK_THROWS_WITH_AS(load_obj(path), doctest::Contains("conflicting"),
                             std::runtime_error);
        std::filesystem::remove(path);
    }
    SUBCASE("quad faces are rejected")
    {
        const std::string path =
            write_and_load("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
        CHECK_THROWS_AS(load_obj(path), std::runtime_error);
        std::filesystem::remove(path);
    }
    SUBCASE("vertex indices are range-checked")
    {
        const std::string path = write_and_load("v 0 0 0\nv 1 0 0\nf 1 2 3\n");
        CHECK_THROWS_AS(load_obj(path), std::runtime_error);
        std::filesystem::remove(path);
    }
    SUBCASE("missing files carry the path in the message")
    {
        CHECK_THROWS_WITH_AS(load_obj("/nonexistent/mesh.obj"),
                             doctest::Contains("/nonexistent/mesh.obj"), std::runtime_error);
    }
}
