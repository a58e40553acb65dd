#include "facefit/shading.hpp"

#include <stdexcept>
#include <string>

namespace facefit {

namespace {
// Real SH constants: 1/(2 sqrt(pi)), sqrt(3)/(2 sqrt(pi)),
// sqrt(15)/(2 sqrt(pi)), sqrt(5)/(4 sqrt(pi)), sqrt(15)/(4 sqrt(pi)).
constexpr real k0 = 0.28209479177387814;
constexpr real k1 = 0.4886025119029199;
constexpr real k2 = 1.0925484305920792;
constexpr real k3 = 0.31539156525252005;
constexpr real k4 = 0.5462742152960396;
} // namespace

Eigen::Matrix<real, 9, 1> sh_basis(const Vec3& n)
{
    const real x = n.x(), y = n.y(), z = n.z();
    Eigen::Matrix<real, 9, 1> b;
    b[0] = k0;
    b[1] = k1 * y;
    b[2] = k1 * z;
    b[3] = k1 * x;
    b[4] = k2 * x * y;
    b[5] = k2 * y * z;
    b[6] = k3 * (3 * z * z - 1);
    b[7] = k2 * x * z;
    b[8] = k4 * (x * x - y * y);
    return b;
}

Eigen::Matrix<real, 9, 3> sh_basis_jacobian(const Vec3& n)
{
    const real x = n.x(), y = n.y(), z = n.z();
    Eigen::Matrix<real, 9, 3> j = Eigen::Matrix<real, 9, 3>::Zero();
    j(1, 1) = k1;
    j(2, 2) = k1;
    j(3, 0) = k1;
    j(4, 0) = k2 * y;
    j(4, 1) = k2 * x;
    j(5, 1) = k2 * z;
    j(5, 2) = k2 * y;
    j(6, 2) = k3 * 6 * z;
    j(7, 0) = k2 * z;
    j(7, 2) = k2 * x;
    j(8, 0) = k4 * 2 * x;
    j(8, 1) = -k4 * 2 * y;
    return j;
}

Vec3 shade(const Vec3& albedo, const Vec3& n, const SHCoeffs& gamma)
{
    const Eigen::Matrix<real, 9, 1> b = sh_basis(n);
    return albedo.cwiseProduct(gamma * b);
}

void project(const Points3& points, const Camera& camera, Points2& pixels_out, VecX& depth_out)
{
    std::string bad;
    int bad_count = 0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        if (points(i, 2) <= camera.near_z) {
            if (bad_count < 8)
                bad += (bad.empty() ? "" : ", ") + std::to_string(i);
            ++bad_count;
        }
    }
    if (bad_count > 0)
        throw std::runtime_error("project: " + std::to_string(bad_count) +
                                 " point(s) at or behind the near plane (indices " + bad +
                                 (bad_count > 8 ? ", ..." : "") + ")");

    pixels_out.resize(points.rows(), 2);
    depth_out.resize(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const real z = points(i, 2);
        pixels_out(i, 0) = camera.focal * points(i, 0) / z + camera.cx;
        pixels_out(i, 1) = camera.focal * points(i, 1) / z + camera.cy;
        depth_out[i] = z;
    }
}

Points2 project_landmarks(const Points3& vertices, const std::vector<int>& landmark_indices,
                          const Camera& camera)
{
    Points3 selected(static_cast<Eigen::Index>(landmark_indices.size()), 3);
    for (size_t i = 0; i < landmark_indices.size(); ++i) {
        const int v = landmark_indices[i];
        if (v < 0 || v >= vertices.rows())
            throw std::invalid_argument("project_landmarks: landmark index " +
                                        std::to_string(v) + " out of range");
        selected.row(static_cast<Eigen::Index>(i)) = vertices.row(v);
    }
    Points2 px;
    VecX depth;
    project(selected, camera, px, depth);
    return px;
}

Points3 project_backward(const Points3& points, const Camera& camera, const Points2& d_pixels)
{
    Points3 d_points = Points3::Zero(points.rows(), 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const real z = points(i, 2);
        const real gu = d_pixels(i, 0), gv = d_pixels(i, 1);
        d_points(i, 0) = gu * camera.focal / z;
        d_points(i, 1) = gv * camera.focal / z;
        d_points(i, 2) = -camera.focal * (gu * points(i, 0) + gv * points(i, 1)) / (z * z);
    }
    return d_points;
}

} // namespace facefit
