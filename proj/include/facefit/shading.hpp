#pragma once

#include "facefit/types.hpp"

#include <vector>

namespace facefit {

/**
 * Second-order spherical harmonics illumination, one 9-vector per colour
 * channel (rows R, G, B; columns follow the band order Y00, Y1-1, Y10, Y11,
 * Y2-2, Y2-1, Y20, Y21, Y22).
 */
using SHCoeffs = Eigen::Matrix<real, 3, 9>;

/// Real SH basis of orders 0..2 evaluated at a unit direction.
Eigen::Matrix<real, 9, 1> sh_basis(const Vec3& n);

/// Jacobian d sh_basis / d n (9 x 3), treating the basis as polynomials in n.
Eigen::Matrix<real, 9, 3> sh_basis_jacobian(const Vec3& n);

/// Lambertian radiance: per channel albedo_c * dot(gamma_c, sh_basis(n)).
Vec3 shade(const Vec3& albedo, const Vec3& n, const SHCoeffs& gamma);

/**
 * Pinhole camera. The optical axis is +z (visible points have z > near_z),
 * y points down so that v is the pixel row: u = focal * x / z + cx,
 * v = focal * y / z + cy. Distances share the mesh units (millimetres).
 */
struct Camera {
    real focal = 470.4;
    real cx = 112, cy = 112;
    int width = 224, height = 224;
    real near_z = 50, far_z = 5000;
};

/**
 * Projects camera-frame points to pixel coordinates and returns the per-point
 * depth (= z). Throws std::runtime_error listing the offending indices when
 * any point has z <= near_z.
 */
void project(const Points3& points, const Camera& camera, Points2& pixels_out, VecX& depth_out);

/// Convenience wrapper selecting landmark vertices before projection.
Points2 project_landmarks(const Points3& vertices, const std::vector<int>& landmark_indices,
                          const Camera& camera);

/// Pullback of project: dL/d(points) from dL/d(pixels) (depth output unused).
Points3 project_backward(const Points3& points, const Camera& camera, const Points2& d_pixels);

} // namespace facefit
