#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cstdint>
#include <stdexcept>

namespace facefit {

using real = double;

using Vec2 = Eigen::Matrix<real, 2, 1>;
using Vec3 = Eigen::Matrix<real, 3, 1>;
using Mat3 = Eigen::Matrix<real, 3, 3>;
using VecX = Eigen::Matrix<real, Eigen::Dynamic, 1>;
using MatX = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic>;

// One row per vertex / landmark.
using Points3 = Eigen::Matrix<real, Eigen::Dynamic, 3>;
using Points2 = Eigen::Matrix<real, Eigen::Dynamic, 2>;
using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3>;

/**
 * Dense row-major scalar grid. Backs UV maps (correction/albedo/attention),
 * input images and render buffers alike.
 *
 * Pixel (x, y) is column x of row y, with y = 0 the top row; channels are
 * interleaved. Values are plain doubles with no colour-space handling: image
 * files are mapped linearly to [0, 1] on load and back on save.
 */
struct Grid {
    int width = 0;
    int height = 0;
    int channels = 0;
    VecX data; ///< size width * height * channels, layout (y * width + x) * channels + c

    Grid() = default;
    Grid(int w, int h, int c)
        : width(w), height(h), channels(c), data(VecX::Zero(static_cast<Eigen::Index>(w) * h * c))
    {
        if (w < 0 || h < 0 || c < 0)
            throw std::invalid_argument("Grid: negative dimension");
    }

    bool empty() const { return data.size() == 0; }
    Eigen::Index size() const { return data.size(); }

    Eigen::Index index(int x, int y, int c) const
    {
        assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < channels);
        return (static_cast<Eigen::Index>(y) * width + x) * channels + c;
    }

    real& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    real at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    bool same_shape(const Grid& other) const
    {
        return width == other.width && height == other.height && channels == other.channels;
    }
};

} // namespace facefit
