#pragma once

#include <string>
#include <vector>

#include "facefit/types.hpp"

namespace facefit {

/**
 * Loads a PNG into a float grid in [0, 1]. Gray, gray+alpha, RGB, RGBA and
 * palette images are accepted; 16-bit samples keep their full precision.
 * Alpha channels are preserved (2 or 4 output channels). Throws
 * std::runtime_error with the path on I/O or decode failure.
 */
Grid load_png(const std::string& path);

/**
 * Saves a 1- or 3-channel grid as an 8-bit PNG. Values are clamped to
 * [0, 1] and quantized with rounding; the file is written atomically enough
 * for single-process use (written in one libpng pass).
 */
void save_png8(const std::string& path, const Grid& image);

/// save_png8 with 16-bit samples, for maps whose precision matters (albedo).
void save_png16(const std::string& path, const Grid& image);

/**
 * Loads an indexed (palette) PNG as raw per-pixel palette indices, along with
 * the palette size. Used for parse-map class labels, where the index is the
 * class id. Throws when the PNG is not palette-typed.
 */
void load_png_indices(const std::string& path, std::vector<int>& indices_out, int& width_out,
                      int& height_out, int& palette_size_out);

/**
 * Saves per-pixel class indices as an indexed PNG with a deterministic
 * palette (class 0 = black, then evenly stepped hues). indices must lie in
 * [0, palette_size) with palette_size <= 256.
 */
void save_png_indexed(const std::string& path, const std::vector<int>& indices, int width,
                      int height, int palette_size);

} // namespace facefit
