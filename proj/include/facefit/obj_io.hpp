#pragma once

#include "facefit/mesh.hpp"

#include <string>

namespace facefit {

/**
 * Loads an ASCII OBJ with `v`, `vt` and triangular `f` records (`f a b c` or
 * `f a/at b/bt c/ct`, 1-based indices). Texture coordinates are resolved to
 * one UV per vertex; a vertex referenced with two different `vt` indices is
 * an error (UV seams with duplicated texture vertices are not supported).
 * Throws std::runtime_error with the offending line number on malformed
 * input, out-of-range indices or non-triangular faces.
 */
TriMesh load_obj(const std::string& path);

/// Writes `v`, `vt` (when present) and `f` records with full double precision.
void save_obj(const TriMesh& mesh, const std::string& path);

} // namespace facefit
