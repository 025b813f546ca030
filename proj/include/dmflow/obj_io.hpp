#pragma once

#include <string>

#include "dmflow/mesh.hpp"

namespace dmflow {

// Reads vertices and triangular faces; polygons are fan-triangulated, all
// other record types are ignored. Indices may be negative (relative) or carry
// /vt/vn suffixes, which are dropped.
StaticMesh load_obj(const std::string& path);

// Writes real vertices/faces only, 6 decimals, 1-based face indices.
void save_obj(const std::string& path, const Tensor& vertices,
              std::span<const std::array<uint32_t, 3>> faces, int64_t real_vertex_count,
              int64_t real_face_count);

// frame_0000.obj, frame_0001.obj, ... under dir.
void export_obj_sequence(const Tensor& frames, std::span<const std::array<uint32_t, 3>> faces,
                         int64_t real_vertex_count, int64_t real_face_count,
                         const std::string& dir);

} // namespace dmflow
