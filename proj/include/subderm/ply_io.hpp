#pragma once

#include "subderm/scene_registration.hpp"
#include "subderm/types.hpp"

#include <string>

namespace subderm {

/// ASCII PLY, float x/y/z (+ nx/ny/nz), 6 significant digits per value.
void export_ply(const PointCloud& cloud, const std::string& path);

/// ASCII PLY with a face element (vertex_indices as uchar/int list).
void export_mesh_ply(const SurfaceMesh& mesh, const std::string& path);

/// Reads vertices (and normals if present) from an ASCII PLY. Faces are ignored.
PointCloud load_ply(const std::string& path);

}  // namespace subderm
