from mesh.bvh import ClosestPoints, TriangleBVH, brute_force_closest
from mesh.io import PlyData, load_mesh, read_ply, save_mesh
from mesh.mesh import (
    SurfacePoint,
    TriangleMesh,
    VertexNormalField,
    boundary_mask,
    boundary_vertices,
    closest_point,
    closest_points,
    excise,
    on_boundary,
    tangent_frame,
    tangent_frames,
    triangle_normals,
    vertex_normals,
)

__all__ = [
    "ClosestPoints",
    "TriangleBVH",
    "brute_force_closest",
    "PlyData",
    "load_mesh",
    "read_ply",
    "save_mesh",
    "SurfacePoint",
    "TriangleMesh",
    "VertexNormalField",
    "boundary_mask",
    "boundary_vertices",
    "closest_point",
    "closest_points",
    "excise",
    "on_boundary",
    "tangent_frame",
    "tangent_frames",
    "triangle_normals",
    "vertex_normals",
]
