"""LOD selection by screen coverage and static batching into drawcall
and triangle tallies.

Batching computes counts only; no vertex buffers are merged.  The cap
of 65,535 vertices per batch reflects 16-bit index buffers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import AABB, CameraIntrinsics, CameraPose, screen_coverage
from .scene import LODGroup, Scene
from .visibility import VisibleSet

CULLED = None  # select_lod sentinel for "drop the node entirely"


@dataclass(frozen=True)
class DrawItem:
    node_id: str
    mesh_id: str
    material_id: str | None
    is_static: bool
    triangles: int
    vertices: int


@dataclass(frozen=True)
class BatchConfig:
    max_vertices_per_batch: int = 65535
    batch_dynamic: bool = False

    def __post_init__(self):
        if self.max_vertices_per_batch < 3:
            raise ValueError("max_vertices_per_batch must be >= 3")


@dataclass(frozen=True)
class DrawStats:
    drawcalls: int
    triangles: int
    batched_groups: int


def bounding_sphere_radius(box: AABB) -> float:
    return float(np.linalg.norm(box.half_extents))


def select_lod(group: LODGroup, node_bounds_world: AABB, pose: CameraPose,
               intr: CameraIntrinsics) -> int | None:
    """Pick the level whose coverage threshold the node still meets.

    Coverage uses the bounding sphere of the world AABB.  Equality at a
    threshold selects the finer level; coverage below cull_below
    returns CULLED (None).
    """
    dist = float(np.linalg.norm(node_bounds_world.center - pose.position))
    coverage = screen_coverage(bounding_sphere_radius(node_bounds_world), dist, intr)
    if coverage < group.cull_below:
        return CULLED
    for i, level in enumerate(group.levels):
        if coverage >= level.threshold:
            return i
    return len(group.levels) - 1  # below last threshold but above cull_below


def build_drawset(vs: VisibleSet, scene: Scene, pose: CameraPose,
                  intr: CameraIntrinsics) -> list:
    """One DrawItem per surviving node, LOD already resolved."""
    by_id = {n.id: n for n in scene.nodes}
    items = []
    for nid in sorted(vs.node_ids):
        node = by_id[nid]
        if node.lod is not None:
            level = select_lod(node.lod, scene.node_world_bounds(node), pose, intr)
            if level is CULLED:
                continue
            mesh = scene.meshes[node.lod.levels[level].mesh_id]
        else:
            mesh = scene.meshes[node.mesh_id]
        items.append(DrawItem(
            node_id=node.id,
            mesh_id=mesh.id,
            material_id=node.material_id,
            is_static=node.is_static,
            triangles=mesh.triangle_count,
            vertices=mesh.vertex_count,
        ))
    return items


def batch_drawset(items, cfg: BatchConfig = BatchConfig()) -> DrawStats:
    """Group static items by material; each group costs
    ceil(vertex total / cap) drawcalls.  Dynamic items cost one call
    each unless batch_dynamic groups them too."""
    groups = {}  # material id -> vertex total
    singles = 0
    triangles = 0
    for item in items:
        triangles += item.triangles
        if item.is_static or cfg.batch_dynamic:
            groups[item.material_id] = groups.get(item.material_id, 0) + item.vertices
        else:
            singles += 1
    calls = singles
    for total in groups.values():
        calls += math.ceil(total / cfg.max_vertices_per_batch)
    return DrawStats(drawcalls=calls, triangles=triangles, batched_groups=len(groups))
