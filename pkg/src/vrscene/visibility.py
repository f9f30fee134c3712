"""Frustum culling, occlusion baking over a viewer-cell grid, and
runtime occlusion culling with a safe out-of-region fallback.

The bake is strictly conservative: an object leaves a cell's
potentially-visible set (PVS) only when a single box occluder blocks
every corner-to-corner segment between the cell and the object.  For a
convex occluder and convex object the set of viewpoints from which the
object is fully hidden is convex, so the 64 corner pairs are exact, not
sampled.  Dynamic nodes are never occlusion-culled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    AABB,
    CameraPose,
    Classification,
    Frustum,
    classify_aabbs_frustum,
    segments_intersect_aabb,
)
from .scene import Scene, scene_fingerprint


class StaleBakeError(Exception):
    """The bake's scene fingerprint does not match the live scene."""


@dataclass(frozen=True)
class BakeConfig:
    region: AABB  # volume the camera may occupy
    cell_size: float = 10.0
    min_occluder_volume: float = 0.0

    def __post_init__(self):
        if self.cell_size <= 0.0:
            raise ValueError("cell_size must be > 0")
        if self.min_occluder_volume < 0.0:
            raise ValueError("min_occluder_volume must be >= 0")


@dataclass(frozen=True)
class OcclusionBake:
    config: BakeConfig
    grid_dims: tuple  # (nx, ny, nz)
    cells: tuple  # per-cell PVS, each a frozenset of node ids
    occluder_ids: tuple
    scene_fingerprint: str

    def cell_bounds(self, index: int) -> AABB:
        nx, ny, nz = self.grid_dims
        ix = index % nx
        iy = (index // nx) % ny
        iz = index // (nx * ny)
        lo = self.config.region.lo
        hi = self.config.region.hi
        cs = self.config.cell_size
        cell_lo = lo + np.array([ix, iy, iz]) * cs
        cell_hi = np.minimum(cell_lo + cs, hi)
        return AABB(cell_lo, cell_hi)


@dataclass(frozen=True)
class VisibleSet:
    node_ids: frozenset
    camera_pose: CameraPose


def frustum_cull(scene: Scene, f: Frustum, pose: CameraPose) -> VisibleSet:
    """Keep every geometry-bearing node whose world AABB is not Outside."""
    nodes = scene.geometry_nodes()
    if not nodes:
        return VisibleSet(frozenset(), pose)
    los = np.array([scene.node_world_bounds(n).lo for n in nodes])
    his = np.array([scene.node_world_bounds(n).hi for n in nodes])
    cls = classify_aabbs_frustum(los, his, f)
    kept = frozenset(n.id for n, c in zip(nodes, cls) if c is not Classification.OUTSIDE)
    return VisibleSet(kept, pose)


def is_fully_occluded(cell: AABB, obj: AABB, occluder: AABB) -> bool:
    """True iff the occluder blocks all 64 cell-corner to object-corner
    segments.  Returns False when either box touches the occluder (the
    convexity argument needs them disjoint)."""
    if cell.intersects(occluder) or obj.intersects(occluder):
        return False
    p = np.repeat(cell.corners(), 8, axis=0)
    q = np.tile(obj.corners(), (8, 1))
    return bool(np.all(segments_intersect_aabb(p, q, occluder)))


def _grid_dims(region: AABB, cell_size: float) -> tuple:
    extent = region.hi - region.lo
    return tuple(max(1, int(math.ceil(e / cell_size - 1e-12))) for e in extent)


def bake_occlusion(scene: Scene, cfg: BakeConfig) -> OcclusionBake:
    """Precompute the PVS of every grid cell over cfg.region.

    Single-occluder test only (no fusion).  An occluder candidate must
    be flagged, meet the volume floor, differ from the target node and
    be disjoint from both the cell and the target's bounds.
    """
    if cfg.region.volume < 0.0 or np.any(cfg.region.hi < cfg.region.lo):
        raise ValueError("empty bake region")
    dims = _grid_dims(cfg.region, cfg.cell_size)
    nodes = scene.geometry_nodes()
    bounds = {n.id: scene.node_world_bounds(n) for n in nodes}

    occluders = [
        n for n in nodes
        if n.is_occluder and bounds[n.id].volume >= cfg.min_occluder_volume
    ]
    occ_boxes = [bounds[n.id] for n in occluders]
    occ_centers = np.array([b.center for b in occ_boxes]).reshape(-1, 3)

    static_targets = [n for n in nodes if n.is_static]
    dynamic_ids = [n.id for n in nodes if not n.is_static]
    tgt_centers = np.array([bounds[n.id].center for n in static_targets]).reshape(-1, 3)

    fingerprint = scene_fingerprint(scene)
    bake = OcclusionBake(
        config=cfg,
        grid_dims=dims,
        cells=(),
        occluder_ids=tuple(sorted(n.id for n in occluders)),
        scene_fingerprint=fingerprint,
    )

    cells = []
    n_cells = dims[0] * dims[1] * dims[2]
    for ci in range(n_cells):
        cell = bake.cell_bounds(ci)
        pvs = set(dynamic_ids)
        if not occluders or not static_targets:
            pvs.update(n.id for n in static_targets)
            cells.append(frozenset(pvs))
            continue
        # cheap necessary condition: the center-to-center segment must be
        # blocked before the exact 64-segment test is worth running
        candidates = _center_blocked(cell.center, tgt_centers, occ_boxes)
        for ti, node in enumerate(static_targets):
            hidden = False
            tb = bounds[node.id]
            for oi in np.nonzero(candidates[ti])[0]:
                occ = occluders[oi]
                if occ.id == node.id:
                    continue
                if is_fully_occluded(cell, tb, occ_boxes[oi]):
                    hidden = True
                    break
            if not hidden:
                pvs.add(node.id)
        cells.append(frozenset(pvs))

    return OcclusionBake(
        config=cfg,
        grid_dims=dims,
        cells=tuple(cells),
        occluder_ids=bake.occluder_ids,
        scene_fingerprint=fingerprint,
    )


def _center_blocked(cell_center, tgt_centers, occ_boxes) -> np.ndarray:
    """(targets, occluders) bool matrix of center-segment hits."""
    n_t = len(tgt_centers)
    n_o = len(occ_boxes)
    out = np.zeros((n_t, n_o), dtype=bool)
    p = np.broadcast_to(cell_center, (n_t, 3))
    for oi, box in enumerate(occ_boxes):
        out[:, oi] = segments_intersect_aabb(p, tgt_centers, box)
    return out


def cell_for_point(bake: OcclusionBake, p) -> int | None:
    """Flat cell index containing p, or None outside the region.

    Points exactly on an interior cell boundary resolve to the
    lower-index cell.
    """
    p = np.asarray(p, dtype=float)
    region = bake.config.region
    if np.any(p < region.lo) or np.any(p > region.hi):
        return None
    cs = bake.config.cell_size
    idx = []
    for axis in range(3):
        i = int(math.floor((p[axis] - region.lo[axis]) / cs))
        if i > 0 and region.lo[axis] + i * cs == p[axis]:
            i -= 1  # boundary resolves downward
        idx.append(min(i, bake.grid_dims[axis] - 1))
    nx, ny, _ = bake.grid_dims
    return (idx[2] * ny + idx[1]) * nx + idx[0]


def occlusion_cull(vs: VisibleSet, bake: OcclusionBake, scene: Scene,
                   verify: bool = True) -> VisibleSet:
    """Intersect the visible set with the camera cell's PVS.

    Cameras outside the baked region cull nothing: dropping geometry
    there would produce holes, so the fallback keeps everything.
    Callers that already checked the fingerprint once (per-frame loops)
    may pass verify=False to skip re-hashing the scene.
    """
    if verify and bake.scene_fingerprint != scene_fingerprint(scene):
        raise StaleBakeError("bake was computed for a different scene")
    cell = cell_for_point(bake, vs.camera_pose.position)
    if cell is None:
        return vs
    return VisibleSet(vs.node_ids & bake.cells[cell], vs.camera_pose)


# ---------------------------------------------------------------------------
# bake file


def save_bake(bake: OcclusionBake) -> bytes:
    doc = {
        "config": {
            "region": [list(map(float, bake.config.region.lo)),
                       list(map(float, bake.config.region.hi))],
            "cell_size": bake.config.cell_size,
            "min_occluder_volume": bake.config.min_occluder_volume,
        },
        "grid_dims": list(bake.grid_dims),
        "scene_fingerprint": bake.scene_fingerprint,
        "cells": [sorted(c) for c in bake.cells],
        "occluders": list(bake.occluder_ids),
    }
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


def load_bake(data: bytes) -> OcclusionBake:
    doc = json.loads(data.decode("utf-8"))
    cfg = BakeConfig(
        region=AABB(doc["config"]["region"][0], doc["config"]["region"][1]),
        cell_size=float(doc["config"]["cell_size"]),
        min_occluder_volume=float(doc["config"]["min_occluder_volume"]),
    )
    return OcclusionBake(
        config=cfg,
        grid_dims=tuple(doc["grid_dims"]),
        cells=tuple(frozenset(c) for c in doc["cells"]),
        occluder_ids=tuple(doc["occluders"]),
        scene_fingerprint=doc["scene_fingerprint"],
    )
