"""Offline scene reduction and the staged optimization report.

The pipeline mirrors the three columns of the target report: original
scene, region-cropped scene, and the per-view optimized scene after
decimation, culling, LOD and batching.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .geometry import AABB, frustum_from_camera
from .reduction import BatchConfig, DrawItem, batch_drawset, build_drawset
from .scene import (
    MeshAsset,
    Scene,
    make_mesh,
    scene_fingerprint,
    scene_stats,
)
from .visibility import (
    BakeConfig,
    bake_occlusion,
    frustum_cull,
    occlusion_cull,
)

STAGE_ORIGINAL = "Original"
STAGE_REDUCED = "Reduced size"
STAGE_OPTIMIZED = "Optimized performance"


@dataclass(frozen=True)
class OptimizeConfig:
    section: AABB | None = None
    decimate_grid_size: float | None = None
    batch: BatchConfig = BatchConfig()
    reference_camera: tuple | None = None  # (CameraPose, CameraIntrinsics)

    def __post_init__(self):
        if self.decimate_grid_size is not None and self.decimate_grid_size <= 0.0:
            raise ValueError("decimate_grid_size must be > 0")


@dataclass(frozen=True)
class StageReport:
    stage_name: str
    polygons: int
    drawcalls: int
    estimated_fps: float | None = None


@dataclass(frozen=True)
class OptimizationReport:
    rows: tuple  # of StageReport, Original -> ... -> Optimized
    scene_fingerprints: tuple


def crop_to_section(scene: Scene, region: AABB) -> Scene:
    """Derived scene keeping exactly the nodes whose world bounds touch
    the region (closed test); unreferenced assets are dropped."""
    kept = tuple(
        n for n in scene.nodes
        if not n.has_geometry or scene.node_world_bounds(n).intersects(region)
    )
    kept = tuple(n for n in kept if n.has_geometry)
    mesh_ids = set()
    material_ids = set()
    for n in kept:
        if n.mesh_id is not None:
            mesh_ids.add(n.mesh_id)
        if n.lod is not None:
            mesh_ids.update(lv.mesh_id for lv in n.lod.levels)
        if n.material_id is not None:
            material_ids.add(n.material_id)
    return Scene(
        frame_id=scene.frame_id,
        meshes={mid: scene.meshes[mid] for mid in sorted(mesh_ids)},
        materials={mid: scene.materials[mid] for mid in sorted(material_ids)},
        nodes=kept,
    )


def decimate_mesh(mesh: MeshAsset, grid_size: float) -> MeshAsset:
    """Uniform-grid vertex clustering.

    Vertices are snapped to their grid cell and each cell collapses to
    the centroid of its members; triangles that lose a distinct vertex
    are dropped.  Deterministic: clusters ordered by first occurrence.
    """
    if grid_size <= 0.0:
        raise ValueError("grid_size must be > 0")
    if mesh.vertex_count == 0:
        return mesh
    cells = np.floor((mesh.positions - mesh.local_bounds.lo) / grid_size).astype(np.int64)
    _, first_index, inverse = np.unique(cells, axis=0, return_index=True,
                                        return_inverse=True)
    # renumber clusters by first occurrence so output ordering is stable
    order = np.argsort(first_index, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    cluster_of = rank[inverse]
    n_clusters = len(order)

    sums = np.zeros((n_clusters, 3))
    np.add.at(sums, cluster_of, mesh.positions)
    counts = np.bincount(cluster_of, minlength=n_clusters).astype(float)
    centroids = sums / counts[:, None]

    tris = cluster_of[mesh.triangles]
    distinct = ((tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2])
                & (tris[:, 0] != tris[:, 2]))
    return make_mesh(mesh.id, centroids, tris[distinct])


def _decimate_static_meshes(scene: Scene, grid_size: float) -> Scene:
    """Decimate every mesh referenced by a static node (LOD levels included)."""
    static_mesh_ids = set()
    for n in scene.nodes:
        if not n.is_static:
            continue
        if n.mesh_id is not None:
            static_mesh_ids.add(n.mesh_id)
        if n.lod is not None:
            static_mesh_ids.update(lv.mesh_id for lv in n.lod.levels)
    meshes = {
        mid: decimate_mesh(m, grid_size) if mid in static_mesh_ids else m
        for mid, m in scene.meshes.items()
    }
    return replace(scene, meshes=meshes)


def optimize_scene(scene: Scene, cfg: OptimizeConfig, cost_model=None):
    """Run the staged reduction and report each stage's budget numbers.

    Stage rows: Original (naive whole-scene stats), Reduced size (after
    the section crop, when configured), Optimized performance (after
    decimation, evaluated through culling/LOD/batching at the reference
    camera when one is configured, else batch-only).  Returns the final
    scene and the report.
    """
    rows = []
    prints = []

    stats = scene_stats(scene)
    rows.append(_stage_row(STAGE_ORIGINAL, stats.triangle_count,
                           stats.naive_drawcalls, cost_model))
    prints.append(scene_fingerprint(scene))

    current = scene
    if cfg.section is not None:
        current = crop_to_section(current, cfg.section)
        stats = scene_stats(current)
        rows.append(_stage_row(STAGE_REDUCED, stats.triangle_count,
                               stats.naive_drawcalls, cost_model))
        prints.append(scene_fingerprint(current))

    if cfg.decimate_grid_size is not None:
        current = _decimate_static_meshes(current, cfg.decimate_grid_size)
    polygons, drawcalls = _view_stats(current, cfg)
    rows.append(_stage_row(STAGE_OPTIMIZED, polygons, drawcalls, cost_model))
    prints.append(scene_fingerprint(current))

    return current, OptimizationReport(rows=tuple(rows),
                                       scene_fingerprints=tuple(prints))


def _stage_row(name, polygons, drawcalls, cost_model) -> StageReport:
    fps = None
    if cost_model is not None:
        secs = cost_model.estimate(drawcalls, polygons)
        fps = 1.0 / secs if secs > 0.0 else float("inf")
    return StageReport(name, polygons, drawcalls, fps)


def _view_stats(scene: Scene, cfg: OptimizeConfig):
    """Polygons/drawcalls after the per-view pipeline at the reference
    camera; without a camera: batch everything at full detail."""
    if not scene.geometry_nodes():
        return 0, 0
    if cfg.reference_camera is None:
        # view-independent: every node at full detail, batching only
        items = []
        for n in scene.geometry_nodes():
            mesh = scene.node_mesh(n)
            items.append(DrawItem(n.id, mesh.id, n.material_id, n.is_static,
                                  mesh.triangle_count, mesh.vertex_count))
        stats = batch_drawset(items, cfg.batch)
        return stats.triangles, stats.drawcalls
    pose, intr = cfg.reference_camera
    frustum = frustum_from_camera(pose, intr)
    vs = frustum_cull(scene, frustum, pose)
    # single-cell bake around the reference viewpoint
    cell = AABB(pose.position - 1.0, pose.position + 1.0)
    bake = bake_occlusion(scene, BakeConfig(region=cell, cell_size=2.0))
    vs = occlusion_cull(vs, bake, scene, verify=False)
    items = build_drawset(vs, scene, pose, intr)
    stats = batch_drawset(items, cfg.batch)
    return stats.triangles, stats.drawcalls


# ---------------------------------------------------------------------------
# report emission


def _format_cells(report: OptimizationReport):
    polys = ["%.1f" % (r.polygons / 1e6) for r in report.rows]
    calls = ["%d" % r.drawcalls for r in report.rows]
    fps = ["—" if r.estimated_fps is None else "%.1f" % r.estimated_fps
           for r in report.rows]
    return polys, calls, fps


def emit_report(report: OptimizationReport, fmt: str = "markdown") -> bytes:
    """Three-metric table, one column per stage; markdown or csv."""
    if len(report.rows) < 2:
        raise ValueError("report needs at least 2 stage rows")
    names = [r.stage_name for r in report.rows]
    polys, calls, fps = _format_cells(report)
    if fmt == "markdown":
        lines = [
            "| Metric | " + " | ".join(names) + " |",
            "| --- | " + " | ".join("---" for _ in names) + " |",
            "| Number of polygons [million] | " + " | ".join(polys) + " |",
            "| Number of drawcalls | " + " | ".join(calls) + " |",
            "| Frames per second [fps] | " + " | ".join(fps) + " |",
        ]
        return ("\n".join(lines) + "\n").encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric"] + names)
        writer.writerow(["polygons_million"] + polys)
        writer.writerow(["drawcalls"] + calls)
        writer.writerow(["fps"] + fps)
        return buf.getvalue().encode("utf-8")
    raise ValueError(f"unknown report format '{fmt}'")
