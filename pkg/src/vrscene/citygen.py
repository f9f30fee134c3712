"""Deterministic synthetic-city generator.

Buildings are axis-aligned boxes with subdivided walls so each hits an
exact sampled triangle count; box geometry makes the occluder-AABB
solidity assumption hold exactly for occlusion baking.  Street
corridors between blocks stay empty to give the bake sight lines.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .geometry import Transform
from .pipeline import decimate_mesh
from .scene import LODGroup, LODLevel, MaterialRef, MeshAsset, Scene, SceneNode, make_mesh

MIN_TRIANGLES_PER_BUILDING = 12  # a box with unit wall subdivision

# LOD threshold ladders, coverage fractions of viewport height
_LOD_THRESHOLDS = {
    2: ((0.10, 0.02), 0.005),
    3: ((0.10, 0.03, 0.008), 0.002),
}


@dataclass(frozen=True)
class GenConfig:
    blocks_x: int = 4
    blocks_y: int = 4
    buildings_per_block: int = 4
    triangles_per_building: tuple = (2000, 4000)
    material_palette_size: int = 6
    lod_levels: int = 1
    street_width: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.blocks_x < 1 or self.blocks_y < 1 or self.buildings_per_block < 1:
            raise ValueError("grid dimensions must be >= 1")
        lo, hi = self.triangles_per_building
        if lo > hi:
            raise ValueError("triangles_per_building min > max")
        if lo < MIN_TRIANGLES_PER_BUILDING:
            raise ValueError(
                f"triangles_per_building min must be >= {MIN_TRIANGLES_PER_BUILDING}")
        if self.material_palette_size < 1:
            raise ValueError("material_palette_size must be >= 1")
        if self.lod_levels not in (1, 2, 3):
            raise ValueError("lod_levels must be 1, 2 or 3")
        if self.street_width <= 0.0:
            raise ValueError("street_width must be > 0")


@dataclass(frozen=True)
class BuildingPlan:
    index: int
    center: np.ndarray  # lot center on the ground plane
    width: float
    depth: float
    height: float
    triangles: int
    material: str


def city_plan(cfg: GenConfig) -> list:
    """The deterministic building layout generate_city realizes.

    Exposed separately so tests can audit totals without rebuilding the
    RNG sequence themselves.
    """
    rng = random.Random(cfg.seed)
    lot = 12.0
    per_side = math.ceil(math.sqrt(cfg.buildings_per_block))
    block = per_side * lot
    pitch = block + cfg.street_width

    plans = []
    index = 0
    for by in range(cfg.blocks_y):
        for bx in range(cfg.blocks_x):
            block_origin = np.array([bx * pitch, by * pitch, 0.0])
            for b in range(cfg.buildings_per_block):
                gx, gy = b % per_side, b // per_side
                lot_center = block_origin + np.array(
                    [(gx + 0.5) * lot, (gy + 0.5) * lot, 0.0])
                footprint = rng.uniform(0.55, 0.8) * lot  # margin keeps lots disjoint
                plans.append(BuildingPlan(
                    index=index,
                    center=lot_center,
                    width=footprint,
                    depth=rng.uniform(0.55, 0.8) * lot,
                    height=rng.uniform(8.0, 30.0),
                    triangles=rng.randint(*cfg.triangles_per_building),
                    material=f"mat{index % cfg.material_palette_size:02d}",
                ))
                index += 1
    return plans


def build_box_mesh(mesh_id: str, width: float, depth: float, height: float,
                   triangle_count: int) -> MeshAsset:
    """Closed box from z=0 to z=height with exactly triangle_count
    triangles (>= 12): walls subdivided vertically, then individual
    triangles midpoint-split until the target is reached."""
    if triangle_count < MIN_TRIANGLES_PER_BUILDING:
        raise ValueError("triangle_count must be >= 12")
    n = max(1, (triangle_count - 4) // 8)
    hw, hd = 0.5 * width, 0.5 * depth

    positions = []
    triangles = []

    def ring(z):
        base = len(positions)
        positions.extend([(-hw, -hd, z), (hw, -hd, z), (hw, hd, z), (-hw, hd, z)])
        return base

    rings = [ring(height * k / n) for k in range(n + 1)]
    for lower, upper in zip(rings, rings[1:]):
        for e in range(4):
            a, b = lower + e, lower + (e + 1) % 4
            c, d = upper + e, upper + (e + 1) % 4
            triangles.append((a, b, d))
            triangles.append((a, d, c))
    bottom, top = rings[0], rings[-1]
    triangles.append((bottom + 0, bottom + 2, bottom + 1))
    triangles.append((bottom + 0, bottom + 3, bottom + 2))
    triangles.append((top + 0, top + 1, top + 2))
    triangles.append((top + 0, top + 2, top + 3))

    positions = [list(p) for p in positions]
    deficit = triangle_count - len(triangles)
    cursor = 0
    while deficit > 0:
        a, b, c = triangles[cursor]
        mid = len(positions)
        pa, pb = positions[a], positions[b]
        positions.append([(pa[k] + pb[k]) / 2.0 for k in range(3)])
        triangles[cursor] = (a, mid, c)
        triangles.append((mid, b, c))
        cursor += 1
        deficit -= 1

    return make_mesh(mesh_id, np.array(positions), np.array(triangles))


def generate_city(cfg: GenConfig) -> Scene:
    """Grid of box buildings, all static occluders, deterministic from
    (cfg, seed); LOD chains come from grid decimation when enabled."""
    plans = city_plan(cfg)

    materials = {
        f"mat{i:02d}": MaterialRef(f"mat{i:02d}", f"palette-{i}")
        for i in range(cfg.material_palette_size)
    }
    meshes = {}
    nodes = []
    for plan in plans:
        bid = f"b{plan.index:04d}"
        level_ids = []
        base = build_box_mesh(f"m_{bid}_l0", plan.width, plan.depth, plan.height,
                              plan.triangles)
        meshes[base.id] = base
        level_ids.append(base.id)
        if cfg.lod_levels > 1:
            diag = math.sqrt(plan.width ** 2 + plan.depth ** 2 + plan.height ** 2)
            for level in range(1, cfg.lod_levels):
                coarse = decimate_mesh(base, diag / (8 >> level))
                coarse = MeshAsset(f"m_{bid}_l{level}", coarse.positions,
                                   coarse.triangles, coarse.local_bounds)
                meshes[coarse.id] = coarse
                level_ids.append(coarse.id)

        transform = Transform.from_translation(plan.center)
        if cfg.lod_levels == 1:
            mesh_id, lod = level_ids[0], None
        else:
            thresholds, cull_below = _LOD_THRESHOLDS[cfg.lod_levels]
            mesh_id = None
            lod = LODGroup(
                levels=tuple(LODLevel(mid, th)
                             for mid, th in zip(level_ids, thresholds)),
                cull_below=cull_below,
            )
        nodes.append(SceneNode(
            id=bid,
            name=f"building {plan.index}",
            transform=transform,
            mesh_id=mesh_id,
            material_id=plan.material,
            lod=lod,
            is_static=True,
            is_occluder=True,
        ))

    return Scene(frame_id="city", meshes=meshes, materials=materials,
                 nodes=tuple(nodes))
