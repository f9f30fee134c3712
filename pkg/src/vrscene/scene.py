"""Scene data model, the .scene.json file format, validation and stats.

A scene is a flat list of nodes with world transforms (no hierarchy),
plus id-keyed mesh and material tables.  Scenes are immutable after
load and every operation here is a pure function.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    AABB,
    Transform,
    aabb_from_points,
    transform_aabb,
    UNIT_TOL,
)


class SceneError(Exception):
    pass


class SceneFormatError(SceneError):
    """Raised for syntax or schema problems in a scene file."""


class SceneValidationError(SceneError):
    """Raised when a parsed scene breaks an invariant."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class MeshAsset:
    id: str
    positions: np.ndarray  # (N, 3) float, local frame
    triangles: np.ndarray  # (M, 3) int
    local_bounds: AABB

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @property
    def vertex_count(self) -> int:
        return len(self.positions)


def make_mesh(mesh_id: str, positions, triangles) -> MeshAsset:
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(positions) == 0:
        bounds = AABB(np.zeros(3), np.zeros(3))
    else:
        bounds = aabb_from_points(positions)
    return MeshAsset(mesh_id, positions, triangles, bounds)


@dataclass(frozen=True)
class MaterialRef:
    id: str
    name: str
    opaque: bool = True


@dataclass(frozen=True)
class LODLevel:
    mesh_id: str
    threshold: float  # fraction of viewport height in [0, 1)


@dataclass(frozen=True)
class LODGroup:
    levels: tuple  # of LODLevel, thresholds strictly decreasing
    cull_below: float = 0.0


@dataclass(frozen=True)
class SceneNode:
    id: str
    name: str
    transform: Transform
    mesh_id: str | None = None
    material_id: str | None = None
    lod: LODGroup | None = None
    is_static: bool = False
    is_occluder: bool = False

    @property
    def has_geometry(self) -> bool:
        return self.mesh_id is not None or self.lod is not None


@dataclass(frozen=True)
class Scene:
    frame_id: str
    meshes: dict = field(default_factory=dict)
    materials: dict = field(default_factory=dict)
    nodes: tuple = ()

    def geometry_nodes(self):
        return [n for n in self.nodes if n.has_geometry]

    def node_mesh(self, node: SceneNode, level: int = 0) -> MeshAsset:
        """The mesh a node renders; LOD nodes default to their finest level."""
        if node.lod is not None:
            return self.meshes[node.lod.levels[level].mesh_id]
        return self.meshes[node.mesh_id]

    def node_world_bounds(self, node: SceneNode) -> AABB:
        return transform_aabb(self.node_mesh(node).local_bounds, node.transform)


@dataclass(frozen=True)
class SceneStats:
    node_count: int
    mesh_count: int
    material_count: int
    triangle_count: int
    naive_drawcalls: int


# ---------------------------------------------------------------------------
# parsing


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SceneFormatError(f"{where}: missing required field '{key}'")
    return obj[key]


def _floats(value, count: int, where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (count,):
        raise SceneFormatError(f"{where}: expected {count} numbers")
    return arr


def load_scene(data: bytes) -> Scene:
    """Parse a .scene.json document; strict on required fields.

    Unknown keys are ignored so the format can grow; missing required
    keys, dangling references and invariant violations all raise.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise SceneFormatError(f"scene file is not UTF-8: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SceneFormatError(
            f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise SceneFormatError("top level must be an object")

    frame_id = _require(doc, "frame_id", "scene")

    materials = {}
    for i, m in enumerate(doc.get("materials", [])):
        mid = _require(m, "id", f"materials[{i}]")
        if mid in materials:
            raise SceneValidationError([f"material '{mid}': duplicate id"])
        materials[mid] = MaterialRef(mid, _require(m, "name", f"material '{mid}'"),
                                     bool(m.get("opaque", True)))

    meshes = {}
    for i, m in enumerate(doc.get("meshes", [])):
        mid = _require(m, "id", f"meshes[{i}]")
        if mid in meshes:
            raise SceneValidationError([f"mesh '{mid}': duplicate id"])
        pos = np.asarray(_require(m, "positions", f"mesh '{mid}'"), dtype=float)
        tri = np.asarray(_require(m, "triangles", f"mesh '{mid}'"), dtype=np.int64)
        if pos.size % 3 != 0:
            raise SceneFormatError(f"mesh '{mid}': positions length not a multiple of 3")
        if tri.size % 3 != 0:
            raise SceneFormatError(f"mesh '{mid}': triangles length not a multiple of 3")
        meshes[mid] = make_mesh(mid, pos.reshape(-1, 3), tri.reshape(-1, 3))

    nodes = []
    seen = set()
    for i, n in enumerate(doc.get("nodes", [])):
        nid = _require(n, "id", f"nodes[{i}]")
        if nid in seen:
            raise SceneValidationError([f"node '{nid}': duplicate id"])
        seen.add(nid)
        where = f"node '{nid}'"
        transform = Transform(
            _floats(_require(n, "translation", where), 3, where),
            _floats(_require(n, "rotation", where), 4, where),
            _floats(_require(n, "scale", where), 3, where),
        )
        lod = None
        if n.get("lod") is not None:
            raw = n["lod"]
            levels = tuple(
                LODLevel(_require(lv, "mesh", f"{where} lod"),
                         float(_require(lv, "threshold", f"{where} lod")))
                for lv in _require(raw, "levels", f"{where} lod")
            )
            if not levels:
                raise SceneFormatError(f"{where}: lod group has no levels")
            lod = LODGroup(levels, float(raw.get("cull_below", 0.0)))
        nodes.append(SceneNode(
            id=nid,
            name=n.get("name", nid),
            transform=transform,
            mesh_id=n.get("mesh"),
            material_id=n.get("material"),
            lod=lod,
            is_static=bool(n.get("static", False)),
            is_occluder=bool(n.get("occluder", False)),
        ))

    scene = Scene(frame_id=frame_id, meshes=meshes, materials=materials,
                  nodes=tuple(nodes))
    violations = validate_scene(scene)
    if violations:
        raise SceneValidationError(violations)
    return scene


def save_scene(scene: Scene) -> bytes:
    """Serialize deterministically: collections sorted by id."""
    doc = {
        "frame_id": scene.frame_id,
        "materials": [
            {"id": m.id, "name": m.name, "opaque": m.opaque}
            for m in sorted(scene.materials.values(), key=lambda m: m.id)
        ],
        "meshes": [
            {
                "id": m.id,
                "positions": [float(v) for v in m.positions.ravel()],
                "triangles": [int(v) for v in m.triangles.ravel()],
            }
            for m in sorted(scene.meshes.values(), key=lambda m: m.id)
        ],
        "nodes": [_node_doc(n) for n in sorted(scene.nodes, key=lambda n: n.id)],
    }
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


def _node_doc(n: SceneNode) -> dict:
    doc = {
        "id": n.id,
        "name": n.name,
        "translation": [float(v) for v in n.transform.translation],
        "rotation": [float(v) for v in n.transform.rotation],
        "scale": [float(v) for v in n.transform.scale],
        "static": n.is_static,
        "occluder": n.is_occluder,
    }
    if n.mesh_id is not None:
        doc["mesh"] = n.mesh_id
    if n.material_id is not None:
        doc["material"] = n.material_id
    if n.lod is not None:
        doc["lod"] = {
            "levels": [{"mesh": lv.mesh_id, "threshold": lv.threshold}
                       for lv in n.lod.levels],
            "cull_below": n.lod.cull_below,
        }
    return doc


# ---------------------------------------------------------------------------
# validation


def validate_scene(scene: Scene) -> list:
    """All invariant violations as human-readable strings; [] iff valid."""
    out = []
    if not scene.frame_id:
        out.append("scene: frame_id must be nonempty")

    for mesh in scene.meshes.values():
        if mesh.positions.size and not np.all(np.isfinite(mesh.positions)):
            out.append(f"mesh '{mesh.id}': non-finite vertex position")
        if mesh.triangles.size:
            if mesh.triangles.min() < 0 or mesh.triangles.max() >= len(mesh.positions):
                out.append(f"mesh '{mesh.id}': triangle index out of range")

    for node in scene.nodes:
        t = node.transform
        if not (np.all(np.isfinite(t.translation)) and np.all(np.isfinite(t.rotation))
                and np.all(np.isfinite(t.scale))):
            out.append(f"node '{node.id}': non-finite transform")
            continue
        if np.any(t.scale <= 0.0):
            out.append(f"node '{node.id}': scale must be > 0")
        if abs(np.linalg.norm(t.rotation) - 1.0) > UNIT_TOL:
            out.append(f"node '{node.id}': rotation must be a unit quaternion")
        if node.mesh_id is not None and node.mesh_id not in scene.meshes:
            out.append(f"node '{node.id}': unknown mesh '{node.mesh_id}'")
        if node.material_id is not None and node.material_id not in scene.materials:
            out.append(f"node '{node.id}': unknown material '{node.material_id}'")
        if node.lod is not None and node.mesh_id is not None:
            out.append(f"node '{node.id}': lod group and direct mesh are exclusive")
        if node.is_occluder and not node.is_static:
            out.append(f"node '{node.id}': occluder must be static")
        if node.lod is not None:
            thresholds = [lv.threshold for lv in node.lod.levels]
            for lv in node.lod.levels:
                if lv.mesh_id not in scene.meshes:
                    out.append(f"node '{node.id}': unknown lod mesh '{lv.mesh_id}'")
            if any(b >= a for a, b in zip(thresholds, thresholds[1:])):
                out.append(f"node '{node.id}': lod thresholds must strictly decrease")
            if not 0.0 <= node.lod.cull_below <= thresholds[-1]:
                out.append(f"node '{node.id}': cull_below out of range")
    return out


# ---------------------------------------------------------------------------
# stats


def scene_stats(scene: Scene) -> SceneStats:
    """Whole-scene tallies; LOD nodes are counted at their finest level."""
    triangles = 0
    drawing = 0
    for node in scene.geometry_nodes():
        triangles += scene.node_mesh(node).triangle_count
        drawing += 1
    return SceneStats(
        node_count=len(scene.nodes),
        mesh_count=len(scene.meshes),
        material_count=len(scene.materials),
        triangle_count=triangles,
        naive_drawcalls=drawing,
    )


def world_bounds(scene: Scene) -> AABB:
    nodes = scene.geometry_nodes()
    if not nodes:
        raise SceneError("world_bounds of a scene with no geometry")
    bounds = scene.node_world_bounds(nodes[0])
    for node in nodes[1:]:
        bounds = bounds.union(scene.node_world_bounds(node))
    return bounds


def scene_fingerprint(scene: Scene) -> str:
    """Content hash of the canonical serialized form."""
    return hashlib.sha256(save_scene(scene)).hexdigest()


def scenes_equal(a: Scene, b: Scene) -> bool:
    """Structural equality, insensitive to node/table ordering."""
    return save_scene(a) == save_scene(b)
