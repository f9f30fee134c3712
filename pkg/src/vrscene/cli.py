"""Command-line entry point: generate -> stats -> bake -> optimize ->
simulate -> report, plus the pub/sub bridge tools.

Exit codes: 0 success, 1 usage error, 2 validation/data error,
3 budget-check failure, 4 transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bridge as bridge_mod
from . import plots
from .citygen import GenConfig, generate_city
from .framesim import (
    Budget,
    check_budgets,
    fit_cost_model,
    load_cost_model,
    load_path,
    metrics_csv,
    pose_on_path,
    save_cost_model,
    simulate_path,
)
from .geometry import AABB, CameraIntrinsics, CameraPose
from .pipeline import OptimizeConfig, emit_report, optimize_scene
from .scene import (
    SceneError,
    load_scene,
    save_scene,
    scene_stats,
    world_bounds,
)
from .visibility import BakeConfig, StaleBakeError, bake_occlusion, load_bake, save_bake

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BUDGET = 3
EXIT_TRANSPORT = 4

log = logging.getLogger("vrscene")


def _setup_logging():
    level = os.environ.get("VRSCENE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_region(text: str) -> AABB:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 6:
        raise ValueError("region needs 6 comma-separated numbers x0,y0,z0,x1,y1,z1")
    return AABB(parts[:3], parts[3:])


def _parse_blocks(text: str):
    try:
        x, y = text.lower().split("x")
        return int(x), int(y)
    except ValueError:
        raise ValueError("blocks must look like 4x4") from None


def _parse_addr(text: str):
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _load_camera(path: str):
    doc = json.loads(Path(path).read_bytes().decode("utf-8"))
    intr = doc["intrinsics"]
    return (
        CameraPose(np.asarray(doc["position"], dtype=float),
                   np.asarray(doc["rotation"], dtype=float)),
        CameraIntrinsics(
            vertical_fov=float(intr["vertical_fov"]),
            aspect=float(intr["aspect"]),
            near=float(intr["near"]),
            far=float(intr["far"]),
            viewport_height=float(intr.get("viewport_height", 1080.0)),
        ),
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_scenegen(args) -> int:
    bx, by = _parse_blocks(args.blocks)
    tri_lo, tri_hi = (int(v) for v in args.triangles.split(":"))
    cfg = GenConfig(
        blocks_x=bx, blocks_y=by,
        buildings_per_block=args.buildings,
        triangles_per_building=(tri_lo, tri_hi),
        material_palette_size=args.materials,
        lod_levels=args.lod,
        street_width=args.street_width,
        seed=args.seed,
    )
    scene = generate_city(cfg)
    Path(args.out).write_bytes(save_scene(scene))
    stats = scene_stats(scene)
    print(f"wrote {args.out}: {stats.node_count} nodes, "
          f"{stats.triangle_count} triangles")
    return EXIT_OK


def _cmd_stats(args) -> int:
    scene = load_scene(Path(args.scene).read_bytes())
    stats = scene_stats(scene)
    print(f"nodes:           {stats.node_count}")
    print(f"meshes:          {stats.mesh_count}")
    print(f"materials:       {stats.material_count}")
    print(f"triangles:       {stats.triangle_count}")
    print(f"naive drawcalls: {stats.naive_drawcalls}")
    if scene.geometry_nodes():
        wb = world_bounds(scene)
        lo = ", ".join(f"{v:.2f}" for v in wb.lo)
        hi = ", ".join(f"{v:.2f}" for v in wb.hi)
        print(f"bounds: min ({lo}) max ({hi})")
    return EXIT_OK


def _cmd_bake(args) -> int:
    scene = load_scene(Path(args.scene).read_bytes())
    cfg = BakeConfig(region=_parse_region(args.region),
                     cell_size=args.cell_size,
                     min_occluder_volume=args.min_occluder_volume)
    bake = bake_occlusion(scene, cfg)
    Path(args.out).write_bytes(save_bake(bake))
    n_cells = len(bake.cells)
    avg = sum(len(c) for c in bake.cells) / max(1, n_cells)
    print(f"wrote {args.out}: {n_cells} cells, mean PVS size {avg:.1f}")
    return EXIT_OK


def _cmd_optimize(args) -> int:
    scene = load_scene(Path(args.scene).read_bytes())
    cm = load_cost_model(Path(args.cost_model).read_bytes()) if args.cost_model else None
    cfg = OptimizeConfig(
        section=_parse_region(args.section) if args.section else None,
        decimate_grid_size=args.decimate_grid,
        reference_camera=_load_camera(args.camera) if args.camera else None,
    )
    _, report = optimize_scene(scene, cfg, cm)
    out = Path(args.report)
    fmt = "csv" if out.suffix == ".csv" else "markdown"
    out.write_bytes(emit_report(report, fmt))
    plots.save_report_figure(report, out.with_suffix(".png"))
    for row in report.rows:
        fps = "-" if row.estimated_fps is None else f"{row.estimated_fps:.1f} fps"
        print(f"{row.stage_name}: {row.polygons} polygons, "
              f"{row.drawcalls} drawcalls, {fps}")
    print(f"wrote {out} and {out.with_suffix('.png')}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scene = load_scene(Path(args.scene).read_bytes())
    bake = load_bake(Path(args.bake).read_bytes()) if args.bake else None
    path = load_path(Path(args.path).read_bytes())
    cm = (load_cost_model(Path(args.cost_model).read_bytes())
          if args.cost_model else None)
    from .framesim import CostModel
    if cm is None:
        cm = CostModel(fixed_secs=1e-3, secs_per_drawcall=2e-5,
                       secs_per_triangle=2e-9)
        log.info("no cost model supplied; using a nominal desktop model")
    hz = args.hz or path.frame_hz or 90.0
    frames = simulate_path(scene, bake, path, cm, hz)

    budget_given = any(v is not None for v in
                       (args.budget_fps, args.budget_drawcalls, args.budget_polys))
    budget = Budget(
        min_fps=args.budget_fps if args.budget_fps is not None else 90.0,
        drawcall_range=(150, args.budget_drawcalls
                        if args.budget_drawcalls is not None else 175),
        polygon_range=(300_000, args.budget_polys
                       if args.budget_polys is not None else 1_000_000),
    )
    _, summary = check_budgets(frames, budget)

    out = Path(args.out)
    out.write_bytes(metrics_csv(frames))
    plots.save_metrics_figure(frames, budget, out.with_suffix(".png"))
    worst = frames[summary.worst_frame] if summary.worst_frame is not None else None
    print(f"simulated {len(frames)} frames at {hz:g} Hz; "
          f"{summary.violation_count} budget violations")
    if worst is not None:
        print(f"worst frame {worst.frame_index}: {worst.fps:.1f} fps, "
              f"{worst.drawcalls} drawcalls, {worst.triangles} triangles")
    print(f"wrote {out} and {out.with_suffix('.png')}")
    if budget_given and not summary.passed:
        return EXIT_BUDGET
    return EXIT_OK


def _cmd_fit_cost(args) -> int:
    import csv as csv_mod
    with open(args.samples, newline="") as fh:
        reader = csv_mod.DictReader(fh)
        samples = [(float(r["drawcalls"]), float(r["triangles"]),
                    float(r["frame_time_secs"])) for r in reader]
    result = fit_cost_model(samples)
    Path(args.out).write_bytes(save_cost_model(result.model))
    rms = float(np.sqrt(np.mean(result.residuals ** 2)))
    print(f"fit {len(samples)} samples, rms residual {rms:.3e} s"
          + (" (rank-deficient design)" if result.rank_deficient else ""))
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_bridge_serve(args) -> int:
    relay = bridge_mod.serve(_parse_addr(args.listen), start=False)
    print(f"relay listening on {relay.address[0]}:{relay.address[1]}")
    relay.serve_forever()
    return EXIT_OK


def _cmd_bridge_pub(args) -> int:
    path = load_path(Path(args.path).read_bytes())
    client = bridge_mod.BridgeClient(_parse_addr(args.addr))
    try:
        client.advertise(args.topic)
        t0 = path.waypoints[0][0]
        t1 = path.waypoints[-1][0]
        n = max(1, int((t1 - t0) * args.rate) + 1)
        dt = 1.0 / args.rate
        for i in range(n):
            t = t0 + i * dt
            pose = pose_on_path(path, t)
            ahead = pose_on_path(path, t + dt)
            vel = (ahead.position - pose.position) / dt
            client.publish(bridge_mod.VehicleStateMsg(
                topic=args.topic, seq=i, stamp_secs=time.monotonic(),
                frame_id="map", position=pose.position,
                orientation=pose.orientation, linear_vel=vel))
            time.sleep(dt)
        print(f"published {n} states on {args.topic}")
    finally:
        client.close()
    return EXIT_OK


def _cmd_bridge_sub(args) -> int:
    tf = None
    if args.transform:
        doc = json.loads(Path(args.transform).read_bytes().decode("utf-8"))
        tf = bridge_mod.FrameTransform(
            from_frame=doc["from_frame"], to_frame=doc["to_frame"],
            translation=doc["translation"], rotation=doc["rotation"])
    client = bridge_mod.BridgeClient(_parse_addr(args.addr))
    try:
        client.subscribe(args.topic)
        received = 0
        while args.max_messages is None or received < args.max_messages:
            frame = client.recv()
            if frame["op"] != "publish":
                continue
            state = bridge_mod.VehicleStateMsg.from_wire(frame)
            if tf is not None:
                state = bridge_mod.apply_frame_transform(state, tf)
            pos = state.position
            print(f"seq {state.seq} t {state.stamp_secs:.3f} [{state.frame_id}] "
                  f"pos ({pos[0]:.3f}, {pos[1]:.3f}, {pos[2]:.3f})")
            received += 1
    except KeyboardInterrupt:
        pass
    finally:
        client.close()
    return EXIT_OK


def _cmd_bridge_measure(args) -> int:
    stats = bridge_mod.measure_cycle(_parse_addr(args.addr), args.n,
                                     budget_ms=args.budget_ms)
    verdict = "pass" if stats.passed else "FAIL"
    print(f"{stats.count} cycles: p50 {stats.p50_ms:.3f} ms, "
          f"p95 {stats.p95_ms:.3f} ms, max {stats.max_ms:.3f} ms")
    print(f"budget {stats.budget_ms:g} ms: {verdict}")
    return EXIT_OK if stats.passed else EXIT_BUDGET


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vrscene",
                description="Scene-budget optimization engine and pose bridge")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("scenegen", help="generate a synthetic city scene")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--blocks", default="4x4", help="grid, e.g. 4x4")
    g.add_argument("--buildings", type=int, default=4, help="buildings per block")
    g.add_argument("--triangles", default="2000:4000", help="per-building MIN:MAX")
    g.add_argument("--materials", type=int, default=6)
    g.add_argument("--lod", type=int, default=1, choices=(1, 2, 3))
    g.add_argument("--street-width", type=float, default=8.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_scenegen)

    s = sub.add_parser("stats", help="print whole-scene statistics")
    s.add_argument("--scene", required=True)
    s.set_defaults(func=_cmd_stats)

    b = sub.add_parser("bake", help="bake occlusion cells for a camera region")
    b.add_argument("--scene", required=True)
    b.add_argument("--region", required=True, help="x0,y0,z0,x1,y1,z1")
    b.add_argument("--cell-size", type=float, default=10.0)
    b.add_argument("--min-occluder-volume", type=float, default=0.0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=_cmd_bake)

    o = sub.add_parser("optimize", help="staged reduction with report")
    o.add_argument("--scene", required=True)
    o.add_argument("--section", help="crop region x0,y0,z0,x1,y1,z1")
    o.add_argument("--decimate-grid", type=float)
    o.add_argument("--camera", help="reference camera json")
    o.add_argument("--cost-model")
    o.add_argument("--report", required=True, help=".md or .csv output")
    o.set_defaults(func=_cmd_optimize)

    m = sub.add_parser("simulate", help="per-frame budget simulation on a path")
    m.add_argument("--scene", required=True)
    m.add_argument("--bake")
    m.add_argument("--path", required=True)
    m.add_argument("--cost-model")
    m.add_argument("--hz", type=float)
    m.add_argument("--budget-fps", type=float)
    m.add_argument("--budget-drawcalls", type=int)
    m.add_argument("--budget-polys", type=int)
    m.add_argument("--out", required=True, help="metrics csv output")
    m.set_defaults(func=_cmd_simulate)

    f = sub.add_parser("fit-cost", help="fit the frame-time cost model")
    f.add_argument("--samples", required=True,
                   help="csv with drawcalls,triangles,frame_time_secs")
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_fit_cost)

    br = sub.add_parser("bridge", help="pub/sub pose bridge tools")
    brsub = br.add_subparsers(dest="bridge_command", required=True)

    bs = brsub.add_parser("serve", help="run the relay")
    bs.add_argument("--listen", default="127.0.0.1:9091", help="HOST:PORT")
    bs.set_defaults(func=_cmd_bridge_serve)

    bp = brsub.add_parser("pub", help="publish poses along a path file")
    bp.add_argument("--addr", required=True)
    bp.add_argument("--topic", required=True)
    bp.add_argument("--path", required=True)
    bp.add_argument("--rate", type=float, default=30.0)
    bp.set_defaults(func=_cmd_bridge_pub)

    bu = brsub.add_parser("sub", help="print states from a topic")
    bu.add_argument("--addr", required=True)
    bu.add_argument("--topic", required=True)
    bu.add_argument("--transform", help="frame transform json")
    bu.add_argument("--max-messages", type=int)
    bu.set_defaults(func=_cmd_bridge_sub)

    bm = brsub.add_parser("measure", help="measure publish-to-deliver latency")
    bm.add_argument("--addr", required=True)
    bm.add_argument("-n", type=int, default=1000)
    bm.add_argument("--budget-ms", type=float, default=100.0)
    bm.set_defaults(func=_cmd_bridge_measure)

    return p


def run(argv) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (SceneError, StaleBakeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConnectionError, bridge_mod.ProtocolError, OSError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


def entry():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    entry()
