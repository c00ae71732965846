"""Command-line front end: scene generation, sweeps, and reports.

Exit codes: 0 success, 1 user error (bad flags, bad files, budget), 2
internal error. The default worker count can be set with MLMAP_WORKERS.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

from .geometry import NonManifoldError
from .scenes import (
    CanyonParams,
    SceneFormatError,
    generate_canyon_2b,
    generate_canyon_6b,
    generate_fig2_scene,
    load_scene,
    save_scene,
)
from .sweep import (
    SweepConfig,
    build_report,
    format_report_table,
    load_sweep_rows,
    run_sweep,
    write_report,
)
from .tracer import BudgetExceededError

WORKERS_ENV = "MLMAP_WORKERS"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise _UsageError(f"{self.prog}: {message}")


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise _UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise _UsageError(f"{WORKERS_ENV} must be at least 1")
    return value


def _chunk_size(raw: str) -> int | None:
    if raw == "full":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'full', got {raw!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("chunk size must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mlmap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene", help="generate a scene file")
    scene.add_argument("kind", choices=["canyon6b", "canyon2b", "fig2"])
    scene.add_argument("-o", "--out", required=True, type=Path, help="output scene path")
    scene.add_argument("--area", nargs=2, type=float, metavar=("WIDTH", "LENGTH"))
    scene.add_argument("--main-street-width", type=float)
    scene.add_argument("--cross-street-width", type=float)
    scene.add_argument("--building-footprint", nargs=2, type=float, metavar=("ACROSS", "ALONG"))
    scene.add_argument("--building-heights", nargs=6, type=float, metavar="H")
    scene.add_argument("--no-ground", action="store_true")
    scene.add_argument("--two-sided-buildings", action="store_true")

    sweep = sub.add_parser("sweep", help="run a multi-snapshot sweep")
    sweep.add_argument("--scene", required=True, type=Path)
    sweep.add_argument("-o", "--out-dir", required=True, type=Path)
    sweep.add_argument("--tx-start", nargs=2, type=float, metavar=("X", "Y"))
    sweep.add_argument("--tx-end", nargs=2, type=float, metavar=("X", "Y"))
    sweep.add_argument("--tx-count", type=int, default=50)
    sweep.add_argument("--tx-altitude", type=float)
    sweep.add_argument("--grid", nargs=2, type=int, default=[500, 500], metavar=("NX", "NY"))
    sweep.add_argument("--bounds", nargs=4, type=float, metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    sweep.add_argument("--altitude", type=float, help="receiver grid height")
    sweep.add_argument("--max-order", type=int, default=1)
    sweep.add_argument("--chunk-size", type=_chunk_size, default=1024)
    sweep.add_argument("--block-size", type=int, default=8192)
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--budget", type=int)
    sweep.add_argument("--keep-vectors", action="store_true")
    sweep.add_argument("--include-no-multipath", action="store_true")
    sweep.add_argument("--overlay-tx", action="store_true")
    sweep.add_argument("--quiet", action="store_true")

    report = sub.add_parser("report", help="summarize one or two sweeps")
    report.add_argument("--sweep", action="append", required=True, type=Path, metavar="DIR")
    report.add_argument("-o", "--out-dir", required=True, type=Path)
    report.add_argument("--bins", type=int, default=30)
    report.add_argument("--include-no-multipath", action="store_true")
    return parser


def _cmd_scene(args: argparse.Namespace) -> int:
    canyon_flags = {
        "area": args.area,
        "main_street_width": args.main_street_width,
        "cross_street_width": args.cross_street_width,
        "building_footprint": args.building_footprint,
        "building_heights": args.building_heights,
    }
    used = {k: v for k, v in canyon_flags.items() if v is not None}
    if args.no_ground:
        used["ground"] = False
    if args.two_sided_buildings:
        used["one_sided_buildings"] = False
    if args.kind == "fig2":
        if used:
            raise _UsageError("fig2 takes no layout parameters")
        scene = generate_fig2_scene()
    else:
        defaults = CanyonParams()
        params = CanyonParams(
            area=tuple(used.get("area", defaults.area)),
            main_street_width=used.get("main_street_width", defaults.main_street_width),
            cross_street_width=used.get("cross_street_width", defaults.cross_street_width),
            building_footprint=tuple(
                used.get("building_footprint", defaults.building_footprint)
            ),
            building_heights=tuple(
                used.get("building_heights", defaults.building_heights)
            ),
            ground=used.get("ground", defaults.ground),
            one_sided_buildings=used.get("one_sided_buildings", defaults.one_sided_buildings),
        )
        generator = generate_canyon_6b if args.kind == "canyon6b" else generate_canyon_2b
        scene = generator(params)
    save_scene(scene, args.out)
    print(f"wrote {args.out} ({scene.n_facets} facets)")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    scene = load_scene(args.scene)
    meta = scene.metadata
    bounds = args.bounds if args.bounds is not None else meta.get("domain")
    if bounds is None:
        raise _UsageError("scene has no domain metadata; pass --bounds")
    tx_start = args.tx_start
    tx_end = args.tx_end
    if tx_start is None or tx_end is None:
        path = meta.get("tx_path")
        if path is None:
            xmin, ymin, xmax, ymax = bounds
            if ymax - ymin >= xmax - xmin:
                cx = (xmin + xmax) / 2.0
                path = [[cx, ymin], [cx, ymax]]
            else:
                cy = (ymin + ymax) / 2.0
                path = [[xmin, cy], [xmax, cy]]
        tx_start = tx_start if tx_start is not None else path[0]
        tx_end = tx_end if tx_end is not None else path[1]
    tx_altitude = args.tx_altitude
    if tx_altitude is None:
        tx_altitude = float(meta.get("tx_altitude", 32.0))
    altitude = args.altitude
    if altitude is None:
        altitude = float(meta.get("rx_altitude", 1.5))
    workers = args.workers if args.workers is not None else _default_workers()
    config = SweepConfig(
        tx_start=tuple(float(v) for v in tx_start),
        tx_end=tuple(float(v) for v in tx_end),
        bounds=tuple(float(v) for v in bounds),
        tx_count=args.tx_count,
        tx_altitude=tx_altitude,
        nx=args.grid[0],
        ny=args.grid[1],
        altitude=altitude,
        max_order=args.max_order,
        chunk_size=args.chunk_size,
        workers=workers,
        block_size=args.block_size,
        keep_vectors=args.keep_vectors,
        include_no_multipath=args.include_no_multipath,
        overlay_tx=args.overlay_tx,
    )
    if args.budget is not None:
        config.budget = args.budget
    log = None if args.quiet else lambda line: print(line, file=sys.stderr, flush=True)
    report = run_sweep(scene, config, args.out_dir, log=log)
    print(f"wrote {args.out_dir}: {config.tx_count} snapshots, "
          f"{report.n_observations} pooled observations")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    if not 1 <= len(args.sweep) <= 2:
        raise _UsageError("pass --sweep once or twice")
    rows = [load_sweep_rows(d, args.include_no_multipath) for d in args.sweep]
    if args.bins < 1:
        raise _UsageError("bins must be at least 1")
    report = build_report(rows, args.bins)
    write_report(report, args.out_dir)
    print(format_report_table(report))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "scene":
            return _cmd_scene(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_report(args)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (
        BudgetExceededError,
        SceneFormatError,
        NonManifoldError,
        FileNotFoundError,
        ValueError,
        OSError,
    ) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
