"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 guard trip (collision or
element inversion), 4 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import errors
from .config import RunConfig, parse_config, preset_config
from .iteration import initial_guess_freefall, run_global, run_per_timestep
from .mesh import generate_mesh, write_mesh
from .output import write_snapshots, write_trajectory_csv

log = logging.getLogger("alefsi")

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_SOLVER = 0, 2, 3, 4

TABLES = [
    ("heavy", "heavy_ball"),
    ("light", "light_ball"),
    ("heavy_refined", "refined"),
    ("light_refined", "refined_light"),
]


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (errors.ParseError, errors.InconsistentConfig, errors.GeometryInfeasible)):
        return EXIT_CONFIG
    if isinstance(exc, (errors.CollisionGuard, errors.ElementInversion, errors.SnapTooLarge)):
        return EXIT_GUARD
    return EXIT_SOLVER


def _load_config(path, preset=None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise errors.ParseError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, preset=preset)


def simulate(cfg: RunConfig, out_dir: Path):
    geom, fluid, rigid, it = cfg.geometry(), cfg.fluid(), cfg.rigid(), cfg.iteration()
    out_dir.mkdir(parents=True, exist_ok=True)
    if it.schedule == "per_timestep":
        history = run_per_timestep(geom, fluid, rigid, it, cfg.initial_state())
    else:
        guess = initial_guess_freefall(rigid, cfg.initial_state(), it.tau, it.n_steps)
        history = run_global(guess, geom, fluid, rigid, it)
    write_trajectory_csv(history, out_dir)
    if history.snapshots:
        write_snapshots(history.snapshots, out_dir / "snapshots")
    return history


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config, args.preset)
    out = Path(args.out or cfg.out_dir)
    simulate(cfg, out)
    print(f"wrote {out / 'summary.csv'}")
    return EXIT_OK


def _cmd_mesh_only(args) -> int:
    cfg = _load_config(args.config)
    mesh = generate_mesh(cfg.geometry())
    write_mesh(mesh, args.out)
    print(f"{mesh.n_vertices} vertices, {mesh.n_triangles} triangles, min angle {mesh.min_angle():.1f} deg")
    return EXIT_OK


def _cmd_tables(args) -> int:
    out = Path(args.out)
    for name, preset in TABLES:
        if args.skip_refined and preset.startswith("refined"):
            continue
        cfg = preset_config(preset)
        log.info("running %s (%s)", name, preset)
        simulate(cfg, out / name)
        print(f"wrote {out / name / 'summary.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alefsi", description="ALE falling-disk simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the trajectory iteration for one configuration")
    s.add_argument("--config", required=True, help="key = value configuration file")
    s.add_argument("--preset", help="preset name; keys in the file still override it")
    s.add_argument("--out", help="output directory (default: out_dir from the config)")
    s.set_defaults(func=_cmd_simulate)

    m = sub.add_parser("mesh-only", help="generate the initial mesh and write it")
    m.add_argument("--config", required=True)
    m.add_argument("--out", required=True, help="mesh file to write")
    m.set_defaults(func=_cmd_mesh_only)

    t = sub.add_parser("tables", help="run the falling-disk presets and write their summary tables")
    t.add_argument("--out", required=True)
    t.add_argument("--skip-refined", action="store_true", help="skip the two small-timestep presets")
    t.set_defaults(func=_cmd_tables)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except errors.AleFsiError as exc:
        code = exit_code(exc)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
