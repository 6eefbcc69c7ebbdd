"""Command-line interface.

Verbs:

    aclab connect  --config cfg.ini [--out DIR]      solve the 1D connections
    aclab minimize --config cfg.ini [--out DIR]      pipeline, first eps only
    aclab sweep    --config cfg.ini [--out DIR]      full eps / geometry sweep
    aclab analyze  --config cfg.ini [--out DIR]      re-run analyses on stored
                                                     snapshots (resume mode)
    aclab inspect  PATH                              print snapshot header/stats

Exit codes: 0 ok, 2 validation error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _common(sub):
    sub.add_argument("--config", required=True, help="run config (INI)")
    sub.add_argument("--out", default=None, help="output directory override")
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--resume", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aclab", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("connect", "minimize", "sweep", "analyze"):
        _common(sub.add_parser(verb))
    insp = sub.add_parser("inspect")
    insp.add_argument("path", help="snapshot file")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "inspect":
            return _inspect(args.path)
        return _dispatch(args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    except KeyboardInterrupt:
        return EXIT_SOLVER


def _load(args):
    from .harness import ConfigError, load_config

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.solver.seed = args.seed
    return cfg


def _dispatch(args) -> int:
    from . import harness
    from .connection1d import SolverError
    from .harness import ConfigError
    from .minimize import MinimizeError, StepError
    from .snapshot import SnapshotFormatError

    cfg = _load(args)
    try:
        if args.verb == "connect":
            return _connect(cfg)
        if args.verb == "minimize":
            cfg.eps_list = cfg.eps_list[:1]
            summary = harness.run(cfg, resume=args.resume)
        elif args.verb == "analyze":
            summary = harness.run(cfg, resume=True)
        else:
            summary = harness.sweep(cfg, resume=args.resume)
            ok = all(j["ok"] for j in summary["jobs"])
            print(f"sweep: {len(summary['jobs'])} jobs, ok={ok}")
            return EXIT_OK if ok else EXIT_SOLVER
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverError, MinimizeError, StepError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SnapshotFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if summary.get("failures"):
        for fail in summary["failures"]:
            print(f"stage {fail['stage']}: {fail['error']}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"ok: outputs in {cfg.out_dir}")
    return EXIT_OK


def _connect(cfg) -> int:
    from . import harness, snapshot
    from .connection1d import SolverError, solve_connection, solve_halfline
    from .potential import make_potential

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = make_potential(cfg.potential, **cfg.potential_params)
    try:
        if cfg.boundary_mode == "step_h3":
            prof = solve_connection(p, p.wells[0], L=cfg.connection_span,
                                    n=cfg.connection_n)
            label = "sigma"
        else:
            prof = solve_halfline(p, np.array(cfg.z), L=cfg.connection_span,
                                  n=cfg.connection_n)
            label = "sigma_plus"
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    snapshot.write_profile_snapshot(out / "connection.snap", prof)
    snapshot.profile_csv(out / "connection.csv", prof)
    harness.dump_json(out / "connection.json", {
        label: prof.action,
        "arrival_set": prof.arrival_set,
        "tail_fit": dataclasses.asdict(prof.tail_fit),
        "equipartition_residual": prof.equipartition_residual,
        "iterations": prof.iterations,
    })
    print(f"{label} = {prof.action:.9f}  (arrival set {prof.arrival_set})")
    return EXIT_OK


def _inspect(path: str) -> int:
    from .snapshot import SnapshotFormatError, read_snapshot

    try:
        s = read_snapshot(path)
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SnapshotFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    nx, ny, m = s.values.shape
    kind = "profile" if s.is_profile else "field"
    print(f"{kind}: nx={nx} ny={ny} m={m} eps={s.eps} l={s.l} h={s.h} dx={s.dx}")
    v = s.values
    print(f"stats: min={v.min():.6g} max={v.max():.6g} mean={v.mean():.6g} "
          f"finite={np.all(np.isfinite(v))}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
