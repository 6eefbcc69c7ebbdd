"""Run configuration, pipelines, sweeps and persistence.

A run is described by one INI-style text file (nested sections, key=value;
see ``configs/`` and the README for the schema).  The pipeline per geometry:

    connection solves  ->  minimizations over the eps list (continuation +
    multistart)  ->  analyses  ->  snapshots, CSV tables, JSON summary.

Outputs per run directory:

    summary.json        deterministic summary (config echo, energies, verdicts)
    meta.json           wall time and other non-reproducible metadata
    connection.snap/.csv, field_eps*.snap
    trends.csv          per-eps rows (energy, thickness, fluxes, constants)
    plots.gp            gnuplot script over the CSV tables

Identical configs and seeds produce byte-identical summary.json files; wall
times live in meta.json precisely to keep the summary reproducible.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis as ana
from . import snapshot as snap
from .boundary_data import BoundaryData, validate_boundary
from .connection1d import ConnectionProfile, solve_connection, solve_halfline
from .energy import Field2D, hamiltonian_flux, modica_residual, total_energy, energy_directional
from .geometry import Domain2D, build_disc, build_stadium
from .minimize import SolveSettings, interpolate_field, minimize
from .potential import make_potential


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


@dataclass
class RunConfig:
    potential: str = "quartic_double_well"
    potential_params: dict = field(default_factory=dict)
    domain_kind: str = "stadium"
    l: float = 2.0
    h: float = 1.0
    r: float = 1.0
    dx: Optional[float] = None          # None = auto (eps / 4)
    boundary_mode: str = "step_h3"
    c0: float = 2.0
    z: tuple = (0.0,)
    eps_list: tuple = (0.08, 0.04)
    lh_grid: tuple = ()                 # optional ((l, h), ...) sweep variants
    solver: SolveSettings = field(default_factory=SolveSettings)
    connection_span: float = 20.0
    connection_n: int = 2048
    analyses: tuple = ("classify", "bounds", "decay", "thickness", "partition")
    probe_x: Optional[float] = None     # None = l / 2
    collar_n: float = 2.0
    out_dir: str = "out"
    seed: int = 0
    workers: int = 1

    def validate(self):
        eps = list(self.eps_list)
        if not eps:
            raise ConfigError("eps list is empty")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps list must be strictly decreasing")
        if any(e <= 0 for e in eps):
            raise ConfigError("eps values must be positive")
        if self.dx is not None:
            for e in eps:
                if self.dx > e / 4 + 1e-12:
                    raise ConfigError(f"resolution rule violated: dx={self.dx} > eps/4 for eps={e}")
        if self.domain_kind not in ("stadium", "disc"):
            raise ConfigError(f"unknown domain kind {self.domain_kind!r}")
        if self.boundary_mode not in ("step_h3", "const_z"):
            raise ConfigError(f"unknown boundary mode {self.boundary_mode!r}")
        if self.domain_kind == "disc" and self.boundary_mode == "step_h3":
            raise ConfigError("step_h3 data needs a rectangle-hypothesis domain")
        self.solver.validate()


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(";", ",").split(",") if tok.strip())


def load_config(path) -> RunConfig:
    """Parse the INI run description into a validated RunConfig."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    cfg = RunConfig()
    if cp.has_section("potential"):
        cfg.potential = cp.get("potential", "name", fallback=cfg.potential)
        cfg.potential_params = {k: float(v) for k, v in cp.items("potential")
                                if k != "name"}
    if cp.has_section("domain"):
        cfg.domain_kind = cp.get("domain", "kind", fallback=cfg.domain_kind)
        cfg.l = cp.getfloat("domain", "l", fallback=cfg.l)
        cfg.h = cp.getfloat("domain", "h", fallback=cfg.h)
        cfg.r = cp.getfloat("domain", "r", fallback=cfg.r)
        dx = cp.get("domain", "dx", fallback="auto")
        cfg.dx = None if dx.strip() == "auto" else float(dx)
    if cp.has_section("boundary"):
        cfg.boundary_mode = cp.get("boundary", "mode", fallback=cfg.boundary_mode)
        cfg.c0 = cp.getfloat("boundary", "c0", fallback=cfg.c0)
        if cp.has_option("boundary", "z"):
            cfg.z = _parse_floats(cp.get("boundary", "z"))
    if cp.has_section("sweep"):
        if cp.has_option("sweep", "eps"):
            cfg.eps_list = _parse_floats(cp.get("sweep", "eps"))
        if cp.has_option("sweep", "lh"):
            toks = [t for t in cp.get("sweep", "lh").split(";") if t.strip()]
            cfg.lh_grid = tuple(tuple(float(v) for v in t.split(",")) for t in toks)
    if cp.has_section("solver"):
        s = cfg.solver
        s.tau_factor = cp.getfloat("solver", "tau_factor", fallback=s.tau_factor)
        s.max_iter = cp.getint("solver", "max_iter", fallback=s.max_iter)
        s.stop_tol = cp.getfloat("solver", "stop_tol", fallback=s.stop_tol)
        s.projection_m = cp.getfloat("solver", "projection_m", fallback=s.projection_m)
        if cp.has_option("solver", "multistart"):
            s.multistart = tuple(t.strip() for t in cp.get("solver", "multistart").split(",") if t.strip())
    if cp.has_section("connection"):
        cfg.connection_span = cp.getfloat("connection", "span", fallback=cfg.connection_span)
        cfg.connection_n = cp.getint("connection", "n", fallback=cfg.connection_n)
    if cp.has_section("analysis"):
        if cp.has_option("analysis", "run"):
            cfg.analyses = tuple(t.strip() for t in cp.get("analysis", "run").split(",") if t.strip())
        probe = cp.get("analysis", "probe_x", fallback="auto")
        cfg.probe_x = None if probe.strip() == "auto" else float(probe)
        cfg.collar_n = cp.getfloat("analysis", "collar_n", fallback=cfg.collar_n)
    if cp.has_section("output"):
        cfg.out_dir = cp.get("output", "dir", fallback=cfg.out_dir)
        cfg.seed = cp.getint("output", "seed", fallback=cfg.seed)
        cfg.workers = cp.getint("output", "workers", fallback=cfg.workers)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# JSON helpers.
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if obj.size > 64:
            return {"shape": list(obj.shape), "omitted": True}
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dump_json(path, payload) -> str:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n")
    return text


# ---------------------------------------------------------------------------
# Pipeline.
# ---------------------------------------------------------------------------

def _build_domain(cfg: RunConfig, l: float, h: float, eps: float) -> Domain2D:
    dx = cfg.dx if cfg.dx is not None else eps / 4.0
    if cfg.domain_kind == "stadium":
        return build_stadium(l, h, dx)
    return build_disc(cfg.r, dx)


def _boundary(cfg: RunConfig, p, eps: float, conn: Optional[ConnectionProfile]) -> BoundaryData:
    if cfg.boundary_mode == "const_z":
        return BoundaryData(mode="const_z", m=p.dimension, z=np.array(cfg.z),
                            bound_m=p.coercivity_radius)
    a_minus = p.wells[0]
    a_plus = conn.endpoints[1] if conn is not None else p.wells[-1]
    return BoundaryData(mode="step_h3", m=p.dimension, eps=eps, c0=cfg.c0,
                        a_minus=a_minus, a_plus=a_plus,
                        bound_m=p.coercivity_radius)


def run(cfg: RunConfig, out_dir: Optional[str] = None, resume: bool = False) -> dict:
    """Execute the full pipeline for the config's own geometry.

    Returns the summary dict (also written to summary.json).  Partial outputs
    are kept on failure; the failing stage is recorded in the summary.
    """
    cfg.validate()
    t_start = time.monotonic()
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = make_potential(cfg.potential, **cfg.potential_params)

    summary: dict = {
        "config": _config_echo(cfg),
        "per_eps": [],
        "trends": {},
        "failures": [],
    }
    meta = {"started_at": time.time()}

    # 1. connection solves (eps-independent, solved in the eps = 1 variable)
    conn = halfline = None
    try:
        if cfg.boundary_mode == "step_h3":
            conn = solve_connection(p, p.wells[0], L=cfg.connection_span,
                                    n=cfg.connection_n)
            snap.write_profile_snapshot(out / "connection.snap", conn)
            snap.profile_csv(out / "connection.csv", conn)
            summary["connection"] = {
                "sigma": conn.action,
                "arrival_set": conn.arrival_set,
                "tail_k": conn.tail_fit.k,
                "tail_K": conn.tail_fit.K,
                "equipartition_residual": conn.equipartition_residual,
            }
        else:
            halfline = solve_halfline(p, np.array(cfg.z), L=cfg.connection_span,
                                      n=cfg.connection_n)
            snap.write_profile_snapshot(out / "connection.snap", halfline)
            snap.profile_csv(out / "connection.csv", halfline)
            summary["connection"] = {
                "sigma_plus": halfline.action,
                "arrival_set": halfline.arrival_set,
                "tail_k": halfline.tail_fit.k,
            }
    except Exception as exc:  # noqa: BLE001 - stage failures are data here
        summary["failures"].append({"stage": "connection", "error": str(exc)})
        _finish(out, summary, meta, t_start)
        return summary

    # 2. minimizations with continuation over the eps list
    fields: list[Field2D] = []
    prev: Optional[Field2D] = None
    for eps in cfg.eps_list:
        try:
            d = _build_domain(cfg, cfg.l, cfg.h, eps)
            b = _boundary(cfg, p, eps, conn)
            brep = validate_boundary(b, d, p)
            if not brep.passed:
                raise ConfigError(f"boundary data fails validation at eps={eps:g}: "
                                  f"{[c.name for c in brep.checks if not c.passed]}")
            snap_path = out / f"field_eps{eps:g}.snap"
            if resume and snap_path.exists():
                s = snap.read_snapshot(snap_path)
                f = Field2D(domain=d, eps=eps, values=s.values, frozen=d.ghost.copy())
                report = None
            else:
                extra = []
                if prev is not None:
                    extra.append(("continuation", interpolate_field(prev, d, b, eps)))
                f, report = minimize(d, p, b, eps, cfg.solver, conn=conn,
                                     halfline=halfline, extra_inits=extra,
                                     collar_n=cfg.collar_n)
                snap.write_field_snapshot(snap_path, f)
            fields.append(f)
            prev = f
            rec = _analyze_point(cfg, p, d, b, f, conn, halfline)
            scatter = rec.pop("_decay_scatter", None)
            if scatter is not None and scatter.size:
                np.savetxt(out / f"decay_eps{eps:g}.csv", scatter,
                           delimiter=",", header="d_over_eps,log_dev",
                           comments="")
            if cfg.domain_kind == "stadium" and conn is not None:
                x_hat = cfg.probe_x if cfg.probe_x is not None else cfg.l / 2
                rec["thickness"] = ana.layer_thickness(f, p, x_hat,
                                                       conn.endpoints[1])
                rec["t_over_eps"] = rec["thickness"] / eps
            rec["eps"] = eps
            rec["snapshot"] = snap_path.name
            if report is not None:
                rec["convergence"] = {
                    "winner": report.winner,
                    "iterations": report.iterations,
                    "residual": report.residual,
                    "branches": [dataclasses.asdict(x) for x in report.branches],
                }
            summary["per_eps"].append(rec)
        except Exception as exc:  # noqa: BLE001
            summary["failures"].append({"stage": f"minimize_eps={eps:g}",
                                        "error": str(exc)})
            break

    # 3. cross-eps trends
    try:
        if len(fields) >= 3 and cfg.domain_kind == "stadium" and "thickness" in cfg.analyses:
            x_hat = cfg.probe_x if cfg.probe_x is not None else cfg.l / 2
            a_plus = conn.endpoints[1]
            rect = (cfg.l / 4, 3 * cfg.l / 4, 0.0, cfg.h / 2)
            trend = ana.thickness_scaling(fields, p, x_hat, a_plus, flux_rect=rect)
            summary["trends"]["thickness"] = trend
    except Exception as exc:  # noqa: BLE001
        summary["failures"].append({"stage": "trends", "error": str(exc)})

    _write_trend_csv(out, summary)
    _write_gnuplot(out)
    _finish(out, summary, meta, t_start)
    return summary


def _analyze_point(cfg: RunConfig, p, d: Domain2D, b: BoundaryData, f: Field2D,
                   conn, halfline) -> dict:
    rec: dict = {}
    subdomains = ("R", "complement_R") if d.l is not None else ()
    bd = total_energy(f, p, subdomains=subdomains)
    rec["energy"] = bd
    case = None
    if cfg.domain_kind == "disc":
        case = "disc"
    elif cfg.l < cfg.h:
        case = "boundary"
    elif cfg.l > cfg.h:
        case = "internal"

    if "classify" in cfg.analyses and d.l is not None:
        rep = ana.classify_layer(f, d, p, a_minus=conn.endpoints[0],
                                 a_plus=conn.endpoints[1])
        rec["classification"] = rep.classification
        rec["n_level_curves"] = len(rep.level_curves)

    if "bounds" in cfg.analyses and case is not None:
        if case == "boundary":
            directional = energy_directional(f, p, "y", "R")
            rows = ana.bound_report(bd, case, conn.action, f.eps, d,
                                    directional=directional)
        elif case == "internal":
            directional = energy_directional(f, p, "x", "all")
            rows = ana.bound_report(bd, case, conn.action, f.eps, d,
                                    directional=directional)
        else:
            rows = ana.bound_report(bd, case, 0.0, f.eps, d,
                                    sigma_plus=halfline.action,
                                    perimeter=d.perimeter())
        rec["bounds"] = rows

    if "decay" in cfg.analyses:
        try:
            if case == "internal":
                args = (conn.endpoints[0], "R")
                kw = {"region_mask": ~d.rectangle_mask()}
            elif case == "boundary":
                args = (conn.endpoints[0], "boundary_plus")
                kw = {}
            else:
                args = (halfline.endpoints[1], "boundary")
                kw = {}
            rec["decay"] = ana.decay_fit(f, d, *args, delta0=ana.delta0_of(p), **kw)
            rec["_decay_scatter"] = ana.decay_scatter(f, d, *args,
                                                      delta0=ana.delta0_of(p), **kw)
        except ana.FitError as exc:
            rec["decay"] = {"error": str(exc)}

    if "partition" in cfg.analyses:
        a_m = conn.endpoints[0] if conn is not None else None
        a_p = conn.endpoints[1] if conn is not None else None
        part = ana.limit_partition(f, d, p, a_minus=a_m, a_plus=a_p)
        rec["partition"] = {"l1_distance": part.l1_distance,
                            "l1_to_step_map": part.l1_to_step_map}

    if "modica" in cfg.analyses and f.m == 1:
        mod = modica_residual(f, p)
        rec["modica"] = {"max_residual": mod.max_residual,
                         "violation_area": mod.violation_area}

    if "hamiltonian" in cfg.analyses and d.l is not None:
        rect = (cfg.l / 4, 3 * cfg.l / 4, 0.0, cfg.h / 2)
        rec["hamiltonian"] = hamiltonian_flux(f, p, rect)
    return rec


def _config_echo(cfg: RunConfig) -> dict:
    echo = dataclasses.asdict(cfg)
    echo["solver"] = dataclasses.asdict(cfg.solver)
    return echo


def _write_trend_csv(out: Path, summary: dict) -> None:
    rows = []
    for rec in summary["per_eps"]:
        bd = rec["energy"]
        row = {"eps": rec["eps"], "total": bd.total,
               "kinetic_x": bd.kinetic_x, "kinetic_y": bd.kinetic_y,
               "potential_part": bd.potential_part}
        if "classification" in rec:
            row["classification"] = rec["classification"]
        if "t_over_eps" in rec:
            row["thickness"] = rec["thickness"]
            row["t_over_eps"] = rec["t_over_eps"]
        for b in rec.get("bounds", []):
            row[f"C[{b.name}]"] = b.constant
        rows.append(row)
    if not rows:
        return
    keys = sorted({k for r in rows for k in r}, key=lambda s: (s != "eps", s))
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join(str(r.get(k, "")) for k in keys))
    (out / "trends.csv").write_text("\n".join(lines) + "\n")


def _write_gnuplot(out: Path) -> None:
    (out / "plots.gp").write_text(
        "# gnuplot script over the run's CSV tables\n"
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set logscale x\n"
        "set xlabel 'eps'; set ylabel 'energy'\n"
        "plot 'trends.csv' using 1:2 with linespoints title 'total energy'\n"
        "pause -1\n")


def _finish(out: Path, summary: dict, meta: dict, t_start: float) -> None:
    meta["wall_time_s"] = time.monotonic() - t_start
    dump_json(out / "summary.json", summary)
    dump_json(out / "meta.json", meta)


# ---------------------------------------------------------------------------
# Sweeps over geometry variants.
# ---------------------------------------------------------------------------

def _sweep_job(args):
    cfg_dict, l, h, job_dir, resume = args
    solver_dict = dict(cfg_dict["solver"])
    solver_dict["multistart"] = tuple(solver_dict["multistart"])
    plain = {k: v for k, v in cfg_dict.items() if k != "solver"}
    cfg = RunConfig(**plain)
    cfg.solver = SolveSettings(**solver_dict)
    cfg.l, cfg.h = l, h
    cfg.lh_grid = ()
    try:
        summary = run(cfg, out_dir=job_dir, resume=resume)
        return {"job": job_dir, "l": l, "h": h, "ok": not summary["failures"],
                "failures": summary["failures"]}
    except Exception as exc:  # noqa: BLE001 - job isolation
        return {"job": job_dir, "l": l, "h": h, "ok": False,
                "failures": [{"stage": "job", "error": str(exc)}]}


def sweep(cfg: RunConfig, resume: bool = False) -> dict:
    """Run the (l, h) grid (or the single geometry) over the eps list.

    Jobs execute in parallel up to the worker cap, each in its own output
    subdirectory; one failed job never touches another's outputs.
    """
    cfg.validate()
    variants = list(cfg.lh_grid) or [(cfg.l, cfg.h)]
    if len(variants) * len(cfg.eps_list) < 2:
        raise ConfigError("sweep needs at least 2 points (eps list x geometry grid)")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_dict = _config_echo(cfg)
    jobs = []
    for idx, (l, h) in enumerate(variants):
        job_dir = str(out / f"job{idx:03d}_l{l:g}_h{h:g}")
        jobs.append((cfg_dict, l, h, job_dir, resume))

    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]

    results.sort(key=lambda r: r["job"])  # deterministic merge order
    aggregate = {"jobs": results}
    dump_json(out / "sweep.json", aggregate)
    _aggregate_trends(out, [j[3] for j in jobs])
    return aggregate


def _aggregate_trends(out: Path, job_dirs) -> None:
    lines = []
    header = None
    for jd in job_dirs:
        f = Path(jd) / "trends.csv"
        if not f.exists():
            continue
        body = f.read_text().strip().split("\n")
        if header is None:
            header = "job," + body[0]
            lines.append(header)
        for row in body[1:]:
            lines.append(f"{Path(jd).name},{row}")
    if lines:
        (out / "trends_all.csv").write_text("\n".join(lines) + "\n")
