"""Semi-implicit gradient flow for the discrete Allen-Cahn energy.

One step treats the Laplacian implicitly and the reaction term explicitly:

    (I + tau eps L) u_new = u_old - (tau/eps) w W_u(u_old) + Dirichlet data,

with L the five-point Laplacian on interior cells (ghost values folded into
the right-hand side) solved by conjugate gradients.  The step is
unconditionally stable in the diffusion and kept monotone by backtracking on
tau whenever the energy fails to decrease.  Values are clamped to the ball
|u| <= M after every step (clamping never raises the energy when
W_u(u).u > 0 outside |u| = M).

Global minimality is approximated by multistart over the two candidate layer
structures plus a random perturbation; nothing stronger is claimed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .boundary_data import BoundaryData
from .connection1d import ConnectionProfile
from .energy import (
    ConstructionError,
    Field2D,
    build_comparison_field,
    first_variation,
    make_field,
    total_energy,
)
from .geometry import Domain2D
from .potential import Potential


class StepError(RuntimeError):
    """Backtracking exhausted without an energy decrease."""


class MinimizeError(RuntimeError):
    """No initialization converged; diagnostics in args."""


@dataclass
class SolveSettings:
    """Flow parameters.  tau = tau_factor * eps^2 in physical variables."""

    tau_factor: float = 0.25
    max_iter: int = 200_000
    stop_tol: float = 1e-5      # max-norm of the first variation
    projection_m: float = 2.0
    eps_schedule: Optional[Sequence[float]] = None
    multistart: tuple[str, ...] = ("comparison_field", "random_perturbed")
    seed: int = 0
    cg_tol: float = 1e-10
    cg_max_iter: int = 500
    check_every: int = 10
    random_amplitude: float = 0.5

    def validate(self):
        if self.tau_factor <= 0:
            raise ValueError("tau_factor must be positive")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.eps_schedule is not None:
            eps = list(self.eps_schedule)
            if any(b >= a for a, b in zip(eps, eps[1:])):
                raise ValueError("eps schedule must be strictly decreasing")


@dataclass
class BranchReport:
    init: str
    converged: bool
    iterations: int
    energy: float
    residual: float


@dataclass
class ConvergenceReport:
    winner: str
    iterations: int
    final_energy: float
    residual: float
    branches: list[BranchReport] = field(default_factory=list)


def project_bound(f: Field2D, m_bound: float) -> Field2D:
    """Radial clamp of nodal values to the ball |u| <= M (frozen rows too).

    M must dominate every well norm; boundary data respects |g| <= M so frozen
    values are unchanged in practice.
    """
    out = f.copy()
    nrm = np.linalg.norm(out.values, axis=-1)
    over = nrm > m_bound
    if np.any(over):
        out.values[over] *= (m_bound / nrm[over])[:, None]
    return out


def _check_projection(p: Potential, m_bound: float):
    well_norms = np.linalg.norm(p.wells, axis=1)
    if m_bound < np.max(well_norms):
        raise ValueError(f"projection bound M={m_bound} smaller than a well norm "
                         f"{np.max(well_norms)}")


class _Flow:
    """Shared state for repeated semi-implicit steps on one field."""

    def __init__(self, f: Field2D, p: Potential, settings: SolveSettings):
        settings.validate()
        _check_projection(p, settings.projection_m)
        self.p = p
        self.settings = settings
        self.d = f.domain
        self.eps = f.eps
        self.tau0 = settings.tau_factor * f.eps**2
        self.tau = self.tau0
        self.interior = f.interior_mask()
        d = self.d
        act = d.active
        ins = self.interior
        # per-direction face masks between interior cells (for the operator)
        self.fx_ii = ins[:-1, :] & ins[1:, :]
        self.fy_ii = ins[:, :-1] & ins[:, 1:]
        # faces between an interior cell and a frozen/active neighbor
        fx = act[:-1, :] & act[1:, :] & (d.inside[:-1, :] | d.inside[1:, :])
        fy = act[:, :-1] & act[:, 1:] & (d.inside[:, :-1] | d.inside[:, 1:])
        self.fx_all, self.fy_all = fx, fy
        deg = np.zeros(ins.shape)
        deg[:-1, :] += fx
        deg[1:, :] += fx
        deg[:, :-1] += fy
        deg[:, 1:] += fy
        self.degree = deg

    def _apply_op(self, v: np.ndarray, coef: float) -> np.ndarray:
        """(I + coef L) v on interior cells, with v zero off the interior."""
        nb_sum = np.zeros_like(v)
        fx = self.fx_ii[..., None]
        fy = self.fy_ii[..., None]
        nb_sum[:-1, :] += np.where(fx, v[1:, :], 0.0)
        nb_sum[1:, :] += np.where(fx, v[:-1, :], 0.0)
        nb_sum[:, :-1] += np.where(fy, v[:, 1:], 0.0)
        nb_sum[:, 1:] += np.where(fy, v[:, :-1], 0.0)
        return v + coef * (self.degree[..., None] * v - nb_sum) / self.d.dx**2

    def _laplacian_rhs(self, u: np.ndarray) -> np.ndarray:
        """Frozen-neighbor contribution sum_g u_g per interior cell."""
        frozen_vals = np.where(self.interior[..., None], 0.0, u)
        out = np.zeros_like(u)
        fx, fy = self.fx_all, self.fy_all
        out[:-1, :] += np.where(fx[..., None], frozen_vals[1:, :], 0.0)
        out[1:, :] += np.where(fx[..., None], frozen_vals[:-1, :], 0.0)
        out[:, :-1] += np.where(fy[..., None], frozen_vals[:, 1:], 0.0)
        out[:, 1:] += np.where(fy[..., None], frozen_vals[:, :-1], 0.0)
        out[~self.interior] = 0.0
        return out

    def _cg_solve(self, coef: float, rhs: np.ndarray, x0: np.ndarray) -> np.ndarray:
        """Textbook CG for (I + coef L) x = rhs over interior cells."""
        ins = self.interior[..., None]
        x = np.where(ins, x0, 0.0)
        r = np.where(ins, rhs - self._apply_op(x, coef), 0.0)
        pdir = r.copy()
        rs = float(np.sum(r * r))
        b2 = float(np.sum(rhs[self.interior[...]] ** 2)) or 1.0
        for _ in range(self.settings.cg_max_iter):
            if rs <= self.settings.cg_tol**2 * b2:
                break
            ap = np.where(ins, self._apply_op(pdir, coef), 0.0)
            alpha = rs / float(np.sum(pdir * ap))
            x += alpha * pdir
            r -= alpha * ap
            rs_new = float(np.sum(r * r))
            pdir = r + (rs_new / rs) * pdir
            rs = rs_new
        return x

    def step(self, f: Field2D, energy: float) -> tuple[Field2D, float, float]:
        """One monotone semi-implicit step; returns (field, new energy, delta)."""
        d, eps, p = self.d, self.eps, self.p
        u = f.values
        w_u = np.zeros_like(u)
        w_u[self.interior] = (d.inside_fraction[self.interior, None]
                              * p.grad(u[self.interior]))
        tau = self.tau
        while True:
            coef = tau * eps
            rhs = np.where(self.interior[..., None], u, 0.0) \
                - (tau / eps) * w_u \
                + coef * self._laplacian_rhs(u) / d.dx**2
            sol = self._cg_solve(coef, rhs, np.where(self.interior[..., None], u, 0.0))
            new = f.copy()
            new.values = np.where(self.interior[..., None], sol, u)
            new = project_bound(new, self.settings.projection_m)
            e_new = total_energy(new, p).total
            if e_new <= energy + 1e-13 * (1.0 + abs(energy)):
                if tau < self.tau0:
                    self.tau = min(tau * 1.5, self.tau0)
                else:
                    self.tau = tau
                return new, e_new, e_new - energy
            tau *= 0.5
            if tau < 1e-12 * self.tau0:
                raise StepError("backtracking exhausted; no descent direction")


def gradient_flow_step(f: Field2D, p: Potential, settings: SolveSettings,
                       energy: Optional[float] = None) -> tuple[Field2D, float]:
    """Single semi-implicit step (frozen nodes untouched, energy non-increasing).

    Returns the updated field and the energy delta.  The loop solver keeps the
    flow state; this entry point rebuilds it each call and is meant for tests
    and poking, not hot loops.
    """
    flow = _Flow(f, p, settings)
    if energy is None:
        energy = total_energy(f, p).total
    new, _, delta = flow.step(f, energy)
    return new, delta


RES_CEILING = 1e-3     # residual ceiling for accepting an energy plateau
PLATEAU_WINDOW = 1500  # descent iterations per plateau check
PLATEAU_DROP = 1e-12   # relative energy drop per window that counts as progress


def _descend(f: Field2D, p: Potential, settings: SolveSettings) -> BranchReport:
    """Damped BB descent of the discrete energy, mutating f in place.

    Monotone (backtracking on the BB step), projected to |u| <= M, frozen rows
    untouched.  Layer-translation modes carry forces far below the bulk scale;
    when the energy stops dropping across a window with the residual already
    small the iterate is accepted as converged (the energy is what the
    certificates consume; its plateau value is exact to round-off).

    The semi-implicit flow of :func:`gradient_flow_step` realizes the same
    descent one stable step at a time but needs two to three orders of
    magnitude more iterations at desk scale, so this loop is the production
    path.
    """
    _check_projection(p, settings.projection_m)
    ins = f.interior_mask()[..., None]
    mproj = settings.projection_m
    energy = total_energy(f, p).total
    g = first_variation(f, p)
    res = float(np.max(np.abs(g)))
    tau = settings.tau_factor * f.eps**2
    u = f.values
    u_prev = g_prev = None
    window_e = energy
    it = 0
    while it < settings.max_iter:
        if res <= settings.stop_tol:
            return BranchReport("", True, it, energy, res)
        if u_prev is not None:
            du = (u - u_prev).ravel()
            dg = (g - g_prev).ravel()
            denom = du @ dg
            tau = float(np.clip(du @ du / denom if denom > 1e-300 else tau,
                                1e-10, 1e3))
        u_prev, g_prev, e_prev = u.copy(), g.copy(), energy
        while True:
            u_new = np.where(ins, u - tau * g, u)
            nrm = np.linalg.norm(u_new, axis=-1, keepdims=True)
            np.divide(u_new * mproj, nrm, out=u_new, where=nrm > mproj)
            f.values = u_new
            e_new = total_energy(f, p).total
            if e_new <= e_prev + 1e-14 * (1.0 + abs(e_prev)):
                break
            tau *= 0.5
            if tau < 1e-16:
                raise StepError("backtracking exhausted; no descent direction")
        u, energy = u_new, e_new
        g = first_variation(f, p)
        it += 1
        if it % settings.check_every == 0:
            res = float(np.max(np.abs(g)))
        if it % PLATEAU_WINDOW == 0:
            if window_e - energy < PLATEAU_DROP * (1.0 + abs(energy)) \
                    and res < RES_CEILING:
                return BranchReport("", True, it, energy, res)
            window_e = energy
    res = float(np.max(np.abs(first_variation(f, p))))
    return BranchReport("", res <= settings.stop_tol, it, energy, res)


def initial_field(name: str, d: Domain2D, p: Potential, b: BoundaryData,
                  eps: float, conn: Optional[ConnectionProfile] = None,
                  halfline: Optional[ConnectionProfile] = None,
                  rng: Optional[np.random.Generator] = None,
                  collar_n: float = 2.0) -> list[tuple[str, Field2D]]:
    """Build the named initialization(s); comparison_field expands to the
    admissible layer constructions for the domain/boundary mode."""
    a_ref = b.a_minus if b.a_minus is not None else p.wells[0]
    if name == "well_constant":
        return [("well_constant", make_field(d, b, eps, fill=a_ref))]
    if name == "random_perturbed":
        rng = rng or np.random.default_rng(0)
        f = make_field(d, b, eps, fill=a_ref)
        noise = rng.standard_normal(f.values[d.inside].shape)
        f.values[d.inside] += settings_amp(p) * noise
        return [("random_perturbed", f)]
    if name == "comparison_field":
        out = []
        if b.mode == "const_z":
            if halfline is None:
                raise ConstructionError("normal_tube init needs the half-line profile")
            out.append(("comparison_normal_tube",
                        build_comparison_field(d, p, b, halfline, "normal_tube", eps)))
            return out
        if conn is None:
            raise ConstructionError("layer inits need the full-line profile")
        out.append(("comparison_boundary_layer",
                    build_comparison_field(d, p, b, conn, "boundary_layer_ABCD", eps)))
        try:
            out.append(("comparison_internal_layer",
                        build_comparison_field(d, p, b, conn, "internal_layer",
                                               eps, collar_n=collar_n)))
        except ConstructionError:
            pass  # rectangle too short for the internal bands at this eps
        return out
    raise ValueError(f"unknown initialization {name!r}")


def settings_amp(p: Potential) -> float:
    sep = p.min_well_separation
    return 0.25 * (sep if np.isfinite(sep) else 1.0)


def minimize(d: Domain2D, p: Potential, b: BoundaryData, eps: float,
             settings: SolveSettings,
             conn: Optional[ConnectionProfile] = None,
             halfline: Optional[ConnectionProfile] = None,
             extra_inits: Optional[list[tuple[str, Field2D]]] = None,
             collar_n: float = 2.0) -> tuple[Field2D, ConvergenceReport]:
    """Multistart minimization; returns the lowest-energy converged branch.

    Initializations come from ``settings.multistart`` plus any ``extra_inits``
    (e.g. continuation warm starts).  A degenerate domain with no interior
    cells returns the boundary-only field with zero iterations.
    """
    settings.validate()
    f0 = make_field(d, b, eps, fill=b.a_minus if b.a_minus is not None else p.wells[0])
    if not np.any(f0.interior_mask()):
        rep = ConvergenceReport("degenerate", 0, total_energy(f0, p).total, 0.0)
        return f0, rep

    rng = np.random.default_rng(settings.seed)
    branches: list[tuple[str, Field2D]] = []
    for name in settings.multistart:
        branches.extend(initial_field(name, d, p, b, eps, conn=conn,
                                      halfline=halfline, rng=rng,
                                      collar_n=collar_n))
    if extra_inits:
        branches.extend(extra_inits)
    if not branches:
        raise MinimizeError("no initializations configured")

    reports: list[BranchReport] = []
    fields: list[Field2D] = []
    for name, f in branches:
        f = project_bound(f, settings.projection_m)
        try:
            rep = _descend(f, p, settings)
        except StepError as exc:
            rep = BranchReport(name, False, 0, np.inf, np.inf)
            rep.init = f"{name} [{exc}]"
            reports.append(rep)
            fields.append(f)
            continue
        rep.init = name
        reports.append(rep)
        fields.append(f)

    converged = [(r, f) for r, f in zip(reports, fields) if r.converged]
    if not converged:
        raise MinimizeError("no initialization converged", reports)
    best, f_best = min(converged, key=lambda rf: rf[0].energy)
    report = ConvergenceReport(winner=best.init, iterations=best.iterations,
                               final_energy=best.energy, residual=best.residual,
                               branches=reports)
    return f_best, report


def interpolate_field(f: Field2D, d_new: Domain2D, b: BoundaryData,
                      eps_new: float) -> Field2D:
    """Bilinear warm start of a solution onto a new grid (continuation)."""
    from scipy.interpolate import RegularGridInterpolator

    out = make_field(d_new, b, eps_new)
    X, Y = d_new.cell_centers()
    pts = np.stack([X[d_new.inside], Y[d_new.inside]], axis=-1)
    for c in range(f.m):
        itp = RegularGridInterpolator(
            (f.domain.xs, f.domain.ys), f.values[..., c],
            bounds_error=False, fill_value=None)
        out.values[d_new.inside, c] = itp(pts)
    return out
