"""Discrete Allen-Cahn energy, first variation, test fields and diagnostics.

The energy of a cell-centered field u with spacing dx is

    E = (eps/2) * sum_faces |u_a - u_b|^2  +  (dx^2/eps) * sum_cells w_c W(u_c),

where the face sum runs over faces with at least one interior cell (the dx^2
from the cell area cancels the 1/dx^2 of the difference quotient in 2D) and
w_c is the cell inside-fraction.  The first variation is the exact gradient of
this sum with respect to the interior nodal values, scaled by the cell area:

    (dE/du_c) / dx^2 = -eps Lap_h(u)_c + w_c W_u(u_c)/eps,

with the standard five-point Laplacian and Dirichlet (ghost) values folded in.

Comparison fields realize the constructive upper bounds:

- ``normal_tube``: half-line profile extended along inward normals (constant
  data on a smooth domain), energy <= sigma_plus * perimeter + O(eps);
- ``boundary_layer_ABCD``: heteroclinic collar of half-width
  eta = eps |ln eps| / (2k) glued under the flat segments, with corner patches
  interpolating to the boundary ramp, energy <= 2 l sigma + O(eps |ln eps|^3);
- ``internal_layer``: a_+ plateau inside the rectangle, a_- outside, vertical
  heteroclinic bands at x = 0 and x = l of half-width
  delta_eps = eps (1 + lambda), lambda = |ln eps^n|, blended to the boundary
  row over the first eps of height, energy <= 2 sigma h + O(eps).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .boundary_data import BoundaryData, boundary_values_for_ghosts
from .connection1d import ConnectionProfile
from .geometry import Domain2D, distance_field
from .potential import Potential

try:  # optional: single-pass face kernels, ~10x on large grids
    from numba import njit
except ImportError:  # pragma: no cover - numba is an optional extra
    njit = None


if njit is not None:

    @njit(cache=True, fastmath=False)
    def _kinetic_and_stencil(u, fx, fy):
        """One pass over faces: (sum_x |du|^2, sum_y |du|^2, sum_c (u_c - u_nb))."""
        nx, ny, m = u.shape
        g = np.zeros_like(u)
        kx = 0.0
        ky = 0.0
        for i in range(nx - 1):
            for j in range(ny):
                if fx[i, j]:
                    for c in range(m):
                        duv = u[i + 1, j, c] - u[i, j, c]
                        kx += duv * duv
                        g[i, j, c] -= duv
                        g[i + 1, j, c] += duv
        for i in range(nx):
            for j in range(ny - 1):
                if fy[i, j]:
                    for c in range(m):
                        duv = u[i, j + 1, c] - u[i, j, c]
                        ky += duv * duv
                        g[i, j, c] -= duv
                        g[i, j + 1, c] += duv
        return kx, ky, g

    @njit(cache=True, fastmath=False)
    def _kinetic_only(u, fx, fy):
        nx, ny, m = u.shape
        kx = 0.0
        ky = 0.0
        for i in range(nx - 1):
            for j in range(ny):
                if fx[i, j]:
                    for c in range(m):
                        duv = u[i + 1, j, c] - u[i, j, c]
                        kx += duv * duv
        for i in range(nx):
            for j in range(ny - 1):
                if fy[i, j]:
                    for c in range(m):
                        duv = u[i, j + 1, c] - u[i, j, c]
                        ky += duv * duv
        return kx, ky
else:
    _kinetic_and_stencil = None
    _kinetic_only = None


class EnergyEvalError(ValueError):
    """Non-finite field values or incompatible shapes."""


class ConstructionError(ValueError):
    """A comparison field cannot be built from the given ingredients."""


@dataclass
class Field2D:
    """Vector-valued grid function with frozen Dirichlet (ghost) values."""

    domain: Domain2D
    eps: float
    values: np.ndarray          # (nx, ny, m)
    frozen: np.ndarray          # (nx, ny) bool

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    def copy(self) -> "Field2D":
        return Field2D(self.domain, self.eps, self.values.copy(), self.frozen)

    def interior_mask(self) -> np.ndarray:
        return self.domain.inside & ~self.frozen


@dataclass
class EnergyBreakdown:
    """Total energy and its exact decomposition.

    total = eps/2 (kinetic_x + kinetic_y) + potential_part / eps, to round-off.
    ``subdomains`` maps names to energy restricted to that cell set (faces
    attributed to a subdomain when their interior cell lies in it).
    """

    total: float
    kinetic_x: float
    kinetic_y: float
    potential_part: float
    eps: float
    subdomains: dict = field(default_factory=dict)


def make_field(d: Domain2D, b: BoundaryData, eps: float,
               fill: Optional[np.ndarray] = None) -> Field2D:
    """Field with ghost values from the boundary data and a constant interior."""
    vals = boundary_values_for_ghosts(b, d)
    if fill is not None:
        fill = np.asarray(fill, dtype=float).reshape(b.m)
        vals[d.inside] = fill
    return Field2D(domain=d, eps=eps, values=vals, frozen=d.ghost.copy())


def _face_masks(d: Domain2D):
    """Boolean masks of x- and y-faces entering the energy (cached on domain)."""
    cache = d._distance_cache
    if "_faces" in cache:
        return cache["_faces"]
    act = d.active
    ins = d.inside
    fx = act[:-1, :] & act[1:, :] & (ins[:-1, :] | ins[1:, :])
    fy = act[:, :-1] & act[:, 1:] & (ins[:, :-1] | ins[:, 1:])
    cache["_faces"] = (fx, fy)
    return fx, fy


def _check_active_finite(f: Field2D) -> bool:
    """True when the whole array is finite; raises when active cells are not."""
    if np.all(np.isfinite(f.values)):
        return True
    if not np.all(np.isfinite(f.values[f.domain.active])):
        raise EnergyEvalError("field has non-finite values on active cells")
    return False


def _potential_weight(d: Domain2D) -> np.ndarray:
    cache = d._distance_cache
    if "_pot_weight" not in cache:
        cache["_pot_weight"] = np.where(d.inside, d.inside_fraction, 0.0)
    return cache["_pot_weight"]


def total_energy(f: Field2D, p: Potential,
                 subdomains: tuple[str, ...] = ()) -> EnergyBreakdown:
    """Energy breakdown of the field; raises on non-finite values."""
    d = f.domain
    u = f.values
    all_finite = _check_active_finite(f)
    fx, fy = _face_masks(d)
    if _kinetic_only is not None:
        kx, ky = _kinetic_only(u, fx, fy)
    else:
        dux = np.diff(u, axis=0)
        duy = np.diff(u, axis=1)
        kx = float(np.sum((dux * dux).sum(axis=-1)[fx]))
        ky = float(np.sum((duy * duy).sum(axis=-1)[fy]))
    if all_finite:
        pot = float(np.sum(p.eval(u) * _potential_weight(d)) * d.dx**2)
    else:
        w = p.eval(u[d.inside])
        pot = float(np.sum(w * d.inside_fraction[d.inside]) * d.dx**2)
    bd = EnergyBreakdown(total=0.5 * f.eps * (kx + ky) + pot / f.eps,
                         kinetic_x=kx, kinetic_y=ky, potential_part=pot,
                         eps=f.eps)
    for name in subdomains:
        bd.subdomains[name] = subdomain_energy(f, p, d.subdomain_mask(name))
    return bd


def subdomain_energy(f: Field2D, p: Potential, mask: np.ndarray) -> float:
    """Energy restricted to a cell mask; faces split half-half between cells."""
    d = f.domain
    u = f.values
    fx, fy = _face_masks(d)
    dux = (np.diff(u, axis=0) ** 2).sum(axis=-1)
    duy = (np.diff(u, axis=1) ** 2).sum(axis=-1)
    half = 0.5 * np.asarray(mask, dtype=float)
    wx = (half[:-1, :] + half[1:, :]) * fx
    wy = (half[:, :-1] + half[:, 1:]) * fy
    kin = float(np.sum(dux * wx) + np.sum(duy * wy))
    w = p.eval(u[mask])
    pot = float(np.sum(w * d.inside_fraction[mask]) * d.dx**2)
    return 0.5 * f.eps * kin + pot / f.eps


def energy_directional(f: Field2D, p: Potential, axis: str,
                       subdomain="all", raw_kinetic: bool = False) -> float:
    """Directional energy int_sub ( eps/2 |du/d(axis)|^2 + W(u)/eps ).

    With ``raw_kinetic`` the unweighted int |du/d(axis)|^2 (no eps, no W) is
    returned instead.  ``subdomain`` is a registered name or a boolean mask.
    """
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    d = f.domain
    mask = d.subdomain_mask(subdomain) if isinstance(subdomain, str) else subdomain
    u = f.values
    fx, fy = _face_masks(d)
    if axis == "x":
        du2 = (np.diff(u, axis=0) ** 2).sum(axis=-1)
        half = 0.5 * np.asarray(mask, dtype=float)
        wgt = (half[:-1, :] + half[1:, :]) * fx
    else:
        du2 = (np.diff(u, axis=1) ** 2).sum(axis=-1)
        half = 0.5 * np.asarray(mask, dtype=float)
        wgt = (half[:, :-1] + half[:, 1:]) * fy
    kin = float(np.sum(du2 * wgt))
    if raw_kinetic:
        return kin
    w = p.eval(u[mask])
    pot = float(np.sum(w * d.inside_fraction[mask]) * d.dx**2)
    return 0.5 * f.eps * kin + pot / f.eps


def first_variation(f: Field2D, p: Potential) -> np.ndarray:
    """Gradient of the discrete energy per unit cell area; zero on frozen rows.

    Equals -eps Lap_h(u) + w W_u(u)/eps at interior cells, with missing
    neighbors (outside the active set) omitted from the Laplacian.
    """
    d = f.domain
    u = f.values
    all_finite = _check_active_finite(f)
    fx, fy = _face_masks(d)
    if _kinetic_and_stencil is not None:
        _, _, g = _kinetic_and_stencil(u, fx, fy)
    else:
        g = np.zeros_like(u)
        dux = np.diff(u, axis=0) * fx[..., None]
        duy = np.diff(u, axis=1) * fy[..., None]
        g[:-1, :] -= dux
        g[1:, :] += dux
        g[:, :-1] -= duy
        g[:, 1:] += duy
    g *= f.eps / d.dx**2
    if all_finite:
        g += (_potential_weight(d) / f.eps)[..., None] * p.grad(u)
    else:
        g[d.inside] += d.inside_fraction[d.inside, None] * p.grad(u[d.inside]) / f.eps
    g *= f.interior_mask()[..., None]
    return g


# ---------------------------------------------------------------------------
# Comparison (test) fields.
# ---------------------------------------------------------------------------

def _profile_lookup(conn: ConnectionProfile):
    """Interpolator t -> v(t) clamped to the profile's end values."""
    s, v = conn.s, conn.v

    def lookup(t):
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (v.shape[1],))
        for c in range(v.shape[1]):
            out[..., c] = np.interp(t, s, v[:, c])
        return out

    return lookup


def _check_tails(conn: ConnectionProfile, tol: float = 1e-4):
    a0, a1 = conn.endpoints
    if np.linalg.norm(conn.v[0] - a0) > tol or np.linalg.norm(conn.v[-1] - a1) > tol:
        raise ConstructionError("profile tails not converged to the wells")


def build_comparison_field(d: Domain2D, p: Potential, b: BoundaryData,
                           conn: ConnectionProfile, mode: str, eps: float,
                           collar_n: float = 2.0) -> Field2D:
    """Explicit test map of the requested type, with frozen boundary values.

    ``conn`` is the half-line profile for ``normal_tube`` and the full-line
    heteroclinic for the two layer modes.  ``collar_n`` is the exponent n in
    lambda = |ln eps^n| for the internal-layer collar width.
    """
    _check_tails(conn)
    if mode == "normal_tube":
        return _normal_tube(d, b, conn, eps)
    if mode == "boundary_layer_ABCD":
        return _boundary_layer(d, b, conn, eps)
    if mode == "internal_layer":
        return _internal_layer(d, b, conn, eps, collar_n)
    raise ValueError(f"unknown comparison-field mode {mode!r}")


def _normal_tube(d: Domain2D, b: BoundaryData, conn: ConnectionProfile,
                 eps: float) -> Field2D:
    if b.mode != "const_z":
        raise ConstructionError("normal_tube needs constant boundary data")
    if np.linalg.norm(conn.v[0] - b.z) > 1e-8:
        raise ConstructionError("half-line profile does not start at z")
    f = make_field(d, b, eps)
    lookup = _profile_lookup(conn)
    dist = distance_field(d, "boundary")
    f.values[d.inside] = lookup(dist[d.inside] / eps)
    return f


def _boundary_layer(d: Domain2D, b: BoundaryData,
                    conn: ConnectionProfile, eps: float) -> Field2D:
    if b.mode != "step_h3":
        raise ConstructionError("boundary_layer_ABCD needs step_h3 data")
    if d.l is None:
        raise ConstructionError("boundary layer needs a rectangle-hypothesis domain")
    a_m, a_p = conn.endpoints
    k = conn.tail_fit.k
    if k <= 0:
        raise ConstructionError("profile tail fit has no positive decay rate")
    eta = eps * abs(np.log(eps)) / (2.0 * k)
    c2 = 1.0  # connector width in units of eps
    if 2 * eta + c2 * eps >= d.h / 2:
        raise ConstructionError(f"collar 2*eta={2 * eta} does not fit under h/2")
    lookup = _profile_lookup(conn)

    def vbar(s):
        """Profile on [-eta, eta]: linear connectors to the wells at the ends."""
        s = np.asarray(s, dtype=float)
        core = lookup(np.clip(s, -eta + c2 * eps, eta - c2 * eps) / eps)
        out = core.copy()
        left = s < -eta + c2 * eps
        t = np.clip((s - (-eta)) / (c2 * eps), 0.0, 1.0)
        out[left] = a_m + t[left, None] * (lookup(np.array([(-eta + c2 * eps) / eps]))[0] - a_m)
        right = s > eta - c2 * eps
        t2 = np.clip((eta - s) / (c2 * eps), 0.0, 1.0)
        out[right] = a_p + t2[right, None] * (lookup(np.array([(eta - c2 * eps) / eps]))[0] - a_p)
        return out

    f = make_field(d, b, eps, fill=a_m)
    X, Y = d.cell_centers()
    ins = d.inside
    x, y = X[ins], Y[ins]
    u = np.broadcast_to(a_m, (x.size, b.m)).copy()

    w = b.c0 * eps
    in_lo = y <= 2 * eta
    in_hi = y >= d.h - 2 * eta
    core_lo = vbar(eta - y[in_lo])
    core_hi = vbar(y[in_hi] - d.h + eta)
    u[in_lo] = core_lo
    u[in_hi] = core_hi

    if w > 0:
        # corner patches: blend the collar profile toward the edge ramp value
        # (left end shown; the horizontal blend factor vanishes at x <= 0 where
        # the data is a_-, and is 1 at x >= C0 eps where the collar takes over)
        t = np.clip(np.minimum(x, d.l - x) / w, 0.0, 1.0)
        for band, core in ((in_lo, core_lo), (in_hi, core_hi)):
            tb = t[band][:, None]
            u[band] = a_m + tb * (core - a_m)
    f.values[ins] = u
    return f


def _internal_layer(d: Domain2D, b: BoundaryData, conn: ConnectionProfile,
                    eps: float, collar_n: float) -> Field2D:
    if b.mode != "step_h3":
        raise ConstructionError("internal_layer needs step_h3 data")
    if d.l is None:
        raise ConstructionError("internal layer needs a rectangle-hypothesis domain")
    a_m, a_p = conn.endpoints
    lam = collar_n * abs(np.log(eps))
    # keep the two bands disjoint on short rectangles
    lam_max = 0.9 * (d.l / (2 * eps) - 1.0)
    if lam_max <= 0.5:
        raise ConstructionError(f"rectangle too short for an internal layer at eps={eps}")
    lam = min(lam, lam_max)
    lookup = _profile_lookup(conn)

    f = make_field(d, b, eps, fill=a_m)
    X, Y = d.cell_centers()
    ins = d.inside
    x, y = X[ins], Y[ins]

    # signed distance into the rectangle from the two vertical lines
    xi = np.minimum(x, d.l - x)
    core = np.broadcast_to(a_m, (x.size, b.m)).copy()
    band = np.abs(xi) <= eps * lam
    core[band] = lookup(xi[band] / eps)
    right = (xi > eps * lam) & (xi <= eps * (lam + 1))
    t = (xi[right] / eps - lam)[:, None]
    core[right] = (1 - t) * lookup(np.array([lam]))[0] + t * a_p
    core[xi > eps * (lam + 1)] = a_p
    left = (xi < -eps * lam) & (xi >= -eps * (lam + 1))
    t = (-xi[left] / eps - lam)[:, None]
    core[left] = (1 - t) * lookup(np.array([-lam]))[0] + t * a_m

    # blend to the boundary row over the first eps of height (B/D bands)
    u = core.copy()
    gb = b.eval_on_segment(np.clip(x, 0.0, d.l), d.l)
    gb[(x < 0) | (x > d.l)] = a_m
    lo = y <= eps
    u[lo] = gb[lo] + (y[lo] / eps)[:, None] * (core[lo] - gb[lo])
    hi = y >= d.h - eps
    u[hi] = gb[hi] + ((d.h - y[hi]) / eps)[:, None] * (core[hi] - gb[hi])
    outside_band = (y < 0) | (y > d.h)
    u[outside_band] = a_m

    f.values[ins] = u
    return f


# ---------------------------------------------------------------------------
# Diagnostics: Hamiltonian identity and the pointwise gradient inequality.
# ---------------------------------------------------------------------------

@dataclass
class HamiltonianRecord:
    """The four integrals of the rectangle identity, in rescaled variables.

    top_integral:    int [ (|U_xi|^2 - |U_eta|^2)/2 + W(U) ] dxi on the top edge
    bottom_integral: (1/2) int |U_eta(xi, 0)|^2 dxi on the bottom edge
    flux_left/right: int U_xi . U_eta d(eta) on the side edges
    residual:        (top + bottom) - (flux_left - flux_right)
    """

    top_integral: float
    bottom_integral: float
    flux_left: float
    flux_right: float
    abs_flux_left: float
    abs_flux_right: float
    residual: float
    rect: tuple[float, float, float, float]


def _grad_components(f: Field2D) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient using frozen values, one-sided at edges."""
    d = f.domain
    u = f.values
    act = d.active
    ux = np.zeros_like(u)
    uy = np.zeros_like(u)
    for axis, out in ((0, ux), (1, uy)):
        up = np.roll(u, -1, axis=axis)
        um = np.roll(u, 1, axis=axis)
        has_p = np.roll(act, -1, axis=axis) & act
        has_m = np.roll(act, 1, axis=axis) & act
        edge = [slice(None)] * 2
        edge[axis] = -1
        has_p[tuple(edge)] = False
        edge[axis] = 0
        has_m[tuple(edge)] = False
        both = has_p & has_m
        out[both] = (up[both] - um[both]) / (2 * d.dx)
        onlyp = has_p & ~has_m
        out[onlyp] = (up[onlyp] - u[onlyp]) / d.dx
        onlym = has_m & ~has_p
        out[onlym] = (u[onlym] - um[onlym]) / d.dx
    return ux, uy


def hamiltonian_flux(f: Field2D, p: Potential,
                     rect: tuple[float, float, float, float]) -> HamiltonianRecord:
    """Evaluate the rectangle flux-balance identity on a physical rectangle.

    ``rect`` = (x_lo, x_hi, y_lo, y_hi); the bottom edge may lie on the
    boundary (that is the interesting case).  Derivatives and lengths are
    rescaled internally: U_xi = eps u_x, dxi = dx/eps.
    """
    d = f.domain
    eps = f.eps
    x_lo, x_hi, y_lo, y_hi = rect
    i_lo = int(round((x_lo - d.x0) / d.dx))
    i_hi = int(round((x_hi - d.x0) / d.dx))
    j_lo = int(round((y_lo - d.y0) / d.dx))
    j_hi = int(round((y_hi - d.y0) / d.dx))
    if not (0 <= i_lo < i_hi < d.nx and 0 <= j_lo < j_hi < d.ny):
        raise ValueError("rectangle outside the grid")
    if not np.all(d.active[i_lo:i_hi + 1, j_lo:j_hi + 1]):
        raise ValueError("rectangle clipped by the domain")

    ux, uy = _grad_components(f)
    u = f.values
    dxi = d.dx / eps

    def top_term(j):
        uxr = eps * ux[i_lo:i_hi + 1, j]
        uyr = eps * uy[i_lo:i_hi + 1, j]
        g = 0.5 * ((uxr**2).sum(-1) - (uyr**2).sum(-1)) + p.eval(u[i_lo:i_hi + 1, j])
        return float(np.trapezoid(g, dx=dxi))

    top = top_term(j_hi)
    uyb = eps * uy[i_lo:i_hi + 1, j_lo]
    bottom = 0.5 * float(np.trapezoid((uyb**2).sum(-1), dx=dxi))

    def side_flux(i):
        prod = (eps * ux[i, j_lo:j_hi + 1] * eps * uy[i, j_lo:j_hi + 1]).sum(-1)
        return (float(np.trapezoid(prod, dx=dxi)),
                float(np.trapezoid(np.abs(prod), dx=dxi)))

    fl, afl = side_flux(i_lo)
    fr, afr = side_flux(i_hi)
    residual = (top + bottom) - (fl - fr)
    return HamiltonianRecord(top, bottom, fl, fr, afl, afr, residual,
                             (d.x0 + i_lo * d.dx, d.x0 + i_hi * d.dx,
                              d.y0 + j_lo * d.dx, d.y0 + j_hi * d.dx))


@dataclass
class ModicaResult:
    residual: np.ndarray   # (nx, ny), zero off the interior
    max_residual: float
    violation_area: float  # area where the residual exceeds the tolerance


def modica_residual(f: Field2D, p: Potential, tol: float = 1e-3,
                    allow_vector: bool = False) -> ModicaResult:
    """Pointwise max(0, eps^2 |grad u|^2 / 2 - W(u)) on interior cells.

    The inequality is a scalar (m = 1) fact; for m >= 2 it is not generally
    valid and the call is refused unless ``allow_vector`` is set.
    """
    if f.m != 1 and not allow_vector:
        raise ValueError("pointwise gradient inequality is scalar-only (m == 1)")
    d = f.domain
    ux, uy = _grad_components(f)
    g2 = (ux**2 + uy**2).sum(axis=-1)
    res = 0.5 * f.eps**2 * g2 - p.eval(f.values)
    out = np.maximum(res, 0.0)
    out[~f.interior_mask()] = 0.0
    max_res = float(np.max(out)) if np.any(f.interior_mask()) else 0.0
    area = float(np.count_nonzero(out > tol) * d.dx**2)
    return ModicaResult(residual=out, max_residual=max_res, violation_area=area)
