"""Multi-well potentials W: R^m -> R and their quadratic well constants.

A potential is admissible when it is C^2, nonnegative, vanishes exactly on a
finite well set A = {a_1, ..., a_N}, has positive definite Hessians at the
wells, stays bounded away from zero at infinity, and satisfies the outward
coercivity W_u(u).u > 0 for |u| > M.

Near each well the potential is trapped between two quadratics,

    c_W^2 delta^2 / 2  <=  W(u)  <=  C_W^2 delta^2 / 2   on |u - a| = delta,

for delta <= delta_W; :func:`well_constants` estimates (delta_W, c_W, C_W) by
sphere sampling so the same code path works for user-supplied potentials.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class PotentialDomainError(ValueError):
    """Raised when a potential is evaluated at a non-finite point."""


class ConstantsNotValidError(ValueError):
    """Raised when quadratic trapping fails on the sampled sphere or exterior."""


@dataclass(frozen=True)
class Potential:
    """A multi-well potential with evaluation, gradient and well metadata.

    ``eval_fn`` and ``grad_fn`` must accept arrays of shape (..., m) and return
    shapes (...) and (..., m) respectively.  ``coercivity_radius`` is the M of
    the outward-coercivity hypothesis; ``hess_fn`` is optional (finite
    differences of the gradient are used when absent).
    """

    name: str
    dimension: int
    wells: np.ndarray  # (N, m)
    eval_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    coercivity_radius: float
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        wells = np.atleast_2d(np.asarray(self.wells, dtype=float))
        object.__setattr__(self, "wells", wells)
        if wells.shape[1] != self.dimension:
            raise ValueError(f"wells have dimension {wells.shape[1]}, expected {self.dimension}")

    @property
    def n_wells(self) -> int:
        return self.wells.shape[0]

    @property
    def min_well_separation(self) -> float:
        if self.n_wells < 2:
            return np.inf
        d = np.linalg.norm(self.wells[:, None, :] - self.wells[None, :, :], axis=-1)
        return float(np.min(d[~np.eye(self.n_wells, dtype=bool)]))

    @property
    def default_delta_w(self) -> float:
        """Default trapping radius: 0.2 x minimal well separation."""
        sep = self.min_well_separation
        return 0.2 * sep if np.isfinite(sep) else 0.2

    def eval(self, u) -> np.ndarray:
        u = _check_finite(u, self.dimension)
        return np.asarray(self.eval_fn(u), dtype=float)

    def grad(self, u) -> np.ndarray:
        u = _check_finite(u, self.dimension)
        return np.asarray(self.grad_fn(u), dtype=float)

    def hess_at_well(self, i: int) -> np.ndarray:
        """m x m Hessian of W at well i (analytic if provided, else FD of grad)."""
        a = self.wells[i]
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(a), dtype=float)
        m = self.dimension
        H = np.zeros((m, m))
        step = 1e-5
        for j in range(m):
            e = np.zeros(m)
            e[j] = step
            H[:, j] = (self.grad(a + e) - self.grad(a - e)) / (2 * step)
        return 0.5 * (H + H.T)

    def nearest_well(self, u) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of the nearest well for points of shape (..., m)."""
        u = np.asarray(u, dtype=float)
        d = np.linalg.norm(u[..., None, :] - self.wells, axis=-1)
        idx = np.argmin(d, axis=-1)
        return idx, np.min(d, axis=-1)


@dataclass(frozen=True)
class WellConstants:
    """Quadratic trapping constants on the spheres |u - a| = delta <= delta_W."""

    delta_w: float
    c_w: float
    big_c_w: float


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    witness: Optional[np.ndarray] = None
    detail: str = ""


@dataclass
class HypothesisReport:
    checks: list[HypothesisCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed_checks(self) -> list[HypothesisCheck]:
        return [c for c in self.checks if not c.passed]


def eval_potential(p: Potential, u) -> np.ndarray:
    """W(u) >= 0; zero exactly on the wells (to machine tolerance)."""
    return p.eval(u)


def eval_gradient(p: Potential, u) -> np.ndarray:
    """W_u(u), consistent with centered finite differences of eval_potential."""
    return p.grad(u)


def _check_finite(u, m: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape == () and m == 1:
        u = u.reshape(1)
    if u.shape[-1] != m:
        raise ValueError(f"point has dimension {u.shape[-1]}, expected {m}")
    if not np.all(np.isfinite(u)):
        raise PotentialDomainError("non-finite input point")
    return u


def _sphere_directions(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        th = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    v = rng.standard_normal((n, m))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def well_constants(p: Potential, delta: float, n_directions: int = 1024,
                   seed: int = 0) -> WellConstants:
    """Estimate (delta_W, c_W, C_W) by sampling 2W/delta^2 on the well spheres.

    Also re-verifies the exterior bound W >= c_W^2 delta^2 / 2 at sampled points
    with min_a |u - a| >= delta.  Raises :class:`ConstantsNotValidError` when
    trapping fails (delta too large).
    """
    if not 0 < delta < 0.5 * p.min_well_separation:
        raise ValueError(f"delta must lie in (0, half minimal well separation); got {delta}")
    rng = np.random.default_rng(seed)
    dirs = _sphere_directions(p.dimension, n_directions, rng)
    ratios = []
    for a in p.wells:
        ratios.append(2.0 * p.eval(a + delta * dirs) / delta**2)
    ratios = np.concatenate(ratios)
    c2, C2 = float(np.min(ratios)), float(np.max(ratios))
    if c2 <= 0:
        raise ConstantsNotValidError(
            f"quadratic trapping fails at delta={delta}: min 2W/delta^2 = {c2}")
    c_w, big_c_w = np.sqrt(c2), np.sqrt(C2)

    # exterior re-verification: W >= c_W^2 delta^2/2 wherever min dist >= delta
    box = max(p.coercivity_radius, np.max(np.abs(p.wells)) + 1.0)
    pts = rng.uniform(-box, box, size=(4096, p.dimension))
    _, dist = p.nearest_well(pts)
    far = pts[dist >= delta]
    if far.size:
        w = p.eval(far)
        bound = 0.5 * c2 * delta**2
        bad = w < bound * (1 - 1e-9)
        if np.any(bad):
            raise ConstantsNotValidError(
                f"exterior bound fails at delta={delta}: W={np.min(w[bad])} "
                f"< {bound} at {far[bad][0]}")
    return WellConstants(delta_w=delta, c_w=float(c_w), big_c_w=float(big_c_w))


def validate_hypotheses(p: Potential, sample_budget: int = 4096,
                        seed: int = 0) -> HypothesisReport:
    """Randomized + structured sampling check of the potential hypotheses.

    Checks, with witness points on failure: wells are nondegenerate zeros,
    positivity outside well balls, no extra zeros (finite well set), growth at
    infinity, outward coercivity beyond M, and positive definite well Hessians.
    """
    if sample_budget < 1000:
        raise ValueError("sample_budget must be >= 1000")
    rng = np.random.default_rng(seed)
    report = HypothesisReport()
    M = p.coercivity_radius
    box = max(M, np.max(np.abs(p.wells)) + 1.0)

    w_at_wells = p.eval(p.wells)
    g_at_wells = np.linalg.norm(p.grad(p.wells), axis=-1)
    ok = np.all(np.abs(w_at_wells) < 1e-10) and np.all(g_at_wells < 1e-8)
    report.checks.append(HypothesisCheck(
        "wells_are_critical_zeros", bool(ok),
        None if ok else p.wells[int(np.argmax(np.abs(w_at_wells)))]))

    # quadratic reference level on the delta_W spheres; any far sample dipping
    # well below it betrays an undeclared zero (e.g. a periodic potential)
    delta = p.default_delta_w
    dirs = _sphere_directions(p.dimension, 512, rng)
    c_ref2 = min(float(np.min(2.0 * p.eval(a + delta * dirs) / delta**2))
                 for a in p.wells)
    floor = 0.25 * max(c_ref2, 0.0) * delta**2
    pts = rng.uniform(-box, box, size=(sample_budget, p.dimension))
    _, dist = p.nearest_well(pts)
    outside = pts[dist > delta]
    w = p.eval(outside)
    zeroish = w < floor
    ok = not np.any(zeroish)
    report.checks.append(HypothesisCheck(
        "finite_zero_set", bool(ok),
        None if ok else outside[zeroish][0],
        "" if ok else f"W dips below the well-sphere level {floor:.3e} "
                      "away from the declared wells"))
    ok2 = np.all(w > 0)
    report.checks.append(HypothesisCheck(
        "positive_outside_wells", bool(ok2), None if ok2 else outside[np.argmin(w)][None]))

    # liminf at infinity: sample shells |u| in [box, 2 box]
    dirs = _sphere_directions(p.dimension, 256, rng)
    radii = np.linspace(box, 2 * box, 8)
    shell = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, p.dimension)
    wfar = p.eval(shell)
    ok = np.all(wfar > 1e-8)
    report.checks.append(HypothesisCheck(
        "liminf_positive_at_infinity", bool(ok), None if ok else shell[np.argmin(wfar)]))

    # outward coercivity for |u| > M
    shell = (np.linspace(M * 1.001, 2 * M, 8)[:, None, None] * dirs[None, :, :])
    shell = shell.reshape(-1, p.dimension)
    dot = np.sum(p.grad(shell) * shell, axis=-1)
    ok = np.all(dot > 0)
    report.checks.append(HypothesisCheck(
        "outward_coercivity_beyond_M", bool(ok), None if ok else shell[np.argmin(dot)]))

    for i in range(p.n_wells):
        H = p.hess_at_well(i)
        ev = np.linalg.eigvalsh(0.5 * (H + H.T))
        ok = bool(np.all(ev > 0)) and np.allclose(H, H.T, atol=1e-6)
        report.checks.append(HypothesisCheck(
            f"well_{i}_hessian_spd", ok, None if ok else p.wells[i],
            f"eigenvalues {ev}"))
    return report


# ---------------------------------------------------------------------------
# Built-in potential zoo.
# ---------------------------------------------------------------------------

def quartic_double_well() -> Potential:
    """Scalar W(u) = (1 - u^2)^2 / 4 with wells {-1, 1}; W''(+-1) = 2."""

    def ev(u):
        return 0.25 * (1.0 - u[..., 0] ** 2) ** 2

    def gr(u):
        return (u[..., 0] ** 3 - u[..., 0])[..., None]

    def hess(u):
        return np.array([[3.0 * u[0] ** 2 - 1.0]])

    return Potential("quartic_double_well", 1, [[-1.0], [1.0]], ev, gr, 2.0, hess)


def two_well() -> Potential:
    """Planar W(u) = |u - a_-|^2 |u - a_+|^2 with a_+- = (+-1, 0)."""
    a_m = np.array([-1.0, 0.0])
    a_p = np.array([1.0, 0.0])

    def ev(u):
        dm = np.sum((u - a_m) ** 2, axis=-1)
        dp = np.sum((u - a_p) ** 2, axis=-1)
        return dm * dp

    def gr(u):
        dm = np.sum((u - a_m) ** 2, axis=-1)[..., None]
        dp = np.sum((u - a_p) ** 2, axis=-1)[..., None]
        return 2.0 * (u - a_m) * dp + 2.0 * (u - a_p) * dm

    return Potential("two_well", 2, [a_m, a_p], ev, gr, 3.0)


def triple_well() -> Potential:
    """Planar W(u) = prod_i |u - a_i|^2 with wells at the cube roots of unity."""
    ws = np.array([[np.cos(2 * np.pi * k / 3), np.sin(2 * np.pi * k / 3)] for k in range(3)])

    def ev(u):
        out = np.ones(np.asarray(u).shape[:-1])
        for a in ws:
            out = out * np.sum((u - a) ** 2, axis=-1)
        return out

    def gr(u):
        d2 = [np.sum((u - a) ** 2, axis=-1) for a in ws]
        out = np.zeros_like(np.asarray(u, dtype=float))
        for i, a in enumerate(ws):
            prod = np.ones_like(d2[0])
            for j, dj in enumerate(d2):
                if j != i:
                    prod = prod * dj
            out = out + 2.0 * (u - a) * prod[..., None]
        return out

    return Potential("triple_well", 2, ws, ev, gr, 3.0)


POTENTIALS: dict[str, Callable[..., Potential]] = {
    "quartic_double_well": quartic_double_well,
    "two_well": two_well,
    "triple_well": triple_well,
}


def make_potential(name: str, **params) -> Potential:
    """Look up a potential by registry name (run-config entry point)."""
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise KeyError(f"unknown potential {name!r}; known: {sorted(POTENTIALS)}") from None
    return factory(**params)
