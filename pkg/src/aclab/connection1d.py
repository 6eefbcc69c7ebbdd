"""1D action minimization: heteroclinic connections and half-line profiles.

Discretizes the action

    J(v) = int ( |v'|^2 / 2 + W(v) ) ds

on a uniform grid (forward differences on segments, trapezoid weights on W) and
minimizes it by damped gradient descent with Barzilai-Borwein steps.  Three
problems are solved:

- full line:  v(-inf) = a_-, free arrival well; minimal action sigma,
- half line:  v(0) = z pinned, free arrival; minimal action sigma_plus,
- competitor: half-line action into A minus the optimal arrival set, sigma_star.

Also provides the delta-corrected lower-bound certificate

    J >= sigma - C_W (delta_-^2 + delta_+^2) / 2

for segments whose ends land on the delta-spheres around the wells, and the
fiber-structure classifier used on 1D restrictions of 2D minimizers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .potential import Potential


class SolverError(RuntimeError):
    """Gradient descent failed to converge within the iteration cap."""


class NoCompetitorError(ValueError):
    """sigma_star requested but the competitor arrival set is empty."""


@dataclass
class TailFit:
    """Exponential tail envelope |v(s) - a| <= K exp(-k |s - s0|)."""

    k: float
    K: float
    n_points: int = 0


@dataclass
class ConnectionProfile:
    """A discretized 1D connection and its diagnostics.

    ``s`` is a uniform grid, ``v`` the (n, m) samples.  ``action`` is the
    trapezoid-discretized value of J at eps = 1.  ``endpoints`` are the declared
    targets (a_-, a_+) or (z, a_+); ``arrival_set`` lists well indices tied for
    the optimal arrival (ties broken lexicographically in the returned profile).
    """

    s: np.ndarray
    v: np.ndarray
    action: float
    endpoints: tuple[np.ndarray, np.ndarray]
    tail_fit: TailFit
    equipartition_residual: float
    arrival_index: int
    arrival_set: list[int] = field(default_factory=list)
    eps: float = 1.0
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0
    tail_correction: float = 0.0

    @property
    def n(self) -> int:
        return self.s.size

    @property
    def h(self) -> float:
        return float(self.s[1] - self.s[0])


# ---------------------------------------------------------------------------
# Discrete action and its gradient.
# ---------------------------------------------------------------------------

def _discrete_action(v: np.ndarray, h: float, p: Potential) -> float:
    dv = np.diff(v, axis=0)
    kin = 0.5 * np.sum(dv * dv) / h
    w = p.eval(v)
    pot = h * (np.sum(w) - 0.5 * w[0] - 0.5 * w[-1])
    return float(kin + pot)


def _action_gradient(v: np.ndarray, h: float, p: Potential) -> np.ndarray:
    g = np.zeros_like(v)
    g[1:-1] = (2.0 * v[1:-1] - v[:-2] - v[2:]) / h
    g[0] = (v[0] - v[1]) / h
    g[-1] = (v[-1] - v[-2]) / h
    wt = np.ones(v.shape[0])
    wt[0] = wt[-1] = 0.5
    g += h * wt[:, None] * p.grad(v)
    return g


STALL_RES = 1e-2       # residual ceiling for accepting an action plateau
PLATEAU_WINDOW = 2000  # iterations per plateau check
PLATEAU_DROP = 2e-10   # relative action drop per window that counts as progress


def _bb_descend(v0: np.ndarray, h: float, p: Potential, free: np.ndarray,
                tol: float = 1e-9, max_iter: int = 60000) -> tuple[np.ndarray, int, float]:
    """Damped BB gradient descent of the discrete action over the free nodes.

    ``free`` is a boolean node mask; pinned nodes keep their initial values.
    Returns (v, iterations, residual) with residual = max |grad|/h over free
    nodes, a discrete Euler-Lagrange residual.  Profiles with an almost-flat
    layer-translation mode never push the residual below ``tol``; once the
    action stops dropping across a window the iterate is accepted (the layer
    position is energetically neutral there, the action is converged).
    Anything worse raises :class:`SolverError` with the last residual.
    """
    v = v0.copy()
    g = _action_gradient(v, h, p)
    g[~free] = 0.0
    J = _discrete_action(v, h, p)
    tau = h
    v_prev = g_prev = None
    res = float(np.max(np.abs(g)) / h)
    window_j = J
    it = 0
    for it in range(1, max_iter + 1):
        if v_prev is not None:
            dv = (v - v_prev).ravel()
            dg = (g - g_prev).ravel()
            denom = dv @ dg
            tau = dv @ dv / denom if denom > 1e-300 else h
            tau = float(np.clip(tau, 1e-8, 1e4))
        v_prev, g_prev, J_prev = v, g, J
        # damping: halve the step until the action decreases
        while True:
            v_new = v - tau * g
            J_new = _discrete_action(v_new, h, p)
            if J_new <= J_prev + 1e-15 * (1.0 + abs(J_prev)):
                break
            tau *= 0.5
            if tau < 1e-15:
                raise SolverError(f"backtracking exhausted at iteration {it}, "
                                  f"residual {res:.3e}")
        v, J = v_new, J_new
        g = _action_gradient(v, h, p)
        g[~free] = 0.0
        res = float(np.max(np.abs(g)) / h)
        if res < tol:
            return v, it, res
        if it % PLATEAU_WINDOW == 0:
            if window_j - J < PLATEAU_DROP * (1.0 + abs(J)) and res < STALL_RES:
                return v, it, res
            window_j = J
    if res < STALL_RES:
        return v, it, res
    raise SolverError(f"no convergence in {max_iter} iterations; last residual "
                      f"{res:.3e}")


def _equipartition_residual(s: np.ndarray, v: np.ndarray, p: Potential) -> float:
    vp = np.gradient(v, s, axis=0, edge_order=2)
    return float(np.max(np.abs(0.5 * np.sum(vp * vp, axis=-1) - p.eval(v))))


def _fit_tail(s: np.ndarray, v: np.ndarray, a: np.ndarray, side: str,
              lo: float = 1e-8, hi: float = 1e-2) -> TailFit:
    """Least-squares fit of log|v - a| against |s| on one tail."""
    dev = np.linalg.norm(v - a, axis=-1)
    mask = (dev > lo) & (dev < hi)
    if side == "left":
        t = -s
    else:
        t = s
    mask &= t > 0
    if np.count_nonzero(mask) < 4:
        return TailFit(k=0.0, K=0.0, n_points=int(np.count_nonzero(mask)))
    A = np.stack([np.ones(np.count_nonzero(mask)), -t[mask]], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(dev[mask]), rcond=None)
    return TailFit(k=float(coef[1]), K=float(np.exp(coef[0])),
                   n_points=int(np.count_nonzero(mask)))


def _tail_correction(fit: TailFit, span: float) -> float:
    """Estimated action truncated beyond the grid, from the fitted envelope.

    For |v - a| <= K e^{-k t}, the tail action is ~ k K^2 e^{-2 k span}
    (kinetic and potential each contribute k K^2 e^{-2k span} / 2 at
    equipartition).  Reported, never silently added to the action.
    """
    if fit.k <= 0:
        return 0.0
    return float(fit.k * fit.K**2 * np.exp(-2.0 * fit.k * span))


# ---------------------------------------------------------------------------
# Solvers.
# ---------------------------------------------------------------------------

def solve_connection(p: Potential, a_minus, L: float = 20.0, n: int = 2048,
                     tol: float = 1e-9, max_iter: int = 50000,
                     init: Optional[np.ndarray] = None) -> ConnectionProfile:
    """Minimal full-line connection leaving the well ``a_minus``.

    The arriving well is discovered, not prescribed: a tanh-like ansatz toward
    each other well is relaxed and the lowest action kept.  Both endpoints are
    free (natural boundary conditions); L >= 10 and n >= 256 keep the
    truncation error below double-precision noise for the built-in zoo.
    """
    if L < 10:
        raise ValueError("L must be >= 10 (truncation rule)")
    if n < 256:
        raise ValueError("n must be >= 256")
    a_minus = np.asarray(a_minus, dtype=float).reshape(p.dimension)
    i_minus = int(np.argmin(np.linalg.norm(p.wells - a_minus, axis=1)))
    if np.linalg.norm(p.wells[i_minus] - a_minus) > 1e-8:
        raise ValueError(f"a_minus {a_minus} is not a well of {p.name}")
    if p.n_wells < 2:
        raise ValueError("need at least two wells for a connection")

    s = np.linspace(-L, L, n)
    h = s[1] - s[0]
    free = np.ones(n, dtype=bool)

    if init is not None:
        inits = [np.array(init, dtype=float)]
        if np.max(np.linalg.norm(inits[0] - inits[0][0], axis=-1)) < 1e-12:
            raise ValueError("constant initialization is a zero-gradient "
                             "saddle of the discrete action; perturb it")
    else:
        ramp = 0.5 * (1.0 + np.tanh(s))[:, None]
        inits = [a_minus + ramp * (p.wells[j] - a_minus)
                 for j in range(p.n_wells) if j != i_minus]

    candidates = []
    failures = []
    for v0 in inits:
        try:
            v, it, res = _bb_descend(v0, h, p, free, tol=tol, max_iter=max_iter)
        except SolverError as exc:
            failures.append(str(exc))
            continue
        j = int(np.argmin(np.linalg.norm(p.wells - v[-1], axis=1)))
        candidates.append((_discrete_action(v, h, p), j, v, it, res))
    if not candidates:
        raise SolverError("no connection initialization converged; "
                          + "; ".join(failures))

    actions = np.array([c[0] for c in candidates])
    best = float(np.min(actions))
    tied = [c for c in candidates if c[0] <= best * (1 + 1e-9) + 1e-12]
    # deterministic tie-break: lexicographically smallest arrival well
    tied.sort(key=lambda c: tuple(p.wells[c[1]]))
    action_val, j_best, v, it, res = tied[0]
    arrival_set = sorted(c[1] for c in tied)

    a_plus = p.wells[j_best]
    for endpoint, well in ((v[0], a_minus), (v[-1], a_plus)):
        if np.linalg.norm(endpoint - well) > 1e-6:
            raise SolverError(f"endpoint {endpoint} did not reach well {well}")

    fit_l = _fit_tail(s, v, a_minus, "left")
    fit_r = _fit_tail(s, v, a_plus, "right")
    fit = TailFit(k=min(fit_l.k, fit_r.k), K=max(fit_l.K, fit_r.K),
                  n_points=fit_l.n_points + fit_r.n_points)
    return ConnectionProfile(
        s=s, v=v, action=action_val, endpoints=(a_minus, a_plus),
        tail_fit=fit, equipartition_residual=_equipartition_residual(s, v, p),
        arrival_index=j_best, arrival_set=arrival_set,
        converged=True, iterations=it, residual=res,
        tail_correction=_tail_correction(fit_l, L) + _tail_correction(fit_r, L))


def solve_halfline(p: Potential, z, L: float = 20.0, n: int = 2048,
                   tol: float = 1e-9, max_iter: int = 20000,
                   allowed_wells: Optional[Sequence[int]] = None,
                   pin_arrival: bool = False) -> ConnectionProfile:
    """Minimal half-line connection from the pinned value z into the well set.

    v(0) = z is held fixed, the far end is free; every allowed well is tried as
    an initialization target and the minimum kept.  Arrival requires
    |v(L) - a| < 1e-6; initializations that stall without arriving are
    discarded.  With ``pin_arrival`` the far end is clamped to the target well
    (used for forced-arrival competitor actions, where the free-end problem
    would let the layer drift off the truncated interval).  Ties (symmetric z)
    keep the full optimal set in ``arrival_set`` and return the
    lexicographically smallest well.
    """
    z = np.asarray(z, dtype=float).reshape(p.dimension)
    _, dist = p.nearest_well(z)
    if dist < 1e-8:
        raise ValueError("z coincides with a well; already connected")
    if L < 10:
        raise ValueError("L must be >= 10")
    if n < 256:
        raise ValueError("n must be >= 256")

    s = np.linspace(0.0, L, n)
    h = s[1] - s[0]
    free = np.ones(n, dtype=bool)
    free[0] = False
    if pin_arrival:
        free[-1] = False
    wells = range(p.n_wells) if allowed_wells is None else allowed_wells
    wells = list(wells)
    if not wells:
        raise NoCompetitorError("empty arrival set")

    candidates = []
    failures = []
    for j in wells:
        v0 = p.wells[j] + (z - p.wells[j]) * np.exp(-s)[:, None]
        v0[0] = z
        if pin_arrival:
            v0[-1] = p.wells[j]
        try:
            v, it, res = _bb_descend(v0, h, p, free, tol=tol, max_iter=max_iter)
        except SolverError as exc:
            failures.append(f"well {j}: {exc}")
            continue
        arr = int(np.argmin(np.linalg.norm(p.wells - v[-1], axis=1)))
        if np.linalg.norm(v[-1] - p.wells[arr]) >= 1e-6:
            continue  # failed arrival from this target
        candidates.append((_discrete_action(v, h, p), arr, v, it, res))
    if not candidates:
        raise SolverError("no half-line initialization reached a well; "
                          + "; ".join(failures))

    actions = np.array([c[0] for c in candidates])
    best = float(np.min(actions))
    tied = [c for c in candidates if c[0] <= best * (1 + 1e-9) + 1e-12]
    tied.sort(key=lambda c: tuple(p.wells[c[1]]))
    action_val, j_best, v, it, res = tied[0]
    arrival_set = sorted({c[1] for c in tied})

    a_plus = p.wells[j_best]
    fit = _fit_tail(s, v, a_plus, "right")
    return ConnectionProfile(
        s=s, v=v, action=action_val, endpoints=(z, a_plus),
        tail_fit=fit, equipartition_residual=_equipartition_residual(s, v, p),
        arrival_index=j_best, arrival_set=arrival_set,
        converged=True, iterations=it, residual=res,
        tail_correction=_tail_correction(fit, L))


@dataclass
class SigmaStarResult:
    """Competitor half-line action with both tie conventions reported.

    ``value`` excludes exactly the wells passed by the caller;
    ``value_excluding_optimal_set`` additionally excludes every well tied for
    the optimal arrival (None when that leaves no competitor).
    """

    value: float
    excluded: list[int]
    arrival_index: int
    value_excluding_optimal_set: Optional[float] = None


def sigma_star(p: Potential, z, excluded, L: float = 20.0, n: int = 2048,
               optimal_set: Optional[Sequence[int]] = None) -> SigmaStarResult:
    """Minimal half-line action from z into A minus the excluded well(s).

    ``excluded`` is a well index, a well point, or a sequence of either.
    Satisfies sigma_star >= sigma_plus.  With fewer than two wells, or when the
    exclusion empties the arrival set, raises :class:`NoCompetitorError`.
    """
    if p.n_wells < 2:
        raise NoCompetitorError("need at least two wells for a competitor action")
    excl = _well_indices(p, excluded)
    allowed = [j for j in range(p.n_wells) if j not in excl]
    if not allowed:
        raise NoCompetitorError(f"excluding {sorted(excl)} leaves no competitor well")
    prof = solve_halfline(p, z, L=L, n=n, allowed_wells=allowed, pin_arrival=True)
    value2 = None
    if optimal_set is not None:
        allowed2 = [j for j in range(p.n_wells) if j not in set(optimal_set) | excl]
        if allowed2:
            value2 = solve_halfline(p, z, L=L, n=n, allowed_wells=allowed2,
                                    pin_arrival=True).action
    return SigmaStarResult(value=prof.action, excluded=sorted(excl),
                           arrival_index=prof.arrival_index,
                           value_excluding_optimal_set=value2)


def _well_indices(p: Potential, spec) -> set[int]:
    if isinstance(spec, (int, np.integer)):
        return {int(spec)}
    arr = np.asarray(spec, dtype=float)
    if arr.ndim <= 1 and arr.size == p.dimension:
        j = int(np.argmin(np.linalg.norm(p.wells - arr.reshape(-1), axis=1)))
        return {j}
    out: set[int] = set()
    for item in spec:
        out |= _well_indices(p, item)
    return out


def action(p: Potential, s: np.ndarray, v: np.ndarray, eps: float = 1.0) -> float:
    """Trapezoid value of J_eps over the sampled range.

    J_eps(v) = int ( eps |v'|^2 / 2 + W(v)/eps ) ds on the uniform grid s.
    Invariant under the rescaling s -> s/eps (change of variables is exact for
    the discrete sum when the sample count is unchanged).
    """
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if s.size < 2:
        raise ValueError("need at least 2 samples")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(v))):
        raise ValueError("non-finite samples")
    h = s[1] - s[0]
    if not np.allclose(np.diff(s), h, rtol=1e-8):
        raise ValueError("grid must be uniform")
    dv = np.diff(v, axis=0)
    kin = 0.5 * eps * np.sum(dv * dv) / h
    w = p.eval(v)
    pot = (h / eps) * (np.sum(w) - 0.5 * w[0] - 0.5 * w[-1])
    return float(kin + pot)


def lower_bound_delta(sigma: float, big_c_w: float, delta_minus: float,
                      delta_plus: float) -> float:
    """Certified lower bound sigma - C_W (delta_-^2 + delta_+^2) / 2.

    Valid for the action of any segment whose ends land on the delta_- and
    delta_+ spheres around a_- and a_+ (deltas must stay within delta_W).
    """
    if delta_minus < 0 or delta_plus < 0:
        raise ValueError("deltas must be nonnegative")
    return float(sigma - 0.5 * big_c_w * (delta_minus**2 + delta_plus**2))


# ---------------------------------------------------------------------------
# Fiber-structure classifier for 1D restrictions of 2D fields.
# ---------------------------------------------------------------------------

FIBER_GOOD = "W_star"          # single clean transition, small excursion set
FIBER_THIRD_WELL = "V_a"       # visits a third well or revisits a_- after a_+
FIBER_FAT = "W_hat_c"          # excursion set |S^w| >= 2 C* sqrt(eps)
FIBER_BUMP = "W_tilde_c"       # late/early excursion beyond the K delta balls


@dataclass
class FiberClassification:
    label: str
    s_minus: float
    s_plus: float
    width: float
    s_w_measure: float
    s_w_budget: float
    delta: float
    endpoints_ok: bool
    detail: str = ""


def fiber_transition_points(p: Potential, s: np.ndarray, v: np.ndarray,
                            delta: float, k_margin: float, eps: float,
                            sigma: float, c_w: float,
                            strict: bool = False) -> FiberClassification:
    """Classify a fiber profile by its transition structure at scale delta.

    With delta the eps^(1/4)-scale threshold and C* = 4 sigma / c_W^2:
    s_- is the last exit from B_delta(a_-), s_+ the first entry into
    B_delta(a_+), S^w the set where the profile is outside every delta-ball.
    The label is one of W_star / V_a / W_hat_c / W_tilde_c; profiles whose ends
    are not near a declared well are classified V_a (or raise when ``strict``).
    """
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    h = s[1] - s[0]
    c_star = 4.0 * sigma / c_w**2
    budget = 2.0 * c_star * np.sqrt(eps)

    dist_all = np.linalg.norm(v[:, None, :] - p.wells[None, :, :], axis=-1)  # (n, N)
    i_minus = int(np.argmin(dist_all[0]))
    i_plus = int(np.argmin(dist_all[-1]))
    endpoints_ok = (dist_all[0, i_minus] <= delta) and (dist_all[-1, i_plus] <= delta)
    if not endpoints_ok:
        if strict:
            raise ValueError("fiber endpoints are not near declared wells")
        return FiberClassification(FIBER_THIRD_WELL, np.nan, np.nan, np.nan,
                                   np.nan, budget, delta, False,
                                   "endpoints away from wells")

    in_minus = dist_all[:, i_minus] <= delta
    in_plus = dist_all[:, i_plus] <= delta
    outside_all = np.all(dist_all > delta, axis=1)
    s_w_measure = float(np.count_nonzero(outside_all) * h)

    # third-well visit
    third = [j for j in range(p.n_wells) if j not in (i_minus, i_plus)]
    if third and np.any(dist_all[:, third] <= delta):
        return FiberClassification(FIBER_THIRD_WELL, np.nan, np.nan, np.nan,
                                   s_w_measure, budget, delta, True,
                                   "visits a third well ball")

    idx_minus = np.nonzero(in_minus)[0]
    idx_plus = np.nonzero(in_plus)[0]
    if idx_minus.size == 0 or idx_plus.size == 0:
        return FiberClassification(FIBER_THIRD_WELL, np.nan, np.nan, np.nan,
                                   s_w_measure, budget, delta, False,
                                   "never inside a well ball")
    s_minus = float(s[idx_minus[-1]])   # last exit from B_delta(a_-)
    s_plus = float(s[idx_plus[0]])      # first entry into B_delta(a_+)

    # a_- -> a_+ -> a_- revisit pattern (only meaningful for distinct wells)
    if i_minus != i_plus and idx_plus.size and np.any(idx_minus > idx_plus[0]):
        return FiberClassification(FIBER_THIRD_WELL, s_minus, s_plus,
                                   s_plus - s_minus, s_w_measure, budget, delta,
                                   True, "returns to a_- after reaching a_+")

    if s_w_measure >= budget:
        return FiberClassification(FIBER_FAT, s_minus, s_plus, s_plus - s_minus,
                                   s_w_measure, budget, delta, True,
                                   "excursion measure exceeds 2 C* sqrt(eps)")

    big = k_margin * delta
    before = s < s_minus
    after = s > s_plus
    bump = ((before & (dist_all[:, i_minus] > big))
            | (after & (dist_all[:, i_plus] > big)))
    if np.any(bump):
        return FiberClassification(FIBER_BUMP, s_minus, s_plus, s_plus - s_minus,
                                   s_w_measure, budget, delta, True,
                                   "leaves the K delta balls outside the transition")

    return FiberClassification(FIBER_GOOD, s_minus, s_plus, s_plus - s_minus,
                               s_w_measure, budget, delta, True)
