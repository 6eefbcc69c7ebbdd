"""Gridded 2D domains: stadium, disc, and generic signed-distance shapes.

Cell-centered grid with an embedded-boundary mask.  Cells whose center lies
inside the domain are interior unknowns; outside cells 4-adjacent to interior
ones form the ghost layer that carries Dirichlet values (assigned at the
nearest boundary point).  Ghost cells are tagged by the boundary part their
projection lands on: the flat segments (0,l) x {0,h} ("plus") or the rest
("minus").  Distance fields to the boundary parts, to the rectangle
R = (0,l) x (0,h), and to Omega \\ R are precomputed lazily.

The domain-shape hypothesis for the layer dichotomy is

    Omega  intersect  [0,l] x [0,h]  =  [0,l] x (0,h),

checked on the grid by :func:`validate_h2`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage
from skimage import measure


class ResolutionError(ValueError):
    """Grid spacing too coarse for the requested shape."""


class DomainShapeError(ValueError):
    """The shape violates the rectangle hypothesis on the grid."""


TAG_NONE = 0
TAG_PLUS = 1   # ghost projecting onto (0,l) x {0,h}
TAG_MINUS = 2  # ghost projecting onto the remaining boundary


@dataclass
class Domain2D:
    """Immutable gridded domain; shareable across threads after construction."""

    kind: str
    dx: float
    x0: float              # coordinate of the first cell center
    y0: float
    nx: int
    ny: int
    inside: np.ndarray     # (nx, ny) bool, cell center strictly inside
    ghost: np.ndarray      # (nx, ny) bool, outside cells adjacent to inside
    boundary_tag: np.ndarray   # (nx, ny) uint8, TAG_* on ghost cells
    ghost_projection: np.ndarray  # (nx, ny, 2) nearest boundary point (ghosts)
    inside_fraction: np.ndarray   # (nx, ny) float quadrature weight
    sdf_grid: np.ndarray   # (nx, ny) signed distance at centers (<0 inside)
    l: Optional[float] = None
    h: Optional[float] = None
    params: dict = field(default_factory=dict)
    _distance_cache: dict = field(default_factory=dict, repr=False)

    @property
    def active(self) -> np.ndarray:
        return self.inside | self.ghost

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.dx * np.arange(self.ny)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @property
    def area(self) -> float:
        return float(np.sum(self.inside_fraction) * self.dx**2)

    def perimeter(self) -> float:
        """Boundary length from the marching-squares zero contour of the SDF."""
        total = 0.0
        for c in measure.find_contours(self.sdf_grid, 0.0):
            seg = np.diff(c, axis=0) * self.dx
            total += float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))
        return total

    def boundary_length(self, tag: int) -> float:
        """Grid estimate of the length of a tagged boundary part."""
        if tag == TAG_PLUS and self.l is not None:
            return 2.0 * self.l
        count = int(np.count_nonzero(self.boundary_tag == tag))
        return count * self.dx

    def rectangle_mask(self) -> np.ndarray:
        """Interior cells lying in R = (0,l) x (0,h)."""
        if self.l is None or self.h is None:
            raise ValueError("domain has no rectangle parameters (l, h)")
        X, Y = self.cell_centers()
        return self.inside & (X > 0) & (X < self.l) & (Y > 0) & (Y < self.h)

    def subdomain_mask(self, name: str) -> np.ndarray:
        if name == "all":
            return self.inside.copy()
        if name == "R":
            return self.rectangle_mask()
        if name == "complement_R":
            return self.inside & ~self.rectangle_mask()
        raise KeyError(f"unknown subdomain {name!r}")


def _grid_for_bbox(xmin, xmax, ymin, ymax, dx, pad_cells=3):
    """Cell centers on the lattice (k + 1/2) dx, padded by ghost room.

    Anchoring faces at integer multiples of dx keeps y = 0, y = h, x = 0 and
    x = l on cell faces whenever they divide dx, which preserves the mirror
    symmetry of symmetric shapes.
    """
    i0 = int(np.floor(xmin / dx)) - pad_cells
    i1 = int(np.ceil(xmax / dx)) + pad_cells
    j0 = int(np.floor(ymin / dx)) - pad_cells
    j1 = int(np.ceil(ymax / dx)) + pad_cells
    nx, ny = i1 - i0, j1 - j0
    return (i0 + 0.5) * dx, (j0 + 0.5) * dx, nx, ny


def _finish_domain(kind, dx, x0, y0, nx, ny, sdf, project, tagger, l=None,
                   h=None, params=None) -> Domain2D:
    xs = x0 + dx * np.arange(nx)
    ys = y0 + dx * np.arange(ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    sd = sdf(X, Y)
    inside = sd < 0.0
    neighbor_inside = np.zeros_like(inside)
    neighbor_inside[:-1, :] |= inside[1:, :]
    neighbor_inside[1:, :] |= inside[:-1, :]
    neighbor_inside[:, :-1] |= inside[:, 1:]
    neighbor_inside[:, 1:] |= inside[:, :-1]
    ghost = ~inside & neighbor_inside

    proj = np.zeros((nx, ny, 2))
    tag = np.zeros((nx, ny), dtype=np.uint8)
    gi, gj = np.nonzero(ghost)
    px, py = project(X[gi, gj], Y[gi, gj])
    proj[gi, gj, 0] = px
    proj[gi, gj, 1] = py
    tag[gi, gj] = tagger(px, py)

    # first-order inside fraction from the signed distance
    frac = np.clip(0.5 - sd / dx, 0.0, 1.0)
    frac[~inside] = 0.0
    frac[inside & (sd < -dx)] = 1.0

    return Domain2D(kind=kind, dx=dx, x0=x0, y0=y0, nx=nx, ny=ny,
                    inside=inside, ghost=ghost, boundary_tag=tag,
                    ghost_projection=proj, inside_fraction=frac, sdf_grid=sd,
                    l=l, h=h, params=params or {})


def build_stadium(l: float, h: float, dx: float) -> Domain2D:
    """Rectangle (0,l) x (0,h) with semicircular caps of radius h/2.

    The boundary is C^{1,1}: the flat top/bottom segments carry the "plus" tag,
    the caps the "minus" tag.  Equivalently, the shape is the set of points
    within h/2 of the spine segment from (0, h/2) to (l, h/2).
    """
    if l <= 0 or h <= 0:
        raise ValueError("l and h must be positive")
    if dx > min(l, h) / 32:
        raise ResolutionError(f"dx={dx} too coarse; need dx <= min(l,h)/32 = {min(l, h) / 32}")
    r = h / 2.0

    def spine_dist(x, y):
        cx = np.clip(x, 0.0, l)
        return np.hypot(x - cx, y - r)

    def sdf(x, y):
        return spine_dist(x, y) - r

    def project(x, y):
        cx = np.clip(x, 0.0, l)
        vx, vy = x - cx, y - r
        nrm = np.hypot(vx, vy)
        nrm = np.where(nrm < 1e-300, 1.0, nrm)
        return cx + r * vx / nrm, r + r * vy / nrm

    def tagger(px, py):
        on_flat = ((np.abs(py) < 1e-9) | (np.abs(py - h) < 1e-9)) \
            & (px > 1e-12) & (px < l - 1e-12)
        return np.where(on_flat, TAG_PLUS, TAG_MINUS).astype(np.uint8)

    x0, y0, nx, ny = _grid_for_bbox(-r, l + r, 0.0, h, dx)
    return _finish_domain("stadium", dx, x0, y0, nx, ny, sdf, project, tagger,
                          l=l, h=h, params={"l": l, "h": h})


def build_disc(r: float, dx: float, center=(0.0, 0.0)) -> Domain2D:
    """Disc of radius r; the whole boundary is tagged "minus" (no plus part)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if dx > r / 16:
        raise ResolutionError(f"dx={dx} too coarse; need dx <= r/16 = {r / 16}")
    cx, cy = center

    def sdf(x, y):
        return np.hypot(x - cx, y - cy) - r

    def project(x, y):
        vx, vy = x - cx, y - cy
        nrm = np.hypot(vx, vy)
        nrm = np.where(nrm < 1e-300, 1.0, nrm)
        return cx + r * vx / nrm, cy + r * vy / nrm

    def tagger(px, py):
        return np.full(np.shape(px), TAG_MINUS, dtype=np.uint8)

    x0, y0, nx, ny = _grid_for_bbox(cx - r, cx + r, cy - r, cy + r, dx)
    return _finish_domain("disc", dx, x0, y0, nx, ny, sdf, project, tagger,
                          params={"r": r, "center": tuple(center)})


def build_from_sdf(sdf: Callable, bbox: tuple[float, float, float, float],
                   dx: float, l: float, h: float) -> Domain2D:
    """Generic rectangle-hypothesis domain from a signed-distance callback.

    Ghost projections use the numerical SDF gradient; the flat segments of the
    hypothesis rectangle are assumed to be exactly (0,l) x {0,h}.  The returned
    domain is validated with :func:`validate_h2`.
    """
    xmin, xmax, ymin, ymax = bbox

    def project(x, y):
        e = 1e-6
        d = sdf(x, y)
        gx = (sdf(x + e, y) - sdf(x - e, y)) / (2 * e)
        gy = (sdf(x, y + e) - sdf(x, y - e)) / (2 * e)
        nrm = np.hypot(gx, gy)
        nrm = np.where(nrm < 1e-12, 1.0, nrm)
        return x - d * gx / nrm, y - d * gy / nrm

    def tagger(px, py):
        on_flat = ((np.abs(py) < 1e-6) | (np.abs(py - h) < 1e-6)) \
            & (px > 1e-9) & (px < l - 1e-9)
        return np.where(on_flat, TAG_PLUS, TAG_MINUS).astype(np.uint8)

    x0, y0, nx, ny = _grid_for_bbox(xmin, xmax, ymin, ymax, dx)
    dom = _finish_domain("sdf", dx, x0, y0, nx, ny, sdf, project, tagger,
                         l=l, h=h, params={"bbox": bbox})
    validate_h2(dom)
    return dom


def validate_h2(d: Domain2D) -> None:
    """Grid check of Omega intersect [0,l]x[0,h] = [0,l]x(0,h).

    Every cell center in the closed rectangle must be inside exactly when its
    y-coordinate lies strictly between 0 and h.  Raises DomainShapeError.
    """
    if d.l is None or d.h is None:
        raise DomainShapeError("domain carries no rectangle parameters")
    X, Y = d.cell_centers()
    in_box = (X >= 0) & (X <= d.l) & (Y >= 0) & (Y <= d.h)
    should = in_box & (Y > 0) & (Y < d.h)
    bad = in_box & (d.inside != should)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise DomainShapeError(
            f"rectangle hypothesis fails at cell center ({X[i, j]}, {Y[i, j]})")


# ---------------------------------------------------------------------------
# Distance fields.
# ---------------------------------------------------------------------------

def distance_field(d: Domain2D, target: str) -> np.ndarray:
    """Distance from each cell center to a named target; 1-Lipschitz on the grid.

    Targets: "boundary" (all of the boundary), "boundary_plus" (the flat
    segments), "boundary_minus" (the rest), "R" (the hypothesis rectangle),
    "complement_R" (Omega minus R).  Exact formulas are used where the
    geometry permits, a Euclidean distance transform otherwise.
    """
    if target in d._distance_cache:
        return d._distance_cache[target]
    X, Y = d.cell_centers()
    if target == "boundary":
        out = np.abs(d.sdf_grid)
    elif target == "boundary_plus":
        out = _segment_pair_distance(d, X, Y)
    elif target == "boundary_minus":
        out = _minus_distance(d, X, Y)
    elif target == "R":
        _need_rect(d)
        ax = np.maximum(np.maximum(-X, X - d.l), 0.0)
        ay = np.maximum(np.maximum(-Y, Y - d.h), 0.0)
        out = np.hypot(ax, ay)
    elif target == "complement_R":
        _need_rect(d)
        if d.kind == "stadium":
            out = np.clip(np.minimum(X, d.l - X), 0.0, None)
            out[~d.rectangle_mask() & d.inside] = 0.0
        else:
            mask = d.inside & ~d.rectangle_mask()
            if not np.any(mask):
                raise KeyError("complement of R is empty on the grid")
            out = ndimage.distance_transform_edt(~mask) * d.dx
    else:
        raise KeyError(f"unknown distance target {target!r}")
    d._distance_cache[target] = out
    return out


def _need_rect(d: Domain2D):
    if d.l is None or d.h is None:
        raise KeyError("target requires rectangle parameters (l, h)")


def _segment_pair_distance(d: Domain2D, X, Y):
    _need_rect(d)
    cx = np.clip(X, 0.0, d.l)
    bottom = np.hypot(X - cx, Y)
    top = np.hypot(X - cx, Y - d.h)
    return np.minimum(bottom, top)


def _arc_distance(X, Y, cx, cy, r, side):
    """Distance to the half-circle |p - c| = r restricted to x*side >= cx*side."""
    vx, vy = X - cx, Y - cy
    ring = np.abs(np.hypot(vx, vy) - r)
    on_arc = (vx * side) >= 0
    de1 = np.hypot(X - cx, Y - (cy - r))
    de2 = np.hypot(X - cx, Y - (cy + r))
    return np.where(on_arc, ring, np.minimum(de1, de2))


def _minus_distance(d: Domain2D, X, Y):
    if d.kind == "stadium":
        r = d.h / 2.0
        left = _arc_distance(X, Y, 0.0, r, r, -1.0)
        right = _arc_distance(X, Y, d.l, r, r, +1.0)
        return np.minimum(left, right)
    if d.kind == "disc":
        return np.abs(d.sdf_grid)
    mask = d.boundary_tag == TAG_MINUS
    if not np.any(mask):
        raise KeyError("no minus-tagged boundary on this domain")
    return ndimage.distance_transform_edt(~mask) * d.dx
