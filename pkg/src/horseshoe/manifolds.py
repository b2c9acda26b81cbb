"""Invariant manifolds by the graph transform, and their consequences.

Local stable/unstable manifolds are computed as Lipschitz graphs over the
adapted chart axes: the classical graph transform is iterated along a
chain of hyperbolic orbit blocks, seeded with the flat graph at the deep
end of the chain, until the sup-distance between successive pullbacks
drops below tolerance.  Blocks are chosen greedily so that each one
expands the unstable chart axis by at least a fixed factor; this absorbs
the bottom-strip excursions (where single steps are not expanding in the
rescaled charts) into full induced steps automatically.

Global manifolds iterate the local polyline forward (or backward)
through the branch formulas, splitting the curve at strip and band
boundaries; the same machinery drives the mixing-time search and the
verticality check.  The module ends with the non-expansiveness
demonstration: an explicit pair of distinct points on the bottom edge,
symmetric about the tangency abscissa, whose full orbits stay within any
prescribed distance of each other.
"""

from __future__ import annotations

import hashlib
import json
import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from . import map_core as mc
from .map_core import (MapParams, Region, Certificate, classify, apply,
                       apply_inverse, default_certificate,
                       OutOfDomain, OrbitEscapes)
from .splitting import direction_field, length_scale
from .induced import ChartFrame, chart, kergodic_derivative

GRID_POINTS = 257
RHO_MIN = 2.0 ** -20
#: Minimal chart-axis expansion of one pullback block.
_MU_MIN = 2.0
_ANCHOR_CAP = 2000


class NoConvergence(RuntimeError):
    """Graph-transform iteration failed to settle within the depth cap."""

    def __init__(self, message: str, last_factor: float | None = None):
        self.last_factor = last_factor
        super().__init__(message)


class Unsupported(RuntimeError):
    """The orbit chain needed by the construction is not computable."""


class MonotonicityError(RuntimeError):
    """The u-projection of the transformed graph is not monotone (the
    working radius is too large at this point)."""


class NoIntersection(RuntimeError):
    """The two leaves do not meet within the computed extensions."""


class NonUnique(RuntimeError):
    """More than one transversal leaf intersection (must not happen off
    the tangency orbit)."""


class NotGraphLike(ValueError):
    """The curve is not a graph x = g(y) over a y-interval."""


class BudgetExhausted(RuntimeError):
    """Mixing-time search ran out of iterations."""

    def __init__(self, message: str, longest_span: float):
        self.longest_span = longest_span
        super().__init__(message)


# ---------------------------------------------------------------------------
# Lipschitz graphs and manifold curves
# ---------------------------------------------------------------------------

@dataclass
class LipGraph:
    """Graph of a function over one chart axis.

    ``axis`` is ``"u->s"`` for a function from the unstable axis to the
    stable one (unstable-manifold candidates) and ``"s->u"`` for the
    transpose.  Values are interpolated linearly between grid nodes.
    """

    base: ChartFrame
    axis: str
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.axis not in ("u->s", "s->u"):
            raise ValueError(f"unknown graph axis {self.axis!r}")
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid and values must be 1-d arrays of equal size")
        if not np.all(np.diff(self.grid) > 0.0):
            raise ValueError("grid must be strictly increasing")

    @property
    def radius(self) -> float:
        return float(max(-self.grid[0], self.grid[-1]))

    @property
    def lip_bound(self) -> float:
        """Measured Lipschitz constant over the grid."""
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.grid))))

    def __call__(self, x):
        return np.interp(x, self.grid, self.values)

    def value_at_zero(self) -> float:
        return float(np.interp(0.0, self.grid, self.values))

    def sup_distance(self, other: "LipGraph") -> float:
        """Sup-norm distance on the intersection of the two domains."""
        lo = max(self.grid[0], other.grid[0])
        hi = min(self.grid[-1], other.grid[-1])
        xs = np.linspace(lo, hi, max(len(self.grid), len(other.grid)))
        return float(np.max(np.abs(self(xs) - other(xs))))

    def plane_points(self) -> np.ndarray:
        """The graph as a plane polyline through the chart."""
        if self.axis == "u->s":
            xi = np.stack([self.grid, self.values])
        else:
            xi = np.stack([self.values, self.grid])
        pts = np.asarray(self.base.M)[:, None] + self.base.basis @ xi
        return pts.T


def zero_graph(base: ChartFrame, axis: str, radius: float,
               npts: int = GRID_POINTS, slope: float = 0.0) -> LipGraph:
    grid = np.linspace(-radius, radius, npts)
    return LipGraph(base, axis, grid, slope * grid)


@dataclass
class ManifoldCurve:
    """Polyline model of a stable or unstable leaf with its arclength
    table (the induced metric along the leaf)."""

    points: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)
    arclength: np.ndarray = field(init=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.kind not in ("stable", "unstable"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must be an (N, 2) array")
        seg = np.hypot(*np.diff(self.points, axis=0).T)
        self.arclength = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def total_length(self) -> float:
        return float(self.arclength[-1])

    def distance_to(self, p) -> float:
        """Distance from ``p`` to the polyline."""
        return float(np.min(_point_segment_distances(self.points, p)))

    def is_simple(self, tol: float = 1e-12) -> bool:
        """No transversal self-intersection between non-adjacent
        segments (quadratic scan; subsampled beyond 800 points)."""
        pts = self.points
        if len(pts) > 800:
            idx = np.linspace(0, len(pts) - 1, 800).astype(int)
            pts = pts[idx]
        a, b = pts[:-1], pts[1:]
        n = len(a)
        for i in range(n):
            hits = _segment_intersections(a[i], b[i], a[i + 2:], b[i + 2:])
            for j, pt, _ in hits:
                if i == 0 and j == n - 3:
                    continue  # closed-up ends of a nearly closed curve
                d = math.hypot(pt[0] - a[i][0], pt[1] - a[i][1])
                if d > tol:
                    return False
        return True

    def to_csv(self) -> str:
        lines = ["idx,x,y,arclen"]
        for i, ((x, y), s) in enumerate(zip(self.points, self.arclength)):
            lines.append(f"{i},{float(x)!r},{float(y)!r},{float(s)!r}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "meta": self.meta,
            "points": self.points.tolist(),
            "arclength": self.arclength.tolist(),
        }
        return json.dumps(payload)


def _params_hash(params: MapParams) -> str:
    return hashlib.sha256(params.to_json().encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Graph transform
# ---------------------------------------------------------------------------

def _block_regions(params: MapParams, p, k: int) -> list[Region]:
    """Branch itinerary of the k-step block starting at ``p``."""
    regs = []
    cur = p
    for j in range(k):
        region = classify(params, cur)
        if region not in mc.ACTIVE_REGIONS:
            raise Unsupported(f"block orbit of {p} leaves the branches "
                              f"at step {j}")
        regs.append(region)
        cur = apply(params, cur)
        if cur is None:
            raise Unsupported(f"block orbit of {p} escapes at step {j + 1}")
    return regs


def graph_transform(params: MapParams, chart_m: ChartFrame,
                    chart_fm: ChartFrame, k: int, s: LipGraph,
                    radius: float | None = None,
                    npts: int | None = None) -> LipGraph:
    """One graph-transform step along the block f^k: M -> F(M).

    For an unstable graph (``u->s``) the input lives at M and the output
    at F(M); for a stable graph (``s->u``) the input lives at F(M) and
    the output at M (the block is traversed backwards through the total
    inverse branch formulas).  The whole block is evaluated through the
    branch itinerary of the base orbit, so nearby graph points follow
    the same smooth branch extension as the local leaf itself.  The
    inner inverse of the axis projection is piecewise-linear
    interpolation on the transported grid, valid because the projection
    is monotone; a monotonicity or coverage failure signals a too-large
    radius.
    """
    if radius is None:
        radius = s.radius
    if npts is None:
        npts = len(s.grid)
    regs = _block_regions(params, chart_m.M, k)
    forward = s.axis == "u->s"
    src_chart = chart_m if forward else chart_fm
    dst_chart = chart_fm if forward else chart_m
    if forward:
        xi = np.stack([s.grid, s.values], axis=1)
    else:
        xi = np.stack([s.values, s.grid], axis=1)
    pts = np.asarray(src_chart.M) + xi @ src_chart.basis.T
    if forward:
        for region in regs:
            pts = _apply_region(params, region, pts)
    else:
        for region in reversed(regs):
            pts = _apply_region_inverse(params, region, pts)
    eta = (pts - np.asarray(dst_chart.M)) @ dst_chart.inv_basis.T
    pri = 0 if forward else 1
    prim = eta[:, pri]
    secd = eta[:, 1 - pri]
    d = np.diff(prim)
    if np.all(d < 0.0):
        prim, secd = prim[::-1], secd[::-1]
    elif not np.all(d > 0.0):
        raise MonotonicityError("axis projection of the transformed graph "
                                "is not monotone")
    if prim[0] > -radius or prim[-1] < radius:
        raise MonotonicityError("transformed graph does not cover the "
                                "target interval")
    grid = np.linspace(-radius, radius, npts)
    return LipGraph(dst_chart, s.axis, grid, np.interp(grid, prim, secd))


# ---------------------------------------------------------------------------
# Anchor chains (hyperbolic orbit blocks)
# ---------------------------------------------------------------------------

def _safe_chart(params: MapParams, m):
    try:
        return chart(params, m)
    except OutOfDomain:
        return None


def _next_anchor(params: MapParams, m, chart_m: ChartFrame, direction: str,
                 mu_min: float = _MU_MIN, cap: int = _ANCHOR_CAP):
    """Closest orbit point (with step count) whose block to/from ``m``
    expands the relevant chart axis by at least ``mu_min``.

    ``direction="backward"`` walks preimages (unstable pullback chain);
    ``"forward"`` walks images (stable chain)."""
    cur = m
    for j in range(1, cap + 1):
        cur = apply_inverse(params, cur) if direction == "backward" \
            else apply(params, cur)
        if cur is None or classify(params, cur) not in mc.ACTIVE_REGIONS:
            raise Unsupported(f"{direction} orbit of {m} leaves the active "
                              f"regions at step {j}")
        ch = _safe_chart(params, cur)
        if ch is None:
            continue
        try:
            if direction == "backward":
                d = kergodic_derivative(params, ch, chart_m, j)
                mu = float(np.linalg.norm(d[:, 0]))
            else:
                d = kergodic_derivative(params, chart_m, ch, j)
                mu = float(np.linalg.norm(np.linalg.inv(d)[:, 1]))
        except (OutOfDomain, OrbitEscapes, np.linalg.LinAlgError):
            continue
        if mu >= mu_min:
            return cur, ch, j
    raise Unsupported(f"no hyperbolic block within {cap} {direction} steps "
                      f"of {m}")


def _pullback_curve(params: MapParams, m, kind: str, radius: float,
                    tol: float, npts: int, max_depth: int,
                    seed_slope: float) -> tuple[LipGraph, int]:
    """Iterate the graph transform along the anchor chain until two
    successive pullbacks agree within ``tol`` in sup norm."""
    direction = "backward" if kind == "unstable" else "forward"
    axis = "u->s" if kind == "unstable" else "s->u"
    chart_m = chart(params, m)
    anchors = [(m, chart_m, 0)]
    prev = None
    prev_diff = None
    factor = None
    for depth in range(1, max_depth + 1):
        pt, ch, k = _next_anchor(params, anchors[-1][0], anchors[-1][1],
                                 direction)
        anchors.append((pt, ch, k))
        g = zero_graph(ch, axis, radius, npts, slope=seed_slope)
        for j in range(depth, 0, -1):
            near_ch = anchors[j - 1][1]
            far_ch = anchors[j][1]
            k_j = anchors[j][2]
            if kind == "unstable":
                g = graph_transform(params, far_ch, near_ch, k_j, g,
                                    radius, npts)
            else:
                g = graph_transform(params, near_ch, far_ch, k_j, g,
                                    radius, npts)
        if prev is not None:
            diff = g.sup_distance(prev)
            if prev_diff is not None and prev_diff > 0.0:
                factor = diff / prev_diff
            if diff < tol:
                return g, depth
            prev_diff = diff
        prev = g
    raise NoConvergence(f"graph transform did not converge in {max_depth} "
                        "pullback blocks", last_factor=factor)


def _axis_local(params: MapParams, m, kind: str, radius_plane: float,
                npts: int) -> ManifoldCurve | None:
    """Exact local leaves at the two linear fixed points."""
    t = np.linspace(0.0, radius_plane, npts)
    if m == (0.0, 0.0):
        pts = np.stack([np.zeros(npts), t], axis=1) if kind == "unstable" \
            else np.stack([t, np.zeros(npts)], axis=1)
    elif m == (1.0, 1.0):
        pts = np.stack([np.ones(npts), 1.0 - t[::-1]], axis=1) \
            if kind == "unstable" \
            else np.stack([1.0 - t[::-1], np.ones(npts)], axis=1)
    else:
        return None
    meta = {"rho_effective": radius_plane, "tol": 0.0, "iterations": 0,
            "lip_bound": 0.0, "params": _params_hash(params)}
    return ManifoldCurve(pts, kind, meta)


def _local_manifold(params: MapParams, m, kind: str, rho: float, tol: float,
                    npts: int, max_depth: int, cert: Certificate | None,
                    seed_slope: float) -> ManifoldCurve:
    if cert is None:
        cert = default_certificate(params)
    if not (0.0 < rho <= 1.0):
        raise ValueError("rho must lie in (0, 1]")
    m = (float(m[0]), float(m[1]))
    axis_curve = _axis_local(params, m, kind,
                             rho * cert.C3 * length_scale(params, m), npts)
    if axis_curve is not None:
        return axis_curve
    radius = rho * cert.C3
    last_err = None
    while radius >= RHO_MIN:
        try:
            g, iters = _pullback_curve(params, m, kind, radius, tol, npts,
                                       max_depth, seed_slope)
            meta = {"rho_effective": radius * g.base.l, "tol": tol,
                    "iterations": iters, "lip_bound": g.lip_bound,
                    "params": _params_hash(params)}
            return ManifoldCurve(g.plane_points(), kind, meta)
        except MonotonicityError as err:
            last_err = err
            radius /= 2.0
    raise NoConvergence("no admissible radius above the floor: "
                        f"{last_err}", last_factor=None)


def local_unstable(params: MapParams, m, rho: float = 0.5,
                   tol: float = 1e-10, npts: int = GRID_POINTS,
                   max_depth: int = 60, cert: Certificate | None = None,
                   seed_slope: float = 0.0) -> ManifoldCurve:
    """Local unstable manifold through ``m`` as a plane polyline."""
    return _local_manifold(params, m, "unstable", rho, tol, npts, max_depth,
                           cert, seed_slope)


def local_stable(params: MapParams, m, rho: float = 0.5,
                 tol: float = 1e-10, npts: int = GRID_POINTS,
                 max_depth: int = 60, cert: Certificate | None = None,
                 seed_slope: float = 0.0) -> ManifoldCurve:
    """Local stable manifold through ``m`` (inverse-block pullback)."""
    return _local_manifold(params, m, "stable", rho, tol, npts, max_depth,
                           cert, seed_slope)


# ---------------------------------------------------------------------------
# Curve pieces: forward / backward advancing with branch splitting
# ---------------------------------------------------------------------------

def _point_segment_distances(poly: np.ndarray, p) -> np.ndarray:
    a, b = poly[:-1], poly[1:]
    ab = b - a
    ap = np.asarray(p, dtype=float) - a
    denom = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.clip(np.where(denom > 0.0,
                             np.einsum("ij,ij->i", ap, ab) / denom, 0.0),
                    0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.asarray(p, dtype=float) - proj
    return np.hypot(d[:, 0], d[:, 1])


def _cut_at_levels(pts: np.ndarray, fvals: np.ndarray,
                   levels) -> list[np.ndarray]:
    """Split a polyline wherever the per-point scalar crosses a level.

    Crossing points are interpolated and duplicated into both pieces, so
    piece endpoints land exactly on the level sets."""
    cuts = []
    for lv in levels:
        d0 = fvals[:-1] - lv
        d1 = fvals[1:] - lv
        idx = np.nonzero(((d0 < 0.0) & (d1 > 0.0)) |
                         ((d0 > 0.0) & (d1 < 0.0)))[0]
        t = d0[idx] / (d0[idx] - d1[idx])
        cuts.extend(zip(idx.tolist(), t.tolist()))
        interior = np.nonzero(fvals == lv)[0]
        cuts.extend((int(i) - 1, 1.0) for i in interior
                    if 0 < i < len(fvals) - 1)
    if not cuts:
        return [pts]
    cuts.sort()
    pieces = []
    start = pts[0]
    start_idx = 0
    for i, t in cuts:
        cross = pts[i] + t * (pts[i + 1] - pts[i])
        chunk = np.vstack([start[None, :], pts[start_idx + 1:i + 1],
                           cross[None, :]])
        pieces.append(chunk)
        start = cross
        start_idx = i
    pieces.append(np.vstack([start[None, :], pts[start_idx + 1:]]))
    return [p for p in pieces if len(p) >= 2 and
            np.hypot(*(p[-1] - p[0])) > 1e-15]


def _resample_count(pts: np.ndarray, n: int) -> np.ndarray:
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0.0:
        return pts
    t = np.linspace(0.0, s[-1], n)
    return np.stack([np.interp(t, s, pts[:, 0]),
                     np.interp(t, s, pts[:, 1])], axis=1)


def _resample_max_seg(pts: np.ndarray, max_seg: float,
                      cap: int = 200000) -> np.ndarray:
    seg = np.hypot(*np.diff(pts, axis=0).T)
    total = float(np.sum(seg))
    n = min(cap, max(len(pts), int(math.ceil(total / max_seg)) + 1))
    return _resample_count(pts, n)


def _apply_region(params: MapParams, region: Region,
                  pts: np.ndarray) -> np.ndarray:
    p = params
    x, y = pts[:, 0], pts[:, 1]
    if region is Region.R1:
        return np.stack([p.lam * x, p.sigma * y], axis=1)
    if region is Region.R3:
        return np.stack([p.r3_a - p.lam * x,
                         1.0 - p.sigma * (y - p.r3_y0)], axis=1)
    if region is Region.R5:
        return np.stack([p.lam * x + 1.0 - p.lam,
                         p.sigma * y - p.sigma + 1.0], axis=1)
    if region is Region.R4:
        u = p.lam * x
        w = p.sigma * (y - p.t)
        return np.stack([p.q + w, p.c * w * w - u], axis=1)
    raise OutOfDomain(f"branch map undefined on {region.value}")


def _apply_region_inverse(params: MapParams, region: Region,
                          pts: np.ndarray) -> np.ndarray:
    """Total inverse of one branch formula (no band restriction)."""
    p = params
    x, y = pts[:, 0], pts[:, 1]
    if region is Region.R1:
        return np.stack([x / p.lam, y / p.sigma], axis=1)
    if region is Region.R3:
        return np.stack([(p.r3_a - x) / p.lam,
                         p.r3_y0 + (1.0 - y) / p.sigma], axis=1)
    if region is Region.R5:
        return np.stack([(x - 1.0 + p.lam) / p.lam,
                         (y + p.sigma - 1.0) / p.sigma], axis=1)
    if region is Region.R4:
        off = p.c * (x - p.q) ** 2 - y
        return np.stack([off / p.lam, p.t + (x - p.q) / p.sigma], axis=1)
    raise OutOfDomain(f"branch inverse undefined on {region.value}")


def _strip_levels(params: MapParams):
    p = params
    return (0.0, p.inv_sigma, p.r3_y0, p.r3_y0 + p.inv_sigma,
            p.t - p.h, p.t, p.t + p.h, p.r5_y0, 1.0)


def advance_pieces(params: MapParams, pieces: list, steps: int = 1,
                   max_pieces: int = 256, protect=None) -> list:
    """Push polyline pieces ``steps`` plain-map iterates forward.

    Pieces are cut at the horizontal strip boundaries (and at the
    tangency level, so parabola images stay monotone), inactive parts
    are dropped, images are clipped back to the unit square.  When the
    piece count exceeds ``max_pieces`` only the longest survive; a piece
    passing through the forward orbit of ``protect`` is always kept."""
    prot = None if protect is None else (float(protect[0]), float(protect[1]))
    for _ in range(steps):
        nxt = []
        for pts in pieces:
            for sub in _cut_at_levels(pts, pts[:, 1], _strip_levels(params)):
                mid = sub[len(sub) // 2]
                region = classify(params, (float(mid[0]), float(mid[1])))
                if region not in mc.ACTIVE_REGIONS:
                    continue
                if region is Region.R4 and len(sub) < 1025:
                    sub = _resample_count(sub, 1025)
                img = _apply_region(params, region, sub)
                for piece in _cut_at_levels(img, img[:, 1], (0.0, 1.0)):
                    ymid = piece[len(piece) // 2, 1]
                    if 0.0 <= ymid <= 1.0:
                        nxt.append(piece)
        if prot is not None:
            prot = apply(params, prot)
        pieces = _prune_pieces(nxt, max_pieces, prot)
    return pieces


def _inverse_branches(params: MapParams, pts: np.ndarray):
    """(region, preimage array) for every inverse branch defined on the
    whole piece whose preimage lands in the branch's source region."""
    p = params
    x, y = pts[:, 0], pts[:, 1]
    out = []
    if np.all((0.0 <= x) & (x <= p.lam)):
        out.append((Region.R1, np.stack([x / p.lam, y / p.sigma], axis=1)))
    if np.all((p.r3_a - p.lam <= x) & (x <= p.r3_a)):
        out.append((Region.R3,
                    np.stack([(p.r3_a - x) / p.lam,
                              p.r3_y0 + (1.0 - y) / p.sigma], axis=1)))
    if np.all((1.0 - p.lam <= x) & (x <= 1.0)):
        out.append((Region.R5,
                    np.stack([(x - 1.0 + p.lam) / p.lam,
                              (y + p.sigma - 1.0) / p.sigma], axis=1)))
    off = p.c * (x - p.q) ** 2 - y
    if np.all((0.0 <= off) & (off <= p.lam)) and \
            np.all(np.abs(x - p.q) <= p.w_max):
        out.append((Region.R4,
                    np.stack([off / p.lam,
                              p.t + (x - p.q) / p.sigma], axis=1)))
    good = []
    for region, pre in out:
        mid = pre[len(pre) // 2]
        if classify(params, (float(mid[0]), float(mid[1]))) is region:
            good.append((region, pre))
    return good


def _band_levels(params: MapParams):
    p = params
    return (0.0, p.lam, p.r3_a - p.lam, p.r3_a, 1.0 - p.lam, 1.0,
            p.q - p.w_max, p.q, p.q + p.w_max)


def retreat_pieces(params: MapParams, pieces: list, steps: int = 1,
                   max_pieces: int = 256, protect=None) -> list:
    """Pull polyline pieces ``steps`` iterates backward through the
    inverse branches, splitting at the image-band boundaries (and at the
    parabola-offset levels bounding the parabolic image region)."""
    p = params
    prot = None if protect is None else (float(protect[0]), float(protect[1]))
    for _ in range(steps):
        nxt = []
        for pts in pieces:
            subs = _cut_at_levels(pts, pts[:, 0], _band_levels(params))
            refined = []
            for sub in subs:
                off = p.c * (sub[:, 0] - p.q) ** 2 - sub[:, 1]
                refined.extend(_cut_at_levels(sub, off, (0.0, p.lam)))
            for sub in refined:
                mid = sub[len(sub) // 2]
                if np.abs(mid[0] - p.q) <= p.w_max and len(sub) < 1025:
                    sub = _resample_count(sub, 1025)
                for _, pre in _inverse_branches(params, sub):
                    nxt.append(pre)
        if prot is not None:
            prot = apply_inverse(params, prot)
            if prot is not None:
                prot = (float(prot[0]), float(prot[1]))
        pieces = _prune_pieces(nxt, max_pieces, prot)
    return pieces


def _prune_pieces(pieces: list, max_pieces: int, protect) -> list:
    if len(pieces) <= max_pieces:
        return pieces
    lengths = [float(np.sum(np.hypot(*np.diff(p, axis=0).T)))
               for p in pieces]
    order = np.argsort(lengths)[::-1]
    keep = set(order[:max_pieces].tolist())
    if protect is not None:
        for i, p in enumerate(pieces):
            if i not in keep and \
                    np.min(_point_segment_distances(p, protect)) < 1e-9:
                keep.add(i)
    return [pieces[i] for i in sorted(keep)]


# ---------------------------------------------------------------------------
# Global manifolds
# ---------------------------------------------------------------------------

def _induced_chain(params: MapParams, m, n: int, direction: str):
    """n anchor points of the chain with their plain-step counts."""
    chart_m = chart(params, m)
    pts = [m]
    ks = []
    for _ in range(n):
        pt, ch, k = _next_anchor(params, pts[-1], chart_m, direction)
        pts.append(pt)
        ks.append(k)
        chart_m = ch
    return pts, ks


def _merge_contiguous(pieces, start: int, tol: float = 1e-9):
    """Concatenate pieces that share an endpoint with the selected one.

    Mapping cuts polylines at strip and band levels, so a connected leaf
    comes back as abutting fragments; rejoin them, but only when the
    matching endpoint is unambiguous (exactly one candidate)."""
    chain = pieces[start]
    free = [p for i, p in enumerate(pieces) if i != start]
    while True:
        grew = False
        for endpoint, prepend in ((chain[-1], False), (chain[0], True)):
            hits = []
            for i, p in enumerate(free):
                for flip in (False, True):
                    q = p[::-1] if flip else p
                    if math.hypot(q[0, 0] - endpoint[0],
                                  q[0, 1] - endpoint[1]) <= tol:
                        hits.append((i, q))
            if len(hits) == 1:
                i, q = hits[0]
                chain = (np.vstack([q[::-1], chain[1:]]) if prepend
                         else np.vstack([chain, q[1:]]))
                free.pop(i)
                grew = True
                break
        if not grew:
            return chain


def _global_manifold(params: MapParams, m, n: int, kind: str, rho: float,
                     seg_len: float, cert: Certificate | None) -> ManifoldCurve:
    m = (float(m[0]), float(m[1]))
    direction = "backward" if kind == "unstable" else "forward"
    if m in ((0.0, 0.0), (1.0, 1.0)):
        # the corner leaves are the square's edges (invariant under the
        # affine extension of the corner's own branch)
        s = np.linspace(0.0, 1.0, int(1.0 / seg_len) + 1)
        const = np.full_like(s, m[0])
        pts = (np.column_stack([const, s]) if kind == "unstable"
               else np.column_stack([s, const]))
        meta = {"rho": rho, "n": n, "steps": 0, "base_distance": 0.0,
                "params": _params_hash(params)}
        return ManifoldCurve(pts, kind, meta)
    else:
        chain, ks = _induced_chain(params, m, n, direction)
        base = chain[-1]
    local = (local_unstable if kind == "unstable" else local_stable)(
        params, base, rho=rho, cert=cert)
    pieces = [local.points]
    steps = int(sum(ks))
    if kind == "unstable":
        pieces = advance_pieces(params, pieces, steps, protect=base)
    else:
        pieces = retreat_pieces(params, pieces, steps, protect=base)
    best = None
    best_d = math.inf
    best_i = -1
    for i, p in enumerate(pieces):
        d = float(np.min(_point_segment_distances(p, m)))
        if d < best_d:
            best, best_d, best_i = p, d, i
    if best is None:
        raise NoConvergence("the advanced leaf lost its base point")
    best = _merge_contiguous(pieces, best_i)
    pts = _resample_max_seg(best, seg_len)
    meta = {"rho": rho, "n": n, "steps": steps, "base_distance": best_d,
            "params": _params_hash(params)}
    return ManifoldCurve(pts, kind, meta)


def global_unstable(params: MapParams, m, n: int, rho: float = 0.5,
                    seg_len: float = 1e-3,
                    cert: Certificate | None = None) -> ManifoldCurve:
    """Component through ``m`` of the n-fold forward image of the local
    unstable leaf at the n-th induced preimage of ``m``."""
    return _global_manifold(params, m, n, "unstable", rho, seg_len, cert)


def global_stable(params: MapParams, m, n: int, rho: float = 0.5,
                  seg_len: float = 1e-3,
                  cert: Certificate | None = None) -> ManifoldCurve:
    return _global_manifold(params, m, n, "stable", rho, seg_len, cert)


def unstable_invariance_defect(params: MapParams, m, rho: float = 0.5,
                               cert: Certificate | None = None) -> float:
    """One-sided Hausdorff distance from W^u(F(M)) to F(W^u(M)) on the
    overlap (the invariance inclusion, measured)."""
    ch = chart(params, m)
    fm, _, k = _next_anchor(params, m, ch, "forward")
    wu_m = local_unstable(params, m, rho=rho, cert=cert)
    pieces = advance_pieces(params, [wu_m.points], k, protect=m)
    wu_fm = local_unstable(params, fm, rho=rho, cert=cert)
    worst = 0.0
    for p in wu_fm.points:
        d = min(float(np.min(_point_segment_distances(piece, p)))
                for piece in pieces)
        worst = max(worst, d)
    return worst


def stable_invariance_defect(params: MapParams, m, rho: float = 0.5,
                             cert: Certificate | None = None) -> float:
    """One-sided Hausdorff distance from W^s(F^-1(M)) to F^-1(W^s(M))."""
    ch = chart(params, m)
    pm, _, k = _next_anchor(params, m, ch, "backward")
    ws_m = local_stable(params, m, rho=rho, cert=cert)
    pieces = retreat_pieces(params, [ws_m.points], k, protect=m)
    ws_pm = local_stable(params, pm, rho=rho, cert=cert)
    worst = 0.0
    for p in ws_pm.points:
        d = min(float(np.min(_point_segment_distances(piece, p)))
                for piece in pieces)
        worst = max(worst, d)
    return worst


# ---------------------------------------------------------------------------
# Verticality check
# ---------------------------------------------------------------------------

@dataclass
class VerticalityReport:
    ok: bool
    max_slope: float
    max_curvature: float
    eps1: float


def eps1_vertical_check(curve, eps1: float) -> VerticalityReport:
    """Finite-difference C^2 verticality of a curve given as a graph
    x = g(y): both max |g'| and max |g''| must stay below ``eps1``."""
    pts = curve.points if isinstance(curve, ManifoldCurve) else \
        np.asarray(curve, dtype=float)
    if len(pts) < 3:
        raise NotGraphLike("need at least three points")
    y = pts[:, 1]
    if np.all(np.diff(y) < 0.0):
        pts = pts[::-1]
        y = pts[:, 1]
    if not np.all(np.diff(y) > 0.0):
        raise NotGraphLike("curve is not a graph over the vertical axis")
    g1 = np.gradient(pts[:, 0], y)
    g2 = np.gradient(g1, y)
    ms = float(np.max(np.abs(g1)))
    mc_ = float(np.max(np.abs(g2)))
    return VerticalityReport(ok=(ms <= eps1 and mc_ <= eps1),
                             max_slope=ms, max_curvature=mc_, eps1=eps1)


def iterate_vertical_curve(params: MapParams, x_vals=None, passages: int = 20,
                           eps1: float = 0.5,
                           npts: int = 513) -> list[VerticalityReport]:
    """Push an eps1-vertical graph over the parabolic strip through
    repeated full-map returns and report its verticality after each.

    The curve is a graph x = g(y) over the strip ``(t-h, t+h]``.  One
    return applies the parabolic branch, then follows the surviving
    sub-window of the right wing through left-strip steps until its
    image covers the strip again; the window edges are located by
    bisection on the monotone wing ordinate.  Most of the wing lands in
    the gaps and is lost -- the lemma is about the piece that returns."""
    p = params
    h = p.w_max / p.sigma
    y_grid = np.linspace(p.t - h, p.t + h, npts)
    if x_vals is None:
        g = np.full(npts, 0.3)
    else:
        g = np.asarray(x_vals, dtype=float)
        if g.shape != y_grid.shape:
            raise ValueError("x_vals must match the strip grid size")
    # the seed's own verticality is the caller's premise: finite
    # differences of an O(1)-valued graph over a strip of width
    # 2 w_max / sigma sit below float64 noise for steep parameters
    reports = []
    for _ in range(passages):
        def wing_y(w: float) -> float:
            gx = float(np.interp(p.t + w / p.sigma, y_grid, g))
            return p.sigma * (p.c * w * w - p.lam * gx)

        # invert the wing ordinate at both strip edges (right wing,
        # one expanding step after the parabolic branch)
        edges = []
        for target in (p.t - h, p.t + h):
            lo, hi = 0.0, p.w_max
            if wing_y(hi) < target:
                raise Unsupported("wing too short to re-cover the strip")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if wing_y(mid) < target:
                    lo = mid
                else:
                    hi = mid
            edges.append(0.5 * (lo + hi))
        w_new = np.linspace(edges[0], edges[1], npts)
        src_y = p.t + w_new / p.sigma
        gx = np.interp(src_y, y_grid, g)
        w_mid = 0.5 * (edges[0] + edges[1])
        mid_pt = (p.q + w_mid, wing_y(w_mid) / p.sigma)
        if classify(params, mid_pt) is not Region.R1:
            raise Unsupported("return block leaves the expanding strip")
        y_img = p.sigma * (p.c * w_new * w_new - p.lam * gx)
        x_img = p.lam * (p.q + w_new)
        g = np.interp(y_grid, y_img, x_img)
        rep = eps1_vertical_check(np.column_stack([x_img, y_img]), eps1)
        reports.append(rep)
    return reports


# ---------------------------------------------------------------------------
# Bracket (local product structure)
# ---------------------------------------------------------------------------

def _segment_intersections(a0, b0, a, b):
    """Intersections of segment (a0, b0) with segments (a[i], b[i]);
    returns (index, point, angle) triples."""
    if len(a) == 0:
        return []
    d0 = b0 - a0
    d = b - a
    denom = d0[0] * d[:, 1] - d0[1] * d[:, 0]
    rel = a - a0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * d[:, 1] - rel[:, 1] * d[:, 0]) / denom
        u = (rel[:, 0] * d0[1] - rel[:, 1] * d0[0]) / denom
    eps = 1e-12
    mask = (np.abs(denom) > 0.0) & (t >= -eps) & (t <= 1.0 + eps) \
        & (u >= -eps) & (u <= 1.0 + eps)
    out = []
    n0 = math.hypot(*d0)
    for i in np.nonzero(mask)[0]:
        pt = a0 + t[i] * d0
        ni = math.hypot(*d[i])
        if n0 == 0.0 or ni == 0.0:
            continue
        sin_ang = abs(denom[i]) / (n0 * ni)
        out.append((int(i), (float(pt[0]), float(pt[1])),
                    math.asin(min(1.0, sin_ang))))
    return out


def _polyline_intersections(poly1: np.ndarray, poly2: np.ndarray):
    hits = []
    a2, b2 = poly2[:-1], poly2[1:]
    for i in range(len(poly1) - 1):
        for _, pt, ang in _segment_intersections(poly1[i], poly1[i + 1],
                                                 a2, b2):
            hits.append((pt, ang))
    return hits


@dataclass
class Bracket:
    point: tuple
    angle: float
    near_tangent: bool


#: Transversality floor for the bracket intersection angle.
BRACKET_ANGLE_FLOOR = 1e-6


def bracket(params: MapParams, m, m_prime, rho: float = 0.5,
            cert: Certificate | None = None, max_extend: int = 6) -> Bracket:
    """Intersection of the stable leaf of ``m`` with the unstable leaf
    of ``m_prime`` (the local product structure), with the measured
    transversality angle."""
    m = (float(m[0]), float(m[1]))
    m_prime = (float(m_prime[0]), float(m_prime[1]))
    ws = local_stable(params, m, rho=rho, cert=cert)
    wu = local_unstable(params, m_prime, rho=rho, cert=cert)
    hits = _polyline_intersections(ws.points, wu.points)
    n = 0
    while not hits and n < max_extend:
        n += 2
        try:
            ws = global_stable(params, m, n, rho=rho, cert=cert)
            wu = global_unstable(params, m_prime, n, rho=rho, cert=cert)
        except (Unsupported, NoConvergence) as err:
            raise NoIntersection(f"leaves too short and not extendable: "
                                 f"{err}") from err
        hits = _polyline_intersections(ws.points, wu.points)
    if not hits:
        raise NoIntersection("stable and unstable leaves do not meet "
                             f"within {max_extend} global extensions")
    clusters: list[list] = []
    for pt, ang in hits:
        for cl in clusters:
            if math.hypot(pt[0] - cl[0][0][0], pt[1] - cl[0][0][1]) < 1e-7:
                cl.append((pt, ang))
                break
        else:
            clusters.append([(pt, ang)])
    if len(clusters) > 1:
        raise NonUnique(f"{len(clusters)} distinct leaf intersections")
    pt, ang = max(clusters[0], key=lambda h: h[1])
    return Bracket(point=pt, angle=ang,
                   near_tangent=ang < BRACKET_ANGLE_FLOOR)


# ---------------------------------------------------------------------------
# Mixing times
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float

    def contains(self, p) -> bool:
        return math.hypot(p[0] - self.center[0],
                          p[1] - self.center[1]) <= self.radius


def _clip_to_disk(pts: np.ndarray, disk: Disk) -> list[np.ndarray]:
    d = np.hypot(pts[:, 0] - disk.center[0], pts[:, 1] - disk.center[1])
    return [p for p in _cut_at_levels(pts, d, (disk.radius,))
            if disk.contains(p[len(p) // 2])]


def _surviving_parameter(survive, lo: float, hi: float,
                         depth: int, rounds: int = 60):
    """Greedy nested search for a parameter whose survival count
    reaches ``depth`` (survival sets are nested intervals)."""
    for _ in range(rounds):
        ts = np.linspace(lo, hi, 65)
        scores = [survive(float(t)) for t in ts]
        best = int(np.argmax(scores))
        if scores[best] >= depth:
            return float(ts[best])
        step = (hi - lo) / 64.0
        lo = max(lo, ts[best] - step)
        hi = min(hi, ts[best] + step)
        if hi - lo < 1e-15:
            break
    return None


def _seed_arcs(params: MapParams, disk: Disk, kind: str, rho: float,
               cert: Certificate | None) -> list[np.ndarray]:
    cx, cy = disk.center
    r = disk.radius
    seeds = []
    # edge chords: the square's edges are global leaves of the corner
    # fixed points.
    if kind == "unstable":
        for xe in (0.0,):
            if abs(cx - xe) < r:
                h = math.sqrt(r * r - (cx - xe) ** 2)
                lo, hi = max(0.0, cy - h), min(1.0, cy + h)
                if hi > lo:
                    seeds.append(np.array([[xe, lo], [xe, hi]]))
    else:
        for ye in (0.0, 1.0):
            if abs(cy - ye) < r:
                h = math.sqrt(r * r - (cy - ye) ** 2)
                lo, hi = max(0.0, cx - h), min(1.0, cx + h)
                if hi > lo:
                    seeds.append(np.array([[lo, ye], [hi, ye]]))
    # leaf seeds at deep-surviving points of the disk
    step = apply_inverse if kind == "unstable" else apply

    def survive_along(fixed_axis_value, moving_is_y):
        def count(t: float) -> int:
            p = (fixed_axis_value, t) if moving_is_y else (t, fixed_axis_value)
            n = 0
            cur = p
            for _ in range(40):
                cur = step(params, cur)
                if cur is None or \
                        classify(params, cur) not in mc.ACTIVE_REGIONS:
                    break
                n += 1
            return n
        return count

    local = local_unstable if kind == "unstable" else local_stable
    # the scan bisects a 1/lam (resp. sigma) expanding chain, so float64
    # can only pin down survivors to a parameter-dependent depth
    rate = 1.0 / params.lam if kind == "unstable" else params.sigma
    depth = max(2, min(12, int(14.0 / math.log10(rate))))
    if kind == "unstable":
        # scan x along the horizontal diameter for a backward-surviving
        # point (unstable leaves need a computable backward chain)
        t0 = _surviving_parameter(survive_along(cy, moving_is_y=False),
                                  max(0.0, cx - 0.9 * r),
                                  min(1.0, cx + 0.9 * r), depth=depth)
        cand = None if t0 is None else (t0, cy)
    else:
        t0 = _surviving_parameter(survive_along(cx, moving_is_y=True),
                                  max(0.0, cy - 0.9 * r),
                                  min(1.0, cy + 0.9 * r), depth=depth)
        cand = None if t0 is None else (cx, t0)
    if cand is not None:
        try:
            curve = local(params, cand, rho=rho, cert=cert)
            seeds.extend(_clip_to_disk(curve.points, disk))
        except (Unsupported, NoConvergence, OutOfDomain):
            pass
    return [s for s in seeds if len(s) >= 2]


def _spanning_piece(pieces: list, axis: int, tol: float = 1e-9):
    for p in pieces:
        v = p[:, axis]
        if np.min(v) <= tol and np.max(v) >= 1.0 - tol:
            return p
    return None


def _mixing_search(params: MapParams, disk: Disk, kind: str, budget: int,
                   rho: float, cert: Certificate | None):
    pieces = _seed_arcs(params, disk, kind, rho, cert)
    if not pieces:
        raise Unsupported(f"no {kind} seed arc found inside {disk}")
    axis = 1 if kind == "unstable" else 0
    longest = 0.0
    for n in range(budget + 1):
        hit = _spanning_piece(pieces, axis)
        if hit is not None:
            return n, hit
        for p in pieces:
            v = p[:, axis]
            longest = max(longest, float(np.max(v) - np.min(v)))
        if kind == "unstable":
            pieces = advance_pieces(params, pieces, 1)
        else:
            pieces = retreat_pieces(params, pieces, 1)
        if not pieces:
            break
    raise BudgetExhausted(
        f"no full crossing within {budget} iterates", longest_span=longest)


def mixing_times(params: MapParams, disk: Disk, budget: int = 60,
                 rho: float = 0.5, cert: Certificate | None = None) -> dict:
    """Iterates needed for the disk to develop a full vertical unstable
    crossing (forward) and a full horizontal stable crossing (backward).
    """
    n_plus, arc_plus = _mixing_search(params, disk, "unstable", budget,
                                      rho, cert)
    n_minus, arc_minus = _mixing_search(params, disk, "stable", budget,
                                        rho, cert)
    return {"n_plus": n_plus, "n_minus": n_minus,
            "arc_plus": arc_plus, "arc_minus": arc_minus}


def mixing_consequence(params: MapParams, disk_u: Disk, disk_v: Disk,
                       budget: int = 60, rho: float = 0.5,
                       cert: Certificate | None = None) -> bool:
    """f^n(U) meets V for n = n_plus(U) + n_minus(V): the full vertical
    arc of f^(n_plus)(U) crosses the full horizontal arc of
    f^(-n_minus)(V)."""
    _, arc_u = _mixing_search(params, disk_u, "unstable", budget, rho, cert)
    _, arc_v = _mixing_search(params, disk_v, "stable", budget, rho, cert)
    return bool(_polyline_intersections(arc_u, arc_v))


# ---------------------------------------------------------------------------
# Non-expansiveness demonstration
# ---------------------------------------------------------------------------

@dataclass
class NonexpansiveReport:
    A: tuple
    B: tuple
    sup_dist: float
    horizon: int
    separation: float
    A_exact: tuple | None = None
    B_exact: tuple | None = None


class SearchFailure(RuntimeError):
    """No non-expansive pair found within the candidate ladder."""


def _exact_params(params: MapParams) -> dict:
    """The stored parameter floats as exact rationals."""
    return {name: Fraction(getattr(params, name))
            for name in ("lam", "sigma", "c", "q", "t", "w_max",
                         "r3_y0", "r3_a")}


def _exact_region(pf: dict, pt) -> Region:
    """Exact-arithmetic mirror of the strip classification."""
    x, y = pt
    if not (0 <= x <= 1 and 0 <= y <= 1):
        return Region.OUTSIDE
    inv_s = 1 / pf["sigma"]
    h = pf["w_max"] / pf["sigma"]
    if y <= inv_s:
        return Region.R1
    if y <= pf["r3_y0"]:
        return Region.R2
    if y <= pf["r3_y0"] + inv_s:
        return Region.R3
    if y <= pf["t"] - h:
        return Region.GAP34_LOWER
    if y <= pf["t"] + h:
        return Region.R4
    if y <= 1 - Fraction(2, 3) / pf["sigma"]:
        return Region.GAP34_UPPER
    return Region.R5


def _exact_apply(pf: dict, pt):
    x, y = pt
    region = _exact_region(pf, pt)
    if region is Region.R1:
        return (pf["lam"] * x, pf["sigma"] * y)
    if region is Region.R3:
        return (pf["r3_a"] - pf["lam"] * x,
                1 - pf["sigma"] * (y - pf["r3_y0"]))
    if region is Region.R4:
        u = pf["lam"] * x
        w = pf["sigma"] * (y - pf["t"])
        return (pf["q"] + w, pf["c"] * w * w - u)
    if region is Region.R5:
        return (pf["lam"] * x + 1 - pf["lam"],
                pf["sigma"] * y - pf["sigma"] + 1)
    return None


def _exact_inverse(pf: dict, pt):
    """Exact branch-wise inverse; None off the image bands, and the
    unique valid branch otherwise."""
    x, y = pt
    lam, sig = pf["lam"], pf["sigma"]
    cands = []
    if 0 <= x <= lam:
        cands.append((Region.R1, (x / lam, y / sig)))
    if pf["r3_a"] - lam <= x <= pf["r3_a"]:
        cands.append((Region.R3, ((pf["r3_a"] - x) / lam,
                                  pf["r3_y0"] + (1 - y) / sig)))
    if 1 - lam <= x <= 1:
        cands.append((Region.R5, ((x - 1 + lam) / lam,
                                  (y + sig - 1) / sig)))
    off = pf["c"] * (x - pf["q"]) ** 2 - y
    if 0 <= off <= lam and abs(x - pf["q"]) <= pf["w_max"]:
        cands.append((Region.R4, (off / lam, pf["t"] + (x - pf["q"]) / sig)))
    good = [pre for reg, pre in cands if _exact_region(pf, pre) is reg]
    return good[0] if len(good) == 1 else None


def _rational_sqrt_in(lo: Fraction, hi: Fraction) -> Fraction | None:
    """A rational a with a*a inside [lo, hi] (nested digit refinement)."""
    if hi <= 0:
        return None
    lo = max(lo, Fraction(0))
    mid = (lo + hi) / 2
    for bits in range(64, 4096, 64):
        scale = 1 << bits
        num = math.isqrt((mid.numerator * scale * scale) // mid.denominator)
        a = Fraction(num, scale)
        if lo < a * a < hi:
            return a
    return None


def _threaded_separation(params: MapParams, delta: float, horizon: int,
                         prefix: int) -> Fraction | None:
    """Exact half-separation ``a`` whose squared value makes the common
    backward abscissa chain of the pair (q-a, 0), (q+a, 0) thread the
    image bands for ``horizon`` steps.

    The chain abscissa is affine in a^2 (first through the parabolic
    band, then ``prefix`` left-band rungs, then the middle band
    forever), so each band constraint is a rational interval in a^2;
    the intersection stays nonempty because every inverse branch maps
    its band onto the full width of the square."""
    pf = _exact_params(params)
    lam, r3a = pf["lam"], pf["r3_a"]
    # x_k = p_k + s_k * asq along the backward chain
    p_aff, s_aff = Fraction(0), pf["c"] / lam
    lo, hi = None, None

    def constrain(b_lo, b_hi, lo, hi):
        if s_aff > 0:
            c_lo, c_hi = (b_lo - p_aff) / s_aff, (b_hi - p_aff) / s_aff
        else:
            c_lo, c_hi = (b_hi - p_aff) / s_aff, (b_lo - p_aff) / s_aff
        lo = c_lo if lo is None else max(lo, c_lo)
        hi = c_hi if hi is None else min(hi, c_hi)
        return (lo, hi) if lo < hi else (None, None)

    for k in range(horizon):
        if k < prefix:
            band = (Fraction(0), lam)       # left image band
        else:
            band = (r3a - lam, r3a)         # middle image band
        lo, hi = constrain(band[0], band[1], lo, hi)
        if lo is None:
            return None
        if k < prefix:
            p_aff, s_aff = p_aff / lam, s_aff / lam
        else:
            p_aff, s_aff = (r3a - p_aff) / lam, -s_aff / lam
    a = _rational_sqrt_in(lo, hi)
    if a is None or a > pf["w_max"] or 2 * a > Fraction(9, 10) * Fraction(delta):
        return None
    return a


def _nonexpansive_candidates(params: MapParams, delta: float,
                             horizon: int):
    """Exact half-separations, largest first: the prefix-0 family
    separates by about sqrt(lam*r3_a/c), each extra left-band rung
    divides the separation by sqrt(1/lam)."""
    for prefix in range(0, 40):
        a = _threaded_separation(params, delta, horizon, prefix)
        if a is not None:
            yield a


def _exact_dist_sq(pa, pb) -> Fraction:
    return (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2


def nonexpansive_pair(params: MapParams, delta: float,
                      horizon: int = 50) -> NonexpansiveReport:
    """A pair of distinct points whose orbits never separate by more
    than ``delta`` over ``|n| <= horizon``.

    Both points sit on the bottom edge (one shared stable leaf),
    symmetric about the tangency abscissa, hence on one local parabola;
    their backward orbits share a single abscissa chain through the
    image bands, so the orbit distance is largest at time zero.

    The demonstration runs in exact rational arithmetic: each backward
    band step divides by lam, so a float64 pair loses the thread after
    three or four preimages, while the true chain only constrains the
    squared half-separation to a nested interval that exact fractions
    resolve to any depth.  ``A``/``B`` hold float approximations, the
    verified rationals are in ``A_exact``/``B_exact``."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    pf = _exact_params(params)
    for a in _nonexpansive_candidates(params, delta, horizon):
        A = (pf["q"] + a, Fraction(0))
        B = (pf["q"] - a, Fraction(0))
        sup_sq = _exact_dist_sq(A, B)
        ok = True
        ca, cb = A, B
        for _ in range(horizon):
            ca, cb = _exact_apply(pf, ca), _exact_apply(pf, cb)
            if ca is None or cb is None:
                ok = False
                break
            sup_sq = max(sup_sq, _exact_dist_sq(ca, cb))
        if not ok:
            continue
        ca, cb = A, B
        for _ in range(horizon):
            ca, cb = _exact_inverse(pf, ca), _exact_inverse(pf, cb)
            if ca is None or cb is None:
                ok = False
                break
            sup_sq = max(sup_sq, _exact_dist_sq(ca, cb))
        if ok and sup_sq <= Fraction(delta) ** 2:
            sep = 2.0 * float(a)
            return NonexpansiveReport(
                A=(float(A[0]), 0.0), B=(float(B[0]), 0.0),
                sup_dist=math.sqrt(float(sup_sq)), horizon=horizon,
                separation=sep, A_exact=A, B_exact=B)
    raise SearchFailure(f"no pair with orbit distance <= {delta} over "
                        f"|n| <= {horizon}")
