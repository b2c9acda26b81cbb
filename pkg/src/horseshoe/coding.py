"""Symbolic coding of the invariant set.

Three full vertical bands of the image f(Q) carry the symbols: 0 for
the left band, 1 for the part to the right of the critical point
(right band together with the right wing of the parabolic image), 2
for the middle band with the left wing.  Itineraries over these
symbols, centered words, a sound box cover for each partition atom,
the coding map theta and its Holder estimate live here.

Atom covers are built by quadtree refinement with interval arithmetic:
a box survives at level n if, for every |k| <= n, the interval hull of
its k-th image meets the closure of band s_k.  All branch formulas are
affine except the parabolic w -> w^2, whose interval square is exact,
so the hulls genuinely contain the true images and the cover contains
the true atom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .map_core import MapParams


class NotInBands(ValueError):
    """Point outside all three vertical image bands."""


class EmptyAtom(ValueError):
    """The word's box cover refined away to nothing."""


class Escaped(RuntimeError):
    """Some iterate of the point left the bands."""

    def __init__(self, step: int):
        super().__init__(f"orbit leaves the bands at step {step}")
        self.step = step


# ---------------------------------------------------------------------------
# Words
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Word:
    """Finite symbol block with a marked center position.

    Centered words have odd length 2n+1 and positions -n..n; the
    string form marks the center with a dot before the time-0 symbol,
    e.g. "010.210".  ``ambiguous`` lists positions where the orbit sat
    on the tangency orbit and both symbols 1 and 2 apply."""

    symbols: tuple
    center: int
    ambiguous: tuple = ()

    def __post_init__(self):
        if not all(s in (0, 1, 2) for s in self.symbols):
            raise ValueError("symbols must be 0, 1 or 2")
        if not 0 <= self.center < len(self.symbols):
            raise ValueError("center outside the word")

    @property
    def n(self) -> int:
        if len(self.symbols) != 2 * self.center + 1:
            raise ValueError("word is not centered")
        return self.center

    def symbol(self, k: int) -> int:
        """Symbol at time ``k`` (position ``center + k``)."""
        return self.symbols[self.center + k]

    def to_string(self) -> str:
        s = "".join(str(c) for c in self.symbols)
        return s[:self.center] + "." + s[self.center:]

    @classmethod
    def from_string(cls, text: str) -> "Word":
        if text.count(".") != 1:
            raise ValueError("word string needs exactly one center dot")
        dot = text.index(".")
        digits = text.replace(".", "")
        return cls(tuple(int(c) for c in digits), dot)

    def shifted(self, by: int = 1) -> "Word":
        """Same symbols, center moved ``by`` steps forward in time."""
        return Word(self.symbols, self.center + by,
                    tuple(a - by for a in self.ambiguous
                          if 0 <= a - by < len(self.symbols)))

    def extended(self, left: int, right: int) -> "Word":
        """Pad with the fixed-point symbol 0 on both sides."""
        return Word((0,) * left + self.symbols + (0,) * right,
                    self.center + left,
                    tuple(a + left for a in self.ambiguous))


# ---------------------------------------------------------------------------
# Bands
# ---------------------------------------------------------------------------

def _r5_image_ymin(params: MapParams) -> float:
    """Bottom of the image of the top strip (1/3 in exact arithmetic);
    the right band does not reach below it except through the wing."""
    return params.sigma * params.r5_y0 - params.sigma + 1.0


def band_of(params: MapParams, p) -> frozenset:
    """Symbols of the vertical image bands containing ``p``.

    Size one except exactly at the tangency point, which belongs to
    the closures of both the right and the middle band."""
    x, y = float(p[0]), float(p[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise NotInBands(f"{p} outside the square")
    out = set()
    if x <= params.lam:
        out.add(0)
    if x >= 1.0 - params.lam and y >= _r5_image_ymin(params):
        out.add(1)
    if params.r3_a - params.lam <= x <= params.r3_a:
        out.add(2)
    off = params.c * (x - params.q) ** 2 - y
    if abs(x - params.q) <= params.w_max and 0.0 <= off <= params.lam:
        if x >= params.q:
            out.add(1)
        if x <= params.q:
            out.add(2)
    if not out:
        raise NotInBands(f"{p} outside the vertical bands")
    return frozenset(out)


def itinerary(params: MapParams, p, n: int) -> Word:
    """Centered word of the orbit of ``p`` over times -n..n.

    On the tangency orbit the lower symbol is kept and the position
    recorded in ``ambiguous``.  Raises :class:`Escaped` with the first
    failing time when an iterate leaves the bands."""
    from .map_core import apply, apply_inverse

    pts = {0: (float(p[0]), float(p[1]))}
    cur = pts[0]
    for k in range(1, n + 1):
        cur = apply(params, cur)
        if cur is None:
            raise Escaped(k)
        pts[k] = cur
    cur = pts[0]
    for k in range(1, n + 1):
        cur = apply_inverse(params, cur)
        if cur is None:
            raise Escaped(-k)
        pts[-k] = cur
    symbols = []
    ambiguous = []
    for k in range(-n, n + 1):
        try:
            bands = band_of(params, pts[k])
        except NotInBands as err:
            raise Escaped(k) from err
        if len(bands) > 1:
            ambiguous.append(k + n)
        symbols.append(min(bands))
    return Word(tuple(symbols), n, tuple(ambiguous))


# ---------------------------------------------------------------------------
# Interval image hulls
# ---------------------------------------------------------------------------
# boxes are arrays (N, 4) of (xmin, ymin, xmax, ymax)

def _interval_square(lo, hi):
    """Exact interval for d^2 given d in [lo, hi] (elementwise)."""
    a, b = lo * lo, hi * hi
    sq_lo = np.where((lo <= 0.0) & (hi >= 0.0), 0.0, np.minimum(a, b))
    return sq_lo, np.maximum(a, b)


def _forward_images(params: MapParams, boxes: np.ndarray):
    """Interval hulls of the branch images of each box.

    Returns (images, origin) where origin maps each image box back to
    its source row; boxes fully inside the gaps produce nothing."""
    p = params
    out, origin = [], []
    idx = np.arange(len(boxes))
    x0, y0, x1, y1 = boxes.T

    def clip_y(lo, hi):
        cy0, cy1 = np.maximum(y0, lo), np.minimum(y1, hi)
        return cy0, cy1, cy0 <= cy1

    # bottom strip
    cy0, cy1, ok = clip_y(0.0, p.inv_sigma)
    if np.any(ok):
        img = np.column_stack([p.lam * x0, p.sigma * cy0,
                               p.lam * x1, p.sigma * cy1])[ok]
        out.append(img)
        origin.append(idx[ok])
    # middle strip (orientation-reversing)
    cy0, cy1, ok = clip_y(p.r3_y0, p.r3_y0 + p.inv_sigma)
    if np.any(ok):
        img = np.column_stack([p.r3_a - p.lam * x1,
                               1.0 - p.sigma * (cy1 - p.r3_y0),
                               p.r3_a - p.lam * x0,
                               1.0 - p.sigma * (cy0 - p.r3_y0)])[ok]
        out.append(img)
        origin.append(idx[ok])
    # parabolic strip
    cy0, cy1, ok = clip_y(p.t - p.h, p.t + p.h)
    if np.any(ok):
        w0, w1 = p.sigma * (cy0 - p.t), p.sigma * (cy1 - p.t)
        sq_lo, sq_hi = _interval_square(w0, w1)
        img = np.column_stack([p.q + w0, p.c * sq_lo - p.lam * x1,
                               p.q + w1, p.c * sq_hi - p.lam * x0])[ok]
        out.append(img)
        origin.append(idx[ok])
    # top strip
    cy0, cy1, ok = clip_y(p.r5_y0, 1.0)
    if np.any(ok):
        img = np.column_stack([p.lam * x0 + 1.0 - p.lam,
                               p.sigma * cy0 - p.sigma + 1.0,
                               p.lam * x1 + 1.0 - p.lam,
                               p.sigma * cy1 - p.sigma + 1.0])[ok]
        out.append(img)
        origin.append(idx[ok])
    if not out:
        return np.empty((0, 4)), np.empty(0, dtype=int)
    return np.vstack(out), np.concatenate(origin)


def _backward_images(params: MapParams, boxes: np.ndarray):
    """Interval hulls of the branch preimages of each box."""
    p = params
    out, origin = [], []
    idx = np.arange(len(boxes))
    x0, y0, x1, y1 = boxes.T

    def clip_x(lo, hi):
        cx0, cx1 = np.maximum(x0, lo), np.minimum(x1, hi)
        return cx0, cx1, cx0 <= cx1

    # left band
    cx0, cx1, ok = clip_x(0.0, p.lam)
    if np.any(ok):
        img = np.column_stack([cx0 / p.lam, y0 / p.sigma,
                               cx1 / p.lam, y1 / p.sigma])[ok]
        out.append(img)
        origin.append(idx[ok])
    # middle band
    cx0, cx1, ok = clip_x(p.r3_a - p.lam, p.r3_a)
    if np.any(ok):
        img = np.column_stack([(p.r3_a - cx1) / p.lam,
                               p.r3_y0 + (1.0 - y1) / p.sigma,
                               (p.r3_a - cx0) / p.lam,
                               p.r3_y0 + (1.0 - y0) / p.sigma])[ok]
        out.append(img)
        origin.append(idx[ok])
    # right band (image of the top strip only reaches down to 1/3)
    cx0, cx1, ok = clip_x(1.0 - p.lam, 1.0)
    cy0 = np.maximum(y0, _r5_image_ymin(p))
    ok &= cy0 <= y1
    if np.any(ok):
        img = np.column_stack([(cx0 - 1.0 + p.lam) / p.lam,
                               (cy0 + p.sigma - 1.0) / p.sigma,
                               (cx1 - 1.0 + p.lam) / p.lam,
                               (y1 + p.sigma - 1.0) / p.sigma])[ok]
        out.append(img)
        origin.append(idx[ok])
    # parabolic band
    cx0, cx1, ok = clip_x(p.q - p.w_max, p.q + p.w_max)
    if np.any(ok):
        d0, d1 = cx0 - p.q, cx1 - p.q
        sq_lo, sq_hi = _interval_square(d0, d1)
        off_lo = np.maximum(p.c * sq_lo - y1, 0.0)
        off_hi = np.minimum(p.c * sq_hi - y0, p.lam)
        okb = ok & (off_lo <= off_hi)
        if np.any(okb):
            img = np.column_stack([off_lo / p.lam, p.t + d0 / p.sigma,
                                   off_hi / p.lam, p.t + d1 / p.sigma])[okb]
            out.append(img)
            origin.append(idx[okb])
    if not out:
        return np.empty((0, 4)), np.empty(0, dtype=int)
    return np.vstack(out), np.concatenate(origin)


def _touches_band(params: MapParams, boxes: np.ndarray,
                  symbol: int) -> np.ndarray:
    """Whether each box meets the closure of the given band."""
    p = params
    x0, y0, x1, y1 = boxes.T
    inside = (x1 >= 0.0) & (x0 <= 1.0) & (y1 >= 0.0) & (y0 <= 1.0)
    if symbol == 0:
        return inside & (x0 <= p.lam)
    if symbol == 1:
        straight = (x1 >= 1.0 - p.lam) & (y1 >= _r5_image_ymin(p))
        wing_lo, wing_hi = p.q, p.q + p.w_max
    else:
        straight = (x1 >= p.r3_a - p.lam) & (x0 <= p.r3_a)
        wing_lo, wing_hi = p.q - p.w_max, p.q
    cx0 = np.maximum(x0, wing_lo)
    cx1 = np.minimum(x1, wing_hi)
    d0, d1 = cx0 - p.q, cx1 - p.q
    sq_lo, sq_hi = _interval_square(d0, d1)
    wing = (cx0 <= cx1) & (p.c * sq_lo - y1 <= p.lam) \
        & (p.c * sq_hi - y0 >= 0.0)
    return inside & (straight | wing)


def _inside_band(params: MapParams, boxes: np.ndarray,
                 symbol: int) -> np.ndarray:
    """Whether each box lies entirely inside the band's closure."""
    p = params
    x0, y0, x1, y1 = boxes.T
    inside = (x0 >= 0.0) & (x1 <= 1.0) & (y0 >= 0.0) & (y1 <= 1.0)
    if symbol == 0:
        return inside & (x1 <= p.lam)
    if symbol == 1:
        straight = (x0 >= 1.0 - p.lam) & (y0 >= _r5_image_ymin(p))
        wing_lo, wing_hi = p.q, p.q + p.w_max
    else:
        straight = (x0 >= p.r3_a - p.lam) & (x1 <= p.r3_a)
        wing_lo, wing_hi = p.q - p.w_max, p.q
    sq_lo, sq_hi = _interval_square(x0 - p.q, x1 - p.q)
    wing = ((x0 >= wing_lo) & (x1 <= wing_hi)
            & (p.c * sq_lo - y1 >= 0.0) & (p.c * sq_hi - y0 <= p.lam))
    return inside & (straight | wing)


def _forward_interior(params: MapParams, boxes: np.ndarray):
    """(images, certified): exact hulls for boxes lying entirely in one
    horizontal strip; uncertified rows carry garbage."""
    p = params
    x0, y0, x1, y1 = boxes.T
    img = np.empty_like(boxes)
    ok = np.zeros(len(boxes), dtype=bool)
    m = (y0 >= 0.0) & (y1 <= p.inv_sigma)
    img[m] = np.column_stack([p.lam * x0, p.sigma * y0,
                              p.lam * x1, p.sigma * y1])[m]
    ok |= m
    m = (y0 >= p.r3_y0) & (y1 <= p.r3_y0 + p.inv_sigma)
    img[m] = np.column_stack([p.r3_a - p.lam * x1,
                              1.0 - p.sigma * (y1 - p.r3_y0),
                              p.r3_a - p.lam * x0,
                              1.0 - p.sigma * (y0 - p.r3_y0)])[m]
    ok |= m
    m = (y0 >= p.t - p.h) & (y1 <= p.t + p.h)
    if np.any(m):
        w0, w1 = p.sigma * (y0 - p.t), p.sigma * (y1 - p.t)
        sq_lo, sq_hi = _interval_square(w0, w1)
        img[m] = np.column_stack([p.q + w0, p.c * sq_lo - p.lam * x1,
                                  p.q + w1, p.c * sq_hi - p.lam * x0])[m]
        ok |= m
    m = (y0 >= p.r5_y0) & (y1 <= 1.0)
    img[m] = np.column_stack([p.lam * x0 + 1.0 - p.lam,
                              p.sigma * y0 - p.sigma + 1.0,
                              p.lam * x1 + 1.0 - p.lam,
                              p.sigma * y1 - p.sigma + 1.0])[m]
    ok |= m
    return img, ok


def _backward_interior(params: MapParams, boxes: np.ndarray):
    """(preimages, certified): exact hulls for boxes lying entirely in
    one image band."""
    p = params
    x0, y0, x1, y1 = boxes.T
    img = np.empty_like(boxes)
    ok = np.zeros(len(boxes), dtype=bool)
    m = (x0 >= 0.0) & (x1 <= p.lam)
    img[m] = np.column_stack([x0 / p.lam, y0 / p.sigma,
                              x1 / p.lam, y1 / p.sigma])[m]
    ok |= m
    m = (x0 >= p.r3_a - p.lam) & (x1 <= p.r3_a)
    img[m] = np.column_stack([(p.r3_a - x1) / p.lam,
                              p.r3_y0 + (1.0 - y1) / p.sigma,
                              (p.r3_a - x0) / p.lam,
                              p.r3_y0 + (1.0 - y0) / p.sigma])[m]
    ok |= m
    m = (x0 >= 1.0 - p.lam) & (x1 <= 1.0) & (y0 >= _r5_image_ymin(p))
    img[m] = np.column_stack([(x0 - 1.0 + p.lam) / p.lam,
                              (y0 + p.sigma - 1.0) / p.sigma,
                              (x1 - 1.0 + p.lam) / p.lam,
                              (y1 + p.sigma - 1.0) / p.sigma])[m]
    ok |= m
    d0, d1 = x0 - p.q, x1 - p.q
    sq_lo, sq_hi = _interval_square(d0, d1)
    off_lo, off_hi = p.c * sq_lo - y1, p.c * sq_hi - y0
    m = ((x0 >= p.q - p.w_max) & (x1 <= p.q + p.w_max)
         & (off_lo >= 0.0) & (off_hi <= p.lam) & ~ok)
    if np.any(m):
        img[m] = np.column_stack([off_lo / p.lam, p.t + d0 / p.sigma,
                                  off_hi / p.lam, p.t + d1 / p.sigma])[m]
        ok |= m
    return img, ok


def _interior(params: MapParams, boxes: np.ndarray,
              word: Word) -> np.ndarray:
    """Boxes certified to lie entirely inside the atom's constraints
    for all |k| <= n; these need no further splitting."""
    n = word.n
    good = _inside_band(params, boxes, word.symbol(0))
    for stepper, sign in ((_forward_interior, 1), (_backward_interior, -1)):
        cur = boxes
        for k in range(1, n + 1):
            if not np.any(good):
                break
            cur, ok = stepper(params, cur)
            good &= ok
            good &= _inside_band(params, cur, word.symbol(sign * k))
    return good


def _survives(params: MapParams, boxes: np.ndarray, word: Word) -> np.ndarray:
    """Level-n survival mask: every |k| <= n image hull meets band s_k."""
    n = word.n
    alive = _touches_band(params, boxes, word.symbol(0))
    for stepper, sign in ((_forward_images, 1), (_backward_images, -1)):
        cur, origin = boxes, np.arange(len(boxes))
        for k in range(1, n + 1):
            cur, step_origin = stepper(params, cur)
            origin = origin[step_origin]
            hit = _touches_band(params, cur, word.symbol(sign * k))
            ok = np.zeros(len(boxes), dtype=bool)
            np.logical_or.at(ok, origin[hit], True)
            alive &= ok
            # advance only image boxes that still meet the square (others
            # cannot contribute and their coordinates blow up under 1/lam)
            keep = alive[origin] & (cur[:, 2] >= 0.0) & (cur[:, 0] <= 1.0) \
                & (cur[:, 3] >= 0.0) & (cur[:, 1] <= 1.0)
            cur, origin = cur[keep], origin[keep]
            if not len(cur):
                return np.zeros(len(boxes), dtype=bool)
    return alive


# ---------------------------------------------------------------------------
# Atoms
# ---------------------------------------------------------------------------

@dataclass
class Atom:
    word: Word
    boxes: np.ndarray
    diameter_ub: float = field(init=False)
    empty: bool = field(init=False)

    def __post_init__(self):
        self.empty = len(self.boxes) == 0
        if self.empty:
            self.diameter_ub = 0.0
        else:
            dx = np.max(self.boxes[:, 2]) - np.min(self.boxes[:, 0])
            dy = np.max(self.boxes[:, 3]) - np.min(self.boxes[:, 1])
            self.diameter_ub = math.hypot(dx, dy)

    def center(self):
        """Representative point: center of the cover box nearest the
        bounding-hull midpoint (the midpoint itself can fall in a gap
        when the cover has several pieces)."""
        if self.empty:
            raise EmptyAtom(self.word.to_string())
        hx = 0.5 * (np.min(self.boxes[:, 0]) + np.max(self.boxes[:, 2]))
        hy = 0.5 * (np.min(self.boxes[:, 1]) + np.max(self.boxes[:, 3]))
        cx = 0.5 * (self.boxes[:, 0] + self.boxes[:, 2])
        cy = 0.5 * (self.boxes[:, 1] + self.boxes[:, 3])
        i = int(np.argmin((cx - hx) ** 2 + (cy - hy) ** 2))
        return (float(cx[i]), float(cy[i]))

    def contains(self, p, slack: float = 0.0) -> bool:
        if self.empty:
            return False
        x, y = p
        hit = ((self.boxes[:, 0] - slack <= x)
               & (x <= self.boxes[:, 2] + slack)
               & (self.boxes[:, 1] - slack <= y)
               & (y <= self.boxes[:, 3] + slack))
        return bool(np.any(hit))

    def to_csv(self) -> str:
        lines = ["word,box_xmin,box_ymin,box_xmax,box_ymax"]
        w = self.word.to_string()
        for x0, y0, x1, y1 in self.boxes:
            lines.append(f"{w},{float(x0)!r},{float(y0)!r},"
                         f"{float(x1)!r},{float(y1)!r}")
        return "\n".join(lines) + "\n"


def default_resolution(params: MapParams) -> int:
    """Quadtree depth resolving the thinnest band comfortably."""
    return max(8, min(14, int(math.log2(1.0 / params.lam)) + 10))


def _split(boxes: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = boxes.T
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    return np.vstack([
        np.column_stack([x0, y0, xm, ym]),
        np.column_stack([xm, y0, x1, ym]),
        np.column_stack([x0, ym, xm, y1]),
        np.column_stack([xm, ym, x1, y1]),
    ])


def _refine(params: MapParams, word: Word, boxes: np.ndarray,
            resolution: int) -> np.ndarray:
    """Adaptive cover: split surviving boxes down to 2^-resolution, but
    set aside boxes certified interior (no boundary can cross them)."""
    min_w = 1.5 * 2.0 ** -resolution
    done = []
    cur = np.asarray(boxes, dtype=float)
    while len(cur):
        cur = cur[_survives(params, cur, word)]
        if not len(cur):
            break
        keep = _interior(params, cur, word)
        keep |= (cur[:, 2] - cur[:, 0]) <= min_w
        done.append(cur[keep])
        cur = _split(cur[~keep])
    if not done:
        return np.empty((0, 4))
    return np.vstack(done)


def atom(params: MapParams, word: Word, resolution: int | None = None) -> Atom:
    """Sound box cover of the partition atom carrying ``word``."""
    if resolution is None:
        resolution = default_resolution(params)
    word.n  # validates centering
    boxes = _refine(params, word, np.array([[0.0, 0.0, 1.0, 1.0]]),
                    resolution)
    return Atom(word, boxes)


def atoms(params: MapParams, n: int, resolution: int | None = None) -> dict:
    """All nonempty level-n atoms, built by refining the level-(n-1)
    covers (nesting makes the parents valid starting covers)."""
    if resolution is None:
        resolution = default_resolution(params)
    level = {Word((s,), 0): _refine(params, Word((s,), 0),
                                    np.array([[0.0, 0.0, 1.0, 1.0]]),
                                    resolution) for s in (0, 1, 2)}
    level = {w: b for w, b in level.items() if len(b)}
    for _ in range(n):
        nxt = {}
        for w, boxes in level.items():
            for a in (0, 1, 2):
                for b in (0, 1, 2):
                    child = Word((a,) + w.symbols + (b,), w.center + 1)
                    cover = _refine(params, child, boxes, resolution)
                    if len(cover):
                        nxt[child] = cover
        level = nxt
    return {w: Atom(w, b) for w, b in level.items()}


# ---------------------------------------------------------------------------
# Coding map
# ---------------------------------------------------------------------------

@dataclass
class ThetaPoint:
    point: tuple
    radius: float
    word: Word


def _matches(word: Word, observed: Word) -> bool:
    for k in range(-word.n, word.n + 1):
        want, got = word.symbol(k), observed.symbol(k)
        if want == got:
            continue
        if k + observed.center in observed.ambiguous and want in (1, 2):
            continue
        return False
    return True


def _representative(params: MapParams, a: Atom) -> tuple:
    """Point of the cover standing in for the atom.

    Prefers a cover-box center whose own itinerary realizes the word
    (hull midpoints of multi-piece covers can sit between the strips);
    falls back to the nearest-box center when none of the closest
    candidates has a full orbit."""
    if a.empty:
        raise EmptyAtom(a.word.to_string())
    hx = 0.5 * (np.min(a.boxes[:, 0]) + np.max(a.boxes[:, 2]))
    hy = 0.5 * (np.min(a.boxes[:, 1]) + np.max(a.boxes[:, 3]))
    cx = 0.5 * (a.boxes[:, 0] + a.boxes[:, 2])
    cy = 0.5 * (a.boxes[:, 1] + a.boxes[:, 3])
    order = np.argsort((cx - hx) ** 2 + (cy - hy) ** 2)
    for i in order[:200]:
        p = (float(cx[i]), float(cy[i]))
        try:
            observed = itinerary(params, p, a.word.n)
        except (NotInBands, Escaped):
            continue
        if _matches(a.word, observed):
            return p
    return a.center()


def theta(params: MapParams, word: Word,
          resolution: int | None = None) -> ThetaPoint:
    """Representative point of the word's atom with its radius bound."""
    a = atom(params, word, resolution)
    if a.empty:
        raise EmptyAtom(word.to_string())
    return ThetaPoint(point=_representative(params, a),
                      radius=a.diameter_ub, word=word)


def decay_table(params: MapParams, n_max: int,
                resolution: int | None = None) -> dict:
    """Max atom diameter per level and the fitted exponential rate."""
    rows = [(0, math.sqrt(2.0))]
    if resolution is None:
        resolution = default_resolution(params)
    level = atoms(params, 0, resolution)
    for n in range(1, n_max + 1):
        nxt = {}
        for w, a in level.items():
            for s0 in (0, 1, 2):
                for s1 in (0, 1, 2):
                    child = Word((s0,) + w.symbols + (s1,), w.center + 1)
                    cover = _refine(params, child, a.boxes, resolution)
                    if len(cover):
                        nxt[child] = Atom(child, cover)
        level = nxt
        rows.append((n, max(a.diameter_ub for a in level.values())))
    ns = np.array([r[0] for r in rows[1:]], dtype=float)
    ds = np.array([r[1] for r in rows[1:]])
    rate = float(np.exp(np.polyfit(ns, np.log(ds), 1)[0])) \
        if len(ns) >= 2 else float("nan")
    return {"rows": rows, "rate": rate,
            "reference_rate": max(math.sqrt(params.lam),
                                  1.0 / math.sqrt(params.sigma))}


def theta_holder_fit(params: MapParams, pairs, resolution: int | None = None,
                     min_pairs: int = 8) -> dict:
    """Holder exponent fit for theta from word pairs.

    Each pair contributes the point (j, |theta(w) - theta(w')|) where j
    is the first disagreement depth, fitted against d = 2^-j."""
    levels: dict = {}
    cache: dict = {}

    def th(word: Word):
        word = Word(word.symbols, word.center)   # drop ambiguity flags
        if word not in cache:
            if word.n not in levels:
                levels[word.n] = atoms(params, word.n, resolution)
            a = levels[word.n].get(word)
            if a is None or a.empty:
                raise EmptyAtom(word.to_string())
            cache[word] = ThetaPoint(point=_representative(params, a),
                                     radius=a.diameter_ub, word=word)
        return cache[word]

    depths, dists = [], []
    for w1, w2 in pairs:
        if w1.symbols == w2.symbols:
            continue
        n = min(w1.n, w2.n)
        j = next((k for k in range(n + 1)
                  if w1.symbol(k) != w2.symbol(k)
                  or w1.symbol(-k) != w2.symbol(-k)), None)
        if j is None:
            continue
        p1, p2 = th(w1).point, th(w2).point
        d = math.hypot(p1[0] - p2[0], p1[1] - p2[1])
        floor = max(th(w1).radius, th(w2).radius)
        if d > floor:
            depths.append(j)
            dists.append(d)
    if len(dists) < min_pairs:
        raise ValueError(f"only {len(dists)} resolved pairs, "
                         f"need {min_pairs}")
    slope = np.polyfit(np.array(depths, dtype=float) * math.log(0.5),
                       np.log(np.array(dists)), 1)[0]
    gamma = math.log(max(math.sqrt(params.lam),
                         1.0 / math.sqrt(params.sigma))) / math.log(0.5)
    return {"gamma_est": float(slope), "gamma": gamma,
            "pairs_used": len(dists)}
