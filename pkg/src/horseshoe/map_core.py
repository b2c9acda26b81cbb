"""Core definition of the piecewise horseshoe map.

The map acts on the unit square and is built from four branches:

* ``R1`` (bottom strip)    : (x, y) -> (lam*x, sigma*y)
* ``R3`` (middle strip)    : (x, y) -> (r3_a - lam*x, 1 - sigma*(y - r3_y0))
* ``R4`` (tangency strip)  : shear model, see :func:`apply`
* ``R5`` (top strip)       : (x, y) -> (lam*x + 1 - lam, sigma*y - sigma + 1)

Everything in between (the strip ``R2`` and the two gaps around ``R4``)
leaves the square in one iterate; those points are reported as escaped.

The ``R4`` branch is a shear model.  Writing ``u = lam*x`` and
``w = sigma*(y - t)``, the image is ``(q + w, c*w**2 - u)``.  Vertical
lines ``{x0} x R4`` are mapped onto arcs of the parabolas
``y = c*(x - q)**2 - lam*x0``, the tangency preimage ``T = (0, t)`` goes
to ``Q = (q, 0)``, and ``|det Df| = lam*sigma`` everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

__all__ = [
    "Region",
    "MapParams",
    "Certificate",
    "ValidationCheck",
    "ValidationReport",
    "OrbitRecord",
    "REF_EX",
    "REF_STRICT",
    "classify",
    "apply",
    "apply_inverse",
    "jacobian",
    "jacobian_inverse",
    "orbit",
    "parabola_offset",
    "leaf_tangent",
    "in_A",
    "validate",
    "default_certificate",
    "OutOfDomain",
    "OrbitEscapes",
    "NoReturn",
]

ARCTAN_PI_10 = math.atan(math.pi / 10.0)


class OutOfDomain(ValueError):
    """Operation requested at a point outside its domain of definition."""


class OrbitEscapes(RuntimeError):
    """The orbit needed by an operation leaves the implemented branches."""

    def __init__(self, direction: str, step: int):
        self.direction = direction
        self.step = step
        super().__init__(f"orbit escapes ({direction}) at step {step}")


class NoReturn(RuntimeError):
    """The forward orbit escapes before returning to the tangency window."""


class Region(Enum):
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    R4 = "R4"
    R5 = "R5"
    GAP34_LOWER = "Gap34lower"
    GAP34_UPPER = "Gap34upper"
    OUTSIDE = "Outside"


#: Regions on which the map (and its derivative) is defined.
ACTIVE_REGIONS = frozenset({Region.R1, Region.R3, Region.R4, Region.R5})

_JSON_KEYS = {
    "lam": "lambda",
    "sigma": "sigma",
    "c": "c",
    "q": "q",
    "t": "t",
    "w_max": "w_max",
    "r3_y0": "r3_y0",
    "r3_a": "r3_a",
    "b": "b",
}


@dataclass(frozen=True)
class MapParams:
    """Parameter tuple of the horseshoe map.

    lam      contraction rate, 0 < lam < 1/3
    sigma    expansion rate, sigma > 3
    c        curvature of the image parabolas
    q        abscissa of the tangency point Q = (q, 0)
    t        ordinate of the tangency preimage T = (0, t)
    w_max    half-width of the parabola wings (R4 half-height is w_max/sigma)
    r3_y0    bottom ordinate of strip R3 (height 1/sigma)
    r3_a     right abscissa of the image band R3' = [r3_a-lam, r3_a] x [0,1]
    b        bound on the exponent ratio -ln lam / ln sigma
    """

    lam: float
    sigma: float
    c: float
    q: float
    t: float
    w_max: float
    r3_y0: float
    r3_a: float
    b: float

    @property
    def inv_sigma(self) -> float:
        return 1.0 / self.sigma

    @property
    def h(self) -> float:
        """Half-height of the R4 strip."""
        return self.w_max / self.sigma

    @property
    def r5_y0(self) -> float:
        """Bottom ordinate of strip R5."""
        return 1.0 - (2.0 / 3.0) / self.sigma

    @property
    def wing_half_width(self) -> float:
        """Largest |x - q| over the tangency window A (spec convention).

        This is the half-width of the parabolic image region at the top of
        the bottom strip, sqrt((1/sigma + lam)/c).
        """
        return math.sqrt((self.inv_sigma + self.lam) / self.c)

    def to_json(self) -> str:
        return json.dumps({j: getattr(self, a) for a, j in _JSON_KEYS.items()}, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MapParams":
        kwargs = {a: float(d[j]) for a, j in _JSON_KEYS.items()}
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "MapParams":
        return cls.from_dict(json.loads(text))


#: Human-scale demonstration parameters (soft warnings expected).
REF_EX = MapParams(lam=0.1, sigma=5.0, c=5.0, q=0.75, t=0.7,
                   w_max=0.22, r3_y0=0.4, r3_a=0.5, b=2.0)

#: Parameters satisfying every sufficient condition of the hyperbolicity
#: estimates (strong contraction/expansion, large curvature).
REF_STRICT = MapParams(lam=1e-5, sigma=1e5, c=648.0, q=0.75, t=0.6,
                       w_max=0.02, r3_y0=0.4, r3_a=0.5, b=2.0)


def classify(params: MapParams, p: tuple[float, float]) -> Region:
    """Region of the plane containing ``p``.

    The square is cut into horizontal strips; ties at strip boundaries go
    to the lower-indexed region so itineraries are reproducible.
    """
    x, y = p
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        return Region.OUTSIDE
    if y <= params.inv_sigma:
        return Region.R1
    if y <= params.r3_y0:
        return Region.R2
    if y <= params.r3_y0 + params.inv_sigma:
        return Region.R3
    if y <= params.t - params.h:
        return Region.GAP34_LOWER
    if y <= params.t + params.h:
        return Region.R4
    if y <= params.r5_y0:
        return Region.GAP34_UPPER
    return Region.R5


def apply(params: MapParams, p: tuple[float, float]):
    """One forward step of the map, or ``None`` if the point escapes."""
    x, y = p
    region = classify(params, p)
    if region is Region.R1:
        return (params.lam * x, params.sigma * y)
    if region is Region.R3:
        return (params.r3_a - params.lam * x,
                1.0 - params.sigma * (y - params.r3_y0))
    if region is Region.R4:
        u = params.lam * x
        w = params.sigma * (y - params.t)
        return (params.q + w, params.c * w * w - u)
    if region is Region.R5:
        return (params.lam * x + 1.0 - params.lam,
                params.sigma * y - params.sigma + 1.0)
    return None


def parabola_offset(params: MapParams, p: tuple[float, float]) -> float:
    """Offset K such that ``p`` lies on the parabola y = c*(x-q)**2 - K."""
    x, y = p
    return params.c * (x - params.q) ** 2 - y


def _band_r1(params: MapParams, x: float) -> bool:
    return 0.0 <= x <= params.lam


def _band_r3(params: MapParams, x: float) -> bool:
    return params.r3_a - params.lam <= x <= params.r3_a


def _band_r5(params: MapParams, x: float) -> bool:
    return 1.0 - params.lam <= x <= 1.0


def _band_r4(params: MapParams, p: tuple[float, float]) -> bool:
    x, _ = p
    if abs(x - params.q) > params.w_max:
        return False
    return 0.0 <= parabola_offset(params, p) <= params.lam


def apply_inverse(params: MapParams, p: tuple[float, float]):
    """Branch-wise inverse of :func:`apply`, or ``None`` if ``p`` has no
    preimage under the implemented branches.

    The image bands are ``R1' = [0,lam] x [0,1]``, ``R3'``, ``R5'``
    (vertical bands of width ``lam``) and the parabolic region ``R4'``.
    ``R4'`` may overlap the ``R5'`` column; in that case the candidate
    whose preimage lies in its source strip is the right one (the two
    cases are separated by the image height 1/3).
    """
    x, y = p
    candidates = []
    if _band_r1(params, x):
        candidates.append((Region.R1, (x / params.lam, y / params.sigma)))
    if _band_r3(params, x):
        candidates.append((Region.R3, ((params.r3_a - x) / params.lam,
                                       params.r3_y0 + (1.0 - y) / params.sigma)))
    if _band_r5(params, x):
        candidates.append((Region.R5, ((x - 1.0 + params.lam) / params.lam,
                                       (y + params.sigma - 1.0) / params.sigma)))
    if _band_r4(params, p):
        k = parabola_offset(params, p)
        candidates.append((Region.R4, (k / params.lam,
                                       params.t + (x - params.q) / params.sigma)))
    # a branch formula only inverts points of the branch's actual image:
    # the candidate preimage must land back in the source strip (e.g. the
    # R5' column below height 1/3 is not an image of the R5 strip)
    matching = [pre for reg, pre in candidates if classify(params, pre) is reg]
    if not matching:
        return None
    if len(matching) == 1:
        return matching[0]
    # Only the tangency point Q = (q, 0) reaches here through genuine band
    # overlap; return the R4-branch preimage T.
    for reg, pre in candidates:
        if reg is Region.R4:
            return pre
    return candidates[0][1]


def jacobian(params: MapParams, p: tuple[float, float]) -> np.ndarray:
    """Derivative of the map at ``p`` (2x2 array)."""
    region = classify(params, p)
    if region is Region.R1 or region is Region.R5:
        return np.array([[params.lam, 0.0], [0.0, params.sigma]])
    if region is Region.R3:
        return np.array([[-params.lam, 0.0], [0.0, -params.sigma]])
    if region is Region.R4:
        w = params.sigma * (p[1] - params.t)
        return np.array([[0.0, params.sigma],
                         [-params.lam, 2.0 * params.c * params.sigma * w]])
    raise OutOfDomain(f"derivative undefined in region {region.value} at {p}")


def jacobian_inverse(params: MapParams, p: tuple[float, float]) -> np.ndarray:
    """Inverse of the derivative at ``p`` (derivative of the backward step
    taken at the image of ``p``)."""
    region = classify(params, p)
    if region is Region.R1 or region is Region.R5:
        return np.array([[1.0 / params.lam, 0.0], [0.0, 1.0 / params.sigma]])
    if region is Region.R3:
        return np.array([[-1.0 / params.lam, 0.0], [0.0, -1.0 / params.sigma]])
    if region is Region.R4:
        w = params.sigma * (p[1] - params.t)
        det = params.lam * params.sigma
        return np.array([[2.0 * params.c * params.sigma * w, -params.sigma],
                         [params.lam, 0.0]]) / det
    raise OutOfDomain(f"derivative undefined in region {region.value} at {p}")


def leaf_tangent(params: MapParams, p: tuple[float, float]) -> np.ndarray:
    """Unit tangent of the local parabola through a point of the image
    region R4' (slope 2c(x-q))."""
    x, _ = p
    if not _band_r4(params, p):
        raise OutOfDomain(f"{p} is not in the parabolic image region")
    v = np.array([1.0, 2.0 * params.c * (x - params.q)])
    return v / np.linalg.norm(v)


def in_A(params: MapParams, p: tuple[float, float]) -> bool:
    """Membership in the tangency window A = R4'ic R1 minus {Q}."""
    if p[0] == params.q and p[1] == 0.0:
        return False
    return classify(params, p) is Region.R1 and _band_r4(params, p)


@dataclass
class OrbitRecord:
    """Forward/backward orbit segment with region labels.

    ``fwd_points[k]`` is the k-th forward iterate (index 0 is the seed);
    ``fwd_escape`` is the index of the first point that cannot be iterated
    further, or ``None``.  Backward entries are analogous;
    ``bwd_escape`` is the depth at which no branch preimage exists.
    """

    fwd_points: list
    fwd_labels: list
    bwd_points: list
    bwd_labels: list
    fwd_escape: int | None = None
    bwd_escape: int | None = None


def orbit(params: MapParams, p: tuple[float, float],
          n_fwd: int, n_bwd: int = 0) -> OrbitRecord:
    fwd = [p]
    fwd_labels = [classify(params, p)]
    fwd_escape = None
    cur = p
    for k in range(n_fwd):
        nxt = apply(params, cur)
        if nxt is None:
            fwd_escape = k
            break
        cur = nxt
        fwd.append(cur)
        fwd_labels.append(classify(params, cur))
    bwd = []
    bwd_labels = []
    bwd_escape = None
    cur = p
    for k in range(n_bwd):
        pre = apply_inverse(params, cur)
        if pre is None:
            bwd_escape = k
            break
        cur = pre
        bwd.append(cur)
        bwd_labels.append(classify(params, cur))
    return OrbitRecord(fwd, fwd_labels, bwd, bwd_labels, fwd_escape, bwd_escape)


# ---------------------------------------------------------------------------
# Parameter validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationCheck:
    constraint: str
    kind: str           # "hard" or "soft"
    passed: bool
    value: float
    bound: str
    note: str = ""


@dataclass
class ValidationReport:
    checks: list

    @property
    def valid(self) -> bool:
        return all(c.passed for c in self.checks if c.kind == "hard")

    @property
    def warnings(self) -> list:
        return [c for c in self.checks if c.kind == "soft" and not c.passed]

    @property
    def verdict(self) -> str:
        if not self.valid:
            return "invalid"
        return "valid-with-warnings" if self.warnings else "valid"

    def to_json(self) -> str:
        payload = {
            "verdict": self.verdict,
            "checks": [
                {"constraint": c.constraint, "kind": c.kind, "pass": c.passed,
                 "value": c.value, "bound": c.bound, **({"note": c.note} if c.note else {})}
                for c in self.checks
            ],
        }
        return json.dumps(payload, indent=2)


def validate(params: MapParams, chi: float = 1.0) -> ValidationReport:
    """Check every parameter constraint; hard failures make the set invalid,
    soft failures only produce warnings.

    ``chi`` is the angle constant used by the sufficient-condition check
    on the cone estimates (stored in the certificate once calibrated).
    """
    p = params
    checks = []

    def add(cid, kind, passed, value, bound, note=""):
        checks.append(ValidationCheck(cid, kind, bool(passed), float(value), bound, note))

    add("lambda_range", "hard", 0.0 < p.lam < 1.0 / 3.0, p.lam, "(0, 1/3)")
    add("sigma_min", "hard", p.sigma > 3.0, p.sigma, "> 3")
    add("q_range", "hard", 2.0 / 3.0 < p.q < 1.0, p.q, "(2/3, 1)")
    add("t_range", "hard", 1.0 / 3.0 < p.t < 1.0, p.t, "(1/3, 1)")

    ratio = -math.log(p.lam) / math.log(p.sigma)
    add("exponent_ratio", "hard", 1.0 / p.b < ratio < p.b, ratio, f"(1/{p.b}, {p.b})")

    wing = p.c * p.w_max ** 2
    add("wing_height", "hard", p.inv_sigma < wing < 1.0 / 3.0, wing,
        f"({p.inv_sigma:.6g}, 1/3)")
    span_margin = min(p.q - p.w_max, 1.0 - (p.q + p.w_max))
    add("wing_span", "hard", span_margin > 0.0, span_margin,
        "> 0 (wings inside (0,1))")

    strip_margin = min(p.r3_y0 - p.inv_sigma,
                       (p.t - p.h) - (p.r3_y0 + p.inv_sigma),
                       p.r5_y0 - (p.t + p.h))
    add("strips_disjoint", "hard", strip_margin > 0.0, strip_margin,
        "> 0 (gaps between R1, R3, R4, R5)")

    band_margin = min(p.r3_a - 2.0 * p.lam,
                      (p.q - p.w_max) - p.r3_a,
                      1.0 / 3.0 - wing)
    add("bands_disjoint", "hard", band_margin > 0.0, band_margin,
        "> 0 (image bands interior-disjoint)")

    slope = 2.0 * math.sqrt(p.c * (p.lam + p.inv_sigma))
    add("tan10", "soft", slope < ARCTAN_PI_10, slope, f"< {ARCTAN_PI_10:.6g}",
        note="bound read literally as arctan(pi/10); tan(pi/10) may be intended")

    # sup over 0 < x < lam of (3cx^2)^(1+1/b) / (c*chi*x^2) is at x = lam
    lhs = (3.0 * p.c * p.lam ** 2) ** (1.0 + 1.0 / p.b)
    rhs = p.c * chi * p.lam ** 2
    add("estimc3", "soft", lhs < rhs, lhs, f"< {rhs:.6g} (chi={chi:g})")

    return ValidationReport(checks)


# ---------------------------------------------------------------------------
# Certificate of named constants
# ---------------------------------------------------------------------------

@dataclass
class Certificate:
    """Ledger of the named constants used by the geometric estimates.

    ``chi0`` is fixed at 4 (cone aperture factor).  ``gamma`` is the
    closed-form Hoelder exponent of the coding map.  Everything else is
    either configured or estimated by a calibration sweep; provenance is
    tracked per constant.
    """

    chi0: float
    chi1: float
    chi: float
    C0: float
    eps0: float
    eta: float
    rho1: float
    C3: float
    C4: float
    C5: float
    K: float
    eps1: float
    gamma: float
    b: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.chi0 != 4.0:
            raise ValueError("chi0 is fixed at 4")
        for name in ("chi1", "chi", "C0", "eps0", "eta", "rho1", "C3",
                     "C4", "C5", "K", "eps1", "gamma", "b"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"certificate constant {name} must be positive")

    def to_json(self) -> str:
        payload = {}
        for name in ("chi0", "chi1", "chi", "C0", "eps0", "eta", "rho1",
                     "C3", "C4", "C5", "K", "eps1", "gamma", "b"):
            payload[name] = {
                "value": getattr(self, name),
                "provenance": self.provenance.get(name, "configured"),
            }
        return json.dumps(payload, indent=2)

    def with_updates(self, provenance: str = "estimated", **values) -> "Certificate":
        prov = dict(self.provenance)
        for name in values:
            prov[name] = provenance
        new = replace(self, provenance=prov, **values)
        if "rho1" in values or "C0" in values:
            new = replace(new, C3=new.rho1 * new.C0)
            new.provenance["C3"] = provenance
        return new


def closed_form_gamma(params: MapParams) -> float:
    """Hoelder exponent of the coding map,
    min(-ln sqrt(lam)/ln 2, ln sqrt(sigma)/ln 2)."""
    return min(-math.log(math.sqrt(params.lam)) / math.log(2.0),
               math.log(math.sqrt(params.sigma)) / math.log(2.0))


def default_certificate(params: MapParams) -> Certificate:
    """Configured starting certificate; calibration can tighten it later."""
    p = params
    return Certificate(
        chi0=4.0,
        chi1=0.5,
        chi=1.0,
        C0=0.25,
        eps0=0.25,
        eta=min(0.25, 1.0 / (320.0 * p.c)),
        rho1=0.25,
        C3=0.25 * 0.25,
        C4=2.0 * p.c * p.sigma ** 2,
        C5=4.0,
        K=2.0,
        eps1=0.5,
        gamma=closed_form_gamma(p),
        b=p.b,
        provenance={"chi0": "configured", "gamma": "configured",
                    "C4": "configured", "b": "configured"},
    )
