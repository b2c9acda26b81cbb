"""Thermodynamic formalism on the symbol space.

Holder potentials on the square are pulled back along the coding map
to finite-memory potentials on the full 3-shift; pressure, Gibbs and
equilibrium measures come from the weighted transfer operator on
(m-1)-word states, and the equilibrium state is pushed forward to the
partition atoms.  Lyapunov exponents of orbits close the loop between
the symbolic and the planar picture.

Everything at memory m lives on plain arrays indexed by base-3 word
codes (most significant digit first), so the operator applications are
tensor contractions rather than sparse matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import coding
from .map_core import (MapParams, apply, apply_inverse, jacobian,
                       jacobian_inverse)


class PotentialError(ValueError):
    """Declared Holder data contradicted by sampled values."""


class OrbitEscapes(RuntimeError):
    """The orbit left the bands before the requested horizon."""


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

@dataclass
class Potential:
    """Real function on the square with declared Holder data:
    |phi(p) - phi(q)| <= holder_C * |p - q| ** holder_theta."""

    evaluator: object
    holder_C: float
    holder_theta: float = 1.0
    name: str = ""

    def __call__(self, p) -> float:
        return float(self.evaluator(p))

    def spot_check(self, samples: int = 200, seed: int = 0) -> None:
        """Sample random pairs and reject if the declared bound fails."""
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            p = (rng.uniform(), rng.uniform())
            q = (rng.uniform(), rng.uniform())
            gap = abs(self(p) - self(q))
            dist = math.hypot(p[0] - q[0], p[1] - q[1])
            bound = self.holder_C * dist ** self.holder_theta
            if gap > bound + 1e-12:
                raise PotentialError(
                    f"|phi{p} - phi{q}| = {gap:.3g} exceeds "
                    f"C*d^theta = {bound:.3g}")


def named_potential(name: str) -> Potential:
    """The three stock potentials used in the verification runs."""
    if name == "zero":
        return Potential(lambda p: 0.0, holder_C=0.0, name="zero")
    if name == "x":
        return Potential(lambda p: p[0], holder_C=1.0, name="x")
    if name == "cos":
        return Potential(lambda p: 0.3 * math.cos(2.0 * math.pi * p[0]),
                         holder_C=0.3 * 2.0 * math.pi, name="cos")
    raise ValueError(f"unknown potential {name!r}")


# ---------------------------------------------------------------------------
# Word bookkeeping (one-sided m-words as base-3 codes)
# ---------------------------------------------------------------------------

def _word_of_code(code: int, m: int) -> tuple:
    out = []
    for _ in range(m):
        out.append(code % 3)
        code //= 3
    return tuple(reversed(out))


def _code_of_word(symbols) -> int:
    code = 0
    for s in symbols:
        code = 3 * code + int(s)
    return code


def _centered(symbols) -> coding.Word:
    """Centered word for a one-sided m-word: odd lengths are already
    centered, even lengths get one fixed-point symbol 0 on the left."""
    if len(symbols) % 2 == 1:
        return coding.Word(tuple(symbols), len(symbols) // 2)
    return coding.Word((0,) + tuple(symbols), len(symbols) // 2)


# ---------------------------------------------------------------------------
# Pull-back
# ---------------------------------------------------------------------------

@dataclass
class CylinderPotential:
    """Potential evaluated on all 3^m one-sided m-words."""

    m: int
    values: np.ndarray
    variation_bound: float
    flagged: tuple = ()
    potential: Potential | None = None

    def value(self, symbols) -> float:
        return float(self.values[_code_of_word(symbols)])


def _atom_level(params: MapParams, n: int, resolution, _cache={}):
    key = (params, n, resolution)
    if key not in _cache:
        _cache[key] = coding.atoms(params, n, resolution)
    return _cache[key]


def _nearest_nonempty(level: dict, word: coding.Word) -> coding.Word:
    """Closest word (by symbol flips, then lexicographic) with points."""
    for flips in range(1, word.n * 2 + 2):
        hits = []
        for other in level:
            if other.n != word.n:
                continue
            d = sum(a != b for a, b in zip(other.symbols, word.symbols))
            if d == flips:
                hits.append(other)
        if hits:
            return min(hits, key=lambda w: w.symbols)
    raise coding.EmptyAtom(word.to_string())


def pull_back(params: MapParams, phi: Potential, m: int,
              resolution: int | None = None) -> CylinderPotential:
    """Evaluate ``phi`` at the coding representatives of all m-words.

    The m-word is padded to a centered word (0 is the canonical filler:
    ...000... codes the fixed point at the origin); words whose cover is
    empty borrow the nearest nonempty neighbour and are flagged."""
    phi.spot_check()
    centered_n = _centered((0,) * m).n
    level = _atom_level(params, centered_n, resolution)
    values = np.empty(3 ** m)
    variation = 0.0
    flagged = []
    for code in range(3 ** m):
        word = _centered(_word_of_code(code, m))
        a = level.get(word)
        if a is None or a.empty:
            flagged.append(word.to_string())
            a = level[_nearest_nonempty(level, word)]
        rep = coding._representative(params, a)
        values[code] = phi(rep)
        variation = max(variation,
                        phi.holder_C * a.diameter_ub ** phi.holder_theta)
    return CylinderPotential(m=m, values=values, variation_bound=variation,
                             flagged=tuple(flagged), potential=phi)


# ---------------------------------------------------------------------------
# Transfer operator, pressure, Gibbs measure
# ---------------------------------------------------------------------------

def _apply_transfer(W: np.ndarray, v: np.ndarray, m: int) -> np.ndarray:
    """Push a state vector forward: sum over the oldest symbol."""
    if m == 1:
        return np.array([float(np.sum(W)) * v[0]])
    V = v.reshape((3,) * (m - 1))
    return (W * V[..., None]).sum(axis=0).reshape(-1)


def _apply_transfer_t(W: np.ndarray, u: np.ndarray, m: int) -> np.ndarray:
    """Transpose action: sum over the appended symbol."""
    if m == 1:
        return np.array([float(np.sum(W)) * u[0]])
    U = u.reshape((3,) * (m - 1))
    return (W * U[None, ...]).sum(axis=-1).reshape(-1)


def _power_iteration(step, size: int, tol: float, v0: np.ndarray | None,
                     max_iter: int = 100_000):
    v = np.ones(size) / size if v0 is None else np.abs(v0) + 1e-300
    v /= v.sum()
    lam = 0.0
    for _ in range(max_iter):
        w = step(v)
        new = float(w.sum())
        w /= new
        if abs(new - lam) <= tol * abs(new) and np.max(np.abs(w - v)) <= tol:
            return new, w
        lam, v = new, w
    raise RuntimeError("power iteration did not converge")


@dataclass
class _GibbsModel:
    m: int
    W: np.ndarray            # exp(values), tensor shape (3,)*m
    eigenvalue: float
    right: np.ndarray        # over (m-1)-word states
    left: np.ndarray

    @property
    def states(self) -> int:
        return max(1, 3 ** (self.m - 1))

    def transition(self) -> np.ndarray:
        """Row-stochastic (states x 3): probability of appending s."""
        m, S = self.m, self.states
        P = np.empty((S, 3))
        for i in range(S):
            for s in range(3):
                j = (i * 3 + s) % S if m > 1 else 0
                w = self.W.reshape(-1)[i * 3 + s]
                P[i, s] = w * self.left[j] / (self.eigenvalue
                                              * self.left[i])
        return P

    def stationary(self) -> np.ndarray:
        pi = self.left * self.right
        return pi / pi.sum()


def _solve(cyl: CylinderPotential, tol: float = 1e-12,
           v0: np.ndarray | None = None) -> _GibbsModel:
    m = cyl.m
    W = np.exp(cyl.values).reshape((3,) * m)
    size = max(1, 3 ** (m - 1))
    lam, right = _power_iteration(
        lambda v: _apply_transfer(W, v, m), size, tol, v0)
    _, left = _power_iteration(
        lambda u: _apply_transfer_t(W, u, m), size, tol, v0)
    return _GibbsModel(m=m, W=W, eigenvalue=lam, right=right, left=left)


def pressure(cyl: CylinderPotential, tol: float = 1e-12,
             starts: int = 1, seed: int = 0) -> float:
    """Log of the transfer operator's leading eigenvalue.

    ``starts > 1`` re-runs the iteration from random positive vectors
    and demands agreement to 10*tol (the numerical stand-in for Perron
    simplicity)."""
    model = _solve(cyl, tol)
    if starts > 1:
        rng = np.random.default_rng(seed)
        for _ in range(starts - 1):
            other = _solve(cyl, tol, v0=rng.uniform(0.1, 1.0,
                                                    size=model.states))
            if abs(other.eigenvalue - model.eigenvalue) \
                    > 10 * tol * model.eigenvalue:
                raise RuntimeError("leading eigenvalue not simple")
            if np.max(np.abs(other.right - model.right)) > 1e-10:
                raise RuntimeError("eigenvector depends on the start")
    return math.log(model.eigenvalue)


def _chain_masses(model: _GibbsModel, k: int) -> np.ndarray:
    """Masses of all k-words of the stationary Markov chain, k >= m-1."""
    m, S = model.m, model.states
    P = model.transition()
    pi = model.stationary()
    if k == m - 1:
        return pi.copy()
    prev = _chain_masses(model, k - 1)
    out = np.empty(3 ** k)
    for code in range(3 ** (k - 1)):
        state = code % S
        for s in range(3):
            out[code * 3 + s] = prev[code] * P[state, s]
    return out


@dataclass
class CylinderMeasure:
    """Gibbs measure restricted to m-cylinders (with the (m+1)-level
    masses kept for the entropy difference)."""

    m: int
    masses: np.ndarray
    masses_next: np.ndarray
    pressure: float
    entropy: float
    integral: float
    variation_bound: float
    gibbs_C: float

    def mass(self, symbols) -> float:
        return float(self.masses[_code_of_word(symbols)])

    def to_csv(self) -> str:
        lines = ["word,mass"]
        for code in range(3 ** self.m):
            w = "".join(str(s) for s in _word_of_code(code, self.m))
            lines.append(f"{w},{float(self.masses[code])!r}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "m": self.m,
            "pressure": self.pressure,
            "entropy": self.entropy,
            "integral": self.integral,
            "variation_bound": self.variation_bound,
            "gibbs_C": self.gibbs_C,
        }, ensure_ascii=False)


def _entropy_of(masses: np.ndarray) -> float:
    mz = masses[masses > 0.0]
    return float(-np.sum(mz * np.log(mz)))


def _gibbs_constant(model: _GibbsModel, masses: dict,
                    samples: int = 200, seed: int = 0) -> float:
    """Empirical bound for mass / exp(-kP + Birkhoff sum) on random
    words a little longer than the memory."""
    rng = np.random.default_rng(seed)
    m = model.m
    logs = []
    for _ in range(samples):
        k = m + int(rng.integers(0, 3))
        word = tuple(rng.integers(0, 3, size=k))
        mass = masses[k][_code_of_word(word)]
        birkhoff = sum(
            math.log(model.W.reshape(-1)[_code_of_word(word[i:i + m])])
            for i in range(k - m + 1))
        gibbs = math.exp(-k * math.log(model.eigenvalue) + birkhoff)
        logs.append(abs(math.log(mass / gibbs)))
    return float(math.exp(max(logs)))


def gibbs_measure(cyl: CylinderPotential, tol: float = 1e-12) -> CylinderMeasure:
    """Invariant Gibbs measure of the finite-memory potential."""
    model = _solve(cyl, tol)
    m = model.m
    masses = {k: _chain_masses(model, k) for k in range(m - 1, m + 3)}
    integral = float(np.dot(masses[m], cyl.values))
    h = _entropy_of(masses[m + 1]) - _entropy_of(masses[m])
    return CylinderMeasure(
        m=m, masses=masses[m], masses_next=masses[m + 1],
        pressure=math.log(model.eigenvalue), entropy=h, integral=integral,
        variation_bound=cyl.variation_bound,
        gibbs_C=_gibbs_constant(model, masses))


def entropy(measure: CylinderMeasure) -> float:
    """Block-entropy difference H_{m+1} - H_m."""
    return _entropy_of(measure.masses_next) - _entropy_of(measure.masses)


# ---------------------------------------------------------------------------
# Equilibrium state on atoms
# ---------------------------------------------------------------------------

def _tangency_pairs(params: MapParams, n: int):
    """Word pairs double-coding the tangency orbit at depth n."""
    pairs = set()
    pts = {0: (params.q, 0.0)}
    for k in range(1, n + 1):
        pts[k] = apply(params, pts[k - 1])
        pts[-k] = apply_inverse(params, pts[-k + 1])
    for k in range(-n, n + 1):
        if pts[k] is None:
            continue
        try:
            w = coding.itinerary(params, pts[k], n)
        except (coding.NotInBands, coding.Escaped):
            continue
        for pos in w.ambiguous:
            variant = list(w.symbols)
            variant[pos] = 2
            pairs.add((coding.Word(w.symbols, w.center),
                       coding.Word(tuple(variant), w.center)))
    return sorted(pairs, key=lambda p: p[0].symbols)


@dataclass
class EquilibriumState:
    measure: CylinderMeasure
    n: int
    atom_masses: dict
    merged_pairs: tuple
    reassigned: tuple
    mass_defect: float


def equilibrium_state(params: MapParams, phi: Potential, m: int,
                      resolution: int | None = None,
                      tol: float = 1e-12) -> EquilibriumState:
    """Gibbs measure of the pulled-back potential, pushed forward to the
    level-n atoms (n = (m-1)//2) by marginalizing cylinder masses.

    Masses of the 2n tangency-double-coded words are merged into the
    canonical (lower-symbol) word; cylinders whose atoms are empty are
    reassigned to the nearest nonempty word and reported."""
    cyl = pull_back(params, phi, m, resolution)
    measure = gibbs_measure(cyl, tol)
    n = (m - 1) // 2
    level = _atom_level(params, n, resolution)
    atom_masses: dict = {}
    reassigned = []
    for code in range(3 ** m):
        symbols = _word_of_code(code, m)
        word = coding.Word(symbols[:2 * n + 1], n)
        if word not in level:
            target = _nearest_nonempty(level, word)
            reassigned.append((word.to_string(), target.to_string()))
            word = target
        atom_masses[word] = atom_masses.get(word, 0.0) \
            + float(measure.masses[code])
    merged = []
    for canon, variant in _tangency_pairs(params, n):
        if variant in atom_masses and canon in atom_masses:
            moved = atom_masses.pop(variant)
            atom_masses[canon] += moved
            merged.append((canon.to_string(), variant.to_string(), moved))
    defect = abs(sum(atom_masses.values()) - 1.0)
    return EquilibriumState(measure=measure, n=n, atom_masses=atom_masses,
                            merged_pairs=tuple(merged),
                            reassigned=tuple(sorted(set(reassigned))),
                            mass_defect=defect)


# ---------------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------------

def shift_orbit_point(params: MapParams, past, future):
    """Point realizing a strip itinerary avoiding the parabolic strip.

    ``past`` and ``future`` are sequences over the affine strips
    {0: bottom, 2: middle, 1: top} (the band the image lands in); the
    abscissa comes from composing the contracting branch maps along the
    past, the ordinate from the backward-contracting maps along the
    future, so long itineraries are computed stably.

    The pair (1, 0) is rejected: the top strip's image only reaches
    down to y = 1/3, below which the bottom strip's preimage lies, so
    that transition is carried by the parabolic strip alone."""
    p = params
    seq = tuple(past) + tuple(future)
    for a, b in zip(seq, seq[1:]):
        if a == 1 and b == 0:
            raise ValueError("1 -> 0 is not realizable in the affine strips")
    x = 0.5
    for s in past:
        if s == 0:
            x = p.lam * x
        elif s == 2:
            x = p.r3_a - p.lam * x
        elif s == 1:
            x = p.lam * x + 1.0 - p.lam
        else:
            raise ValueError(f"affine strip symbol expected, got {s}")
    y = 0.5
    for s in reversed(future):
        if s == 0:
            y = y / p.sigma
        elif s == 2:
            y = p.r3_y0 + (1.0 - y) / p.sigma
        elif s == 1:
            y = (y + p.sigma - 1.0) / p.sigma
        else:
            raise ValueError(f"affine strip symbol expected, got {s}")
    return (x, y)


def lyapunov(params: MapParams, M, N: int, symbols=None,
             N_back: int | None = None) -> dict:
    """Cocycle growth rates along the orbit of ``M``.

    chi_u averages log-growth of a renormalized unstable vector over N
    forward steps, chi_s the (negated) backward growth of a stable
    vector.  With ``symbols`` (an affine strip itinerary of length >= N
    starting at time 0, as accepted by :func:`shift_orbit_point`) the
    orbit ordinates are recomputed from the remaining tail each step
    instead of iterated, which keeps long orbits on the invariant set.
    ``N_back`` shortens the stable horizon when the seed has a shallower
    backward chain than forward (the default is N).
    """
    p = params
    if N_back is None:
        N_back = N
    if symbols is None:
        pts = [tuple(map(float, M))]
        for k in range(N):
            nxt = apply(p, pts[-1])
            if nxt is None:
                raise OrbitEscapes(f"forward orbit leaves at step {k + 1}")
            pts.append(nxt)
    else:
        if len(symbols) < N + 1:
            raise ValueError("itinerary shorter than the horizon")
        x = float(M[0])
        pts = []
        for k in range(N + 1):
            y = shift_orbit_point(p, (), symbols[k:])[1]
            pts.append((x, y))
            s = symbols[k]
            x = p.lam * x if s == 0 else (
                p.r3_a - p.lam * x if s == 2 else p.lam * x + 1.0 - p.lam)
    if symbols is None:
        jacs = [jacobian(p, pts[k]) for k in range(N)]
    else:
        # affine branches have constant derivatives, so the symbol alone
        # decides (and edge-of-strip classification ties do not bite)
        flip = np.array([[-p.lam, 0.0], [0.0, -p.sigma]])
        straight = np.array([[p.lam, 0.0], [0.0, p.sigma]])
        jacs = [flip if symbols[k] == 2 else straight for k in range(N)]
    v = np.array([0.0, 1.0])
    chi_u = 0.0
    for k in range(N):
        v = jacs[k] @ v
        norm = float(np.hypot(*v))
        chi_u += math.log(norm)
        v /= norm
    chi_u /= N

    u = np.array([1.0, 0.0])
    chi_s = 0.0
    if symbols is None:
        back = [tuple(map(float, M))]
        for k in range(N_back):
            pre = apply_inverse(p, back[-1])
            if pre is None:
                raise OrbitEscapes(f"backward orbit leaves at step {k + 1}")
            back.append(pre)
        for k in range(N_back):
            u = jacobian_inverse(p, back[k + 1]) @ u
            norm = float(np.hypot(*u))
            chi_s += math.log(norm)
            u /= norm
    else:
        for k in range(min(N_back, N)):
            u = np.linalg.inv(jacs[k]) @ u
            norm = float(np.hypot(*u))
            chi_s += math.log(norm)
            u /= norm
        N_back = min(N_back, N)
    return {"chi_u": chi_u, "chi_s": -chi_s / max(1, N_back)}
