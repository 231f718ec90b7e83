"""Sampled weights: Muckenhoupt and reverse Hölder constants, membership
verdicts, index brackets, doubling order and BMO norms.

Membership in A_p or RH_q is a statement about every ball, so a finite grid
cannot decide it.  The verdict used here looks at the only place a weight on
the torus can fail: near a point where the relevant density blows up.  Around
such a point we sum the density over a fixed ring of cells dilated by 3^k.
Because cell centers sit at odd multiples of h/2, dilation by 3 about a cell
corner maps cell centers to cell centers, so for |x|^gamma the ring sums scale
by exactly 3^{k(n - gamma)}.  The decay exponent of these sums tells
integrable from non-integrable without a tolerance on the grid size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exponents import INF, ONE, Ext, Number, WeightIndices, conjugate, ext, power_weight_indices
from .grid import Ball, BallFamily, PeriodicGrid

STABLE = "stable"
DIVERGING = "diverging"
INCONCLUSIVE = "inconclusive"

# exponents within this of zero count as the borderline (divergent) case
EXPONENT_TOL = 1e-9


@dataclass
class WeightField:
    grid: PeriodicGrid
    values: np.ndarray
    descriptor: tuple | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("weight does not match grid")
        if np.any(~np.isfinite(self.values)) or np.any(self.values <= 0):
            raise ValueError("weight must be finite and strictly positive on every cell")

    @classmethod
    def unit(cls, grid: PeriodicGrid) -> "WeightField":
        return cls(grid, np.ones(grid.shape), ("power", Fraction(0)))

    @classmethod
    def power(cls, grid: PeriodicGrid, alpha: Number) -> "WeightField":
        a = Fraction(str(alpha)) if not isinstance(alpha, Fraction) else alpha
        return cls(grid, grid.radius ** float(a), ("power", a))

    @property
    def alpha(self) -> Fraction | None:
        if self.descriptor and self.descriptor[0] == "power":
            return self.descriptor[1]
        return None

    def __call__(self) -> np.ndarray:
        return self.values

    def density(self, expo: float) -> np.ndarray:
        return self.values**expo


def _values(w) -> np.ndarray:
    return w.values if isinstance(w, WeightField) else np.asarray(w, dtype=float)


def _grid_of(w, grid):
    if grid is not None:
        return grid
    if isinstance(w, WeightField):
        return w.grid
    raise ValueError("grid required for a bare weight array")


# ---------------------------------------------------------------------------
# constants over ball families


def ap_quotient(w: np.ndarray, p: Ext, mask: np.ndarray) -> float:
    wb = w[mask]
    if p == 1:
        return float(np.mean(wb) / np.min(wb))
    if p.is_inf:
        raise ValueError("A_inf has no single quotient")
    pf = float(p.fraction)
    dual = wb ** (-1.0 / (pf - 1.0))
    return float(np.mean(wb) * np.mean(dual) ** (pf - 1.0))


def rh_quotient(w: np.ndarray, q: Ext, mask: np.ndarray) -> float:
    wb = w[mask]
    if q.is_inf:
        return float(np.max(wb) / np.mean(wb))
    qf = float(q.fraction)
    return float(np.mean(wb**qf) ** (1.0 / qf) / np.mean(wb))


def ap_constant(w, p: Number, balls, grid: PeriodicGrid | None = None) -> float:
    """Supremum of the A_p quotient over ``balls``."""
    p = ext(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    grid = _grid_of(w, grid)
    vals = _values(w)
    return max(ap_quotient(vals, p, b.mask(grid)) for b in balls)


def rh_constant(w, q: Number, balls, grid: PeriodicGrid | None = None) -> float:
    """Supremum of the RH_q quotient over ``balls``."""
    q = ext(q)
    if q <= 1:
        raise ValueError("q must be > 1")
    grid = _grid_of(w, grid)
    vals = _values(w)
    return max(rh_quotient(vals, q, b.mask(grid)) for b in balls)


def origin_growth(w, p: Number, kind: str, grid: PeriodicGrid | None = None, levels: int = 4) -> list[float]:
    """Quotients over origin-centered balls of radius 2^{-k-2}, k = 0..levels."""
    grid = _grid_of(w, grid)
    vals = _values(w)
    out = []
    for k in range(levels + 1):
        r = 2.0 ** (-k - 2)
        if r < 2 * grid.h:
            break
        m = Ball((0.0,) * grid.n, r).mask(grid)
        out.append(ap_quotient(vals, ext(p), m) if kind == "A" else rh_quotient(vals, ext(p), m))
    return out


# ---------------------------------------------------------------------------
# triadic ring test


@dataclass
class RingProfile:
    center: tuple[float, ...]
    sums: list[float]
    maxima: list[float]

    @property
    def levels(self) -> int:
        return len(self.sums)

    def decay_exponents(self) -> list[float]:
        return [math.log(self.sums[k + 1] / self.sums[k], 3) for k in range(self.levels - 1)]

    def growth_exponents(self) -> list[float]:
        return [math.log(self.maxima[k] / self.maxima[k + 1], 3) for k in range(self.levels - 1)]


def _base_ring(n: int) -> np.ndarray:
    """Offsets (in units of h) of the cells whose centers have sup-norm 3/2."""
    axis = np.array([-1.5, -0.5, 0.5, 1.5])
    pts = np.stack(np.meshgrid(*([axis] * n), indexing="ij")).reshape(n, -1).T
    return pts[np.max(np.abs(pts), axis=1) == 1.5]


def ring_profile(density: np.ndarray, grid: PeriodicGrid, corner: tuple[int, ...]) -> RingProfile:
    """Sums and maxima of ``density`` over the base ring dilated by 3^k about a corner.

    ``corner`` is the integer index of a cell corner; corner (N/2, ...) is the origin.
    """
    ring = _base_ring(grid.n)
    sums, maxima = [], []
    k = 0
    while 3**k * 1.5 <= grid.N / 2:
        offs = ring * 3**k  # odd multiples of 1/2, so cell index = corner + offs - 1/2
        idx = tuple(((np.asarray(corner)[None, :] + offs - 0.5).astype(int) % grid.N).T)
        vals = density[idx]
        sums.append(float(np.sum(vals)) * (3**k * grid.h) ** grid.n)
        maxima.append(float(np.max(vals)))
        k += 1
    cx = tuple(float(c) * grid.h - 0.5 for c in corner)
    return RingProfile(cx, sums, maxima)


def _corners_to_test(density: np.ndarray, grid: PeriodicGrid) -> list[tuple[int, ...]]:
    origin = (grid.N // 2,) * grid.n
    peak = np.unravel_index(int(np.argmax(density)), grid.shape)
    # nearest corner to the peak cell center, rounding toward the origin side
    snapped = tuple(int(i) if i >= grid.N // 2 else int(i) + 1 for i in peak)
    return [origin] if snapped == origin else [origin, snapped]


def integrability_verdict(density: np.ndarray, grid: PeriodicGrid) -> tuple[str, dict]:
    """Is ``density`` integrable near its worst point?  Diverging iff the ring
    sums fail to decay toward the center."""
    worst = None
    for corner in _corners_to_test(density, grid):
        prof = ring_profile(density, grid, corner)
        if prof.levels < 3:
            return INCONCLUSIVE, {"reason": "grid too coarse for two ring refinements"}
        e = prof.decay_exponents()[0]
        if worst is None or e < worst[0]:
            worst = (e, prof)
    e, prof = worst
    verdict = DIVERGING if e <= EXPONENT_TOL else STABLE
    return verdict, {"center": prof.center, "decay_exponent": e}


def boundedness_verdict(density: np.ndarray, grid: PeriodicGrid) -> tuple[str, dict]:
    """Is ``density`` bounded near its worst point?  Diverging iff the ring
    maxima grow toward the center at a rate that persists at the finest scale."""
    worst = None
    for corner in _corners_to_test(density, grid):
        prof = ring_profile(density, grid, corner)
        if prof.levels < 3:
            return INCONCLUSIVE, {"reason": "grid too coarse for two ring refinements"}
        g = prof.growth_exponents()
        grows = g[0] > EXPONENT_TOL and g[0] >= 0.5 * max(g)
        if worst is None or (grows and not worst[0]):
            worst = (grows, g[0], prof)
    grows, g0, prof = worst
    return (DIVERGING if grows else STABLE), {"center": prof.center, "growth_exponent": g0}


def ap_verdict(w, p: Number, grid: PeriodicGrid | None = None) -> tuple[str, dict]:
    p = ext(p)
    grid = _grid_of(w, grid)
    vals = _values(w)
    v, info = integrability_verdict(vals, grid)
    if v != STABLE:
        info["failing"] = "w"
        return v, info
    if p == 1:
        v, info = boundedness_verdict(1.0 / vals, grid)
        info["failing"] = "1/w"
        return v, info
    if p.is_inf:
        raise ValueError("use a finite p")
    v, info = integrability_verdict(vals ** (-1.0 / (float(p.fraction) - 1.0)), grid)
    info["failing"] = "w^(1-p')"
    return v, info


def rh_verdict(w, q: Number, grid: PeriodicGrid | None = None) -> tuple[str, dict]:
    q = ext(q)
    grid = _grid_of(w, grid)
    vals = _values(w)
    if q.is_inf:
        return boundedness_verdict(vals, grid)
    return integrability_verdict(vals ** float(q.fraction), grid)


# ---------------------------------------------------------------------------
# indices


def _bisect(pred, lo: int, hi: int) -> int:
    """Smallest k in (lo, hi] with pred(k) true, given pred(lo) false, pred(hi) true."""
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def doubling_order(w, grid: PeriodicGrid | None = None, centers=None) -> float:
    """Largest log-log slope of r -> w(B(x, r)) over the sampled centers."""
    grid = _grid_of(w, grid)
    vals = _values(w)
    if centers is None:
        centers = [(0.0,) * grid.n, (0.25,) + (0.0,) * (grid.n - 1), (0.25,) * grid.n, (-0.375,) * grid.n]
    radii = [0.25 / 2**k for k in range(12) if 0.25 / 2**k >= 8 * grid.h]
    if len(radii) < 2:
        raise ValueError("grid too coarse to fit a doubling order")
    best = 0.0
    for c in centers:
        # off-center balls stay clear of the origin so a singularity there
        # cannot bend the slope mid-fit
        dist = math.hypot(*c)
        rs = radii if dist == 0 else [r for r in radii if r <= dist / 2]
        if len(rs) < 2:
            continue
        masses = [np.sum(vals[Ball(c, r).mask(grid)]) for r in rs]
        slope = np.polyfit(np.log(rs), np.log(masses), 1)[0]
        best = max(best, float(slope))
    return best


def weight_indices(
    w: WeightField,
    cap: Number = 16,
    resolution: Number = Fraction(1, 256),
    use_descriptor: bool = True,
) -> WeightIndices:
    """Brackets for r_w and s_w by bisection on the membership verdicts.

    The r_w bracket is [last diverging p, first stable p]; the s_w bracket is
    [last stable s, first diverging s].  With a power-weight descriptor and
    ``use_descriptor`` the point values are the analytic ones and the
    brackets are kept as a cross-check.
    """
    grid = w.grid
    cap, step = ext(cap), ext(resolution)
    kmax = int(((cap - 1) / step).fraction)
    flags = []

    def p_at(k):
        return Ext(1 + k * step.fraction)

    def a_stable(k):
        v, _ = ap_verdict(w, p_at(k))
        if v == INCONCLUSIVE:
            flags.append(f"A_{p_at(k)} inconclusive")
        return v == STABLE

    if a_stable(0):
        r_bracket = (ONE, ONE)
    elif not a_stable(kmax):
        r_bracket = (cap, INF)
        flags.append("r_w above search cap")
    else:
        k = _bisect(a_stable, 0, kmax)
        r_bracket = (p_at(k - 1), p_at(k))

    def rh_diverging(k):
        v, _ = rh_verdict(w, p_at(k))
        if v == INCONCLUSIVE:
            flags.append(f"RH_{p_at(k)} inconclusive")
        return v != STABLE

    if rh_verdict(w, INF)[0] == STABLE:
        s_bracket = (INF, INF)
    elif not rh_diverging(kmax):
        s_bracket = (cap, INF)
        flags.append("s_w above search cap")
    else:
        # RH_s holds for s slightly above 1 whenever w is A_inf
        k = _bisect(rh_diverging, 0, kmax)
        s_bracket = (p_at(k - 1), p_at(k))
        if k == 1:
            flags.append("RH fails at the first grid point above 1")

    D = doubling_order(w)
    if use_descriptor and w.alpha is not None:
        ref = power_weight_indices(w.alpha, grid.n)
        if not (r_bracket[0] <= ref.r_w <= r_bracket[1]):
            flags.append("analytic r_w outside numerical bracket")
        if not (s_bracket[0] <= ref.s_w <= s_bracket[1]):
            flags.append("analytic s_w outside numerical bracket")
        return WeightIndices(ref.r_w, ref.s_w, ref.doubling_order, "analytic", r_bracket, s_bracket, tuple(flags))
    r_point = r_bracket[1] if not r_bracket[1].is_inf else r_bracket[0]
    s_point = s_bracket[0] if s_bracket[0] > 1 else s_bracket[1]
    return WeightIndices(r_point, s_point, D, "estimated", r_bracket, s_bracket, tuple(flags))


# ---------------------------------------------------------------------------
# BMO


def mean_oscillation(b: np.ndarray, mask: np.ndarray, w: np.ndarray | None = None) -> float:
    bb = b[mask]
    ww = np.ones_like(bb, dtype=float) if w is None else w[mask]
    avg = np.sum(bb * ww) / np.sum(ww)
    return float(np.sum(np.abs(bb - avg) * ww) / np.sum(ww))


def bmo_norm(b: np.ndarray, w=None, grid: PeriodicGrid | None = None, balls=None) -> float:
    """sup_B avg_B |b - b_B| dmu with dmu = w dx (Lebesgue when w is None)."""
    grid = _grid_of(w, grid)
    vals = None if w is None else _values(w)
    if balls is None:
        balls = BallFamily.standard(grid)
    return max(mean_oscillation(b, bl.mask(grid), vals) for bl in balls)


# (p, alpha) cells for power weights |x|^alpha on the 2-torus; the A_p boundary
# alpha = 2(p - 1) is hit exactly at several cells
POWER_WEIGHT_P = ("3/2", "2", "5/2", "3", "4")
POWER_WEIGHT_ALPHA = ("-3/2", "-1", "-1/2", "0", "1/2", "1", "3/2", "2", "5/2", "3", "4", "5", "6", "7")


def power_weight_grid() -> list[tuple[Fraction, Fraction]]:
    return [(Fraction(p), Fraction(a)) for p in POWER_WEIGHT_P for a in POWER_WEIGHT_ALPHA]
