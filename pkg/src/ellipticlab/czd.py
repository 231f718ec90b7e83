"""Weighted Calderón–Zygmund decomposition adapted to gradients.

Construction:

1. dyadic dw-maximal function M of |grad f|^p;
2. Whitney cubes of Omega = {M > alpha^p}: maximal dyadic cubes inside Omega
   whose side is at most the distance from their center to the complement;
3. balls B_i of radius (9/8) * half-diagonal of Q_i, with C^1 product bumps
   equal to 1 on (7/8)Q_i and vanishing outside (9/8)Q_i, normalized to a
   partition of unity on Omega;
4. b_i = (f - c_i) chi_i with c_i the dw-average of f on B_i, g = f - sum b_i.

Every property is recomputed afterwards by :func:`verify_cz`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .exponents import INF, Number, WeightIndices, ext, sobolev_exponents
from .grid import Ball, PeriodicGrid

DILATION = 9 / 8


@dataclass
class BadPart:
    center: tuple[float, ...]
    radius: float
    side: float
    lo: tuple[int, ...]  # first cell index of the Whitney cube
    cells: int  # cube side in cells
    b: np.ndarray
    mask: np.ndarray  # cells of B_i


@dataclass
class CZDecomposition:
    grid: PeriodicGrid
    f: np.ndarray
    g: np.ndarray
    parts: list[BadPart]
    alpha: float
    p: float
    w: np.ndarray
    omega: np.ndarray
    maximal: np.ndarray

    @property
    def balls(self) -> list[Ball]:
        return [Ball(bp.center, bp.radius) for bp in self.parts]

    @property
    def overlap(self) -> int:
        if not self.parts:
            return 0
        return int(np.max(np.sum([bp.mask for bp in self.parts], axis=0)))


def _block_reduce(a: np.ndarray, b: int, n: int) -> np.ndarray:
    N = a.shape[0]
    if n == 1:
        return a.reshape(N // b, b).sum(axis=1)
    return a.reshape(N // b, b, N // b, b).sum(axis=(1, 3))


def _block_expand(a: np.ndarray, b: int, n: int) -> np.ndarray:
    out = np.repeat(a, b, axis=0)
    if n == 2:
        out = np.repeat(out, b, axis=1)
    return out


def dyadic_maximal(h: np.ndarray, w: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """sup over dyadic cubes Q containing x of (int_Q h dw) / w(Q)."""
    N, n = grid.N, grid.n
    M = np.zeros(grid.shape)
    b = 1
    while b <= N:
        num = _block_reduce(h * w, b, n)
        den = _block_reduce(w, b, n)
        M = np.maximum(M, _block_expand(num / den, b, n))
        b *= 2
    return M


def _grad_mod(f: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(grid.gradient(f)) ** 2, axis=0))


def _smoothstep_c1(v):
    v = np.clip(v, 0.0, 1.0)
    return v * v * (3.0 - 2.0 * v)


def _cube_bump(grid: PeriodicGrid, center, side: float) -> np.ndarray:
    """Product bump: 1 on the 7/8 contraction of the cube, C^1 decay to 0 on its 9/8 dilate."""
    out = np.ones(grid.shape)
    half = side / 2
    inner = 2.0 - DILATION
    for d in range(grid.n):
        diff = grid.centers[d] - center[d]
        diff = diff - np.round(diff)
        u = np.abs(diff) / half
        out = out * (1.0 - _smoothstep_c1((u - inner) / (DILATION - inner)))
    return out


def _periodic_points(mask: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    return (grid.centers.reshape(grid.n, -1).T[mask.reshape(-1)] + 0.5) % 1.0


def whitney_cubes(omega: np.ndarray, grid: PeriodicGrid) -> list[tuple[tuple[int, ...], int]]:
    """Maximal dyadic cubes Q inside omega with side(Q) <= dist(center(Q), complement).

    Returns (first cell index, side in cells), in coarse-to-fine then
    lexicographic order.
    """
    F = ~omega
    if not F.any():
        raise ValueError("level set covers the whole torus; lower-bound alpha")
    tree = cKDTree(_periodic_points(F, grid), boxsize=1.0)
    N, n, h = grid.N, grid.n, grid.h
    covered = np.zeros(grid.shape, dtype=bool)
    cubes = []
    b = N // 2
    while b >= 1:
        inside = _block_reduce(omega.astype(int), b, n) == b**n
        free = _block_reduce(covered.astype(int), b, n) == 0
        cand = np.argwhere(inside & free)
        if cand.size:
            lo = cand * b
            centers = (-0.5 + (lo + b / 2.0) * h + 0.5) % 1.0
            dist, _ = tree.query(centers, k=1)
            for idx, dd in zip(lo, dist):
                if b * h <= dd + 1e-12:
                    sl = tuple(slice(i, i + b) for i in idx)
                    covered[sl] = True
                    cubes.append((tuple(int(i) for i in idx), int(b)))
        b //= 2
    return cubes


def _ball_mask(grid: PeriodicGrid, center, radius: float) -> np.ndarray:
    return grid.distance_to(center) < radius


def cz_decompose(f: np.ndarray, w, p: Number, alpha: float, grid: PeriodicGrid) -> CZDecomposition:
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    p = float(ext(p))
    wv = np.ones(grid.shape) if w is None else np.asarray(getattr(w, "values", w), dtype=float)
    gp = _grad_mod(f, grid) ** p
    M = dyadic_maximal(gp, wv, grid)
    omega = M > alpha**p
    if not omega.any():
        return CZDecomposition(grid, f, f.copy(), [], alpha, p, wv, omega, M)
    cubes = whitney_cubes(omega, grid)
    h = grid.h
    bumps, geo = [], []
    for lo, b in cubes:
        center = tuple(-0.5 + (lo[d] + b / 2.0) * h for d in range(grid.n))
        side = b * h
        radius = DILATION * math.sqrt(grid.n) / 2 * side
        bumps.append(_cube_bump(grid, center, side))
        geo.append((center, radius, side, lo, b))
    total = np.sum(bumps, axis=0)
    parts = []
    for phi, (center, radius, side, lo, b) in zip(bumps, geo):
        chi = np.where(total > 0, phi / np.where(total > 0, total, 1.0), 0.0)
        bm = _ball_mask(grid, center, radius)
        c_i = np.sum(f[bm] * wv[bm]) / np.sum(wv[bm])
        parts.append(BadPart(center, radius, side, lo, b, (f - c_i) * chi, bm))
    g = f - np.sum([bp.b for bp in parts], axis=0)
    return CZDecomposition(grid, f, g, parts, alpha, p, wv, omega, M)


# ---------------------------------------------------------------------------
# verification


@dataclass
class PropertyReport:
    reconstruction: float
    support_ok: bool
    grad_g: float  # max |grad g| / alpha
    bad_energy: float  # max_i int |grad b_i|^p dw / (alpha^p w(B_i))
    ball_mass: float  # sum w(B_i) alpha^p / int |grad f|^p dw
    overlap: int
    overlap_bound: float
    poincare: float | None  # max_i (avg_{B_i} |b_i|^q dw)^{1/q} / (alpha r_i)
    q: float | None
    q_in_precondition: bool
    parts: int
    notes: list = field(default_factory=list)

    def constants(self) -> dict:
        return {
            "reconstruction": self.reconstruction,
            "grad_g": self.grad_g,
            "bad_energy": self.bad_energy,
            "ball_mass": self.ball_mass,
            "overlap": self.overlap,
            "poincare": self.poincare,
        }

    def to_dict(self) -> dict:
        out = self.constants()
        out.update({
            "support_ok": self.support_ok,
            "overlap_bound": self.overlap_bound,
            "q": self.q,
            "q_in_precondition": self.q_in_precondition,
            "parts": self.parts,
            "notes": list(self.notes),
        })
        return out


def overlap_bound(n: int) -> float:
    """Volume-counting bound on the number of balls through a point.

    A ball B_i containing x has dist(x, F) between s_i (1 - k) and s_i (2 + sqrt(n) + k),
    k = (9/16) sqrt(n), so the sides of such balls lie within a fixed ratio R;
    the disjoint cubes fit in a ball of radius 2 k s_max.
    """
    k = DILATION * math.sqrt(n) / 2
    R = (2 + math.sqrt(n) + k) / (1 - k)
    vol_ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return vol_ball * (2 * k * R) ** n


def verify_cz(dec: CZDecomposition, q: Number | None = None, idx: WeightIndices | None = None) -> PropertyReport:
    grid, a, p = dec.grid, dec.alpha, dec.p
    wv = dec.w
    hn = grid.cell_volume
    f_scale = max(float(np.max(np.abs(dec.f))), 1e-300)
    recon = float(np.max(np.abs(dec.f - dec.g - sum((bp.b for bp in dec.parts), np.zeros(grid.shape))))) / f_scale
    support_ok = all(not np.any(bp.b[~bp.mask]) for bp in dec.parts)
    grad_g = float(np.max(_grad_mod(dec.g, grid))) / a
    energy = 0.0
    mass = 0.0
    for bp in dec.parts:
        wB = np.sum(wv[bp.mask]) * hn
        e = np.sum(_grad_mod(bp.b, grid) ** p * wv) * hn
        energy = max(energy, e / (a**p * wB))
        mass += wB
    total = np.sum(_grad_mod(dec.f, grid) ** p * wv) * hn
    ball_mass = mass * a**p / total if total > 0 else 0.0
    notes = []
    q_ok = True
    poin = None
    qf = None
    if q is not None:
        qe = ext(q)
        qf = float(qe)
        if idx is not None:
            _, upper = sobolev_exponents(ext(p), idx, grid.n)
            q_ok = qe < upper
            if not q_ok:
                notes.append(f"q = {qe} >= p_w^* = {upper}: outside the range where the bound is claimed")
        poin = 0.0
        for bp in dec.parts:
            m = bp.mask
            avg = (np.sum(np.abs(bp.b[m]) ** qf * wv[m]) / np.sum(wv[m])) ** (1 / qf)
            poin = max(poin, float(avg / (a * bp.radius)))
    return PropertyReport(recon, support_ok, grad_g, energy, ball_mass, dec.overlap, overlap_bound(grid.n),
                          poin, qf, q_ok, len(dec.parts), notes)
